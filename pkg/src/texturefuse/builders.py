"""Builders for the four classification networks, receptive-field and jump
arithmetic, pretrained trunk import, and the crop-by-crop sliding-window
evaluation path that the dense networks are benchmarked against.

Architecture summary (channels at full width):

    haptic      conv3x3->50, pool2/2, lrn, conv3x3->100, pool, conv3x3->150,
                pool, conv3x3->200, pool, conv4x12->400, dropout,
                conv1x1->250, dropout, conv1x1->classes, softmax
    visual      conv11x11/4->96, lrn, pool3/2, conv5x5->256, lrn, pool3/2,
                conv3x3->384, conv3x3->384, conv3x3->256, pool3/2,
                conv6x6->300, dropout, conv1x1->250, dropout,
                conv1x1->classes, softmax
    visual-tcnn first three visual convs (with their lrn/pool rows), then
                avgpool13/13 and 1x1 convs 300 -> 250 -> classes, softmax
    fusion head single 1x1 conv over concatenated unimodal features, softmax

The 3x3/5x5 trunk convolutions declare same-size padding and the spatial
kernels are sized so that a 50x192 spectrogram or a 224x224 image yields
exactly one prediction; larger inputs yield a dense prediction grid whose
spacing is the product of the layer strides (16 for haptic, 32 for visual,
208 for visual-tcnn).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layers import LayerSpec
from .network import Network, NetworkSpec
from .weights import load_container

NET_NAMES = ("haptic", "visual", "visual-tcnn")


def _scale(ch: int, width_scale: float) -> int:
    return max(1, round(ch * width_scale))


def _conv(k, s, p, ch) -> LayerSpec:
    return LayerSpec("conv", kernel=k, stride=s, padding=p, out_channels=ch)


def build_hapticnet(class_count: int = 69, width_scale: float = 1.0) -> NetworkSpec:
    """Spectrogram classifier over (1, 50, T) inputs; one prediction per 192
    frames of context at stride 16.
    """
    w = lambda ch: _scale(ch, width_scale)
    rows = [
        _conv((3, 3), (1, 1), (1, 1), w(50)),
        LayerSpec("maxpool", kernel=(2, 2), stride=(2, 2)),
        LayerSpec("lrn"),
        _conv((3, 3), (1, 1), (1, 1), w(100)),
        LayerSpec("maxpool", kernel=(2, 2), stride=(2, 2)),
        _conv((3, 3), (1, 1), (1, 1), w(150)),
        LayerSpec("maxpool", kernel=(2, 2), stride=(2, 2)),
        _conv((3, 3), (1, 1), (1, 1), w(200)),
        LayerSpec("maxpool", kernel=(2, 2), stride=(2, 2)),
        _conv((4, 12), (1, 1), (0, 0), w(400)),
        LayerSpec("dropout"),
        _conv((1, 1), (1, 1), (0, 0), w(250)),
        LayerSpec("dropout"),
        _conv((1, 1), (1, 1), (0, 0), class_count),
        LayerSpec("softmax"),
    ]
    return NetworkSpec("haptic", 1, tuple(rows), class_count, (50, 192))


def _visual_trunk(width_scale: float):
    w = lambda ch: _scale(ch, width_scale)
    return [
        _conv((11, 11), (4, 4), (0, 0), w(96)),
        LayerSpec("lrn"),
        LayerSpec("maxpool", kernel=(3, 3), stride=(2, 2)),
        _conv((5, 5), (1, 1), (2, 2), w(256)),
        LayerSpec("lrn"),
        LayerSpec("maxpool", kernel=(3, 3), stride=(2, 2)),
        _conv((3, 3), (1, 1), (1, 1), w(384)),
    ]


def build_visualnet(class_count: int = 69, width_scale: float = 1.0) -> NetworkSpec:
    """Image classifier over (3, H, W) inputs; one prediction per 224x224
    window at stride 32. The three head convolutions (6x6 then two 1x1)
    stand in for the classic fully connected stage at widths 300/250/classes.
    """
    w = lambda ch: _scale(ch, width_scale)
    rows = _visual_trunk(width_scale) + [
        _conv((3, 3), (1, 1), (1, 1), w(384)),
        _conv((3, 3), (1, 1), (1, 1), w(256)),
        LayerSpec("maxpool", kernel=(3, 3), stride=(2, 2)),
        _conv((6, 6), (1, 1), (0, 0), w(300)),
        LayerSpec("dropout"),
        _conv((1, 1), (1, 1), (0, 0), w(250)),
        LayerSpec("dropout"),
        _conv((1, 1), (1, 1), (0, 0), class_count),
        LayerSpec("softmax"),
    ]
    return NetworkSpec("visual", 3, tuple(rows), class_count, (224, 224))


def build_visualnet_tcnn(class_count: int = 69, width_scale: float = 1.0) -> NetworkSpec:
    """Compact image classifier: the first three visual convolutions, an
    averaging layer that collapses the remaining 13x13 grid at 224 input, and
    a 1x1 head.
    """
    w = lambda ch: _scale(ch, width_scale)
    rows = _visual_trunk(width_scale) + [
        LayerSpec("avgpool", kernel=(13, 13), stride=(13, 13)),
        _conv((1, 1), (1, 1), (0, 0), w(300)),
        _conv((1, 1), (1, 1), (0, 0), w(250)),
        _conv((1, 1), (1, 1), (0, 0), class_count),
        LayerSpec("softmax"),
    ]
    return NetworkSpec("visual-tcnn", 3, tuple(rows), class_count, (224, 224))


def build_fusion_head(haptic_feat_dim: int, visual_feat_dim: int, class_count: int = 69) -> NetworkSpec:
    """1x1 classifier over concatenated per-location unimodal features."""
    if haptic_feat_dim < 1 or visual_feat_dim < 1:
        raise ValueError("feature dimensions must be positive")
    rows = (
        _conv((1, 1), (1, 1), (0, 0), class_count),
        LayerSpec("softmax"),
    )
    spec = NetworkSpec("fusion", haptic_feat_dim + visual_feat_dim, rows, class_count, (1, 1))
    return spec


def build_net(name: str, class_count: int = 69, width_scale: float = 1.0) -> NetworkSpec:
    builders = {
        "haptic": build_hapticnet,
        "visual": build_visualnet,
        "visual-tcnn": build_visualnet_tcnn,
    }
    if name not in builders:
        raise ValueError(f"unknown network {name!r}, expected one of {sorted(builders)}")
    return builders[name](class_count, width_scale)


def fc_layer_indices(spec: NetworkSpec) -> tuple[int, int, int]:
    """Indices of the three head convolutions (FC1, FC2, FC3)."""
    convs = [i for i, l in enumerate(spec.layers) if l.kind == "conv"]
    if len(convs) < 3:
        raise ValueError(f"network {spec.name!r} has no three-conv head")
    return tuple(convs[-3:])


def fusion_feature_dims(haptic_spec, visual_spec, layer_choice: str, tap: str = "output") -> tuple[int, int]:
    """Per-modality feature widths entering the fusion head.

    ``layer_choice`` names the head conv whose features are fused (fc2 or
    fc3); ``tap`` picks that layer's output (default) or its input.
    """
    if layer_choice not in ("fc2", "fc3"):
        raise ValueError(f"layer_choice must be fc2 or fc3, got {layer_choice!r}")
    if tap not in ("output", "input"):
        raise ValueError(f"tap must be output or input, got {tap!r}")
    dims = []
    for spec in (haptic_spec, visual_spec):
        fc1, fc2, fc3 = fc_layer_indices(spec)
        idx = fc2 if layer_choice == "fc2" else fc3
        if tap == "output":
            dims.append(spec.layers[idx].out_channels)
        else:
            prev = [spec.layers[i].out_channels for i in (fc1, fc2) if i < idx]
            dims.append(prev[-1])
    return tuple(dims)


def fusion_tap_index(spec: NetworkSpec, layer_choice: str, tap: str = "output") -> int:
    """Layer index whose activation feeds the fusion head for this modality."""
    fc1, fc2, fc3 = fc_layer_indices(spec)
    idx = fc2 if layer_choice == "fc2" else fc3
    return idx if tap == "output" else idx - 1


# ---------------------------------------------------------------------------
# receptive-field arithmetic

@dataclass(frozen=True)
class ReceptiveFieldInfo:
    rf: tuple[int, int]
    jump: tuple[int, int]
    min_input: tuple[int, int]


def receptive_field(spec: NetworkSpec) -> ReceptiveFieldInfo:
    """Receptive field and output spacing via the standard recurrence
    r += (k - 1) * j, j *= s over the layers. ``min_input`` is the network's
    canonical single-prediction input, verified here by shape propagation:
    it must yield a 1x1 grid and one more jump must yield 2.
    """
    rh = rw = 1
    jh = jw = 1
    for l in spec.layers:
        rh += (l.kernel[0] - 1) * jh
        rw += (l.kernel[1] - 1) * jw
        jh *= l.stride[0]
        jw *= l.stride[1]
    h0, w0 = spec.native_input
    if spec.grid_shape(h0, w0) != (1, 1):
        raise AssertionError(f"{spec.name}: native input {h0}x{w0} does not give a 1x1 grid")
    if spec.grid_shape(h0 + jh, w0 + jw) != (2, 2):
        raise AssertionError(f"{spec.name}: native input plus one jump does not give a 2x2 grid")
    return ReceptiveFieldInfo((rh, rw), (jh, jw), (h0, w0))


def _cone_interval(spec: NetworkSpec, lens: list[int], axis: int, pos: int) -> tuple[int, int]:
    # input interval (lo, hi) on the padded axis feeding one output position
    lo, hi = pos, pos + 1
    for i in range(len(spec.layers) - 1, -1, -1):
        l = spec.layers[i]
        if l.kind in ("conv", "maxpool", "avgpool"):
            k, s = l.kernel[axis], l.stride[axis]
            lo = lo * s
            hi = (hi - 1) * s + k
        hi = min(hi, lens[i])
        lo = min(lo, hi - 1)
    return lo, hi


class SlidingWindowOracle:
    """Fixed-input evaluation of a dense network: for every output-grid
    position, crop the window of input the prediction depends on and run the
    whole network on that crop alone, recomputing all features. Weight
    storage is shared with the dense network by construction.
    """

    def __init__(self, network: Network):
        self.network = network
        self.spec = network.spec

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: single (C, H, W) sample; returns the (classes, Gh, Gw) grid of
        per-window softmax vectors.
        """
        if x.ndim != 3:
            raise ValueError("sliding evaluation takes a single (C, H, W) sample")
        net = self.network
        xp = net.pad_input(np.ascontiguousarray(x[None], net.dtype))
        h_lens = [s[0] for s in self.spec.propagate(x.shape[1], x.shape[2])]
        w_lens = [s[1] for s in self.spec.propagate(x.shape[1], x.shape[2])]
        h_lens.insert(0, xp.shape[2])
        w_lens.insert(0, xp.shape[3])
        gh, gw = h_lens[-1], w_lens[-1]
        rows = [_cone_interval(self.spec, h_lens[:-1], 0, g) for g in range(gh)]
        cols = [_cone_interval(self.spec, w_lens[:-1], 1, g) for g in range(gw)]
        out = np.empty((self.spec.class_count, gh, gw), net.dtype)
        for i, (rlo, rhi) in enumerate(rows):
            for j, (clo, chi) in enumerate(cols):
                crop = xp[:, :, rlo:rhi, clo:chi]
                probs = net._forward_padded(crop, train=False)
                if probs.shape[2] != 1 or probs.shape[3] != 1:
                    raise AssertionError(
                        f"window ({i}, {j}) of {self.spec.name} produced a "
                        f"{probs.shape[2]}x{probs.shape[3]} grid instead of 1x1"
                    )
                out[:, i, j] = probs[0, :, 0, 0]
        return out


def fcn_to_sliding_cnn(network: Network) -> SlidingWindowOracle:
    """Sliding-window twin of a dense network (shared weights)."""
    return SlidingWindowOracle(network)


# ---------------------------------------------------------------------------
# pretrained trunk import

def trunk_conv_indices(spec: NetworkSpec) -> list[int]:
    """Conv layers before the three-conv head."""
    convs = [i for i, l in enumerate(spec.layers) if l.kind == "conv"]
    return convs[:-3]


def import_alexnet_conv_weights(network: Network, weight_file) -> Network:
    """Return a copy of ``network`` whose trunk convolutions are replaced by
    the entries of ``weight_file`` (head layers keep their random
    initialization). Entries must be conv kind and shape-compatible; a file
    written for a two-group trunk (in-channels halved) is accepted and
    expanded block-diagonally, which computes the identical function.
    Nothing is mutated on failure.
    """
    spec = network.spec
    trunk = trunk_conv_indices(spec)
    entries = [(k, a) for k, a in load_container(weight_file) if k == "conv"]
    if len(entries) < len(trunk):
        raise ValueError(
            f"{weight_file}: {len(entries)} conv entries, trunk of {spec.name!r} needs {len(trunk)}"
        )
    staged = {}
    shapes = dict(spec.conv_shapes())
    for li, (kind, arrays) in zip(trunk, entries):
        want = shapes[li]
        if len(arrays) != 2:
            raise ValueError(f"{weight_file}: trunk layer {li} entry must hold weights and bias")
        w, b = arrays
        if b.shape != (want[0],):
            raise ValueError(f"{weight_file}: trunk layer {li} bias shape {b.shape}, wanted {(want[0],)}")
        if w.shape == want:
            staged[li] = [w, b]
        elif (
            w.shape[0] == want[0]
            and want[1] % 2 == 0
            and w.shape[1] == want[1] // 2
            and w.shape[2:] == want[2:]
        ):
            # two-group layout: out-channel half g sees only in-channel half g
            full = np.zeros(want, w.dtype)
            oh, ih = want[0] // 2, want[1] // 2
            full[:oh, :ih] = w[:oh]
            full[oh:, ih:] = w[oh:]
            staged[li] = [full, b]
        else:
            raise ValueError(
                f"{weight_file}: trunk layer {li} weight shape {w.shape} does not match {want} "
                f"(nor its two-group form)"
            )
    out = network.copy()
    for li, (w, b) in staged.items():
        out.params[li] = [w.astype(out.dtype), b.astype(out.dtype)]
    return out


def spec_from_weights(name: str, weight_file) -> NetworkSpec:
    """Reconstruct a NetworkSpec from a saved weight container: layer kinds
    and geometry come from the named builder's template, per-conv widths and
    the class count from the file's weight shapes.
    """
    entries = load_container(weight_file)
    conv_out = [a[0].shape[0] for k, a in entries if k == "conv" and a]
    if not conv_out:
        raise ValueError(f"{weight_file}: no conv entries")
    class_count = conv_out[-1]
    if name == "fusion":
        first = next(a for k, a in entries if k == "conv" and a)
        return build_fusion_head(1, first[0].shape[1] - 1, class_count)
    template = build_net(name, class_count)
    kinds = [k for k, _ in entries]
    want = [l.kind for l in template.layers]
    if kinds != want:
        raise ValueError(f"{weight_file}: layer kinds {kinds} do not match network {name!r} ({want})")
    rows = []
    it = iter(conv_out)
    for l in template.layers:
        rows.append(LayerSpec("conv", l.kernel, l.stride, l.padding, next(it)) if l.kind == "conv" else l)
    return NetworkSpec(name, template.in_channels, tuple(rows), class_count, template.native_input)


def initialize_network(spec: NetworkSpec, rng=None, dtype=np.float32, pretrained=None) -> Network:
    """Random-init network; if ``pretrained`` names an existing weight file
    the trunk is imported from it, and a missing file falls back to random
    initialization (the documented behavior for optional pretrained trunks).
    """
    net = Network.initialize(spec, rng, dtype)
    if pretrained is not None and Path(pretrained).exists():
        net = import_alexnet_conv_weights(net, pretrained)
    return net
