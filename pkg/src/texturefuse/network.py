"""Network executor: runs an ordered layer stack forward and backward over
shared parameter storage.

Padding semantics: every convolution's declared padding is hoisted into a
single zero-pad of the network input (the layers themselves then run
unpadded). This keeps dense prediction and the crop-by-crop evaluation path
numerically identical, window for window, which per-layer re-padding cannot
achieve at interior window boundaries.

Inference (train=False) stores no state on the instance and is safe to call
from many threads over a frozen network. A training forward records a tape
consumed by backward; a training session must own its Network exclusively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L

WEIGHT_INIT_STD = 0.01


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer descriptors plus the input/output contract.

    ``native_input`` is the canonical (h, w) at which the network emits a
    single prediction; receptive-field inspection verifies it.
    """

    name: str
    in_channels: int
    layers: tuple[L.LayerSpec, ...]
    class_count: int
    native_input: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        kinds = [l.kind for l in self.layers]
        if not kinds or kinds[-1] != "softmax":
            raise ValueError(f"network {self.name!r} must end with softmax")
        convs = [i for i, l in enumerate(self.layers) if l.kind == "conv"]
        if not convs:
            raise ValueError(f"network {self.name!r} has no conv layers")
        last = self.layers[convs[-1]]
        if convs[-1] != len(self.layers) - 2 or last.kernel != (1, 1) or last.out_channels != self.class_count:
            raise ValueError(
                f"network {self.name!r} must end in a 1x1 conv with {self.class_count} outputs followed by softmax"
            )

    def conv_shapes(self) -> list[tuple[int, tuple[int, ...]]]:
        """(layer index, weight shape) for every conv layer, in order."""
        shapes = []
        c_in = self.in_channels
        for i, l in enumerate(self.layers):
            if l.kind == "conv":
                shapes.append((i, (l.out_channels, c_in, l.kernel[0], l.kernel[1])))
                c_in = l.out_channels
        return shapes

    def hoisted_padding(self) -> tuple[int, int]:
        """Total per-side input padding equivalent to the per-layer declarations."""
        ph = pw = 0
        jh = jw = 1
        for l in self.layers:
            if l.kind == "conv":
                ph += l.padding[0] * jh
                pw += l.padding[1] * jw
            jh *= l.stride[0]
            jw *= l.stride[1]
        return ph, pw

    def propagate(self, h: int, w: int) -> list[tuple[int, int]]:
        """Per-layer output extents for an (h, w) input, hoisted padding
        applied. Raises if some layer's window does not fit.
        """
        ph, pw = self.hoisted_padding()
        cur = (h + 2 * ph, w + 2 * pw)
        outs = []
        for l in self.layers:
            if l.kind == "conv":
                cur = (
                    L.conv_out_len(cur[0], l.kernel[0], l.stride[0]),
                    L.conv_out_len(cur[1], l.kernel[1], l.stride[1]),
                )
            elif l.kind in ("maxpool", "avgpool"):
                cur = (
                    L.pool_out_len(cur[0], l.kernel[0], l.stride[0]),
                    L.pool_out_len(cur[1], l.kernel[1], l.stride[1]),
                )
            outs.append(cur)
        return outs

    def grid_shape(self, h: int, w: int) -> tuple[int, int]:
        return self.propagate(h, w)[-1]

    def describe(self) -> str:
        """Human-readable layer table, one row per layer."""
        rows = []
        for l in self.layers:
            if l.kind == "conv":
                geom = f"{l.kernel[0]}x{l.kernel[1]} /{l.stride[0]},{l.stride[1]} pad {l.padding[0]},{l.padding[1]}"
                rows.append(f"conv      {geom:28s} -> {l.out_channels}")
            elif l.kind in ("maxpool", "avgpool"):
                geom = f"{l.kernel[0]}x{l.kernel[1]} /{l.stride[0]},{l.stride[1]}"
                rows.append(f"{l.kind:9s} {geom}")
            elif l.kind == "dropout":
                rows.append(f"dropout   rate {l.dropout_rate}")
            elif l.kind == "lrn":
                n, a, b, k = l.lrn_params
                rows.append(f"lrn       n={n} alpha={a} beta={b} k={k}")
            else:
                rows.append(l.kind)
        return "\n".join(rows)


class Network:
    """Executable network: a NetworkSpec plus per-conv (weights, bias)."""

    def __init__(self, spec: NetworkSpec, params: dict, dtype=np.float32):
        self.spec = spec
        self.params = params  # layer index -> [W, b]
        self.dtype = np.dtype(dtype)
        self.grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._tape = None

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng=None, dtype=np.float32) -> "Network":
        """Gaussian(0, 0.01) weights, zero biases."""
        rng = rng or np.random.default_rng(0)
        params = {}
        for i, shape in spec.conv_shapes():
            w = rng.normal(0.0, WEIGHT_INIT_STD, shape).astype(dtype)
            b = np.zeros(shape[0], dtype)
            params[i] = [w, b]
        return cls(spec, params, dtype)

    def copy(self) -> "Network":
        return Network(self.spec, {i: [w.copy(), b.copy()] for i, (w, b) in self.params.items()}, self.dtype)

    def astype(self, dtype) -> "Network":
        return Network(self.spec, {i: [w.astype(dtype), b.astype(dtype)] for i, (w, b) in self.params.items()}, dtype)

    # -- forward ------------------------------------------------------------

    def pad_input(self, x: np.ndarray) -> np.ndarray:
        ph, pw = self.spec.hoisted_padding()
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        return x

    def forward(self, x: np.ndarray, train: bool = False, rng=None, upto: int | None = None) -> np.ndarray:
        """Run the stack on (N, C, H, W) or a single (C, H, W) input.

        ``upto`` stops after that layer index (inclusive) and returns its
        activation; default runs the whole stack. Training mode needs ``rng``
        when the stack contains dropout.
        """
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected {self.spec.in_channels} input channels, got {x.shape[1]}")
        out = self._forward_padded(self.pad_input(np.ascontiguousarray(x, self.dtype)), train, rng, upto)
        return out[0] if single else out

    def _forward_padded(self, x, train=False, rng=None, upto=None):
        tape = [] if train else None
        stop = len(self.spec.layers) - 1 if upto is None else upto
        for i, l in enumerate(self.spec.layers[: stop + 1]):
            if l.kind == "conv":
                w, b = self.params[i]
                x, cache = L.conv_fwd(x, w, b, l.stride)
            elif l.kind == "maxpool":
                shape = x.shape
                x, idx = L.maxpool_fwd(x, l.kernel, l.stride)
                cache = (idx, shape)
            elif l.kind == "avgpool":
                shape = x.shape
                x, counts = L.avgpool_fwd(x, l.kernel, l.stride)
                cache = (counts, shape)
            elif l.kind == "lrn":
                x, cache = L.lrn_fwd(x, l.lrn_params)
            elif l.kind == "relu":
                x, cache = L.relu_fwd(x)
            elif l.kind == "dropout":
                if train and rng is None:
                    raise ValueError("training forward through dropout needs an rng")
                x, cache = L.dropout_fwd(x, l.dropout_rate, rng, train)
            else:  # softmax
                x = L.softmax_fwd(x)
                cache = x
            if tape is not None:
                tape.append(cache)
        if tape is not None:
            self._tape = tape
        return x

    # -- backward -----------------------------------------------------------

    def backward(self, grad: np.ndarray, from_layer: int | None = None,
                 need_input_grad: bool = False) -> np.ndarray | None:
        """Propagate an upstream gradient down the stack, filling self.grads
        for every conv at or below ``from_layer`` (default: the last layer
        run by the previous training forward). Returns the gradient w.r.t.
        the padded network input when ``need_input_grad`` is set (skipping
        that final transposed convolution otherwise).
        """
        if self._tape is None:
            raise RuntimeError("backward called without a recorded training forward")
        if from_layer is None:
            from_layer = len(self._tape) - 1
        if from_layer > len(self._tape) - 1:
            raise RuntimeError(f"no recorded forward for layer {from_layer}")
        self.grads = {}
        for i in range(from_layer, -1, -1):
            l = self.spec.layers[i]
            cache = self._tape[i]
            if l.kind == "conv":
                w, _ = self.params[i]
                grad, dw, db = L.conv_bwd(grad, w, cache, l.stride,
                                          need_dx=i > 0 or need_input_grad)
                self.grads[i] = (dw, db)
            elif l.kind == "maxpool":
                idx, shape = cache
                grad = L.maxpool_bwd(grad, idx, shape, l.kernel, l.stride)
            elif l.kind == "avgpool":
                counts, shape = cache
                grad = L.avgpool_bwd(grad, counts, shape, l.kernel, l.stride)
            elif l.kind == "lrn":
                grad = L.lrn_bwd(grad, cache, l.lrn_params)
            elif l.kind == "relu":
                grad = L.relu_bwd(grad, cache)
            elif l.kind == "dropout":
                grad = L.dropout_bwd(grad, cache)
            else:
                grad = L.softmax_bwd(grad, cache)
        return grad

    def backward_logits(self, dlogits: np.ndarray, need_input_grad: bool = False) -> np.ndarray | None:
        """Backward entry for a softmax+cross-entropy fused gradient: starts
        just below the final softmax layer.
        """
        if self.spec.layers[-1].kind != "softmax":
            raise RuntimeError("backward_logits requires a softmax-terminated network")
        return self.backward(dlogits, from_layer=len(self.spec.layers) - 2,
                             need_input_grad=need_input_grad)

    # -- parameter access ---------------------------------------------------

    def param_entries(self, upto: int | None = None):
        """Flat [(name, array)] list of trainable tensors, optionally only
        for layers at or below ``upto`` (matching a partial backward).
        """
        entries = []
        for i in sorted(self.params):
            if upto is not None and i > upto:
                continue
            w, b = self.params[i]
            entries.append((f"{self.spec.name}.layer{i:02d}.w", w))
            entries.append((f"{self.spec.name}.layer{i:02d}.b", b))
        return entries

    def grad_entries(self, upto: int | None = None):
        """Gradients aligned with param_entries; zeros for convs the last
        backward did not reach.
        """
        entries = []
        for i in sorted(self.params):
            if upto is not None and i > upto:
                continue
            if i in self.grads:
                dw, db = self.grads[i]
            else:
                w, b = self.params[i]
                dw, db = np.zeros_like(w), np.zeros_like(b)
            entries.append(dw)
            entries.append(db)
        return entries
