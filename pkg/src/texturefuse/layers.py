"""Dense-tensor layer kernels: forward and backward passes for every layer
kind the classification networks use (convolution, max/average pooling,
across-channel response normalization, relu, inverted dropout, softmax).

Layout is channels-first. Batched kernels take (N, C, H, W) arrays and are
what the network executor calls; thin single-sample wrappers with the
documented operation signatures are exported for direct use.

Convolutions use cross-correlation semantics (no kernel flip). Pooling uses
ceil-mode output sizing: a trailing partial window at the bottom/right edge
is kept, as if the input were padded there with -inf (max) or excluded from
the mean (average).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("conv", "maxpool", "avgpool", "lrn", "relu", "dropout", "softmax")


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


@dataclass(frozen=True)
class LayerSpec:
    """One layer row: geometry and hyperparameters, no weights.

    ``lrn_params`` is (n, alpha, beta, k) for across-channel normalization
    with window size n: y = x / (k + alpha/n * sum(x_j^2)) ** beta.
    """

    kind: str
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    out_channels: int = 0
    dropout_rate: float = 0.5
    lrn_params: tuple[int, float, float, float] = (5, 1e-4, 0.75, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}, expected one of {LAYER_KINDS}")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"kernel {self.kernel} and stride {self.stride} extents must be >= 1")
        if min(self.padding) < 0:
            raise ValueError(f"padding {self.padding} must be >= 0")
        if self.kind == "conv" and self.out_channels < 1:
            raise ValueError("conv layer needs out_channels >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate {self.dropout_rate} outside [0, 1)")
        if self.kind == "lrn":
            n = self.lrn_params[0]
            if n < 1 or n % 2 == 0:
                raise ValueError(f"lrn window size must be odd and >= 1, got {n}")


# ---------------------------------------------------------------------------
# output-extent formulas

def conv_out_len(n: int, k: int, s: int, p: int = 0) -> int:
    """floor((n + 2p - k)/s) + 1; rejects windows larger than the padded input."""
    if n + 2 * p < k:
        raise ValueError(f"padded extent {n + 2 * p} smaller than kernel extent {k}")
    return (n + 2 * p - k) // s + 1


def pool_out_len(n: int, k: int, s: int) -> int:
    """Ceil-mode pool extent: ceil((n - k)/s) + 1 with an implicit partial
    window at the edge. A window that would start past the input is dropped
    (only reachable when s > k), and a kernel larger than the input yields a
    single partial window.
    """
    if n < 1:
        raise ValueError(f"pool input extent must be >= 1, got {n}")
    if n < k:
        return 1
    out = math.ceil((n - k) / s) + 1
    if (out - 1) * s >= n:
        out -= 1
    return out


# ---------------------------------------------------------------------------
# convolution

_SHIFT_MAX_CELLS = 16  # shift-and-GEMM path cutoff (per-cell call overhead)


def _conv_batch(x: np.ndarray, w: np.ndarray, b, stride) -> np.ndarray:
    # x (N,C,H,W) already padded, w (Co,C,kh,kw)
    sh, sw = stride
    kh, kw = w.shape[2], w.shape[3]
    if (sh, sw) == (1, 1) and kh * kw <= _SHIFT_MAX_CELLS:
        # shift-and-GEMM: one (Co,C) x (C, N*Ho*Wo) product per kernel cell
        # over contiguous row slices; cheaper than gathering the six-axis
        # window view for small kernels on large maps
        n, c, h, wd = x.shape
        ho, wo = h - kh + 1, wd - kw + 1
        acc = None
        for i in range(kh):
            rows = x[:, :, i : i + ho]
            for j in range(kw):
                seg = rows[:, :, :, j : j + wo]
                part = np.tensordot(w[:, :, i, j], seg, axes=[(1,), (1,)])  # (Co,N,Ho,Wo)
                acc = part if acc is None else acc + part
        out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    else:
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        out = np.tensordot(win, w, axes=[(1, 4, 5), (1, 2, 3)])  # (N,Ho,Wo,Co)
        out = np.ascontiguousarray(np.moveaxis(out, 3, 1))
    if b is not None:
        out += b[:, None, None].astype(out.dtype)
    return out


def conv_fwd(x, w, b, stride=(1, 1), padding=(0, 0)):
    """Batched conv forward. Returns (out, cache-for-backward)."""
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv input channels {x.shape[1]} != weight in-channels {w.shape[1]} "
            f"(input {x.shape}, weights {w.shape})"
        )
    ph, pw = padding
    conv_out_len(x.shape[2], w.shape[2], stride[0], ph)
    conv_out_len(x.shape[3], w.shape[3], stride[1], pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    return _conv_batch(xp, w, b, stride), xp


def conv_bwd(dy, w, xp, stride=(1, 1), padding=(0, 0), need_dx=True):
    """Gradients w.r.t. input, weights and bias from the cached padded input.

    The input gradient is the transposed convolution: the upstream gradient,
    dilated by the stride and fully padded, correlated with the flipped
    kernel (in/out channels swapped). Pass need_dx=False at the first layer
    of a stack, where nothing consumes it.
    """
    sh, sw = stride
    kh, kw = w.shape[2], w.shape[3]
    n, co, ho, wo = dy.shape
    if (sh, sw) == (1, 1) and kh * kw <= _SHIFT_MAX_CELLS:
        dw = np.empty_like(w)
        for i in range(kh):
            rows = xp[:, :, i : i + ho]
            for j in range(kw):
                seg = rows[:, :, :, j : j + wo]
                dw[:, :, i, j] = np.tensordot(dy, seg, axes=[(0, 2, 3), (0, 2, 3)])
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        dw = np.tensordot(dy, win, axes=[(0, 2, 3), (0, 2, 3)])  # (Co,C,kh,kw)
    db = dy.sum(axis=(0, 2, 3))
    if not need_dx:
        return None, dw.astype(w.dtype, copy=False), db.astype(w.dtype, copy=False)
    dyd = dy
    if sh > 1 or sw > 1:
        dyd = np.zeros((n, co, (ho - 1) * sh + 1, (wo - 1) * sw + 1), dy.dtype)
        dyd[:, :, ::sh, ::sw] = dy
    dyp = np.pad(dyd, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    core = _conv_batch(dyp, wt, None, (1, 1))
    # stride may have truncated trailing rows/cols of xp; those get zero grad
    dxp = np.zeros_like(xp)
    dxp[:, :, : core.shape[2], : core.shape[3]] = core
    ph, pw = padding
    if ph or pw:
        dxp = dxp[:, :, ph : dxp.shape[2] - ph, pw : dxp.shape[3] - pw]
    return dxp, dw.astype(w.dtype, copy=False), db.astype(w.dtype, copy=False)


# ---------------------------------------------------------------------------
# pooling

def _pool_window_view(x, kernel, stride, fill):
    kh, kw = kernel
    sh, sw = stride
    n, c, h, w = x.shape
    ho, wo = pool_out_len(h, kh, sh), pool_out_len(w, kw, sw)
    eh = max((ho - 1) * sh + kh - h, 0)
    ew = max((wo - 1) * sw + kw - w, 0)
    if eh or ew:
        x = np.pad(x, ((0, 0), (0, 0), (0, eh), (0, ew)), constant_values=fill)
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    return win.reshape(n, c, ho, wo, kh * kw)


def maxpool_fwd(x, kernel, stride):
    """Ceil-mode max pool. Returns (out, argmax offsets for backward)."""
    win = _pool_window_view(x, kernel, stride, -np.inf)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool_bwd(dy, idx, x_shape, kernel, stride):
    kh, kw = kernel
    sh, sw = stride
    ho, wo = dy.shape[2], dy.shape[3]
    hh = idx // kw + (np.arange(ho) * sh)[None, None, :, None]
    ww = idx % kw + (np.arange(wo) * sw)[None, None, None, :]
    n, c = x_shape[0], x_shape[1]
    dx = np.zeros(x_shape, dy.dtype)
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    if sh >= kh and sw >= kw:
        # non-overlapping windows: argmax positions are unique
        dx[ni, ci, hh, ww] = dy
    else:
        np.add.at(dx, (ni, ci, hh, ww), dy)
    return dx


def avgpool_fwd(x, kernel, stride):
    """Ceil-mode average pool: partial edge windows average over the cells
    actually inside the input. Returns (out, per-window cell counts).
    """
    win = _pool_window_view(x, kernel, stride, 0.0)
    ones = np.ones((1, 1) + x.shape[2:], x.dtype)
    counts = _pool_window_view(ones, kernel, stride, 0.0).sum(axis=-1)
    out = win.sum(axis=-1) / counts
    return out.astype(x.dtype, copy=False), counts


def avgpool_bwd(dy, counts, x_shape, kernel, stride):
    kh, kw = kernel
    sh, sw = stride
    n, c, h, w = x_shape
    ho, wo = dy.shape[2], dy.shape[3]
    eh = max((ho - 1) * sh + kh - h, 0)
    ew = max((wo - 1) * sw + kw - w, 0)
    dxp = np.zeros((n, c, h + eh, w + ew), dy.dtype)
    g = dy / counts
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += g
    return dxp[:, :, :h, :w]


# ---------------------------------------------------------------------------
# across-channel response normalization

def _channel_window_sum(t, n):
    half = (n - 1) // 2
    c = t.shape[1]
    out = np.zeros_like(t)
    for o in range(-half, half + 1):
        lo, hi = max(0, -o), min(c, c - o)
        out[:, lo:hi] += t[:, lo + o : hi + o]
    return out


def lrn_fwd(x, params):
    n, alpha, beta, k = params
    scale = k + (alpha / n) * _channel_window_sum(x * x, n)
    out = x * scale ** np.array(-beta, x.dtype)
    return out.astype(x.dtype, copy=False), (x, scale)


def lrn_bwd(dy, cache, params):
    n, alpha, beta, k = params
    x, scale = cache
    t = dy * x * scale ** np.array(-beta - 1, x.dtype)
    dx = dy * scale ** np.array(-beta, x.dtype) - (2.0 * alpha * beta / n) * x * _channel_window_sum(t, n)
    return dx.astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# pointwise layers

def relu_fwd(x):
    return np.maximum(x, 0), x


def relu_bwd(dy, x):
    return dy * (x > 0)


def dropout_fwd(x, rate, rng, train):
    """Inverted dropout: training scales kept units by 1/(1-rate), inference
    is the identity, so the expected output always equals the input.
    """
    if not train or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / np.array(1.0 - rate, x.dtype)
    return x * mask, mask


def dropout_bwd(dy, mask):
    return dy if mask is None else dy * mask


def softmax_fwd(x):
    """Per-location softmax across the channel axis."""
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(dy, p):
    return p * (dy - (dy * p).sum(axis=1, keepdims=True))


def softmax_cross_entropy(probs, labels):
    """Mean cross-entropy of per-location softmax outputs against one label
    per sample, plus the gradient w.r.t. the pre-softmax logits.

    probs: (N, C, Gh, Gw); labels: (N,) ints. Every grid location of sample n
    is supervised with labels[n]; the loss averages over samples and
    locations.
    """
    n, c, gh, gw = probs.shape
    labels = np.asarray(labels)
    picked = probs[np.arange(n), labels]  # (N,Gh,Gw)
    eps = np.finfo(probs.dtype).tiny
    loss = float(-np.log(np.maximum(picked, eps)).mean())
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    dlogits = (probs - onehot) / (n * gh * gw)
    return loss, dlogits


# ---------------------------------------------------------------------------
# single-sample operation wrappers

def conv_forward(x, weights, bias, stride=(1, 1), padding=(0, 0)):
    """Cross-correlate one (C,H,W) input with (Co,C,kh,kw) weights."""
    out, _ = conv_fwd(x[None], weights, bias, _pair(stride), _pair(padding))
    return out[0]


def maxpool_forward(x, kernel, stride, ceil_mode=True):
    """Max pool one (C,H,W) input. Only ceil-mode sizing is provided; pass
    ceil_mode=False to get floor-mode extents (trailing partial window cut).
    """
    kernel, stride = _pair(kernel), _pair(stride)
    x4 = x[None]
    if not ceil_mode:
        ho = (x.shape[1] - kernel[0]) // stride[0] + 1
        wo = (x.shape[2] - kernel[1]) // stride[1] + 1
        x4 = x4[:, :, : (ho - 1) * stride[0] + kernel[0], : (wo - 1) * stride[1] + kernel[1]]
    out, _ = maxpool_fwd(x4, kernel, stride)
    return out[0]
