"""Shared test helpers: brute-force oracles and a finite-difference
gradient checker, kept independent of the library's fast paths.
"""

import numpy as np
import pytest


def conv_oracle(x, w, b, stride=(1, 1), padding=(0, 0)):
    """Nested-loop cross-correlation over one (C, H, W) sample."""
    ph, pw = padding
    sh, sw = stride
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    co, ci, kh, kw = w.shape
    ho = (xp.shape[1] - kh) // sh + 1
    wo = (xp.shape[2] - kw) // sw + 1
    out = np.zeros((co, ho, wo), np.float64)
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                win = xp[:, i * sh : i * sh + kh, j * sw : j * sw + kw]
                out[o, i, j] = (win * w[o]).sum() + b[o]
    return out


def pool_windows_oracle(n, k, s):
    """Count ceil-mode pool windows by enumeration: the input is extended by
    the minimal padding that completes a trailing partial window, full
    windows are laid out at stride s, and windows starting at or past the
    true input end are dropped.
    """
    pad = 0
    while n + pad < k or (n + pad - k) % s:
        pad += 1
    count = 0
    start = 0
    while start + k <= n + pad:
        if start < n:
            count += 1
        start += s
    return count


def fd_gradient(loss_fn, tensor, indices, eps=1e-4):
    """Central finite differences of a scalar loss at chosen tensor entries."""
    out = []
    for idx in indices:
        old = tensor[idx]
        tensor[idx] = old + eps
        lp = loss_fn()
        tensor[idx] = old - eps
        lm = loss_fn()
        tensor[idx] = old
        out.append((lp - lm) / (2 * eps))
    return np.array(out)


def max_rel_err(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, np.float64)
    numeric = np.asarray(numeric, np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def sample_indices(shape, count, rng):
    return [tuple(int(rng.integers(0, s)) for s in shape) for _ in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
