"""Benchmark of dense prediction against the sliding-window evaluation of
the same weights: verifies the two paths agree per softmax element and
measures the speedup from eliminating recomputation of overlapping
features. Timing covers the forward pass only (monotonic clock, no I/O or
preprocessing), run on the calling thread.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .builders import build_net, fcn_to_sliding_cnn
from .network import Network

EQUIVALENCE_TOL = 1e-5


@dataclass(frozen=True)
class BenchReport:
    net: str
    input_shape: tuple
    fcn_ms: tuple[float, float]  # mean, stddev over runs
    sliding_ms: tuple[float, float]
    speedup: float
    max_dev: float
    window_count: int
    passed: bool

    def csv_row(self) -> str:
        shape = "x".join(str(s) for s in self.input_shape)
        return (
            f"{self.net},{shape},{self.fcn_ms[0]:.3f},{self.sliding_ms[0]:.3f},"
            f"{self.speedup:.2f},{self.max_dev:.3g}"
        )

    def table(self) -> str:
        shape = "x".join(str(s) for s in self.input_shape)
        status = "ok" if self.passed else "EQUIVALENCE FAILED"
        return (
            f"net {self.net}  input {shape}  windows {self.window_count}\n"
            f"  dense    {self.fcn_ms[0]:9.3f} ms  (+/- {self.fcn_ms[1]:.3f})\n"
            f"  sliding  {self.sliding_ms[0]:9.3f} ms  (+/- {self.sliding_ms[1]:.3f})\n"
            f"  speedup  {self.speedup:9.2f}x\n"
            f"  max dev  {self.max_dev:9.3g}  [{status}]"
        )


CSV_HEADER = "net,input,fcn_ms,sliding_ms,speedup,max_dev"


def _time_runs(fn, runs):
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.mean(times)), float(np.std(times))


def bench_network(net: Network, x: np.ndarray, runs: int = 5, warmup: int = 1,
                  tol: float = EQUIVALENCE_TOL) -> BenchReport:
    """Time dense vs sliding evaluation of ``net`` on one shared input and
    check per-element agreement of the softmax grids.
    """
    if runs < 3:
        raise ValueError(f"need at least 3 timed runs, got {runs}")
    oracle = fcn_to_sliding_cnn(net)
    for _ in range(warmup):
        dense = net.forward(x)
        slid = oracle.forward(x)
    dense = net.forward(x)
    slid = oracle.forward(x)
    max_dev = float(np.abs(dense - slid).max())
    fcn_ms = _time_runs(lambda: net.forward(x), runs)
    sliding_ms = _time_runs(lambda: oracle.forward(x), runs)
    return BenchReport(
        net=net.spec.name,
        input_shape=tuple(x.shape),
        fcn_ms=fcn_ms,
        sliding_ms=sliding_ms,
        speedup=sliding_ms[0] / fcn_ms[0],
        max_dev=max_dev,
        window_count=int(np.prod(dense.shape[1:])),
        passed=max_dev <= tol,
    )


def bench(net_name: str, frames: int = 800, image_size: int = 384, runs: int = 5,
          warmup: int = 1, seed: int = 0, width_scale: float = 1.0,
          class_count: int = 69, tol: float = EQUIVALENCE_TOL) -> BenchReport:
    """Build a random-weight network and benchmark it on a random input of
    the requested size (haptic nets take ``frames``, image nets
    ``image_size``).
    """
    rng = np.random.default_rng(seed)
    spec = build_net(net_name, class_count, width_scale)
    net = Network.initialize(spec, rng)
    if net_name == "haptic":
        x = rng.random((1, 50, frames), dtype=np.float32)
    else:
        x = rng.random((3, image_size, image_size), dtype=np.float32)
    return bench_network(net, x, runs=runs, warmup=warmup, tol=tol)
