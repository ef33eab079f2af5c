"""Haptic trace preprocessing: three-axis acceleration traces are combined
into one signal with a magnitude-preserving spectral merge, enframed with a
Hamming window into a 50-channel spectrogram, and min-max normalized per
frequency channel.

Raw trace files are little-endian float32 triples (x, y, z) per sample with
an optional "<name>.meta" sidecar holding "sample_rate_hz=..." and
"axes=1|3" lines; single-axis files hold one float per sample and skip the
axis merge.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

WINDOW_LEN = 500
HOP = 100
CHANNELS = 50
SAMPLE_RATE_HZ = 10_000.0


@dataclass(frozen=True)
class AccelTrace3:
    """Raw (n, 3) acceleration samples at a fixed rate."""

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        s = np.asarray(self.samples, np.float64)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
            raise ValueError(f"expected (n, 3) samples with n >= 1, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class Spectrogram:
    """frames: (1, channels, T) magnitudes, channels-first for the networks."""

    frames: np.ndarray
    window_len: int = WINDOW_LEN
    hop: int = HOP

    @property
    def num_frames(self) -> int:
        return self.frames.shape[2]


def dft321_combine(trace: AccelTrace3) -> np.ndarray:
    """Merge three axes into one real signal whose spectral magnitude at
    every bin is sqrt(|X|^2 + |Y|^2 + |Z|^2); the phase is taken from the
    axis-sum signal x + y + z. Conjugate symmetry is enforced by working on
    the half spectrum, so the output is exactly real.
    """
    s = trace.samples
    if s.shape[0] < 1:
        raise ValueError("empty trace")
    spectra = np.fft.rfft(s, axis=0)  # (bins, 3)
    mag = np.sqrt((np.abs(spectra) ** 2).sum(axis=1))
    phase = np.angle(spectra.sum(axis=1))
    return np.fft.irfft(mag * np.exp(1j * phase), n=s.shape[0])


def frame_count(length: int, window_len: int = WINDOW_LEN, hop: int = HOP) -> int:
    if length < window_len:
        raise ValueError(f"trace of {length} samples is shorter than one {window_len}-sample window")
    return (length - window_len) // hop + 1


def enframe_spectrogram(
    signal: np.ndarray,
    window_len: int = WINDOW_LEN,
    hop: int = HOP,
    channels: int = CHANNELS,
    mode: str = "magnitude",
) -> Spectrogram:
    """Hamming-windowed DFT magnitudes of the first ``channels`` low-frequency
    bins, one column per frame. ``mode`` may be magnitude (default), power,
    or log (log1p of magnitude).
    """
    signal = np.asarray(signal, np.float64).ravel()
    t = frame_count(len(signal), window_len, hop)
    window = np.hamming(window_len)
    starts = np.arange(t) * hop
    segments = signal[starts[:, None] + np.arange(window_len)[None, :]] * window
    spectra = np.abs(np.fft.rfft(segments, axis=1))[:, :channels]  # (T, channels)
    if mode == "power":
        spectra = spectra**2
    elif mode == "log":
        spectra = np.log1p(spectra)
    elif mode != "magnitude":
        raise ValueError(f"unknown spectrogram mode {mode!r}")
    return Spectrogram(spectra.T[None].astype(np.float32), window_len, hop)


def normalize_channels(spec: Spectrogram) -> Spectrogram:
    """Min-max scale each frequency channel to [0, 1] over time; channels
    with zero dynamic range map to all-zeros.
    """
    f = spec.frames.astype(np.float32)
    lo = f.min(axis=2, keepdims=True)
    hi = f.max(axis=2, keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (f - lo) / np.where(span > 0, span, 1.0), 0.0)
    return Spectrogram(out.astype(np.float32), spec.window_len, spec.hop)


def subsample_training_window(spec: Spectrogram, frames: int, rng) -> Spectrogram:
    """Contiguous random slice of ``frames`` columns, uniform over offsets."""
    t = spec.num_frames
    if t < frames:
        raise ValueError(f"spectrogram has {t} frames, cannot subsample {frames}")
    start = int(rng.integers(0, t - frames + 1))
    return Spectrogram(spec.frames[:, :, start : start + frames], spec.window_len, spec.hop)


# ---------------------------------------------------------------------------
# trace files

def save_trace(path, trace: AccelTrace3) -> None:
    p = Path(path)
    p.write_bytes(np.ascontiguousarray(trace.samples, "<f4").tobytes())
    Path(str(p) + ".meta").write_text(f"sample_rate_hz={trace.sample_rate_hz}\naxes=3\n")


def save_combined_trace(path, signal: np.ndarray, sample_rate_hz: float = SAMPLE_RATE_HZ) -> None:
    p = Path(path)
    p.write_bytes(np.ascontiguousarray(signal, "<f4").ravel().tobytes())
    Path(str(p) + ".meta").write_text(f"sample_rate_hz={sample_rate_hz}\naxes=1\n")


def _read_meta(path) -> tuple[float, int]:
    meta = Path(str(path) + ".meta")
    rate, axes = SAMPLE_RATE_HZ, 3
    if meta.exists():
        for line in meta.read_text().splitlines():
            line = line.strip()
            if line.startswith("sample_rate_hz="):
                rate = float(line.split("=", 1)[1])
            elif line.startswith("axes="):
                axes = int(line.split("=", 1)[1])
    if axes not in (1, 3):
        raise ValueError(f"{path}: unsupported axes={axes} in sidecar")
    return rate, axes


def load_trace(path, trim_samples: int = 0) -> AccelTrace3:
    """Load a 3-axis trace file; ``trim_samples`` drops leading samples (for
    recordings that still contain the initial contact transient).
    """
    rate, axes = _read_meta(path)
    if axes != 3:
        raise ValueError(f"{path}: single-axis file, use load_combined_signal")
    raw = np.frombuffer(Path(path).read_bytes(), "<f4")
    if len(raw) % 3:
        raise ValueError(f"{path}: byte length is not a whole number of (x, y, z) triples")
    samples = raw.reshape(-1, 3)[trim_samples:]
    return AccelTrace3(samples, rate)


def load_combined_signal(path, trim_samples: int = 0) -> tuple[np.ndarray, float]:
    """Load a trace file and return the merged single-axis signal plus its
    sample rate. Three-axis files are merged; single-axis files pass through.
    """
    rate, axes = _read_meta(path)
    raw = np.frombuffer(Path(path).read_bytes(), "<f4").astype(np.float64)
    if axes == 1:
        return raw[trim_samples:], rate
    if len(raw) % 3:
        raise ValueError(f"{path}: byte length is not a whole number of (x, y, z) triples")
    trace = AccelTrace3(raw.reshape(-1, 3)[trim_samples:], rate)
    return dft321_combine(trace), rate


def trace_file_to_spectrogram(path, trim_samples: int = 0, mode: str = "magnitude") -> Spectrogram:
    """File -> combined signal -> raw (unnormalized) spectrogram."""
    signal, _ = load_combined_signal(path, trim_samples)
    return enframe_spectrogram(signal, mode=mode)
