"""Synthetic desk-scale datasets: band-pattern spectrograms and
stripe/dot/checker texture images, as in-memory items or as an on-disk tree
in the standard dataset layout. Includes a complementary-modality variant
where the haptic channel cannot separate one class pair and the visual
channel cannot separate another, so only a fused model can resolve all
classes.

Run as a module to write a dataset tree:

    python -m texturefuse.synth --out <dir> [--classes 3] [--per-class 4]
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import haptic, visual

# frequency bands (spectrogram rows) and sine frequencies (Hz) per class
BAND_ROWS = [(4, 14), (20, 30), (36, 46), (10, 20), (28, 38)]
TONE_HZ = [200.0, 500.0, 800.0, 320.0, 650.0]
IMAGE_KINDS = ["stripes", "dots", "checker", "diag", "rings"]


def band_spectrogram(class_idx: int, frames: int, rng, channels: int = 50, period: float = 16.0) -> np.ndarray:
    """(1, channels, frames) pattern whose class is encoded by WHICH rows
    carry a smooth periodic wave; the remaining rows are jagged noise.

    Per-channel min-max normalization rescales every channel to [0, 1], so
    static band amplitude carries no information after preprocessing; the
    smooth-versus-jagged temporal structure survives it.
    """
    lo, hi = BAND_ROWS[class_idx % len(BAND_ROWS)]
    spec = rng.random((channels, frames))
    t = np.arange(frames)[None, :]
    phase = rng.uniform(0, 2 * np.pi, (hi - lo, 1))
    spec[lo:hi] = 0.5 + 0.5 * np.sin(2 * np.pi * t / period + phase)
    return spec[None].astype(np.float32)


def texture_image(class_idx: int, size: int, rng, noise: float = 0.05) -> np.ndarray:
    """(3, size, size) pattern image in [0, 1]."""
    kind = IMAGE_KINDS[class_idx % len(IMAGE_KINDS)]
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    phase = float(rng.uniform(0, 2 * np.pi))
    if kind == "stripes":
        base = 0.5 + 0.5 * np.sin(2 * np.pi * ys / 14.0 + phase)
    elif kind == "dots":
        base = ((ys % 18 < 7) & (xs % 18 < 7)).astype(np.float64)
    elif kind == "checker":
        base = (((ys // 8) + (xs // 8)) % 2).astype(np.float64)
    elif kind == "diag":
        base = 0.5 + 0.5 * np.sin(2 * np.pi * (ys + xs) / 20.0 + phase)
    else:
        r = np.hypot(ys - size / 2, xs - size / 2)
        base = 0.5 + 0.5 * np.sin(2 * np.pi * r / 16.0 + phase)
    img = np.repeat(base[None], 3, axis=0)
    img = (1.0 - noise) * img + noise * rng.random((3, size, size))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def tone_trace(class_idx: int, n_samples: int, rng, rate: float = haptic.SAMPLE_RATE_HZ) -> haptic.AccelTrace3:
    """Three-axis sinusoid at the class tone plus broadband noise; its
    spectrogram shows the class band.
    """
    f = TONE_HZ[class_idx % len(TONE_HZ)]
    t = np.arange(n_samples) / rate
    axes = []
    for _ in range(3):
        phase = rng.uniform(0, 2 * np.pi)
        amp = 0.8 + 0.4 * rng.random()
        axes.append(amp * np.sin(2 * np.pi * f * t + phase) + 0.05 * rng.normal(size=n_samples))
    return haptic.AccelTrace3(np.stack(axes, axis=1), rate)


def learnable_items(classes: int, per_class: int, seed: int = 0, frames: int = 400, image_size: int = 256):
    """In-memory (label, raw spectrogram) and (label, pixels) item lists in
    which every class is separable within each single modality.
    """
    rng = np.random.default_rng(seed)
    h_items, v_items = [], []
    for c in range(classes):
        for _ in range(per_class):
            h_items.append((c, haptic.Spectrogram(band_spectrogram(c, frames, rng))))
            v_items.append((c, texture_image(c, image_size, rng)))
    return h_items, v_items


def complementary_items(per_class: int, seed: int = 0, frames: int = 400, image_size: int = 256):
    """Three-class set where classes 0 and 2 share one exact haptic pattern
    and classes 0 and 1 share one exact image, so a single modality can
    resolve at most two of the three classes while the paired modalities
    separate all of them.
    """
    rng = np.random.default_rng(seed)
    shared_spec = band_spectrogram(0, frames, rng)
    shared_img = texture_image(0, image_size, rng)
    h_items, v_items = [], []
    for c in range(3):
        for _ in range(per_class):
            if c in (0, 2):
                h_items.append((c, haptic.Spectrogram(shared_spec.copy())))
            else:
                h_items.append((c, haptic.Spectrogram(band_spectrogram(1, frames, rng))))
            if c in (0, 1):
                v_items.append((c, shared_img.copy()))
            else:
                v_items.append((c, texture_image(2, image_size, rng)))
    return h_items, v_items


def write_synthetic_dataset(
    root,
    classes: int = 3,
    per_class: int = 4,
    trace_samples: int = 40_000,
    image_size: int = 520,
    seed: int = 0,
    complementary: bool = False,
) -> Path:
    """Write a dataset tree <root>/<class>/{haptic/*.acc3, image/*.png}.

    Images are written at 2x the intended working size because the loading
    pipeline half-resizes them. With ``complementary`` (3 classes), class
    "c2"'s haptic files are byte copies of class "c0"'s and class "c0"'s
    images are byte copies of class "c1"'s.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    names = [f"c{c}" for c in range(classes)]
    for c, name in enumerate(names):
        hdir = root / name / "haptic"
        idir = root / name / "image"
        hdir.mkdir(parents=True, exist_ok=True)
        idir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            haptic.save_trace(hdir / f"trace{i:02d}.acc3", tone_trace(c, trace_samples, rng))
            visual.save_image(idir / f"img{i:02d}.png", texture_image(c, image_size, rng))
    if complementary:
        if classes != 3:
            raise ValueError("complementary layout is defined for exactly 3 classes")
        for i in range(per_class):
            src = root / names[0] / "haptic" / f"trace{i:02d}.acc3"
            dst = root / names[2] / "haptic" / f"trace{i:02d}.acc3"
            dst.write_bytes(src.read_bytes())
            Path(str(dst) + ".meta").write_text(Path(str(src) + ".meta").read_text())
            isrc = root / names[1] / "image" / f"img{i:02d}.png"
            idst = root / names[0] / "image" / f"img{i:02d}.png"
            idst.write_bytes(isrc.read_bytes())
    return root


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(description="write a synthetic desk-scale dataset tree")
    ap.add_argument("--out", required=True)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--per-class", type=int, default=4)
    ap.add_argument("--trace-samples", type=int, default=40_000)
    ap.add_argument("--image-size", type=int, default=520)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--complementary", action="store_true")
    args = ap.parse_args(argv)
    write_synthetic_dataset(
        args.out, args.classes, args.per_class, args.trace_samples, args.image_size, args.seed, args.complementary
    )
    print(f"wrote {args.classes} classes x {args.per_class} items under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
