"""Dataset indexing in the TUM tree layout, ten-fold cross validation,
training loops for the haptic, visual and fusion networks, and evaluation
metrics (per-location fragment accuracy, max-voting accuracy, confusion
matrix, per-class histogram).

Training conventions: batches are class-balanced (uniform class, then
uniform item of that class); a multi-location output grid is supervised
with the sample's single label at every location; haptic spectrograms are
normalized per training subsample and per full trace at test time; visual
channel means come from the fold's training images only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import haptic as hp
from . import visual as vz
from .builders import (
    build_fusion_head,
    build_net,
    fusion_feature_dims,
    fusion_tap_index,
    initialize_network,
)
from .layers import softmax_cross_entropy
from .network import Network
from .optim import LrSchedule, adam_init, adam_step, lr_at

TRACE_SUFFIXES = (".acc3", ".acc1")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# ten-fold voting-accuracy targets for full-scale TUM runs (fraction correct)
REFERENCE_VOTING_ACCURACY = {"haptic": 0.910, "visual": 0.933, "visual-tcnn": 0.955,
                             "fusion-fc2": 0.984, "fusion-fc3": 0.981}
REFERENCE_FRAGMENT_ACCURACY = {"haptic": 0.853, "visual": 0.856, "visual-tcnn": 0.871,
                               "fusion-fc2": 0.962, "fusion-fc3": 0.950}


class DatasetError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# index and folds

@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    classes: tuple[str, ...]
    haptic_files: dict
    image_files: dict

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def counts(self) -> tuple[int, int]:
        c0 = self.classes[0]
        return len(self.haptic_files[c0]), len(self.image_files[c0])


def load_tum(root) -> DatasetIndex:
    """Index a <root>/<class>/{haptic,image}/ tree, deterministically ordered,
    validating that every class carries the same number of items per
    modality (10 + 10 for the full TUM set; any uniform count is accepted
    for desk-scale sets).
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(classes) < 2:
        raise DatasetError(f"dataset root {root} holds {len(classes)} class directories, need at least 2")
    haptic_files, image_files = {}, {}
    for name in classes:
        hdir = root / name / "haptic"
        idir = root / name / "image"
        if not hdir.is_dir():
            raise DatasetError(f"class {name!r} is missing its haptic/ directory")
        if not idir.is_dir():
            raise DatasetError(f"class {name!r} is missing its image/ directory")
        traces = sorted(p for p in hdir.iterdir() if p.suffix.lower() in TRACE_SUFFIXES)
        images = sorted(p for p in idir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not traces or not images:
            raise DatasetError(f"class {name!r} has {len(traces)} traces and {len(images)} images; both must be nonzero")
        haptic_files[name] = tuple(traces)
        image_files[name] = tuple(images)
    nh = len(haptic_files[classes[0]])
    ni = len(image_files[classes[0]])
    for name in classes:
        if len(haptic_files[name]) != nh or len(image_files[name]) != ni:
            raise DatasetError(
                f"ragged item counts: class {name!r} has {len(haptic_files[name])} traces / "
                f"{len(image_files[name])} images, expected {nh} / {ni} like {classes[0]!r}"
            )
    return DatasetIndex(root, tuple(classes), haptic_files, image_files)


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_haptic: dict
    test_haptic: dict
    train_image: dict
    test_image: dict


def _fold_assignments(count: int, folds: int, rng) -> list[np.ndarray]:
    perm = rng.permutation(count)
    m = count // folds
    return [np.sort(perm[f * m : (f + 1) * m]) for f in range(folds)]


def make_folds(index: DatasetIndex, folds: int = 10, seed: int = 0) -> list[FoldSplit]:
    """Per class and modality, a seeded permutation assigns each item index
    to exactly one fold as test; the remainder train.
    """
    if folds < 2:
        raise ValueError(f"cross validation needs at least 2 folds, got {folds}")
    nh, ni = index.counts()
    for n, what in ((nh, "haptic"), (ni, "image")):
        if n % folds:
            divs = [d for d in range(2, n + 1) if n % d == 0]
            raise ValueError(
                f"per-class {what} count {n} is not divisible by {folds} folds; "
                f"usable fold counts: {divs}"
            )
    rng = np.random.default_rng(seed)
    h_assign = {c: _fold_assignments(nh, folds, rng) for c in index.classes}
    i_assign = {c: _fold_assignments(ni, folds, rng) for c in index.classes}
    out = []
    all_h = set(range(nh))
    all_i = set(range(ni))
    for f in range(folds):
        th = {c: tuple(int(i) for i in h_assign[c][f]) for c in index.classes}
        ti = {c: tuple(int(i) for i in i_assign[c][f]) for c in index.classes}
        out.append(
            FoldSplit(
                f,
                {c: tuple(sorted(all_h - set(th[c]))) for c in index.classes},
                th,
                {c: tuple(sorted(all_i - set(ti[c]))) for c in index.classes},
                ti,
            )
        )
    return out


# ---------------------------------------------------------------------------
# preprocessing into memory

def load_haptic_items(index: DatasetIndex, selection=None, trim: int = 0):
    """(label, raw unnormalized Spectrogram) items; ``selection`` maps class
    name to item indices (defaults to all).
    """
    items = []
    for label, name in enumerate(index.classes):
        files = index.haptic_files[name]
        picks = range(len(files)) if selection is None else selection[name]
        for i in picks:
            items.append((label, hp.trace_file_to_spectrogram(files[i], trim_samples=trim)))
    return items


def load_visual_items(index: DatasetIndex, selection=None):
    """(label, half-resized pixels) items."""
    items = []
    for label, name in enumerate(index.classes):
        files = index.image_files[name]
        picks = range(len(files)) if selection is None else selection[name]
        for i in picks:
            items.append((label, vz.half_resize(vz.load_image(files[i]))))
    return items


# ---------------------------------------------------------------------------
# training configuration

@dataclass(frozen=True)
class TrainConfig:
    base_lr: float
    gamma: float
    step_every: int
    total_iters: int
    batch_size: int
    input_size: int
    seed: int = 0
    weight_decay: float = 5e-4
    head_lr_multiplier: float = 20.0
    width_scale: float = 1.0
    rotate_mode: str = "right-angle"
    probe_every: int = 0
    target_accuracy: float = 0.0

    def __post_init__(self):
        if min(self.base_lr, self.gamma) <= 0 or min(self.step_every, self.total_iters, self.batch_size, self.input_size) < 1:
            raise ValueError(f"non-positive training configuration value in {self}")
        if not 10.0 <= self.head_lr_multiplier <= 50.0:
            raise ValueError(f"head_lr_multiplier {self.head_lr_multiplier} outside the supported 10..50 range")

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.gamma, self.step_every, self.total_iters)


DEFAULT_CONFIGS = {
    "haptic": TrainConfig(1e-4, 0.3, 40_000, 100_000, 10, 300),
    "visual": TrainConfig(3e-5, 0.75, 40_000, 100_000, 2, 384),
    "visual-tcnn": TrainConfig(3e-5, 0.75, 40_000, 100_000, 2, 384),
    "fusion": TrainConfig(1e-6, 0.1, 4_000_000, 100_000, 1, 192),
}

_CONFIG_TYPES = {f.name: f.type for f in TrainConfig.__dataclass_fields__.values()}


def parse_config(text: str, defaults: TrainConfig) -> TrainConfig:
    """Flat key=value lines over the TrainConfig fields; '#' comments allowed."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        kind = _CONFIG_TYPES[key]
        values[key] = raw if kind == "str" else (int(raw) if kind == "int" else float(raw))
    return replace(defaults, **values)


def format_config(cfg: TrainConfig) -> str:
    return "".join(f"{name}={getattr(cfg, name)}\n" for name in _CONFIG_TYPES)


# ---------------------------------------------------------------------------
# model bundles

@dataclass
class HapticModel:
    net: Network


@dataclass
class VisualModel:
    net: Network
    channel_means: np.ndarray


@dataclass
class FusionModel:
    haptic: HapticModel
    visual: VisualModel
    head: Network
    layer_choice: str = "fc2"
    tap: str = "output"


@dataclass
class TrainResult:
    model: object
    loss_trace: list
    probes: list


# ---------------------------------------------------------------------------
# training loops

def _group_by_class(items, class_count):
    groups = [[] for _ in range(class_count)]
    for label, payload in items:
        groups[label].append(payload)
    for c, g in enumerate(groups):
        if not g:
            raise DatasetError(f"no training items for class index {c}")
    return groups


def _check_finite_loss(loss, it, lr):
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss} at iteration {it} (lr {lr:.3g})")


def _fragment_accuracy_haptic(net, items):
    good = total = 0
    for label, spec in items:
        probs = net.forward(hp.normalize_channels(spec).frames, train=False)
        pred = np.argmax(probs, axis=0)
        good += int((pred == label).sum())
        total += pred.size
    return good / total


def _fragment_accuracy_visual(net, items, means):
    good = total = 0
    for label, pixels in items:
        probs = net.forward(vz.mean_subtract(pixels, means), train=False)
        pred = np.argmax(probs, axis=0)
        good += int((pred == label).sum())
        total += pred.size
    return good / total


def train_haptic(items, config: TrainConfig, class_count: int, dtype=np.float32) -> TrainResult:
    """Train the spectrogram classifier on (label, raw Spectrogram) items."""
    spec = build_net("haptic", class_count, config.width_scale)
    if config.input_size < spec.native_input[1]:
        raise ValueError(f"training window of {config.input_size} frames is below the {spec.native_input[1]}-frame minimum")
    rng = np.random.default_rng(config.seed)
    net = Network.initialize(spec, rng, dtype)
    groups = _group_by_class(items, class_count)
    sched = config.schedule()
    names = [n for n, _ in net.param_entries()]
    params = [p for _, p in net.param_entries()]
    state = adam_init(params, weight_decay=config.weight_decay)
    trace, probes = [], []
    for it in range(sched.total_iters):
        labels = rng.integers(0, class_count, config.batch_size)
        batch = []
        for c in labels:
            raw = groups[c][int(rng.integers(0, len(groups[c])))]
            sub = hp.subsample_training_window(raw, config.input_size, rng)
            batch.append(hp.normalize_channels(sub).frames)
        x = np.stack(batch)
        lr = lr_at(sched, it)
        probs = net.forward(x, train=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(probs, labels)
        _check_finite_loss(loss, it, lr)
        net.backward_logits(dlogits)
        adam_step(params, net.grad_entries(), state, lr, names)
        if it % 100 == 0 or it == sched.total_iters - 1:
            trace.append((it, loss))
        if config.probe_every and (it + 1) % config.probe_every == 0:
            acc = _fragment_accuracy_haptic(net, items)
            probes.append((it + 1, acc))
            if config.target_accuracy and acc >= config.target_accuracy:
                break
    return TrainResult(HapticModel(net), trace, probes)


def train_visual(items, config: TrainConfig, class_count: int, net_name: str = "visual",
                 pretrained=None, dtype=np.float32) -> TrainResult:
    """Train an image classifier on (label, pixels) items with random patch
    and rotation augmentation; optional pretrained trunk import.
    """
    spec = build_net(net_name, class_count, config.width_scale)
    if config.input_size < max(spec.native_input):
        raise ValueError(f"patch size {config.input_size} is below the {max(spec.native_input)}-pixel minimum input")
    rng = np.random.default_rng(config.seed)
    net = initialize_network(spec, rng, dtype, pretrained=pretrained)
    groups = _group_by_class(items, class_count)
    means = np.mean([p.mean(axis=(1, 2)) for _, p in items], axis=0).astype(np.float32)
    sched = config.schedule()
    names = [n for n, _ in net.param_entries()]
    params = [p for _, p in net.param_entries()]
    state = adam_init(params, weight_decay=config.weight_decay)
    trace, probes = [], []
    for it in range(sched.total_iters):
        labels = rng.integers(0, class_count, config.batch_size)
        batch = []
        for c in labels:
            img = groups[c][int(rng.integers(0, len(groups[c])))]
            patch = vz.sample_patch(img, config.input_size, rng)
            patch = vz.random_rotate(patch, rng, config.rotate_mode)
            batch.append(vz.mean_subtract(patch, means))
        x = np.stack(batch)
        lr = lr_at(sched, it)
        probs = net.forward(x, train=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(probs, labels)
        _check_finite_loss(loss, it, lr)
        net.backward_logits(dlogits)
        adam_step(params, net.grad_entries(), state, lr, names)
        if it % 100 == 0 or it == sched.total_iters - 1:
            trace.append((it, loss))
        if config.probe_every and (it + 1) % config.probe_every == 0:
            acc = _fragment_accuracy_visual(net, items, means)
            probes.append((it + 1, acc))
            if config.target_accuracy and acc >= config.target_accuracy:
                break
    return TrainResult(VisualModel(net, means), trace, probes)


def train_fusion(h_items, v_items, config: TrainConfig, haptic_model: HapticModel,
                 visual_model: VisualModel, layer_choice: str = "fc2", tap: str = "output") -> TrainResult:
    """Jointly train a fusion head over concatenated unimodal features, with
    trunk updates at the base rate and the head at head_lr_multiplier times
    it. Inputs are sized to the receptive fields (one feature per modality
    per step); same-class haptic/image pairs are drawn independently.
    """
    h_net = haptic_model.net.copy()
    v_net = visual_model.net.copy()
    means = visual_model.channel_means
    class_count = h_net.spec.class_count
    if v_net.spec.class_count != class_count:
        raise ValueError("unimodal networks disagree on class count")
    dims = fusion_feature_dims(h_net.spec, v_net.spec, layer_choice, tap)
    head_spec = build_fusion_head(dims[0], dims[1], class_count)
    rng = np.random.default_rng(config.seed)
    head = Network.initialize(head_spec, rng, h_net.dtype)
    h_tap = fusion_tap_index(h_net.spec, layer_choice, tap)
    v_tap = fusion_tap_index(v_net.spec, layer_choice, tap)
    h_frames = h_net.spec.native_input[1]
    v_size = max(v_net.spec.native_input)
    h_groups = _group_by_class(h_items, class_count)
    v_groups = _group_by_class(v_items, class_count)
    sched = config.schedule()
    head_params = [p for _, p in head.param_entries()]
    head_names = [n for n, _ in head.param_entries()]
    h_params = [p for _, p in h_net.param_entries(upto=h_tap)]
    h_names = [n for n, _ in h_net.param_entries(upto=h_tap)]
    v_params = [p for _, p in v_net.param_entries(upto=v_tap)]
    v_names = [n for n, _ in v_net.param_entries(upto=v_tap)]
    head_state = adam_init(head_params, weight_decay=config.weight_decay)
    h_state = adam_init(h_params, weight_decay=config.weight_decay)
    v_state = adam_init(v_params, weight_decay=config.weight_decay)
    trace = []
    for it in range(sched.total_iters):
        labels = rng.integers(0, class_count, config.batch_size)
        h_batch, v_batch = [], []
        for c in labels:
            raw = h_groups[c][int(rng.integers(0, len(h_groups[c])))]
            sub = hp.subsample_training_window(raw, h_frames, rng)
            h_batch.append(hp.normalize_channels(sub).frames)
            img = v_groups[c][int(rng.integers(0, len(v_groups[c])))]
            v_batch.append(vz.mean_subtract(vz.sample_patch(img, v_size, rng), means))
        hf = h_net.forward(np.stack(h_batch), train=True, rng=rng, upto=h_tap)
        vf = v_net.forward(np.stack(v_batch), train=True, rng=rng, upto=v_tap)
        if hf.shape[2:] != (1, 1) or vf.shape[2:] != (1, 1):
            raise TrainingError(
                f"fusion training needs receptive-field-sized inputs; got feature grids "
                f"{hf.shape[2:]} and {vf.shape[2:]}"
            )
        fused = np.concatenate([hf, vf], axis=1)
        lr = lr_at(sched, it)
        probs = head.forward(fused, train=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(probs, labels)
        _check_finite_loss(loss, it, lr)
        dfused = head.backward_logits(dlogits, need_input_grad=True)
        h_net.backward(dfused[:, : hf.shape[1]], from_layer=h_tap)
        v_net.backward(dfused[:, hf.shape[1] :], from_layer=v_tap)
        adam_step(head_params, head.grad_entries(), head_state, lr * config.head_lr_multiplier, head_names)
        adam_step(h_params, h_net.grad_entries(upto=h_tap), h_state, lr, h_names)
        adam_step(v_params, v_net.grad_entries(upto=v_tap), v_state, lr, v_names)
        if it % 100 == 0 or it == sched.total_iters - 1:
            trace.append((it, loss))
    model = FusionModel(HapticModel(h_net), VisualModel(v_net, means), head, layer_choice, tap)
    return TrainResult(model, trace, [])


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class Metrics:
    fragment_accuracy: float
    voting_accuracy: float
    confusion: np.ndarray
    per_class_fragment: np.ndarray

    def to_dict(self) -> dict:
        return {
            "fragment_accuracy": self.fragment_accuracy,
            "voting_accuracy": self.voting_accuracy,
            "per_class_fragment": [float(x) for x in self.per_class_fragment],
        }


class _MetricTally:
    def __init__(self, class_count):
        self.counts = np.zeros((class_count, class_count), np.int64)
        self.votes_good = 0
        self.votes_total = 0

    def add(self, label, vote):
        frags = np.asarray(vote.fragment_labels).ravel()
        np.add.at(self.counts[label], frags, 1)
        self.votes_good += int(vote.label == label)
        self.votes_total += 1

    def finish(self) -> Metrics:
        row_sums = self.counts.sum(axis=1)
        norm = np.where(row_sums > 0, row_sums, 1)[:, None]
        confusion = self.counts / norm
        per_class = np.where(row_sums > 0, np.diag(self.counts) / np.maximum(row_sums, 1), 0.0)
        total = self.counts.sum()
        fragment = float(np.diag(self.counts).sum() / total) if total else 0.0
        voting = self.votes_good / self.votes_total if self.votes_total else 0.0
        return Metrics(fragment, voting, confusion, per_class)


def evaluate(model, h_items=None, v_items=None, class_count: int | None = None,
             k: int = 1000, seed: int = 0) -> Metrics:
    """Fragment and voting metrics of a trained model over test items.

    Haptic models take h_items, visual models v_items; fusion models take
    both and score every same-class (trace, image) pair with K feature
    samples per pair.
    """
    from .infer import classify_fused, classify_haptic, classify_image

    if isinstance(model, HapticModel):
        class_count = class_count or model.net.spec.class_count
        tally = _MetricTally(class_count)
        for label, spec in h_items:
            tally.add(label, classify_haptic(model.net, hp.normalize_channels(spec)))
        return tally.finish()
    if isinstance(model, VisualModel):
        class_count = class_count or model.net.spec.class_count
        tally = _MetricTally(class_count)
        for label, pixels in v_items:
            tally.add(label, classify_image(model.net, vz.mean_subtract(pixels, model.channel_means)))
        return tally.finish()
    if isinstance(model, FusionModel):
        class_count = class_count or model.head.spec.class_count
        rng = np.random.default_rng(seed)
        tally = _MetricTally(class_count)
        by_class_v = {}
        for label, pixels in v_items:
            by_class_v.setdefault(label, []).append(pixels)
        for label, spec in h_items:
            for pixels in by_class_v.get(label, []):
                vote = classify_fused(
                    model.haptic.net,
                    model.visual.net,
                    model.head,
                    hp.normalize_channels(spec),
                    vz.mean_subtract(pixels, model.visual.channel_means),
                    k=k,
                    rng=rng,
                    layer_choice=model.layer_choice,
                    tap=model.tap,
                )
                tally.add(label, vote)
        return tally.finish()
    raise TypeError(f"cannot evaluate object of type {type(model).__name__}")


def write_report(metrics: Metrics, classes, out_dir) -> None:
    """metrics.json plus confusion and per-class fragment accuracy CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    header = "class," + ",".join(classes)
    rows = [header]
    for name, row in zip(classes, metrics.confusion):
        rows.append(name + "," + ",".join(f"{v:.6f}" for v in row))
    (out / "confusion.csv").write_text("\n".join(rows) + "\n")
    rows = ["class,fragment_accuracy"]
    for name, v in zip(classes, metrics.per_class_fragment):
        rows.append(f"{name},{v:.6f}")
    (out / "per_class_fragment.csv").write_text("\n".join(rows) + "\n")
