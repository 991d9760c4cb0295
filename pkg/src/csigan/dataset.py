"""Synthetic CSI fingerprint data, normalization, labeled subsets and CSV I/O.

The measured dataset behind the method is private, so samples are drawn
around one fixed curve ("template") per location.  A template is a sum of three
sinusoids of random frequency and phase over the 120 channels plus a
piecewise-constant offset, one level per 30-channel antenna-pair block.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CSI_WIDTH = 120
BLOCK = 30  # subcarriers per antenna pair
MAX_TEMPLATE_RETRIES = 100
SEPARATION_FACTOR = 5.0

DEFAULT_CLASSES = 16
DEFAULT_TRAIN_PER_CLASS = 400
DEFAULT_TEST_PER_CLASS = 200
DEFAULT_NOISE_SIGMA = 0.15
DEFAULT_DRIFT_SIGMA = 0.45


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class CsiSample:
    values: np.ndarray
    label: int | None  # 1..M, None when unlabeled

    def __post_init__(self):
        if np.asarray(self.values).shape != (CSI_WIDTH,):
            raise DatasetError(f"CSI sample must have length {CSI_WIDTH}")


@dataclass
class DatasetSplit:
    """Train/test arrays with 1-based labels and the labeled-subset indices."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    labeled_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_classes: int = DEFAULT_CLASSES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.train_x = np.asarray(self.train_x, dtype=np.float64)
        self.test_x = np.asarray(self.test_x, dtype=np.float64)
        self.train_y = np.asarray(self.train_y, dtype=np.int64)
        self.test_y = np.asarray(self.test_y, dtype=np.int64)
        self.labeled_idx = np.asarray(self.labeled_idx, dtype=np.int64)
        for name in ("train_x", "test_x"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != CSI_WIDTH:
                raise DatasetError(f"{name} must be (n, {CSI_WIDTH}), got {arr.shape}")
        if len(self.train_x) != len(self.train_y) or len(self.test_x) != len(self.test_y):
            raise DatasetError("sample and label counts differ")
        for y in (self.train_y, self.test_y):
            if y.size and (y.min() < 1 or y.max() > self.n_classes):
                raise DatasetError(f"labels must lie in 1..{self.n_classes}")

    @property
    def labeled_x(self) -> np.ndarray:
        return self.train_x[self.labeled_idx]

    @property
    def labeled_y(self) -> np.ndarray:
        return self.train_y[self.labeled_idx]

    def unlabeled_x(self) -> np.ndarray:
        """The full training set with labels stripped."""
        return self.train_x

    def train_samples(self) -> list[CsiSample]:
        return [CsiSample(x, int(y)) for x, y in zip(self.train_x, self.train_y)]

    def test_samples(self) -> list[CsiSample]:
        return [CsiSample(x, int(y)) for x, y in zip(self.test_x, self.test_y)]


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def make_template(rng: np.random.Generator, width: int = CSI_WIDTH) -> np.ndarray:
    ch = np.arange(width)
    curve = np.zeros(width)
    for _ in range(3):
        amp = rng.uniform(0.5, 1.5)
        cycles = rng.uniform(0.5, 6.0)  # periods across the whole band
        phase = rng.uniform(0, 2 * np.pi)
        curve += amp * np.sin(2 * np.pi * cycles * ch / width + phase)
    levels = rng.normal(0.0, 1.0, size=int(np.ceil(width / BLOCK)))
    return curve + np.repeat(levels, BLOCK)[:width]


def _min_pairwise_distance(templates: np.ndarray) -> float:
    diff = templates[:, None, :] - templates[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    return float(dist[np.triu_indices(len(templates), k=1)].min())


def make_templates(classes: int, seed: int, noise_sigma: float) -> tuple[np.ndarray, int]:
    """Class templates meeting the separation floor, plus the attempt that produced them."""
    needed = SEPARATION_FACTOR * noise_sigma * np.sqrt(CSI_WIDTH)
    best = 0.0
    for attempt in range(MAX_TEMPLATE_RETRIES):
        templates = np.stack(
            [make_template(np.random.default_rng([seed, m, attempt])) for m in range(1, classes + 1)]
        )
        best = _min_pairwise_distance(templates)
        if best > needed:
            return templates, attempt
    raise DatasetError(
        f"could not separate {classes} templates after {MAX_TEMPLATE_RETRIES} attempts: "
        f"best min distance {best:.4g} <= required {needed:.4g} "
        f"(noise_sigma={noise_sigma}); lower noise_sigma or the class count"
    )


def _drift(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    """Smooth per-sample perturbation: random low-order cosine series."""
    if sigma == 0 or n == 0:
        return np.zeros((n, CSI_WIDTH))
    ch = np.arange(CSI_WIDTH) / CSI_WIDTH
    basis = np.stack([np.cos(np.pi * k * ch) for k in range(4)])  # (4, W)
    return sigma * rng.normal(size=(n, 4)) @ basis


def synth_generate(
    classes: int = DEFAULT_CLASSES,
    train_per_class: int = DEFAULT_TRAIN_PER_CLASS,
    test_per_class: int = DEFAULT_TEST_PER_CLASS,
    seed: int = 0,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    drift_sigma: float = DEFAULT_DRIFT_SIGMA,
) -> DatasetSplit:
    """Draw train and test samples around seeded class templates.

    Train and test share templates but use independent noise streams.
    ``drift_sigma`` adds a smooth random per-sample perturbation on top of the
    white channel noise (zero disables it).
    """
    if classes < 2:
        raise DatasetError("need at least two classes")
    if train_per_class < 1 or test_per_class < 1:
        raise DatasetError("per-class counts must be >= 1")
    if noise_sigma < 0 or drift_sigma < 0:
        raise DatasetError("noise levels must be non-negative")
    templates, attempt = make_templates(classes, seed, noise_sigma)

    def draw(stream: int, per_class: int):
        rng = np.random.default_rng([seed, 10_000 + stream])
        labels = np.repeat(np.arange(1, classes + 1), per_class)
        x = templates[labels - 1] + noise_sigma * rng.normal(size=(len(labels), CSI_WIDTH))
        x += _drift(rng, len(labels), drift_sigma)
        return x, labels

    train_x, train_y = draw(0, train_per_class)
    test_x, test_y = draw(1, test_per_class)
    meta = {
        "generator": "sinusoid-templates",
        "seed": seed,
        "classes": classes,
        "train_per_class": train_per_class,
        "test_per_class": test_per_class,
        "noise_sigma": noise_sigma,
        "drift_sigma": drift_sigma,
        "template_attempt": attempt,
        "template_min_distance": _min_pairwise_distance(templates),
        "template": "3 sinusoids (amp U[0.5,1.5], cycles U[0.5,6], phase U[0,2pi]) "
        f"+ N(0,1) offset per {BLOCK}-channel block",
    }
    split = DatasetSplit(train_x, train_y, test_x, test_y, n_classes=classes, meta=meta)
    split.meta["templates"] = templates.tolist()
    return split


def templates_of(split: DatasetSplit) -> np.ndarray:
    """Templates in the split's current (possibly normalized) coordinates."""
    t = np.asarray(split.meta["templates"], dtype=np.float64)
    norm = split.meta.get("normalization")
    return t if norm is None else _affine(t, norm["lo"], norm["hi"])


def nearest_template_accuracy(split: DatasetSplit, which: str = "test") -> float:
    x = split.test_x if which == "test" else split.train_x
    y = split.test_y if which == "test" else split.train_y
    t = templates_of(split)
    d = ((x[:, None, :] - t[None]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) + 1 == y))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def _affine(x, lo, hi):
    return 2.0 * (np.asarray(x) - lo) / (hi - lo) - 1.0


def normalize(split: DatasetSplit) -> DatasetSplit:
    """Map the train range onto [-1, 1]; apply the same map to test and clip."""
    if split.train_x.size == 0:
        raise DatasetError("cannot normalize an empty training set")
    lo, hi = float(split.train_x.min()), float(split.train_x.max())
    if lo == hi:
        raise DatasetError(f"degenerate training range: min == max == {lo}")
    train = np.clip(_affine(split.train_x, lo, hi), -1.0, 1.0)
    test = np.clip(_affine(split.test_x, lo, hi), -1.0, 1.0)
    meta = dict(split.meta, normalization={"lo": lo, "hi": hi})
    return replace(split, train_x=train, test_x=test, meta=meta)


def denormalize(x, split_or_params) -> np.ndarray:
    params = split_or_params
    if isinstance(split_or_params, DatasetSplit):
        params = split_or_params.meta["normalization"]
    lo, hi = params["lo"], params["hi"]
    return (np.asarray(x) + 1.0) * (hi - lo) / 2.0 + lo


# ---------------------------------------------------------------------------
# Labeled subsets
# ---------------------------------------------------------------------------


def select_labeled_subset(split: DatasetSplit, n_per_class: int, seed) -> DatasetSplit:
    """Pick ``n_per_class`` training indices per class, without replacement."""
    counts = np.bincount(split.train_y, minlength=split.n_classes + 1)[1:]
    if n_per_class < 1 or n_per_class > counts.min():
        raise DatasetError(f"n_per_class must be in 1..{counts.min()}, got {n_per_class}")
    rng = np.random.default_rng(seed)
    idx = []
    for m in range(1, split.n_classes + 1):
        members = np.flatnonzero(split.train_y == m)
        idx.append(np.sort(rng.choice(members, size=n_per_class, replace=False)))
    return replace(split, labeled_idx=np.concatenate(idx))


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

SPLIT_TAGS = ("train", "train_labeled", "test")


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_csv(split: DatasetSplit, path) -> None:
    """One row per sample: 120 values, label, split tag; metadata in a sidecar JSON."""
    path = Path(path)
    labeled = np.zeros(len(split.train_x), dtype=bool)
    labeled[split.labeled_idx] = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{i}" for i in range(CSI_WIDTH)] + ["label", "split"])
        for x, y, lab in zip(split.train_x, split.train_y, labeled):
            w.writerow([repr(float(v)) for v in x] + [int(y), "train_labeled" if lab else "train"])
        for x, y in zip(split.test_x, split.test_y):
            w.writerow([repr(float(v)) for v in x] + [int(y), "test"])
    meta = dict(split.meta, n_classes=split.n_classes)
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_csv(path) -> DatasetSplit:
    path = Path(path)
    rows = {"train": [], "test": []}
    labeled = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        if len(header) != CSI_WIDTH + 2:
            raise DatasetError(f"{path}:1: header has {len(header)} columns, expected {CSI_WIDTH + 2}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != CSI_WIDTH + 2:
                raise DatasetError(f"{path}:{lineno}: expected {CSI_WIDTH + 2} fields, got {len(row)}")
            try:
                values = [float(v) for v in row[:CSI_WIDTH]]
                label = int(row[CSI_WIDTH])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: non-numeric field ({exc})") from None
            tag = row[CSI_WIDTH + 1]
            if tag not in SPLIT_TAGS:
                raise DatasetError(f"{path}:{lineno}: unknown split tag {tag!r}")
            if not np.all(np.isfinite(values)):
                raise DatasetError(f"{path}:{lineno}: non-finite value")
            if tag == "test":
                rows["test"].append((values, label))
            else:
                if tag == "train_labeled":
                    labeled.append(len(rows["train"]))
                rows["train"].append((values, label))
    if not rows["train"] and not rows["test"]:
        raise DatasetError(f"{path}: no samples")
    meta = {}
    if meta_path(path).exists():
        meta = json.loads(meta_path(path).read_text())
    n_classes = int(meta.pop("n_classes", DEFAULT_CLASSES))

    def arrays(items):
        if not items:
            return np.zeros((0, CSI_WIDTH)), np.zeros(0, dtype=np.int64)
        return np.array([v for v, _ in items]), np.array([lab for _, lab in items])

    train_x, train_y = arrays(rows["train"])
    test_x, test_y = arrays(rows["test"])
    return DatasetSplit(train_x, train_y, test_x, test_y, np.array(labeled, dtype=np.int64), n_classes, meta)
