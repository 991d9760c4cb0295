"""Label-budget sweeps, evaluation and fake-sample dumps built on the trainer."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DatasetSplit, select_labeled_subset
from .models import CSI_WIDTH, DiscClassNet, predict_batches
from .tensor_engine import ConfigurationError
from .trainer import TrainConfig, evaluate_accuracy, train

log = logging.getLogger(__name__)

MODELS = ("dcgan", "cnn", "dcgan_simplified_g")
DEFAULT_BUDGETS = (16, 32, 64, 128, 1600, 3200, 6400)
DEFAULT_DUMP_EPOCHS = (0, 1, 10, 100)


def model_config(base: TrainConfig, model: str, labeled_per_class: int, seed: int) -> TrainConfig:
    if model not in MODELS:
        raise ConfigurationError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
    return replace(
        base,
        cnn_only=model == "cnn",
        simplified_g=model == "dcgan_simplified_g",
        labeled_per_class=labeled_per_class,
        seed=seed,
        snapshot_epochs=(),
        snapshot_samples=0,
    )


def budget_per_class(budget: int, n_classes: int, n_train: int) -> int:
    if budget < n_classes or budget % n_classes:
        raise ConfigurationError(f"label budget {budget} is not a positive multiple of {n_classes} classes")
    if budget > n_train:
        raise ConfigurationError(f"label budget {budget} exceeds training-set size {n_train}")
    return budget // n_classes


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def cmd_evaluate(net: DiscClassNet, data: DatasetSplit) -> float:
    """Test accuracy (percent) of the classifier head."""
    return evaluate_accuracy(net, data.test_x, data.test_y)


def per_class_accuracy(net: DiscClassNet, data: DatasetSplit) -> np.ndarray:
    pred = predict_batches(net, data.test_x)
    out = np.full(data.n_classes, np.nan)
    for m in range(1, data.n_classes + 1):
        mask = data.test_y == m
        if mask.any():
            out[m - 1] = 100.0 * np.mean(pred[mask] == m)
    return out


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    budget: int
    model: str
    seeds: list[int]
    accuracies: list[float]  # nan marks a failed run

    @property
    def ok(self) -> list[float]:
        return [a for a in self.accuracies if not math.isnan(a)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.ok)) if self.ok else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.ok)) if self.ok else float("nan")

    @property
    def n_failed(self) -> int:
        return len(self.accuracies) - len(self.ok)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def get(self, budget: int, model: str) -> SweepRow:
        for r in self.rows:
            if r.budget == budget and r.model == model:
                return r
        raise KeyError((budget, model))

    @property
    def budgets(self) -> list[int]:
        return sorted({r.budget for r in self.rows})

    @property
    def models(self) -> list[str]:
        present = {r.model for r in self.rows}
        return [m for m in MODELS if m in present]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["budget", "model", "mean_accuracy", "std_accuracy", "n_seeds", "n_failed", "seed", "accuracy"])
            for r in self.rows:
                for s, a in zip(r.seeds, r.accuracies):
                    w.writerow([r.budget, r.model, repr(r.mean), repr(r.std), len(r.seeds), r.n_failed, s, repr(a)])

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        rows: dict[tuple[int, str], SweepRow] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                key = (int(rec["budget"]), rec["model"])
                row = rows.setdefault(key, SweepRow(key[0], key[1], [], []))
                row.seeds.append(int(rec["seed"]))
                row.accuracies.append(float(rec["accuracy"]))
        return cls(list(rows.values()))

    def table(self) -> str:
        """Plain-text table: one line per budget, one column per model."""
        models = self.models
        head = ["Labeled samples"] + models
        lines = []
        for b in self.budgets:
            cells = [str(b)]
            for m in models:
                try:
                    r = self.get(b, m)
                except KeyError:
                    cells.append("-")
                    continue
                cell = "failed" if not r.ok else f"{r.mean:.2f}% ± {r.std:.2f}"
                if r.ok and r.n_failed:
                    cell += f" ({r.n_failed} failed)"
                cells.append(cell)
            lines.append(cells)
        widths = [max(len(x) for x in col) for col in zip(head, *lines)]
        fmt = " | ".join(f"{{:<{w}}}" for w in widths)
        out = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
        out += [fmt.format(*cells) for cells in lines]
        return "\n".join(out)


def run_cell(base: TrainConfig, data: DatasetSplit, budget: int, model: str, seed: int) -> float:
    """Train one model on one labeled subset and return its test accuracy."""
    lpc = budget_per_class(budget, data.n_classes, len(data.train_x))
    subset = select_labeled_subset(data, lpc, seed)  # same subset for every model of this seed
    _, d, _ = train(model_config(base, model, lpc, seed), subset)
    return cmd_evaluate(d, subset)


def cmd_sweep(
    data: DatasetSplit,
    base: TrainConfig,
    budgets=DEFAULT_BUDGETS,
    seeds=(0, 1, 2, 3, 4),
    models=("dcgan", "cnn"),
    progress=None,
) -> SweepResult:
    """Every (budget, model, seed) cell trained from scratch; failed cells are kept as nan."""
    budgets = sorted(set(int(b) for b in budgets))
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ConfigurationError("a sweep needs at least one seed")
    if not budgets:
        raise ConfigurationError("a sweep needs at least one label budget")
    for m in models:
        model_config(base, m, 1, 0)  # rejects unknown tags before any compute
    models = [m for m in MODELS if m in set(models)]
    if not models:
        raise ConfigurationError("a sweep needs at least one model")
    for b in budgets:
        budget_per_class(b, data.n_classes, len(data.train_x))
    base.validate()
    result = SweepResult()
    for b in budgets:
        for m in models:
            accs = []
            for s in seeds:
                try:
                    acc = run_cell(base, data, b, m, s)
                except (ArithmeticError, ValueError, RuntimeError) as exc:
                    log.error("sweep cell budget=%d model=%s seed=%d failed: %s", b, m, s, exc)
                    acc = float("nan")
                accs.append(acc)
                if progress is not None:
                    progress(b, m, s, acc)
            result.rows.append(SweepRow(b, m, list(seeds), accs))
    return result


# ---------------------------------------------------------------------------
# Fake-sample dumps
# ---------------------------------------------------------------------------


@dataclass
class FakeDump:
    epoch: int
    fakes: np.ndarray  # (n, 120), values in [-1, 1]
    predicted: np.ndarray  # 1-based
    real: np.ndarray  # (n, 120): a training sample of the same predicted class per fake


def _matching_real(data: DatasetSplit, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((len(labels), CSI_WIDTH))
    for i, m in enumerate(labels):
        members = np.flatnonzero(data.train_y == m)
        out[i] = data.train_x[rng.choice(members)]
    return out


def cmd_dump_fakes(config: TrainConfig, data: DatasetSplit, epochs=DEFAULT_DUMP_EPOCHS, samples: int = 64):
    """Train once and capture generated samples at the listed epoch boundaries.

    Epoch 0 is taken before any parameter update.  Returns the dumps plus the
    training history.
    """
    if config.cnn_only:
        raise ConfigurationError("dump-fakes needs a generator; cnn_only is set")
    if samples < 1:
        raise ConfigurationError("samples per epoch must be >= 1")
    epochs = tuple(sorted(set(int(e) for e in epochs)))
    late = [e for e in epochs if e > config.epochs or e < 0]
    if late:
        raise ConfigurationError(f"dump epochs {late} outside the training length 0..{config.epochs}")
    cfg = replace(config, snapshot_epochs=epochs, snapshot_samples=samples)
    cfg.validate(len(data.train_x), data.n_classes)
    if len(data.labeled_idx) == 0:
        data = select_labeled_subset(data, cfg.labeled_per_class, cfg.seed)
    _, _, history = train(cfg, data)
    rng = np.random.default_rng([cfg.seed, 7])
    dumps = [
        FakeDump(s.epoch, s.samples, s.predicted, _matching_real(data, s.predicted, rng)) for s in history.snapshots
    ]
    return dumps, history


def write_fake_dumps(dumps: list[FakeDump], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "index", "kind", "predicted_label"] + [f"c{i}" for i in range(CSI_WIDTH)])
        for d in dumps:
            for i, (f, m, r) in enumerate(zip(d.fakes, d.predicted, d.real)):
                w.writerow([d.epoch, i, "fake", int(m)] + [repr(float(v)) for v in f])
                w.writerow([d.epoch, i, "real", int(m)] + [repr(float(v)) for v in r])


def read_fake_dumps(path) -> list[FakeDump]:
    groups: dict[int, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            g = groups.setdefault(int(row[0]), {"fake": [], "real": [], "label": []})
            vals = [float(v) for v in row[4:]]
            g[row[2]].append(vals)
            if row[2] == "fake":
                g["label"].append(int(row[3]))
    return [
        FakeDump(e, np.array(g["fake"]), np.array(g["label"]), np.array(g["real"])) for e, g in sorted(groups.items())
    ]


def class_mean_distances(dump: FakeDump, data: DatasetSplit) -> np.ndarray:
    """Mean L2 distance of each class's fakes to that class's real training mean.

    Fakes are grouped by the classifier's predicted label.  A class that
    received no fakes is scored with all fakes of the dump instead.
    """
    out = np.empty(data.n_classes)
    for m in range(1, data.n_classes + 1):
        mean = data.train_x[data.train_y == m].mean(axis=0)
        group = dump.fakes[dump.predicted == m]
        if len(group) == 0:
            group = dump.fakes
        out[m - 1] = float(np.mean(np.linalg.norm(group - mean, axis=1)))
    return out


def lag1_autocorrelation(x: np.ndarray) -> float:
    """Mean lag-1 autocorrelation of each row about its own mean."""
    x = np.atleast_2d(x)
    c = x - x.mean(axis=1, keepdims=True)
    num = np.sum(c[:, 1:] * c[:, :-1], axis=1)
    den = np.sum(c * c, axis=1)
    return float(np.mean(num / np.where(den == 0, 1.0, den)))
