"""Semi-supervised GAN training (C-step, D-step, G-step) and the CNN baseline."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .dataset import DatasetSplit
from .models import (
    LATENT_DIM,
    N_CLASSES,
    DiscClassNet,
    build_discriminator,
    build_generator,
    build_simplified_generator,
    predict_batches,
)
from .tensor_engine import AdamState, ConfigurationError, adam_step, lambda_bce_with_grad, softmax_ce_with_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def new_state(self, params) -> AdamState:
        return AdamState.for_params(params, self.lr, self.beta1, self.beta2, self.epsilon)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    labeled_per_class: int = 400
    seed: int = 0
    simplified_g: bool = False
    cnn_only: bool = False
    schedule: Literal["interleaved", "phased"] = "interleaved"
    # None: one pass over the unlabeled pool per epoch
    steps_per_epoch: int | None = None
    adam_c: AdamConfig = field(default_factory=AdamConfig)
    adam_d: AdamConfig = field(default_factory=AdamConfig)
    # a faster G keeps the game balanced; at 2e-4 D wins and the shared weights overfit
    adam_g: AdamConfig = field(default_factory=lambda: AdamConfig(lr=5e-4))
    snapshot_epochs: tuple[int, ...] = ()
    snapshot_samples: int = 0
    eval_every: int = 1

    def validate(self, n_train: int | None = None, n_classes: int = N_CLASSES):
        errors = []
        if self.epochs < 1:
            errors.append("epochs must be >= 1")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.labeled_per_class < 1:
            errors.append("labeled_per_class must be >= 1")
        if n_train is not None and self.labeled_per_class * n_classes > n_train:
            errors.append(f"labeled_per_class*{n_classes} exceeds training-set size {n_train}")
        if self.simplified_g and self.cnn_only:
            errors.append("simplified_g and cnn_only are mutually exclusive")
        if self.schedule not in ("interleaved", "phased"):
            errors.append(f"unknown schedule {self.schedule!r}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            errors.append("steps_per_epoch must be >= 1")
        if self.eval_every < 1:
            errors.append("eval_every must be >= 1")
        bad = [e for e in self.snapshot_epochs if not 0 <= e <= self.epochs]
        if bad:
            errors.append(f"snapshot epochs {bad} outside 0..{self.epochs}")
        if self.snapshot_epochs and self.cnn_only:
            errors.append("fake-sample snapshots need a generator (cnn_only is set)")
        for name in ("adam_c", "adam_d", "adam_g"):
            a = getattr(self, name)
            if a.lr <= 0 or not 0 <= a.beta1 < 1 or not 0 <= a.beta2 < 1 or a.epsilon <= 0:
                errors.append(f"{name}: invalid Adam hyperparameters {a}")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snapshot_epochs"] = list(self.snapshot_epochs)
        return d


@dataclass(frozen=True)
class LabeledBatch:
    x: np.ndarray
    y: np.ndarray  # 1-based


@dataclass(frozen=True)
class UnlabeledBatch:
    x: np.ndarray


@dataclass
class EpochRecord:
    epoch: int
    c_loss: float
    d_loss: float
    g_loss: float
    test_accuracy: float


@dataclass
class FakeSnapshot:
    epoch: int
    samples: np.ndarray  # (n, 120)
    predicted: np.ndarray  # 1-based labels from the classifier head


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    snapshots: list[FakeSnapshot] = field(default_factory=list)

    CSV_FIELDS = ("epoch", "c_loss", "d_loss", "g_loss", "test_accuracy")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_FIELDS)
            for r in self.records:
                w.writerow([r.epoch] + [repr(float(getattr(r, k))) for k in self.CSV_FIELDS[1:]])

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([EpochRecord(int(r["epoch"]), *(float(r[k]) for k in cls.CSV_FIELDS[1:])) for r in rows])


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def train_classifier_step(net: DiscClassNet, batch: LabeledBatch, state: AdamState) -> float:
    """One Adam update of the shared weights on mean categorical CE of the softmax head."""
    if len(batch.x) == 0:
        log.warning("empty labeled batch: classifier step skipped")
        return float("nan")
    net.zero_grad()
    c = net.forward(batch.x)
    loss, grad = softmax_ce_with_grad(c, batch.y - 1)
    net.backward(grad, need_input=False)
    adam_step(net.params(), net.grads(), state)
    return loss


def sample_latent(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal((n, LATENT_DIM))


def train_discriminator_step(
    net: DiscClassNet, real: UnlabeledBatch, g, state: AdamState, rng: np.random.Generator
) -> float:
    """Real batch plus an equal number of fakes; binary CE of the lambda head.

    The generator is only run forward, its parameters are never touched.
    """
    n = len(real.x)
    if n == 0:
        raise ConfigurationError("discriminator step needs a non-empty real batch")
    fake = g.forward(sample_latent(rng, n))
    x = np.concatenate([real.x, fake])
    targets = np.concatenate([np.ones(n), np.zeros(n)])
    net.zero_grad()
    c = net.forward(x)
    loss, grad = lambda_bce_with_grad(c, targets)
    net.backward(grad, need_input=False)
    adam_step(net.params(), net.grads(), state)
    return loss


def train_generator_step(g, net: DiscClassNet, state: AdamState, rng: np.random.Generator, n: int) -> float:
    """Non-saturating generator update: fakes are scored against the 'real' target."""
    g.zero_grad()
    fake = g.forward(sample_latent(rng, n))
    c = net.forward(fake)
    loss, grad = lambda_bce_with_grad(c, np.ones(n))
    g.backward(net.backward(grad, need_params=False), need_input=False)
    adam_step(g.params(), g.grads(), state)
    return loss


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------


def evaluate_accuracy(net: DiscClassNet, x: np.ndarray, y: np.ndarray) -> float:
    """Percentage of samples whose predicted class equals the label."""
    if len(x) == 0:
        raise ConfigurationError("empty evaluation set")
    return 100.0 * float(np.mean(predict_batches(net, x) == np.asarray(y)))


def _seeds(seed: int) -> dict[str, int]:
    """Independent integer seeds per consumer, derived from the master seed."""
    names = ("d_init", "g_init", "latent", "snapshot")
    return dict(zip(names, (int(s) for s in np.random.SeedSequence(seed).generate_state(len(names)))))


class _Cycler:
    """Endless minibatches over labeled indices, reshuffled on every pass."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n, self.bs, self.rng = n, batch_size, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.n <= self.bs:
            return self.rng.permutation(self.n)
        if self.pos + self.bs > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        out = self.order[self.pos : self.pos + self.bs]
        self.pos += self.bs
        return out


def train(config: TrainConfig, data: DatasetSplit, d_net: DiscClassNet | None = None, g_net=None):
    """Run the full schedule; returns ``(generator or None, discriminator, history)``.

    ``data.labeled_idx`` selects the labeled subset; the unlabeled pool is the
    whole training set without labels.  When no labeled subset has been
    selected, ``config.labeled_per_class`` is applied with the config seed.
    """
    n_train = len(data.train_x)
    config.validate(n_train, data.n_classes)
    if len(data.labeled_idx) == 0:
        from .dataset import select_labeled_subset

        data = select_labeled_subset(data, config.labeled_per_class, config.seed)
    seeds = _seeds(config.seed)
    d = d_net if d_net is not None else build_discriminator(seeds["d_init"])
    g = None
    if not config.cnn_only:
        if g_net is not None:
            g = g_net
        elif config.simplified_g:
            g = build_simplified_generator(seeds["g_init"])
        else:
            g = build_generator(seeds["g_init"])

    opt_c = config.adam_c.new_state(d.params())
    opt_d = config.adam_d.new_state(d.params())
    opt_g = config.adam_g.new_state(g.params()) if g is not None else None
    latent_rng = np.random.default_rng(seeds["latent"])
    snap_z = sample_latent(np.random.default_rng(seeds["snapshot"]), config.snapshot_samples)

    lab_x, lab_y = data.labeled_x, data.labeled_y
    pool = data.unlabeled_x()
    bs = config.batch_size
    steps = config.steps_per_epoch or math.ceil(n_train / bs)
    history = TrainHistory()

    def snapshot(epoch):
        if epoch in config.snapshot_epochs and g is not None and len(snap_z):
            fakes = g.forward(snap_z)
            _clear(g)
            history.snapshots.append(FakeSnapshot(epoch, fakes, predict_batches(d, fakes)))

    snapshot(0)
    labeled_cycle = None
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        if labeled_cycle is None:
            labeled_cycle = _Cycler(len(lab_x), bs, np.random.default_rng([config.seed, 0, len(lab_x)]))
        order = rng.permutation(n_train)
        c_losses, d_losses, g_losses = [], [], []

        def c_step():
            idx = labeled_cycle.next()
            c_losses.append(train_classifier_step(d, LabeledBatch(lab_x[idx], lab_y[idx]), opt_c))

        def d_step(s):
            sel = order[(s * bs) % n_train :][:bs]
            if len(sel) < bs:  # wrap around the pool
                sel = np.concatenate([sel, order[: bs - len(sel)]])
            d_losses.append(train_discriminator_step(d, UnlabeledBatch(pool[sel]), g, opt_d, latent_rng))

        def g_step():
            g_losses.append(train_generator_step(g, d, opt_g, latent_rng, bs))

        if config.cnn_only:
            for _ in range(steps):
                c_step()
        elif config.schedule == "interleaved":
            for s in range(steps):
                c_step()
                d_step(s)
                g_step()
        else:
            for _ in range(steps):
                c_step()
            for s in range(steps):
                d_step(s)
            for _ in range(steps):
                g_step()

        if epoch % config.eval_every == 0 or epoch == config.epochs:
            acc = evaluate_accuracy(d, data.test_x, data.test_y)
        else:
            acc = float("nan")
        rec = EpochRecord(epoch, _mean(c_losses), _mean(d_losses), _mean(g_losses), acc)
        history.records.append(rec)
        log.info("epoch %d: c=%.4f d=%.4f g=%.4f acc=%.2f%%", epoch, rec.c_loss, rec.d_loss, rec.g_loss, acc)
        snapshot(epoch)
    return g, d, history


def _mean(xs) -> float:
    return float(np.mean(xs)) if xs else 0.0


def _clear(net):
    for layer in net.net.layers:
        layer._cache = None
