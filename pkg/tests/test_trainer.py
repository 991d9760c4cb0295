import math
from dataclasses import replace

import numpy as np
import pytest

from csigan.dataset import normalize, select_labeled_subset, synth_generate
from csigan.models import build_discriminator, build_generator, build_simplified_generator, discriminate
from csigan.tensor_engine import ConfigurationError
from csigan.trainer import (
    AdamConfig,
    LabeledBatch,
    TrainConfig,
    TrainHistory,
    UnlabeledBatch,
    _seeds,
    sample_latent,
    train,
    train_classifier_step,
    train_discriminator_step,
    train_generator_step,
)


@pytest.fixture(scope="module")
def small():
    """16 separable classes (white noise only), 10 train and 10 test samples each."""
    return normalize(synth_generate(train_per_class=10, test_per_class=10, seed=3, drift_sigma=0.0))


def fixed_logit_net(bias):
    d = build_discriminator(0)
    d.out_fc.weights[...] = 0.0
    d.out_fc.bias[...] = bias
    return d


def bce(q, t):
    return float(np.mean(-(t * np.log(q) + (1 - t) * np.log(1 - q))))


class TestClassifierStep:
    def test_initial_loss_near_log16(self, small):
        d = build_discriminator(4)
        loss = train_classifier_step(d, LabeledBatch(small.train_x[:64], small.train_y[:64]), AdamConfig().new_state(d.params()))
        assert loss == pytest.approx(math.log(16), abs=0.3)

    def test_confident_correct_is_a_fixed_point(self, small):
        bias = np.zeros(16)
        bias[4] = 60.0
        d = fixed_logit_net(bias)
        before = d.snapshot()
        y = np.full(8, 5)
        loss = train_classifier_step(d, LabeledBatch(small.train_x[:8], y), AdamConfig(1e-3, 0.9).new_state(d.params()))
        assert 0 <= loss <= 1.1e-7
        for a, b in zip(before, d.params()):
            np.testing.assert_array_equal(a, b)

    def test_loss_trends_down(self, small):
        d = build_discriminator(1)
        state = AdamConfig(1e-3, 0.9).new_state(d.params())
        x, y = small.train_x[::5], small.train_y[::5]
        losses = [train_classifier_step(d, LabeledBatch(x, y), state) for _ in range(50)]
        assert np.mean(losses[-10:]) < 0.5 * np.mean(losses[:10])

    def test_empty_batch_is_a_warned_noop(self, caplog):
        d = build_discriminator(0)
        before = d.snapshot()
        state = AdamConfig().new_state(d.params())
        loss = train_classifier_step(d, LabeledBatch(np.zeros((0, 120)), np.zeros(0, int)), state)
        assert math.isnan(loss) and state.t == 0
        assert "empty labeled batch" in caplog.text
        for a, b in zip(before, d.params()):
            np.testing.assert_array_equal(a, b)

    def test_changes_lambda_head(self, small):
        d = build_discriminator(2)
        probe = small.test_x[:3]
        q0 = discriminate(d, probe)
        train_classifier_step(d, LabeledBatch(small.train_x[:16], small.train_y[:16]), AdamConfig().new_state(d.params()))
        assert not np.array_equal(q0, discriminate(d, probe))


class TestDiscriminatorStep:
    def test_half_probability_gives_log2(self, small):
        d = fixed_logit_net(-math.log(16))  # Z = 1 so q = 1/2 on every input
        g = build_generator(0)
        loss = train_discriminator_step(d, UnlabeledBatch(small.train_x[:6]), g, AdamConfig().new_state(d.params()),
                                        np.random.default_rng(0))
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_generator_untouched_and_one_to_one(self, small):
        d, g = build_discriminator(1), build_generator(2)
        g_before = g.snapshot()
        seen = []
        forward = d.forward
        d.forward = lambda x: seen.append(len(x)) or forward(x)
        train_discriminator_step(d, UnlabeledBatch(small.train_x[:7]), g, AdamConfig().new_state(d.params()),
                                 np.random.default_rng(0))
        assert seen == [14]
        for a, b in zip(g_before, g.params()):
            np.testing.assert_array_equal(a, b)

    def test_loss_matches_recomputation(self, small):
        d, g = build_discriminator(5), build_generator(6)
        real = small.train_x[:5]
        fake = g.forward(sample_latent(np.random.default_rng(9), 5))
        q = discriminate(d, np.concatenate([real, fake]))
        expected = bce(q, np.r_[np.ones(5), np.zeros(5)])
        loss = train_discriminator_step(d, UnlabeledBatch(real), g, AdamConfig().new_state(d.params()),
                                        np.random.default_rng(9))
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_batch_has_no_labels(self):
        assert not hasattr(UnlabeledBatch(np.zeros((1, 120))), "y")


class TestGeneratorStep:
    def test_discriminator_untouched(self):
        d, g = build_discriminator(1), build_generator(2)
        d_before = d.snapshot()
        train_generator_step(g, d, AdamConfig().new_state(g.params()), np.random.default_rng(0), 4)
        for a, b in zip(d_before, d.params()):
            np.testing.assert_array_equal(a, b)
        assert all(not np.any(gr) for gr in d.grads())

    def test_no_gradient_when_fakes_already_real(self):
        d = fixed_logit_net(60.0)
        g = build_generator(3)
        before = g.snapshot()
        loss = train_generator_step(g, d, AdamConfig().new_state(g.params()), np.random.default_rng(0), 4)
        assert loss <= 1.1e-7
        for a, b in zip(before, g.params()):
            np.testing.assert_array_equal(a, b)

    def test_loss_trends_down_against_frozen_d(self):
        d, g = build_discriminator(7), build_generator(8)
        state = AdamConfig(1e-3).new_state(g.params())
        rng = np.random.default_rng(0)
        losses = [train_generator_step(g, d, state, rng, 8) for _ in range(100)]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])


def tiny_config(**kw):
    base = TrainConfig(epochs=2, batch_size=16, labeled_per_class=1, seed=0, steps_per_epoch=3)
    return replace(base, **kw)


class TestTrain:
    def test_one_epoch_one_record(self, small):
        _, _, h = train(tiny_config(epochs=1), small)
        assert [r.epoch for r in h.records] == [1]

    @pytest.mark.parametrize(
        "kw",
        [
            dict(epochs=0),
            dict(batch_size=0),
            dict(labeled_per_class=11),
            dict(simplified_g=True, cnn_only=True),
            dict(schedule="sideways"),
            dict(snapshot_epochs=(3,)),
            dict(adam_c=AdamConfig(lr=0.0)),
            dict(adam_g=AdamConfig(beta1=1.0)),
        ],
    )
    def test_bad_config_rejected_before_training(self, small, kw):
        with pytest.raises(ConfigurationError):
            train(tiny_config(**kw), small)

    def test_deterministic(self, small):
        g1, d1, h1 = train(tiny_config(), small)
        g2, d2, h2 = train(tiny_config(), small)
        assert h1.records == h2.records
        for a, b in zip(g1.params() + d1.params(), g2.params() + d2.params()):
            np.testing.assert_array_equal(a, b)

    def test_losses_finite(self, small):
        _, _, h = train(tiny_config(epochs=3), small)
        for r in h.records:
            assert all(np.isfinite([r.c_loss, r.d_loss, r.g_loss, r.test_accuracy]))

    def test_labels_outside_subset_are_never_read(self, small):
        data = select_labeled_subset(small, 2, 0)
        mask = np.ones(len(data.train_y), bool)
        mask[data.labeled_idx] = False
        scrambled_y = data.train_y.copy()
        scrambled_y[mask] = np.random.default_rng(0).permutation(scrambled_y[mask])
        other = replace(data, train_y=scrambled_y)
        assert not np.array_equal(other.train_y, data.train_y)
        _, _, h1 = train(tiny_config(labeled_per_class=2), data)
        _, _, h2 = train(tiny_config(labeled_per_class=2), other)
        assert h1.records == h2.records

    def test_cnn_only_has_no_generator(self, small):
        g, _, h = train(tiny_config(cnn_only=True), small)
        assert g is None
        assert all(r.d_loss == 0.0 and r.g_loss == 0.0 for r in h.records)

    def test_simplified_generator_used(self, small):
        g, _, _ = train(tiny_config(simplified_g=True, epochs=1), small)
        assert g.kind == "simplified_generator"

    def test_phased_schedule(self, small):
        _, _, h = train(tiny_config(schedule="phased"), small)
        assert len(h.records) == 2 and np.isfinite(h.records[-1].g_loss)

    def test_epoch0_snapshot_is_untrained(self, small):
        cfg = tiny_config(snapshot_epochs=(0, 2), snapshot_samples=4)
        g0 = build_generator(_seeds(cfg.seed)["g_init"])
        g, _, h = train(cfg, small)
        assert [s.epoch for s in h.snapshots] == [0, 2]
        z = sample_latent(np.random.default_rng(_seeds(cfg.seed)["snapshot"]), 4)
        np.testing.assert_array_equal(h.snapshots[0].samples, g0.forward(z))
        np.testing.assert_array_equal(h.snapshots[1].samples, g.forward(z))

    def test_cnn_full_labels_learns(self, small):
        cfg = TrainConfig(epochs=100, batch_size=32, labeled_per_class=10, cnn_only=True, eval_every=100)
        _, _, h = train(cfg, small)
        assert h.records[-1].test_accuracy > 95.0

    def test_history_csv_roundtrip(self, small, tmp_path):
        _, _, h = train(tiny_config(), small)
        h.to_csv(tmp_path / "h.csv")
        assert TrainHistory.from_csv(tmp_path / "h.csv").records == h.records

    def test_simplified_generator_builder_seeded(self):
        a, b = build_simplified_generator(1), build_simplified_generator(1)
        np.testing.assert_array_equal(a.params()[0], b.params()[0])
