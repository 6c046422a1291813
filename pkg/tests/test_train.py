import math

import numpy as np
import pytest

import qvit.train
from qvit import data as data_mod
from qvit import model as mm
from qvit import train as tr
from qvit.model import ModelConfig
from qvit.train import TrainConfig


class TestBceLoss:
    def test_half_probability(self):
        loss, _ = tr.bce_loss(0.5, 1)
        assert loss == pytest.approx(math.log(2.0))
        loss, _ = tr.bce_loss(0.5, 0)
        assert loss == pytest.approx(math.log(2.0))

    def test_clamped_perfect_prediction(self):
        loss, _ = tr.bce_loss(1.0, 1)
        assert loss == pytest.approx(1e-7, rel=1e-6)

    def test_gradient_matches_finite_difference(self):
        step = 1e-7
        _, grad = tr.bce_loss(0.3, 1)
        fd = (tr.bce_loss(0.3 + step, 1)[0] - tr.bce_loss(0.3 - step, 1)[0]) / (
            2 * step
        )
        assert grad == pytest.approx(fd, rel=1e-6)

    def test_finite_at_extremes(self):
        for y_hat in (0.0, 1.0):
            for y in (0, 1):
                loss, grad = tr.bce_loss(y_hat, y)
                assert math.isfinite(loss) and math.isfinite(grad)
                assert loss >= 0.0


class TestAdam:
    def make(self, rng):
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
        return params, tr.AdamState.zeros_like(params)

    def test_zero_gradient_keeps_params(self):
        rng = np.random.default_rng(0)
        params, state = self.make(rng)
        before = {k: v.copy() for k, v in params.items()}
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        tr.adam_step(params, grads, state, TrainConfig(), 1)
        for k in params:
            np.testing.assert_array_equal(params[k], before[k])

    def test_first_step_is_signed_learning_rate(self):
        # with bias correction, |m_hat / sqrt(v_hat)| = 1 elementwise at t=1
        rng = np.random.default_rng(1)
        params, state = self.make(rng)
        before = {k: v.copy() for k, v in params.items()}
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        config = TrainConfig(learning_rate=1e-3)
        tr.adam_step(params, grads, state, config, 1)
        for k in params:
            delta = params[k] - before[k]
            np.testing.assert_allclose(
                delta, -config.learning_rate * np.sign(grads[k]), rtol=1e-6
            )

    def test_deterministic_across_runs(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(2)
            params, state = self.make(rng)
            for t in range(1, 4):
                grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
                tr.adam_step(params, grads, state, TrainConfig(), t)
            results.append(params)
        for k in results[0]:
            np.testing.assert_array_equal(results[0][k], results[1][k])

    def test_shape_mismatch_rejected(self):
        params = {"a": np.zeros(3)}
        state = tr.AdamState.zeros_like(params)
        with pytest.raises(ValueError):
            tr.adam_step(params, {"a": np.zeros(4)}, state, TrainConfig(), 1)


def brute_force_auc(scores, labels):
    """Every positive/negative pair; ties count one half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert tr.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert tr.roc_auc([0.4, 0.4, 0.4, 0.4], [0, 1, 0, 1]) == 0.5

    def test_worked_example(self):
        # pairwise: (0.35 vs 0.1)=1, (0.35 vs 0.4)=0, (0.8 vs 0.1)=1,
        # (0.8 vs 0.4)=1 -> 3/4
        assert tr.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(4, 51))
            scores = rng.choice([0.1, 0.25, 0.5, 0.6, 0.9], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert tr.roc_auc(scores, labels) == pytest.approx(
                brute_force_auc(scores, labels), abs=1e-15
            )

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            tr.roc_auc([0.1, 0.9], [1, 1])


class TestAccuracy:
    def test_perfect(self):
        assert tr.accuracy([0.9, 0.1], [1, 0]) == 1.0

    def test_inverted(self):
        assert tr.accuracy([0.1, 0.9], [1, 0]) == 0.0

    def test_half(self):
        assert tr.accuracy([0.9, 0.9], [1, 0]) == 0.5


class TestGradCheckReport:
    def test_corrupted_gradient_fails(self, monkeypatch):
        config = ModelConfig(
            image_size=8, channels=3, patch_size=4, projection_dim=4,
            dropout_rate=0.0,
        )
        rng = np.random.default_rng(4)
        params = mm.init_params(config, rng)
        sample = (np.abs(rng.normal(size=(8, 8, 3))), 0.2, 0.7, 0)

        true_backward = mm.model_backward

        def corrupted(trace, d_prob):
            grads = true_backward(trace, d_prob)
            grads["embed.cls"] = grads["embed.cls"].copy()
            grads["embed.cls"][0] += 1e-2
            return grads

        monkeypatch.setattr(qvit.train.model_mod, "model_backward", corrupted)
        report = tr.grad_check(params, config, sample)
        assert not report.passed
        assert report.group_errors["embed.cls"] > 1e-4


def tiny_dataset(n=40, seed=0):
    """Small but linearly separable on the aux features."""
    imgs, aux, labels = data_mod.generate_samples(n, 8, seed=seed)
    scaling = data_mod.fit_minmax(aux.astype(float))
    aux_scaled = data_mod.apply_minmax(aux.astype(float), scaling)
    return imgs.astype(float), aux_scaled, labels


class TestTrainLoop:
    def make_setup(self, kind="classical", seed=1):
        config = ModelConfig(
            image_size=8, channels=3, patch_size=4, projection_dim=4,
            dropout_rate=0.1, attention_kind=kind,
        )
        params = mm.init_params(config, np.random.default_rng(seed))
        return config, params

    def test_smoke_run_record_count(self):
        config, params = self.make_setup()
        images, aux, labels = tiny_dataset()
        tc = TrainConfig(epochs=2, batch_size=8, seed=3, dropout_rate=0.1)
        records, best = tr.train_loop(
            params, config, tc,
            (images[:30], aux[:30], labels[:30]),
            (images[30:], aux[30:], labels[30:]),
        )
        assert len(records) == 4  # 2 epochs x (train, val)
        assert [r.split for r in records] == ["train", "val", "train", "val"]
        assert set(best) == set(params)

    def test_seed_determinism(self):
        runs = []
        for _ in range(2):
            config, params = self.make_setup(seed=5)
            images, aux, labels = tiny_dataset()
            tc = TrainConfig(epochs=2, batch_size=8, seed=9, dropout_rate=0.1)
            records, _ = tr.train_loop(
                params, config, tc,
                (images[:30], aux[:30], labels[:30]),
                (images[30:], aux[30:], labels[30:]),
            )
            runs.append(tr.format_metrics_csv(records))
        assert runs[0] == runs[1]

    def test_loss_decreases_on_separable_toy_set(self):
        config, params = self.make_setup()
        images, aux, labels = tiny_dataset(60, seed=2)
        tc = TrainConfig(
            epochs=5, batch_size=8, learning_rate=3e-3, seed=7, dropout_rate=0.0
        )
        records, _ = tr.train_loop(
            params, config, tc,
            (images[:48], aux[:48], labels[:48]),
            (images[48:], aux[48:], labels[48:]),
        )
        train_losses = [r.loss for r in records if r.split == "train"]
        assert train_losses[-1] < train_losses[0]

    def test_best_checkpoint_tracks_validation_auc(self):
        config, params = self.make_setup()
        images, aux, labels = tiny_dataset(40, seed=3)
        tc = TrainConfig(epochs=3, batch_size=8, seed=11, dropout_rate=0.1)
        records, best = tr.train_loop(
            params, config, tc,
            (images[:30], aux[:30], labels[:30]),
            (images[30:], aux[30:], labels[30:]),
        )
        best_epoch_auc = max(r.auc for r in records if r.split == "val")
        eff = tr.evaluate(
            best, config, (images[30:], aux[30:], labels[30:]), 0, "val"
        )
        assert eff.auc == pytest.approx(best_epoch_auc, abs=1e-12)


class TestMetricsCsv:
    def test_schema_and_formatting(self):
        records = [
            tr.MetricsRecord(1, "train", 0.5, 0.75, 0.8123456),
            tr.MetricsRecord(1, "val", 0.25, 1.0, 1.0),
        ]
        text = tr.format_metrics_csv(records)
        lines = text.splitlines()
        assert lines[0] == "epoch,split,loss,accuracy,auc"
        assert lines[1] == "1,train,0.500000,0.750000,0.812346"
        assert lines[2] == "1,val,0.250000,1.000000,1.000000"
