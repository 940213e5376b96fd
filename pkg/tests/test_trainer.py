import os
import tempfile
import unittest
from unittest.mock import patch
import numpy as np
import pandas as pd
from autodiff.layers import Parameter
from models.config import ModelConfig, ModelVariant
from models.vae import SpinVAE, zero_model
from objective.total import LossBreakdown
from spinsim.dataset import GridDataset
from spinsim.hamiltonian import Boundary
from training.adabelief import AdaBelief, MomentState, adabelief_step
from training.diagnostics import active_latent_neurons, mean_sigma
from training.schedule import gamma_schedule, run_gamma
from training.trainer import TrainConfig, TrainingHistory, Trainer, batch_slices, train
from utils.exceptions import NumericalDivergenceError, ValidationError
from utils.metrics import TrainingMetrics


def random_grid(n_sites=6, samples=8, seed=0, ordered=False):
    rng = np.random.default_rng(seed)
    axis1, axis2 = [0.0, 0.5], [0.5, 1.0]
    records = {
        (a, b): np.ones((samples, n_sites), dtype=np.int8)
        if ordered
        else rng.choice(np.array([-1, 1], dtype=np.int8), size=(samples, n_sites))
        for a in axis1
        for b in axis2
    }
    return GridDataset(
        n_sites=n_sites,
        boundary=Boundary.PERIODIC,
        axis1_name="j2",
        axis2_name="h",
        axis1=axis1,
        axis2=axis2,
        records=records,
        samples_per_point=samples,
    )


class TestAdaBelief(unittest.TestCase):
    def test_first_step_moves_by_lr_over_point_nine(self):
        state = MomentState(np.zeros(1), np.zeros(1))
        theta, state = adabelief_step(np.array([1.0]), np.array([2.0]), state, lr=0.1, step_index=1)
        self.assertAlmostEqual(theta[0], 1.0 - 0.1 / 0.9, places=6)
        self.assertAlmostEqual(state.m[0], 0.2)

    def test_zero_gradient_keeps_parameters(self):
        state = MomentState(np.zeros(3), np.zeros(3))
        theta, _ = adabelief_step(np.ones(3), np.zeros(3), state, lr=0.1, step_index=1)
        np.testing.assert_array_equal(theta, np.ones(3))

    def test_rejects_bad_arguments(self):
        state = MomentState(np.zeros(2), np.zeros(2))
        with self.assertRaises(ValidationError):
            adabelief_step(np.ones(2), np.ones(3), state, lr=0.1, step_index=1)
        with self.assertRaises(ValidationError):
            adabelief_step(np.ones(2), np.ones(2), state, lr=0.1, step_index=0)
        with self.assertRaises(ValidationError):
            AdaBelief([], lr=-1.0)

    def test_minimizes_quadratic(self):
        parameter = Parameter("w", np.array([3.0, -2.0]))
        optimizer = AdaBelief([parameter], lr=0.05)
        for _ in range(500):
            parameter.grad[...] = 2.0 * parameter.value
            optimizer.step()
        self.assertLess(np.abs(parameter.value).max(), 0.5)

    def test_non_finite_update_raises(self):
        parameter = Parameter("w", np.array([1.0]))
        parameter.grad[...] = np.nan
        with self.assertRaises(NumericalDivergenceError):
            AdaBelief([parameter], lr=0.1).step()


class TestGammaSchedule(unittest.TestCase):
    def test_linear_ramp(self):
        self.assertEqual(gamma_schedule(0, 10, 0.1, 0.2), 0.1)
        self.assertAlmostEqual(gamma_schedule(5, 10, 0.1, 0.2), 0.15)
        self.assertEqual(gamma_schedule(10, 10, 0.1, 0.2), 0.2)

    def test_constant_when_bounds_equal(self):
        self.assertEqual(gamma_schedule(3, 7, 1.0, 1.0), 1.0)

    def test_out_of_range(self):
        with self.assertRaises(ValidationError):
            gamma_schedule(11, 10, 0.1, 0.2)
        with self.assertRaises(ValidationError):
            gamma_schedule(0, 0, 0.1, 0.2)

    def test_run_reaches_maximum_on_last_step(self):
        self.assertEqual(run_gamma(0, 5, 0.5, 10.0), 0.5)
        self.assertEqual(run_gamma(4, 5, 0.5, 10.0), 10.0)
        self.assertEqual(run_gamma(0, 1, 0.5, 10.0), 0.5)


class TestTrainConfig(unittest.TestCase):
    def test_from_preset(self):
        config = TrainConfig.from_preset("nnn", epochs=3)
        self.assertEqual((config.gamma_min, config.gamma_max), (0.1, 0.2))
        self.assertEqual(config.weights.beta, 30.0)
        self.assertEqual(config.epochs, 3)

    def test_unknown_preset(self):
        with self.assertRaises(ValidationError):
            TrainConfig.from_preset("ising")

    def test_invalid_values(self):
        with self.assertRaises(ValueError):
            TrainConfig(batch_size=1)
        with self.assertRaises(ValueError):
            TrainConfig(learning_rate=-1e-3)
        with self.assertRaises(ValueError):
            TrainConfig(gamma_min=2.0, gamma_max=1.0)

    def test_batch_slices_drop_single_row_remainder(self):
        self.assertEqual(batch_slices(10, 4), [slice(0, 4), slice(4, 8), slice(8, 10)])
        self.assertEqual(batch_slices(9, 4), [slice(0, 4), slice(4, 8)])
        self.assertEqual(batch_slices(3, 8), [slice(0, 3)])


class TestTrainer(unittest.TestCase):
    def setUp(self):
        self.dataset = random_grid()
        self.config = TrainConfig.from_preset("nnn", epochs=2, batch_size=8, learning_rate=1e-3, seed=3)

    def test_history_columns_and_steps(self):
        _, history = train(SpinVAE(ModelConfig(n_sites=6), seed=1), self.dataset, self.config)
        frame = history.loss_frame()
        self.assertEqual(
            list(frame.columns),
            ["epoch", "step", "reconstruction_nll", "MI", "TC", "dimKL", "gamma_now", "total"],
        )
        self.assertEqual(len(frame), 8)
        self.assertEqual(frame["step"].tolist(), list(range(8)))
        self.assertAlmostEqual(frame["gamma_now"].iloc[0], 0.1)
        self.assertAlmostEqual(frame["gamma_now"].iloc[-1], 0.2)
        self.assertEqual(len(history.sigma_frame()), 2 * 5)
        self.assertEqual(len(history.epoch_means("total")), 2)

    def test_same_seed_same_weights(self):
        a, _ = train(SpinVAE(ModelConfig(n_sites=6), seed=1), self.dataset, self.config)
        b, _ = train(SpinVAE(ModelConfig(n_sites=6), seed=1), self.dataset, self.config)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p.value, q.value)

    def test_zero_learning_rate_leaves_parameters(self):
        model = SpinVAE(ModelConfig(n_sites=6), seed=1)
        before = [p.value.copy() for p in model.parameters()]
        config = TrainConfig.from_preset("nnn", epochs=1, batch_size=8, learning_rate=0.0)
        train(model, self.dataset, config)
        for value, parameter in zip(before, model.parameters()):
            np.testing.assert_array_equal(value, parameter.value)

    def test_training_reduces_reconstruction(self):
        model = SpinVAE(ModelConfig(n_sites=6), seed=1)
        config = TrainConfig(epochs=15, batch_size=8, learning_rate=3e-3, seed=0)
        _, history = train(model, random_grid(ordered=True), config)
        means = history.epoch_means("reconstruction_nll")
        self.assertLess(means[-1], means[0])

    @patch("training.trainer.total_objective")
    def test_non_finite_loss_aborts(self, mock_objective):
        mock_objective.return_value = LossBreakdown(np.nan, 0.0, 0.0, 0.0, np.nan)
        with self.assertRaises(NumericalDivergenceError) as ctx:
            train(SpinVAE(ModelConfig(n_sites=6), seed=1), self.dataset, self.config)
        self.assertEqual(ctx.exception.step, 0)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_site_and_variant_mismatch(self):
        with self.assertRaises(ValidationError):
            train(SpinVAE(ModelConfig(n_sites=5), seed=1), self.dataset, self.config)
        with self.assertRaises(ValidationError):
            Trainer(SpinVAE(ModelConfig(n_sites=6, variant=ModelVariant.DVAE)), self.config)

    def test_dvae_trains_without_kl_terms(self):
        model = SpinVAE(ModelConfig(n_sites=6, variant=ModelVariant.DVAE), seed=1)
        config = TrainConfig(epochs=1, batch_size=8, variant=ModelVariant.DVAE)
        _, history = train(model, self.dataset, config)
        frame = history.loss_frame()
        self.assertTrue(np.all(frame[["MI", "TC", "dimKL", "gamma_now"]].to_numpy() == 0.0))

    def test_writes_history_and_checkpoints(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = TrainConfig.from_preset("nnn", epochs=2, batch_size=8, checkpoint_every=1)
            metrics = TrainingMetrics()
            trainer = Trainer(SpinVAE(ModelConfig(n_sites=6), seed=1), config, out_dir=tmp, metrics=metrics)
            history = trainer.fit(self.dataset)
            loss_path, sigma_path = history.write(tmp)
            self.assertEqual(len(pd.read_csv(loss_path)), 8)
            self.assertEqual(list(pd.read_csv(sigma_path).columns), ["epoch", "dimension", "mean_log_sigma"])
            self.assertTrue(os.path.exists(os.path.join(tmp, "checkpoint.json")))
            self.assertEqual(trainer.last_checkpoint, os.path.join(tmp, "checkpoint"))
            metrics.write(os.path.join(tmp, "metrics.prom"))
            with open(os.path.join(tmp, "metrics.prom"), encoding="utf-8") as handle:
                self.assertIn("cpvae_train_steps_total 8.0", handle.read())

    def test_history_steps_must_increase(self):
        history = TrainingHistory()
        breakdown = LossBreakdown(1.0, 0.0, 0.0, 0.0, 1.0)
        history.record_step(0, 0, breakdown, 0.1)
        with self.assertRaises(ValidationError):
            history.record_step(0, 0, breakdown, 0.1)


class TestDiagnostics(unittest.TestCase):
    def test_untrained_sigma_and_active_units(self):
        model = zero_model(ModelConfig(n_sites=6))
        dataset = random_grid()
        np.testing.assert_allclose(mean_sigma(model, dataset), np.ones(5))
        self.assertEqual(active_latent_neurons(model, dataset), [])
        self.assertEqual(active_latent_neurons(model, dataset, threshold=1.5), [0, 1, 2, 3, 4])


if __name__ == "__main__":
    unittest.main()
