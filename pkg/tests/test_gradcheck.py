import unittest
import numpy as np
from autodiff.gradcheck import finite_difference_check
from autodiff.layers import LayerKind, LayerSpec
from autodiff.network import Sequential
from models.config import ModelConfig, ModelVariant
from models.decoder import AutoregressiveDecoder
from models.encoder import Encoder
from models.vae import SpinVAE
from objective.total import objective_closure
from objective.weights import WEIGHT_PRESETS
from utils.exceptions import ValidationError

TOLERANCE = 1e-4


def full_objective_report(seed, variant=ModelVariant.CPVAE, n_sites=8, batch=16, max_entries=12):
    model = SpinVAE(ModelConfig(n_sites=n_sites, variant=variant), seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.choice([-1.0, 1.0], size=(batch, n_sites))
    epsilon = rng.standard_normal((batch, model.latent_dim))
    weights = WEIGHT_PRESETS["nnn"].weights()
    arguments = (model, x, weights, 0.15, batch, epsilon)
    return finite_difference_check(
        objective_closure(*arguments),
        objective_closure(*arguments, backward=True),
        model.parameters(),
        max_entries_per_parameter=max_entries,
        seed=seed,
    )


class TestFiniteDifferenceCheck(unittest.TestCase):
    def test_full_cpvae_objective(self):
        for seed in range(3):
            report = full_objective_report(seed)
            self.assertLessEqual(report.max_relative_error, TOLERANCE, report)
            self.assertGreater(report.entries_checked, 100)

    def test_full_dvae_objective(self):
        report = full_objective_report(0, variant=ModelVariant.DVAE)
        self.assertLessEqual(report.max_relative_error, TOLERANCE, report)

    def test_encoder_stack(self):
        encoder = Encoder(ModelConfig(n_sites=8), np.random.default_rng(1))
        rng = np.random.default_rng(2)
        x = rng.choice([-1.0, 1.0], size=(4, 8))
        w_mu, w_log_var = rng.standard_normal((2, 4, 5))

        def loss():
            mu, log_var, _ = encoder.forward(x)
            return float(np.sum(mu * w_mu) + np.sum(log_var * w_log_var))

        def loss_and_backward():
            mu, log_var, tape = encoder.forward(x)
            encoder.backward(tape, w_mu, w_log_var)
            return float(np.sum(mu * w_mu) + np.sum(log_var * w_log_var))

        report = finite_difference_check(loss, loss_and_backward, encoder.parameters(), max_entries_per_parameter=20)
        self.assertLessEqual(report.max_relative_error, TOLERANCE)

    def test_decoder_stack(self):
        decoder = AutoregressiveDecoder(ModelConfig(n_sites=8), np.random.default_rng(3))
        rng = np.random.default_rng(4)
        z = rng.standard_normal((4, 5))
        x = rng.choice([-1.0, 1.0], size=(4, 8))
        w = rng.standard_normal((4, 8))

        def loss():
            return float(np.sum(decoder.forward(z, x)[0] * w))

        def loss_and_backward():
            p, tape = decoder.forward(z, x)
            decoder.backward(tape, w)
            return float(np.sum(p * w))

        report = finite_difference_check(loss, loss_and_backward, decoder.parameters(), max_entries_per_parameter=20)
        self.assertLessEqual(report.max_relative_error, TOLERANCE)

    def test_dead_relu_units_have_zero_gradient(self):
        specs = [
            LayerSpec(kind=LayerKind.DENSE, name="a", in_features=3, out_features=4),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(kind=LayerKind.DENSE, name="b", in_features=4, out_features=1),
        ]
        network = Sequential.from_specs(specs, np.random.default_rng(0))
        for parameter in network.parameters():
            parameter.value[...] = 0.0
        x = np.ones((2, 3))

        def loss():
            return float(network.forward(x)[0].sum())

        def loss_and_backward():
            y, tapes = network.forward(x)
            network.backward(tapes, np.ones_like(y))
            return float(y.sum())

        report = finite_difference_check(loss, loss_and_backward, network.parameters())
        self.assertLessEqual(report.max_relative_error, 1e-8)
        np.testing.assert_array_equal(network.parameters()[0].grad, np.zeros((3, 4)))

    def test_subsampling_counts_entries(self):
        report = full_objective_report(0, n_sites=4, batch=4, max_entries=2)
        model = SpinVAE(ModelConfig(n_sites=4))
        self.assertEqual(report.entries_checked, sum(min(p.value.size, 2) for p in model.parameters()))

    def test_step_must_be_positive(self):
        with self.assertRaises(ValidationError):
            finite_difference_check(lambda: 0.0, lambda: 0.0, [], step=0.0)


if __name__ == "__main__":
    unittest.main()
