import os
import tempfile
import unittest
import numpy as np
from analysis.latent import SWEEP_COLUMNS, latent_phase_map, latent_sweep_generate, variance_entropy_relation
from analysis.phase_map import PhaseMap, map_mean_absolute_error, map_over_grid, map_pearson
from analysis.reconstruction import reconstruction_map, training_data_map
from models.config import ModelConfig, ModelVariant
from models.vae import SpinVAE, zero_model
from spinsim.dataset import GridDataset
from spinsim.hamiltonian import Boundary
from utils.exceptions import ArtifactIOError, ValidationError


def ordered_grid(n_sites=6, samples=10):
    """Ferromagnetic rows on the first axis value, Neel rows on the second."""
    neel = np.tile(np.array([1, -1], dtype=np.int8), n_sites // 2)
    records = {}
    for a, row in ((0.0, np.ones(n_sites, dtype=np.int8)), (1.0, neel)):
        for b in (0.5, 1.5, 2.5):
            records[(a, b)] = np.tile(row, (samples, 1))
    return GridDataset(
        n_sites=n_sites,
        boundary=Boundary.PERIODIC,
        axis1_name="j2",
        axis2_name="h",
        axis1=[0.0, 1.0],
        axis2=[0.5, 1.5, 2.5],
        records=records,
        samples_per_point=samples,
    )


class TestPhaseMap(unittest.TestCase):
    def test_shape_checked(self):
        with self.assertRaises(ValidationError):
            PhaseMap([0.0, 1.0], [0.0], np.zeros((1, 2)), "x")

    def test_csv_round_trip_keeps_nan(self):
        values = np.array([[1.0, np.nan], [0.25, -2.0]])
        phase_map = PhaseMap([0.0, 0.5], [1.0, 2.0], values, "zz2")
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "map.csv")
            phase_map.write_csv(path)
            loaded = PhaseMap.read_csv(path)
        np.testing.assert_array_equal(loaded.axis1, [0.0, 0.5])
        np.testing.assert_array_equal(loaded.values, values)
        self.assertEqual(loaded.label, "zz2")

    def test_read_rejects_other_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "other.csv")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("a,b\n1,2\n")
            with self.assertRaises(ArtifactIOError):
                PhaseMap.read_csv(path)

    def test_error_and_correlation(self):
        a = PhaseMap([0.0, 1.0], [0.0, 1.0], [[0.0, 1.0], [2.0, np.nan]], "a")
        b = PhaseMap([0.0, 1.0], [0.0, 1.0], [[1.0, 1.0], [4.0, 3.0]], "b")
        self.assertAlmostEqual(map_mean_absolute_error(a, b), 1.0)
        self.assertAlmostEqual(map_mean_absolute_error(a, b, mask=[[False, True], [True, True]]), 1.0)
        self.assertAlmostEqual(map_pearson(a, b), np.corrcoef([0.0, 1.0, 2.0], [1.0, 1.0, 4.0])[0, 1])
        flat = PhaseMap([0.0, 1.0], [0.0, 1.0], np.ones((2, 2)), "flat")
        self.assertTrue(np.isnan(map_pearson(flat, b)))
        with self.assertRaises(ValidationError):
            map_mean_absolute_error(a, b, mask=np.zeros((2, 2), dtype=bool))


class TestGridMaps(unittest.TestCase):
    def setUp(self):
        self.dataset = ordered_grid()

    def test_map_over_grid_is_row_major(self):
        phase_map = map_over_grid(self.dataset, lambda batch, index: float(index), "index", threads=3)
        np.testing.assert_array_equal(phase_map.values, [[0, 1, 2], [3, 4, 5]])
        self.assertEqual((phase_map.axis1_name, phase_map.axis2_name), ("j2", "h"))

    def test_training_data_map(self):
        zz1 = training_data_map(self.dataset, "zz1")
        np.testing.assert_array_equal(zz1.values, [[1.0] * 3, [-1.0] * 3])
        self.assertEqual(zz1.label, "data_zz1")
        magnetization = training_data_map(self.dataset, "magnetization", threads=2)
        np.testing.assert_array_equal(magnetization.values, [[1.0] * 3, [0.0] * 3])

    def test_dvae_zero_model_reconstructs_all_up(self):
        model = zero_model(ModelConfig(n_sites=6, variant=ModelVariant.DVAE))
        phase_map = reconstruction_map(model, self.dataset, "magnetization")
        np.testing.assert_array_equal(phase_map.values, np.ones((2, 3)))
        self.assertEqual(phase_map.label, "dvae_magnetization")

    def test_reconstruction_is_seeded(self):
        model = SpinVAE(ModelConfig(n_sites=6), seed=3)
        first = reconstruction_map(model, self.dataset, "zz2", seed=5)
        second = reconstruction_map(model, self.dataset, "zz2", seed=5, threads=4)
        np.testing.assert_array_equal(first.values, second.values)
        self.assertTrue(np.all(np.abs(first.values) <= 1.0))


class TestLatentAnalysis(unittest.TestCase):
    def setUp(self):
        self.dataset = ordered_grid()

    def test_latent_phase_map_of_zero_model(self):
        maps = latent_phase_map(zero_model(ModelConfig(n_sites=6)), self.dataset, dimensions=[0, 3])
        self.assertEqual(set(maps), {"mu_0", "abs_mu_0", "sigma_0", "mu_3", "abs_mu_3", "sigma_3"})
        np.testing.assert_array_equal(maps["sigma_3"].values, np.ones((2, 3)))
        np.testing.assert_array_equal(maps["mu_0"].values, np.zeros((2, 3)))

    def test_latent_phase_map_separates_constant_points(self):
        maps = latent_phase_map(SpinVAE(ModelConfig(n_sites=6), seed=2), self.dataset)
        self.assertEqual(len(maps), 15)
        mu = maps["mu_0"].values
        np.testing.assert_allclose(mu[0], mu[0, 0])
        np.testing.assert_allclose(mu[1], mu[1, 0])

    def test_latent_dimension_out_of_range(self):
        with self.assertRaises(ValidationError):
            latent_phase_map(zero_model(ModelConfig(n_sites=6)), self.dataset, dimensions=[5])

    def test_saturated_decoder_sweep(self):
        model = zero_model(ModelConfig(n_sites=6))
        model.decoder.dense[-1].bias.assign(np.full(6, 50.0))
        frame = latent_sweep_generate(model, 1, np.linspace(-2, 2, 3), count=50, seed=0, active_dimensions=[0])
        self.assertEqual(list(frame.columns), SWEEP_COLUMNS)
        self.assertEqual(len(frame), 3)
        np.testing.assert_array_equal(frame["magnetization"], np.ones(3))
        np.testing.assert_array_equal(frame["nn_correlator"], np.ones(3))
        np.testing.assert_allclose(frame["beta"], np.zeros(3), atol=1e-9)
        self.assertTrue(frame["passive"].all())

    def test_two_dimensional_sweep(self):
        model = SpinVAE(ModelConfig(n_sites=6), seed=4)
        frame = latent_sweep_generate(model, 0, [-1.0, 1.0], count=20, seed=1, second_dimension=2, second_values=[0.0, 0.5, 1.0])
        self.assertEqual(len(frame), 6)
        self.assertEqual(frame["dimension2"].unique().tolist(), [2])
        self.assertFalse(frame["passive"].any())
        again = latent_sweep_generate(model, 0, [-1.0, 1.0], count=20, seed=1, second_dimension=2, second_values=[0.0, 0.5, 1.0])
        np.testing.assert_array_equal(frame["magnetization"], again["magnetization"])

    def test_sweep_rejects_bad_dimensions(self):
        model = SpinVAE(ModelConfig(n_sites=6), seed=4)
        with self.assertRaises(ValidationError):
            latent_sweep_generate(model, 7, [0.0], count=5, seed=0)
        with self.assertRaises(ValidationError):
            latent_sweep_generate(model, 1, [0.0], count=5, seed=0, second_dimension=1, second_values=[0.0])

    def test_variance_entropy_relation_of_zero_model(self):
        table, slopes = variance_entropy_relation(zero_model(ModelConfig(n_sites=6)), self.dataset, max_per_point=4)
        self.assertEqual(len(table), 6 * 4)
        self.assertEqual(list(table.columns[:3]), ["axis1", "axis2", "spectral_entropy"])
        np.testing.assert_allclose(table["spectral_entropy"], np.zeros(24), atol=1e-12)
        np.testing.assert_allclose(slopes[["slope", "intercept"]].to_numpy(), np.zeros((5, 2)), atol=1e-12)

    def test_variance_entropy_needs_positive_count(self):
        with self.assertRaises(ValidationError):
            variance_entropy_relation(zero_model(ModelConfig(n_sites=6)), self.dataset, max_per_point=0)


if __name__ == "__main__":
    unittest.main()
