import unittest
import numpy as np
from spinsim.hamiltonian import (
    Boundary,
    HamiltonianSpec,
    ModelKind,
    TransverseFieldIsing,
    apply_hamiltonian,
    basis_spins,
)
from utils.exceptions import ValidationError


def nnn(n_sites, j2=0.0, h=0.0):
    return HamiltonianSpec(model=ModelKind.NNN_TFIM, n_sites=n_sites, boundary=Boundary.PERIODIC, j2=j2, h=h)


def lr(n_sites, alpha=1.0, h=0.0):
    return HamiltonianSpec(model=ModelKind.LR_TFIM, n_sites=n_sites, boundary=Boundary.OPEN, alpha=alpha, h=h)


def all_up(n_sites):
    v = np.zeros(2**n_sites)
    v[-1] = 1.0
    return v


class TestHamiltonianSpec(unittest.TestCase):
    def test_nnn_requires_periodic_boundary(self):
        with self.assertRaises(ValueError):
            HamiltonianSpec(model=ModelKind.NNN_TFIM, n_sites=4, boundary=Boundary.OPEN, j2=0.5, h=1.0)

    def test_lr_requires_alpha(self):
        with self.assertRaises(ValueError):
            HamiltonianSpec(model=ModelKind.LR_TFIM, n_sites=4, boundary=Boundary.OPEN, h=1.0)

    def test_nnn_rejects_two_sites_with_j2(self):
        with self.assertRaises(ValueError):
            nnn(2, j2=0.5)

    def test_j2_range(self):
        with self.assertRaises(ValueError):
            nnn(4, j2=1.5)

    def test_with_values_validates(self):
        spec = nnn(4, j2=0.2, h=1.0)
        self.assertEqual(spec.with_values(h=0.5).h, 0.5)
        with self.assertRaises(ValueError):
            spec.with_values(h=-1.0)


class TestApplyHamiltonian(unittest.TestCase):
    def test_basis_convention(self):
        spins = basis_spins(3)
        np.testing.assert_array_equal(spins[0], [-1, -1, -1])
        np.testing.assert_array_equal(spins[1], [1, -1, -1])
        np.testing.assert_array_equal(spins[7], [1, 1, 1])

    def test_two_site_periodic_double_counts_bond(self):
        dense = TransverseFieldIsing(nnn(2)).to_dense()
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(dense)), [-2, -2, 2, 2], atol=1e-12)

    def test_three_site_ferromagnet(self):
        v = all_up(3)
        np.testing.assert_allclose(apply_hamiltonian(nnn(3), v), -3.0 * v)

    def test_long_range_pair_sum(self):
        v = all_up(3)
        np.testing.assert_allclose(apply_hamiltonian(lr(3, alpha=1.0), v), -2.5 * v)

    def test_single_site_field(self):
        dense = TransverseFieldIsing(nnn(1, h=1.0)).to_dense()
        np.testing.assert_allclose(dense, [[0.0, 1.0], [1.0, 0.0]])

    def test_dimension_mismatch(self):
        with self.assertRaises(ValidationError):
            apply_hamiltonian(nnn(3), np.ones(4))

    def test_linear_and_symmetric(self):
        rng = np.random.default_rng(0)
        for spec in (nnn(6, j2=0.4, h=0.7), lr(6, alpha=1.5, h=2.0)):
            u, v = rng.standard_normal((2, 2**6))
            a, b = rng.standard_normal(2)
            np.testing.assert_allclose(
                apply_hamiltonian(spec, a * u + b * v),
                a * apply_hamiltonian(spec, u) + b * apply_hamiltonian(spec, v),
                atol=1e-12,
            )
            self.assertAlmostEqual(u @ apply_hamiltonian(spec, v), apply_hamiltonian(spec, u) @ v, delta=1e-12)

    def test_global_flip_symmetry(self):
        dense = TransverseFieldIsing(lr(4, alpha=2.0, h=0.3)).to_dense()
        flip = np.arange(16)[::-1]
        np.testing.assert_allclose(dense[np.ix_(flip, flip)], dense)

    def test_dense_limit(self):
        with self.assertRaises(ValidationError):
            TransverseFieldIsing(nnn(13, j2=0.1, h=1.0)).to_dense()


if __name__ == "__main__":
    unittest.main()
