import unittest
import numpy as np
from spinsim.hamiltonian import Boundary, HamiltonianSpec, ModelKind, TransverseFieldIsing
from spinsim.lanczos import GroundStateVector, lanczos_ground_state
from utils.exceptions import ConvergenceError, ValidationError


def nnn(n_sites, j2=0.0, h=0.0):
    return HamiltonianSpec(model=ModelKind.NNN_TFIM, n_sites=n_sites, boundary=Boundary.PERIODIC, j2=j2, h=h)


def lr(n_sites, alpha=1.0, h=0.0):
    return HamiltonianSpec(model=ModelKind.LR_TFIM, n_sites=n_sites, boundary=Boundary.OPEN, alpha=alpha, h=h)


class TestLanczos(unittest.TestCase):
    def test_single_site_field(self):
        state = lanczos_ground_state(nnn(1, h=1.0))
        self.assertAlmostEqual(state.energy, -1.0, places=10)
        expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
        self.assertAlmostEqual(abs(state.amplitudes @ expected), 1.0, places=10)

    def test_two_site_ferromagnet(self):
        self.assertAlmostEqual(lanczos_ground_state(nnn(2)).energy, -2.0, places=10)

    def test_matches_dense_oracle(self):
        for spec in (nnn(10, j2=0.6, h=1.0), lr(8, alpha=2.0, h=1.6), nnn(6, j2=0.0, h=1.0)):
            exact = np.linalg.eigvalsh(TransverseFieldIsing(spec).to_dense())[0]
            state = lanczos_ground_state(spec, seed=3)
            self.assertLessEqual(abs(state.energy - exact) / abs(exact), 1e-8)

    def test_residual_and_norm(self):
        spec = lr(7, alpha=1.2, h=2.5)
        state = lanczos_ground_state(spec, tol=1e-10)
        psi = state.amplitudes
        residual = np.linalg.norm(TransverseFieldIsing(spec).apply(psi) - state.energy * psi)
        self.assertLessEqual(residual, 1e-10)
        self.assertAlmostEqual(np.linalg.norm(psi), 1.0, delta=1e-12)

    def test_deterministic_given_seed(self):
        spec = nnn(8, j2=0.3, h=0.9)
        a = lanczos_ground_state(spec, seed=5)
        b = lanczos_ground_state(spec, seed=5)
        np.testing.assert_array_equal(a.amplitudes, b.amplitudes)

    def test_unique_ground_state_is_flip_symmetric(self):
        state = lanczos_ground_state(nnn(6, j2=0.2, h=1.5))
        p = state.probabilities
        np.testing.assert_allclose(p, p[::-1], atol=1e-10)

    def test_non_convergence(self):
        with self.assertRaises(ConvergenceError) as ctx:
            lanczos_ground_state(nnn(10, j2=0.5, h=1.0), tol=1e-14, max_iter=3, krylov_dim=2)
        self.assertEqual(ctx.exception.iterations, 3)
        self.assertGreater(ctx.exception.residual, 0.0)

    def test_rejects_bad_tolerance(self):
        with self.assertRaises(ValidationError):
            lanczos_ground_state(nnn(3), tol=0.0)

    def test_state_is_read_only(self):
        state = GroundStateVector(amplitudes=np.array([0.6, 0.8]), energy=0.0)
        with self.assertRaises(ValueError):
            state.amplitudes[0] = 1.0


if __name__ == "__main__":
    unittest.main()
