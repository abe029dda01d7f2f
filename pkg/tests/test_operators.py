import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmeaudit.errors import DegenerateSpectrum
from qmeaudit.operators import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    Superoperator,
    build_xxz,
    commutator,
    dissipator_superop,
    eigendecompose,
    gibbs_state,
    hamiltonian_superop,
    random_density_matrix,
    sandwich_superop,
    trace_distance,
    unvectorize,
    vectorize,
)


def _random_matrix(rng, dim):
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def _two_site_reference(w1, w2, g, delta):
    """Hand-written 4x4 XXZ Hamiltonian in the basis |uu>, |ud>, |du>, |dd>."""
    h = np.zeros((4, 4), dtype=complex)
    h[0, 0] = (w1 + w2) / 2 - g * delta
    h[1, 1] = (w1 - w2) / 2 + g * delta
    h[2, 2] = (w2 - w1) / 2 + g * delta
    h[3, 3] = -(w1 + w2) / 2 - g * delta
    h[1, 2] = h[2, 1] = -2 * g
    return h


class TestBuildXXZ:
    def test_single_site(self):
        s = build_xxz(1, [1.0], 0.3)
        np.testing.assert_allclose(s.hamiltonian, SIGMA_Z / 2)
        np.testing.assert_allclose(np.linalg.eigvalsh(s.hamiltonian), [-0.5, 0.5])
        assert np.all(s.h_left == 0) and np.all(s.h_right == 0)

    def test_decoupled_pair(self):
        s = build_xxz(2, [1, 1], 0.0)
        np.testing.assert_allclose(np.linalg.eigvalsh(s.hamiltonian), [-1, 0, 0, 1], atol=1e-14)

    def test_two_site_against_hand_built_matrix(self):
        s = build_xxz(2, [1, 1], 0.2, 1.0)
        ref = _two_site_reference(1, 1, 0.2, 1.0)
        np.testing.assert_allclose(s.hamiltonian, ref, atol=1e-15)
        np.testing.assert_allclose(np.linalg.eigvalsh(s.hamiltonian), [-1.2, -0.2, 0.6, 0.8], atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_partition_invariants(self, n):
        s = build_xxz(n, np.linspace(1, 2, n), 0.37, 0.75)
        assert np.array_equal(s.h_left + s.h_middle + s.h_right, s.hamiltonian)
        assert np.abs(commutator(s.number, s.hamiltonian)).max() < 1e-12
        if n >= 2:
            for op in s.couplings.values():
                for x in (op + op.conj().T, op - op.conj().T):
                    assert np.abs(commutator(s.h_middle, x)).max() < 1e-12
        assert set(s.couplings) == {1, n}

    def test_three_site_partition_blocks(self):
        s = build_xxz(3, [1, 1.5, 2], 0.5, 0.75)
        np.testing.assert_allclose(s.h_middle, 0.75 * s.sigma("z", 2), atol=1e-15)
        np.testing.assert_allclose(s.couplings[1], s.sigma("-", 1))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            build_xxz(2, [1, np.nan], 0.1)
        with pytest.raises(ValueError):
            build_xxz(2, [1, 1], np.inf)
        with pytest.raises(ValueError):
            build_xxz(2, [1], 0.1)


class TestEigendecompose:
    def test_single_site(self):
        b = eigendecompose(build_xxz(1, [1.0], 0.0))
        np.testing.assert_allclose(b.energies, [-0.5, 0.5])
        assert list(b.numbers) == [0, 1]

    def test_three_site_isotropic_sectors(self):
        # Isotropic point is exactly degenerate; with the tolerance switched off the
        # sector labels must still be clean.
        s = build_xxz(3, [1, 1, 1], 0.5, 1.0)
        b = eigendecompose(s, degeneracy_tolerance=0.0)
        assert sorted(b.numbers) == [0, 1, 1, 1, 2, 2, 2, 3]
        np.testing.assert_allclose(b.energies, np.linalg.eigvalsh(s.hamiltonian), atol=1e-12)
        with pytest.raises(DegenerateSpectrum):
            eigendecompose(s)

    def test_benchmark_point(self):
        s = build_xxz(3, [1, 1, 1], 0.5, 0.75)
        b = eigendecompose(s)
        assert sorted(b.numbers) == [0, 1, 1, 1, 2, 2, 2, 3]
        u = b.vectors
        np.testing.assert_allclose(u.conj().T @ u, np.eye(8), atol=1e-12)
        np.testing.assert_allclose(u @ np.diag(b.energies) @ u.conj().T, s.hamiltonian, atol=1e-10)
        off = b.to_eigen(s.hamiltonian) - np.diag(b.energies)
        assert np.abs(off).max() < 1e-10
        assert b.min_gap > 1e-3

    def test_degenerate_pair_refused(self):
        with pytest.raises(DegenerateSpectrum):
            eigendecompose(build_xxz(2, [1, 1], 0.0))


class TestVectorization:
    def test_identity(self):
        np.testing.assert_array_equal(vectorize(np.eye(2)), [1, 0, 0, 1])

    def test_round_trip(self, rng):
        rho = _random_matrix(rng, 8)
        np.testing.assert_array_equal(unvectorize(vectorize(rho)), rho)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            unvectorize(np.zeros(5))
        with pytest.raises(ValueError):
            vectorize(np.zeros((2, 3)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_sandwich_identity(self, seed):
        rng = np.random.default_rng(seed)
        a, rho, b = (_random_matrix(rng, 4) for _ in range(3))
        lhs = vectorize(a @ rho @ b)
        rhs = sandwich_superop(a, b) @ vectorize(rho)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_sandwich_identity_superop(self):
        np.testing.assert_array_equal(sandwich_superop(np.eye(3), np.eye(3)), np.eye(9))

    def test_sandwich_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sandwich_superop(np.eye(2), np.eye(3))

    def test_larmor_precession(self):
        h = SIGMA_Z / 2
        rho = SIGMA_X / 2 + np.eye(2) / 2
        drho = unvectorize(hamiltonian_superop(h) @ vectorize(rho))
        # i[rho, sz/2] = i/4 [sx, sz] = i/4 (-2i sy) = sy/2
        np.testing.assert_allclose(drho, SIGMA_Y / 2, atol=1e-15)

    def test_dissipator_trace_row(self, rng):
        sup = Superoperator(dissipator_superop(_random_matrix(rng, 4), 0.7))
        assert sup.trace_row_residual() < 1e-12


class TestStates:
    def test_trace_distance_examples(self):
        up = np.diag([1.0, 0.0])
        down = np.diag([0.0, 1.0])
        assert trace_distance(up, up) == 0
        assert trace_distance(up, down) == pytest.approx(1.0)
        assert trace_distance(np.diag([0.6, 0.4]), np.diag([0.5, 0.5])) == pytest.approx(0.1)

    def test_trace_distance_symmetric_and_bounded(self, rng):
        a = random_density_matrix(6, rng)
        b = random_density_matrix(6, rng)
        d = trace_distance(a, b)
        assert 0 <= d <= 1
        assert d == pytest.approx(trace_distance(b, a), abs=1e-14)

    def test_trace_distance_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            trace_distance(np.array([[1, 1], [0, 0]]), np.eye(2) / 2)

    def test_gibbs_infinite_temperature(self):
        s = build_xxz(3, [1, 1, 1], 0.5, 0.75)
        np.testing.assert_allclose(gibbs_state(s, 1e-9, -0.5), np.eye(8) / 8, atol=1e-8)

    def test_gibbs_qubit_ratio(self):
        rho = gibbs_state(build_xxz(1, [1.0], 0.0), 1.0, -0.5)
        assert rho[0, 0].real / rho[1, 1].real == pytest.approx(np.exp(-1.5), rel=1e-12)
        assert np.exp(-1.5) == pytest.approx(0.22313, abs=5e-6)

    def test_gibbs_commutes_and_extreme_beta(self):
        s = build_xxz(3, [1, 1.5, 2], 0.5, 0.75)
        rho = gibbs_state(s, 1.0, -0.5)
        assert np.abs(commutator(rho, s.hamiltonian)).max() < 1e-12
        assert np.abs(commutator(rho, s.number)).max() < 1e-12
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        cold = gibbs_state(s, 1e5, -0.5)
        assert np.all(np.isfinite(cold))
        assert np.trace(cold).real == pytest.approx(1.0, abs=1e-12)

    def test_gibbs_rejects_non_positive_beta(self):
        with pytest.raises(ValueError):
            gibbs_state(build_xxz(1, [1.0], 0.0), 0.0)
