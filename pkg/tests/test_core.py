import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from boundedmcmc.core import BoxDomain, PhaseState, TargetModel, hamiltonian, log_target_density
from boundedmcmc.targets import gaussian_target, tilted_rosenbrock_target


def zero_potential(x):
    return 0.0, np.zeros_like(x)


def nan_potential(x):
    return np.nan, np.zeros_like(x)


def rosenbrock_scalar(x):
    # Independent scalar evaluation used as the oracle for the shipped target.
    return sum(100.0 * (x[i + 1] - x[i] ** 2) ** 2 + (1.0 - x[i]) ** 2 for i in range(len(x) - 1))


class TestPhaseStateAndBox:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            PhaseState(np.zeros(2), np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            PhaseState([np.nan], [0.0])

    def test_flip_negates_momentum(self):
        s = PhaseState([0.1, 0.2], [1.0, -2.0])
        assert_array_equal(s.flip().p, [-1.0, 2.0])
        assert_array_equal(s.flip().x, s.x)

    def test_box_contains_boundary(self):
        box = BoxDomain.uniform(1.0, 2)
        assert box.contains([1.0, -1.0])
        assert not box.contains([1.0 + 1e-12, 0.0])

    def test_box_rejects_non_positive(self):
        with pytest.raises(ValueError):
            BoxDomain([1.0, 0.0])

    def test_per_axis_widths(self):
        box = BoxDomain([0.5, 2.0])
        assert box.contains([0.4, 1.9])
        assert not box.contains([0.6, 0.0])


class TestTargetModel:
    def test_scalar_and_vector_covariance(self):
        t1 = TargetModel(3, zero_potential, 0.3, BoxDomain.uniform(1.0, 3))
        t2 = TargetModel(3, zero_potential, [0.3, 0.3, 0.3], BoxDomain.uniform(1.0, 3))
        assert_array_equal(t1.covariance, 0.3 * np.eye(3))
        assert_array_equal(t1.covariance, t2.covariance)

    def test_rejects_indefinite_covariance(self):
        with pytest.raises(ValueError):
            TargetModel(2, zero_potential, [[1.0, 2.0], [2.0, 1.0]], BoxDomain.uniform(1.0, 2))

    def test_rejects_asymmetric_covariance(self):
        with pytest.raises(ValueError):
            TargetModel(2, zero_potential, [[1.0, 0.1], [0.0, 1.0]], BoxDomain.uniform(1.0, 2))

    def test_rejects_domain_mismatch(self):
        with pytest.raises(ValueError):
            TargetModel(2, zero_potential, 1.0, BoxDomain.uniform(1.0, 3))

    def test_cholesky_factor_reproduces_covariance(self):
        c = np.array([[0.25, 0.1], [0.1, 0.25]])
        t = TargetModel(2, zero_potential, c, BoxDomain.uniform(1.0, 2))
        assert_allclose(t.cov_factor @ t.cov_factor.T, c, atol=1e-15)
        assert_allclose(t.cov_inv @ c, np.eye(2), atol=1e-14)


class TestHamiltonian:
    def test_rosenbrock_origin(self):
        # f(0) = 4, V = f/2.
        tm = tilted_rosenbrock_target(a=1.0)
        assert hamiltonian(PhaseState(np.zeros(5), np.zeros(5)), tm) == pytest.approx(2.0, abs=1e-14)

    def test_zero_potential_origin(self):
        tm = gaussian_target(2)
        assert hamiltonian(PhaseState(np.zeros(2), np.zeros(2)), tm) == 0.0

    def test_rosenbrock_ones(self):
        tm = tilted_rosenbrock_target(a=1.0)
        x = np.ones(5)
        expected = 0.5 * rosenbrock_scalar(x) + 0.5 * sum(xi * xi / 0.3 for xi in x)
        assert expected == pytest.approx(8.333333333333334, rel=1e-15)
        assert hamiltonian(PhaseState(x, np.zeros(5)), tm) == pytest.approx(expected, rel=1e-14)

    def test_kinetic_term(self):
        tm = gaussian_target(2)
        s = PhaseState([0.0, 0.0], [3.0, 4.0])
        assert hamiltonian(s, tm) == pytest.approx(12.5)

    def test_failed_potential_gives_infinite_energy(self):
        tm = TargetModel(1, nan_potential, 1.0, BoxDomain.uniform(1.0, 1))
        assert hamiltonian(PhaseState([0.0], [0.0]), tm) == np.inf

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hamiltonian(PhaseState(np.zeros(3), np.zeros(3)), gaussian_target(2))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=5, max_size=5),
           st.lists(st.floats(-5, 5), min_size=5, max_size=5))
    def test_flip_invariance_and_density_link(self, x, p):
        tm = tilted_rosenbrock_target(a=1.0)
        s = PhaseState(x, p)
        h = hamiltonian(s, tm)
        assert h == hamiltonian(s.flip(), tm)
        assert h == pytest.approx(-log_target_density(s.x, tm) + 0.5 * float(s.p @ s.p), rel=1e-14)


class TestLogTargetDensity:
    def test_rosenbrock_ones(self):
        tm = tilted_rosenbrock_target(a=1.0)
        assert log_target_density(np.ones(5), tm) == pytest.approx(-8.333333333333334, rel=1e-14)

    def test_zero_potential_origin(self):
        assert log_target_density(np.zeros(2), gaussian_target(2)) == 0.0

    def test_outside_box(self):
        tm = tilted_rosenbrock_target(a=1.0)
        x = np.zeros(5)
        x[0] = 1.1
        assert log_target_density(x, tm) == -np.inf

    def test_shape_check(self):
        with pytest.raises(ValueError):
            log_target_density(np.zeros(4), tilted_rosenbrock_target())
