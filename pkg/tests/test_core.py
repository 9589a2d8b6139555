import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import ortho_group

from covfourier.core import (
    SampledPath,
    SymMatrixPath,
    TimeGrid,
    check_symmetric,
    matrix_sqrt_psd,
    psd_project,
    psd_project_2x2,
    sqrt_psd_2x2,
    upper_pairs,
)
from covfourier.errors import NonFiniteError, NonSymmetricError, NotPSDError, ValidationError


def eig_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_psd(seed, d):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d))
    return g @ g.T


class TestTimeGrid:
    def test_counts_and_spacing(self):
        g = TimeGrid(10, 1.0)
        assert g.steps == 10 and g.count == 11
        assert np.all(np.diff(g.times()) == pytest.approx(0.1, abs=1e-15))
        assert g.times()[0] == 0.0 and g.times()[-1] <= g.T

    def test_fractional_horizon(self):
        g = TimeGrid(4, 1.3)
        assert g.steps == 5
        assert not g.is_periodic
        assert g.times()[-1] <= 1.3

    def test_rounding_tolerance(self):
        # 10 * 0.3 is 2.9999999999999996 in floating point
        assert TimeGrid(10, 0.3).steps == 3

    @pytest.mark.parametrize("n,T", [(0, 1.0), (-5, 1.0), (2.5, 1.0), (10, 0.0), (10, float("inf"))])
    def test_rejects_bad_grids(self, n, T):
        with pytest.raises(ValidationError):
            TimeGrid(n, T)

    def test_nearest_index(self):
        g = TimeGrid(100, 1.0)
        assert g.nearest_index(0.5) == 50
        assert g.nearest_index(2.0) == 100


class TestPaths:
    def test_sampled_path_length_and_finiteness(self):
        g = TimeGrid(4, 1.0)
        p = SampledPath(g, np.arange(5.0))
        assert p.d == 1 and p.increments().shape == (4, 1)
        with pytest.raises(ValidationError):
            SampledPath(g, np.arange(4.0))
        with pytest.raises(NonFiniteError):
            SampledPath(g, np.array([0, 1, np.nan, 2, 3.0]))

    def test_sampled_path_is_read_only(self):
        p = SampledPath(TimeGrid(2, 1.0), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            p.values[0, 0] = 1.0

    def test_sym_matrix_path(self, x0):
        p = SymMatrixPath(np.array([0.0, 1.0]), np.stack([x0, x0]))
        assert len(p) == 2 and p.d == 2
        np.testing.assert_array_equal(p.entry(0, 1), p.entry(1, 0))
        bad = np.stack([x0, x0 + np.array([[0, 1e-3], [0, 0]])])
        with pytest.raises(NonSymmetricError):
            SymMatrixPath(np.array([0.0, 1.0]), bad)
        with pytest.raises(ValidationError):
            SymMatrixPath(np.array([1.0, 0.0]), np.stack([x0, x0]))

    def test_upper_pairs_order(self):
        assert list(upper_pairs(2)) == [(0, 0), (0, 1), (1, 1)]


class TestMatrixSqrt:
    def test_identity(self):
        np.testing.assert_array_equal(matrix_sqrt_psd(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), rtol=1e-14)

    def test_reference_initial_covariance(self, x0):
        s = matrix_sqrt_psd(x0)
        assert rel_fro(s @ s, x0) < 1e-12
        assert rel_fro(s, eig_sqrt(x0)) < 1e-12
        assert np.all(np.linalg.eigvalsh(s) >= 0)

    def test_errors(self):
        with pytest.raises(NonSymmetricError):
            matrix_sqrt_psd(np.array([[1.0, 0.5], [0.4, 1.0]]))
        with pytest.raises(NotPSDError):
            matrix_sqrt_psd(np.diag([1.0, -0.1]))

    def test_tiny_negative_eigenvalue_clipped(self):
        a = np.diag([1.0, -1e-13])
        s = matrix_sqrt_psd(a)
        np.testing.assert_allclose(s, np.diag([1.0, 0.0]), atol=1e-15)

    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_square_reproduces_input(self, seed, d):
        a = random_psd(seed, d)
        s = matrix_sqrt_psd(a)
        assert rel_fro(s @ s, a) < 1e-12

    @given(st.integers(0, 10_000), st.integers(2, 5))
    def test_orthogonal_equivariance(self, seed, d):
        a = random_psd(seed, d)
        q = ortho_group.rvs(d, random_state=seed)
        lhs = matrix_sqrt_psd(q.T @ a @ q)
        rhs = q.T @ matrix_sqrt_psd(a) @ q
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.abs(rhs).max())

    @given(arrays(np.float64, (3,), elements=st.floats(-2, 2)), st.floats(0, 3))
    def test_batched_2x2_root_matches_eigh(self, entries, shift):
        a = np.array([[entries[0], entries[1]], [entries[1], entries[2]]])
        a = a @ a.T + shift * np.eye(2)
        s = sqrt_psd_2x2(a[None])[0]
        np.testing.assert_allclose(s, eig_sqrt(a), atol=1e-7 * max(1.0, np.abs(a).max()))


class TestPsdProject:
    def test_clip_diagonal(self):
        p, mass = psd_project(np.diag([1.0, -0.001]))
        np.testing.assert_allclose(p, np.diag([1.0, 0.0]), atol=1e-15)
        assert mass == pytest.approx(0.001)

    def test_fixed_point(self, x0):
        p, mass = psd_project(x0)
        np.testing.assert_array_equal(p, x0)
        assert mass == 0.0

    def test_antidiagonal(self):
        p, mass = psd_project(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(p, 0.5 * np.ones((2, 2)), atol=1e-15)
        assert mass == pytest.approx(1.0)

    @given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
    def test_idempotent(self, a):
        a = 0.5 * (a + a.T)
        p, _ = psd_project(a)
        q, mass = psd_project(p)
        np.testing.assert_allclose(q, p, atol=1e-12)
        assert mass < 1e-12

    @given(arrays(np.float64, (5, 3), elements=st.floats(-3, 3)))
    def test_batched_2x2_matches_general(self, e):
        a = np.stack([np.array([[r[0], r[1]], [r[1], r[2]]]) for r in e])
        p, mass = psd_project_2x2(a)
        for k in range(a.shape[0]):
            ref, m = psd_project(a[k])
            np.testing.assert_allclose(p[k], ref, atol=1e-12)
            assert mass[k] == pytest.approx(m, abs=1e-12)


def test_check_symmetric_tolerance():
    a = np.array([[1.0, 0.5], [0.5 + 1e-14, 1.0]])
    out = check_symmetric(a)
    assert out[0, 1] == out[1, 0]
