import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmigwave.gmig_field import (
    AdmissibilityError,
    Grid,
    MatrixStrengthPair,
    PreparedSampler,
    ScalarStrengthPair,
    check_sampler_order,
    default_delta,
    sample_scalar_gmig,
    sample_stationary_pair,
    sample_vector_gmig,
    scalar_modulation,
    spectral_density,
    stationary_covariance,
    validate_strengths,
    vector_modulation,
)
from gmigwave.oracle_ref import dense_kernels, dense_stationary, empirical_kernels
from gmigwave.shapes import GaussianBump


def bump(d=2, width=0.6, center=None, **kw):
    return GaussianBump(tuple(center or (0.0,) * d), width, **kw)


class TestGrid:
    @pytest.mark.parametrize("n", [4, 12, 100])
    def test_bad_node_counts(self, n):
        with pytest.raises(ValueError):
            Grid(2, n, 1.0)

    def test_geometry(self):
        g = Grid(2, 16, 8.0)
        assert g.h == 0.5 and g.size == 256 and g.cell_volume == 0.25
        assert g.axis()[0] == -4.0 and g.axis()[-1] == 3.5
        assert g.nyquist == pytest.approx(2 * np.pi)
        assert g.points().shape == (16, 16, 2)
        assert g.boundary_mask(2).sum() == 256 - 12 * 12

    def test_rejects_other_dimensions(self):
        with pytest.raises(ValueError):
            Grid(1, 16, 1.0)


class TestSpectralDensity:
    def test_origin(self):
        assert spectral_density(1.5, 0.3, np.zeros(2)) == pytest.approx(0.3**-1.5)

    def test_unit_frequency(self):
        assert spectral_density(2.0, 1.0, [1.0, 0.0]) == pytest.approx(0.5)

    def test_high_frequency_tail(self):
        xi = np.array([64.0, 0, 0])
        assert abs(spectral_density(2.0, 1.0, xi) - 64.0**-2) <= 64.0**-4

    def test_delta_must_be_positive(self):
        with pytest.raises(ValueError):
            spectral_density(2.0, 0.0, [1.0, 0.0])

    def test_default_delta(self):
        assert default_delta(Grid(2, 8, 4.0)) == pytest.approx(np.pi / 2)


class TestStationary:
    grid = Grid(2, 16, 4.0)
    m = 1.0

    def test_matches_explicit_dft_oracle(self):
        delta = default_delta(self.grid)
        G = stationary_covariance(self.grid, self.m, delta)
        np.testing.assert_allclose(G, dense_stationary(self.grid, self.m, delta), rtol=1e-11, atol=1e-14)

    def test_pointwise_variance(self):
        delta = default_delta(self.grid)
        g1, g2 = sample_stationary_pair(self.grid, self.m, delta, seed=11, size=1000)
        vals = np.concatenate([g1[:, 3, 5], g2[:, 3, 5]])
        G0 = stationary_covariance(self.grid, self.m, delta)[0, 0]
        se = np.sqrt(2 / vals.size) * G0
        assert abs(np.mean(vals**2) - G0) < 3 * se

    def test_lag_covariance(self):
        delta = default_delta(self.grid)
        g1, _ = sample_stationary_pair(self.grid, self.m, delta, seed=12, size=2000)
        G = stationary_covariance(self.grid, self.m, delta)
        per_draw = np.mean(g1 * np.roll(g1, -2, axis=1), axis=(1, 2))
        se = per_draw.std(ddof=1) / np.sqrt(per_draw.size)
        assert abs(per_draw.mean() - G[2, 0]) < 4 * se

    def test_pair_is_uncorrelated(self):
        g1, g2 = sample_stationary_pair(self.grid, self.m, None, seed=13, size=2000)
        per_draw = np.mean(g1 * g2, axis=(1, 2))
        se = per_draw.std(ddof=1) / np.sqrt(per_draw.size)
        assert abs(per_draw.mean()) < 4 * se

    def test_deterministic(self):
        a = sample_stationary_pair(self.grid, self.m, None, seed=5)
        b = sample_stationary_pair(self.grid, self.m, None, seed=5)
        c = sample_stationary_pair(self.grid, self.m, None, seed=6)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.allclose(a[0], c[0])


class TestScalarSampler:
    grid = Grid(2, 32, 8.0)

    def pair(self, ratio=0.5, phase=np.pi / 3, radius=2.0):
        return ScalarStrengthPair.from_profiles(
            self.grid, 1.0, bump(), bump(amplitude=ratio, phase=phase), support_radius=radius)

    def test_deterministic_under_seed(self):
        st_ = self.pair()
        a = sample_scalar_gmig(st_, self.grid, seed=3).values
        b = sample_scalar_gmig(st_, self.grid, seed=3).values
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(PreparedSampler(st_, self.grid).draw(3).values, a)

    def test_zero_outside_support(self):
        st_ = self.pair(radius=1.5)
        f = sample_scalar_gmig(st_, self.grid, seed=1, size=4).values
        outside = ~self.grid.support_mask(1.5)
        assert np.all(f[:, outside] == 0)

    def test_real_when_relation_equals_covariance(self):
        st_ = self.pair(ratio=1.0, phase=0.0)
        f = sample_scalar_gmig(st_, self.grid, seed=2).values
        assert np.all(f.imag == 0)
        assert np.any(f.real != 0)

    def test_circular_when_relation_vanishes(self):
        st_ = ScalarStrengthPair.from_profiles(self.grid, 1.0, bump(), None, support_radius=2.0)
        f = sample_scalar_gmig(st_, self.grid, seed=4, size=3000).values[:, 16, 16]
        re, im = f.real, f.imag
        var = np.mean(re**2)
        se = np.sqrt(2 / f.size) * var
        assert abs(np.mean(im**2) - var) < 4 * se * np.sqrt(2)
        assert abs(np.mean(re * im)) < 4 * var / np.sqrt(f.size)

    def test_kernels_against_dense_oracle(self):
        grid = Grid(2, 16, 8.0)
        st_ = ScalarStrengthPair.from_profiles(grid, 1.0, bump(width=0.8), bump(width=0.8, amplitude=0.6, phase=1.0),
                                               support_radius=1.9)
        exact = dense_kernels(st_, grid, 1.0, default_delta(grid))
        f = sample_scalar_gmig(st_, grid, seed=9, size=4000).values.reshape(4000, -1)
        np.testing.assert_array_equal(np.abs(f).sum(axis=0) > 0, np.real(np.diag(exact.K_c)) > 0)
        Kc, Kr, se_c, se_r = empirical_kernels(f)
        zc = np.abs(Kc - exact.K_c) / np.maximum(se_c, 1e-300)
        zr = np.abs(Kr - exact.K_r) / np.maximum(se_r, 1e-300)
        active = se_c > 0
        assert np.mean(zc[active] > 3) < 0.02
        assert np.mean(zr[active] > 3) < 0.02

    def test_empirical_kernels_are_hermitian_and_symmetric(self):
        st_ = self.pair()
        f = sample_scalar_gmig(st_, self.grid, seed=8, size=50).values.reshape(50, -1)
        Kc, Kr, _, _ = empirical_kernels(f)
        np.testing.assert_allclose(Kc, Kc.conj().T, atol=1e-14)
        np.testing.assert_allclose(Kr, Kr.T, atol=1e-14)

    def test_monte_carlo_rate(self):
        # RMS error of the empirical variance field halves when M quadruples
        st_ = self.pair()
        G0 = stationary_covariance(self.grid, 1.0, default_delta(self.grid))[0, 0]
        truth = st_.a_c * G0
        inside = st_.a_c > 0.3
        errs = []
        for M, seed in ((500, 21), (2000, 22)):
            f = sample_scalar_gmig(st_, self.grid, seed=seed, size=M).values
            emp = np.mean(np.abs(f) ** 2, axis=0)
            errs.append(np.sqrt(np.mean((emp - truth)[inside] ** 2)))
        assert 0.3 < errs[1] / errs[0] < 0.75

    def test_inadmissible_rejected(self):
        st_ = self.pair(ratio=1.1)
        with pytest.raises(AdmissibilityError):
            sample_scalar_gmig(st_, self.grid, seed=0)

    def test_order_window(self):
        st_ = ScalarStrengthPair(-5.0, np.zeros(self.grid.shape), np.zeros(self.grid.shape))
        with pytest.raises(ValueError, match="sampler accepts"):
            sample_scalar_gmig(st_, self.grid)
        check_sampler_order(3.9, 2)
        with pytest.raises(ValueError):
            check_sampler_order(4.0, 2)

    def test_shape_mismatch(self):
        st_ = self.pair()
        with pytest.raises(ValueError):
            sample_scalar_gmig(st_, Grid(2, 16, 8.0))


class TestVectorSampler:
    grid = Grid(2, 32, 8.0)

    def test_variance_ratio(self):
        b = bump()
        A_c = [[bump(amplitude=2.0), None], [None, b]]
        st_ = MatrixStrengthPair.from_profiles(self.grid, 1.0, A_c, None, support_radius=2.0)
        f = sample_vector_gmig(st_, self.grid, seed=5, size=2000).values[:, 16, 16]
        v = np.mean(np.abs(f) ** 2, axis=0)
        se = v / np.sqrt(f.shape[0])
        assert abs(v[0] / v[1] - 2.0) < 4 * np.hypot(se[0] / v[1], v[0] * se[1] / v[1] ** 2)

    def test_identity_components_uncorrelated(self):
        b = bump()
        st_ = MatrixStrengthPair.from_profiles(self.grid, 1.0, [[b, None], [None, b]], None, support_radius=2.0)
        f = sample_vector_gmig(st_, self.grid, seed=6, size=3000).values[:, 16, 16]
        cross = f[:, 0] * f[:, 1].conj()
        scale = np.sqrt(np.mean(np.abs(f[:, 0]) ** 2) * np.mean(np.abs(f[:, 1]) ** 2))
        assert abs(cross.mean()) < 4 * scale / np.sqrt(f.shape[0])

    def test_deterministic_and_supported(self):
        b = bump()
        st_ = MatrixStrengthPair.from_profiles(self.grid, 1.0, [[b, None], [None, b]],
                                               [[bump(amplitude=0.3), None], [None, None]], support_radius=1.0)
        a = sample_vector_gmig(st_, self.grid, seed=1).values
        np.testing.assert_array_equal(a, sample_vector_gmig(st_, self.grid, seed=1).values)
        assert a.shape == (32, 32, 2)
        assert np.all(a[~self.grid.support_mask(1.0)] == 0)


class TestValidation:
    grid = Grid(2, 32, 8.0)

    def scalar(self, ratio):
        return ScalarStrengthPair.from_profiles(self.grid, 1.0, bump(), bump(amplitude=ratio), support_radius=2.0)

    def test_half_margin_accepted(self):
        rep = validate_strengths(self.scalar(0.5), self.grid)
        assert rep.ok and rep.support_ok and rep.min_margin >= 0

    def test_excess_relation_rejected(self):
        rep = validate_strengths(self.scalar(1.1), self.grid)
        assert not rep.ok
        assert rep.min_margin < 0
        assert rep.worst_node == (16, 16)
        assert any("admissibility" in m for m in rep.messages)

    def test_semidefinite_matrix_accepted(self):
        d = 2
        A_c = np.broadcast_to(np.eye(d), self.grid.shape + (d, d)).copy()
        A_r = np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]]), self.grid.shape + (d, d)).copy()
        rep = validate_strengths(MatrixStrengthPair(1.0, A_c, A_r))
        assert rep.ok
        assert abs(rep.min_margin) < 1e-12

    def test_nonsymmetric_relation_rejected(self):
        d = 2
        A_c = np.broadcast_to(2 * np.eye(d), (8, 8, d, d)).copy()
        A_r = np.broadcast_to(np.array([[0.0, 0.5], [0.1, 0.0]]), (8, 8, d, d)).copy()
        rep = validate_strengths(MatrixStrengthPair(1.0, A_c, A_r))
        assert not rep.ok
        assert any("symmetric" in m for m in rep.messages)

    def test_support_near_boundary_flagged(self):
        st_ = ScalarStrengthPair.from_profiles(self.grid, 1.0, bump(center=(3.6, 0.0)), None)
        rep = validate_strengths(st_, self.grid)
        assert not rep.support_ok and not rep.ok

    def test_rough_profile_warns(self):
        a = np.zeros(self.grid.shape)
        a[16, 16] = 1.0
        rep = validate_strengths(ScalarStrengthPair(1.0, a, np.zeros_like(a)), self.grid)
        assert rep.smoothness_warning


def _admissible_scalar(draw):
    a_c = draw(st.floats(0.0, 10.0))
    frac = draw(st.floats(0.0, 1.0))
    phase = draw(st.floats(-np.pi, np.pi))
    return a_c, frac * a_c * np.exp(1j * phase)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_scalar_modulation_reproduces_pair(data):
    a_c, a_r = _admissible_scalar(data.draw)
    c1, c2 = scalar_modulation(np.array([a_c]), np.array([a_r]))
    tol = 1e-12 * max(a_c, 1.0)
    assert abs(abs(c1[0]) ** 2 + abs(c2[0]) ** 2 - a_c) <= tol
    assert abs(c1[0] ** 2 + c2[0] ** 2 - a_r) <= 1e-7 * max(a_c, 1.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([2, 3]), rank=st.integers(1, 6))
def test_vector_modulation_reproduces_pair(seed, d, rank):
    # any f = B g with real iid g gives an admissible pair A_c = B B^H, A_r = B B^T
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    A_c = (B @ B.conj().T)[None]
    A_r = (B @ B.T)[None]
    C = vector_modulation(A_c, A_r)[0]
    scale = np.linalg.norm(A_c)
    np.testing.assert_allclose(C @ C.conj().T, A_c[0], atol=1e-10 * scale)
    np.testing.assert_allclose(C @ C.T, A_r[0], atol=1e-10 * scale)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.1, 10.0), seed=st.integers(0, 1000))
def test_scaling_strengths_scales_field_by_root(s, seed):
    grid = Grid(2, 16, 8.0)
    pair = ScalarStrengthPair.from_profiles(grid, 1.0, bump(), bump(amplitude=0.4, phase=0.7), support_radius=1.9)
    f1 = sample_scalar_gmig(pair, grid, seed=seed).values
    f2 = sample_scalar_gmig(pair.scaled(s), grid, seed=seed).values
    np.testing.assert_allclose(f2, np.sqrt(s) * f1, rtol=1e-10, atol=1e-14)
