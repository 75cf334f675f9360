"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the stated ones.  Seeds are fixed up front and never tuned.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_source
from gmigwave import exp_runner as er
from gmigwave.band_estimators import (
    EstimatorConfig,
    band_average_set,
    decay_diagnostic,
    ensemble_limit,
    model_constant,
    polarization_vectors,
    reshape_rows,
)
from gmigwave.forward_ops import DirectionSet, FarFieldSource, asymptotic_residual, farfield_values
from gmigwave.gmig_field import (
    Grid,
    MatrixStrengthPair,
    ScalarStrengthPair,
    default_delta,
    sample_scalar_gmig,
    validate_strengths,
)
from gmigwave.oracle_ref import brute_force_farfield, cholesky_sample, dense_kernels, empirical_kernels
from gmigwave.shapes import GaussianBump
from gmigwave.symbol_recovery import PolarFourierData, invert_polar_fourier, normalize, recovery_error
from gmigwave.waves_core import WaveKind

ACOUSTIC = WaveKind("acoustic")
RELATION = 0.5 * np.exp(1j * np.pi / 3)


def report(n, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({time.time() - t0:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def bump_pair(grid, center, width, radius):
    bc = GaussianBump(center, width, 1.0)
    st = ScalarStrengthPair.from_profiles(grid, 2.0, bc, None, support_radius=radius)
    return bc, ScalarStrengthPair(2.0, st.a_c, RELATION * st.a_c)


def sigma_excess(est, ref, se):
    """Largest |est - ref| in units of se; pairs with se == 0 must agree exactly."""
    diff = np.abs(est - ref)
    active = se > 0
    if np.any(diff[~active] > 1e-12):
        return np.inf
    return float(np.max(diff[active] / se[active]))


def test_c1_sampler_fidelity():
    t0 = time.time()
    grid = Grid(2, 32, 8.0)
    _, st = bump_pair(grid, (0.3, -0.2), 0.45, 2.9)
    assert validate_strengths(st, grid).ok
    delta = default_delta(grid)
    K = dense_kernels(st, grid, 2.0, delta)
    spectral = sample_scalar_gmig(st, grid, delta, seed=123, size=5000).values.reshape(5000, -1)
    Kc, Kr, se_c, se_r = empirical_kernels(spectral)
    chol = cholesky_sample(K, 7, 5000)
    Kc2, Kr2, se_c2, se_r2 = empirical_kernels(chol)
    z = [sigma_excess(Kc, K.K_c, se_c), sigma_excess(Kr, K.K_r, se_r),
         sigma_excess(Kc, Kc2, np.hypot(se_c, se_c2)), sigma_excess(Kr, Kr2, np.hypot(se_r, se_r2))]
    ok = max(z) < 4 and time.time() - t0 <= 120
    assert report(1, ok, "max sigma (K^c, K^r, two-sample K^c, K^r) = " + ", ".join(f"{v:.2f}" for v in z), t0)


def test_c2_forward_exactness():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    kinds = [(ACOUSTIC, 2), (WaveKind("biharmonic"), 2), (WaveKind("elastic", 1.0, 2.0), 2),
             (ACOUSTIC, 3), (WaveKind("electromagnetic"), 3), (WaveKind("elastic", 0.5, 1.0), 3)]
    for kind, d in kinds:
        grid = Grid(d, 32 if d == 2 else 16, 6.0)
        f = random_source(grid, 11, 2.0, vector=kind.is_vector)
        for _ in range(50):
            xhat = rng.normal(size=d)
            xhat /= np.linalg.norm(xhat)
            kappa = rng.uniform(0.2, 2.0)
            got = farfield_values(kind, f.values, grid, xhat, [kappa])
            ref = brute_force_farfield(f, kind, xhat, kappa)
            pairs = zip(got, ref) if kind.tag == "elastic" else [(np.asarray(got), ref)]
            for a, b in pairs:
                worst = max(worst, np.linalg.norm(a[0] - b) / np.linalg.norm(b))
    pol = 0.0
    for d in (2, 3):
        grid = Grid(d, 32 if d == 2 else 16, 6.0)
        f = random_source(grid, 4, 2.0, vector=True)
        for xhat in rng.normal(size=(10, d)):
            xhat /= np.linalg.norm(xhat)
            u_p, u_s = farfield_values(WaveKind("elastic", 0.5, 1.0), f.values, grid, xhat, [0.9, 1.4])
            scale = max(np.abs(u_p).max(), np.abs(u_s).max())
            pol = max(pol, np.abs(u_p - np.outer(u_p @ xhat, xhat)).max() / scale,
                      np.abs(u_s @ xhat).max() / scale)
    grid = Grid(2, 32, 6.0)
    f = random_source(grid, 5, 2.0)
    k = np.linspace(0.3, 2.5, 12)
    xhat = np.array([0.6, 0.8])
    ac = farfield_values(ACOUSTIC, f.values, grid, xhat, k)
    bh = farfield_values(WaveKind("biharmonic"), f.values, grid, xhat, k)
    ratio = float(np.max(np.abs(bh * 2 * k**2 / ac - 1)))
    ok = worst <= 1e-8 and pol <= 1e-12 and ratio <= 1e-14 and time.time() - t0 <= 60
    assert report(2, ok, f"brute force {worst:.1e}, polarization {pol:.1e}, biharmonic ratio {ratio:.1e}", t0)


def test_c3_asymptotic_consistency():
    t0 = time.time()
    ratios = {}
    cases = [("acoustic", 2), ("acoustic", 3), ("biharmonic", 2), ("biharmonic", 3),
             ("electromagnetic", 3), ("elastic", 2), ("elastic", 3)]
    for tag, d in cases:
        kind = WaveKind(tag, 0.5, 1.0) if tag == "elastic" else WaveKind(tag)
        grid = Grid(d, 32 if d == 2 else 16, 2.0)
        f = random_source(grid, 5, 0.8, vector=kind.is_vector)
        xhat = np.ones(d) / np.sqrt(d)
        r100, r200 = (asymptotic_residual(kind, f, xhat, 3.0, R) for R in (100.0, 200.0))
        ratios[f"{tag}{d}d"] = r100 / r200
    ok = all(1.5 <= v <= 2.5 for v in ratios.values()) and time.time() - t0 <= 120
    assert report(3, ok, "residual ratio 100/200: " + ", ".join(f"{k} {v:.2f}" for k, v in ratios.items()), t0)


def test_c4_high_frequency_limit():
    t0 = time.time()
    grid = Grid(2, 512, 8.0)
    bc, st = bump_pair(grid, (0.15, -0.1), 0.4, 1.8)
    ds = DirectionSet.circle(512)
    taus = [0.0, 1.0, 2.0]
    M = 500
    const = model_constant(ACOUSTIC, 2, 2.0, "covariance")
    bias = {}
    for kappa in (64.0, 128.0):
        tab = er.tabulate_ensemble(ACOUSTIC, st, grid, default_delta(grid), ds.vectors, kappa + np.array(taus), M,
                                   0, nyquist_fraction=0.95)
        for tau in taus:
            rel = [ensemble_limit(EstimatorConfig(ACOUSTIC, "covariance", 2.0, 2, tuple(x), tau, mode="ensemble",
                                                  M=M, kappa_eval=kappa), tab).estimate / const / bc.fourier(tau * x)
                   for x in ds.vectors]
            bias[kappa, tau] = abs(np.mean(rel) - 1)
    ratios = [bias[128.0, t] / bias[64.0, t] for t in taus]
    ok = all(0.25 <= r <= 0.75 for r in ratios) and time.time() - t0 <= 180
    detail = "bias(128)/bias(64) at tau 0,1,2 = " + ", ".join(f"{r:.3f}" for r in ratios)
    assert report(4, ok, detail, t0)


def single_config(**kw):
    raw = dict(kind="acoustic", d=2, grid=dict(n=4096, length=20.0), support_radius=6.0, m=2.0,
               strengths=dict(covariance=dict(center=[0.4, -0.2], width=1.6),
                              relation=dict(scale=0.9, phase=float(np.pi / 3))),
               band=dict(Q=[64, 128, 256], dk=0.25, shifts=dict(count=8, step=0.25)), directions=8,
               nyquist_fraction=0.95, target_grid=dict(n=64, length=float(8 * np.pi)),
               seeds=dict(root=1, realizations=1))
    raw.update(kw)
    return er.parse_config(raw)


@pytest.fixture(scope="module")
def desk_realization():
    cfg = single_config()
    st = er.build_strengths(cfg, cfg.grid)
    return er.sample_realizations(cfg, st, 1)


def test_c5_single_realization_recovery(desk_realization):
    t0 = time.time()
    cfg = single_config()
    ds = er.direction_set(cfg)
    est = er.compute_estimates(cfg, desk_realization, ds, cfg.shifts)
    errs = {}
    for (_, target, q), (e, se) in est.items():
        scale, phase = (1.0, 0.0) if target == "covariance" else (0.9, np.pi / 3)
        truth = GaussianBump((0.4, -0.2), 1.6, scale, phase).fourier(ds.vectors[:, None, :] * cfg.shifts[None, :, None])
        data = normalize(e, se, cfg.kind, 2, 2.0, target, ds.vectors, cfg.shifts, neg=ds.neg)
        errs.setdefault(target, {})[q] = np.linalg.norm(data.values - truth) / np.linalg.norm(truth)
    ok = time.time() - t0 <= 300
    parts = []
    for target, e in sorted(errs.items()):
        seq = [e[q] for q in sorted(e)]
        mono = all(b <= 1.1 * a for a, b in zip(seq, seq[1:]))
        ok = ok and mono and seq[-1] <= 0.15
        parts.append(f"{target} " + " -> ".join(f"{v:.3f}" for v in seq))
    assert report(5, ok, "; ".join(parts), t0)


def test_c6_constant_bookkeeping():
    t0 = time.time()
    grid = Grid(2, 128, 8.0)
    _, st = bump_pair(grid, (0.1, 0.2), 0.5, 2.4)
    f = sample_scalar_gmig(st, grid, seed=6)
    ds = DirectionSet.circle(8)
    kw = dict(shifts=[0.0], Qs=[16.0], dk=0.25, m=2.0, d=2)
    ac = band_average_set(ACOUSTIC, FarFieldSource(ACOUSTIC, f, 0.9), ds.vectors, ds.neg, **kw)
    bk = WaveKind("biharmonic")
    bh = band_average_set(bk, FarFieldSource(bk, f, 0.9), ds.vectors, ds.neg, **kw)
    quarter = max(float(np.max(np.abs(bh[k].estimate / ac[k].estimate - 0.25))) for k in ac)

    g3 = Grid(3, 32, 8.0)
    bump = g3.evaluate(GaussianBump((0.2, -0.1, 0.05), 0.6, 1.0))
    Ac = np.zeros(g3.shape + (3, 3), complex)
    for i, amp in enumerate((1.0, 0.7, 0.5)):
        Ac[..., i, i] = amp * bump
    Ac[~g3.support_mask(2.6)] = 0
    pair = MatrixStrengthPair(1.0, Ac, 0.3 * Ac)
    em = WaveKind("electromagnetic")
    dirs = DirectionSet.sphere(32)
    tab = er.tabulate_ensemble(em, pair, g3, default_delta(g3), dirs.vectors, np.array([8.0]), 200, 0,
                               nyquist_fraction=0.9)
    truth = np.diag(Ac.sum(axis=(0, 1, 2)) * g3.cell_volume)
    raw = {}
    for target in ("covariance", "relation"):
        raw[target] = np.mean([ensemble_limit(EstimatorConfig(em, target, 1.0, 3, tuple(x), 0.0, mode="ensemble",
                                                              M=200, kappa_eval=8.0), tab).estimate
                               for x in dirs.vectors], axis=0)
    c_cov = model_constant(em, 3, 1.0, "covariance")
    c_rel = model_constant(em, 3, 1.0, "relation")
    diag = np.abs(np.diag(raw["covariance"] / c_cov) - truth) / np.abs(truth)
    # the relation estimate comes out with the opposite sign of 0.3 * int A_c
    flip = (abs(c_rel * 16 * np.pi**2 + 1) < 1e-12 and abs(c_cov * 16 * np.pi**2 - 1) < 1e-12
            and np.all(np.real(np.diag(raw["relation"])) < 0))
    ok = quarter <= 1e-12 and np.all(diag <= 0.10) and flip
    assert report(6, ok, f"biharmonic/acoustic - 1/4 = {quarter:.1e}; Maxwell diagonal rel err "
                         + ", ".join(f"{v:.3f}" for v in diag) + f"; relation sign flip {bool(flip)}", t0)


def test_c7_elastic_combination():
    t0 = time.time()
    c1, c2 = [0.3, -0.2], [-0.2, 0.25]
    mid = [(a + b) / 2 for a, b in zip(c1, c2)]
    off = dict(center=mid, width=1.0, amplitude=0.4)
    cfg = er.parse_config(dict(
        kind="elastic", lame={"lambda": 0.0, "mu": 1.0}, d=2, grid=dict(n=2048, length=10.0), support_radius=4.0,
        m=2.0, strengths=dict(covariance=[[dict(center=c1, width=1.0), off],
                                          [off, dict(center=c2, width=1.0, amplitude=0.8)]],
                              relation=dict(scale=0.3)),
        band=dict(Q=[256], dk=0.25, shifts=[0.0]), directions=16, nyquist_fraction=0.95,
        seeds=dict(root=1, realizations=1)))
    st = er.build_strengths(cfg, cfg.grid)
    truth = st.A_c.sum(axis=(0, 1)) * cfg.grid.cell_volume
    f = er.sample_realizations(cfg, st, 1)
    del st
    ds = er.direction_set(cfg)
    est = er.compute_estimates(cfg, f, ds, cfg.shifts)
    e, se = est[(0, "covariance", 256.0)]
    A = normalize(e, se, cfg.kind, 2, 2.0, "covariance", ds.vectors, cfg.shifts).values[:, 0].mean(axis=0)
    rel = np.abs(A - truth) / np.abs(truth)
    ident = 0.0
    for xhat in DirectionSet.circle(16).vectors:
        vp, vs = polarization_vectors(xhat)
        for j in range(2):
            for l in range(2):
                total = sum(reshape_rows(np.outer(a[j], b[l])) for a in (vp, vs) for b in (vp, vs))
                ident = max(ident, np.abs(total - reshape_rows(np.outer(np.eye(2)[j], np.eye(2)[l]))).max())
    ok = np.all(rel <= 0.15) and ident <= 1e-14 and time.time() - t0 <= 480
    assert report(7, ok, "entrywise rel err " + ", ".join(f"{v:.3f}" for v in rel.ravel())
                  + f"; reshape identity {ident:.1e}", t0)


def test_c8_end_to_end(desk_realization):
    t0 = time.time()
    cfg = single_config(band=dict(Q=[256], dk=0.25, shifts=dict(count=9, step=0.25)), directions=16)
    ds = er.direction_set(cfg)
    est = er.compute_estimates(cfg, desk_realization, ds, cfg.shifts)
    reports = er.recover(cfg, est, ds, cfg.shifts)
    cov = reports[(0, "covariance", 256.0)].metrics.rel_l2
    rel = reports[(0, "relation", 256.0)].metrics.rel_l2

    # analytic Fourier data on the same polar grid isolates the quadrature error
    bump = GaussianBump((0.4, -0.2), 1.6, 1.0)
    tg = cfg.target_grid
    vals = bump.fourier(ds.vectors[:, None, :] * cfg.shifts[None, :, None])
    data = PolarFourierData(ds.vectors, ds.neg, ds.weights, cfg.shifts, vals, None, "covariance")
    noiseless = recovery_error(invert_polar_fourier(data, tg), tg.evaluate(bump),
                               tg.support_mask(cfg.support_radius)).rel_l2
    ok = cov <= 0.20 and rel <= 0.25 and noiseless <= 0.02 and time.time() - t0 <= 600
    assert report(8, ok, f"rel L2 a_c {cov:.3f}, a_r {rel:.3f}, noiseless {noiseless:.4f}", t0)


def test_c9_decay_diagnostics():
    t0 = time.time()
    grid = Grid(2, 512, 8.0)
    _, st = bump_pair(grid, (0.15, -0.1), 0.4, 1.8)
    x = np.array([np.cos(0.4), np.sin(0.4)])
    offsets = np.arange(0, 21, 1.0)
    tab = er.tabulate_ensemble(ACOUSTIC, st, grid, default_delta(grid), np.stack([x, -x]), 64.0 + offsets, 200, 0,
                               nyquist_fraction=0.95)
    table = decay_diagnostic(tab, x, 64.0, offsets, 200)
    zero = table.moduli["cov"][0]
    at10 = zero / table.moduli["cov"][10]
    mirror = zero / table.moduli["cov_mirror"][0]
    ok = at10 >= 5 and mirror >= 10
    assert report(9, ok, f"zero-offset / offset-10 = {at10:.1f}, zero-offset / mirror = {mirror:.1f}", t0)
