"""Frequency-band and ensemble estimators of the strength Fourier modes.

Single realization:
    (1/Q) int_Q^{2Q} w(k) P(k, tau) dk
Ensemble:
    mean over realizations of w(k) P(k, tau) at one large k

with w(k) = k^(m+3-d) (acoustic), k^(m+7-d) (biharmonic), k^(m-2)
(electromagnetic) or (c_s w)^(m+3-d) (elastic), and P the covariance product
u(x, k+tau) conj u(x, k) or the relation product u(x, k+tau) u(-x, k).
Both converge to (model constant) x hat a(tau x); the constant is derived
from the far-field prefactors, never typed in.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .waves_core import WaveKind, farfield_prefactor

TARGETS = ("covariance", "relation")
DEFAULT_JACKKNIFE_BLOCKS = 16


@dataclass(frozen=True)
class EstimatorConfig:
    kind: WaveKind
    target: str
    m: float
    d: int
    xhat: tuple = None
    tau: float = 0.0
    Q: float = 64.0
    dk: float = 0.25
    mode: str = "single"
    M: int = 0
    kappa_eval: float = 0.0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.mode not in ("single", "ensemble"):
            raise ValueError("mode must be 'single' or 'ensemble'")
        if self.tau < 0:
            raise ValueError("shift tau must be nonnegative")
        if self.mode == "single" and not (0 < self.dk <= 0.5):
            raise ValueError(f"band step must lie in (0, 0.5], got {self.dk}")
        if self.kind.tag == "electromagnetic" and self.d != 3:
            raise ValueError("electromagnetic estimators need d = 3")


@dataclass
class BandAverageResult:
    estimate: Any
    stderr: Any
    config: Optional[EstimatorConfig]
    nodes: int
    seeds: Any = None
    extra: dict = field(default_factory=dict)


def weight_exponent(kind: WaveKind, m: float, d: int) -> float:
    return {"acoustic": m + 3 - d, "biharmonic": m + 7 - d,
            "electromagnetic": m - 2, "elastic": m + 3 - d}[kind.tag]


def band_weight(kind: WaveKind, m: float, d: int, k, exponent_offset: float = 0.0):
    """w(k); for elastic waves k is the angular frequency and w = (c_s k)^(m+3-d)."""
    p = weight_exponent(kind, m, d) + exponent_offset
    k = np.asarray(k, dtype=float)
    if kind.tag == "elastic":
        return (kind.speeds.c_s * k) ** p
    return k**p


def effective_prefactor(kind: WaveKind, d: int, k):
    """Prefactor P(k) with u = P(k) hat f(c k xhat) for the combined data.

    For elastic waves this is c_s^-2 P_s(k), which coincides with
    c_p^-2 P_p(c_s k / c_p); the shared value is what makes the four-term
    combination collapse to an outer product of one Fourier vector.
    """
    if kind.tag != "elastic":
        return farfield_prefactor(kind, d, k)
    sp = kind.speeds
    _, pre_s = farfield_prefactor(kind, d, k)
    pre_p, _ = farfield_prefactor(kind, d, sp.c_s / sp.c_p * np.asarray(k, dtype=float))
    a = pre_s / sp.c_s**2
    b = pre_p / sp.c_p**2
    if not np.allclose(a, b, rtol=1e-12, atol=0):
        raise AssertionError("compressional and shear prefactors disagree after rescaling")
    return a


def wavenumber_scale(kind: WaveKind) -> float:
    """Factor c turning the band variable into the Fourier argument |xi| = c k."""
    return kind.speeds.c_s if kind.tag == "elastic" else 1.0


def model_constant(kind: WaveKind, d: int, m: float, target: str) -> complex:
    """Limit constant: w(k) P(k) conj P(k) (c k)^-m (covariance) or w P P (c k)^-m (relation).

    Exact for any k because every factor is a power law; k = 1 is used.
    """
    k0 = 1.0
    P = effective_prefactor(kind, d, k0)
    w = band_weight(kind, m, d, k0)
    c = wavenumber_scale(kind)
    prod = P * np.conj(P) if target == "covariance" else P * P
    return complex(w * prod * (c * k0) ** (-m))


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def band_nodes(Q: float, dk: float) -> np.ndarray:
    n = int(np.ceil(Q / dk - 1e-9))
    return np.linspace(Q, 2 * Q, n + 1)


def jackknife_stderr(values: np.ndarray, weights: np.ndarray, blocks: int = DEFAULT_JACKKNIFE_BLOCKS):
    """Delete-one-block jackknife standard error of a weighted mean along axis 0.

    Complex inputs get sqrt(se_re^2 + se_im^2).
    """
    n = values.shape[0]
    blocks = max(2, min(blocks, n))
    edges = np.linspace(0, n, blocks + 1).astype(int)
    wshape = (-1,) + (1,) * (values.ndim - 1)
    wv = values * weights.reshape(wshape)
    sums = np.stack([wv[a:b].sum(axis=0) for a, b in zip(edges[:-1], edges[1:])])
    wsum = np.array([weights[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    total, wtot = sums.sum(axis=0), wsum.sum()
    loo = (total[None] - sums) / (wtot - wsum).reshape((-1,) + (1,) * (values.ndim - 1))
    dev = loo - loo.mean(axis=0)
    var = (blocks - 1) / blocks * np.sum(np.abs(dev) ** 2, axis=0)
    return np.sqrt(var)


def _product(kind: WaveKind, target: str, a, b):
    """Pointwise estimator product of shifted data a and base data b (own or mirrored direction)."""
    if kind.tag in ("acoustic", "biharmonic"):
        return a * np.conj(b) if target == "covariance" else a * b
    if target == "covariance":
        return a[..., :, None] * np.conj(b)[..., None, :]
    return a[..., :, None] * b[..., None, :]


def polarization_vectors(xhat):
    """Rows v_p[j] = xhat_j xhat and v_s[j] = e_j - v_p[j]."""
    xhat = np.asarray(xhat, dtype=float)
    vp = np.outer(xhat, xhat)
    return vp, np.eye(len(xhat)) - vp


def reshape_rows(A) -> np.ndarray:
    """Row-major flattening of a d x d matrix."""
    return np.asarray(A).reshape(-1)


def combined_elastic(kind: WaveKind, u_p, u_s):
    """c_p^-2 u_p + c_s^-2 u_s; u_p must already be taken at the rescaled frequency."""
    sp = kind.speeds
    return u_p / sp.c_p**2 + u_s / sp.c_s**2


def elastic_four_term(kind: WaveKind, target: str, p_shift, s_shift, p_base, s_base):
    """Four-term compressional/shear combination.

    Coefficients c_p^-4, c_s^-2 c_p^-2, c_s^-2 c_p^-2, c_s^-4 on the pp, ps, sp
    and ss products; p-slots are evaluated at c_s/c_p times the band frequency.
    """
    sp = kind.speeds
    cp2, cs2 = sp.c_p**-2, sp.c_s**-2
    return (cp2 * cp2 * _product(kind, target, p_shift, p_base)
            + cp2 * cs2 * _product(kind, target, p_shift, s_base)
            + cs2 * cp2 * _product(kind, target, s_shift, p_base)
            + cs2 * cs2 * _product(kind, target, s_shift, s_base))


def _front(kind: WaveKind, arr):
    """Move the frequency axis of raw far-field data to the front."""
    ax = -1 if kind.tag in ("acoustic", "biharmonic") else -2
    return np.moveaxis(arr, ax, 0)


def _query(kind: WaveKind, source: Callable, xhat, freq):
    """Data needed by the estimators at band frequencies ``freq`` along xhat.

    Scalar/electromagnetic: the far-field values.  Elastic: the pair
    (u_p at c_s/c_p * freq, u_s at freq).  The frequency axis comes first.
    """
    if kind.tag != "elastic":
        return _front(kind, source(xhat, freq))
    sp = kind.speeds
    u_p, _ = source(xhat, sp.c_s / sp.c_p * np.asarray(freq), parts="p")
    _, u_s = source(xhat, freq, parts="s")
    return _front(kind, u_p), _front(kind, u_s)


def _estimator_products(kind, target, shifted, base):
    if kind.tag == "elastic":
        return elastic_four_term(kind, target, shifted[0], shifted[1], base[0], base[1])
    return _product(kind, target, shifted, base)


def _rows(data, sl):
    if isinstance(data, tuple):
        return tuple(x[sl] for x in data)
    return data[sl]


def _expand(w, ndim):
    return w.reshape((-1,) + (1,) * (ndim - 1))


def band_average_set(kind: WaveKind, source: Callable, directions, neg_index, shifts: Sequence[float],
                     Qs: Sequence[float], dk: float, m: float, d: int,
                     targets=TARGETS, blocks: int = DEFAULT_JACKKNIFE_BLOCKS,
                     weight_offset: float = 0.0) -> dict:
    """Band averages over a set of directions, shifts and band starts.

    One ray of far-field data per direction covers every (Q, tau) when the
    shifts and band starts are integer multiples of ``dk``; otherwise each
    shift is queried separately.  Returns {(target, Q): BandAverageResult}
    with estimates shaped (n_dir, n_shift[, d, d]).
    """
    if not 0 < dk <= 0.5:
        raise ValueError(f"band step must lie in (0, 0.5], got {dk}")
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    directions = np.asarray(directions, dtype=float)
    neg_index = np.asarray(neg_index)
    Qs = [float(q) for q in Qs]
    for q in Qs:
        if abs(q / dk - round(q / dk)) > 1e-9:
            raise ValueError(f"band start {q} is not a multiple of the step {dk}")
    steps = shifts / dk
    aligned = bool(np.allclose(steps, np.round(steps), atol=1e-9))
    lo, hi = min(Qs), 2 * max(Qs)
    base_n = int(round((hi - lo) / dk)) + 1
    extra = int(round(steps.max())) if aligned else 0
    grid_k = lo + dk * np.arange(base_n + extra)
    wanted = set(range(len(directions)))
    if "relation" in targets:
        wanted |= set(int(i) for i in neg_index)
    data = {j: _query(kind, source, directions[j], grid_k) for j in sorted(wanted)}
    shifted = {}
    if not aligned:
        for j in range(len(directions)):
            shifted[j] = [_query(kind, source, directions[j], grid_k[:base_n] + t) for t in shifts]

    results = {}
    for q in Qs:
        start = int(round((q - lo) / dk))
        count = int(round(q / dk)) + 1
        nodes = grid_k[start:start + count]
        tw = _trapezoid_weights(count)
        wk = band_weight(kind, m, d, nodes, weight_offset)
        for target in targets:
            est = []
            err = []
            for j in range(len(directions)):
                jb = j if target == "covariance" else int(neg_index[j])
                base = _rows(data[jb], slice(start, start + count))
                row_e, row_s = [], []
                for i, st in enumerate(steps):
                    if aligned:
                        off = start + int(round(st))
                        sh = _rows(data[j], slice(off, off + count))
                    else:
                        sh = _rows(shifted[j][i], slice(start, start + count))
                    vals = _estimator_products(kind, target, sh, base)
                    vals = vals * _expand(wk, vals.ndim)
                    row_e.append(np.tensordot(tw, vals, axes=(0, 0)) * dk / q)
                    row_s.append(jackknife_stderr(vals, tw, blocks))
                est.append(row_e)
                err.append(row_s)
            results[(target, q)] = BandAverageResult(
                estimate=np.array(est), stderr=np.array(err), config=None, nodes=count,
                extra={"shifts": shifts, "directions": directions, "Q": q, "dk": dk, "target": target},
            )
    return results


def band_average(config: EstimatorConfig, source: Callable, seed=None) -> BandAverageResult:
    """Single-realization band average for one (direction, shift).

    ``source(xhat, freqs)`` returns far-field values (elastic: ``source(xhat,
    freqs, parts=...)`` returning (u_p, u_s)).  The relation target pairs the
    direction with its negation.
    """
    if config.mode != "single":
        raise ValueError("band_average needs a single-realization config")
    xhat = np.asarray(config.xhat, dtype=float)
    dirs = np.stack([xhat, -xhat])
    res = band_average_set(config.kind, source, dirs, np.array([1, 0]), [config.tau], [config.Q],
                           config.dk, config.m, config.d, targets=(config.target,))
    r = res[(config.target, config.Q)]
    return BandAverageResult(estimate=r.estimate[0, 0], stderr=r.stderr[0, 0], config=config,
                             nodes=r.nodes, seeds=seed)


def ensemble_products(kind: WaveKind, target: str, source: Callable, xhat, kappa: float, tau: float, m: float,
                      d: int):
    """Per-realization weighted products w(k) P(k, tau), realization axis first.

    ``source`` must return arrays with a leading realization axis.
    """
    xhat = np.asarray(xhat, dtype=float)
    freq = np.array([kappa + tau, kappa]) if tau > 0 else np.array([kappa])
    own = _query(kind, source, xhat, freq)
    other = own if target == "covariance" else _query(kind, source, -xhat, freq)
    last = len(freq) - 1
    prod = _estimator_products(kind, target, _rows(own, 0), _rows(other, last))
    return band_weight(kind, m, d, kappa) * prod


def ensemble_limit(config: EstimatorConfig, source: Callable, seeds=None) -> BandAverageResult:
    """Monte-Carlo mean of w(k_eval) P(k_eval, tau) over a batch of realizations."""
    if config.mode != "ensemble":
        raise ValueError("ensemble_limit needs an ensemble config")
    if config.M < 2:
        raise ValueError("ensemble size M must be at least 2 to estimate a variance")
    if not config.kappa_eval > 0:
        raise ValueError("kappa_eval must be positive")
    prod = ensemble_products(config.kind, config.target, source, config.xhat, config.kappa_eval,
                             config.tau, config.m, config.d)
    if prod.shape[0] != config.M:
        raise ValueError(f"source returned {prod.shape[0]} realizations, expected M = {config.M}")
    mean = prod.mean(axis=0)
    se = np.sqrt((np.var(prod.real, axis=0, ddof=1) + np.var(prod.imag, axis=0, ddof=1)) / config.M)
    return BandAverageResult(estimate=mean, stderr=se, config=config, nodes=1, seeds=seeds)


@dataclass
class DecayTable:
    offsets: np.ndarray
    kappa2: float
    moduli: dict
    stderr: dict
    fitted_exponent: float


def decay_diagnostic(source: Callable, xhat, kappa2: float, offsets, ensemble_size: int) -> DecayTable:
    """Moduli of the four second moments of far-field data at (k1, k2) = (k2 + offset, k2).

    Keys: 'cov' E[u(x,k1) conj u(x,k2)], 'rel' E[u(x,k1) u(-x,k2)],
    'cov_mirror' E[u(x,k1) conj u(-x,k2)], 'rel_same' E[u(x,k1) u(x,k2)].
    ``source`` returns batched scalar far-field arrays (M, F).  The fitted
    exponent is the slope of log|cov| against log(1 + offset).
    """
    if ensemble_size < 100:
        raise ValueError("decay diagnostics need an ensemble of at least 100 realizations")
    xhat = np.asarray(xhat, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    k1 = kappa2 + offsets
    freq = np.concatenate([[kappa2], k1])
    up = source(xhat, freq)
    um = source(-xhat, freq)
    if up.shape[0] != ensemble_size:
        raise ValueError("ensemble size mismatch")
    a = up[:, 1:]
    pairs = {
        "cov": a * np.conj(up[:, :1]),
        "rel": a * um[:, :1],
        "cov_mirror": a * np.conj(um[:, :1]),
        "rel_same": a * up[:, :1],
    }
    moduli, errs = {}, {}
    M = ensemble_size
    for key, p in pairs.items():
        mean = p.mean(axis=0)
        moduli[key] = np.abs(mean)
        errs[key] = np.sqrt((np.var(p.real, axis=0, ddof=1) + np.var(p.imag, axis=0, ddof=1)) / M)
    mask = offsets > 0
    slope = np.nan
    if np.count_nonzero(mask) >= 2:
        slope = float(np.polyfit(np.log1p(offsets[mask]), np.log(moduli["cov"][mask]), 1)[0])
    return DecayTable(offsets=offsets, kappa2=kappa2, moduli=moduli, stderr=errs, fitted_exponent=slope)
