"""From band estimates to strength functions.

The estimates are divided by the model constant to give samples of the
strength Fourier transform on a polar set {tau_i xhat_j}; the strength is
then recovered by a windowed polar quadrature of the inverse transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .band_estimators import model_constant, wavenumber_scale
from .gmig_field import Grid
from .waves_core import WaveKind

WINDOW_START = 0.8


@dataclass
class PolarFourierData:
    """Samples v[j, i] of hat a(tau_i xhat_j), optionally matrix-valued (trailing d x d)."""

    directions: np.ndarray
    neg: Optional[np.ndarray]
    dir_weights: np.ndarray
    taus: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray]
    target: str
    kind: str = ""

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 4

    def conjugate_symmetry_violation(self) -> Optional[np.ndarray]:
        """|v(-xi) - conj v(xi)| / stderr for covariance data with mirrored directions."""
        if self.neg is None or self.stderr is None:
            return None
        v = self.values
        mirrored = v[self.neg]
        if self.is_matrix:
            mirrored = np.swapaxes(mirrored, -1, -2)
        diff = np.abs(mirrored - np.conj(v))
        se = np.sqrt(self.stderr**2 + self.stderr[self.neg] ** 2)
        return diff / np.where(se > 0, se, np.inf)

    def __add__(self, other: "PolarFourierData") -> "PolarFourierData":
        if not (np.array_equal(self.taus, other.taus) and np.array_equal(self.directions, other.directions)):
            raise ValueError("polar data sets live on different sampling sets")
        se = None
        if self.stderr is not None and other.stderr is not None:
            se = np.sqrt(self.stderr**2 + other.stderr**2)
        return PolarFourierData(self.directions, self.neg, self.dir_weights, self.taus,
                                self.values + other.values, se, self.target, self.kind)


def normalize(estimates, stderr, kind: WaveKind, d: int, m: float, target: str,
              directions, shifts, neg=None, dir_weights=None, estimate_target: Optional[str] = None
              ) -> PolarFourierData:
    """Divide band/ensemble estimates by the model constant.

    ``estimates`` has shape (n_dir, n_shift[, d, d]).  Elastic shifts are
    re-indexed from tau to c_s tau so the returned ``taus`` are plain
    Fourier radii.
    """
    if estimate_target is not None and estimate_target != target:
        raise ValueError(f"estimates were computed for the {estimate_target} target, not {target}")
    if target not in ("covariance", "relation"):
        raise ValueError(f"unknown target {target!r}")
    vector_kind = kind.tag in ("electromagnetic", "elastic")
    est = np.asarray(estimates)
    if vector_kind != (est.ndim == 4):
        raise ValueError(f"{kind.tag} estimates have the wrong shape {est.shape}")
    const = model_constant(kind, d, m, target)
    dirs = np.asarray(directions, dtype=float)
    if dir_weights is None:
        area = 2 * np.pi if d == 2 else 4 * np.pi
        dir_weights = np.full(len(dirs), area / len(dirs))
    se = None if stderr is None else np.asarray(stderr) / abs(const)
    taus = wavenumber_scale(kind) * np.asarray(shifts, dtype=float)
    return PolarFourierData(dirs, None if neg is None else np.asarray(neg), np.asarray(dir_weights),
                            taus, est / const, se, target, kind.tag)


def radial_window(taus: np.ndarray, tau_max: float, start: float = WINDOW_START) -> np.ndarray:
    """1 below start*tau_max, raised cosine down to 0 at tau_max."""
    t0 = start * tau_max
    w = np.ones_like(taus, dtype=float)
    hi = taus > t0
    w[hi] = 0.5 * (1 + np.cos(np.pi * (taus[hi] - t0) / (tau_max - t0)))
    return w


def polar_weights(taus: np.ndarray, dir_weights: np.ndarray, d: int, window: bool = True) -> np.ndarray:
    """Quadrature weights w[j, i] for int_{S^{d-1}} int_0^inf g(t xhat) t^{d-1} dt dOmega.

    Trapezoid in tau on t^{d-1} g, with the endpoint derivative correction
    dtau^2/12 * g(0) in d = 2 (the integrand t g has slope g(0) at the origin).
    """
    taus = np.asarray(taus, dtype=float)
    if taus[0] != 0:
        raise ValueError("shift set must include tau = 0")
    dt = np.diff(taus)
    if not np.allclose(dt, dt[0], rtol=1e-9):
        raise ValueError("shifts must be equispaced")
    dt = dt[0]
    radial = taus ** (d - 1) * dt
    if d == 2:
        radial[0] = dt**2 / 12
    if window:
        radial = radial * radial_window(taus, taus[-1])
    else:
        radial[-1] *= 0.5
    return np.outer(dir_weights, radial)


def _synthesize(coef: np.ndarray, xi: np.ndarray, grid: Grid) -> np.ndarray:
    """sum_p coef_p e^{i xi_p . x} on the grid nodes, separably."""
    ax = grid.axis()
    E = [np.exp(1j * np.outer(xi[:, k], ax)) for k in range(grid.d)]  # (P, n)
    if grid.d == 2:
        return (E[0].T * coef) @ E[1]
    return np.einsum("p,pa,pb,pc->abc", coef, E[0], E[1], E[2], optimize=True)


@dataclass
class Reconstruction:
    values: np.ndarray
    imag_residual: float
    propagated_se: float
    tau_max: float
    window: bool


def invert_polar_fourier(data: PolarFourierData, grid: Grid, window: bool = True) -> Reconstruction:
    """a(x) ~ (2 pi)^-d sum_ij w_ij v_ij e^{i tau_i xhat_j . x}.

    Covariance targets are symmetrized (real part for scalars, Hermitian part
    for matrices); the discarded anti-symmetric part is reported as
    ``imag_residual`` next to the propagated standard error.
    """
    d = grid.d
    if data.directions.shape[1] != d:
        raise ValueError("direction dimension does not match the target grid")
    tau_max = float(data.taus[-1])
    if tau_max * grid.h > np.pi * (1 + 1e-12):
        raise ValueError(f"tau_max = {tau_max:.4g} exceeds the target-grid Nyquist limit pi/h = {np.pi / grid.h:.4g}")
    if data.target == "relation":
        if data.neg is None:
            raise ValueError("relation data needs a negation-closed direction set")
    W = polar_weights(data.taus, data.dir_weights, d, window) / (2 * np.pi) ** d
    xi = (data.directions[:, None, :] * data.taus[None, :, None]).reshape(-1, d)
    flat_w = W.reshape(-1)
    if data.is_matrix:
        dd = data.values.shape[-1]
        raw = np.zeros(grid.shape + (dd, dd), dtype=complex)
        for a in range(dd):
            for b in range(dd):
                raw[..., a, b] = _synthesize(flat_w * data.values[..., a, b].reshape(-1), xi, grid)
    else:
        raw = _synthesize(flat_w * data.values.reshape(-1), xi, grid)
    prop = 0.0
    if data.stderr is not None:
        se = data.stderr.reshape(data.stderr.shape[0] * data.stderr.shape[1], -1)
        prop = float(np.sqrt(np.sum((flat_w[:, None] * se) ** 2)))
    if data.target == "covariance":
        if data.is_matrix:
            herm = 0.5 * (raw + np.conj(np.swapaxes(raw, -1, -2)))
            resid = float(np.max(np.abs(raw - herm)))
            out = herm
        else:
            resid = float(np.max(np.abs(raw.imag)))
            out = raw.real
    else:
        resid = 0.0
        out = raw
    return Reconstruction(values=out, imag_residual=resid, propagated_se=prop, tau_max=tau_max, window=window)


@dataclass
class RecoveryMetrics:
    rel_l2: float
    max_abs: float
    abs_l2: float
    degenerate: bool
    per_entry: Optional[np.ndarray] = None


def recovery_error(reconstruction, truth, mask=None, cell_volume: float = 1.0,
                   matrix: bool = False) -> RecoveryMetrics:
    """Relative L2 and max-abs error over the region ``mask`` (default: whole grid).

    ``matrix`` marks trailing d x d entries, which get per-entry errors on top
    of the Frobenius aggregate.  A zero truth gives the absolute L2 error in
    ``rel_l2`` with ``degenerate`` set.
    """
    rec = np.asarray(getattr(reconstruction, "values", reconstruction))
    tru = np.asarray(truth)
    if rec.shape != tru.shape:
        raise ValueError(f"reconstruction shape {rec.shape} differs from truth {tru.shape}")
    if mask is None:
        mask = np.ones(tru.shape[: tru.ndim - (2 if matrix else 0)], dtype=bool)
    diff = (rec - tru)[mask]
    ref = tru[mask]
    abs_l2 = float(np.sqrt(np.sum(np.abs(diff) ** 2) * cell_volume))
    norm = float(np.sqrt(np.sum(np.abs(ref) ** 2) * cell_volume))
    per_entry = None
    if matrix:
        den = np.sqrt(np.sum(np.abs(ref) ** 2, axis=0))
        per_entry = np.sqrt(np.sum(np.abs(diff) ** 2, axis=0)) / np.where(den > 0, den, np.nan)
    degenerate = norm == 0
    return RecoveryMetrics(
        rel_l2=abs_l2 if degenerate else abs_l2 / norm,
        max_abs=float(np.max(np.abs(diff))) if diff.size else 0.0,
        abs_l2=abs_l2,
        degenerate=degenerate,
        per_entry=per_entry,
    )


@dataclass
class RecoveryReport:
    target: str
    reconstruction: np.ndarray
    metrics: Optional[RecoveryMetrics]
    unwindowed_metrics: Optional[RecoveryMetrics]
    tau_max: float
    window: str
    imag_residual: float
    propagated_se: float
    trace: dict = field(default_factory=dict)

    def summary_lines(self) -> list:
        lines = [f"target: {self.target}", f"tau_max: {self.tau_max:.6g}", f"window: {self.window}",
                 f"imag_residual: {self.imag_residual:.6g}", f"propagated_se: {self.propagated_se:.6g}"]
        if self.metrics is not None:
            lines.append(f"rel_l2: {self.metrics.rel_l2:.6g}")
            lines.append(f"max_abs: {self.metrics.max_abs:.6g}")
        if self.unwindowed_metrics is not None:
            lines.append(f"rel_l2_unwindowed: {self.unwindowed_metrics.rel_l2:.6g}")
        for key, val in self.trace.items():
            lines.append(f"trace[{key}]: {val}")
        return lines
