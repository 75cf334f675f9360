"""Sampling of scalar and vector GMIG random sources on a periodic grid.

A GMIG source is synthesized as a pointwise-modulated stationary field,
f(x) = c(x) . g(x), where g has spectral density (|xi|^2 + delta^2)^(-m/2)
and c(x) is a square root of the local (covariance, relation) pair.  The
principal symbols of the resulting covariance and relation operators are
a_c(x)|xi|^-m and a_r(x)|xi|^-m.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

SUPPORT_MARGIN_CELLS = 4
SUPPORT_TOL = 1e-8
PSD_TOL = 1e-10


class AdmissibilityError(ValueError):
    """Strengths do not define a valid complex Gaussian (covariance, relation) pair."""


@dataclass(frozen=True)
class Grid:
    """Periodic box [-L/2, L/2)^d with n nodes per axis, spacing h = L/n."""

    d: int
    n: int
    length: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"node count per axis must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError("grid extent must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def nyquist(self) -> float:
        return np.pi / self.h

    def axis(self) -> np.ndarray:
        return -self.length / 2 + self.h * np.arange(self.n)

    def sparse_axes(self) -> list:
        """Broadcastable per-axis coordinate arrays (like meshgrid(sparse=True))."""
        ax = self.axis()
        out = []
        for k in range(self.d):
            shp = [1] * self.d
            shp[k] = self.n
            out.append(ax.reshape(shp))
        return out

    def points(self) -> np.ndarray:
        """All node coordinates, shape (n, ..., n, d). Only for small grids."""
        return np.stack(np.meshgrid(*([self.axis()] * self.d), indexing="ij"), axis=-1)

    def frequencies(self) -> list:
        """Broadcastable per-axis lattice frequencies 2 pi fftfreq(n, h)."""
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        out = []
        for j in range(self.d):
            shp = [1] * self.d
            shp[j] = self.n
            out.append(k.reshape(shp))
        return out

    def boundary_mask(self, cells: int = SUPPORT_MARGIN_CELLS) -> np.ndarray:
        idx = np.arange(self.n)
        edge1 = (idx < cells) | (idx >= self.n - cells)
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.d):
            shp = [1] * self.d
            shp[k] = self.n
            mask |= edge1.reshape(shp)
        return mask

    def support_mask(self, radius: Optional[float]) -> np.ndarray:
        """Nodes inside the closed ball |x| <= radius (everything if radius is None)."""
        if radius is None:
            return np.ones(self.shape, dtype=bool)
        r2 = sum(a**2 for a in self.sparse_axes())
        return np.broadcast_to(r2 <= radius**2, self.shape)

    def evaluate(self, profile) -> np.ndarray:
        """Sample an analytic profile (callable on (..., d) points) on the nodes."""
        if profile is None:
            return np.zeros(self.shape)
        if np.isscalar(profile):
            return np.full(self.shape, profile)
        if hasattr(profile, "on_axes"):
            return profile.on_axes(self.sparse_axes())
        return profile(self.points())


def spectral_density(m: float, delta: float, xi) -> np.ndarray:
    """S(xi) = (|xi|^2 + delta^2)^(-m/2); xi has its components on the last axis."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    xi = np.asarray(xi, dtype=float)
    k2 = np.sum(xi**2, axis=-1) if xi.ndim else xi**2
    return (k2 + delta**2) ** (-m / 2)


def default_delta(grid: Grid) -> float:
    return 2 * np.pi / grid.length


def lattice_density(grid: Grid, m: float, delta: float) -> np.ndarray:
    """S on the full FFT lattice of the grid."""
    k2 = sum(k**2 for k in grid.frequencies())
    return (k2 + delta**2) ** (-m / 2)


def stationary_covariance(grid: Grid, m: float, delta: float) -> np.ndarray:
    """G(r_n) = L^-d sum_k S(xi_k) e^{i xi_k . r_n} at lattice lags r_n = n h (FFT order)."""
    s = lattice_density(grid, m, delta)
    return np.real(np.fft.ifftn(s)) * grid.size / grid.length**grid.d


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_stationary_pair(grid: Grid, m: float, delta: Optional[float], seed, size=None):
    """Two independent real stationary Gaussian fields with density S.

    Each has covariance G(r) = L^-d sum_k S(xi_k) e^{i xi_k . r} on the lattice.
    One complex white-noise draw is colored by sqrt(S / L^d) and inverse-FFT'd;
    its real and imaginary parts are the two fields.  ``size`` prepends a batch axis.
    """
    if delta is None:
        delta = default_delta(grid)
    rng = _rng(seed)
    amp = np.sqrt(lattice_density(grid, m, delta) / grid.length**grid.d)
    batch = () if size is None else (int(size),)
    shp = batch + grid.shape
    z = rng.standard_normal(shp) + 1j * rng.standard_normal(shp)
    axes = tuple(range(len(batch), len(shp)))
    field_c = np.fft.ifftn(amp * z, axes=axes) * grid.size
    return field_c.real, field_c.imag


def sample_stationary(grid: Grid, m: float, delta: Optional[float], seed, count: int, size=None):
    """``count`` independent real stationary fields, generated pairwise."""
    rng = _rng(seed)
    out = []
    while len(out) < count:
        out.extend(sample_stationary_pair(grid, m, delta, rng, size=size))
    return out[:count]


@dataclass
class ScalarStrengthPair:
    """a_c (real, >= 0) and a_r (complex) sampled on a grid, with order m."""

    m: float
    a_c: np.ndarray
    a_r: np.ndarray

    def __post_init__(self):
        self.a_c = np.asarray(self.a_c, dtype=float)
        self.a_r = np.asarray(self.a_r, dtype=complex)
        if self.a_c.shape != self.a_r.shape:
            raise ValueError("a_c and a_r must have the same shape")

    @classmethod
    def from_profiles(cls, grid: Grid, m: float, a_c, a_r=None, support_radius: Optional[float] = None):
        """Sample analytic profiles; values outside the ball D of ``support_radius`` are zeroed."""
        mask = grid.support_mask(support_radius)
        ac = np.where(mask, np.real(grid.evaluate(a_c)), 0.0)
        ar = np.where(mask, grid.evaluate(a_r), 0.0).astype(complex)
        return cls(m=m, a_c=ac, a_r=ar)

    def scaled(self, s: float) -> "ScalarStrengthPair":
        return ScalarStrengthPair(self.m, s * self.a_c, s * self.a_r)


@dataclass
class MatrixStrengthPair:
    """A_c (Hermitian PSD) and A_r (complex symmetric) d x d fields, shape (*grid, d, d)."""

    m: float
    A_c: np.ndarray
    A_r: np.ndarray

    def __post_init__(self):
        self.A_c = np.asarray(self.A_c, dtype=complex)
        self.A_r = np.asarray(self.A_r, dtype=complex)
        if self.A_c.shape != self.A_r.shape or self.A_c.shape[-1] != self.A_c.shape[-2]:
            raise ValueError("A_c and A_r must be matching (..., d, d) arrays")

    @property
    def dim(self) -> int:
        return self.A_c.shape[-1]

    @classmethod
    def from_profiles(cls, grid: Grid, m: float, A_c, A_r=None, support_radius: Optional[float] = None):
        """A_c, A_r given as d x d nested lists of profiles (None means zero), zeroed outside D."""
        d = grid.d
        mask = grid.support_mask(support_radius)

        def build(desc):
            out = np.zeros(grid.shape + (d, d), dtype=complex)
            if desc is None:
                return out
            for i in range(d):
                for j in range(d):
                    if desc[i][j] is not None:
                        out[..., i, j] = np.where(mask, grid.evaluate(desc[i][j]), 0.0)
            return out

        return cls(m=m, A_c=build(A_c), A_r=build(A_r))

    def scaled(self, s: float) -> "MatrixStrengthPair":
        return MatrixStrengthPair(self.m, s * self.A_c, s * self.A_r)


@dataclass
class FieldRealization:
    """One sampled source. ``values`` has shape grid.shape (scalar) or grid.shape + (d,)."""

    grid: Grid
    values: np.ndarray
    seed: Any
    delta: float
    m: float
    meta: dict = field(default_factory=dict)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.d + 1


@dataclass
class StrengthReport:
    ok: bool
    min_margin: float
    worst_node: tuple
    support_ok: bool
    smoothness_warning: bool
    margins: np.ndarray = field(repr=False)
    messages: list = field(default_factory=list)


def _support_ok(grid: Grid, magnitude: np.ndarray) -> bool:
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if peak == 0:
        return True
    edge = grid.boundary_mask()
    return bool(np.max(magnitude[edge]) <= SUPPORT_TOL * peak)


def _max_relative_jump(a: np.ndarray, d: int) -> float:
    peak = np.max(np.abs(a))
    if peak == 0:
        return 0.0
    jump = 0.0
    for ax in range(d):
        jump = max(jump, float(np.max(np.abs(np.diff(a, axis=ax)))))
    return jump / peak


def augmented_matrix(A_c: np.ndarray, A_r: np.ndarray) -> np.ndarray:
    """[[A_c, A_r], [conj A_r, conj A_c]] stacked over leading axes."""
    top = np.concatenate([A_c, A_r], axis=-1)
    bottom = np.concatenate([np.conj(A_r), np.conj(A_c)], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def validate_strengths(strengths, grid: Optional[Grid] = None) -> StrengthReport:
    """Admissibility margins, support margin and smoothness check.

    Scalar margin is a_c - |a_r|; matrix margin is the smallest eigenvalue of
    the augmented matrix, accepted down to -1e-10 * trace.
    """
    msgs = []
    if isinstance(strengths, ScalarStrengthPair):
        margins = strengths.a_c - np.abs(strengths.a_r)
        scale = np.maximum(strengths.a_c, 0)
        bad = (margins < -PSD_TOL * np.maximum(scale, 1e-300)) | (strengths.a_c < 0)
        magnitude = np.abs(strengths.a_c) + np.abs(strengths.a_r)
        jump = max(_max_relative_jump(strengths.a_c, strengths.a_c.ndim),
                   _max_relative_jump(strengths.a_r, strengths.a_r.ndim))
    elif isinstance(strengths, MatrixStrengthPair):
        aug = augmented_matrix(strengths.A_c, strengths.A_r)
        flat = aug.reshape((-1,) + aug.shape[-2:])
        margins = np.empty(flat.shape[0])
        chunk = 65536
        for s in range(0, flat.shape[0], chunk):
            margins[s:s + chunk] = np.linalg.eigvalsh(flat[s:s + chunk])[:, 0]
        margins = margins.reshape(aug.shape[:-2])
        trace = np.real(np.trace(aug, axis1=-2, axis2=-1))
        bad = margins < -PSD_TOL * np.maximum(trace, 1e-300)
        herm = np.max(np.abs(strengths.A_c - np.conj(np.swapaxes(strengths.A_c, -1, -2))), initial=0)
        sym = np.max(np.abs(strengths.A_r - np.swapaxes(strengths.A_r, -1, -2)), initial=0)
        tol = 1e-12 * max(np.max(np.abs(strengths.A_c), initial=0), 1.0)
        if herm > tol:
            msgs.append(f"A_c is not Hermitian (max deviation {herm:.3g})")
            bad = np.ones_like(bad)
        if sym > tol:
            msgs.append(f"A_r is not symmetric (max deviation {sym:.3g})")
            bad = np.ones_like(bad)
        magnitude = np.sqrt(np.sum(np.abs(strengths.A_c) ** 2 + np.abs(strengths.A_r) ** 2, axis=(-2, -1)))
        nd = margins.ndim
        jump = max(_max_relative_jump(strengths.A_c[..., i, j], nd)
                   for i in range(strengths.dim) for j in range(strengths.dim))
    else:
        raise TypeError(f"unsupported strength type {type(strengths).__name__}")

    worst = np.unravel_index(int(np.argmin(margins)), margins.shape) if margins.size else ()
    worst = tuple(int(i) for i in worst)
    support_ok = True if grid is None else _support_ok(grid, magnitude)
    if not support_ok:
        msgs.append(
            f"strengths exceed {SUPPORT_TOL:g} x peak within {SUPPORT_MARGIN_CELLS} cells of the box boundary"
        )
    if np.any(bad):
        first = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        msgs.append(f"admissibility violated at node {first} (margin {float(margins[first]):.3g})")
    smooth_warn = jump > 0.5
    if smooth_warn:
        msgs.append(f"relative jump between neighbouring nodes {jump:.2f} exceeds 0.5")
    return StrengthReport(
        ok=bool(not np.any(bad) and support_ok),
        min_margin=float(np.min(margins)) if margins.size else 0.0,
        worst_node=worst,
        support_ok=support_ok,
        smoothness_warning=bool(smooth_warn),
        margins=margins,
        messages=msgs,
    )


def _require_admissible(strengths, grid):
    rep = validate_strengths(strengths, grid)
    if not rep.ok:
        raise AdmissibilityError("; ".join(rep.messages))
    return rep


def check_sampler_order(m: float, d: int) -> None:
    if not (d - 6 < m < d + 2):
        raise ValueError(f"sampler accepts m in ({d - 6}, {d + 2}), got {m}")


def scalar_modulation(a_c: np.ndarray, a_r: np.ndarray):
    """Coefficients (c1, c2) with f = c1 g1 + c2 g2.

    c1 = L11 + i L21, c2 = i L22 with L the lower Cholesky factor of
    M = 1/2 [[a_c + Re a_r, Im a_r], [Im a_r, a_c - Re a_r]], clamped at
    semidefinite nodes.
    """
    a_c = np.asarray(a_c, dtype=float)
    a_r = np.asarray(a_r, dtype=complex)
    m11 = 0.5 * (a_c + a_r.real)
    m21 = 0.5 * a_r.imag
    m22 = 0.5 * (a_c - a_r.real)
    l11 = np.sqrt(np.maximum(m11, 0))
    safe = np.where(l11 > 0, l11, 1.0)
    l21 = np.where(l11 > 0, m21 / safe, 0.0)
    l22 = np.sqrt(np.maximum(m22 - l21**2, 0))
    return l11 + 1j * l21, 1j * l22


def sample_scalar_gmig(strengths: ScalarStrengthPair, grid: Grid, delta: Optional[float] = None,
                       seed=None, size=None) -> FieldRealization:
    """Complex scalar GMIG source with strengths (a_c, a_r)."""
    return PreparedSampler(strengths, grid, delta).draw(seed, size)


def real_covariance_blocks(A_c: np.ndarray, A_r: np.ndarray) -> np.ndarray:
    """2d x 2d real covariance of (Re f, Im f) for a (A_c, A_r) pair."""
    g11 = 0.5 * np.real(A_c + A_r)
    g22 = 0.5 * np.real(A_c - A_r)
    g12 = 0.5 * (np.imag(A_r) - np.imag(A_c))
    g21 = 0.5 * (np.imag(A_r) + np.imag(A_c))
    top = np.concatenate([g11, g12], axis=-1)
    bottom = np.concatenate([g21, g22], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def vector_modulation(A_c: np.ndarray, A_r: np.ndarray, chunk: int = 65536) -> np.ndarray:
    """Complex d x 2d coefficient field C(x) with f = C(x) g, g 2d i.i.d. fields.

    Uses the symmetric square root V sqrt(W) V^T of the real block
    covariance (negative round-off eigenvalues clamped to zero).  It is the
    unique PSD root, so C(x) varies smoothly with the strengths; only nodes
    with nonzero strength are decomposed.
    """
    d = A_c.shape[-1]
    gamma = real_covariance_blocks(A_c, A_r)
    flat = gamma.reshape((-1, 2 * d, 2 * d))
    coeff = np.zeros((flat.shape[0], d, 2 * d), dtype=complex)
    active = np.flatnonzero(np.any(flat != 0, axis=(1, 2)))
    for s in range(0, active.size, chunk):
        idx = active[s:s + chunk]
        w, v = np.linalg.eigh(flat[idx])
        root = (v * np.sqrt(np.maximum(w, 0))[:, None, :]) @ np.swapaxes(v, 1, 2)
        coeff[idx] = root[:, :d, :] + 1j * root[:, d:, :]
    return coeff.reshape(A_c.shape[:-2] + (d, 2 * d))


def sample_vector_gmig(strengths: MatrixStrengthPair, grid: Grid, delta: Optional[float] = None,
                       seed=None, size=None) -> FieldRealization:
    """Complex d-vector GMIG source with matrix strengths (A_c, A_r)."""
    return PreparedSampler(strengths, grid, delta).draw(seed, size)


class PreparedSampler:
    """Validated strengths with their modulation coefficients, ready for repeated draws."""

    def __init__(self, strengths, grid: Grid, delta: Optional[float] = None):
        check_sampler_order(strengths.m, grid.d)
        self.vector = isinstance(strengths, MatrixStrengthPair)
        shape = strengths.A_c.shape[:-2] if self.vector else strengths.a_c.shape
        if shape != grid.shape:
            raise ValueError("strength grid does not match the sampling grid")
        _require_admissible(strengths, grid)
        self.grid = grid
        self.m = strengths.m
        self.delta = default_delta(grid) if delta is None else delta
        if self.vector:
            self.dim = strengths.dim
            self.coeff = vector_modulation(strengths.A_c, strengths.A_r)
        else:
            self.coeff = scalar_modulation(strengths.a_c, strengths.a_r)

    def draw(self, seed=None, size=None) -> FieldRealization:
        if self.vector:
            gs = sample_stationary(self.grid, self.m, self.delta, seed, 2 * self.dim, size=size)
            values = np.zeros(gs[0].shape + (self.dim,), dtype=complex)
            for k, g in enumerate(gs):
                values += self.coeff[..., k] * g[..., None]
        else:
            c1, c2 = self.coeff
            g1, g2 = sample_stationary_pair(self.grid, self.m, self.delta, seed, size=size)
            values = c1 * g1 + c2 * g2
        return FieldRealization(grid=self.grid, values=values, seed=seed, delta=self.delta, m=self.m)
