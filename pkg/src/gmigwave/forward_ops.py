"""Far-field patterns as scaled Fourier transforms of a source, and a
diagnostic near-field volume potential.

The discrete source is taken as ground truth: its Fourier transform is the
exact lattice sum h^d sum_n e^{-i xi . y_n} f_n.  Along a ray xi = kappa xhat
with equispaced kappa the sum is evaluated with a chirp z-transform on the
innermost axis and explicit phase factors on the remaining ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.signal import CZT

from .gmig_field import FieldRealization, Grid
from .waves_core import (
    WaveKind,
    farfield_prefactor,
    green_tensor_elastic,
    fundamental_biharmonic,
    helmholtz_radial,
)

DEFAULT_NYQUIST_FRACTION = 0.5


class NyquistError(ValueError):
    """Requested frequency is not resolved by the source grid."""


@dataclass(frozen=True)
class DirectionSet:
    """Unit vectors closed under negation; ``neg[j]`` is the index of -x_j."""

    vectors: np.ndarray
    neg: np.ndarray
    weights: np.ndarray

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def circle(cls, count: int, offset: float = 0.0) -> "DirectionSet":
        """``count`` (even) equispaced directions on the unit circle."""
        if count < 2 or count % 2:
            raise ValueError("circle direction count must be even and >= 2")
        theta = offset + 2 * np.pi * np.arange(count) / count
        vec = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        neg = (np.arange(count) + count // 2) % count
        w = np.full(count, 2 * np.pi / count)
        return cls(vec, neg, w)

    @classmethod
    def sphere(cls, count: int) -> "DirectionSet":
        """Quasi-uniform Fibonacci covering of the upper hemisphere, mirrored."""
        if count < 2 or count % 2:
            raise ValueError("sphere direction count must be even and >= 2")
        half = count // 2
        k = np.arange(half) + 0.5
        z = k / half
        phi = np.pi * (1 + np.sqrt(5)) * k
        rho = np.sqrt(1 - z**2)
        up = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
        vec = np.concatenate([up, -up])
        neg = np.concatenate([np.arange(half) + half, np.arange(half)])
        w = np.full(count, 4 * np.pi / count)
        return cls(vec, neg, w)

    @classmethod
    def from_vectors(cls, vectors, weights=None) -> "DirectionSet":
        vec = np.asarray(vectors, dtype=float)
        norms = np.linalg.norm(vec, axis=1)
        if np.max(np.abs(norms - 1)) > 1e-12:
            raise ValueError("direction vectors must have unit length")
        neg = np.full(len(vec), -1)
        for j, v in enumerate(vec):
            hit = np.flatnonzero(np.max(np.abs(vec + v), axis=1) < 1e-12)
            if hit.size:
                neg[j] = hit[0]
        if np.any(neg < 0):
            raise ValueError("direction set must be closed under negation")
        if weights is None:
            area = 2 * np.pi if vec.shape[1] == 2 else 4 * np.pi
            weights = np.full(len(vec), area / len(vec))
        return cls(vec, neg, np.asarray(weights, dtype=float))

    @classmethod
    def make(cls, d: int, count: int) -> "DirectionSet":
        return cls.circle(count) if d == 2 else cls.sphere(count)


@dataclass(frozen=True)
class FrequencyBand:
    """Band [Q, 2Q] sampled with step dk, plus nonnegative shifts tau."""

    Q: float
    dk: float = 0.25
    shifts: tuple = (0.0,)

    def __post_init__(self):
        if not self.Q > 0:
            raise ValueError("band start Q must be positive")
        if not 0 < self.dk:
            raise ValueError("band step must be positive")
        if any(t < 0 for t in self.shifts):
            raise ValueError("shifts must be nonnegative")

    @property
    def nodes(self) -> np.ndarray:
        count = int(round(self.Q / self.dk))
        return self.Q + self.dk * np.arange(count + 1)

    @property
    def max_frequency(self) -> float:
        return float(self.nodes[-1] + max(self.shifts))

    def check_feasible(self, grid: Grid, fraction: float = DEFAULT_NYQUIST_FRACTION, scale: float = 1.0):
        """kappa_max + tau_max (times a wavenumber scale) must fit the Nyquist budget."""
        top = scale * self.max_frequency
        limit = fraction * grid.nyquist
        if top > limit:
            raise NyquistError(
                f"band reaches wavenumber {top:.4g} but the budget is {fraction:g} x pi/h = {limit:.4g}"
            )


@dataclass
class FarFieldRecord:
    """Far-field values along one direction.

    ``value`` has shape (..., F) for scalar kinds and (..., F, d) for the
    electromagnetic kind.  Elastic records keep ``value = (u_p, u_s)``.
    """

    kind: str
    xhat: np.ndarray
    frequency: np.ndarray
    value: Any
    seed: Any = None


# Fourier transforms of grid data -------------------------------------------------

def _as_batch(values: np.ndarray, grid: Grid, vector: bool):
    """Reshape to (B, n, ..., n, C) and return the original batch/component shape."""
    d = grid.d
    comp = values.shape[-1] if vector else 1
    gshape = values.shape[values.ndim - d - int(vector): values.ndim - int(vector)]
    if gshape != grid.shape:
        raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
    batch = values.shape[: values.ndim - d - int(vector)]
    arr = values.reshape((-1,) + grid.shape + (comp,))
    return arr, batch, comp


def _support_box(arr: np.ndarray, d: int):
    """Index ranges of the bounding box of nonzero entries (over batch and components)."""
    nz = np.any(arr != 0, axis=(0, arr.ndim - 1))
    if not np.any(nz):
        return None
    box = []
    for ax in range(d):
        other = tuple(a for a in range(d) if a != ax)
        hit = np.flatnonzero(np.any(nz, axis=other))
        box.append((int(hit[0]), int(hit[-1]) + 1))
    return box


def _check_nyquist(xi, grid: Grid):
    kmax = float(np.max(np.linalg.norm(np.atleast_2d(xi), axis=-1), initial=0))
    if kmax > grid.nyquist * (1 + 1e-12):
        raise NyquistError(f"|xi| = {kmax:.4g} exceeds the grid Nyquist limit pi/h = {grid.nyquist:.4g}")


def fourier_direct(values: np.ndarray, grid: Grid, xi, vector: bool = False) -> np.ndarray:
    """h^d sum_n e^{-i xi . y_n} f_n at arbitrary points xi (shape (P, d)).

    Separable evaluation over the support bounding box.  Returns shape
    batch + (P,) (+ (d,) for vector data).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    _check_nyquist(xi, grid)
    arr, batch, comp = _as_batch(values, grid, vector)
    P = xi.shape[0]
    box = _support_box(arr, grid.d)
    if box is None:
        out = np.zeros((arr.shape[0], P, comp), dtype=complex)
    else:
        sl = (slice(None),) + tuple(slice(a, b) for a, b in box) + (slice(None),)
        sub = arr[sl]
        ax = grid.axis()
        exps = [np.exp(-1j * np.outer(xi[:, k], ax[a:b])) for k, (a, b) in enumerate(box)]
        if grid.d == 2:
            tmp = np.einsum("bijc,pj->bipc", sub, exps[1], optimize=True)
            out = np.einsum("pi,bipc->bpc", exps[0], tmp, optimize=True)
        else:
            tmp = np.einsum("bijkc,pk->bijpc", sub, exps[2], optimize=True)
            tmp = np.einsum("pj,bijpc->bipc", exps[1], tmp, optimize=True)
            out = np.einsum("pi,bipc->bpc", exps[0], tmp, optimize=True)
        out = out * grid.cell_volume
    out = out.reshape(batch + (P,) + ((comp,) if vector else ()))
    return out


def fourier_ray(values: np.ndarray, grid: Grid, xhat, k0: float, dk: float, count: int,
                vector: bool = False) -> np.ndarray:
    """Lattice Fourier sum at xi_j = (k0 + j dk) xhat, j = 0..count-1.

    Chirp z-transform along the last grid axis, explicit phases elsewhere.
    Same output layout as :func:`fourier_direct`.
    """
    xhat = np.asarray(xhat, dtype=float)
    kappa = k0 + dk * np.arange(count)
    _check_nyquist(np.max(np.abs(kappa)) * xhat[None, :], grid)
    arr, batch, comp = _as_batch(values, grid, vector)
    box = _support_box(arr, grid.d)
    if box is None:
        out = np.zeros((arr.shape[0], count, comp), dtype=complex)
        return out.reshape(batch + (count,) + ((comp,) if vector else ()))
    sl = (slice(None),) + tuple(slice(a, b) for a, b in box) + (slice(None),)
    sub = np.moveaxis(arr[sl], -1, 1)  # (B, C, n1, ..., nd)
    ax = grid.axis()
    h = grid.h
    last = grid.d - 1
    n_last = box[last][1] - box[last][0]
    y0 = ax[box[last][0]]
    czt = CZT(n_last, count, w=np.exp(-1j * dk * xhat[last] * h), a=np.exp(1j * k0 * xhat[last] * h))
    tmp = czt(sub, axis=-1) * np.exp(-1j * kappa * xhat[last] * y0)
    # tmp: (B, C, n1, [n2,] J); contract the remaining axes one at a time
    for k in range(last - 1, -1, -1):
        yk = ax[box[k][0]:box[k][1]]
        phase = np.exp(-1j * np.outer(yk, kappa) * xhat[k])  # (n_k, J)
        tmp = np.einsum("...ij,ij->...j", tmp, phase, optimize=True)
    out = np.moveaxis(tmp, 1, -1) * grid.cell_volume  # (B, J, C)
    return out.reshape(batch + (count,) + ((comp,) if vector else ()))


def source_fourier(f: FieldRealization, xi) -> np.ndarray:
    """Lattice quadrature of int e^{-i xi . y} f(y) dy at points xi (shape (P, d) or (d,))."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    out = fourier_direct(f.values, f.grid, np.atleast_2d(xi), vector=f.is_vector)
    if single:
        out = np.take(out, 0, axis=-2 if f.is_vector else -1)
    return out


def _is_progression(freq: np.ndarray) -> bool:
    if freq.size < 8:
        return False
    step = np.diff(freq)
    return bool(step[0] > 0 and np.allclose(step, step[0], rtol=1e-12, atol=1e-12 * abs(freq[-1])))


def fourier_along(values, grid: Grid, xhat, wavenumbers, vector: bool = False) -> np.ndarray:
    """Fourier sum at wavenumbers * xhat, choosing CZT for long progressions."""
    k = np.atleast_1d(np.asarray(wavenumbers, dtype=float))
    if _is_progression(k):
        return fourier_ray(values, grid, xhat, k[0], k[1] - k[0], k.size, vector=vector)
    xi = k[:, None] * np.asarray(xhat, dtype=float)[None, :]
    return fourier_direct(values, grid, xi, vector=vector)


# Far-field patterns ---------------------------------------------------------------

def _validate_frequency(freq, grid: Grid, scale: float, fraction: float):
    freq = np.atleast_1d(np.asarray(freq, dtype=float))
    if np.any(freq <= 0):
        raise ValueError("frequency must be positive")
    top = scale * float(np.max(freq))
    if top > fraction * grid.nyquist:
        raise NyquistError(
            f"wavenumber {top:.4g} exceeds the budget {fraction:g} x pi/h = {fraction * grid.nyquist:.4g}"
        )
    return freq


def farfield_values(kind: WaveKind, values: np.ndarray, grid: Grid, xhat, frequency,
                    nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION, parts: str = "ps"):
    """Raw far-field arrays; see :func:`farfield` for the record-wrapped version.

    ``parts`` selects the elastic components to compute ("p", "s" or "ps");
    a skipped component is returned as None.
    """
    xhat = np.asarray(xhat, dtype=float)
    d = grid.d
    if xhat.shape != (d,) or abs(np.linalg.norm(xhat) - 1) > 1e-12:
        raise ValueError("xhat must be a unit vector of the grid dimension")
    tag = kind.tag
    if tag in ("acoustic", "biharmonic"):
        freq = _validate_frequency(frequency, grid, 1.0, nyquist_fraction)
        fh = fourier_along(values, grid, xhat, freq)
        return farfield_prefactor(kind, d, freq) * fh
    if tag == "electromagnetic":
        if d != 3:
            raise ValueError("electromagnetic model is only defined for d = 3")
        freq = _validate_frequency(frequency, grid, 1.0, nyquist_fraction)
        fh = fourier_along(values, grid, xhat, freq, vector=True)
        return farfield_prefactor(kind, d, freq)[:, None] * fh
    sp = kind.speeds
    proj = np.outer(xhat, xhat)
    u_p = u_s = None
    if "p" in parts:
        freq = _validate_frequency(frequency, grid, sp.c_p, nyquist_fraction)
        pre_p, _ = farfield_prefactor(kind, d, freq)
        fp = fourier_along(values, grid, xhat, sp.c_p * freq, vector=True)
        u_p = pre_p[:, None] * (fp @ proj.T)
    if "s" in parts:
        freq = _validate_frequency(frequency, grid, sp.c_s, nyquist_fraction)
        _, pre_s = farfield_prefactor(kind, d, freq)
        fs = fourier_along(values, grid, xhat, sp.c_s * freq, vector=True)
        u_s = pre_s[:, None] * (fs @ (np.eye(d) - proj).T)
    return u_p, u_s


def farfield(kind: WaveKind, f: FieldRealization, xhat, frequency,
             nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION) -> FarFieldRecord:
    """Far-field pattern of the radiated wave along ``xhat`` at one or more frequencies."""
    freq = np.atleast_1d(np.asarray(frequency, dtype=float))
    val = farfield_values(kind, f.values, f.grid, xhat, freq, nyquist_fraction)
    return FarFieldRecord(kind=kind.tag, xhat=np.asarray(xhat, dtype=float), frequency=freq,
                          value=val, seed=f.seed)


class FarFieldSource:
    """Callable (xhat, frequencies) -> far-field values for one realization.

    This is the callback shape consumed by the band estimators.
    """

    def __init__(self, kind: WaveKind, f: FieldRealization,
                 nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION):
        self.kind = kind
        self.field = f
        self.nyquist_fraction = nyquist_fraction

    def __call__(self, xhat, frequency, parts: str = "ps"):
        return farfield_values(self.kind, self.field.values, self.field.grid, xhat, frequency,
                               self.nyquist_fraction, parts)


# Near field -----------------------------------------------------------------------

def _support_points(f: FieldRealization):
    vals = f.values
    mag = np.abs(vals) if not f.is_vector else np.linalg.norm(vals, axis=-1)
    idx = np.nonzero(mag)
    pts = np.stack([f.grid.axis()[i] for i in idx], axis=-1)
    return pts, vals[idx]


def nearfield(kind: WaveKind, f: FieldRealization, x, frequency: float):
    """Volume potential of the source evaluated at a point x outside its support.

    acoustic -sum Phi f h^d, biharmonic -sum F f h^d, electromagnetic
    i kappa sum Phi_3 f h^d, elastic -sum G f h^d.
    """
    x = np.asarray(x, dtype=float)
    grid = f.grid
    if f.values.ndim != grid.d + int(f.is_vector):
        raise ValueError("nearfield takes a single realization")
    pts, vals = _support_points(f)
    if pts.shape[0] == 0:
        return 0j if not f.is_vector else np.zeros(grid.d, dtype=complex)
    r = np.linalg.norm(x[None, :] - pts, axis=1)
    if np.min(r) < 2 * grid.h:
        raise ValueError("evaluation point lies inside or within 2h of the source support")
    w = grid.cell_volume
    tag = kind.tag
    if tag == "acoustic":
        phi = helmholtz_radial(r, frequency, grid.d)[0]
        return -w * np.sum(phi * vals)
    if tag == "biharmonic":
        F = fundamental_biharmonic(x[None, :], pts, frequency, grid.d)
        return -w * np.sum(F * vals)
    if tag == "electromagnetic":
        phi = helmholtz_radial(r, frequency, 3)[0]
        return 1j * frequency * w * np.sum(phi[:, None] * vals, axis=0)
    G = green_tensor_elastic(x[None, :], pts, frequency, kind.speeds, grid.d)
    return -w * np.einsum("nij,nj->i", G, vals)


def farfield_many(kind: WaveKind, values: np.ndarray, grid: Grid, directions, frequency,
                  nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION, parts: str = "ps"):
    """Far fields on a (direction x frequency) product set in one batched Fourier sum.

    Output layout batch + (n_dir, n_freq) (+ (d,)); elastic returns (u_p, u_s)
    at the same listed frequencies.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[1] != grid.d or not np.allclose(np.linalg.norm(dirs, axis=1), 1, atol=1e-12):
        raise ValueError("directions must be unit vectors of the grid dimension")
    tag = kind.tag
    d = grid.d
    vector = tag in ("electromagnetic", "elastic")

    def sums(speed, freq):
        xi = (speed * freq[None, :, None] * dirs[:, None, :]).reshape(-1, d)
        out = fourier_direct(values, grid, xi, vector=vector)
        shape = out.shape[: out.ndim - 1 - int(vector)] + (len(dirs), len(freq)) + ((d,) if vector else ())
        return out.reshape(shape)

    if tag in ("acoustic", "biharmonic", "electromagnetic"):
        if tag == "electromagnetic" and d != 3:
            raise ValueError("electromagnetic model is only defined for d = 3")
        freq = _validate_frequency(frequency, grid, 1.0, nyquist_fraction)
        pre = farfield_prefactor(kind, d, freq)
        fh = sums(1.0, freq)
        return pre[:, None] * fh if vector else pre * fh
    sp = kind.speeds
    proj = dirs[:, :, None] * dirs[:, None, :]  # (n_dir, d, d)
    u_p = u_s = None
    if "p" in parts:
        freq = _validate_frequency(frequency, grid, sp.c_p, nyquist_fraction)
        pre_p, _ = farfield_prefactor(kind, d, freq)
        fp = sums(sp.c_p, freq)
        u_p = pre_p[:, None] * np.einsum("...jfb,jab->...jfa", fp, proj)
    if "s" in parts:
        freq = _validate_frequency(frequency, grid, sp.c_s, nyquist_fraction)
        _, pre_s = farfield_prefactor(kind, d, freq)
        fs = sums(sp.c_s, freq)
        u_s = pre_s[:, None] * np.einsum("...jfb,jab->...jfa", fs, np.eye(d) - proj)
    return u_p, u_s


def asymptotic_residual(kind: WaveKind, f: FieldRealization, xhat, frequency: float, radius: float,
                        samples: int = 16) -> float:
    """|x|^((d-1)/2) times the gap between the near field at |x| = radius and its far-field expansion.

    Scalar and electromagnetic residuals are relative to |u_inf|.  The elastic
    remainder mixes two wavenumbers and beats with period 2 pi / |k_s - k_p|,
    so its root-mean-square over one beat period centred at ``radius`` is
    returned (absolute).
    """
    xhat = np.asarray(xhat, dtype=float)
    d = f.grid.d
    if kind.tag != "elastic":
        u = farfield_values(kind, f.values, f.grid, xhat, [frequency])[0]
        nf = nearfield(kind, f, radius * xhat, frequency)
        gap = radius ** ((d - 1) / 2) * np.exp(-1j * frequency * radius) * nf - u
        return float(np.linalg.norm(gap) / np.linalg.norm(u))
    sp = kind.speeds
    u_p, u_s = farfield_values(kind, f.values, f.grid, xhat, [frequency])
    period = 2 * np.pi / (frequency * abs(sp.c_s - sp.c_p))
    sq = []
    for r in radius + period * (np.arange(samples) / samples - 0.5):
        nf = nearfield(kind, f, r * xhat, frequency)
        asym = np.exp(1j * sp.c_p * frequency * r) * u_p[0] + np.exp(1j * sp.c_s * frequency * r) * u_s[0]
        sq.append(np.sum(np.abs(r ** ((d - 1) / 2) * nf - asym) ** 2))
    return float(np.sqrt(np.mean(sq)))
