"""Brute-force reference implementations used to check the production paths.

Nothing here calls an FFT or the production samplers: Bessel functions come
from their power series, the stationary covariance from explicit DFT
matrices, far fields from plain summation over every node, and coarse-grid
samples from an eigen square root of the full augmented covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

MAX_DENSE = 4096
EULER_GAMMA = 0.57721566490153286061


# Bessel power series -------------------------------------------------------------

def _series_terms(z: float, kmax: int = 80):
    """Terms (z/2)^{2k} / (k!)^2 together with harmonic numbers H_k."""
    q = (z / 2) ** 2
    term = 1.0
    harmonic = 0.0
    out = [(term, harmonic)]
    for k in range(1, kmax):
        term *= q / (k * k)
        harmonic += 1.0 / k
        out.append((term, harmonic))
        if term < 1e-18 * abs(out[0][0]) and k > 2 * q:
            break
    return out


def bessel_j0_series(z: float) -> float:
    return math.fsum(((-1) ** k) * t for k, (t, _) in enumerate(_series_terms(z)))


def bessel_y0_series(z: float) -> float:
    if z <= 0:
        raise ValueError("Y0 series needs z > 0")
    terms = _series_terms(z)
    j0 = math.fsum(((-1) ** k) * t for k, (t, _) in enumerate(terms))
    rest = math.fsum(((-1) ** (k + 1)) * hk * t for k, (t, hk) in enumerate(terms) if k > 0)
    return (2 / math.pi) * ((math.log(z / 2) + EULER_GAMMA) * j0 + rest)


def bessel_k0_series(z: float) -> float:
    if z <= 0:
        raise ValueError("K0 series needs z > 0")
    terms = _series_terms(z)
    i0 = math.fsum(t for t, _ in terms)
    rest = math.fsum(hk * t for t, hk in terms)
    return -(math.log(z / 2) + EULER_GAMMA) * i0 + rest


def hankel1_0_series(z: float) -> complex:
    return complex(bessel_j0_series(z), bessel_y0_series(z))


def helmholtz_2d_series(r: float, kappa) -> complex:
    """Phi_2 from the series oracle; kappa real > 0 or i * k0."""
    k = complex(kappa)
    if k.imag == 0:
        return 0.25j * hankel1_0_series(k.real * r)
    return complex(bessel_k0_series(k.imag * r) / (2 * math.pi))


# Stationary covariance and dense kernels -----------------------------------------

def _dft_matrix(n: int, h: float, refine: int):
    """E[a, k] = exp(i xi_k a h) with xi_k over n*refine lattice frequencies of spacing 2 pi / (n h)."""
    big = n * refine
    k = np.arange(big)
    k = np.where(k < big - k, k, k - big)
    if big % 2 == 0:
        k[big // 2] = -big // 2
    xi = 2 * np.pi * k / (n * h)
    lag = np.arange(n) * h
    return np.exp(1j * np.outer(lag, xi)), xi


def dense_stationary(grid, m: float, delta: float, refine: int = 1) -> np.ndarray:
    """G at lattice lags (FFT order), by explicit DFT matrices.

    ``refine`` > 1 extends the frequency lattice by that factor at fixed box
    length, approximating the continuum kernel; ``refine = 1`` reproduces
    exactly the covariance realized by the periodic spectral sampler.
    """
    E, xi = _dft_matrix(grid.n, grid.h, refine)
    grids = np.meshgrid(*([xi] * grid.d), indexing="ij")
    k2 = sum(g**2 for g in grids)
    S = (k2 + delta**2) ** (-m / 2)
    if grid.d == 2:
        G = E @ S @ E.T
    else:
        G = np.einsum("ai,bj,ck,ijk->abc", E, E, E, S, optimize=True)
    return np.real(G) / grid.length**grid.d


def _lag_matrix(grid, G: np.ndarray) -> np.ndarray:
    """Expand G(y_a - y_b) into a full (n^d, n^d) matrix with periodic lags."""
    idx = np.indices(grid.shape).reshape(grid.d, -1)
    lag = [(idx[k][:, None] - idx[k][None, :]) % grid.n for k in range(grid.d)]
    return G[tuple(lag)]


def _scalar_factors(a_c, a_r):
    """Rows (L11 + i L21, i L22) of the lower Cholesky factor of the 2x2 block matrix."""
    a_c = np.ravel(a_c).astype(float)
    a_r = np.ravel(a_r).astype(complex)
    out = np.zeros((a_c.size, 2), dtype=complex)
    for j in range(a_c.size):
        M = 0.5 * np.array([[a_c[j] + a_r[j].real, a_r[j].imag],
                            [a_r[j].imag, a_c[j] - a_r[j].real]])
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            # semidefinite node: factor by hand with clamping
            l11 = math.sqrt(max(M[0, 0], 0.0))
            l21 = M[1, 0] / l11 if l11 > 0 else 0.0
            L = np.array([[l11, 0.0], [l21, math.sqrt(max(M[1, 1] - l21 * l21, 0.0))]])
        out[j] = [L[0, 0] + 1j * L[1, 0], 1j * L[1, 1]]
    return out


def _vector_factors(A_c, A_r):
    """Principal square root of the real 2d x 2d block covariance, as complex d x 2d."""
    d = A_c.shape[-1]
    Ac = A_c.reshape(-1, d, d)
    Ar = A_r.reshape(-1, d, d)
    out = np.zeros((Ac.shape[0], d, 2 * d), dtype=complex)
    for j in range(Ac.shape[0]):
        gam = 0.5 * np.block([[np.real(Ac[j] + Ar[j]), np.imag(Ar[j]) - np.imag(Ac[j])],
                              [np.imag(Ar[j]) + np.imag(Ac[j]), np.real(Ac[j] - Ar[j])]])
        if not np.any(gam):
            continue
        root = np.real(linalg.sqrtm(gam))
        out[j] = root[:d] + 1j * root[d:]
    return out


@dataclass
class DenseKernelPair:
    """Full covariance K_c and relation K_r matrices over coarse-grid nodes."""

    K_c: np.ndarray
    K_r: np.ndarray

    def augmented(self) -> np.ndarray:
        return np.block([[self.K_c, self.K_r], [np.conj(self.K_r), np.conj(self.K_c)]])


def dense_kernels(strengths, grid, m: float, delta: float, refine: int = 1) -> DenseKernelPair:
    """K_c(x, y) = c(x) c(y)^H G(x - y), K_r(x, y) = c(x) c(y)^T G(x - y).

    For vector strengths the matrices are blocked node-major with d x d blocks.
    """
    comp = 1 if hasattr(strengths, "a_c") else grid.d
    if grid.n > 40 or grid.size * comp > MAX_DENSE:
        raise ValueError(f"grid with {grid.size} nodes is too large for dense kernels")
    G = _lag_matrix(grid, dense_stationary(grid, m, delta, refine))
    if hasattr(strengths, "a_c"):
        c = _scalar_factors(strengths.a_c, strengths.a_r)
        Kc = (c @ c.conj().T) * G
        Kr = (c @ c.T) * G
        return DenseKernelPair(Kc, Kr)
    C = _vector_factors(strengths.A_c, strengths.A_r)
    n, d = C.shape[0], C.shape[1]
    Kc = np.einsum("aik,bjk->aibj", C, C.conj()) * G[:, None, :, None]
    Kr = np.einsum("aik,bjk->aibj", C, C) * G[:, None, :, None]
    return DenseKernelPair(Kc.reshape(n * d, n * d), Kr.reshape(n * d, n * d))


def cholesky_sample(kernels: DenseKernelPair, seed, size: int = 1, tol: float = 1e-10) -> np.ndarray:
    """Exact complex Gaussian draws with the given covariance/relation matrices.

    Returns an array (size, n).  The real 2n x 2n covariance of (Re f, Im f)
    is factored by an eigen square root with round-off eigenvalues clamped.
    """
    Kc_full, Kr_full = kernels.K_c, kernels.K_r
    n = Kc_full.shape[0]
    # nodes with zero variance stay exactly zero; factor the active block only
    active = np.flatnonzero(np.real(np.diag(Kc_full)) > 0)
    Kc = Kc_full[np.ix_(active, active)]
    Kr = Kr_full[np.ix_(active, active)]
    real_cov = 0.5 * np.block([[np.real(Kc + Kr), np.imag(Kr) - np.imag(Kc)],
                               [np.imag(Kr) + np.imag(Kc), np.real(Kc - Kr)]])
    real_cov = 0.5 * (real_cov + real_cov.T)
    w, v = np.linalg.eigh(real_cov)
    floor = -tol * max(np.trace(real_cov), 1e-300)
    if w[0] < floor:
        raise ValueError(f"augmented covariance is indefinite (smallest eigenvalue {w[0]:.3g})")
    root = v * np.sqrt(np.maximum(w, 0))
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((size, real_cov.shape[0]))
    x = g @ root.T
    k = len(active)
    out = np.zeros((size, n), dtype=complex)
    out[:, active] = x[:, :k] + 1j * x[:, k:]
    return out


def empirical_kernels(samples: np.ndarray):
    """Sample K_c, K_r and their complex standard errors from draws of shape (M, n).

    The standard error of a complex mean is sqrt(var Re + var Im) / sqrt(M).
    """
    M = samples.shape[0]
    Kc = samples.T @ samples.conj() / M
    Kr = samples.T @ samples / M
    a2 = np.abs(samples) ** 2
    # E|f_a conj f_b|^2 = E|f_a|^2|f_b|^2, the same for the relation product
    second = a2.T @ a2 / M
    se_c = np.sqrt(np.maximum(second - np.abs(Kc) ** 2, 0) / M)
    se_r = np.sqrt(np.maximum(second - np.abs(Kr) ** 2, 0) / M)
    return Kc, Kr, se_c, se_r


# Far field by direct summation ---------------------------------------------------

def _radiation_constant(d: int) -> complex:
    return complex(np.exp(1j * np.pi / 4) / math.sqrt(8 * math.pi)) if d == 2 else 1 / (4 * math.pi)


def _direct_sum(values, points, h, d, xi):
    flat = values.reshape(-1, *values.shape[d:]) if values.ndim > d else values.reshape(-1)
    pts = points.reshape(-1, d)
    phase = np.exp(-1j * (pts @ xi))
    if flat.ndim == 1:
        return h**d * np.sum(phase * flat)
    return h**d * np.sum(phase[:, None] * flat, axis=0)


def brute_force_farfield(f, kind, xhat, frequency: float):
    """Far field of one realization by summation over every node.

    Returns a complex scalar, a d-vector (electromagnetic) or a pair of
    d-vectors (elastic compressional, shear).
    """
    grid = f.grid
    d = grid.d
    xhat = np.asarray(xhat, dtype=float)
    pts = grid.points()
    C = _radiation_constant(d)
    tag = kind.tag
    if tag == "acoustic":
        return -C * frequency ** ((d - 3) / 2) * _direct_sum(f.values, pts, grid.h, d, frequency * xhat)
    if tag == "biharmonic":
        return -C / 2 * frequency ** ((d - 7) / 2) * _direct_sum(f.values, pts, grid.h, d, frequency * xhat)
    if tag == "electromagnetic":
        return 1j * frequency * C * _direct_sum(f.values, pts, grid.h, d, frequency * xhat)
    lam, mu = kind.lame_lambda, kind.lame_mu
    cp = 1 / math.sqrt(lam + 2 * mu)
    cs = 1 / math.sqrt(mu)
    up = np.zeros(d, dtype=complex)
    us = np.zeros(d, dtype=complex)
    # component formulas: v_{p,j} = xhat_j xhat, v_{s,j} = e_j - xhat_j xhat
    fp = _direct_sum(f.values, pts, grid.h, d, cp * frequency * xhat)
    fs = _direct_sum(f.values, pts, grid.h, d, cs * frequency * xhat)
    for j in range(d):
        vp = xhat[j] * xhat
        vs = np.eye(d)[j] - vp
        up[j] = -C * cp ** ((d + 1) / 2) * frequency ** ((d - 3) / 2) * (vp @ fp)
        us[j] = -C * cs ** ((d + 1) / 2) * frequency ** ((d - 3) / 2) * (vs @ fs)
    return up, us


def finite_difference_hessian(fun, x, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a point."""
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            ei = np.eye(d)[i] * step
            ej = np.eye(d)[j] * step
            H[i, j] = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)) / (4 * step**2)
    return H
