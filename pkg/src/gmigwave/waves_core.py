"""Fundamental solutions, Green tensor and far-field constants.

Covers the four wave models handled by the package: Helmholtz (acoustic),
biharmonic, Maxwell (electric field, d = 3 only) and Navier (elastic).
Everything here is a pure function of its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

KINDS = ("acoustic", "biharmonic", "electromagnetic", "elastic")

# Admissible roughness intervals (lo, hi] for the order m, per wave model.
ORDER_INTERVALS = {
    "acoustic": lambda d: (d - 4.0, float(d)),
    "biharmonic": lambda d: (d - 6.0, float(d)),
    "electromagnetic": lambda d: (-1.0, 3.0),
    "elastic": lambda d: (d - 4.0, float(d)),
}


def radiation_constant(d: int) -> complex:
    """C_d in Phi_d ~ e^{i k|x|} |x|^{-(d-1)/2} C_d k^{(d-3)/2} e^{-i k xhat.y}."""
    if d == 2:
        return complex(np.exp(1j * np.pi / 4) / np.sqrt(8 * np.pi))
    if d == 3:
        return complex(1.0 / (4 * np.pi))
    raise ValueError(f"dimension must be 2 or 3, got {d}")


@dataclass(frozen=True)
class ElasticSpeeds:
    """Slownesses c_p = (lambda + 2 mu)^(-1/2) and c_s = mu^(-1/2).

    Wave numbers are these times the angular frequency, kappa_p = c_p * omega and kappa_s = c_s * omega.
    """

    c_p: float
    c_s: float

    def __post_init__(self):
        if not (self.c_p > 0 and self.c_s > 0):
            raise ValueError("c_p and c_s must be positive")

    @classmethod
    def from_lame(cls, lame_lambda: float, lame_mu: float) -> "ElasticSpeeds":
        if lame_mu <= 0 or lame_lambda + 2 * lame_mu <= 0:
            raise ValueError(
                "Lame parameters must satisfy mu > 0 and lambda + 2 mu > 0 "
                f"(got lambda={lame_lambda}, mu={lame_mu})"
            )
        return cls(c_p=(lame_lambda + 2 * lame_mu) ** -0.5, c_s=lame_mu ** -0.5)

    def kappa_p(self, omega):
        return self.c_p * np.asarray(omega)

    def kappa_s(self, omega):
        return self.c_s * np.asarray(omega)


@dataclass(frozen=True)
class WaveKind:
    tag: str
    lame_lambda: Optional[float] = None
    lame_mu: Optional[float] = None

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ValueError(f"unknown wave kind {self.tag!r}; expected one of {KINDS}")
        if self.tag == "elastic":
            if self.lame_lambda is None or self.lame_mu is None:
                raise ValueError("elastic wave kind needs lame_lambda and lame_mu")
            ElasticSpeeds.from_lame(self.lame_lambda, self.lame_mu)

    @property
    def speeds(self) -> Optional[ElasticSpeeds]:
        if self.tag != "elastic":
            return None
        return ElasticSpeeds.from_lame(self.lame_lambda, self.lame_mu)

    @property
    def is_vector(self) -> bool:
        return self.tag in ("electromagnetic", "elastic")

    def order_interval(self, d: int):
        return ORDER_INTERVALS[self.tag](d)

    def check_order(self, m: float, d: int) -> None:
        if self.tag == "electromagnetic" and d != 3:
            raise ValueError("electromagnetic model is only defined for d = 3")
        lo, hi = self.order_interval(d)
        if not (lo < m <= hi):
            raise ValueError(
                f"order m={m} outside the admissible interval ({lo:g}, {hi:g}] "
                f"for {self.tag} waves in d={d}"
            )


def hankel1_0(z):
    """H_0^(1)(z) = J_0(z) + i Y_0(z), principal branch."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("H_0^(1) has a logarithmic singularity at z = 0")
    out = special.hankel1(0, z)
    return out if out.ndim else complex(out)


def _classify_wavenumber(kappa):
    """Return ('real', k) for k > 0 or ('imag', k0) for kappa = i k0, k0 > 0."""
    k = complex(kappa)
    if k.imag == 0 and k.real > 0:
        return "real", k.real
    if k.real == 0 and k.imag > 0:
        return "imag", k.imag
    raise ValueError(f"wavenumber must be real positive or purely imaginary, got {kappa}")


def _distance(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise ValueError("fundamental solution is singular at x = y")
    return diff, r


def helmholtz_radial(r, kappa, d: int, derivatives: int = 0):
    """Phi_d as a function of r = |x - y|, with optional r-derivatives.

    Returns a tuple (phi, phi', phi'') truncated to ``derivatives + 1`` items.
    Imaginary wavenumbers go through K_0 (d = 2) or a real exponential (d = 3).
    """
    r = np.asarray(r, dtype=float)
    branch, k = _classify_wavenumber(kappa)
    if d == 3:
        if branch == "real":
            phi = np.exp(1j * k * r) / (4 * np.pi * r)
            g = 1j * k - 1 / r
        else:
            phi = np.exp(-k * r) / (4 * np.pi * r) + 0j
            g = -k - 1 / r
        out = [phi, phi * g, phi * (g * g + 1 / r**2)]
    elif d == 2:
        z = k * r
        if branch == "real":
            h0 = special.hankel1(0, z)
            h1 = special.hankel1(1, z)
            phi = 0.25j * h0
            dphi = -0.25j * k * h1
            d2phi = -0.25j * k * k * (h0 - h1 / z)
        else:
            k0 = special.k0(z)
            k1 = special.k1(z)
            phi = k0 / (2 * np.pi) + 0j
            dphi = -k * k1 / (2 * np.pi) + 0j
            d2phi = k * k * (k0 + k1 / z) / (2 * np.pi) + 0j
        out = [phi, dphi, d2phi]
    else:
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    return tuple(out[: derivatives + 1])


def fundamental_helmholtz(x, y, kappa, d: int):
    """Radiating fundamental solution Phi_d(x, y, kappa) of Delta + kappa^2."""
    _, r = _distance(x, y)
    return helmholtz_radial(r, kappa, d)[0]


def _biharmonic_small_r(r, k, d):
    # Truncated expansions of (Phi_d(k) - Phi_d(ik)) / (2 k^2) around r = 0.
    if d == 3:
        total = 0j
        for n in range(1, 8):
            total = total + k**n * (1j**n - (-1) ** n) * r ** (n - 1) / special.factorial(n)
        return total / (4 * np.pi) / (2 * k * k)
    z = k * r
    log_term = np.log(z / 2) + np.euler_gamma
    diff = 0.25j - 1j * z**2 / 16 + log_term * z**2 / (4 * np.pi) - z**2 / (4 * np.pi)
    return diff / (2 * k * k)


def fundamental_biharmonic(x, y, kappa: float, d: int):
    """F_d = (Phi_d(kappa) - Phi_d(i kappa)) / (2 kappa^2), the biharmonic kernel.

    F_d is bounded at r = 0 in d = 2, 3; below 1e-6 wavelengths a truncated
    series replaces the (cancelling) difference of the two terms.
    """
    if not (np.isreal(kappa) and np.real(kappa) > 0):
        raise ValueError("biharmonic wavenumber must be real and positive")
    k = float(np.real(kappa))
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    r = np.atleast_1d(r)
    out = np.empty(r.shape, dtype=complex)
    small = r < 1e-6 * 2 * np.pi / k
    big = ~small
    if np.any(big):
        rb = r[big]
        out[big] = (helmholtz_radial(rb, k, d)[0] - helmholtz_radial(rb, 1j * k, d)[0]) / (2 * k * k)
    if np.any(small):
        rs = r[small]
        if d == 3:
            out[small] = _biharmonic_small_r(rs, k, d)
        else:
            safe = np.where(rs > 0, rs, 1.0)
            out[small] = np.where(rs > 0, _biharmonic_small_r(safe, k, d), 0.125j / k**2)
    if np.ndim(x) <= 1 and np.ndim(y) <= 1:
        return complex(out[0])
    return out


def radial_hessian(diff, r, dphi, d2phi):
    """Hessian of a radial function: phi'' rr^T + (phi'/r)(I - rr^T)."""
    rhat = diff / r[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(diff.shape[-1])
    return d2phi[..., None, None] * outer + (dphi / r)[..., None, None] * (eye - outer)


def green_tensor_elastic(x, y, omega: float, speeds: ElasticSpeeds, d: int):
    """Navier Green tensor (1/mu) Phi(k_s) I + omega^-2 grad grad^T [Phi(k_s) - Phi(k_p)].

    ``1/mu`` is written as c_s^2. The Hessian uses closed-form radial derivatives.
    """
    diff, r = _distance(x, y)
    ks = speeds.c_s * omega
    kp = speeds.c_p * omega
    phi_s, dphi_s, d2phi_s = helmholtz_radial(r, ks, d, 2)
    _, dphi_p, d2phi_p = helmholtz_radial(r, kp, d, 2)
    hess = radial_hessian(diff, r, dphi_s - dphi_p, d2phi_s - d2phi_p)
    eye = np.eye(d)
    return speeds.c_s**2 * phi_s[..., None, None] * eye + hess / omega**2


def helmholtz_asymptotic(x, y, kappa: float, d: int):
    """Leading far-field term of Phi_d: e^{ik|x|}|x|^{-(d-1)/2} C_d k^{(d-3)/2} e^{-ik xhat.y}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = np.linalg.norm(x, axis=-1)
    xhat = x / rx[..., None]
    phase = np.exp(1j * kappa * rx) / rx ** ((d - 1) / 2)
    return phase * radiation_constant(d) * kappa ** ((d - 3) / 2) * np.exp(
        -1j * kappa * np.sum(xhat * y, axis=-1)
    )


def green_tensor_asymptotic(x, y, omega: float, speeds: ElasticSpeeds, d: int):
    """Two-term (compressional + shear) far-field expansion of the Green tensor."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = np.linalg.norm(x, axis=-1)
    xhat = x / rx[..., None]
    proj = xhat[..., :, None] * xhat[..., None, :]
    eye = np.eye(d)
    cd = radiation_constant(d)
    out = 0
    for c, pol in ((speeds.c_p, proj), (speeds.c_s, eye - proj)):
        k = c * omega
        amp = cd * c ** ((d + 1) / 2) * omega ** ((d - 3) / 2)
        phase = np.exp(1j * k * rx) / rx ** ((d - 1) / 2) * np.exp(-1j * k * np.sum(xhat * y, axis=-1))
        out = out + (amp * phase)[..., None, None] * pol
    return out


def farfield_prefactor(kind: WaveKind, d: int, frequency):
    """Scalar multiplier in front of the source Fourier integral in the far field.

    For elastic waves a (compressional, shear) pair is returned.
    """
    freq = np.asarray(frequency, dtype=float)
    if np.any(freq <= 0):
        raise ValueError("frequency must be positive")
    cd = radiation_constant(d)
    tag = kind.tag
    if tag == "acoustic":
        return -cd * freq ** ((d - 3) / 2)
    if tag == "biharmonic":
        return -(cd / 2) * freq ** ((d - 7) / 2)
    if tag == "electromagnetic":
        if d != 3:
            raise ValueError("electromagnetic model is only defined for d = 3")
        return 1j * freq * cd
    sp = kind.speeds
    pre_p = -cd * sp.c_p ** ((d + 1) / 2) * freq ** ((d - 3) / 2)
    pre_s = -cd * sp.c_s ** ((d + 1) / 2) * freq ** ((d - 3) / 2)
    return pre_p, pre_s
