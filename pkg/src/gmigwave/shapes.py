"""Smooth compactly-localized profiles with closed-form Fourier transforms.

These serve as micro-local strength profiles a_c(x), a_r(x) and as
deterministic sources whose far fields can be checked analytically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GaussianBump:
    """amplitude * exp(i phase) * exp(-|x - center|^2 / (2 width^2))."""

    center: tuple
    width: float
    amplitude: float = 1.0
    phase: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.center)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1)
        val = self.amplitude * np.exp(-r2 / (2 * self.width**2))
        if self.phase:
            return val * np.exp(1j * self.phase)
        return val

    def on_axes(self, axes):
        """Evaluate on broadcastable per-axis coordinates (see Grid.sparse_axes)."""
        r2 = sum((ax - c) ** 2 for ax, c in zip(axes, self.center))
        val = self.amplitude * np.exp(-r2 / (2 * self.width**2))
        if self.phase:
            return val * np.exp(1j * self.phase)
        return val

    def fourier(self, xi):
        """hat f(xi) = int e^{-i xi . y} f(y) dy."""
        xi = np.asarray(xi, dtype=float)
        d = self.dim
        c = np.asarray(self.center, dtype=float)
        k2 = np.sum(xi**2, axis=-1)
        mag = self.amplitude * (2 * np.pi * self.width**2) ** (d / 2) * np.exp(-(self.width**2) * k2 / 2)
        return mag * np.exp(1j * (self.phase - xi @ c))

    def max_abs(self) -> float:
        return abs(self.amplitude)


@dataclass(frozen=True)
class BumpSum:
    """Finite sum of Gaussian bumps plus an optional constant offset."""

    bumps: tuple = field(default_factory=tuple)
    offset: complex = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.offset, dtype=complex)
        for b in self.bumps:
            out = out + b(x)
        if np.all(np.imag(out) == 0):
            return out.real
        return out

    def on_axes(self, axes):
        shape = np.broadcast_shapes(*(np.shape(a) for a in axes))
        out = np.full(shape, self.offset, dtype=complex)
        for b in self.bumps:
            out = out + b.on_axes(axes)
        if np.all(np.imag(out) == 0):
            return out.real
        return out

    def fourier(self, xi):
        if self.offset:
            raise ValueError("a constant offset has no classical Fourier transform")
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1], dtype=complex)
        for b in self.bumps:
            out = out + b.fourier(xi)
        return out


def profile_from_config(cfg, d: int):
    """Build a GaussianBump or BumpSum from a plain dict (as loaded from YAML)."""
    if cfg is None:
        return None
    if isinstance(cfg, (int, float, complex)):
        return BumpSum(bumps=(), offset=cfg)
    if "bumps" in cfg:
        bumps = tuple(profile_from_config(b, d) for b in cfg["bumps"])
        return BumpSum(bumps=bumps, offset=cfg.get("offset", 0.0))
    center = tuple(float(c) for c in cfg.get("center", [0.0] * d))
    if len(center) != d:
        raise ValueError(f"profile center has {len(center)} coordinates, expected {d}")
    return GaussianBump(
        center=center,
        width=float(cfg["width"]),
        amplitude=float(cfg.get("amplitude", 1.0)),
        phase=float(cfg.get("phase", 0.0)),
    )
