"""Kernel families, bandwidth objects, analytic kernel constants, and
rule-of-thumb bandwidth selectors.

Both 2-D families are products of a 1-D kernel over the axes, so the 2-D
constants and self-convolutions reduce to products of 1-D quantities. The
Gaussian self-convolutions are closed forms; the Epanechnikov ones are dense
numeric convolutions computed once and interpolated.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import ndtr

from .errors import InputDataError, NumericalError

if TYPE_CHECKING:
    from .geometry import PointPattern

__all__ = [
    "Kernel1D",
    "Kernel2D",
    "BandwidthMatrix",
    "kernel1d",
    "kernel2d",
    "select_bandwidth_matrix",
    "select_scalar_bandwidth",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Kernel1D:
    """Univariate kernel: density, CDF, roughness R = int k^2 and mu_2 = int t^2 k."""

    name: str
    roughness: float
    second_moment: float
    support_radius: float

    def density(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def self_convolutions(self, t):
        """(k*k, k^2*k, k^2*k^2) evaluated at t, with * the convolution."""
        raise NotImplementedError

    def density_b(self, b: float, t):
        """Scaled kernel k_b(t) = k(t/b)/b."""
        b = _checked_bandwidth(b)
        return self.density(np.asarray(t) / b) / b


class _GaussianKernel1D(Kernel1D):
    name = "gaussian"
    roughness = 1.0 / (2.0 * math.sqrt(math.pi))
    second_moment = 1.0
    support_radius = math.inf

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * t * t) / _SQRT_2PI

    def cdf(self, t):
        return ndtr(np.asarray(t, dtype=float))

    def self_convolutions(self, t):
        t = np.asarray(t, dtype=float)
        tsq = t * t
        kk = np.exp(-0.25 * tsq) / (2.0 * math.sqrt(math.pi))
        k2k = np.exp(-tsq / 3.0) / (2.0 * math.pi * math.sqrt(3.0))
        k2k2 = np.exp(-0.5 * tsq) / (4.0 * math.pi * _SQRT_2PI)
        return kk, k2k, k2k2


class _EpanechnikovKernel1D(Kernel1D):
    name = "epanechnikov"
    roughness = 3.0 / 5.0
    second_moment = 1.0 / 5.0
    support_radius = 1.0

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return 0.5 + 0.75 * (t - t**3 / 3.0)

    def self_convolutions(self, t):
        grid, kk, k2k, k2k2 = _epanechnikov_convolution_tables()
        t = np.asarray(t, dtype=float)
        return (
            np.interp(t, grid, kk, left=0.0, right=0.0),
            np.interp(t, grid, k2k, left=0.0, right=0.0),
            np.interp(t, grid, k2k2, left=0.0, right=0.0),
        )


_EPAN_TABLES: tuple | None = None


def _epanechnikov_convolution_tables(n: int = 8001):
    """Dense numeric self-convolutions of the Epanechnikov kernel on [-2, 2]."""
    global _EPAN_TABLES
    if _EPAN_TABLES is None:
        step = 2.0 / (n - 1)
        s = np.linspace(-1.0, 1.0, n)
        k = 0.75 * (1.0 - s * s)
        k2 = k * k
        grid = np.linspace(-2.0, 2.0, 2 * n - 1)
        kk = np.convolve(k, k) * step
        k2k = np.convolve(k2, k) * step
        k2k2 = np.convolve(k2, k2) * step
        _EPAN_TABLES = (grid, kk, k2k, k2k2)
    return _EPAN_TABLES


class Kernel2D:
    """Bivariate product kernel K(u) = k(u1) k(u2) built from a 1-D family.

    Satisfies the usual assumptions: integrates to one, symmetric, square
    integrable, second-moment matrix mu_2 I.
    """

    def __init__(self, axis: Kernel1D):
        self.axis = axis
        self.name = axis.name
        self.roughness = axis.roughness**2
        self.second_moment = axis.second_moment
        self.support_radius = axis.support_radius

    def density(self, u1, u2):
        return self.axis.density(u1) * self.axis.density(u2)

    def density_h(self, bw: "BandwidthMatrix", d1, d2):
        """K_H(d) = |H|^{-1/2} K(H^{-1/2} d)."""
        a, b, c = bw.inv_sqrt_entries
        s1 = a * np.asarray(d1, dtype=float) + b * np.asarray(d2, dtype=float)
        s2 = b * np.asarray(d1, dtype=float) + c * np.asarray(d2, dtype=float)
        return bw.det_inv_sqrt * self.density(s1, s2)

    def self_convolutions(self, d1, d2):
        """(K*K, K^2*K, K^2*K^2) at (d1, d2); products of 1-D convolutions."""
        kk1, k2k1, k2k21 = self.axis.self_convolutions(d1)
        kk2, k2k2_, k2k22 = self.axis.self_convolutions(d2)
        return kk1 * kk2, k2k1 * k2k2_, k2k21 * k2k22

    def constants(self) -> tuple[float, float]:
        """(R(K), mu_2(K))."""
        return self.roughness, self.second_moment


_FAMILIES_1D = {
    "gaussian": _GaussianKernel1D(),
    "epanechnikov": _EpanechnikovKernel1D(),
}
_FAMILIES_2D = {name: Kernel2D(axis) for name, axis in _FAMILIES_1D.items()}


def kernel1d(name: str = "gaussian") -> Kernel1D:
    try:
        return _FAMILIES_1D[name]
    except KeyError:
        raise InputDataError(
            f"unknown kernel family {name!r}; expected one of {sorted(_FAMILIES_1D)}"
        ) from None


def kernel2d(name: str = "gaussian") -> Kernel2D:
    try:
        return _FAMILIES_2D[name]
    except KeyError:
        raise InputDataError(
            f"unknown kernel family {name!r}; expected one of {sorted(_FAMILIES_2D)}"
        ) from None


class BandwidthMatrix:
    """Symmetric positive-definite 2x2 bandwidth matrix with cached decompositions."""

    __slots__ = ("h11", "h12", "h22", "det", "det_inv_sqrt", "inv_sqrt_entries")

    def __init__(self, h11: float, h12: float, h22: float):
        h11 = float(h11)
        h12 = float(h12)
        h22 = float(h22)
        det = h11 * h22 - h12 * h12
        if not all(map(math.isfinite, (h11, h12, h22))) or h11 <= 0 or h22 <= 0 or det <= 0:
            raise InputDataError(
                f"bandwidth matrix [[{h11}, {h12}], [{h12}, {h22}]] is not positive-definite"
            )
        self.h11 = h11
        self.h12 = h12
        self.h22 = h22
        self.det = det
        self.det_inv_sqrt = det**-0.5
        # H^{1/2} = (H + sqrt(det) I) / sqrt(tr(H) + 2 sqrt(det)); invert it in closed form.
        s = math.sqrt(det)
        denom = math.sqrt(h11 + h22 + 2.0 * s)
        r11 = (h11 + s) / denom
        r12 = h12 / denom
        r22 = (h22 + s) / denom
        self.inv_sqrt_entries = (r22 / s, -r12 / s, r11 / s)

    @classmethod
    def diagonal(cls, h11: float, h22: float) -> "BandwidthMatrix":
        return cls(h11, 0.0, h22)

    @classmethod
    def isotropic(cls, h2: float) -> "BandwidthMatrix":
        return cls(h2, 0.0, h2)

    @property
    def is_diagonal(self) -> bool:
        return self.h12 == 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.h11, self.h12], [self.h12, self.h22]])

    @property
    def axis_sd(self) -> tuple[float, float]:
        """(sqrt(h11), sqrt(h22)); the per-axis scales of a diagonal matrix."""
        return math.sqrt(self.h11), math.sqrt(self.h22)

    def __repr__(self):
        return f"BandwidthMatrix(h11={self.h11!r}, h12={self.h12!r}, h22={self.h22!r})"


def select_bandwidth_matrix(pattern: "PointPattern") -> BandwidthMatrix:
    """Diagonal normal-reference rule diag(s_x^2, s_y^2) n^{-1/3}.

    A simple substitute for data-driven selectors; override it by passing an
    explicit matrix wherever one is accepted.
    """
    if pattern.n < 2:
        raise NumericalError("cannot select a bandwidth matrix from fewer than 2 points")
    # Sorting first makes the selection exactly permutation invariant.
    sx = float(np.std(np.sort(pattern.x), ddof=1))
    sy = float(np.std(np.sort(pattern.y), ddof=1))
    if sx <= 0 or sy <= 0:
        raise NumericalError("cannot select a bandwidth matrix: zero coordinate spread")
    scale = pattern.n ** (-1.0 / 3.0)
    return BandwidthMatrix.diagonal(sx * sx * scale, sy * sy * scale)


def select_scalar_bandwidth(values) -> float:
    """Silverman's rule 1.06 min(s, IQR/1.34) n^{-1/5} on a 1-D sample."""
    values = np.sort(np.asarray(values, dtype=float))
    n = values.size
    if n < 2:
        raise NumericalError("cannot select a scalar bandwidth from fewer than 2 values")
    s = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    spread = min(s, iqr / 1.34) if iqr > 0 else s
    if spread <= 0:
        raise NumericalError("cannot select a scalar bandwidth: zero spread")
    return 1.06 * spread * n ** (-0.2)


def _checked_bandwidth(b: float) -> float:
    b = float(b)
    if not math.isfinite(b) or b <= 0:
        raise InputDataError(f"scalar bandwidth must be positive, got {b}")
    return b
