"""Kernel estimators of the intensity and of the relative density of event
locations: the purely spatial estimator (edge-corrected kernel intensity
divided by the point count) and the covariate-based one (a weighted 1-D
kernel density pushed through the covariate).

Surfaces are evaluated at the cell centers of the shared mesh only; all
downstream integrals use the same midpoint rule, so the two estimators stay
directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import InputDataError, NumericalError
from .geometry import (
    CovariateGrid,
    EvaluationMesh,
    ObservationWindow,
    PointPattern,
    SpatialCovariateDistribution,
    quadrature,
)
from .kernels import BandwidthMatrix, Kernel1D, Kernel2D, _checked_bandwidth

__all__ = [
    "IntensitySurface",
    "RelativeDensitySurface",
    "edge_correction",
    "edge_correction_surface",
    "intensity_surface",
    "intensity_at",
    "spatial_relative_density",
    "covariate_density",
    "covariate_relative_density",
]

_MIN_EDGE_CORRECTION = 1e-12


@dataclass(frozen=True, eq=False)
class IntensitySurface:
    """Nonnegative intensity values (events per unit area) on the mesh."""

    values: np.ndarray
    window: ObservationWindow

    def total(self) -> float:
        """Expected number of events: midpoint integral over the window."""
        return quadrature(self.values, self.window)


@dataclass(frozen=True, eq=False)
class RelativeDensitySurface:
    """Relative density of event locations on the mesh.

    ``n`` is the point count the kernel sum was normalized by; n == 0 marks
    the identically zero surface produced by an empty pattern.
    """

    values: np.ndarray
    window: ObservationWindow
    n: int

    @property
    def is_zero(self) -> bool:
        return self.n == 0

    def total(self) -> float:
        return quadrature(self.values, self.window)


def _zero_surface(window: ObservationWindow) -> RelativeDensitySurface:
    return RelativeDensitySurface(
        values=np.zeros(window.geometry.shape), window=window, n=0
    )


def _separable(kernel: Kernel2D, bw: BandwidthMatrix, window: ObservationWindow) -> bool:
    return bw.is_diagonal and window.mask is None


def edge_correction_surface(
    kernel: Kernel2D, bw: BandwidthMatrix, window: ObservationWindow
) -> np.ndarray:
    """Kernel mass retained inside the window, per mesh cell.

    Exact per-axis integral on rectangle windows with diagonal bandwidth
    matrices; a mesh convolution (midpoint rule, via FFT) otherwise. Values
    are clipped into (0, 1]; a correction below 1e-12 anywhere in the window
    means almost all kernel mass escapes and is an error.
    """
    geom = window.geometry
    if _separable(kernel, bw, window):
        sx, sy = bw.axis_sd
        cdf = kernel.axis.cdf
        px = cdf((window.xmax - geom.x_centers) / sx) - cdf((window.xmin - geom.x_centers) / sx)
        py = cdf((window.ymax - geom.y_centers) / sy) - cdf((window.ymin - geom.y_centers) / sy)
        correction = py[:, None] * px[None, :]
    else:
        active = window.active_cells
        patch = _kernel_patch(kernel, bw, geom)
        correction = fftconvolve(active.astype(float), patch, mode="same") * geom.cell_area
        correction = np.clip(correction, 0.0, 1.0)

    inside = window.active_cells
    low = correction[inside].min()
    if low <= _MIN_EDGE_CORRECTION:
        raise NumericalError("bandwidth too large for window: edge correction underflows")
    return np.where(inside, np.minimum(correction, 1.0), 1.0)


def edge_correction(
    kernel: Kernel2D, bw: BandwidthMatrix, window: ObservationWindow, x: float, y: float
) -> float:
    """Edge-correction factor at a single location inside the window."""
    if not bool(window.contains(x, y)):
        raise InputDataError(f"point ({x:g}, {y:g}) lies outside the window")
    if _separable(kernel, bw, window):
        sx, sy = bw.axis_sd
        cdf = kernel.axis.cdf
        px = float(cdf((window.xmax - x) / sx) - cdf((window.xmin - x) / sx))
        py = float(cdf((window.ymax - y) / sy) - cdf((window.ymin - y) / sy))
        value = px * py
    else:
        geom = window.geometry
        active = window.active_cells
        xa = np.broadcast_to(geom.x_centers, geom.shape)[active]
        ya = np.broadcast_to(geom.y_centers[:, None], geom.shape)[active]
        value = float(kernel.density_h(bw, x - xa, y - ya).sum() * geom.cell_area)
    if value <= _MIN_EDGE_CORRECTION:
        raise NumericalError("bandwidth too large for window: edge correction underflows")
    return min(value, 1.0)


def _kernel_patch(kernel: Kernel2D, bw: BandwidthMatrix, geom) -> np.ndarray:
    """K_H sampled at cell-offset multiples, covering the kernel support."""
    if math.isinf(kernel.support_radius):
        reach = 6.0
    else:
        reach = kernel.support_radius * math.sqrt(2.0) * 1.001
    tr = bw.h11 + bw.h22
    eigmax = 0.5 * (tr + math.sqrt(max(tr * tr - 4.0 * bw.det, 0.0)))
    radius = reach * math.sqrt(eigmax)
    # Offsets beyond the grid span never meet a nonzero indicator cell.
    half_x = min(int(math.ceil(radius / geom.cellsize)), geom.ncols)
    half_y = min(int(math.ceil(radius / geom.cellsize)), geom.nrows)
    dx = np.arange(-half_x, half_x + 1) * geom.cellsize
    dy = np.arange(-half_y, half_y + 1) * geom.cellsize
    return kernel.density_h(bw, dx[None, :], dy[:, None])


def _kernel_sum_surface(
    pattern: PointPattern, kernel: Kernel2D, bw: BandwidthMatrix, window: ObservationWindow
) -> np.ndarray:
    """sum_i K_H(x - X_i) at every cell center."""
    geom = window.geometry
    xc = geom.x_centers
    yc = geom.y_centers
    if bw.is_diagonal:
        sx, sy = bw.axis_sd
        ax = kernel.axis.density((xc[None, :] - pattern.x[:, None]) / sx) / sx
        ay = kernel.axis.density((yc[None, :] - pattern.y[:, None]) / sy) / sy
        return ay.T @ ax
    total = np.zeros(geom.shape)
    for xi, yi in zip(pattern.x, pattern.y):
        total += kernel.density_h(bw, xc[None, :] - xi, yc[:, None] - yi)
    return total


def intensity_surface(
    pattern: PointPattern,
    kernel: Kernel2D,
    bw: BandwidthMatrix,
    window: ObservationWindow,
    edge_correct: bool = True,
) -> IntensitySurface:
    """Edge-corrected kernel intensity estimate on the mesh."""
    if pattern.n == 0:
        raise InputDataError("empty pattern: the kernel intensity estimator needs N >= 1")
    pattern.require_inside(window)
    sums = _kernel_sum_surface(pattern, kernel, bw, window)
    if edge_correct:
        sums = sums / edge_correction_surface(kernel, bw, window)
    values = np.where(window.active_cells, sums, 0.0)
    return IntensitySurface(values=values, window=window)


def intensity_at(
    pattern: PointPattern,
    kernel: Kernel2D,
    bw: BandwidthMatrix,
    window: ObservationWindow,
    x: float,
    y: float,
    edge_correct: bool = True,
) -> float:
    """Edge-corrected kernel intensity estimate at one location."""
    if pattern.n == 0:
        raise InputDataError("empty pattern: the kernel intensity estimator needs N >= 1")
    total = float(kernel.density_h(bw, x - pattern.x, y - pattern.y).sum())
    if edge_correct:
        total /= edge_correction(kernel, bw, window, x, y)
    return total


def spatial_relative_density(
    pattern: PointPattern,
    kernel: Kernel2D,
    bw: BandwidthMatrix,
    window: ObservationWindow,
    edge_correct: bool = True,
) -> RelativeDensitySurface:
    """Location-only relative density: kernel intensity over N.

    An empty pattern yields the flagged zero surface rather than an error,
    matching the estimator's indicator on N.
    """
    if pattern.n == 0:
        return _zero_surface(window)
    surface = intensity_surface(pattern, kernel, bw, window, edge_correct=edge_correct)
    return RelativeDensitySurface(
        values=surface.values / pattern.n, window=window, n=pattern.n
    )


def _covariate_weights(pattern: PointPattern, dist: SpatialCovariateDistribution) -> np.ndarray:
    if pattern.z is None:
        raise InputDataError(
            "pattern has no covariate values; evaluate them first (with_covariate)"
        )
    return 1.0 / np.asarray(dist.gstar_at(pattern.z))


def _weighted_kde(
    queries: np.ndarray,
    z_data: np.ndarray,
    weights: np.ndarray,
    kernel: Kernel1D,
    b: float,
    chunk: int = 8192,
) -> np.ndarray:
    """(1/N) sum_i w_i L_b(q - Z_i) for each query value q."""
    n = z_data.size
    out = np.empty(queries.size)
    scale = 1.0 / (b * n)
    for start in range(0, queries.size, chunk):
        block = queries[start : start + chunk, None]
        out[start : start + chunk] = (
            kernel.density((block - z_data[None, :]) / b) @ weights
        ) * scale
    return out


def covariate_density(
    pattern: PointPattern,
    dist: SpatialCovariateDistribution,
    kernel: Kernel1D,
    b: float,
    z,
):
    """Density of the covariate-transformed point process at z.

    g*(z) times the g*-weighted kernel density of the observed covariate
    values; identically zero for an empty pattern.
    """
    b = _checked_bandwidth(b)
    scalar = np.isscalar(z)
    zq = np.atleast_1d(np.asarray(z, dtype=float))
    if pattern.n == 0:
        out = np.zeros_like(zq)
        return float(out[0]) if scalar else out
    weights = _covariate_weights(pattern, dist)
    out = np.asarray(dist.gstar_at(zq)) * _weighted_kde(zq, pattern.z, weights, kernel, b)
    return float(out[0]) if scalar else out


def covariate_relative_density(
    pattern: PointPattern,
    dist: SpatialCovariateDistribution,
    kernel: Kernel1D,
    b: float,
    grid: CovariateGrid,
    window: ObservationWindow,
    mesh: EvaluationMesh | None = None,
) -> RelativeDensitySurface:
    """Covariate-based relative density evaluated at every mesh cell.

    With the expected count estimated by the sample size, the surface is
    (1/N) sum_i L_b(Z(x) - Z_i) / g*(Z_i): the g*(Z(x)) factors of the
    transformed density and of the intensity back-transform cancel exactly.
    The kernel sum is evaluated once per distinct cell covariate value.
    """
    b = _checked_bandwidth(b)
    if pattern.n == 0:
        return _zero_surface(window)
    if mesh is None:
        mesh = EvaluationMesh(grid, window)
    elif mesh.grid is not grid or mesh.window is not window:
        raise InputDataError("evaluation mesh was built for a different grid or window")
    weights = _covariate_weights(pattern, dist)
    unique_z, inverse = mesh.unique_z
    density_unique = _weighted_kde(unique_z, pattern.z, weights, kernel, b)
    values = np.zeros(grid.geometry.shape)
    values[mesh.active] = density_unique[inverse]
    return RelativeDensitySurface(values=values, window=window, n=pattern.n)
