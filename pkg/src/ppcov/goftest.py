"""The L2 goodness-of-fit test: statistic, smooth-bootstrap calibration,
asymptotic normal approximation, and the pairwise-expansion cross-check.

The null hypothesis is that the intensity of the observed Poisson pattern is
a function of the covariate alone. The statistic integrates the squared
difference between the location-only and the covariate-based relative
density estimates over the window; calibration resamples patterns from a
covariate-driven pilot intensity, so resamples satisfy the null by
construction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InputDataError, NumericalError
from .estimators import (
    IntensitySurface,
    RelativeDensitySurface,
    covariate_relative_density,
    spatial_relative_density,
)
from .geometry import (
    CovariateGrid,
    EvaluationMesh,
    ObservationWindow,
    PointPattern,
    SpatialCovariateDistribution,
    build_spatial_distribution,
    covariate_at,
    quadrature,
)
from .kernels import (
    BandwidthMatrix,
    Kernel1D,
    Kernel2D,
    _checked_bandwidth,
    kernel1d,
    kernel2d,
    select_bandwidth_matrix,
    select_scalar_bandwidth,
)
from .simulate import CellSampler
from .streams import replicate_stream

__all__ = [
    "GofTestResult",
    "AsymptoticApprox",
    "l2_statistic",
    "pilot_intensity",
    "bootstrap_test",
    "normal_approximation",
    "statistic_by_expansion",
]


@dataclass(frozen=True, eq=False)
class GofTestResult:
    """Observed statistic, bootstrap replicates, and the Monte Carlo p-value."""

    statistic: float
    replicates: np.ndarray
    p_value: float
    bw_matrix: BandwidthMatrix
    bw_scalar: float
    pilot_bandwidth: float
    seed: int
    n: int

    @property
    def n_replicates(self) -> int:
        return int(self.replicates.size)


@dataclass(frozen=True)
class AsymptoticApprox:
    """Normal approximation of the statistic under the null.

    Diagnostic only: the convergence is slow, so the bootstrap p-value is the
    one to report. ``mu_terms`` and ``sigma2_terms`` break the moments into
    their additive pieces since their relative sizes depend on the data.
    """

    mu: float
    sigma2: float
    z_score: float
    p_normal: float
    mu_terms: tuple[float, float, float]
    sigma2_terms: tuple[float, float]


def l2_statistic(
    spatial: RelativeDensitySurface, covariate: RelativeDensitySurface
) -> float:
    """Integrated squared difference of the two relative-density surfaces."""
    if spatial.values.shape != covariate.values.shape or not spatial.window.same_mesh(
        covariate.window
    ):
        raise InputDataError("surfaces are on different meshes")
    diff = spatial.values - covariate.values
    return quadrature(diff * diff, spatial.window)


def pilot_intensity(
    pattern: PointPattern,
    dist: SpatialCovariateDistribution,
    kernel: Kernel1D,
    pilot_bandwidth: float,
    grid: CovariateGrid,
    window: ObservationWindow,
    mesh: EvaluationMesh | None = None,
) -> IntensitySurface:
    """Covariate-driven pilot intensity used to generate bootstrap resamples.

    n times the covariate-based relative density at the pilot bandwidth; its
    integral over the window is close to n, so resample sizes match the data.
    """
    if pattern.n == 0:
        raise InputDataError("cannot build a pilot intensity from an empty pattern")
    relative = covariate_relative_density(
        pattern, dist, kernel, pilot_bandwidth, grid, window, mesh=mesh
    )
    return IntensitySurface(values=pattern.n * relative.values, window=window)


def bootstrap_test(
    pattern: PointPattern,
    grid: CovariateGrid,
    window: ObservationWindow,
    *,
    kernel2d_family: Kernel2D | str = "gaussian",
    kernel1d_family: Kernel1D | str = "gaussian",
    bw_matrix: BandwidthMatrix | None = None,
    bw_scalar: float | None = None,
    pilot_bandwidth: float | None = None,
    n_boot: int = 500,
    seed: int = 0,
    reselect_bandwidths: bool = True,
    distribution: SpatialCovariateDistribution | None = None,
    edge_correct: bool = True,
    jobs: int = 1,
    stream_key: tuple[int, ...] = (),
    mesh: EvaluationMesh | None = None,
) -> GofTestResult:
    """Smooth-bootstrap calibration of the L2 statistic.

    Computes the observed statistic, then for each replicate draws a Poisson
    count from the pilot intensity's integral, samples that many points from
    the density proportional to the pilot (cell choice plus uniform in-cell
    jitter), recomputes both estimators (bandwidths reselected per replicate
    by the same rules used on the data, unless disabled), and evaluates the
    replicate statistic. The p-value is (1 + #{T* >= T}) / (n_boot + 1).

    Replicate j draws from the stream keyed by (seed, *stream_key, j), so
    results are independent of ``jobs``.
    """
    if n_boot < 1:
        raise InputDataError(f"n_boot must be >= 1, got {n_boot}")
    if pattern.n == 0:
        raise InputDataError("cannot test an empty pattern")
    k2 = kernel2d(kernel2d_family) if isinstance(kernel2d_family, str) else kernel2d_family
    k1 = kernel1d(kernel1d_family) if isinstance(kernel1d_family, str) else kernel1d_family
    if mesh is None:
        mesh = EvaluationMesh(grid, window)
    pattern.require_inside(window)
    if pattern.z is None:
        pattern = pattern.with_covariate(grid, window)
    dist = distribution if distribution is not None else build_spatial_distribution(grid, window)

    H = bw_matrix if bw_matrix is not None else select_bandwidth_matrix(pattern)
    b = _checked_bandwidth(bw_scalar) if bw_scalar is not None else select_scalar_bandwidth(pattern.z)
    t = (
        _checked_bandwidth(pilot_bandwidth)
        if pilot_bandwidth is not None
        else select_scalar_bandwidth(pattern.z)
    )

    observed = _statistic(pattern, grid, window, mesh, dist, k2, H, k1, b, edge_correct)

    pilot = pilot_intensity(pattern, dist, k1, t, grid, window, mesh=mesh)
    expected_count = pilot.total()
    if expected_count <= 0:
        raise NumericalError("pilot intensity integrates to zero")
    sampler = CellSampler(pilot)

    def one_replicate(j: int) -> float:
        rng = replicate_stream(seed, *stream_key, j)
        n_star = int(rng.poisson(expected_count))
        if n_star == 0:
            return 0.0
        boot = sampler.draw(n_star, rng)
        boot = PointPattern(boot[0], boot[1], covariate_at(grid, window, boot[0], boot[1]))
        if reselect_bandwidths:
            try:
                H_star = select_bandwidth_matrix(boot)
            except NumericalError:
                H_star = H
            try:
                b_star = select_scalar_bandwidth(boot.z)
            except NumericalError:
                b_star = b
        else:
            H_star, b_star = H, b
        return _statistic(boot, grid, window, mesh, dist, k2, H_star, k1, b_star, edge_correct)

    indices = range(1, n_boot + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            replicates = np.fromiter(pool.map(one_replicate, indices), dtype=float, count=n_boot)
    else:
        replicates = np.fromiter(map(one_replicate, indices), dtype=float, count=n_boot)

    p_value = (1.0 + float((replicates >= observed).sum())) / (n_boot + 1.0)
    return GofTestResult(
        statistic=observed,
        replicates=replicates,
        p_value=p_value,
        bw_matrix=H,
        bw_scalar=b,
        pilot_bandwidth=t,
        seed=int(seed),
        n=pattern.n,
    )


def _statistic(pattern, grid, window, mesh, dist, k2, H, k1, b, edge_correct) -> float:
    spatial = spatial_relative_density(pattern, k2, H, window, edge_correct=edge_correct)
    covariate = covariate_relative_density(pattern, dist, k1, b, grid, window, mesh=mesh)
    return l2_statistic(spatial, covariate)


def normal_approximation(
    statistic: float,
    spatial: RelativeDensitySurface,
    kernel: Kernel2D,
    bw: BandwidthMatrix,
    n: int,
) -> AsymptoticApprox:
    """Plug-in normal approximation of the statistic under the null.

    The expected count is estimated by the sample size n and E[1/N] by 1/n.
    The relative density plug-in is the location-only estimate; its Hessian
    is taken by centered second differences on the mesh with one-sided
    stencils at window boundaries.
    """
    if n < 1:
        raise InputDataError("normal approximation needs n >= 1")
    window = spatial.window
    geom = window.geometry
    active = window.active_cells
    values = spatial.values
    step = geom.cellsize
    area = geom.cell_area

    fxx = _second_difference(values, active, axis=1, step=step)
    fyy = _second_difference(values, active, axis=0, step=step)
    fxy = _first_difference(
        _first_difference(values, active, axis=1, step=step), active, axis=0, step=step
    )
    trace_field = bw.h11 * fxx + 2.0 * bw.h12 * fxy + bw.h22 * fyy

    inv_n = 1.0 / n
    roughness_k = kernel.roughness
    mu2 = kernel.second_moment
    mu_term1 = inv_n * bw.det_inv_sqrt * roughness_k
    mu_term2 = 0.5 * mu2 * float((values * trace_field)[active].sum()) * area
    mu_term3 = 0.25 * mu2 * mu2 * float((trace_field * trace_field)[active].sum()) * area
    mu = mu_term1 + mu_term2 + mu_term3

    roughness_l0 = float((values * values)[active].sum()) * area
    double_integral = _convolution_double_integral(values, kernel, bw, window)
    sigma_term1 = inv_n * bw.det_inv_sqrt * double_integral
    sigma_term2 = 2.0 * inv_n * bw.det_inv_sqrt * roughness_l0 * roughness_k
    sigma2 = sigma_term1 + sigma_term2
    if sigma2 <= 0:
        raise NumericalError("degenerate variance in the normal approximation")

    z = (statistic - mu) / math.sqrt(sigma2)
    return AsymptoticApprox(
        mu=mu,
        sigma2=sigma2,
        z_score=z,
        p_normal=float(ndtr(-z)),
        mu_terms=(mu_term1, mu_term2, mu_term3),
        sigma2_terms=(sigma_term1, sigma_term2),
    )


def _shift(arr: np.ndarray, offset: int, axis: int, fill=0.0) -> np.ndarray:
    """arr shifted so that out[i] = arr[i + offset] along the axis."""
    out = np.full_like(arr, fill)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if offset >= 0:
        src[axis] = slice(offset, None)
        dst[axis] = slice(None, arr.shape[axis] - offset)
    else:
        src[axis] = slice(None, offset)
        dst[axis] = slice(-offset, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _second_difference(values, active, axis: int, step: float) -> np.ndarray:
    """Masked second derivative: centered inside, one-sided at boundaries."""
    f_p1 = _shift(values, 1, axis)
    f_m1 = _shift(values, -1, axis)
    f_p2 = _shift(values, 2, axis)
    f_m2 = _shift(values, -2, axis)
    a_p1 = _shift(active, 1, axis, fill=False)
    a_m1 = _shift(active, -1, axis, fill=False)
    a_p2 = _shift(active, 2, axis, fill=False)
    a_m2 = _shift(active, -2, axis, fill=False)

    centered = (f_p1 - 2.0 * values + f_m1) / step**2
    forward = (f_p2 - 2.0 * f_p1 + values) / step**2
    backward = (f_m2 - 2.0 * f_m1 + values) / step**2

    out = np.zeros_like(values)
    use_center = active & a_p1 & a_m1
    use_fwd = active & ~use_center & a_p1 & a_p2
    use_bwd = active & ~use_center & ~use_fwd & a_m1 & a_m2
    out[use_center] = centered[use_center]
    out[use_fwd] = forward[use_fwd]
    out[use_bwd] = backward[use_bwd]
    return out


def _first_difference(values, active, axis: int, step: float) -> np.ndarray:
    """Masked first derivative: centered inside, one-sided at boundaries."""
    f_p1 = _shift(values, 1, axis)
    f_m1 = _shift(values, -1, axis)
    a_p1 = _shift(active, 1, axis, fill=False)
    a_m1 = _shift(active, -1, axis, fill=False)

    out = np.zeros_like(values)
    use_center = active & a_p1 & a_m1
    use_fwd = active & ~a_m1 & a_p1
    use_bwd = active & ~a_p1 & a_m1
    out[use_center] = ((f_p1 - f_m1) / (2.0 * step))[use_center]
    out[use_fwd] = ((f_p1 - values) / step)[use_fwd]
    out[use_bwd] = ((values - f_m1) / step)[use_bwd]
    return out


def _convolution_double_integral(
    values: np.ndarray, kernel: Kernel2D, bw: BandwidthMatrix, window: ObservationWindow
) -> float:
    """int int f^2(x) f(y) (K*K)(H^{-1/2}(x - y)) dx dy on the mesh.

    Separable per-axis matrix products for diagonal bandwidths; otherwise a
    blocked pairwise evaluation over active cells (quadratic in cell count,
    fine for the mesh sizes where non-diagonal H is used).
    """
    geom = window.geometry
    active = window.active_cells
    area = geom.cell_area
    squared = np.where(active, values * values, 0.0)
    plain = np.where(active, values, 0.0)

    if bw.is_diagonal:
        sx, sy = bw.axis_sd
        xc = geom.x_centers
        yc = geom.y_centers
        conv_x = kernel.axis.self_convolutions((xc[:, None] - xc[None, :]) / sx)[0]
        conv_y = kernel.axis.self_convolutions((yc[:, None] - yc[None, :]) / sy)[0]
        smoothed = conv_y @ plain @ conv_x.T
        return float((squared * smoothed).sum()) * area * area

    rows, cols = np.nonzero(active)
    xa = geom.x_centers[cols]
    ya = geom.y_centers[rows]
    sq = squared[active]
    pl = plain[active]
    a, b_, c = bw.inv_sqrt_entries
    total = 0.0
    block = 2048
    for start in range(0, xa.size, block):
        d1 = xa[start : start + block, None] - xa[None, :]
        d2 = ya[start : start + block, None] - ya[None, :]
        kk = kernel.self_convolutions(a * d1 + b_ * d2, b_ * d1 + c * d2)[0]
        total += float(sq[start : start + block] @ (kk @ pl))
    return total * area * area


def statistic_by_expansion(
    pattern: PointPattern,
    dist: SpatialCovariateDistribution,
    kernel2: Kernel2D,
    bw: BandwidthMatrix,
    kernel1: Kernel1D,
    b: float,
    grid: CovariateGrid,
    window: ObservationWindow,
    return_terms: bool = False,
):
    """The statistic evaluated through its six-addend pairwise expansion.

    Expanding the square of the difference of the two estimators gives, per
    point pair, integrals of kernel products over the window; the diagonal
    and off-diagonal sums of each of the three products form six addends.
    This is an algebraic identity with the direct statistic when the spatial
    estimator carries no edge correction, so it serves as an independent
    cross-check; it is computed here and never used by the test itself.

    Quadratic in N and in mesh cells per point: a cross-check for small
    patterns, not a production path.
    """
    b = _checked_bandwidth(b)
    if pattern.n == 0:
        raise InputDataError("empty pattern: the expansion needs N >= 1")
    mesh = EvaluationMesh(grid, window)
    pattern.require_inside(window)
    if pattern.z is None:
        pattern = pattern.with_covariate(grid, window)
    n = pattern.n
    geom = grid.geometry
    rows, cols = np.nonzero(mesh.active)
    xa = geom.x_centers[cols]
    ya = geom.y_centers[rows]
    za = mesh.active_z
    area = geom.cell_area

    weights = 1.0 / np.asarray(dist.gstar_at(pattern.z))
    spatial_fields = kernel2.density_h(
        bw, xa[None, :] - pattern.x[:, None], ya[None, :] - pattern.y[:, None]
    )
    covariate_fields = (
        weights[:, None] * kernel1.density((za[None, :] - pattern.z[:, None]) / b) / b
    )

    gram_ss = (spatial_fields @ spatial_fields.T) * area
    gram_cc = (covariate_fields @ covariate_fields.T) * area
    gram_sc = (spatial_fields @ covariate_fields.T) * area

    inv_n2 = 1.0 / (n * n)
    diag_ss = float(np.trace(gram_ss))
    diag_cc = float(np.trace(gram_cc))
    diag_sc = float(np.trace(gram_sc))
    terms = (
        inv_n2 * diag_ss,
        inv_n2 * (float(gram_ss.sum()) - diag_ss),
        inv_n2 * diag_cc,
        inv_n2 * (float(gram_cc.sum()) - diag_cc),
        -2.0 * inv_n2 * diag_sc,
        -2.0 * inv_n2 * (float(gram_sc.sum()) - diag_sc),
    )
    total = float(sum(terms))
    if return_terms:
        return total, terms
    return total
