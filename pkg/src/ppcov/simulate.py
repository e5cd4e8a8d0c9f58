"""Non-homogeneous Poisson sampling, multiplicative band alternatives, and
the Monte Carlo rejection-proportion harness.

Alternatives multiply a null intensity by a normal-density band in a signed
linear coordinate of the plane; the band's scale parameter controls how far
the model sits from the null (no band at all recovers it). Perturbed models
are rescaled to a target expected count so that power comparisons across
band scales are not confounded by the sample size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputDataError, NumericalError
from .estimators import IntensitySurface
from .geometry import (
    CovariateGrid,
    EvaluationMesh,
    ObservationWindow,
    PointPattern,
    build_spatial_distribution,
    covariate_at,
    quadrature,
)
from .streams import replicate_stream

__all__ = [
    "PerturbationBand",
    "SyntheticModel",
    "PowerStudyResult",
    "band_profile",
    "perturbed_intensity",
    "covariate_intensity",
    "linear_covariate_mesh",
    "linear_null_intensity",
    "sample_nhpp",
    "power_study",
    "CellSampler",
]

BAND_KINDS = ("antidiagonal", "diagonal", "general")


@dataclass(frozen=True)
class PerturbationBand:
    """Multiplicative band: a normal density in a signed linear coordinate.

    kinds:
      antidiagonal  s = u - (offset - v - center_v); lines of constant u + v
      diagonal      s = (u - center_u) - (v - center_v); lines of constant u - v
      general       s = direction . (p - center), direction a unit vector
    """

    kind: str
    scale: float
    center_u: float = 0.0
    center_v: float = 0.0
    direction: tuple[float, float] | None = None
    offset: float = 15.0

    def __post_init__(self):
        if self.kind not in BAND_KINDS:
            raise InputDataError(f"unknown band kind {self.kind!r}; expected one of {BAND_KINDS}")
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise InputDataError(f"band scale must be a positive real, got {self.scale}")
        if self.kind == "general":
            if self.direction is None:
                raise InputDataError("a general band needs a direction vector")
            du, dv = float(self.direction[0]), float(self.direction[1])
            norm = math.hypot(du, dv)
            if norm == 0 or not math.isfinite(norm):
                raise InputDataError("band direction must be a nonzero finite vector")
            object.__setattr__(self, "direction", (du / norm, dv / norm))


def band_profile(band: PerturbationBand, x, y) -> np.ndarray:
    """r(x): the band's normal-density value, maximal on the center line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if band.kind == "antidiagonal":
        s = x - (band.offset - y - band.center_v)
    elif band.kind == "diagonal":
        s = (x - band.center_u) - (y - band.center_v)
    else:
        du, dv = band.direction
        s = du * (x - band.center_u) + dv * (y - band.center_v)
    d = band.scale
    return np.exp(-0.5 * (s / d) ** 2) / (d * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True, eq=False)
class SyntheticModel:
    """A null intensity, an optional band perturbation, and the target count.

    band=None is the explicit no-band sentinel (the null model itself);
    representing it by a huge scale would just underflow the density.
    """

    base: IntensitySurface
    expected_count: float
    band: PerturbationBand | None = None

    def __post_init__(self):
        if not math.isfinite(self.expected_count) or self.expected_count <= 0:
            raise InputDataError(
                f"expected count must be a positive real, got {self.expected_count}"
            )


def perturbed_intensity(model: SyntheticModel) -> IntensitySurface:
    """base x band, rescaled so the window integral equals the target count."""
    window = model.base.window
    values = model.base.values
    if model.band is not None:
        xx, yy = window.geometry.center_grids()
        values = values * band_profile(model.band, xx, yy)
    total = quadrature(values, window)
    if total <= 0:
        raise NumericalError("perturbed intensity integrates to zero")
    return IntensitySurface(values=values * (model.expected_count / total), window=window)


def covariate_intensity(grid: CovariateGrid, window: ObservationWindow, rho) -> IntensitySurface:
    """Intensity surface rho(Z(x)) for a covariate-driven model."""
    mesh = EvaluationMesh(grid, window)
    values = np.zeros(grid.geometry.shape)
    values[mesh.active] = rho(grid.values[mesh.active])
    if not np.isfinite(values[mesh.active]).all() or (values[mesh.active] < 0).any():
        raise InputDataError("rho(Z) must be finite and nonnegative on the window")
    return IntensitySurface(values=values, window=window)


def linear_covariate_mesh(cells: int = 256) -> tuple[CovariateGrid, ObservationWindow]:
    """Unit-square window with the covariate Z(x, y) = x on a shared mesh."""
    window = ObservationWindow.rectangle(0.0, 1.0, 0.0, 1.0, cells=cells)
    grid = CovariateGrid.from_function(window.geometry, lambda x, y: x)
    return grid, window


def linear_null_intensity(
    grid: CovariateGrid, window: ObservationWindow, expected_count: float
) -> IntensitySurface:
    """The shipped synthetic null: rho(z) = m (0.5 + z) over Z(x, y) = x."""
    return covariate_intensity(grid, window, lambda z: expected_count * (0.5 + z))


class CellSampler:
    """Draws points from the density proportional to a mesh intensity.

    Cells are chosen with probability proportional to value times area, then
    each point is jittered uniformly within its cell; this samples exactly
    from the piecewise-constant mesh intensity.
    """

    def __init__(self, intensity: IntensitySurface):
        window = intensity.window
        geom = window.geometry
        active = window.active_cells
        if not np.all(intensity.values[active] >= 0):
            raise InputDataError("intensity must be nonnegative")
        weights = intensity.values[active] * geom.cell_area
        self.cumulative = np.cumsum(weights)
        self.total = float(self.cumulative[-1]) if weights.size else 0.0
        if self.total <= 0:
            raise NumericalError("intensity integrates to zero; nothing to sample")
        rows, cols = np.nonzero(active)
        self.x_centers = geom.x_centers[cols]
        self.y_centers = geom.y_centers[rows]
        self.cellsize = geom.cellsize

    def draw(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        # Fixed draw order: cell picks, then x jitter, then y jitter.
        u = rng.random(count) * self.total
        idx = np.minimum(
            np.searchsorted(self.cumulative, u, side="right"), self.cumulative.size - 1
        )
        x = self.x_centers[idx] + (rng.random(count) - 0.5) * self.cellsize
        y = self.y_centers[idx] + (rng.random(count) - 0.5) * self.cellsize
        return x, y


def sample_nhpp(
    intensity: IntensitySurface,
    window: ObservationWindow,
    rng: np.random.Generator | int,
) -> PointPattern:
    """One realization of the Poisson process with the given mesh intensity.

    The count is Poisson with mean the intensity's window integral; locations
    follow the conditional-uniform construction via CellSampler.
    """
    if not intensity.window.same_mesh(window):
        raise InputDataError("intensity and window are on different meshes")
    if isinstance(rng, (int, np.integer)):
        rng = replicate_stream(int(rng))
    sampler = CellSampler(intensity)
    count = int(rng.poisson(sampler.total))
    if count == 0:
        return PointPattern.empty()
    x, y = sampler.draw(count, rng)
    return PointPattern(x=x, y=y)


@dataclass(eq=False)
class PowerStudyResult:
    """Rejection proportions over a (m, d) scenario grid.

    ``d_values`` uses None for the no-band null column. ``rejections`` is NaN
    for scenarios where no replicate produced a testable (nonempty) pattern;
    ``failures`` counts the untestable replicates per scenario.
    """

    m_values: list[float]
    d_values: list[float | None]
    rejections: np.ndarray
    failures: np.ndarray
    replicates: int
    n_boot: int
    alpha: float
    seed: int


def power_study(
    base: IntensitySurface,
    grid: CovariateGrid,
    window: ObservationWindow,
    band_template: PerturbationBand | None,
    d_values,
    m_values,
    *,
    replicates: int,
    n_boot: int = 200,
    alpha: float = 0.05,
    seed: int = 0,
    jobs: int = 1,
    pilot_bandwidth: float | None = None,
    kernel2d_family: str = "gaussian",
    kernel1d_family: str = "gaussian",
    reselect_bandwidths: bool = True,
    edge_correct: bool = True,
) -> PowerStudyResult:
    """Rejection proportion of the bootstrap test for each (m, d) scenario.

    For every scenario, ``replicates`` patterns are simulated from the base
    intensity perturbed at band scale d (d = None or inf means no band) and
    rescaled to expected count m; each pattern is tested with ``n_boot``
    bootstrap resamples and the fraction of p-values at or below ``alpha`` is
    reported. Replicate (s, r) derives all of its randomness from the stream
    key (seed, s, r), so the full table is reproducible bit for bit and
    independent of ``jobs``.
    """
    from .goftest import bootstrap_test

    if replicates < 1:
        raise InputDataError(f"replicates must be >= 1, got {replicates}")
    if n_boot < 1:
        raise InputDataError(f"n_boot must be >= 1, got {n_boot}")
    if not (0.0 < alpha <= 1.0):
        raise InputDataError(f"alpha must be in (0, 1], got {alpha}")

    d_values = [None if d is None or math.isinf(d) else float(d) for d in d_values]
    m_values = [float(m) for m in m_values]
    if any(d is not None for d in d_values) and band_template is None:
        raise InputDataError("finite band scales need a band template")

    mesh = EvaluationMesh(grid, window)
    dist = build_spatial_distribution(grid, window)
    rejections = np.full((len(m_values), len(d_values)), np.nan)
    failures = np.zeros((len(m_values), len(d_values)), dtype=int)

    for i_m, m in enumerate(m_values):
        for i_d, d in enumerate(d_values):
            scenario = i_m * len(d_values) + i_d
            band = None if d is None else replace(band_template, scale=d)
            intensity = perturbed_intensity(SyntheticModel(base, m, band))
            sampler = CellSampler(intensity)

            def one_replicate(r: int) -> float:
                rng = replicate_stream(seed, scenario, r, 0)
                count = int(rng.poisson(sampler.total))
                if count == 0:
                    return math.nan
                x, y = sampler.draw(count, rng)
                pattern = PointPattern(x, y, covariate_at(grid, window, x, y))
                result = bootstrap_test(
                    pattern,
                    grid,
                    window,
                    kernel2d_family=kernel2d_family,
                    kernel1d_family=kernel1d_family,
                    pilot_bandwidth=pilot_bandwidth,
                    n_boot=n_boot,
                    seed=seed,
                    reselect_bandwidths=reselect_bandwidths,
                    distribution=dist,
                    edge_correct=edge_correct,
                    stream_key=(scenario, r),
                    mesh=mesh,
                )
                return result.p_value

            indices = range(replicates)
            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    p_values = np.fromiter(
                        pool.map(one_replicate, indices), dtype=float, count=replicates
                    )
            else:
                p_values = np.fromiter(
                    map(one_replicate, indices), dtype=float, count=replicates
                )

            failed = int(np.isnan(p_values).sum())
            failures[i_m, i_d] = failed
            tested = replicates - failed
            if tested > 0:
                rejections[i_m, i_d] = float((p_values <= alpha).sum()) / tested

    return PowerStudyResult(
        m_values=m_values,
        d_values=d_values,
        rejections=rejections,
        failures=failures,
        replicates=replicates,
        n_boot=n_boot,
        alpha=alpha,
        seed=int(seed),
    )
