"""Observation windows, covariate rasters, quadrature, and the covariate's
spatial distribution over the window.

Everything downstream shares one evaluation mesh: the cell centers of the
covariate raster, restricted to the observation window. Every integral in the
package is a midpoint sum over that mesh, so quantities that get compared to
each other (estimated surfaces, test statistics) never mix quadrature rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InputDataError, NumericalError

__all__ = [
    "GridGeometry",
    "CovariateGrid",
    "ObservationWindow",
    "PointPattern",
    "SpatialCovariateDistribution",
    "EvaluationMesh",
    "window_area",
    "covariate_at",
    "build_spatial_distribution",
    "quadrature",
    "resample_to_mesh",
]

# Relative clip level for g*: keeps the 1/g*(Z_i) weights finite when points
# land in covariate ranges of near-zero spatial frequency.
GSTAR_FLOOR_FRACTION = 1e-6


@dataclass(frozen=True)
class GridGeometry:
    """Square-celled raster layout: shape, lower-left corner, cell size."""

    nrows: int
    ncols: int
    x_origin: float
    y_origin: float
    cellsize: float

    def __post_init__(self):
        if self.nrows < 1 or self.ncols < 1:
            raise InputDataError("grid must have at least one row and column")
        if not np.isfinite(self.cellsize) or self.cellsize <= 0:
            raise InputDataError(f"cellsize must be positive, got {self.cellsize}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def cell_area(self) -> float:
        return self.cellsize * self.cellsize

    @property
    def xmax(self) -> float:
        return self.x_origin + self.ncols * self.cellsize

    @property
    def ymax(self) -> float:
        return self.y_origin + self.nrows * self.cellsize

    @cached_property
    def x_centers(self) -> np.ndarray:
        return self.x_origin + (np.arange(self.ncols) + 0.5) * self.cellsize

    @cached_property
    def y_centers(self) -> np.ndarray:
        return self.y_origin + (np.arange(self.nrows) + 0.5) * self.cellsize

    def center_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as (nrows, ncols) arrays, row 0 at the south edge."""
        return np.meshgrid(self.x_centers, self.y_centers)

    def aligned_with(self, other: "GridGeometry") -> bool:
        tol = 1e-9 * self.cellsize
        return (
            self.shape == other.shape
            and abs(self.cellsize - other.cellsize) <= tol
            and abs(self.x_origin - other.x_origin) <= tol
            and abs(self.y_origin - other.y_origin) <= tol
        )

    def cell_indices(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Row/column index of the cell containing each point.

        Points on the far boundary are assigned to the last cell.
        """
        col = np.floor((np.asarray(x, dtype=float) - self.x_origin) / self.cellsize)
        row = np.floor((np.asarray(y, dtype=float) - self.y_origin) / self.cellsize)
        col = np.clip(col, 0, self.ncols - 1).astype(np.intp)
        row = np.clip(row, 0, self.nrows - 1).astype(np.intp)
        return row, col

    @classmethod
    def from_bounds(cls, xmin, xmax, ymin, ymax, cells: int = 256) -> "GridGeometry":
        """Geometry covering a rectangle with `cells` cells on its longest axis."""
        if not (xmax > xmin and ymax > ymin):
            raise InputDataError("rectangle bounds must satisfy xmax > xmin and ymax > ymin")
        if cells < 1:
            raise InputDataError("cells must be >= 1")
        longest = max(xmax - xmin, ymax - ymin)
        cellsize = longest / cells
        ncols = max(1, round((xmax - xmin) / cellsize))
        nrows = max(1, round((ymax - ymin) / cellsize))
        return cls(nrows=nrows, ncols=ncols, x_origin=xmin, y_origin=ymin, cellsize=cellsize)


@dataclass(frozen=True, eq=False)
class CovariateGrid:
    """Raster of covariate values; NaN marks nodata cells.

    ``values[i, j]`` is the covariate at the center of the cell in row i
    (counted from the south edge) and column j (from the west edge).
    """

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geometry.shape:
            raise InputDataError(
                f"covariate array shape {values.shape} does not match "
                f"grid shape {self.geometry.shape}"
            )
        if np.isinf(values).any():
            raise InputDataError("covariate values must be finite or nodata (NaN)")
        object.__setattr__(self, "values", values)

    @cached_property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    @classmethod
    def from_function(cls, geometry: GridGeometry, func) -> "CovariateGrid":
        """Sample ``func(x, y)`` at every cell center."""
        xx, yy = geometry.center_grids()
        return cls(geometry=geometry, values=np.asarray(func(xx, yy), dtype=float))


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """Rectangle with an optional cell mask, plus the shared quadrature mesh.

    The rectangle bounds are authoritative for the window's area when there is
    no mask; with a mask the area is the count of masked-in cells times the
    cell area.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    geometry: GridGeometry
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InputDataError("window must satisfy xmax > xmin and ymax > ymin")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.geometry.shape:
                raise InputDataError(
                    f"mask shape {mask.shape} does not match grid shape {self.geometry.shape}"
                )
            if not mask.any():
                raise InputDataError("window has zero area: mask selects no cells")
            object.__setattr__(self, "mask", mask)

    @property
    def area(self) -> float:
        """|W|: rectangle area, or masked cell count times cell area."""
        if self.mask is None:
            return (self.xmax - self.xmin) * (self.ymax - self.ymin)
        return float(self.mask.sum()) * self.geometry.cell_area

    @cached_property
    def active_cells(self) -> np.ndarray:
        """Boolean raster of cells whose centers belong to the window."""
        xc = self.geometry.x_centers
        yc = self.geometry.y_centers
        inside = (
            (xc >= self.xmin) & (xc <= self.xmax)
        )[None, :] & ((yc >= self.ymin) & (yc <= self.ymax))[:, None]
        if self.mask is not None:
            inside = inside & self.mask
        if not inside.any():
            raise InputDataError("window has zero area: no mesh cell lies inside it")
        return inside

    def contains(self, x, y) -> np.ndarray:
        """Vectorized point-in-window test (mask-aware)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        if self.mask is not None and inside.any():
            row, col = self.geometry.cell_indices(x, y)
            inside = inside & self.mask[row, col]
        return inside

    def same_mesh(self, other: "ObservationWindow") -> bool:
        if not self.geometry.aligned_with(other.geometry):
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        if self.mask is not None and not np.array_equal(self.mask, other.mask):
            return False
        return True

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax, cells: int = 256) -> "ObservationWindow":
        geometry = GridGeometry.from_bounds(xmin, xmax, ymin, ymax, cells)
        return cls(xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax, geometry=geometry)

    @classmethod
    def for_geometry(cls, geometry: GridGeometry, mask: np.ndarray | None = None) -> "ObservationWindow":
        return cls(
            xmin=geometry.x_origin,
            xmax=geometry.xmax,
            ymin=geometry.y_origin,
            ymax=geometry.ymax,
            geometry=geometry,
            mask=mask,
        )


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Event locations, with the covariate value at each point once evaluated."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape != y.shape or x.ndim != 1:
            raise InputDataError("point coordinates must be 1-D arrays of equal length")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise InputDataError("point coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.z is not None:
            z = np.atleast_1d(np.asarray(self.z, dtype=float))
            if z.shape != x.shape:
                raise InputDataError("covariate values must match the number of points")
            object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @classmethod
    def empty(cls) -> "PointPattern":
        return cls(x=np.empty(0), y=np.empty(0), z=np.empty(0))

    def with_covariate(self, grid: CovariateGrid, window: ObservationWindow) -> "PointPattern":
        """Return a copy with z filled in by raster interpolation."""
        if self.n == 0:
            return PointPattern.empty()
        z = covariate_at(grid, window, self.x, self.y)
        return PointPattern(x=self.x, y=self.y, z=z)

    def require_inside(self, window: ObservationWindow) -> None:
        if self.n == 0:
            return
        inside = window.contains(self.x, self.y)
        if not np.all(inside):
            k = int(np.argmin(inside))
            raise InputDataError(
                f"point {k} at ({self.x[k]:g}, {self.y[k]:g}) lies outside the window"
            )


@dataclass(frozen=True, eq=False)
class SpatialCovariateDistribution:
    """The covariate's spatial distribution over the window.

    ``cdf_values`` samples the area-weighted CDF G on ``z_grid``;
    ``gstar_values`` is |W| times the kernel-smoothed density of the covariate
    over the window, clipped below at ``gstar_floor``. Exact CDF queries use
    the stored sorted cell values rather than interpolation.
    """

    z_grid: np.ndarray
    cdf_values: np.ndarray
    gstar_values: np.ndarray
    gstar_floor: float
    window_area: float
    sorted_cell_values: np.ndarray
    smoothing: float

    def cdf(self, z) -> np.ndarray | float:
        """G(z): area fraction of the window where the covariate is <= z."""
        counts = np.searchsorted(self.sorted_cell_values, np.asarray(z, dtype=float), side="right")
        out = counts / self.sorted_cell_values.size
        return float(out) if np.isscalar(z) else out

    def gstar_at(self, z) -> np.ndarray | float:
        """Clipped g*(z), linearly interpolated; beyond the grid it stays at the floor."""
        out = np.interp(np.asarray(z, dtype=float), self.z_grid, self.gstar_values,
                        left=self.gstar_floor, right=self.gstar_floor)
        out = np.maximum(out, self.gstar_floor)
        return float(out) if np.isscalar(z) else out


class EvaluationMesh:
    """Shared per-(grid, window) caches used by the estimators.

    Building one of these up front and passing it around avoids recomputing
    the active-cell mask and the distinct covariate values inside Monte Carlo
    loops; it changes nothing about results.
    """

    def __init__(self, grid: CovariateGrid, window: ObservationWindow):
        if not grid.geometry.aligned_with(window.geometry):
            raise InputDataError("covariate grid and window are on different meshes")
        self.grid = grid
        self.window = window
        self.active = window.active_cells & grid.valid
        if not self.active.any():
            raise InputDataError("no valid covariate cell lies inside the window")
        self.cell_area = grid.geometry.cell_area
        self.x_centers = grid.geometry.x_centers
        self.y_centers = grid.geometry.y_centers

    @cached_property
    def active_z(self) -> np.ndarray:
        return self.grid.values[self.active]

    @cached_property
    def unique_z(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct covariate values on active cells and the inverse index."""
        uniq, inverse = np.unique(self.active_z, return_inverse=True)
        return uniq, inverse

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint-rule integral of a full-raster field over the active cells."""
        values = np.asarray(values)
        if values.shape != self.grid.geometry.shape:
            raise InputDataError(
                f"field shape {values.shape} does not match mesh shape {self.grid.geometry.shape}"
            )
        return float(values[self.active].sum() * self.cell_area)


def window_area(window: ObservationWindow) -> float:
    """|W| of a valid window. Rectangle area without a mask, cell count times
    cell area with one."""
    return window.area


def covariate_at(grid: CovariateGrid, window: ObservationWindow, x, y):
    """Covariate value at points inside the window.

    Bilinear interpolation among the four surrounding valid cell centers;
    nodata neighbors are dropped and the weights renormalized. If all four are
    nodata the nearest valid cell center's value is used. Points outside the
    window raise; so does a grid with no valid cells at all.
    """
    scalar = np.isscalar(x) and np.isscalar(y)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise InputDataError("x and y must have the same shape")

    inside = window.contains(x, y)
    if not np.all(inside):
        k = int(np.argmin(inside))
        raise InputDataError(f"point ({x[k]:g}, {y[k]:g}) lies outside the window")
    if not grid.valid.any():
        raise NumericalError("covariate grid contains no valid cells")

    geom = grid.geometry
    # Fractional position in cell-center coordinates.
    fx = (x - geom.x_origin) / geom.cellsize - 0.5
    fy = (y - geom.y_origin) / geom.cellsize - 0.5
    j0 = np.clip(np.floor(fx), 0, geom.ncols - 1).astype(np.intp)
    i0 = np.clip(np.floor(fy), 0, geom.nrows - 1).astype(np.intp)
    j1 = np.minimum(j0 + 1, geom.ncols - 1)
    i1 = np.minimum(i0 + 1, geom.nrows - 1)
    wx = np.clip(fx - j0, 0.0, 1.0)
    wy = np.clip(fy - i0, 0.0, 1.0)

    vals = np.stack(
        [grid.values[i0, j0], grid.values[i0, j1], grid.values[i1, j0], grid.values[i1, j1]]
    )
    weights = np.stack([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy])
    weights = np.where(np.isfinite(vals), weights, 0.0)
    total = weights.sum(axis=0)

    out = np.empty_like(x)
    ok = total > 0
    if ok.any():
        safe = np.where(np.isfinite(vals), vals, 0.0)
        out[ok] = (weights[:, ok] * safe[:, ok]).sum(axis=0) / total[ok]
    if (~ok).any():
        # All four neighbors are nodata: fall back to the nearest valid center.
        vi, vj = np.nonzero(grid.valid)
        vx = geom.x_centers[vj]
        vy = geom.y_centers[vi]
        for k in np.nonzero(~ok)[0]:
            nearest = np.argmin((vx - x[k]) ** 2 + (vy - y[k]) ** 2)
            out[k] = grid.values[vi[nearest], vj[nearest]]
    return float(out[0]) if scalar else out


def build_spatial_distribution(
    grid: CovariateGrid,
    window: ObservationWindow,
    smoothing: float | None = None,
    z_grid_size: int = 2048,
) -> SpatialCovariateDistribution:
    """Estimate G, g and g* = |W| g from the covariate raster.

    G is the area-weighted empirical CDF of in-window cell values. g is a 1-D
    Gaussian kernel density estimate of those values (all cells carry equal
    area weight); ``smoothing`` defaults to a Silverman-type rule on the cell
    values. g* is clipped below at GSTAR_FLOOR_FRACTION times its maximum.
    """
    mesh = EvaluationMesh(grid, window)
    cell_values = np.sort(mesh.active_z)
    distinct = np.unique(cell_values)
    if distinct.size < 2:
        raise NumericalError(
            "degenerate covariate: fewer than 2 distinct values inside the window"
        )

    if smoothing is None:
        from .kernels import select_scalar_bandwidth

        try:
            smoothing = select_scalar_bandwidth(cell_values)
        except NumericalError as exc:
            raise NumericalError(f"degenerate covariate: {exc}") from None
    if not np.isfinite(smoothing) or smoothing <= 0:
        raise InputDataError(f"smoothing bandwidth must be positive, got {smoothing}")

    zmin, zmax = cell_values[0], cell_values[-1]
    pad = 6.0 * smoothing
    z_grid = np.linspace(zmin - pad, zmax + pad, z_grid_size)

    # Binned KDE: cells -> fine histogram -> Gaussian smoothing at z_grid.
    n_bins = 4096
    edges = np.linspace(zmin, zmax, n_bins + 1)
    counts, _ = np.histogram(cell_values, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    occupied = counts > 0
    centers = centers[occupied]
    weights = counts[occupied] / cell_values.size
    diff = (z_grid[:, None] - centers[None, :]) / smoothing
    g = (np.exp(-0.5 * diff * diff) @ weights) / (smoothing * np.sqrt(2.0 * np.pi))

    gstar = window.area * g
    floor = GSTAR_FLOOR_FRACTION * float(gstar.max())
    if floor <= 0:
        raise NumericalError("degenerate covariate: g* vanishes everywhere")
    gstar = np.maximum(gstar, floor)

    cdf_on_grid = np.searchsorted(cell_values, z_grid, side="right") / cell_values.size
    return SpatialCovariateDistribution(
        z_grid=z_grid,
        cdf_values=cdf_on_grid,
        gstar_values=gstar,
        gstar_floor=floor,
        window_area=window.area,
        sorted_cell_values=cell_values,
        smoothing=float(smoothing),
    )


def resample_to_mesh(
    grid: CovariateGrid, window: ObservationWindow, cells: int
) -> tuple[CovariateGrid, ObservationWindow]:
    """Re-grid a covariate (and the window mask) to a new mesh resolution.

    The new geometry covers the window's rectangle with `cells` cells on the
    longest axis; covariate values come from bilinear interpolation of the
    original raster, and masked windows keep cells whose new centers fall
    inside the old mask.
    """
    geometry = GridGeometry.from_bounds(window.xmin, window.xmax, window.ymin, window.ymax, cells)
    xx, yy = geometry.center_grids()
    inside = window.contains(xx.ravel(), yy.ravel()).reshape(geometry.shape)
    values = np.full(geometry.shape, np.nan)
    if inside.any():
        values[inside] = covariate_at(grid, window, xx[inside], yy[inside])
    new_grid = CovariateGrid(geometry=geometry, values=values)
    mask = inside if window.mask is not None else None
    new_window = ObservationWindow(
        xmin=window.xmin,
        xmax=window.xmax,
        ymin=window.ymin,
        ymax=window.ymax,
        geometry=geometry,
        mask=mask,
    )
    return new_grid, new_window


def quadrature(values: np.ndarray, window: ObservationWindow) -> float:
    """Midpoint rule: sum of in-window cell values times the cell area."""
    values = np.asarray(values)
    if values.shape != window.geometry.shape:
        raise InputDataError(
            f"field shape {values.shape} does not match mesh shape {window.geometry.shape}"
        )
    return float(values[window.active_cells].sum() * window.geometry.cell_area)
