"""File formats: ESRI ASCII rasters, point-pattern CSV, and result artifacts.

Rasters use the plain-text ESRI ASCII grid layout (header keys ncols, nrows,
xllcorner, yllcorner, cellsize, NODATA_value; row-major with the top row
first). Patterns are CSV with an "x,y" header. Floats are written with
repr(), which round-trips exactly, so parse -> serialize is lossless.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import InputDataError
from .geometry import CovariateGrid, GridGeometry, ObservationWindow, PointPattern

__all__ = [
    "read_ascii_grid",
    "write_ascii_grid",
    "read_window_mask",
    "read_pattern_csv",
    "write_pattern_csv",
    "write_json_artifact",
    "write_power_csv",
]

_REQUIRED_HEADER = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_ascii_grid(path) -> CovariateGrid:
    """Parse an ESRI ASCII grid; nodata cells become NaN."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputDataError(f"cannot read raster {path}: {exc}") from None

    header: dict[str, float] = {}
    data_start = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            data_start = lineno
            continue
        key = parts[0].lower()
        if key in _REQUIRED_HEADER or key == "nodata_value":
            if len(parts) != 2:
                raise InputDataError(f"{path}, line {lineno}: malformed header line {line!r}")
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise InputDataError(
                    f"{path}, line {lineno}: expected a number, got {parts[1]!r}"
                ) from None
            data_start = lineno
        else:
            break

    missing = [k for k in _REQUIRED_HEADER if k not in header]
    if missing:
        raise InputDataError(f"{path}: missing header keys {missing}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols != header["ncols"] or nrows != header["nrows"] or ncols < 1 or nrows < 1:
        raise InputDataError(f"{path}: ncols/nrows must be positive integers")
    nodata = header.get("nodata_value")

    values: list[float] = []
    for lineno in range(data_start + 1, len(lines) + 1):
        for token in lines[lineno - 1].split():
            try:
                values.append(float(token))
            except ValueError:
                raise InputDataError(
                    f"{path}, line {lineno}: expected a number, got {token!r}"
                ) from None
    if len(values) != nrows * ncols:
        raise InputDataError(
            f"{path}: expected {nrows * ncols} cell values, found {len(values)}"
        )

    arr = np.asarray(values, dtype=float).reshape(nrows, ncols)
    if nodata is not None:
        arr = np.where(arr == nodata, np.nan, arr)
    geometry = GridGeometry(
        nrows=nrows,
        ncols=ncols,
        x_origin=header["xllcorner"],
        y_origin=header["yllcorner"],
        cellsize=header["cellsize"],
    )
    # Stored internally with row 0 at the south edge.
    return CovariateGrid(geometry=geometry, values=np.flipud(arr))


def write_ascii_grid(grid: CovariateGrid, path, nodata: float = -9999.0) -> None:
    path = Path(path)
    geom = grid.geometry
    out = np.where(np.isfinite(grid.values), grid.values, nodata)
    lines = [
        f"ncols {geom.ncols}",
        f"nrows {geom.nrows}",
        f"xllcorner {geom.x_origin!r}",
        f"yllcorner {geom.y_origin!r}",
        f"cellsize {geom.cellsize!r}",
        f"NODATA_value {nodata!r}",
    ]
    for row in np.flipud(out):
        lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_window_mask(path, grid: CovariateGrid) -> ObservationWindow:
    """Window whose mask raster (0/1 cells) must align with the covariate grid."""
    mask_grid = read_ascii_grid(path)
    if not mask_grid.geometry.aligned_with(grid.geometry):
        raise InputDataError(
            f"mask raster {path} is not aligned with the covariate grid "
            f"(shape {mask_grid.geometry.shape} vs {grid.geometry.shape})"
        )
    mask = np.nan_to_num(mask_grid.values, nan=0.0) != 0.0
    return ObservationWindow.for_geometry(grid.geometry, mask=mask)


def read_pattern_csv(path) -> PointPattern:
    """CSV with header "x,y" and one point per row."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8-sig").splitlines()
    except OSError as exc:
        raise InputDataError(f"cannot read pattern {path}: {exc}") from None
    if not lines or lines[0].strip().lower().replace(" ", "") != "x,y":
        raise InputDataError(f'{path}, line 1: expected header "x,y"')
    xs: list[float] = []
    ys: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InputDataError(f"{path}, line {lineno}: expected two fields, got {line!r}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            raise InputDataError(
                f"{path}, line {lineno}: expected numbers, got {line!r}"
            ) from None
    if not xs:
        return PointPattern.empty()
    return PointPattern(x=np.asarray(xs), y=np.asarray(ys))


def write_pattern_csv(pattern: PointPattern, path) -> None:
    lines = ["x,y"]
    lines.extend(f"{float(x)!r},{float(y)!r}" for x, y in zip(pattern.x, pattern.y))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json_artifact(payload: dict, path) -> None:
    """Stable JSON serialization; key order is the insertion order."""
    Path(path).write_text(
        json.dumps(payload, indent=2, allow_nan=True) + "\n", encoding="utf-8"
    )


def write_power_csv(result, config: dict, path) -> None:
    """Rejection table shaped rows = m, columns = d plus "inf".

    The effective configuration rides along as leading comment lines so the
    artifact is reproducible on its own.
    """
    lines = [f"# {key} = {value}" for key, value in _flatten(config)]
    labels = ["inf" if d is None else repr(d) for d in result.d_values]
    lines.append(",".join(["m"] + labels))
    for i, m in enumerate(result.m_values):
        cells = [repr(m)]
        for j in range(len(result.d_values)):
            value = result.rejections[i, j]
            cells.append("nan" if math.isnan(value) else repr(float(value)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _flatten(config: dict, prefix: str = ""):
    for key, value in config.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, prefix=f"{name}.")
        else:
            yield name, value
