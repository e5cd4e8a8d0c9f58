"""Command-line front end: file I/O, configuration, and result artifacts.

Subcommands: fit (estimator surfaces), test (bootstrap goodness-of-fit),
power (Monte Carlo rejection table from a TOML study config), simulate
(pattern CSVs from a synthetic model), bandwidth (print selected bandwidths).

Exit codes: 0 success, 2 input error, 3 numeric failure. Every artifact
embeds the statistical configuration and the seed; execution details (the
output path, --jobs) are deliberately excluded so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .dataio import (
    read_ascii_grid,
    read_pattern_csv,
    read_window_mask,
    write_ascii_grid,
    write_json_artifact,
    write_pattern_csv,
    write_power_csv,
)
from .errors import InputDataError, NumericalError
from .estimators import IntensitySurface, covariate_relative_density, spatial_relative_density
from .geometry import (
    CovariateGrid,
    EvaluationMesh,
    ObservationWindow,
    PointPattern,
    build_spatial_distribution,
    resample_to_mesh,
)
from .goftest import bootstrap_test
from .kernels import (
    BandwidthMatrix,
    kernel1d,
    kernel2d,
    select_bandwidth_matrix,
    select_scalar_bandwidth,
)
from .simulate import (
    CellSampler,
    PerturbationBand,
    SyntheticModel,
    linear_covariate_mesh,
    linear_null_intensity,
    perturbed_intensity,
    power_study,
)
from .streams import replicate_stream

DEFAULT_GRID_CELLS = 256


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppcov",
        description="Test whether a spatial covariate explains a point pattern's intensity.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_kernel_options(p):
        p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian",
                       help="kernel family for both the planar and covariate smoothers")
        p.add_argument("--H", dest="bw_matrix", default=None, metavar="h11,h12,h22",
                       help="bandwidth matrix entries; selected from the data when omitted")
        p.add_argument("--b", dest="bw_scalar", type=float, default=None,
                       help="covariate bandwidth; selected from the data when omitted")

    def add_common(p, pattern=True):
        if pattern:
            p.add_argument("--pattern", required=True, help="point pattern CSV (x,y header)")
        p.add_argument("--covariate", required=True, help="covariate raster (ESRI ASCII)")
        p.add_argument("--mask", default=None, help="0/1 window mask raster aligned to the covariate")
        p.add_argument("--grid-cells", type=int, default=None,
                       help="resample the mesh to this many cells on the longest axis")

    p_fit = sub.add_parser("fit", help="write both relative-density surfaces")
    add_common(p_fit)
    add_kernel_options(p_fit)
    p_fit.add_argument("--out", required=True, help="output path stem for the surface rasters")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.set_defaults(handler=cmd_fit)

    p_test = sub.add_parser("test", help="bootstrap goodness-of-fit test")
    add_common(p_test)
    add_kernel_options(p_test)
    p_test.add_argument("--B", type=int, default=500, help="bootstrap replicates (default 500)")
    p_test.add_argument("--pilot-t", default=None, metavar="T or A:B:STEP",
                        help="pilot bandwidth, or an inclusive range for a sensitivity scan")
    p_test.add_argument("--seed", type=int, default=None)
    p_test.add_argument("--jobs", type=int, default=1)
    p_test.add_argument("--out", required=True, help="result JSON path")
    p_test.set_defaults(handler=cmd_test)

    p_power = sub.add_parser("power", help="Monte Carlo rejection-proportion table")
    p_power.add_argument("--config", required=True, help="study configuration TOML")
    p_power.add_argument("--out", required=True, help="rejection table CSV path")
    p_power.add_argument("--seed", type=int, default=None)
    p_power.add_argument("--jobs", type=int, default=1)
    p_power.set_defaults(handler=cmd_power)

    p_sim = sub.add_parser("simulate", help="write pattern CSVs sampled from a model")
    p_sim.add_argument("--preset", choices=["linear"], default=None,
                       help="synthetic model: Z(x,y)=x on the unit square, rho(z)=m(0.5+z)")
    p_sim.add_argument("--cells", type=int, default=DEFAULT_GRID_CELLS,
                       help="mesh cells for the synthetic preset")
    p_sim.add_argument("--intensity", default=None, help="intensity raster (ESRI ASCII)")
    p_sim.add_argument("--mask", default=None)
    p_sim.add_argument("--m", type=float, required=True, help="target expected count")
    p_sim.add_argument("--band-kind", choices=["antidiagonal", "diagonal", "general"],
                       default=None)
    p_sim.add_argument("--d", type=float, default=None, help="band scale (omit for no band)")
    p_sim.add_argument("--band-center", default="0,0", metavar="u,v")
    p_sim.add_argument("--band-direction", default=None, metavar="u,v")
    p_sim.add_argument("--band-offset", type=float, default=15.0)
    p_sim.add_argument("--R", type=int, default=1, help="number of patterns")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True, help="output path prefix")
    p_sim.set_defaults(handler=cmd_simulate)

    p_bw = sub.add_parser("bandwidth", help="print the selected bandwidths")
    add_common(p_bw)
    p_bw.set_defaults(handler=cmd_bandwidth)

    return parser


def resolve_seed(flag_seed, config_seed=None) -> int:
    """Explicit flag wins, then PPCOV_SEED, then the config, then fresh entropy."""
    if flag_seed is not None:
        return _validated_seed(flag_seed, "--seed")
    env = os.environ.get("PPCOV_SEED")
    if env is not None:
        try:
            return _validated_seed(int(env), "PPCOV_SEED")
        except ValueError:
            raise InputDataError(f"PPCOV_SEED must be an integer, got {env!r}") from None
    if config_seed is not None:
        return _validated_seed(config_seed, "config seed")
    return int(np.random.SeedSequence().entropy % (2**63))


def _validated_seed(value, label) -> int:
    value = int(value)
    if value < 0:
        raise InputDataError(f"{label} must be a nonnegative integer, got {value}")
    return value


def load_mesh(args) -> tuple[CovariateGrid, ObservationWindow]:
    grid = read_ascii_grid(_existing(args.covariate))
    if args.mask is not None:
        window = read_window_mask(_existing(args.mask), grid)
    else:
        window = ObservationWindow.for_geometry(grid.geometry)
    if args.grid_cells is not None:
        grid, window = resample_to_mesh(grid, window, args.grid_cells)
    return grid, window


def _existing(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"file not found: {path}")
    return path


def parse_bandwidth_matrix(text) -> BandwidthMatrix | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise InputDataError(f'--H expects "h11,h12,h22", got {text!r}')
    try:
        h11, h12, h22 = (float(p) for p in parts)
    except ValueError:
        raise InputDataError(f"--H entries must be numbers, got {text!r}") from None
    return BandwidthMatrix(h11, h12, h22)


def parse_pilot_values(text) -> list[float] | None:
    """A scalar, or an inclusive range "start:stop:step"."""
    if text is None:
        return None
    if ":" not in text:
        try:
            return [float(text)]
        except ValueError:
            raise InputDataError(f"--pilot-t must be a number or a range, got {text!r}") from None
    parts = text.split(":")
    if len(parts) != 3:
        raise InputDataError(f'--pilot-t range must be "start:stop:step", got {text!r}')
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise InputDataError(f"--pilot-t range entries must be numbers, got {text!r}") from None
    if step <= 0 or stop < start:
        raise InputDataError(f"--pilot-t range must have stop >= start and step > 0: {text!r}")
    count = int(round((stop - start) / step)) + 1
    if abs(start + (count - 1) * step - stop) > 1e-6 * step:
        raise InputDataError(f"--pilot-t step does not divide the range: {text!r}")
    return [float(v) for v in np.linspace(start, stop, count)]


def cmd_fit(args) -> int:
    grid, window = load_mesh(args)
    pattern = read_pattern_csv(_existing(args.pattern)).with_covariate(grid, window)
    if pattern.n == 0:
        raise InputDataError("cannot fit estimators to an empty pattern")
    mesh = EvaluationMesh(grid, window)
    dist = build_spatial_distribution(grid, window)
    bw_matrix = parse_bandwidth_matrix(args.bw_matrix) or select_bandwidth_matrix(pattern)
    bw_scalar = args.bw_scalar if args.bw_scalar is not None else select_scalar_bandwidth(pattern.z)
    seed = resolve_seed(args.seed)

    spatial = spatial_relative_density(pattern, kernel2d(args.kernel), bw_matrix, window)
    covariate = covariate_relative_density(
        pattern, dist, kernel1d(args.kernel), bw_scalar, grid, window, mesh=mesh
    )

    stem = Path(args.out)
    if stem.suffix == ".asc":
        stem = stem.with_suffix("")
    write_ascii_grid(CovariateGrid(grid.geometry, spatial.values), f"{stem}_spatial.asc")
    write_ascii_grid(CovariateGrid(grid.geometry, covariate.values), f"{stem}_covariate.asc")
    config = _base_config("fit", args, seed)
    payload = {
        "H": [bw_matrix.h11, bw_matrix.h12, bw_matrix.h22],
        "b": bw_scalar,
        "n": pattern.n,
        "seed": seed,
        "config": config,
    }
    write_json_artifact(payload, f"{stem}.json")
    return 0


def cmd_test(args) -> int:
    if args.B < 1:
        raise InputDataError(f"--B must be >= 1, got {args.B}")
    grid, window = load_mesh(args)
    pattern = read_pattern_csv(_existing(args.pattern)).with_covariate(grid, window)
    mesh = EvaluationMesh(grid, window)
    dist = build_spatial_distribution(grid, window)
    bw_matrix = parse_bandwidth_matrix(args.bw_matrix)
    seed = resolve_seed(args.seed)
    pilot_values = parse_pilot_values(args.pilot_t)

    results = []
    for t in pilot_values or [None]:
        results.append(
            bootstrap_test(
                pattern,
                grid,
                window,
                kernel2d_family=args.kernel,
                kernel1d_family=args.kernel,
                bw_matrix=bw_matrix,
                bw_scalar=args.bw_scalar,
                pilot_bandwidth=t,
                n_boot=args.B,
                seed=seed,
                distribution=dist,
                jobs=args.jobs,
                mesh=mesh,
            )
        )

    first = results[0]
    config = _base_config("test", args, seed)
    config["B"] = args.B
    config["pilot_t"] = args.pilot_t
    payload = {
        "T": first.statistic,
        "B": args.B,
        "p_value": (
            first.p_value
            if pilot_values is None or len(pilot_values) == 1
            else {repr(r.pilot_bandwidth): r.p_value for r in results}
        ),
        "H": [first.bw_matrix.h11, first.bw_matrix.h12, first.bw_matrix.h22],
        "b": first.bw_scalar,
        "t": (
            first.pilot_bandwidth
            if pilot_values is None or len(pilot_values) == 1
            else [r.pilot_bandwidth for r in results]
        ),
        "seed": seed,
        "n": first.n,
        "config": config,
    }
    write_json_artifact(payload, args.out)
    return 0


def cmd_power(args) -> int:
    path = _existing(args.config)
    try:
        with open(path, "rb") as fh:
            config = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputDataError(f"{path}: invalid TOML: {exc}") from None

    model = config.get("model", {})
    study = config.get("study", {})
    band_cfg = config.get("band")

    if model.get("preset") == "linear":
        cells = int(model.get("cells", DEFAULT_GRID_CELLS))
        grid, window = linear_covariate_mesh(cells)
        base = linear_null_intensity(grid, window, 1.0)
    elif "intensity" in model and "covariate" in model:
        grid = read_ascii_grid(_existing(model["covariate"]))
        if "mask" in model:
            window = read_window_mask(_existing(model["mask"]), grid)
        else:
            window = ObservationWindow.for_geometry(grid.geometry)
        intensity_grid = read_ascii_grid(_existing(model["intensity"]))
        if not intensity_grid.geometry.aligned_with(grid.geometry):
            raise InputDataError("intensity raster is not aligned with the covariate raster")
        values = np.where(window.active_cells & np.isfinite(intensity_grid.values),
                          intensity_grid.values, 0.0)
        if (values < 0).any():
            raise InputDataError("intensity raster must be nonnegative")
        base = IntensitySurface(values=values, window=window)
    else:
        raise InputDataError(
            'power config needs [model] with either preset = "linear" or intensity/covariate rasters'
        )

    band_template = None
    if band_cfg is not None:
        center = band_cfg.get("center", [0.0, 0.0])
        direction = band_cfg.get("direction")
        band_template = PerturbationBand(
            kind=band_cfg.get("kind", "general"),
            scale=1.0,
            center_u=float(center[0]),
            center_v=float(center[1]),
            direction=tuple(direction) if direction is not None else None,
            offset=float(band_cfg.get("offset", 15.0)),
        )

    d_values = [_parse_band_scale(d) for d in study.get("d", [None])]
    m_values = study.get("m")
    if not m_values:
        raise InputDataError("power config needs study.m, a list of expected counts")
    seed = resolve_seed(args.seed, study.get("seed"))

    result = power_study(
        base,
        grid,
        window,
        band_template,
        d_values,
        m_values,
        replicates=int(study.get("replicates", 200)),
        n_boot=int(study.get("bootstrap", 200)),
        alpha=float(study.get("alpha", 0.05)),
        seed=seed,
        jobs=args.jobs,
        pilot_bandwidth=study.get("pilot_t"),
        kernel2d_family=study.get("kernel", "gaussian"),
        kernel1d_family=study.get("kernel", "gaussian"),
    )
    effective = dict(config)
    effective["study"] = dict(study)
    effective["study"]["seed"] = seed
    write_power_csv(result, effective, args.out)
    return 0


def _parse_band_scale(d):
    if d is None or (isinstance(d, str) and d.lower() == "inf"):
        return None
    d = float(d)
    return None if np.isinf(d) else d


def cmd_simulate(args) -> int:
    if (args.preset is None) == (args.intensity is None):
        raise InputDataError("simulate needs exactly one of --preset or --intensity")
    if args.preset == "linear":
        grid, window = linear_covariate_mesh(args.cells)
        base = linear_null_intensity(grid, window, args.m)
    else:
        intensity_grid = read_ascii_grid(_existing(args.intensity))
        if args.mask is not None:
            window = read_window_mask(_existing(args.mask), intensity_grid)
        else:
            window = ObservationWindow.for_geometry(intensity_grid.geometry)
        values = np.where(window.active_cells & np.isfinite(intensity_grid.values),
                          intensity_grid.values, 0.0)
        if (values < 0).any():
            raise InputDataError("intensity raster must be nonnegative")
        base = IntensitySurface(values=values, window=window)

    band = None
    if args.band_kind is not None:
        if args.d is None:
            raise InputDataError("--band-kind needs --d")
        cu, cv = _parse_pair(args.band_center, "--band-center")
        direction = _parse_pair(args.band_direction, "--band-direction") if args.band_direction else None
        band = PerturbationBand(
            kind=args.band_kind,
            scale=args.d,
            center_u=cu,
            center_v=cv,
            direction=direction,
            offset=args.band_offset,
        )
    elif args.d is not None:
        raise InputDataError("--d needs --band-kind")

    if args.R < 1:
        raise InputDataError(f"--R must be >= 1, got {args.R}")
    seed = resolve_seed(args.seed)
    intensity = perturbed_intensity(SyntheticModel(base, args.m, band))
    sampler = CellSampler(intensity)

    stem = Path(args.out)
    written = []
    for r in range(args.R):
        rng = replicate_stream(seed, r)
        count = int(rng.poisson(sampler.total))
        if count == 0:
            pattern = PointPattern.empty()
        else:
            x, y = sampler.draw(count, rng)
            pattern = PointPattern(x, y)
        out_path = f"{stem}_{r:03d}.csv"
        write_pattern_csv(pattern, out_path)
        written.append(out_path)

    config = {
        "subcommand": "simulate",
        "preset": args.preset,
        "intensity": args.intensity,
        "mask": args.mask,
        "cells": args.cells if args.preset else None,
        "m": args.m,
        "band_kind": args.band_kind,
        "d": args.d,
        "band_center": args.band_center,
        "band_direction": args.band_direction,
        "band_offset": args.band_offset,
        "R": args.R,
        "seed": seed,
    }
    write_json_artifact({"patterns": written, "seed": seed, "config": config}, f"{stem}.json")
    return 0


def _parse_pair(text, flag) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise InputDataError(f'{flag} expects "u,v", got {text!r}')
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise InputDataError(f"{flag} entries must be numbers, got {text!r}") from None


def cmd_bandwidth(args) -> int:
    grid, window = load_mesh(args)
    pattern = read_pattern_csv(_existing(args.pattern)).with_covariate(grid, window)
    bw_matrix = select_bandwidth_matrix(pattern)
    bw_scalar = select_scalar_bandwidth(pattern.z)
    print(
        json.dumps(
            {
                "H": [bw_matrix.h11, bw_matrix.h12, bw_matrix.h22],
                "b": bw_scalar,
                "n": pattern.n,
            }
        )
    )
    return 0


def _base_config(subcommand, args, seed) -> dict:
    return {
        "subcommand": subcommand,
        "pattern": str(args.pattern),
        "covariate": str(args.covariate),
        "mask": None if args.mask is None else str(args.mask),
        "grid_cells": args.grid_cells,
        "kernel": args.kernel,
        "H": args.bw_matrix,
        "b": args.bw_scalar,
        "seed": seed,
    }


if __name__ == "__main__":
    sys.exit(main())
