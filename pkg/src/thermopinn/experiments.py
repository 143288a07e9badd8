"""Preset wiring: calibration, training and evaluation against the reference solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .balance import UNIT, BalanceCoefficients, Calibration, ClassStats, calibrate, \
    collect_initial_stats
from .collocation import CollocationSet, build_grid
from .fdm import TemperatureField, mse_report, solve_fdm
from .network import ParallelModel, layered_prediction
from .physics import DEFAULT_SEGMENTS, FBM, LAYER_IDS, RAW, EnvironmentConfig
from .trainer import PRESETS, TrainResult, train

log = logging.getLogger(__name__)


def preset(name: str):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def preset_grid(env: EnvironmentConfig, name: str, segments=DEFAULT_SEGMENTS) -> CollocationSet:
    return build_grid(env, segments, FBM if preset(name).fbm else RAW)


def calibrate_preset(env: EnvironmentConfig, name: str, segments=DEFAULT_SEGMENTS,
                     n_exp: int = 50, seed: int = 0) -> tuple[ClassStats, Calibration]:
    """Initial statistics on the preset's own grid/architecture, then the coefficient search."""
    p = preset(name)
    grid = preset_grid(env, name, segments)
    stats = collect_initial_stats(env, grid, n_exp, seed, shared=not p.parallel)
    return stats, calibrate(stats)


def prediction_kK(model: ParallelModel, grid: CollocationSet) -> dict:
    """Per-layer predictions on the (t, x) node grid, converted to kK."""
    raw = layered_prediction(model, grid.x_nodes, grid.t_nodes)
    return {lid: grid.scale.unscale_prediction(v) / 1000.0 for lid, v in raw.items()}


def evaluate_model(model: ParallelModel, grid: CollocationSet, truth: TemperatureField) -> dict:
    return mse_report(prediction_kK(model, grid), truth.layered_kK())


def error_field(model: ParallelModel, grid: CollocationSet, truth: TemperatureField) -> dict:
    pred = prediction_kK(model, grid)
    ref = truth.layered_kK()
    return {lid: pred[lid] - ref[lid] for lid in LAYER_IDS}


@dataclass
class PresetRun:
    name: str
    coeffs: BalanceCoefficients
    grid: CollocationSet
    result: TrainResult
    calibration: Calibration | None = None
    mse: dict = field(default_factory=dict)


def run_preset(env: EnvironmentConfig, name: str, *, epochs: int = 20000, seed: int = 0,
               coeffs: BalanceCoefficients | None = None, segments=DEFAULT_SEGMENTS,
               n_exp: int = 50, truth: TemperatureField | None = None, **train_kw) -> PresetRun:
    """Train one preset; presets with loss balancing calibrate first unless ``coeffs`` is given.

    With ``truth`` (a reference field on the same grid) the run is also scored.
    """
    p = preset(name)
    grid = preset_grid(env, name, segments)
    cal = None
    if coeffs is None:
        if p.bbm:
            _, cal = calibrate_preset(env, name, segments, n_exp, seed)
            coeffs = cal.coeffs
        else:
            coeffs = UNIT
    log.info("%s: coefficients %s", name, coeffs.as_tuple())
    result = train(env, grid, coeffs, epochs, seed, shared=not p.parallel, **train_kw)
    run = PresetRun(name, coeffs, grid, result, cal)
    if truth is not None:
        run.mse = evaluate_model(result.model, grid, truth)
    return run


def reference_field(env: EnvironmentConfig, segments=DEFAULT_SEGMENTS) -> TemperatureField:
    """Reference solution downsampled to the collocation times and nodes."""
    grid = build_grid(env, segments)
    return solve_fdm(env, grid).downsample(grid)


def final_mse_digits(value: float, digits: int = 6) -> str:
    return np.format_float_scientific(value, precision=digits - 1, unique=False)
