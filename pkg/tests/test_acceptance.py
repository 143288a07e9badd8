"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line, printed in a summary section at the end of
the pytest run.  Criteria 6-9 read full training runs from the cache in
``acceptance_runs.py``; missing entries are computed (about half an hour each).
"""
import math
import time

import numpy as np
import pytest
import sympy as sp

import acceptance_runs as runs
import fd_oracle as fo
import table3
from draws import SINGLE_NETWORK_TERMS, random_params, random_point
from thermopinn import autodiff, physics
from thermopinn.balance import SearchGrid, calibrate, collect_initial_stats, edge_aligned
from thermopinn.collocation import build_grid
from thermopinn.experiments import final_mse_digits
from thermopinn.fdm import energy_balance, solve_fdm, steady_state_profile
from thermopinn.physics import C1, C2, C3, FBM, LAYER_IDS, RAW, EnvironmentConfig

REPORT = {}

TABLE5 = {10.0: 1.3214e-5, 30.0: 7.9984e-5, 60.0: 1.5024e-4, 120.0: 1.2199e-3}


def record(n, ok, detail):
    REPORT[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(REPORT[n])
    return ok


@pytest.fixture(scope="module")
def initial_stats():
    env = EnvironmentConfig()
    grid = build_grid(env)
    t0 = time.perf_counter()
    stats = collect_initial_stats(env, grid, n_exp=50, seed=0)
    return stats, time.perf_counter() - t0


def test_1_autodiff_matches_differences():
    rng = np.random.default_rng(2024)
    env = EnvironmentConfig()
    t0 = time.perf_counter()
    worst_fwd = worst_bwd = 0.0
    for i in range(100):
        flat = random_params(rng)
        x, t = random_point(rng)
        d = autodiff.forward_augmented(flat, x, t).as_array()
        worst_fwd = max(worst_fwd, fo.worst_error(d, *fo.augmented(flat, x, t)))
        xs, ts = random_point(rng, 2)
        res = physics.single_network_residual(SINGLE_NETWORK_TERMS[i % len(SINGLE_NETWORK_TERMS)],
                                              env)
        g = autodiff.backward_params(flat, xs, ts, res)
        worst_bwd = max(worst_bwd, fo.gradient_error(
            g, fo.residual_losses(res.coeffs, xs, ts), flat))
    elapsed = time.perf_counter() - t0
    ok = worst_fwd < 1e-6 and worst_bwd < 1e-6 and elapsed < 10.0
    assert record(1, ok, f"100 configs: forward rel err {worst_fwd:.2e}, parameter-gradient "
                         f"rel err {worst_bwd:.2e} (< 1e-6); {elapsed:.1f} s (< 10 s)")


def test_2_unit_scaling_is_lossless():
    x, t = sp.symbols("x t", real=True)
    fields = [
        310 + 900 * sp.exp(-t / 40) * sp.sin(700 * x),
        310 + 1700 * (1 - sp.exp(-t / 25)) * sp.exp(-800 * x),
        400 + 3e5 * x ** 2 - 2e3 * x * t + t ** 2 / 5,
    ]
    env = EnvironmentConfig()
    rng = np.random.default_rng(5)

    def dual(expr, xv, tv):
        parts = [expr, sp.diff(expr, x), sp.diff(expr, t), sp.diff(expr, x, 2)]
        return autodiff.DualState(*(float(p.subs({x: xv, t: tv}).evalf(30)) for p in parts))

    worst = 0.0
    for T in fields:
        Tp = T.subs(x, x / 1000) / 1000  # the same field in mm / kK numbers
        for _ in range(8):
            xv, tv = rng.uniform(0, 5.05e-3), rng.uniform(0, 60)
            ds, dp = dual(Tp, xv * 1e3, tv), dual(T, xv, tv)
            pairs = [(physics.residual_interior(env.layer(l), ds, FBM),
                      physics.residual_interior(env.layer(l), dp, RAW)) for l in LAYER_IDS]
            pairs += [
                (physics.residual_outer_left(ds, env, FBM), physics.residual_outer_left(dp, env, RAW)),
                (physics.residual_outer_right(ds, env, FBM),
                 physics.residual_outer_right(dp, env, RAW)),
                (physics.residual_initial(ds.value, env.T0 / 1e3, FBM),
                 physics.residual_initial(dp.value, env.T0, RAW)),
                (physics.residual_interface_temp(ds.value, 0.9 * ds.value, FBM),
                 physics.residual_interface_temp(dp.value, 0.9 * dp.value, RAW)),
                (physics.residual_interface_flux(0.082, ds, 0.37, ds, FBM),
                 physics.residual_interface_flux(0.082, dp, 0.37, dp, RAW)),
            ]
            worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs if b != 0))
    assert record(2, worst < 1e-12, f"scaled vs physical residuals, worst rel err {worst:.2e} "
                                    f"(< 1e-12)")


def test_3_reference_reaches_steady_state():
    env = EnvironmentConfig(horizon=600.0)
    t0 = time.perf_counter()
    f = solve_fdm(env, build_grid(env))
    elapsed = time.perf_counter() - t0
    dev = float(np.abs(f.values[-1] - steady_state_profile(env)(f.x_scaled * 1e-3)).max())
    frac = energy_balance(f, env)
    ok = dev < 1.0 and frac < 1e-2 and elapsed < 120
    assert record(3, ok, f"600 s: max deviation from steady profile {dev:.3f} K (< 1 K), "
                         f"energy residual {frac:.2e} (< 1e-2); {elapsed:.1f} s (< 120 s)")


def test_4_initial_loss_magnitudes(initial_stats):
    stats, elapsed = initial_stats
    bands = {C1: (1e6, 1e6), C2: (1e9, 1e10), C3: (1e15, 1e17)}
    ok = elapsed < 300
    parts = []
    for cls, (lo, hi) in bands.items():
        v = stats.class_losses(cls)
        inside = bool(np.all((v >= lo / 10) & (v <= hi * 10)))
        ok &= inside
        parts.append(f"{cls} [{v.min():.2e}, {v.max():.2e}] vs ~[{lo:.0e}, {hi:.0e}]")
    assert record(4, ok, "; ".join(parts) + f"; {elapsed:.0f} s (< 300 s)")


def test_5_calibration(initial_stats):
    stats, _ = initial_stats
    cal = calibrate(stats)
    beta, gamma = cal.coeffs.beta, cal.coeffs.gamma
    own = 1.0e-4 <= beta <= 1.6e-4 and 3.5e-8 <= gamma <= 6.0e-8
    # published statistics: grid argmax against the closed-form edge alignment
    pub = table3.stats()
    pcal = calibrate(pub)
    b0, g0 = edge_aligned(pub)
    step = math.log(SearchGrid().step_ratio)
    near = abs(math.log(pcal.coeffs.beta / b0)) <= step and \
        abs(math.log(pcal.coeffs.gamma / g0)) <= step
    printed = f"{b0:.2e}" == "1.28e-04" and f"{g0:.2e}" == "4.76e-08"
    ok = own and near and printed
    assert record(5, ok, f"reproduced stats: beta* {beta:.3e} (accepted 1.0e-4..1.6e-4), gamma* "
                         f"{gamma:.3e} (accepted 3.5e-8..6.0e-8); published stats: search "
                         f"{pcal.coeffs.beta:.4e}/{pcal.coeffs.gamma:.4e} vs closed form "
                         f"{b0:.4e}/{g0:.4e}")


@pytest.mark.slow
def test_6_m1_end_to_end():
    r = runs.preset_run("M1")
    mse = r["mse"]
    minutes = r["seconds"]["calibrate_and_train"] / 60
    ok = all(mse[k] <= 1e-3 for k in ("total", *LAYER_IDS))
    layers = ", ".join(f"{k} {mse[k]:.3e}" for k in LAYER_IDS)
    assert record(6, ok, f"M1 total MSE {mse['total']:.4e} kK^2 ({layers}; all <= 1e-3); "
                         f"calibration + 20000 epochs took {minutes:.1f} min (target < 30)")


@pytest.mark.slow
def test_7_ablation_ordering():
    tot = {n: runs.preset_run(n)["mse"]["total"] for n in ("M1", "M2", "M3", "M4", "M5")}
    ok = all(tot["M1"] * 10 <= tot[n] for n in ("M2", "M3", "M4")) and \
        tot["M1"] < tot["M5"] < tot["M2"]
    detail = ", ".join(f"{n} {v:.3e}" for n, v in tot.items())
    assert record(7, ok, f"total MSE {detail}; need M1 10x below M2-M4 and M1 < M5 < M2")


@pytest.mark.slow
def test_8_horizon_sweep():
    tot = {h: runs.preset_run("M1", h)["mse"]["total"] for h in runs.HORIZONS}
    vals = [tot[h] for h in runs.HORIZONS]
    monotone = all(a <= b for a, b in zip(vals, vals[1:]))
    within = all(0.1 <= tot[h] / TABLE5[h] <= 10 for h in runs.HORIZONS)
    detail = ", ".join(f"{h:g}s {tot[h]:.3e} (ref {TABLE5[h]:.3e})" for h in runs.HORIZONS)
    assert record(8, monotone and within, f"{detail}; nondecreasing={monotone}, "
                                          f"within 10x={within}")


@pytest.mark.slow
def test_9_repeat_is_identical():
    a = runs.preset_run("M1")["mse"]["total"]
    b = runs.preset_run("M1", repeat=1)["mse"]["total"]
    da, db = final_mse_digits(a), final_mse_digits(b)
    assert record(9, da == db, f"two independent M1 runs: {da} vs {db} (6 significant digits); "
                               f"bitwise equal={a == b}")


# ---- post-training checks on the M1 checkpoint ---------------------------

@pytest.mark.slow
def test_m1_learns_initial_and_interface_conditions():
    from thermopinn.network import load_checkpoint, predict_temperature
    env = EnvironmentConfig()
    model = load_checkpoint(runs.checkpoint_path("M1"))
    T00 = float(predict_temperature(model, "shl", 0.0, 0.0))
    assert abs(T00 - 0.31015) < 0.01
    left = float(predict_temperature(model, "shl", 0.6, 30.0))
    right = float(predict_temperature(model, "msr", 0.6, 30.0))
    assert abs(physics.residual_interface_temp(left, right)) < 5.0


@pytest.mark.slow
def test_m1_gradients_healthy_at_epoch_1000():
    rows = runs.preset_run("M1")["histogram_1000"]
    assert rows and {r[0] for r in rows} == {1000}
    beyond = sum(c for _, _, _, edge, c in rows if edge >= 1e3 or edge < -1e3)
    assert beyond == 0


@pytest.mark.slow
def test_m4_fails_to_reach_solution():
    assert runs.preset_run("M4")["mse"]["total"] > 1e-1
