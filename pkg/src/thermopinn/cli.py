"""Command-line entry point: reference solve, calibration, training, evaluation, horizon sweep.

Every command writes a ``manifest.json`` describing the run.  Its hash covers
the run's inputs (configuration, seed, preset, coefficients given, version)
and is repeated in the first line of every CSV.  Results, the output list and
the timestamp are recorded in the manifest but kept out of the hash.  Outputs are
staged in a temporary directory and moved into ``--out`` only after the
command succeeds.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .balance import read_coefficients, write_report
from .fdm import read_field_binary, solve_fdm, write_field_binary, write_field_csv
from .network import load_checkpoint
from .physics import DEFAULT_SEGMENTS, LAYER_IDS, EnvironmentConfig, load_config
from .collocation import build_grid
from .trainer import PRESETS, TrainingDiverged, write_histogram_csv, write_log_csv

log = logging.getLogger("thermopinn")

DEFAULT_HORIZONS = (10.0, 30.0, 60.0, 120.0)
DEFAULT_SNAPSHOTS = (0, 1000, 5000, 10000, 20000)


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    preset: str | None = None
    coefficients: list | None = None
    grid: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__
    created: str = ""

    def digest(self) -> str:
        body = asdict(self)
        for key in ("created", "outputs", "results"):
            body.pop(key)
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        body = asdict(self)
        body["hash"] = self.digest()
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


class Staging:
    """Collects output files in a scratch directory; publishes them on success."""

    def __init__(self, out: Path):
        self.out = out
        out.parent.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".stage-", dir=out.parent))

    def path(self, name: str) -> Path:
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def publish(self, manifest: RunManifest) -> Path:
        manifest.outputs = sorted(str(p.relative_to(self.dir)) for p in self.dir.rglob("*")
                                  if p.is_file())
        manifest.created = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.path("manifest.json").write_text(manifest.to_json())
        self.out.mkdir(parents=True, exist_ok=True)
        for p in sorted(self.dir.rglob("*")):
            if p.is_file():
                dest = self.out / p.relative_to(self.dir)
                dest.parent.mkdir(parents=True, exist_ok=True)
                os.replace(p, dest)
        self.discard()
        return self.out

    def discard(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def _config(path) -> tuple[EnvironmentConfig, tuple]:
    if path is None:
        return EnvironmentConfig(), DEFAULT_SEGMENTS
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _config_dict(env, segments) -> dict:
    return {"environment": env.to_dict(), "segments": list(segments)}


def _manifest(command, env, segments, **kw) -> RunManifest:
    return RunManifest(command, _config_dict(env, segments),
                       grid={"segments": list(segments), "x_unit": "mm", "t_unit": "s"}, **kw)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_fdm(args) -> int:
    env, segments = _config(args.config)
    grid = build_grid(env, segments)
    m = _manifest("fdm", env, segments)
    h = m.digest()
    full = solve_fdm(env, grid)
    truth = full.downsample(grid)
    m.results.update(n_steps=full.meta["n_steps"], dt=full.meta["dt"],
                     fourier=full.meta["fourier"], rows_full=len(full.times))
    stage = Staging(Path(args.out))
    try:
        write_field_binary(full, stage.path("fdm_full.bin"))
        write_field_binary(truth, stage.path("truth.bin"))
        write_field_csv(truth, stage.path("truth.csv"), h)
        stage.publish(m)
    except BaseException:
        stage.discard()
        raise
    print(f"reference field {truth.values.shape[0]}x{truth.values.shape[1]} "
          f"({full.meta['n_steps']} steps) -> {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    env, segments = _config(args.config)
    if args.n_exp < 2:
        raise UsageError("--n-exp must be at least 2 (a loss range needs repeated runs)")
    name = args.preset or "M1"
    experiments.preset(name)
    m = _manifest("calibrate", env, segments, seed=args.seed, preset=name,
                  extra={"n_exp": args.n_exp})
    h = m.digest()
    stats, cal = experiments.calibrate_preset(env, name, segments, args.n_exp, args.seed)
    m.results.update(coefficients=list(cal.coeffs.as_tuple()), iou12=cal.iou12,
                     iou13=cal.iou13)
    stage = Staging(Path(args.out))
    try:
        write_report(stats, cal, stage.path("calibration.csv"), h)
        stage.publish(m)
    except BaseException:
        stage.discard()
        raise
    a, b, g = cal.coeffs.as_tuple()
    print(f"alpha={a:.6g} beta={b:.6g} gamma={g:.6g} IOU12={cal.iou12:.4f} IOU13={cal.iou13:.4f}")
    return 0


def _parse_snapshots(text) -> tuple:
    if text is None:
        return DEFAULT_SNAPSHOTS
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad --snapshots {text!r}") from None


def _train_into(stage: Staging, prefix: str, env, segments, name, coeffs, epochs, seed,
                snapshots, n_exp, truth=None, checkpoint_every=0):
    snaps = tuple(e for e in snapshots if e <= epochs)
    run = experiments.run_preset(
        env, name, epochs=epochs, seed=seed, coeffs=coeffs, segments=segments, n_exp=n_exp,
        truth=truth, snapshot_epochs=snaps, checkpoint_every=checkpoint_every,
        checkpoint_path=stage.path(prefix + "checkpoint.bin"),
    )
    return run


def cmd_train(args) -> int:
    env, segments = _config(args.config)
    name = args.preset or "M1"
    experiments.preset(name)
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    coeffs = read_coefficients(args.coeffs) if args.coeffs else None
    snaps = _parse_snapshots(args.snapshots)
    m = _manifest("train", env, segments, seed=args.seed, preset=name,
                  coefficients=list(coeffs.as_tuple()) if coeffs else None,
                  extra={"epochs": args.epochs, "n_exp": args.n_exp, "snapshots": list(snaps)})
    h = m.digest()
    stage = Staging(Path(args.out))
    try:
        run = _train_into(stage, "", env, segments, name, coeffs, args.epochs, args.seed,
                          snaps, args.n_exp, checkpoint_every=args.checkpoint_every)
        m.results["coefficients"] = list(run.coeffs.as_tuple())
        if run.result.records:
            m.results["final_loss"] = run.result.records[-1].total
        write_log_csv(run.result.records, stage.path("train_log.csv"), h)
        write_histogram_csv(run.result.snapshots, stage.path("gradients.csv"), h)
        stage.publish(m)
    except TrainingDiverged as exc:
        stage.discard()
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except BaseException:
        stage.discard()
        raise
    last = run.result.records[-1].total if run.result.records else float("nan")
    print(f"{name}: {args.epochs} epochs, final loss {last:.6e} -> {args.out}")
    return 0


def _evaluation_files(stage, prefix, model, grid, truth, h):
    mse = experiments.evaluate_model(model, grid, truth)
    lines = [f"# manifest {h}", "layer,mse_kK2"] + [f"{k},{float(v)!r}" for k, v in mse.items()]
    stage.path(prefix + "mse.csv").write_text("\n".join(lines) + "\n")
    err = experiments.error_field(model, grid, truth)
    rows = [f"# manifest {h}", "t,x_mm,layer,error_kK"]
    for lid in LAYER_IDS:
        xs = truth.x_scaled[truth.layer_slices[lid]].tolist()
        for i, t in enumerate(truth.times.tolist()):
            rows.extend(f"{t!r},{x!r},{lid},{e!r}" for x, e in zip(xs, err[lid][i].tolist()))
    stage.path(prefix + "error_field.csv").write_text("\n".join(rows) + "\n")
    return mse


def _preset_of_checkpoint(path: Path, flag):
    if flag:
        return flag
    man = path.parent / "manifest.json"
    if man.is_file():
        return json.loads(man.read_text()).get("preset") or "M1"
    return "M1"


def cmd_evaluate(args) -> int:
    env, segments = _config(args.config)
    ckpt, truth_path = Path(args.checkpoint), Path(args.truth)
    for p in (ckpt, truth_path):
        if not p.is_file():
            raise UsageError(f"file not found: {p}")
    name = _preset_of_checkpoint(ckpt, args.preset)
    grid = experiments.preset_grid(env, name, segments)
    truth = read_field_binary(truth_path)
    ref = build_grid(env, segments)
    if truth.values.shape != (len(ref.t_nodes), len(ref.spatial_nodes)) or \
            not np.array_equal(truth.x_scaled, ref.spatial_nodes):
        raise UsageError(f"{truth_path}: reference field does not match the configured grid")
    model = load_checkpoint(ckpt)
    m = _manifest("evaluate", env, segments, preset=name,
                  extra={"checkpoint_sha256": hashlib.sha256(ckpt.read_bytes()).hexdigest(),
                         "truth_sha256": hashlib.sha256(truth_path.read_bytes()).hexdigest()})
    h = m.digest()
    stage = Staging(Path(args.out))
    try:
        mse = _evaluation_files(stage, "", model, grid, truth, h)
        m.results["mse"] = mse
        stage.publish(m)
    except BaseException:
        stage.discard()
        raise
    print("layer  MSE (kK^2)")
    for k, v in mse.items():
        print(f"{k:<6} {v:.6e}")
    return 0


def _parse_horizons(text) -> tuple:
    if text is None:
        return DEFAULT_HORIZONS
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad --horizons {text!r}") from None
    if not vals:
        raise UsageError("--horizons needs at least one value")
    if min(vals) <= 0:
        raise UsageError("horizons must be positive")
    return vals


def cmd_sweep_time(args) -> int:
    env0, segments = _config(args.config)
    horizons = _parse_horizons(args.horizons)
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    coeffs = read_coefficients(args.coeffs) if args.coeffs else None
    m = _manifest("sweep-time", env0, segments, seed=args.seed, preset="M1",
                  coefficients=list(coeffs.as_tuple()) if coeffs else None,
                  extra={"horizons": list(horizons), "epochs": args.epochs, "n_exp": args.n_exp})
    h = m.digest()
    stage = Staging(Path(args.out))
    table = [f"# manifest {h}", "horizon_s,shl,msr,lin,total"]
    try:
        for hz in horizons:
            env = env0.with_(horizon=hz)
            grid = build_grid(env, segments)
            truth = solve_fdm(env, grid).downsample(grid)
            prefix = f"h{hz:g}s/"
            write_field_binary(truth, stage.path(prefix + "truth.bin"))
            run = _train_into(stage, prefix, env, segments, "M1", coeffs, args.epochs,
                              args.seed, (), args.n_exp)
            write_log_csv(run.result.records, stage.path(prefix + "train_log.csv"), h)
            mse = _evaluation_files(stage, prefix, run.result.model, run.grid, truth, h)
            table.append(f"{hz!r}," + ",".join(repr(mse[k]) for k in (*LAYER_IDS, "total")))
            m.results[f"{hz:g}"] = {"mse": mse, "coefficients": list(run.coeffs.as_tuple())}
            print(f"horizon {hz:g} s: total MSE {mse['total']:.6e}", flush=True)
        stage.path("sweep.csv").write_text("\n".join(table) + "\n")
        stage.publish(m)
    except TrainingDiverged as exc:
        stage.discard()
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except BaseException:
        stage.discard()
        raise
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermopinn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="problem file (INI); built-in benchmark if omitted")
        p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fdm", help="reference solution by explicit finite differences")
    common(p, seed=False)
    p.set_defaults(func=cmd_fdm)

    p = sub.add_parser("calibrate", help="initial loss statistics and balance coefficients")
    common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), help="architecture/units (default M1)")
    p.add_argument("--n-exp", type=int, default=50, help="repeated initializations")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train one preset")
    common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default="M1")
    p.add_argument("--coeffs", help="calibration CSV; balanced presets calibrate if omitted")
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--n-exp", type=int, default=50, help="repeats for on-the-fly calibration")
    p.add_argument("--snapshots", help="comma-separated epochs for gradient histograms")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare a checkpoint with a reference field")
    common(p, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth", required=True, help="truth.bin written by the fdm command")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="preset the checkpoint was trained with (read from its manifest if omitted)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-time", help="reference + M1 training + evaluation per horizon")
    common(p)
    p.add_argument("--horizons", help="comma-separated seconds (default 10,30,60,120)")
    p.add_argument("--coeffs", help="calibration CSV; calibrated per horizon if omitted")
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--n-exp", type=int, default=50)
    p.set_defaults(func=cmd_sweep_time)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        ap.exit(2, f"{ap.prog}: error: {exc}\n")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
