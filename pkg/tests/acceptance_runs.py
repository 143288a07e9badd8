"""Heavy runs behind the acceptance suite, cached on disk.

A full preset run (reference solve, calibration, 20000 training epochs) takes
20-30 minutes on one core, so results are stored under ``.acceptance_runs/``
keyed by the run configuration and a digest of the package sources and numeric
library versions.  Any source change invalidates every entry.  Set
``THERMOPINN_ACCEPTANCE_FRESH=1`` to ignore the cache.

Precompute everything (or a subset) from the command line:

    python3 tests/acceptance_runs.py            # all runs
    python3 tests/acceptance_runs.py M1 M1#1    # named runs
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numba
import numpy as np

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance_runs"
SRC = ROOT / "src" / "thermopinn"

EPOCHS = 20000
SEED = 0
N_EXP = 50
HORIZONS = (10.0, 30.0, 60.0, 120.0)

log = logging.getLogger("acceptance")


def source_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(SRC.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    h.update(f"numpy {np.__version__} numba {numba.__version__}".encode())
    return h.hexdigest()[:16]


def fresh() -> bool:
    return os.environ.get("THERMOPINN_ACCEPTANCE_FRESH", "") not in ("", "0")


def _dir(kind: str, cfg: dict) -> Path:
    blob = json.dumps({"kind": kind, "cfg": cfg, "src": source_digest()}, sort_keys=True)
    tag = "-".join(f"{v}" for v in cfg.values())
    return CACHE / f"{kind}-{tag}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"


def preset_run(name: str, horizon: float = 60.0, repeat: int = 0) -> dict:
    """Result summary of one preset run: calibration (if balanced), training, scoring.

    ``repeat`` only separates cache entries, so a repeat is an independent
    recomputation of the same configuration.
    """
    cfg = {"preset": name, "horizon": horizon, "epochs": EPOCHS, "seed": SEED, "n_exp": N_EXP,
           "repeat": repeat}
    d = _dir("preset", cfg)
    out = d / "result.json"
    if out.is_file() and not fresh():
        return json.loads(out.read_text())

    from thermopinn.experiments import reference_field, run_preset
    from thermopinn.network import save_checkpoint
    from thermopinn.physics import EnvironmentConfig

    env = EnvironmentConfig(horizon=horizon)
    t0 = time.perf_counter()
    truth = reference_field(env)
    t1 = time.perf_counter()
    run = run_preset(env, name, epochs=EPOCHS, seed=SEED, n_exp=N_EXP, truth=truth,
                     snapshot_epochs=(1000,), log_every=1000)
    t2 = time.perf_counter()
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(run.result.model, d / "checkpoint.bin")
    recs = run.result.records
    result = {
        "config": cfg,
        "coefficients": list(run.coeffs.as_tuple()),
        "iou": None if run.calibration is None else
        [run.calibration.iou12, run.calibration.iou13],
        "mse": run.mse,
        "loss_every_1000": [recs[i].total for i in range(0, len(recs), 1000)] + [recs[-1].total],
        "histogram_1000": [list(r) for r in run.result.snapshots],
        "seconds": {"reference": t1 - t0, "calibrate_and_train": t2 - t1},
        "epoch_seconds": (t2 - t1) / max(len(recs), 1),
    }
    tmp = out.with_suffix(".tmp")
    tmp.write_text(json.dumps(result, indent=1))
    os.replace(tmp, out)
    return result


def checkpoint_path(name: str, horizon: float = 60.0, repeat: int = 0) -> Path:
    preset_run(name, horizon, repeat)
    cfg = {"preset": name, "horizon": horizon, "epochs": EPOCHS, "seed": SEED, "n_exp": N_EXP,
           "repeat": repeat}
    return _dir("preset", cfg) / "checkpoint.bin"


# the 60 s sweep entry is the M1 run itself (identical configuration)
ALL_RUNS = {
    "M1": ("M1", 60.0, 0),
    "M1#1": ("M1", 60.0, 1),
    "M2": ("M2", 60.0, 0),
    "M3": ("M3", 60.0, 0),
    "M4": ("M4", 60.0, 0),
    "M5": ("M5", 60.0, 0),
    **{f"M1@{h:g}s": ("M1", h, 0) for h in HORIZONS if h != 60.0},
}


def main(argv):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    names = argv or list(ALL_RUNS)
    for n in names:
        t = time.perf_counter()
        r = preset_run(*ALL_RUNS[n])
        log.info("%s done in %.0fs: mse %s", n, time.perf_counter() - t, r["mse"])


if __name__ == "__main__":
    main(sys.argv[1:])
