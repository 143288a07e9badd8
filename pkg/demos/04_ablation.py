"""
What each ingredient buys
=========================

Short runs of the five presets: parallel networks with unit rescaling and
balancing (M1), without balancing (M2), without rescaling (M3), with neither
(M4), and one shared network with both (M5).  Short runs only hint at the
ordering; the full comparison needs 20000 epochs each.
"""
import argparse

from thermopinn import EnvironmentConfig
from thermopinn.experiments import reference_field, run_preset
from thermopinn.trainer import PRESETS

ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
ap.add_argument("--epochs", type=int, default=500)
ap.add_argument("--n-exp", type=int, default=5)
args = ap.parse_args()

env = EnvironmentConfig()
truth = reference_field(env)
for name, p in PRESETS.items():
    run = run_preset(env, name, epochs=args.epochs, n_exp=args.n_exp, truth=truth, log_every=0)
    flags = f"parallel={p.parallel} rescaled={p.fbm} balanced={p.bbm}"
    print(f"{name} ({flags}): total MSE {run.mse['total']:.3e} kK^2")
