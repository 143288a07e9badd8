"""
Training the parallel networks and scoring them
===============================================

One small network per fabric layer, inputs in millimetres and seconds, output
in kilokelvin, and balanced loss classes.  Train for a while, then compare with
the finite-difference reference on the collocation grid.
"""
import argparse

from thermopinn import EnvironmentConfig
from thermopinn.experiments import reference_field, run_preset
from thermopinn.network import predict_temperature, save_checkpoint

ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
ap.add_argument("--epochs", type=int, default=2000, help="20000 for the full run")
ap.add_argument("--preset", default="M1")
ap.add_argument("--n-exp", type=int, default=10)
ap.add_argument("--save", help="checkpoint path")
args = ap.parse_args()

env = EnvironmentConfig()
truth = reference_field(env)
run = run_preset(env, args.preset, epochs=args.epochs, n_exp=args.n_exp, truth=truth,
                 log_every=max(args.epochs // 10, 1))
print("coefficients", run.coeffs.as_tuple())
rec = run.result.records
print(f"loss {rec[0].total:.3e} -> {rec[-1].total:.3e}")
for k, v in run.mse.items():
    print(f"MSE {k:5s} {v:.4e} kK^2")

# The initial condition sits at 310.15 K = 0.31015 kK.
m = run.result.model
print(f"T'(0, 0) = {float(predict_temperature(m, 'shl', 0.0, 0.0)):.5f} kK")
# Both networks meeting at an interface should agree there.
jump = float(predict_temperature(m, "shl", 0.6, 30.0) - predict_temperature(m, "msr", 0.6, 30.0))
print(f"interface jump at 0.6 mm, 30 s: {jump * 1e3:.3f} K")
if args.save:
    save_checkpoint(m, args.save)
