"""Layer-wise physics-informed networks for transient heat conduction in multilayer fabric."""
import os as _os

_threads = _os.environ.get("THERMOPINN_THREADS")
if _threads:
    # only effective if set before numpy/BLAS are first loaded
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMBA_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .physics import EnvironmentConfig, FabricLayer, ScaleConfig, FBM, RAW, load_config  # noqa: E402
from .collocation import build_grid  # noqa: E402
from .network import ParallelModel, init_kaiming, load_checkpoint, save_checkpoint  # noqa: E402
from .balance import BalanceCoefficients, calibrate, collect_initial_stats  # noqa: E402
from .trainer import PRESETS, composite_loss, train  # noqa: E402
from .fdm import solve_fdm, steady_state_profile, mse_report, energy_balance  # noqa: E402

__all__ = [
    "EnvironmentConfig", "FabricLayer", "ScaleConfig", "FBM", "RAW", "load_config",
    "build_grid", "ParallelModel", "init_kaiming", "load_checkpoint", "save_checkpoint",
    "BalanceCoefficients", "calibrate", "collect_initial_stats", "PRESETS",
    "composite_loss", "train", "solve_fdm", "steady_state_profile", "mse_report",
    "energy_balance",
]
