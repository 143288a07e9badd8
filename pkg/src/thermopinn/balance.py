"""Class-wise loss balancing: initial loss statistics, range overlap, coefficient search.

Residual terms fall into three classes (temperature-level terms, gradient
terms, PDE terms).  Each class gets one multiplier applied to its residuals
before squaring, so a class's loss range scales by the multiplier squared.
``alpha`` is fixed and ``beta``/``gamma`` are chosen independently to maximize
the interval overlap (intersection over union) of their class's loss range
with the ``alpha``-scaled first class.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .physics import C1, C2, C3, CLASS_MEMBERS, TERM_IDS, TERMS

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-2


@dataclass(frozen=True)
class BalanceCoefficients:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        # zero is accepted for loss-annihilation checks; negatives never are
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("balance coefficients must be non-negative")

    def for_class(self, cls: str) -> float:
        return {C1: self.alpha, C2: self.beta, C3: self.gamma}[cls]

    def for_term(self, term_id: str) -> float:
        return self.for_class(TERMS[term_id].cls)

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


UNIT = BalanceCoefficients(1.0, 1.0, 1.0)


def apply_balance(term_id: str, residual_value, coeffs: BalanceCoefficients):
    return coeffs.for_term(term_id) * np.asarray(residual_value)


@dataclass
class ClassStats:
    runs: np.ndarray  # (n_exp, 12) per-repeat loss of every term, TERM_IDS order
    seeds: tuple = ()

    @property
    def term_means(self) -> dict:
        return dict(zip(TERM_IDS, self.runs.mean(axis=0).tolist()))

    def class_losses(self, cls: str) -> np.ndarray:
        means = self.term_means
        return np.array([means[t] for t in CLASS_MEMBERS[cls]])

    def range(self, cls: str) -> tuple[float, float]:
        v = self.class_losses(cls)
        return float(v.min()), float(v.max())

    @classmethod
    def from_term_means(cls, means: dict) -> "ClassStats":
        return cls(np.array([[float(means[t]) for t in TERM_IDS]]))


def scaled_range(stats: ClassStats, cls: str, k: float) -> tuple[float, float]:
    lo, hi = stats.range(cls)
    return k * k * lo, k * k * hi


def iou(a, b) -> float:
    """Length of the intersection over length of the interval hull."""
    a0, a1 = a
    b0, b1 = b
    if a0 > a1 or b0 > b1:
        raise ValueError(f"invalid ranges {a}, {b}")
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = max(a1, b1) - min(a0, b0)
    if union == 0.0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class SearchGrid:
    lo_exp: float = -9.0
    hi_exp: float = 0.0
    points: int = 400
    refine_points: int = 401

    def coarse(self) -> np.ndarray:
        return np.logspace(self.lo_exp, self.hi_exp, self.points)

    @property
    def step_ratio(self) -> float:
        return 10.0 ** ((self.hi_exp - self.lo_exp) / (self.points - 1))


def _argmax_last(values: np.ndarray) -> int:
    # ties resolve toward the larger coefficient
    return int(len(values) - 1 - np.argmax(values[::-1]))


def _breakpoints(target, stats, cls, grid):
    # coefficients at which an edge of k^2 * range(cls) meets an edge of target
    lo, hi = stats.range(cls)
    out = [np.sqrt(t / c) for t in target for c in (lo, hi) if c > 0 and t > 0]
    return [k for k in out if 10.0 ** grid.lo_exp <= k <= 10.0 ** grid.hi_exp]


def line_search(target: tuple, stats: ClassStats, cls: str, grid: SearchGrid = SearchGrid()):
    """Coefficient maximizing overlap of ``k * cls`` with ``target``.

    Log-spaced scan, one refinement pass between the winner's neighbours, and
    the edge-meeting coefficients (where the overlap curve has its corners).
    """
    score = lambda k: iou(target, scaled_range(stats, cls, k))
    ks = grid.coarse()
    scores = np.array([score(k) for k in ks])
    i = _argmax_last(scores)
    lo = ks[max(i - 1, 0)]
    hi = ks[min(i + 1, len(ks) - 1)]
    fine = np.logspace(np.log10(lo), np.log10(hi), grid.refine_points)
    cand = np.concatenate([ks, fine, _breakpoints(target, stats, cls, grid)])
    cscores = np.array([score(k) for k in cand])
    best = cscores.max()
    j = int(np.argmax(np.where(cscores == best, cand, -np.inf)))
    return float(cand[j]), float(cscores[j]), (ks, scores)


@dataclass
class Calibration:
    coeffs: BalanceCoefficients
    iou12: float
    iou13: float
    curves: dict = field(default_factory=dict)


def calibrate(stats: ClassStats, alpha: float = DEFAULT_ALPHA,
              search_grid: SearchGrid = SearchGrid()) -> Calibration:
    ranges = [stats.range(c) for c in (C1, C2, C3)]
    if all(r == (0.0, 0.0) for r in ranges):
        raise ValueError("all class ranges are zero; nothing to balance")
    target = scaled_range(stats, C1, alpha)
    beta, i12, curve2 = line_search(target, stats, C2, search_grid)
    gamma, i13, curve3 = line_search(target, stats, C3, search_grid)
    log.info("calibrated alpha=%.3g beta=%.4g (IOU %.3f) gamma=%.4g (IOU %.3f)",
             alpha, beta, i12, gamma, i13)
    return Calibration(BalanceCoefficients(alpha, beta, gamma), i12, i13,
                       {"beta": curve2, "gamma": curve3})


def edge_aligned(stats: ClassStats, alpha: float = DEFAULT_ALPHA) -> tuple[float, float]:
    """Closed-form coefficients putting each class's upper edge on the alpha-scaled C1 edge."""
    top1 = stats.range(C1)[1]
    return (alpha * np.sqrt(top1 / stats.range(C2)[1]),
            alpha * np.sqrt(top1 / stats.range(C3)[1]))


def collect_initial_stats(env, grid, n_exp: int = 50, seed: int = 0, *, seeds=None,
                          shared: bool = False, lr: float = 1e-3) -> ClassStats:
    """Mean loss of every term after one full-batch Adam step from fresh initializations.

    Repeat ``i`` initializes with seed ``seed + i`` unless ``seeds`` is given.
    """
    from .network import init_kaiming
    from .trainer import OptimizerState, adam_step, evaluate_loss

    seeds = tuple(int(s) for s in seeds) if seeds is not None else \
        tuple(seed + i for i in range(n_exp))
    if len(seeds) < 2:
        raise ValueError("need at least two repeated initializations")
    runs = np.empty((len(seeds), len(TERM_IDS)))
    for i, s in enumerate(seeds):
        model = init_kaiming(s, shared=shared)
        ev = evaluate_loss(model, grid, env, UNIT)
        flat = model.flat()
        state = OptimizerState.for_size(flat.size, lr=lr)
        stepped = model.with_flat(adam_step(flat, ev.grad_flat(), state))
        after = evaluate_loss(stepped, grid, env, UNIT, need_grad=False).unscaled
        if not np.all(np.isfinite(after)):
            raise FloatingPointError(f"repeat {i} (seed {s}) produced a non-finite loss")
        runs[i] = after
    return ClassStats(runs, seeds)


def write_report(stats: ClassStats, cal: Calibration, path, manifest_hash: str = "") -> Path:
    path = Path(path)
    lines = [f"# manifest {manifest_hash}", "record,id,class,value,range_min,range_max"]
    for tid, v in stats.term_means.items():
        lines.append(f"term,{tid},{TERMS[tid].cls},{v!r},,")
    for c in (C1, C2, C3):
        lo, hi = stats.range(c)
        lines.append(f"range,{c},{c},,{lo!r},{hi!r}")
    for name, c, v in zip(("alpha", "beta", "gamma"), (C1, C2, C3), cal.coeffs.as_tuple()):
        lines.append(f"coefficient,{name},{c},{v!r},,")
    lines.append(f"iou,IOU12,,{cal.iou12!r},,")
    lines.append(f"iou,IOU13,,{cal.iou13!r},,")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_coefficients(path) -> BalanceCoefficients:
    """Coefficients from a calibration report CSV."""
    vals = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("coefficient,"):
            _, name, _, v, *_ = line.split(",")
            vals[name] = float(v)
    try:
        return BalanceCoefficients(vals["alpha"], vals["beta"], vals["gamma"])
    except KeyError:
        raise ValueError(f"{path}: no coefficient rows") from None
