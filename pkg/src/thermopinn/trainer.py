"""Composite physics loss, Adam, and the full-batch training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff
from .autodiff import N_PARAMS, WEIGHT_SLOTS, BIAS_SLOTS
from .collocation import CollocationSet
from .network import ParallelModel, init_kaiming, save_checkpoint
from .physics import (
    RESIDUAL_TERMS, TERM_IDS, TERMS, EnvironmentConfig, single_network_residual,
)

log = logging.getLogger(__name__)

N_TERMS = len(TERM_IDS)
DIVERGENCE_LIMIT = 1e30


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, model, records):
        super().__init__(msg)
        self.model = model
        self.records = records


def term_factors(coeffs) -> np.ndarray:
    """Per-term multiplier (in TERM_IDS order) applied to residuals before squaring."""
    if coeffs is None:
        return np.ones(N_TERMS)
    return np.array([coeffs.for_class(TERMS[t].cls) for t in TERM_IDS], dtype=np.float64)


@dataclass
class LossEval:
    unscaled: np.ndarray  # per-term mean squared residual, no balance factor
    scaled: np.ndarray  # per-term mean squared balanced residual
    grads: list | None  # gradient of the total w.r.t. each network's flat vector

    @property
    def total(self) -> float:
        return float(self.scaled.sum())

    def grad_flat(self) -> np.ndarray:
        return np.concatenate(self.grads)


def _interface(model, grid, env, domain, left, right, k1, k2, unscaled, grads, idx1, idx2):
    scale = grid.scale
    x, t = grid.partition(domain)
    n = len(t)
    iL, iR = model.net_index(left), model.net_index(right)
    yL = autodiff.forward_batch(model.nets[iL].flat, x, t)
    yR = autodiff.forward_batch(model.nets[iR].flat, x, t)
    kL, kR = env.layer(left).conductivity, env.layer(right).conductivity
    vf, gf = scale.value_factor, scale.grad_factor
    r1 = (yL[:, 0] - yR[:, 0]) * vf
    r2 = (kL * yL[:, 1] - kR * yR[:, 1]) * gf
    unscaled[idx1] = np.mean(r1 * r1)
    unscaled[idx2] = np.mean(r2 * r2)
    if grads is None:
        return
    adjL = np.zeros((n, 4))
    adjR = np.zeros((n, 4))
    adjL[:, 0] = 2.0 * k1 * k1 * r1 * vf / n
    adjR[:, 0] = -adjL[:, 0]
    adjL[:, 1] = 2.0 * k2 * k2 * r2 * kL * gf / n
    adjR[:, 1] = -2.0 * k2 * k2 * r2 * kR * gf / n
    if iL == iR:
        grads[iL] += autodiff.backward_batch(model.nets[iL].flat, x, t, adjL + adjR)
    else:
        grads[iL] += autodiff.backward_batch(model.nets[iL].flat, x, t, adjL)
        grads[iR] += autodiff.backward_batch(model.nets[iR].flat, x, t, adjR)


def evaluate_loss(model: ParallelModel, grid: CollocationSet, env: EnvironmentConfig,
                  coeffs=None, need_grad: bool = True, skip=()) -> LossEval:
    """All twelve loss terms (and optionally the gradient of their balanced sum).

    Terms listed in ``skip`` are left at zero and contribute nothing.
    """
    k = term_factors(coeffs)
    unscaled = np.zeros(N_TERMS)
    grads = [np.zeros(N_PARAMS) for _ in model.nets] if need_grad else None
    for idx, term in enumerate(RESIDUAL_TERMS):
        if len(term.layers) != 1 or term.id in skip:
            continue
        ni = model.net_index(term.layers[0])
        x, t = grid.partition(term.domain)
        res = single_network_residual(term.id, env, grid.scale)
        if need_grad:
            s, g = autodiff.affine_sq_sum(model.nets[ni].flat, x, t, res.coeffs)
            kk = k[idx] * k[idx]
            if kk != 0.0:
                grads[ni] += g * (kk / len(x))
        else:
            out = autodiff.forward_batch(model.nets[ni].flat, x, t)
            r = out @ np.asarray(res.coeffs[1:]) + res.coeffs[0]
            s = float(r @ r)
        unscaled[idx] = s / len(x)
    pos = {tid: i for i, tid in enumerate(TERM_IDS)}
    for dom, left, right in (("interface_shl_msr", "shl", "msr"),
                             ("interface_msr_lin", "msr", "lin")):
        i1 = pos[f"b1_{left}_{right}"]
        i2 = pos[f"b2_{left}_{right}"]
        k1 = 0.0 if TERM_IDS[i1] in skip else k[i1]
        k2 = 0.0 if TERM_IDS[i2] in skip else k[i2]
        _interface(model, grid, env, dom, left, right, k1, k2, unscaled, grads, i1, i2)
        for i in (i1, i2):
            if TERM_IDS[i] in skip:
                unscaled[i] = 0.0
    bad = [TERM_IDS[i] for i in range(N_TERMS) if not np.isfinite(unscaled[i])]
    if bad:
        raise FloatingPointError(f"non-finite loss term(s): {', '.join(bad)}")
    return LossEval(unscaled, unscaled * k * k, grads)


def composite_loss(model, grid, env, coeffs=None) -> tuple[float, dict]:
    """Total balanced loss and the twelve balanced per-term values."""
    ev = evaluate_loss(model, grid, env, coeffs, need_grad=False)
    return ev.total, dict(zip(TERM_IDS, ev.scaled.tolist()))


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_size(cls, n: int, **kw) -> "OptimizerState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(params: np.ndarray, grad: np.ndarray, state: OptimizerState) -> np.ndarray:
    """One bias-corrected Adam update; returns new parameters and advances ``state``."""
    if grad.shape != state.m.shape:
        raise ValueError("gradient shape does not match optimizer moments")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    denom = np.sqrt(state.v) / np.sqrt(bc2) + state.eps
    return params - (state.lr / bc1) * state.m / denom


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass
class TrainRecord:
    epoch: int
    unscaled: np.ndarray
    scaled: np.ndarray
    total: float
    wall_time: float


@dataclass
class Preset:
    name: str
    parallel: bool
    fbm: bool
    bbm: bool
    description: str = ""


PRESETS = {
    "M1": Preset("M1", True, True, True, "parallel networks, unit scaling, loss balancing"),
    "M2": Preset("M2", True, True, False, "parallel networks, unit scaling"),
    "M3": Preset("M3", True, False, True, "parallel networks, SI units, loss balancing"),
    "M4": Preset("M4", True, False, False, "parallel networks, SI units"),
    "M5": Preset("M5", False, True, True, "single shared network, unit scaling, loss balancing"),
}


@dataclass
class TrainResult:
    model: ParallelModel
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def train(env: EnvironmentConfig, grid: CollocationSet, coeffs=None, epochs: int = 20000,
          seed: int = 0, *, shared: bool = False, model: ParallelModel | None = None,
          lr: float = 1e-3, checkpoint_every: int = 0, checkpoint_path=None,
          snapshot_epochs=(), log_every: int = 1000) -> TrainResult:
    """Full-batch Adam on the balanced composite loss.

    A record is kept for every epoch (losses at the parameters before that
    epoch's update).  ``snapshot_epochs`` collects gradient histograms.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    model = model.copy() if model is not None else init_kaiming(seed, shared=shared)
    flat = model.flat()
    state = OptimizerState.for_size(flat.size, lr=lr)
    snapshot_epochs = set(int(e) for e in snapshot_epochs)
    result = TrainResult(model)
    start = time.perf_counter()
    last_good = model
    for epoch in range(epochs):
        current = model.with_flat(flat) if epoch else model
        try:
            ev = evaluate_loss(current, grid, env, coeffs)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", last_good, result.records) from exc
        total = ev.total
        result.records.append(TrainRecord(epoch, ev.unscaled, ev.scaled, total,
                                          time.perf_counter() - start))
        if not np.isfinite(total) or total > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"epoch {epoch}: total loss {total:.3e}", last_good,
                                   result.records)
        last_good = current
        if epoch in snapshot_epochs:
            result.snapshots.extend(_histogram_rows(ev.grads, epoch))
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.6e (%.1fs)", epoch, total, time.perf_counter() - start)
        flat = adam_step(flat, ev.grad_flat(), state)
        if checkpoint_every and checkpoint_path and (epoch + 1) % checkpoint_every == 0:
            save_checkpoint(model.with_flat(flat), checkpoint_path)
    result.model = model.with_flat(flat) if epochs else model
    if epochs in snapshot_epochs:
        ev = evaluate_loss(result.model, grid, env, coeffs)
        result.snapshots.extend(_histogram_rows(ev.grads, epochs))
    if checkpoint_path:
        save_checkpoint(result.model, checkpoint_path)
    return result


# --------------------------------------------------------------------------
# gradient histograms
# --------------------------------------------------------------------------

HIST_DECADES = (-12, 8)
HIST_BINS = 64


def histogram_edges() -> np.ndarray:
    """65 edges: 32 log-spaced negative, 0, 32 log-spaced positive.

    Magnitudes beyond ``10**8`` fall into the outermost bins and magnitudes below
    ``10**-12`` into the two bins adjacent to zero; exact zeros go to ``[0, 1e-12)``.
    """
    lo, hi = HIST_DECADES
    pos = np.logspace(lo, hi, HIST_BINS // 2)
    return np.concatenate([-pos[::-1], [0.0], pos])


def gradient_histogram(values: np.ndarray) -> np.ndarray:
    edges = histogram_edges()
    clipped = np.clip(values, edges[0], np.nextafter(edges[-1], 0))
    idx = np.searchsorted(edges, clipped, side="right") - 1
    return np.bincount(idx, minlength=HIST_BINS)[:HIST_BINS]


def _layer_entries(flat: np.ndarray, layer: int) -> np.ndarray:
    (wo, (r, c)), (bo, (n,)) = WEIGHT_SLOTS[layer], BIAS_SLOTS[layer]
    return np.concatenate([flat[wo:wo + r * c], flat[bo:bo + n]])


def _histogram_rows(grads, epoch):
    edges = histogram_edges()
    rows = []
    for ni, g in enumerate(grads):
        for layer in range(len(WEIGHT_SLOTS)):
            counts = gradient_histogram(_layer_entries(g, layer))
            rows.extend((epoch, ni, layer, float(edges[b]), int(counts[b]))
                        for b in range(HIST_BINS))
    return rows


def gradient_snapshot(model, grid, env, coeffs, epoch: int) -> list[tuple]:
    """Histogram rows ``(epoch, network, layer, bin_left_edge, count)`` of loss gradients."""
    ev = evaluate_loss(model, grid, env, coeffs)
    return _histogram_rows(ev.grads, epoch)


def write_log_csv(records, path, manifest_hash: str = "") -> Path:
    path = Path(path)
    head = ["epoch"] + [f"{t}_raw" for t in TERM_IDS] + [f"{t}_scaled" for t in TERM_IDS] \
        + ["total"]
    lines = [f"# manifest {manifest_hash}", ",".join(head)]
    for r in records:
        vals = [str(r.epoch)] + [repr(float(v)) for v in r.unscaled] \
            + [repr(float(v)) for v in r.scaled] + [repr(float(r.total))]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_histogram_csv(rows, path, manifest_hash: str = "") -> Path:
    path = Path(path)
    lines = [f"# manifest {manifest_hash}", "epoch,network,layer,bin_edge,count"]
    lines += [f"{e},{n},{l},{edge!r},{c}" for e, n, l, edge, c in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
