"""Uniform training grid and its partition into residual sub-domains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import FBM, LAYER_IDS, EnvironmentConfig, ScaleConfig


@dataclass(frozen=True)
class CollocationSet:
    """Sample points, all in network units (x' and t).

    ``x_nodes[layer]`` includes both layer endpoints, so the two interface
    abscissae appear in both adjacent layers.  Partitions:

    * ``interior[layer]`` -- layer nodes except x'=0 and x'=L'_fab, times t > 0
    * ``initial[layer]`` -- every layer node at t = 0
    * ``outer_left`` / ``outer_right`` -- times t > 0 at x'=0 / x'=L'_fab
    * ``interface_shl_msr`` / ``interface_msr_lin`` -- all times at the shared abscissa

    Interior arrays are ordered x-major then t.
    """

    abscissae: tuple  # (0, L'_shl, L'_msr, L'_fab)
    x_nodes: dict
    t_nodes: np.ndarray
    interior: dict  # layer -> (x, t)
    initial: dict  # layer -> x (t = 0)
    outer_left: np.ndarray  # t values
    outer_right: np.ndarray
    interface_shl_msr: np.ndarray  # t values
    interface_msr_lin: np.ndarray
    segments: tuple
    scale: ScaleConfig

    @property
    def spatial_nodes(self) -> np.ndarray:
        """Distinct spatial nodes across the fabric (interfaces once)."""
        s, m, l = (self.x_nodes[k] for k in LAYER_IDS)
        return np.concatenate([s, m[1:], l[1:]])

    @property
    def N_r(self) -> int:
        return sum(len(v[0]) for v in self.interior.values())

    @property
    def N_0(self) -> int:
        return sum(len(v) for v in self.initial.values())

    @property
    def N_b(self) -> int:
        return len(self.outer_left) + len(self.outer_right)

    def partition(self, name: str):
        """(x, t) arrays of a named partition, e.g. ``interior_msr`` or ``outer_left``."""
        if name.startswith("interior_"):
            return self.interior[name[9:]]
        if name.startswith("initial_"):
            x = self.initial[name[8:]]
            return x, np.zeros_like(x)
        x0, xs, xm, xf = self.abscissae
        where = {"outer_left": x0, "outer_right": xf,
                 "interface_shl_msr": xs, "interface_msr_lin": xm}[name]
        t = getattr(self, name)
        return np.full_like(t, where), t


def _nodes(a: float, b: float, n: int) -> np.ndarray:
    x = np.linspace(a, b, n + 1)
    x[0], x[-1] = a, b
    return x


def build_grid(env: EnvironmentConfig, segments=(50, 70, 200, 300),
               scale: ScaleConfig = FBM) -> CollocationSet:
    segments = tuple(int(s) for s in segments)
    if len(segments) != 4 or min(segments) < 1:
        raise ValueError(f"segments must be four positive integers, got {segments}")
    xs = env.abscissae(scale)
    x_nodes = {lid: _nodes(xs[i], xs[i + 1], segments[i]) for i, lid in enumerate(LAYER_IDS)}
    t_nodes = _nodes(0.0, float(env.horizon), segments[3])
    t_pos = t_nodes[1:]

    interior = {}
    for lid in LAYER_IDS:
        xn = x_nodes[lid]
        if lid == "shl":
            xn = xn[1:]
        elif lid == "lin":
            xn = xn[:-1]
        X, T = np.meshgrid(xn, t_pos, indexing="ij")
        interior[lid] = (X.ravel(), T.ravel())
    initial = {lid: x_nodes[lid].copy() for lid in LAYER_IDS}
    return CollocationSet(
        abscissae=xs, x_nodes=x_nodes, t_nodes=t_nodes, interior=interior, initial=initial,
        outer_left=t_pos.copy(), outer_right=t_pos.copy(),
        interface_shl_msr=t_nodes.copy(), interface_msr_lin=t_nodes.copy(),
        segments=segments, scale=scale,
    )


def thinned(grid: CollocationSet, every: int) -> CollocationSet:
    """Every ``every``-th point of each partition (for cheap gradient checks)."""
    sl = slice(None, None, every)
    return CollocationSet(
        abscissae=grid.abscissae, x_nodes=grid.x_nodes, t_nodes=grid.t_nodes,
        interior={k: (x[sl], t[sl]) for k, (x, t) in grid.interior.items()},
        initial={k: x[sl] for k, x in grid.initial.items()},
        outer_left=grid.outer_left[sl], outer_right=grid.outer_right[sl],
        interface_shl_msr=grid.interface_shl_msr[sl], interface_msr_lin=grid.interface_msr_lin[sl],
        segments=grid.segments, scale=grid.scale,
    )
