"""Explicit finite-difference reference solver and independent analytic checks.

The fabric is discretized on the same node layout as the training grid.  Each
node owns half of each adjacent segment; the update is a forward-Euler energy
balance of those half-cells, which gives the standard three-point stencil
inside a layer, a flux balance at the two material interfaces and one-sided
convective (Robin) closures at both outer surfaces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .collocation import CollocationSet, build_grid
from .physics import FBM, LAYER_IDS, EnvironmentConfig

DEFAULT_STEPS_PER_MINUTE = 200_000
OUTPUT_REFINEMENT = 10  # stored rows per collocation time segment


class StabilityError(ValueError):
    pass


def default_time_steps(horizon: float, t_segments: int = 300) -> int:
    """200000 steps per 60 s, rounded up so that rows can be taken by exact striding."""
    unit = t_segments * OUTPUT_REFINEMENT
    return int(math.ceil(DEFAULT_STEPS_PER_MINUTE * horizon / 60.0 / unit - 1e-9)) * unit


@dataclass(frozen=True)
class FdmGrid:
    x_scaled: np.ndarray  # node positions, network units (mm)
    x: np.ndarray  # node positions, m
    segment_layer: np.ndarray  # layer index of each segment
    layer_slices: dict  # layer -> slice of node indices (interfaces in both)
    n_steps: int
    horizon: float
    t_segments: int

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @classmethod
    def from_collocation(cls, env: EnvironmentConfig, grid: CollocationSet,
                         n_steps: int | None = None) -> "FdmGrid":
        if grid.scale != FBM:
            grid = build_grid(env, grid.segments)
        xs = grid.spatial_nodes
        seg = np.concatenate([np.full(grid.segments[i], i) for i in range(3)])
        n_s, n_m, n_l = grid.segments[:3]
        slices = {"shl": slice(0, n_s + 1), "msr": slice(n_s, n_s + n_m + 1),
                  "lin": slice(n_s + n_m, n_s + n_m + n_l + 1)}
        if n_steps is None:
            n_steps = default_time_steps(env.horizon, grid.segments[3])
        return cls(xs, FBM.unscale_coordinate(xs), seg, slices, int(n_steps), float(env.horizon),
                   grid.segments[3])

    def fourier_numbers(self, env: EnvironmentConfig) -> dict:
        """Per-layer ``k dt / (C dx^2)`` (explicit stability needs <= 1/2)."""
        dx = np.diff(self.x)
        out = {}
        for i, lid in enumerate(LAYER_IDS):
            layer = env.layers[i]
            h = dx[self.segment_layer == i].min()
            out[lid] = layer.conductivity * self.dt / (layer.apparent_heat_capacity() * h * h)
        return out

    def node_coefficients(self, env: EnvironmentConfig):
        """Half-cell heat capacities per node (J/(m^2 K)) and segment conductances (W/(m^2 K))."""
        dx = np.diff(self.x)
        C = np.array([env.layers[i].apparent_heat_capacity() for i in self.segment_layer])
        k = np.array([env.layers[i].conductivity for i in self.segment_layer])
        cap = np.zeros(len(self.x))
        cap[:-1] += 0.5 * C * dx
        cap[1:] += 0.5 * C * dx
        return cap, k / dx

    def check_stability(self, env: EnvironmentConfig) -> dict:
        fo = self.fourier_numbers(env)
        cap, G = self.node_coefficients(env)
        out_g = np.zeros(len(cap))
        out_g[:-1] += G
        out_g[1:] += G
        out_g[0] += env.h_g
        out_g[-1] += env.h_air
        nodal = float(np.max(self.dt * out_g / cap))
        if max(fo.values()) > 0.5 or nodal > 1.0:
            detail = ", ".join(f"{k}={v:.4f}" for k, v in fo.items())
            raise StabilityError(f"explicit scheme unstable: Fourier numbers {detail}; "
                                 f"max nodal coefficient {nodal:.4f} (limits 0.5 / 1.0); "
                                 f"increase the number of time steps (now {self.n_steps})")
        return fo


@dataclass
class TemperatureField:
    """Temperatures (K) on ``times x x_scaled``; interface columns are shared by two layers."""

    times: np.ndarray
    x_scaled: np.ndarray
    values: np.ndarray
    layer_slices: dict
    meta: dict = field(default_factory=dict)
    influx: np.ndarray | None = None  # cumulative boundary heat input per row, J/m^2

    def layer_values(self, layer_id: str) -> np.ndarray:
        return self.values[:, self.layer_slices[layer_id]]

    def layered_kK(self) -> dict:
        return {lid: self.layer_values(lid) / 1000.0 for lid in LAYER_IDS}

    def downsample(self, grid: CollocationSet) -> "TemperatureField":
        """Rows at the collocation times, taken by exact index striding."""
        nt = grid.segments[3]
        if (len(self.times) - 1) % nt:
            raise ValueError(f"{len(self.times) - 1} stored intervals are not a multiple of {nt}")
        stride = (len(self.times) - 1) // nt
        meta = dict(self.meta, stride_rows=stride)
        influx = None if self.influx is None else self.influx[::stride].copy()
        return TemperatureField(grid.t_nodes.copy(), grid.spatial_nodes.copy(),
                                self.values[::stride].copy(), self.layer_slices, meta, influx)


@nb.njit(cache=True)
def _march(T, cap, G, h_g, Tg, h_air, T0, dt, n_steps, stride, out, influx):
    n = T.shape[0]
    flux = np.empty(n - 1)
    rate = dt / cap
    out[0, :] = T
    influx[0] = 0.0
    row = 0
    acc = 0.0
    q_old = h_g * (Tg - T[0]) - h_air * (T[n - 1] - T0)
    for step in range(1, n_steps + 1):
        for i in range(n - 1):
            flux[i] = G[i] * (T[i] - T[i + 1])
        left = h_g * (Tg - T[0])
        right = h_air * (T[n - 1] - T0)
        T[0] += rate[0] * (left - flux[0])
        for i in range(1, n - 1):
            T[i] += rate[i] * (flux[i - 1] - flux[i])
        T[n - 1] += rate[n - 1] * (flux[n - 2] - right)
        # trapezoidal boundary input, independent of the scheme's own left-point rule
        q_new = h_g * (Tg - T[0]) - h_air * (T[n - 1] - T0)
        acc += 0.5 * dt * (q_old + q_new)
        q_old = q_new
        if step % stride == 0:
            row += 1
            out[row, :] = T
            influx[row] = acc


def solve_fdm(env: EnvironmentConfig, grid: CollocationSet | None = None,
              n_steps: int | None = None, rows: int | None = None) -> TemperatureField:
    """March the explicit scheme over the horizon.

    ``rows`` (default ``10 * time segments``) fixes how many equally spaced time
    intervals are stored; ``n_steps`` must be a multiple of it.
    """
    if grid is None:
        grid = build_grid(env)
    fg = FdmGrid.from_collocation(env, grid, n_steps)
    fo = fg.check_stability(env)
    rows = rows or fg.t_segments * OUTPUT_REFINEMENT
    if fg.n_steps % rows:
        raise ValueError(f"n_steps={fg.n_steps} is not a multiple of the {rows} stored intervals")
    cap, G = fg.node_coefficients(env)
    T = np.full(len(fg.x), float(env.T0))
    out = np.empty((rows + 1, len(fg.x)))
    influx = np.empty(rows + 1)
    _march(T, cap, G, env.h_g, env.Tg, env.h_air, env.T0, fg.dt, fg.n_steps,
           fg.n_steps // rows, out, influx)
    times = np.linspace(0.0, env.horizon, rows + 1)
    meta = {"env": env.digest(), "n_steps": fg.n_steps, "dt": fg.dt,
            "fourier": {k: float(v) for k, v in fo.items()}, "segments": list(grid.segments)}
    return TemperatureField(times, fg.x_scaled.copy(), out, fg.layer_slices, meta, influx)


# --------------------------------------------------------------------------
# independent oracles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyProfile:
    q: float  # W/m^2, positive from hot side into the fabric
    x_edges: np.ndarray  # layer boundaries, m
    T_edges: np.ndarray  # temperature at each boundary, K
    conductivities: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.x_edges, self.T_edges)


def series_profile(T_hot, T_cold, h_hot, h_cold, conductivities, thicknesses) -> SteadyProfile:
    """Steady conduction through layers in series between two convective fluids."""
    ks = np.asarray(conductivities, dtype=float)
    Ls = np.asarray(thicknesses, dtype=float)
    if np.any(Ls < 0):
        raise ValueError("thicknesses must be >= 0")
    R = (0.0 if np.isinf(h_hot) else 1.0 / h_hot) + np.sum(Ls / ks) \
        + (0.0 if np.isinf(h_cold) else 1.0 / h_cold)
    q = (T_hot - T_cold) / R
    x_edges = np.concatenate([[0.0], np.cumsum(Ls)])
    T_edges = np.empty(len(Ls) + 1)
    T_edges[0] = T_hot - (0.0 if np.isinf(h_hot) else q / h_hot)
    T_edges[1:] = T_edges[0] - q * np.cumsum(Ls / ks)
    return SteadyProfile(q, x_edges, T_edges, ks)


def steady_state_profile(env: EnvironmentConfig) -> SteadyProfile:
    return series_profile(env.Tg, env.T0, env.h_g, env.h_air,
                          [l.conductivity for l in env.layers], [l.thickness for l in env.layers])


def mse_report(pred: dict, truth: dict) -> dict:
    """Per-layer and overall mean squared error between layered fields (kK).

    Interface nodes belong to both adjacent layers, in the layer values and in
    the overall mean.
    """
    out = {}
    sq = []
    for lid in LAYER_IDS:
        p = np.asarray(pred[lid], dtype=float)
        t = np.asarray(truth[lid], dtype=float)
        if p.shape != t.shape:
            raise ValueError(f"{lid}: prediction {p.shape} vs truth {t.shape}")
        d = (p - t) ** 2
        out[lid] = float(d.mean())
        sq.append(d.ravel())
    out["total"] = float(np.concatenate(sq).mean())
    return out


def energy_balance(field: TemperatureField, env: EnvironmentConfig) -> float:
    """|change in stored energy - net boundary heat input| / |net boundary heat input|.

    Stored energy uses the half-cell capacities of the scheme.  The boundary
    heat input is the trapezoidal time integral of the two convective fluxes:
    accumulated at every solver step when the field carries it, otherwise over
    the stored rows.  The scheme itself integrates the fluxes with the left-point
    rule, so the fraction measures its first-order time error.
    """
    x = FBM.unscale_coordinate(field.x_scaled)
    dx = np.diff(x)
    seg_layer = np.empty(len(dx), dtype=int)
    for i, lid in enumerate(LAYER_IDS):
        sl = field.layer_slices[lid]
        seg_layer[sl.start:sl.stop - 1] = i
    C = np.array([env.layers[i].apparent_heat_capacity() for i in seg_layer])
    cap = np.zeros(len(x))
    cap[:-1] += 0.5 * C * dx
    cap[1:] += 0.5 * C * dx
    V = field.values
    stored = float(cap @ (V[-1] - V[0]))
    if field.influx is not None:
        influx = float(field.influx[-1] - field.influx[0])
    else:
        q = env.h_g * (env.Tg - V[:, 0]) - env.h_air * (V[:, -1] - env.T0)
        influx = float(np.sum(0.5 * (q[1:] + q[:-1]) * np.diff(field.times)))
    if influx == 0.0:
        return 0.0 if stored == 0.0 else math.inf
    return abs(stored - influx) / abs(influx)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

_FIELD_MAGIC = "thermopinn-field 1"


def write_field_binary(field: TemperatureField, path) -> Path:
    path = Path(path)
    sl = " ".join(f"{lid}:{field.layer_slices[lid].start}:{field.layer_slices[lid].stop}"
                  for lid in LAYER_IDS)
    head = [_FIELD_MAGIC, f"rows {len(field.times)}", f"cols {len(field.x_scaled)}",
            f"layers {sl}", f"env {field.meta.get('env', '')}", "end"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        for arr in (field.times, field.x_scaled, field.values):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> TemperatureField:
    data = Path(path).read_bytes()
    end = data.find(b"\nend\n")
    if not data.startswith(_FIELD_MAGIC.encode()) or end < 0:
        raise ValueError(f"{path}: not a thermopinn field file")
    fields = dict(line.split(" ", 1) for line in data[:end].decode().splitlines()[1:])
    r, c = int(fields["rows"]), int(fields["cols"])
    body = np.frombuffer(data[end + 5:], dtype="<f8")
    if body.size != r + c + r * c:
        raise ValueError(f"{path}: truncated field data")
    slices = {}
    for item in fields["layers"].split():
        lid, a, b = item.split(":")
        slices[lid] = slice(int(a), int(b))
    return TemperatureField(body[:r].copy(), body[r:r + c].copy(),
                            body[r + c:].reshape(r, c).copy(), slices,
                            {"env": fields.get("env", "").strip()})


def write_field_csv(field: TemperatureField, path, manifest_hash: str = "") -> Path:
    """Long-format CSV ``t,x_mm,layer,T_K``; interface nodes are listed under both layers."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# manifest {manifest_hash}\nt,x_mm,layer,T_K\n")
        for lid in LAYER_IDS:
            sl = field.layer_slices[lid]
            xs = field.x_scaled[sl].tolist()
            for i, t in enumerate(field.times.tolist()):
                row = field.values[i, sl].tolist()
                fh.write("".join(f"{t!r},{x!r},{lid},{v!r}\n" for x, v in zip(xs, row)))
    return path
