"""Parameter containers for the per-layer sub-networks.

Checkpoint format: an ASCII header terminated by a line ``end``, followed by
the parameters of each network as little-endian float64 in declared field
order (five weight matrices row-major, then five bias vectors)::

    thermopinn-checkpoint 1
    seed 0
    routing 0 1 2
    networks 3
    weights 10x2 10x10 10x10 10x10 1x10
    biases 10 10 10 10 1
    end
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff
from .autodiff import LAYER_SHAPES, N_PARAMS, WEIGHT_SLOTS
from .physics import FBM, LAYER_IDS, EnvironmentConfig, ScaleConfig

_MAGIC = "thermopinn-checkpoint 1"


@dataclass
class NetworkParams:
    """One tanh MLP (2 -> 10 x 4 -> 1) backed by a flat float64 vector."""

    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {self.flat.shape}")

    @property
    def weights(self) -> list[np.ndarray]:
        return autodiff.split_params(self.flat)[0]

    @property
    def biases(self) -> list[np.ndarray]:
        return autodiff.split_params(self.flat)[1]

    @classmethod
    def zeros(cls) -> "NetworkParams":
        return cls(np.zeros(N_PARAMS))

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.flat.copy())


def kaiming_network(rng: np.random.Generator) -> NetworkParams:
    """Kaiming-normal weights (std sqrt(2 / fan_in)), zero biases."""
    flat = np.zeros(N_PARAMS)
    for off, (rows, cols) in WEIGHT_SLOTS:
        flat[off:off + rows * cols] = rng.normal(0.0, np.sqrt(2.0 / cols), size=rows * cols)
    return NetworkParams(flat)


@dataclass
class ParallelModel:
    """Sub-networks plus the routing from fabric layer to network.

    The parallel solver uses three independent networks with routing (0, 1, 2);
    a single network shared by all layers has routing (0, 0, 0).
    """

    nets: tuple
    routing: tuple = (0, 1, 2)
    seed: int | None = None

    def __post_init__(self):
        self.nets = tuple(self.nets)
        self.routing = tuple(int(r) for r in self.routing)
        if len(self.routing) != 3 or not all(0 <= r < len(self.nets) for r in self.routing):
            raise ValueError(f"bad routing {self.routing} for {len(self.nets)} networks")
        ids = {id(n.flat) for n in self.nets}
        if len(ids) != len(self.nets):
            raise ValueError("sub-networks must not share parameter storage")

    def net(self, layer_id: str) -> NetworkParams:
        return self.nets[self.routing[LAYER_IDS.index(layer_id)]]

    def net_index(self, layer_id: str) -> int:
        return self.routing[LAYER_IDS.index(layer_id)]

    shl = property(lambda self: self.net("shl"))
    msr = property(lambda self: self.net("msr"))
    lin = property(lambda self: self.net("lin"))

    @property
    def parallel(self) -> bool:
        return len(set(self.routing)) == 3

    def flat(self) -> np.ndarray:
        return np.concatenate([n.flat for n in self.nets])

    def with_flat(self, flat: np.ndarray) -> "ParallelModel":
        flat = np.asarray(flat, dtype=np.float64)
        nets = tuple(NetworkParams(flat[i * N_PARAMS:(i + 1) * N_PARAMS].copy())
                     for i in range(len(self.nets)))
        return ParallelModel(nets, self.routing, self.seed)

    def copy(self) -> "ParallelModel":
        return ParallelModel(tuple(n.copy() for n in self.nets), self.routing, self.seed)


def init_kaiming(seed: int, shared: bool = False) -> ParallelModel:
    """Independent Kaiming-initialized sub-networks from disjoint generator streams."""
    streams = np.random.SeedSequence(seed).spawn(3)
    n = 1 if shared else 3
    nets = tuple(kaiming_network(np.random.default_rng(s)) for s in streams[:n])
    return ParallelModel(nets, (0, 0, 0) if shared else (0, 1, 2), seed)


def zero_model() -> ParallelModel:
    return ParallelModel(tuple(NetworkParams.zeros() for _ in range(3)))


def predict_temperature(model: ParallelModel, layer_id: str, x_scaled, t,
                        env: EnvironmentConfig | None = None, scale: ScaleConfig = FBM):
    """Network temperature T' of one fabric layer; rejects points outside its span."""
    if layer_id not in LAYER_IDS:
        raise ValueError(f"unknown layer {layer_id!r}")
    env = env or EnvironmentConfig()
    lo, hi = env.layer_span(layer_id, scale)
    x = np.asarray(x_scaled, dtype=np.float64)
    if np.any((x < lo) | (x > hi)):
        raise ValueError(f"x' outside the {layer_id} span [{lo}, {hi}]")
    out = autodiff.forward_batch(model.net(layer_id).flat, x, t)[:, 0]
    return float(out[0]) if np.ndim(x) == 0 and np.ndim(t) == 0 else out


def layered_prediction(model: ParallelModel, x_nodes: dict, t_nodes: np.ndarray) -> dict:
    """T' on the (t, x) tensor grid of every layer: ``{layer: array (n_t, n_x)}``."""
    out = {}
    for lid in LAYER_IDS:
        X, T = np.meshgrid(x_nodes[lid], t_nodes, indexing="xy")
        vals = autodiff.forward_batch(model.net(lid).flat, X.ravel(), T.ravel())[:, 0]
        out[lid] = vals.reshape(X.shape)
    return out


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def _header(model: ParallelModel) -> bytes:
    lines = [
        _MAGIC,
        f"seed {'none' if model.seed is None else int(model.seed)}",
        "routing " + " ".join(str(r) for r in model.routing),
        f"networks {len(model.nets)}",
        "weights " + " ".join(f"{r}x{c}" for r, c in LAYER_SHAPES),
        "biases " + " ".join(str(r) for r, _ in LAYER_SHAPES),
        "end",
    ]
    return ("\n".join(lines) + "\n").encode("ascii")


def checkpoint_bytes(model: ParallelModel) -> bytes:
    return _header(model) + b"".join(n.flat.astype("<f8").tobytes() for n in model.nets)


def save_checkpoint(model: ParallelModel, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> ParallelModel:
    data = Path(path).read_bytes()
    end = data.find(b"\nend\n")
    if not data.startswith(_MAGIC.encode()) or end < 0:
        raise ValueError(f"{path}: not a thermopinn checkpoint")
    header = data[:end].decode("ascii").splitlines()
    fields = dict(line.split(" ", 1) for line in header[1:])
    n = int(fields["networks"])
    expected = "weights " + " ".join(f"{r}x{c}" for r, c in LAYER_SHAPES)
    if "weights " + fields["weights"] != expected:
        raise ValueError(f"{path}: architecture mismatch ({fields['weights']})")
    body = np.frombuffer(data[end + 5:], dtype="<f8")
    if body.size != n * N_PARAMS:
        raise ValueError(f"{path}: expected {n * N_PARAMS} values, found {body.size}")
    nets = tuple(NetworkParams(body[i * N_PARAMS:(i + 1) * N_PARAMS].astype(np.float64))
                 for i in range(n))
    seed = None if fields["seed"] == "none" else int(fields["seed"])
    routing = tuple(int(v) for v in fields["routing"].split())
    return ParallelModel(nets, routing, seed)


__all__ = [
    "NetworkParams", "ParallelModel", "init_kaiming", "zero_model", "predict_temperature",
    "layered_prediction", "save_checkpoint", "load_checkpoint", "checkpoint_bytes",
]
