"""Three-layer fabric heat-conduction problem: configuration, unit scaling and residuals.

Every residual used in training is affine in the network's augmented outputs
``(T', dT'/dx', dT'/dt, d2T'/dx'2)``, so each one is represented by an
:class:`AffineResidual` holding its five coefficients.  Unit scaling enters
only through those coefficients: with the default :class:`ScaleConfig`
(``x = x' 1e-3``, ``T = T' 1e3``) the temperature, gradient and curvature
terms carry factors ``1e3``, ``1e6`` and ``1e9``; with ``ScaleConfig.raw()``
the residuals are the plain SI expressions.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LAYER_IDS = ("shl", "msr", "lin")
LAYER_NAMES = {"shl": "outer shell", "msr": "moisture barrier", "lin": "thermal liner"}


@dataclass(frozen=True)
class FabricLayer:
    density: float  # kg/m^3
    specific_heat: float  # J/(kg K)
    conductivity: float  # W/(m K)
    thickness: float  # m

    def __post_init__(self):
        for name in ("density", "specific_heat", "conductivity", "thickness"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"FabricLayer.{name} must be finite and > 0, got {v!r}")

    def apparent_heat_capacity(self) -> float:
        """Volumetric heat capacity rho*c in J/(m^3 K)."""
        return self.density * self.specific_heat

    @property
    def diffusivity(self) -> float:
        return self.conductivity / self.apparent_heat_capacity()


@dataclass(frozen=True)
class ScaleConfig:
    """Decimal unit exponents: ``x = x' * 10**x_exp`` and ``T = T' * 10**T_exp``."""

    x_exp: int = -3
    T_exp: int = 3

    @classmethod
    def raw(cls) -> "ScaleConfig":
        return cls(0, 0)

    @property
    def x_factor(self) -> float:
        return 10.0 ** self.x_exp

    @property
    def T_factor(self) -> float:
        return 10.0 ** self.T_exp

    # factors multiplying T', dT'/dx', d2T'/dx'2 to give T, dT/dx, d2T/dx2
    @property
    def value_factor(self) -> float:
        return 10.0 ** self.T_exp

    @property
    def grad_factor(self) -> float:
        return 10.0 ** (self.T_exp - self.x_exp)

    @property
    def lap_factor(self) -> float:
        return 10.0 ** (self.T_exp - 2 * self.x_exp)

    def scale_coordinate(self, x):
        """Physical position (m) to network units."""
        return np.asarray(x) * 10.0 ** (-self.x_exp)

    def unscale_coordinate(self, x_scaled):
        return np.asarray(x_scaled) * self.x_factor

    def scale_temperature(self, T):
        return np.asarray(T) / self.T_factor

    def unscale_prediction(self, T_scaled):
        """Network temperature to kelvin."""
        return np.asarray(T_scaled) * self.T_factor


FBM = ScaleConfig()
RAW = ScaleConfig.raw()


def scale_coordinate(x, scale: ScaleConfig = FBM):
    return scale.scale_coordinate(x)


def unscale_prediction(T_scaled, scale: ScaleConfig = FBM):
    return scale.unscale_prediction(T_scaled)


@dataclass(frozen=True)
class EnvironmentConfig:
    T0: float = 310.15
    Tg: float = 2000.0
    h_g: float = 40.0
    h_air: float = 9.496
    horizon: float = 60.0
    layers: tuple = field(default_factory=lambda: (
        FabricLayer(300.0, 1377.0, 0.082, 0.6e-3),
        FabricLayer(862.0, 2100.0, 0.37, 0.85e-3),
        FabricLayer(74.2, 1726.0, 0.045, 3.6e-3),
    ))
    # thicknesses in mm as configured; kept so scaled abscissae are exact decimal sums
    thickness_mm: tuple = (0.6, 0.85, 3.6)

    def __post_init__(self):
        if len(self.layers) != 3:
            raise ValueError("exactly three fabric layers are required")
        # Tg == T0 is allowed: it is the equilibrium check case
        if not self.Tg >= self.T0 > 0:
            raise ValueError(f"need Tg >= T0 > 0, got T0={self.T0}, Tg={self.Tg}")
        if not (self.h_g > 0 and self.h_air > 0):
            raise ValueError("convective coefficients must be > 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        for layer, mm in zip(self.layers, self.thickness_mm):
            if not np.isclose(layer.thickness, mm * 1e-3, rtol=1e-12, atol=0):
                raise ValueError("thickness_mm disagrees with layer thickness")

    @classmethod
    def from_mm(cls, layers_mm, **kw) -> "EnvironmentConfig":
        """Build from ``(density, specific_heat, conductivity, thickness_mm)`` rows."""
        layers = tuple(FabricLayer(d, c, k, mm / 1000.0) for d, c, k, mm in layers_mm)
        return cls(layers=layers, thickness_mm=tuple(float(r[3]) for r in layers_mm), **kw)

    def layer(self, layer_id: str) -> FabricLayer:
        return self.layers[LAYER_IDS.index(layer_id)]

    @property
    def L_fab(self) -> float:
        return sum(l.thickness for l in self.layers)

    @property
    def L_shl(self) -> float:
        return self.layers[0].thickness

    @property
    def L_msr(self) -> float:
        return self.layers[0].thickness + self.layers[1].thickness

    def abscissae(self, scale: ScaleConfig = FBM) -> tuple[float, float, float, float]:
        """Outer and interface positions ``(0, L_shl, L_msr, L_fab)`` in network units."""
        if scale.x_exp == -3:
            a, b, c = self.thickness_mm
            return 0.0, a, a + b, a + b + c
        return 0.0, *(float(scale.scale_coordinate(v)) for v in (self.L_shl, self.L_msr, self.L_fab))

    def layer_span(self, layer_id: str, scale: ScaleConfig = FBM) -> tuple[float, float]:
        xs = self.abscissae(scale)
        i = LAYER_IDS.index(layer_id)
        return xs[i], xs[i + 1]

    def with_(self, **changes) -> "EnvironmentConfig":
        d = {f: getattr(self, f) for f in ("T0", "Tg", "h_g", "h_air", "horizon", "layers",
                                           "thickness_mm")}
        d.update(changes)
        return EnvironmentConfig(**d)

    def to_dict(self) -> dict:
        return {
            "T0_K": self.T0, "Tg_K": self.Tg, "h_g": self.h_g, "h_air": self.h_air,
            "horizon_s": self.horizon,
            "layers": {
                lid: {"density": l.density, "specific_heat": l.specific_heat,
                      "conductivity": l.conductivity, "thickness_mm": mm}
                for lid, l, mm in zip(LAYER_IDS, self.layers, self.thickness_mm)
            },
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_SEGMENTS = (50, 70, 200, 300)


def load_config(path) -> tuple[EnvironmentConfig, tuple[int, int, int, int]]:
    """Read an INI-style problem file; returns the environment and grid segments.

    Sections ``[environment]`` (T0_K, Tg_K, h_g, h_air, horizon_s), ``[shl]``,
    ``[msr]``, ``[lin]`` (density, specific_heat, conductivity, thickness_mm) and
    an optional ``[grid]`` with ``segments = n_shl, n_msr, n_lin, n_t``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read(path)
    try:
        env = cp["environment"]
        rows = []
        for lid in LAYER_IDS:
            sec = cp[lid]
            rows.append(tuple(float(sec[k]) for k in
                              ("density", "specific_heat", "conductivity", "thickness_mm")))
        cfg = EnvironmentConfig.from_mm(
            rows, T0=float(env["T0_K"]), Tg=float(env["Tg_K"]), h_g=float(env["h_g"]),
            h_air=float(env["h_air"]), horizon=float(env["horizon_s"]),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing section or key {exc}") from None
    segments = DEFAULT_SEGMENTS
    if cp.has_section("grid") and "segments" in cp["grid"]:
        segments = tuple(int(s) for s in cp["grid"]["segments"].split(","))
        if len(segments) != 4:
            raise ValueError(f"{path}: segments needs 4 integers")
    return cfg, segments


def dump_config(env: EnvironmentConfig, segments=DEFAULT_SEGMENTS) -> str:
    lines = ["[environment]", f"T0_K = {env.T0!r}", f"Tg_K = {env.Tg!r}", f"h_g = {env.h_g!r}",
             f"h_air = {env.h_air!r}", f"horizon_s = {env.horizon!r}", ""]
    for lid, l, mm in zip(LAYER_IDS, env.layers, env.thickness_mm):
        lines += [f"[{lid}]", f"density = {l.density!r}", f"specific_heat = {l.specific_heat!r}",
                  f"conductivity = {l.conductivity!r}", f"thickness_mm = {mm!r}", ""]
    lines += ["[grid]", "segments = " + ", ".join(str(s) for s in segments), ""]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# residual terms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineResidual:
    """``r = c0 + c_value*T' + c_dx*dT'/dx' + c_dt*dT'/dt + c_dxx*d2T'/dx'2``."""

    c0: float = 0.0
    c_value: float = 0.0
    c_dx: float = 0.0
    c_dt: float = 0.0
    c_dxx: float = 0.0

    @property
    def coeffs(self) -> tuple[float, float, float, float, float]:
        return (self.c0, self.c_value, self.c_dx, self.c_dt, self.c_dxx)

    def __call__(self, d):
        return (self.c0 + self.c_value * d.value + self.c_dx * d.d_dx + self.c_dt * d.d_dt
                + self.c_dxx * d.d2_dx2)

    def scaled(self, k: float) -> "AffineResidual":
        return AffineResidual(*(k * c for c in self.coeffs))


C1, C2, C3 = "C1", "C2", "C3"


@dataclass(frozen=True)
class ResidualTerm:
    id: str
    cls: str
    domain: str  # CollocationSet partition name
    layers: tuple  # sub-domain layer ids whose networks enter the residual


RESIDUAL_TERMS = (
    ResidualTerm("r_shl", C3, "interior_shl", ("shl",)),
    ResidualTerm("r_msr", C3, "interior_msr", ("msr",)),
    ResidualTerm("r_lin", C3, "interior_lin", ("lin",)),
    ResidualTerm("o_shl", C1, "initial_shl", ("shl",)),
    ResidualTerm("o_msr", C1, "initial_msr", ("msr",)),
    ResidualTerm("o_lin", C1, "initial_lin", ("lin",)),
    ResidualTerm("b_shl", C2, "outer_left", ("shl",)),
    ResidualTerm("b_lin", C2, "outer_right", ("lin",)),
    ResidualTerm("b1_shl_msr", C1, "interface_shl_msr", ("shl", "msr")),
    ResidualTerm("b2_shl_msr", C2, "interface_shl_msr", ("shl", "msr")),
    ResidualTerm("b1_msr_lin", C1, "interface_msr_lin", ("msr", "lin")),
    ResidualTerm("b2_msr_lin", C2, "interface_msr_lin", ("msr", "lin")),
)
TERM_IDS = tuple(t.id for t in RESIDUAL_TERMS)
TERMS = {t.id: t for t in RESIDUAL_TERMS}
CLASS_MEMBERS = {
    c: tuple(t.id for t in RESIDUAL_TERMS if t.cls == c) for c in (C1, C2, C3)
}


def interior_residual(layer: FabricLayer, scale: ScaleConfig = FBM) -> AffineResidual:
    return AffineResidual(c_dt=layer.apparent_heat_capacity() * scale.value_factor,
                          c_dxx=-layer.conductivity * scale.lap_factor)


def initial_residual(env: EnvironmentConfig, scale: ScaleConfig = FBM) -> AffineResidual:
    T0s = float(scale.scale_temperature(env.T0))
    return AffineResidual(c0=-T0s * scale.value_factor, c_value=scale.value_factor)


def outer_left_residual(env: EnvironmentConfig, scale: ScaleConfig = FBM) -> AffineResidual:
    Tgs = float(scale.scale_temperature(env.Tg))
    return AffineResidual(c0=-env.h_g * Tgs * scale.value_factor,
                          c_value=env.h_g * scale.value_factor,
                          c_dx=-env.layers[0].conductivity * scale.grad_factor)


def outer_right_residual(env: EnvironmentConfig, scale: ScaleConfig = FBM) -> AffineResidual:
    T0s = float(scale.scale_temperature(env.T0))
    return AffineResidual(c0=env.h_air * T0s * scale.value_factor,
                          c_value=-env.h_air * scale.value_factor,
                          c_dx=-env.layers[2].conductivity * scale.grad_factor)


# Pointwise evaluators.  They take already-computed DualStates / predictions.

def residual_interior(layer: FabricLayer, d, scale: ScaleConfig = FBM):
    """C^A dT/dt - k d2T/dx2 from network-unit derivatives."""
    return layer.apparent_heat_capacity() * d.d_dt * scale.value_factor \
        - layer.conductivity * d.d2_dx2 * scale.lap_factor


def residual_initial(layer_pred, T0_scaled, scale: ScaleConfig = FBM):
    return (np.asarray(layer_pred) - T0_scaled) * scale.value_factor


def residual_outer_left(d, env: EnvironmentConfig, scale: ScaleConfig = FBM):
    Tgs = scale.scale_temperature(env.Tg)
    return -env.layers[0].conductivity * d.d_dx * scale.grad_factor \
        - env.h_g * (Tgs - d.value) * scale.value_factor


def residual_outer_right(d, env: EnvironmentConfig, scale: ScaleConfig = FBM):
    T0s = scale.scale_temperature(env.T0)
    return -env.layers[2].conductivity * d.d_dx * scale.grad_factor \
        - env.h_air * (d.value - T0s) * scale.value_factor


def residual_interface_temp(left_pred, right_pred, scale: ScaleConfig = FBM):
    return (np.asarray(left_pred) - np.asarray(right_pred)) * scale.value_factor


def residual_interface_flux(k_left, d_left, k_right, d_right, scale: ScaleConfig = FBM):
    return (k_left * d_left.d_dx - k_right * d_right.d_dx) * scale.grad_factor


def single_network_residual(term_id: str, env: EnvironmentConfig,
                            scale: ScaleConfig = FBM) -> AffineResidual:
    """Affine form of every term that involves one sub-network."""
    t = TERMS[term_id]
    if t.cls == C3:
        return interior_residual(env.layer(t.layers[0]), scale)
    if term_id.startswith("o_"):
        return initial_residual(env, scale)
    if term_id == "b_shl":
        return outer_left_residual(env, scale)
    if term_id == "b_lin":
        return outer_right_residual(env, scale)
    raise KeyError(f"{term_id} couples two sub-networks")
