"""Model constants, unit conversions and parameter presets.

All internal arithmetic uses natural units (hbar = c = 1) with the tachyon
mass as the scale, so that a preset has ``mu = a = 1``.  Conversion to
seconds, centimetres and electron-volts happens only at I/O boundaries.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from scipy import constants as sc

__all__ = [
    "ModelParams",
    "UnitSystem",
    "HBAR_C_EV_CM",
    "C_CM_PER_S",
    "NUCLEON_MASS_EV",
    "preset_grw",
    "gamma_from_kappa",
    "toy_params",
    "from_physical",
    "to_physical",
    "load_config",
    "params_from_config",
    "CONFIG_KEYS",
]

C_CM_PER_S = sc.c * 100.0
HBAR_C_EV_CM = sc.hbar * sc.c / sc.e * 100.0
NUCLEON_MASS_EV = sc.m_p * sc.c**2 / sc.e

# GRW choices: collapse rate 1e-16 per second, localization length 1e-5 cm.
GRW_LAMBDA_PER_SEC = 1e-16
GRW_A_CM = 1e-5

_MU_A_RTOL = 1e-12


@dataclass(frozen=True)
class UnitSystem:
    """Physical meaning of one internal unit, with hbar = c = 1.

    Only the length unit is free; time and energy follow from it.
    """

    length_cm: float

    def __post_init__(self):
        if not (self.length_cm > 0 and math.isfinite(self.length_cm)):
            raise ValueError(f"length unit must be positive, got {self.length_cm}")

    @property
    def time_s(self) -> float:
        return self.length_cm / C_CM_PER_S

    @property
    def energy_ev(self) -> float:
        return HBAR_C_EV_CM / self.length_cm


@dataclass(frozen=True)
class ModelParams:
    """Validated, immutable model constants in natural units.

    Attributes:
        lam: collapse rate (1/time).
        a: localization length.
        mu: tachyon mass, always ``1/a``.
        gamma: relativistic coupling.
        M: particle mass.
        mass_ratio: M_i / M_N for the mass-proportional coupling.
        units: physical meaning of the internal unit, if known.
    """

    lam: float
    a: float
    mu: float
    gamma: float
    M: float
    mass_ratio: float = 1.0
    units: UnitSystem | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("lam", "a", "mu", "M"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        for name in ("gamma", "mass_ratio"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if abs(self.mu * self.a - 1.0) > _MU_A_RTOL:
            raise ValueError(f"mu*a must equal 1, got {self.mu * self.a!r}")

    @property
    def gamma_tied(self) -> bool:
        """Whether gamma = lam/mu holds (the rate/coupling identification)."""
        return math.isclose(self.gamma, self.lam / self.mu, rel_tol=1e-9)

    @property
    def M_over_mu(self) -> float:
        return self.M / self.mu

    def replace(self, **changes) -> "ModelParams":
        """Copy with some fields changed; ``a`` follows ``mu`` and vice versa."""
        if "mu" in changes and "a" not in changes:
            changes["a"] = 1.0 / changes["mu"]
        elif "a" in changes and "mu" not in changes:
            changes["mu"] = 1.0 / changes["a"]
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("lam", "a", "mu", "gamma", "M", "mass_ratio")}
        d["gamma_tied"] = self.gamma_tied
        if self.units is not None:
            d["length_unit_cm"] = self.units.length_cm
        return d


def from_physical(
    lambda_per_sec: float,
    a_cm: float,
    M_eV: float = NUCLEON_MASS_EV,
    gamma: float | None = None,
    mass_ratio: float = 1.0,
) -> ModelParams:
    """Build params from physical inputs, choosing ``a`` as the length unit.

    When ``gamma`` is omitted it is tied to ``lam/mu``.
    """
    if not (a_cm > 0 and lambda_per_sec > 0 and M_eV > 0):
        raise ValueError("lambda_per_sec, a_cm and M_eV must be positive")
    units = UnitSystem(length_cm=a_cm)
    lam = lambda_per_sec * units.time_s
    M = M_eV / units.energy_ev
    if gamma is None:
        gamma = lam
    return ModelParams(lam=lam, a=1.0, mu=1.0, gamma=gamma, M=M,
                       mass_ratio=mass_ratio, units=units)


def to_physical(params: ModelParams) -> dict:
    """Inverse of :func:`from_physical`; requires a unit system."""
    if params.units is None:
        raise ValueError("params carry no unit system")
    u = params.units
    return {
        "lambda_per_sec": params.lam / u.time_s,
        "a_cm": params.a * u.length_cm,
        "M_eV": params.M * u.energy_ev,
        "mu_eV": params.mu * u.energy_ev,
        "gamma": params.gamma,
        "mass_ratio": params.mass_ratio,
    }


def preset_grw() -> ModelParams:
    """GRW collapse constants for a nucleon, in units where mu = 1.

    Only the order of magnitude of gamma (about 1e-32) is meaningful.
    """
    return from_physical(GRW_LAMBDA_PER_SEC, GRW_A_CM, NUCLEON_MASS_EV)


def gamma_from_kappa(kappa: float, M_N_kg: float = sc.m_p) -> float:
    """Return kappa * G * M_N**2 with G in natural units (G M^2 / hbar c)."""
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    return kappa * sc.G * M_N_kg**2 / (sc.hbar * sc.c)


def toy_params(mass_ratio_M_over_mu: float, lam: float = 1.0) -> ModelParams:
    """Desk-scale parameters: mu = 1, M = ratio, order-unity rates."""
    if not mass_ratio_M_over_mu > 0:
        raise ValueError(f"M/mu must be positive, got {mass_ratio_M_over_mu}")
    return ModelParams(lam=lam, a=1.0, mu=1.0, gamma=lam, M=float(mass_ratio_M_over_mu))


CONFIG_KEYS = ("lambda_per_sec", "a_cm", "gamma", "M_over_mu", "mass_ratio", "kappa")


def load_config(path: str | Path) -> dict:
    """Read a flat ``key=value`` file.  ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = float(value)
    return out


def params_from_config(cfg: dict) -> ModelParams:
    """Resolve a config mapping into params.

    Physical keys (``lambda_per_sec``, ``a_cm``) select physical units;
    otherwise a toy set is built from ``M_over_mu`` (default 10).  ``gamma``
    and ``kappa`` are mutually exclusive overrides of the coupling.
    """
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "gamma" in cfg and "kappa" in cfg:
        raise ValueError("give gamma or kappa, not both")
    if "lambda_per_sec" in cfg or "a_cm" in cfg:
        a_cm = cfg.get("a_cm", GRW_A_CM)
        M_eV = NUCLEON_MASS_EV
        if "M_over_mu" in cfg:
            M_eV = cfg["M_over_mu"] * HBAR_C_EV_CM / a_cm
        p = from_physical(cfg.get("lambda_per_sec", GRW_LAMBDA_PER_SEC), a_cm, M_eV)
    else:
        p = toy_params(cfg.get("M_over_mu", 10.0))
    changes = {}
    if "gamma" in cfg:
        changes["gamma"] = cfg["gamma"]
    if "kappa" in cfg:
        changes["gamma"] = gamma_from_kappa(cfg["kappa"])
    if "mass_ratio" in cfg:
        changes["mass_ratio"] = cfg["mass_ratio"]
    if changes:
        p = p.replace(**changes)
    if not p.gamma_tied:
        warnings.warn("gamma differs from lam/mu for these parameters", stacklevel=2)
    return p
