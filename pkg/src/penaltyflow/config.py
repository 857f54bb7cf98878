"""Run configuration: flat key = value sections, every key validated.

Unknown sections or keys are hard errors; a silently ignored typo in a
regularization knob would invalidate a whole study.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

import numpy as np

from .body import BodyState, make_disc_body, rigid_velocity_field
from .continuity import PenaltyParams
from .errors import ConfigError
from .fields import StaggeredGrid, VectorField
from .geometry import (BoundaryData, DomainSpec, build_extension,
                       resting_boundary, throughflow_boundary)

_SCHEMA = {
    "domain": {"Lx": 1.0, "Ly": 1.0, "h": 0.1},
    "grid": {"nx": 96, "ny": 96},
    "params": {"a": 1.0, "gamma": 5.0 / 3.0, "delta": 1e-3, "beta": 8.0,
               "eps": 1e-3, "n": 1e3, "r": 0.03, "N": 64.0,
               "mu": 0.1, "lam": 0.1},
    "boundary": {"profile": "throughflow", "speed": 0.2, "rho_b": 1.0,
                 "taper": 0.0},
    "initial": {"rho0": 1.0, "u0": "stream"},
    "body": {"present": True, "mobile": True, "x0": 0.5, "y0": 0.5,
             "radius": 0.15, "rho_s": 2.0, "markers": 64, "v0x": 0.0,
             "v0y": 0.0, "w0": 0.0},
    "time": {"t_end": 0.1, "cfl": 0.4, "dt": 0.0},
    "output": {"dir": "out", "cadence": 10, "snapshots": False,
               "vtk": False, "workers": 1},
}

_PROFILES = ("throughflow", "zero")
_U0_CHOICES = ("extension", "zero", "rigid", "stream")


@dataclass(frozen=True)
class RunConfig:
    Lx: float = 1.0
    Ly: float = 1.0
    h: float = 0.1
    nx: int = 96
    ny: int = 96
    a: float = 1.0
    gamma: float = 5.0 / 3.0
    delta: float = 1e-3
    beta: float = 8.0
    eps: float = 1e-3
    n: float = 1e3
    r: float = 0.03
    N: float = 64.0
    mu: float = 0.1
    lam: float = 0.1
    profile: str = "throughflow"
    speed: float = 0.2
    rho_b: float = 1.0
    taper: float = 0.0
    rho0: float = 1.0
    u0: str = "stream"
    body_present: bool = True
    body_mobile: bool = True
    x0: float = 0.5
    y0: float = 0.5
    radius: float = 0.15
    rho_s: float = 2.0
    markers: int = 64
    v0x: float = 0.0
    v0y: float = 0.0
    w0: float = 0.0
    t_end: float = 0.1
    cfl: float = 0.4
    dt: float = 0.0
    outdir: str = "out"
    cadence: int = 10
    snapshots: bool = False
    vtk: bool = False
    workers: int = 1

    def with_updates(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    # ---- constructors for the solver objects -----------------------------
    def make_domain(self) -> DomainSpec:
        return DomainSpec(self.Lx, self.Ly, self.h)

    def make_grid(self) -> StaggeredGrid:
        return StaggeredGrid(self.nx, self.ny, self.Lx / self.nx,
                             self.Ly / self.ny)

    def make_params(self) -> PenaltyParams:
        return PenaltyParams(a=self.a, gamma=self.gamma, delta=self.delta,
                             beta=self.beta, eps=self.eps, n_solid=self.n,
                             r_moll=self.r, bc_sharpness=self.N,
                             mu=self.mu, lam=self.lam, h=self.h)

    def make_boundary(self, domain, grid) -> BoundaryData:
        taper = self.taper if self.taper > 0 else None
        if self.profile == "throughflow":
            bc = throughflow_boundary(domain, grid, self.speed, self.rho_b,
                                      taper)
        elif self.profile == "zero":
            bc = resting_boundary(domain, grid, self.rho_b)
        else:
            raise ConfigError(f"unknown boundary profile '{self.profile}'")
        u_ext, report = build_extension(bc, domain, grid)
        bc.u_ext = u_ext
        return bc, report

    def make_body(self) -> BodyState | None:
        if not self.body_present:
            return None
        return make_disc_body((self.x0, self.y0), self.radius, self.r,
                              self.rho_s, (self.v0x, self.v0y), self.w0,
                              self.markers)

    def initial_density(self, grid) -> np.ndarray:
        return np.full((grid.nx, grid.ny), self.rho0)

    def initial_velocity(self, grid, bc, body) -> VectorField:
        if self.u0 == "zero":
            return VectorField.zeros(grid)
        if self.u0 == "extension":
            return bc.u_ext.copy()
        if self.u0 == "stream":
            # impulsive start: the inflow profile extended straight
            # through the domain
            if self.profile != "throughflow":
                raise ConfigError("u0 = stream needs the throughflow "
                                  "profile")
            from .geometry import corner_tapered
            domain = self.make_domain()
            taper = self.taper if self.taper > 0 else None
            amp = corner_tapered(domain, grid.yc(), domain.Ly, taper)
            u = np.tile(self.speed * amp, (grid.nx + 1, 1))
            return VectorField(grid, u, np.zeros(grid.shape("vfaces")))
        if self.u0 == "rigid":
            if body is None:
                raise ConfigError("u0 = rigid requires a body")
            from .body import body_signed_distance
            rig = rigid_velocity_field(grid, body.X, body.V, body.w)
            chi_u = body_signed_distance(body, grid, "ufaces")
            chi_v = body_signed_distance(body, grid, "vfaces")
            bu = np.clip((chi_u + self.r) / self.r, 0.0, 1.0)
            bv = np.clip((chi_v + self.r) / self.r, 0.0, 1.0)
            return VectorField(grid,
                               (1 - bu) * bc.u_ext.u + bu * rig.u,
                               (1 - bv) * bc.u_ext.v + bv * rig.v)
        raise ConfigError(f"unknown initial velocity '{self.u0}'")

    def validate(self):
        if self.u0 not in _U0_CHOICES:
            raise ConfigError(f"initial u0 must be one of {_U0_CHOICES}")
        if self.profile not in _PROFILES:
            raise ConfigError(f"profile must be one of {_PROFILES}")
        if self.t_end <= 0 or self.cfl <= 0 or self.cfl > 1:
            raise ConfigError("need t_end > 0 and cfl in (0, 1]")
        if self.cadence < 1 or self.workers < 1:
            raise ConfigError("cadence and workers must be >= 1")
        self.make_params()
        domain = self.make_domain()
        if self.body_present:
            bd = float(domain.boundary_distance(self.x0, self.y0))
            if bd - self.radius <= self.h:
                raise ConfigError(
                    f"initial body margin {bd - self.radius} must exceed "
                    f"h = {self.h}")
        return self


def _coerce(key, default, raw):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"cannot parse '{key} = {raw}'") from exc


_FIELD_BY_SECTION_KEY = {
    ("boundary", "profile"): "profile",
    ("boundary", "speed"): "speed",
    ("boundary", "rho_b"): "rho_b",
    ("boundary", "taper"): "taper",
    ("initial", "rho0"): "rho0",
    ("initial", "u0"): "u0",
    ("body", "present"): "body_present",
    ("body", "mobile"): "body_mobile",
    ("time", "t_end"): "t_end",
    ("time", "cfl"): "cfl",
    ("time", "dt"): "dt",
    ("output", "dir"): "outdir",
}


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case: N and n are different knobs
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            fname = _FIELD_BY_SECTION_KEY.get((section, key), key)
            values[fname] = _coerce(key, _SCHEMA[section][key], raw)
    return RunConfig(**values).validate()


def default_config(**overrides) -> RunConfig:
    return RunConfig(**overrides).validate()


def write_example_config(path):
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, default in keys.items():
            lines.append(f"{key} = {default}")
        lines.append("")
    with open(path, "w") as f:
        f.write("\n".join(lines))
