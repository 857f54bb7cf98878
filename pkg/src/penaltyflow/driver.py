"""The time loop (mass transport -> momentum -> body -> ledgers), the
parameter sweeps, and run/sweep reports."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .body import (body_signed_distance, body_step, collision_guard,
                   rigid_velocity_field, t0_lower_bound)
from .config import RunConfig
from .continuity import continuity_step
from .diagnostics import (fluid_mask, interior_pressure_norm, ledger_step,
                          rigidity_measure, surface_force_torque,
                          write_diagnostics_csv)
from .errors import ConfigError
from .fields import (MollifierKernel, VectorField, set_num_workers,
                     write_field, write_vti)
from .momentum import momentum_step, sound_speed_max

BODY_CSV_SCHEMA = ("t", "Xx", "Xy", "theta", "Vx", "Vy", "w",
                   "rigidity_defect", "margin")


@dataclass
class RunReport:
    final_t: float
    t_max: float
    steps: int
    stopped_early: bool
    violation_t: float | None
    violation_margin: float | None
    c_run: float
    t0_bound: float | None
    initial_clearance: float | None
    aggregates: dict
    extension: dict
    outdir: str | None = None
    rows: list = field(default=None, repr=False)
    body_rows: list = field(default=None, repr=False)
    final_rho: np.ndarray = field(default=None, repr=False)
    final_vel: VectorField = field(default=None, repr=False)
    energy_series: list = field(default=None, repr=False)

    def to_json_dict(self):
        return {
            "final_t": self.final_t,
            "t_max": self.t_max,
            "steps": self.steps,
            "stopped_early": self.stopped_early,
            "violation_t": self.violation_t,
            "violation_margin": self.violation_margin,
            "c_run": self.c_run,
            "t0_bound": self.t0_bound,
            "initial_clearance": self.initial_clearance,
            "aggregates": self.aggregates,
            "extension": self.extension,
        }


def _timestep(cfg, grid, params, vel, bc, rho, remaining):
    if cfg.dt > 0:
        return min(cfg.dt, remaining)
    vmax = max(vel.max_speed(), bc.max_trace_speed())
    # explicit pressure forces an acoustic-aware step; the advective
    # precondition of the steps then holds a fortiori
    wave = vmax + sound_speed_max(rho, params)
    dt = cfg.cfl * min(grid.dx, grid.dy) / wave
    return min(dt, remaining)


def run(cfg: RunConfig, outdir=None, keep_fields: bool = False) -> RunReport:
    """Execute one configured run; writes diagnostics.csv, body.csv and
    report.json under the output directory (unless outdir is False)."""
    cfg.validate()
    set_num_workers(cfg.workers)
    try:
        return _run_inner(cfg, outdir, keep_fields)
    finally:
        set_num_workers(1)


def _run_inner(cfg, outdir, keep_fields):
    domain = cfg.make_domain()
    grid = cfg.make_grid()
    params = cfg.make_params()
    bc, ext_report = cfg.make_boundary(domain, grid)
    body = cfg.make_body()
    kernel = None
    if body is not None:
        kernel = MollifierKernel.build(params.r_moll, grid.dx, grid.dy)
    rho = cfg.initial_density(grid)
    from .continuity import regularize_initial_density
    rho = regularize_initial_density(grid, rho, params, bc)
    vel = cfg.initial_velocity(grid, bc, body)

    if outdir is None:
        outdir = os.environ.get("PENALTYFLOW_OUTDIR", cfg.outdir)
    if outdir:
        os.makedirs(outdir, exist_ok=True)

    initial_clearance = None
    if body is not None:
        initial_clearance = float(
            domain.boundary_distance(body.X[0], body.X[1]) - body.radius)

    rows = []
    body_rows = []
    energy_series = []
    t = 0.0
    steps = 0
    c2_sum = 0.0
    stopped_early = False
    violation_t = None
    violation_margin = None

    def chi_of(b):
        if b is None:
            return np.full((grid.nx, grid.ny), -1e3)
        return body_signed_distance(b, grid)

    while t < cfg.t_end * (1.0 - 1e-12):
        dt = _timestep(cfg, grid, params, vel, bc, rho, cfg.t_end - t)
        chi = chi_of(body)
        rho_new, cinfo = continuity_step(grid, rho, vel, params, dt, bc)
        pin = None
        hold = None
        if body is not None:
            pin = rigid_velocity_field(grid, body.X, body.V, body.w)
            if not cfg.body_mobile:
                # tethered diagnostic mode: the solid core is an internal
                # Dirichlet region moving with the prescribed rigid state
                m = 2.0 * max(grid.dx, grid.dy)
                hold = (body_signed_distance(body, grid, "ufaces") >= m,
                        body_signed_distance(body, grid, "vfaces") >= m)
        vel_new, minfo = momentum_step(grid, domain, rho, rho_new, vel, chi,
                                       params, dt, bc, rigid_pin=pin,
                                       hold_mask=hold)
        guard_margin = float("nan")
        defect = 0.0
        body_new = body
        if body is not None:
            if cfg.body_mobile:
                body_new, binfo = body_step(grid, domain, body, vel_new,
                                            kernel, dt)
                c2_sum += binfo.mollified_max ** 2 * dt
                defect = binfo.rigidity_defect
            guard = collision_guard(body_new, domain, params.h,
                                    params.r_moll)
            guard_margin = guard.margin
            if not guard.ok:
                # reject the violating step: the run's reach is the last
                # accepted time, the margin below zero belongs to the
                # would-be next step
                stopped_early = True
                violation_t = t + dt
                violation_margin = guard.margin
                break

        chi_new = chi_of(body_new)
        row = ledger_step(grid, domain, bc, params, rho, vel, rho_new,
                          vel_new, chi, dt, t + dt)
        row.mass_residual = cinfo.mass_residual
        if body_new is not None:
            row.rigidity = rigidity_measure(grid, vel_new, chi_new)
            kmask = fluid_mask(grid, domain, chi_new, params)
            row.pnorm_gamma, row.pnorm_beta = interior_pressure_norm(
                grid, rho_new, kmask, params)
            force, torque = surface_force_torque(grid, domain, rho_new,
                                                 vel_new, body_new, params)
            row.Fx, row.Fy, row.torque = float(force[0]), float(force[1]), \
                torque
            row.margin = guard_margin
        rows.append(row)
        energy_series.append((t + dt, row.E))
        if body_new is not None:
            body_rows.append((t + dt, body_new.X[0], body_new.X[1],
                              body_new.theta, body_new.V[0], body_new.V[1],
                              body_new.w, defect, guard_margin))

        rho, vel, body = rho_new, vel_new, body_new
        t += dt
        steps += 1

        if outdir and cfg.snapshots and steps % cfg.cadence == 0:
            tag = f"{steps:06d}"
            write_field(os.path.join(outdir, f"snap_{tag}_rho.dat"),
                        grid, rho, "centers")
            write_field(os.path.join(outdir, f"snap_{tag}_u.dat"),
                        grid, vel.u, "ufaces")
            write_field(os.path.join(outdir, f"snap_{tag}_v.dat"),
                        grid, vel.v, "vfaces")
            if cfg.vtk:
                from .fields import faces_to_centers
                uc, vc = faces_to_centers(grid, vel.u, vel.v)
                write_vti(os.path.join(outdir, f"snap_{tag}.vti"), grid,
                          {"rho": rho, "u": uc, "v": vc,
                           "chi": chi_of(body)})

    c_run = float(np.sqrt(c2_sum))
    t0 = None
    if body is not None and initial_clearance is not None:
        if c_run > 0:
            t0 = t0_lower_bound(initial_clearance, params.h, c_run,
                                cfg.t_end)
        else:
            t0 = cfg.t_end  # nothing moved; the bound saturates the horizon

    aggregates = _aggregate(rows)
    report = RunReport(
        final_t=t, t_max=t, steps=steps, stopped_early=stopped_early,
        violation_t=violation_t, violation_margin=violation_margin,
        c_run=c_run, t0_bound=t0, initial_clearance=initial_clearance,
        aggregates=aggregates, extension=_ext_dict(ext_report),
        outdir=outdir or None,
        rows=rows, body_rows=body_rows,
        final_rho=rho.copy() if keep_fields else None,
        final_vel=vel.copy() if keep_fields else None,
        energy_series=energy_series)

    if outdir:
        write_diagnostics_csv(os.path.join(outdir, "diagnostics.csv"), rows)
        with open(os.path.join(outdir, "body.csv"), "w") as f:
            f.write(",".join(BODY_CSV_SCHEMA) + "\n")
            for r in body_rows:
                f.write(",".join(repr(float(x)) for x in r) + "\n")
        with open(os.path.join(outdir, "report.json"), "w") as f:
            json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    return report


def _ext_dict(ext_report):
    return {
        "max_speed": ext_report.max_speed,
        "w1inf": ext_report.w1inf,
        "trace_error": ext_report.trace_error,
        "div_min_inner_collar": ext_report.div_min_inner_collar,
        "max_outside_outer_collar": ext_report.max_outside_outer_collar,
        "net_flux": ext_report.net_flux,
    }


def _aggregate(rows):
    if not rows:
        return {}

    def arr(name):
        return np.array([getattr(r, name) for r in rows])

    return {
        "E_first": float(rows[0].E),
        "E_final": float(rows[-1].E),
        "max_mass_residual": float(np.max(arr("mass_residual"))),
        "mean_abs_energy_residual": float(
            np.mean(np.abs(arr("energy_residual")))),
        "max_abs_energy_residual": float(
            np.max(np.abs(arr("energy_residual")))),
        "min_dissipation": float(np.min(arr("dissipation"))),
        "min_eps_term": float(np.min(arr("eps_term"))),
        "min_outflow_term": float(np.min(arr("outflow_term"))),
        "min_convexity_term": float(np.min(arr("convexity_term"))),
        "min_convexity_slack": float(np.min(arr("convexity_slack_min"))),
        "rigidity_mean": float(np.mean(arr("rigidity"))),
        "rigidity_final": float(rows[-1].rigidity),
        "pnorm_gamma_max": float(np.max(arr("pnorm_gamma"))),
        "pnorm_beta_max": float(np.max(arr("pnorm_beta"))),
    }


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("n", "eps", "delta", "N", "dx", "dt")


@dataclass
class SweepReport:
    param: str
    values: list
    run_summaries: list
    trend: dict

    def to_json_dict(self):
        return {"param": self.param, "values": list(self.values),
                "runs": self.run_summaries, "trend": self.trend}


def _config_for(cfg: RunConfig, param: str, value) -> RunConfig:
    if param == "n":
        return cfg.with_updates(n=float(value))
    if param == "eps":
        return cfg.with_updates(eps=float(value))
    if param == "delta":
        return cfg.with_updates(delta=float(value))
    if param == "N":
        return cfg.with_updates(N=float(value))
    if param == "dx":
        nx = int(round(cfg.Lx / float(value)))
        ny = int(round(cfg.Ly / float(value)))
        return cfg.with_updates(nx=nx, ny=ny)
    if param == "dt":
        return cfg.with_updates(dt=float(value))
    raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")


def _sweep_worker(args):
    cfg, param = args
    rep = run(cfg, outdir=False, keep_fields=True)
    out = {
        "final_t": rep.final_t,
        "steps": rep.steps,
        "aggregates": rep.aggregates,
        "stopped_early": rep.stopped_early,
    }
    payload = {"summary": out,
               "final_rho": rep.final_rho,
               "energy_series": rep.energy_series}
    return payload


def sweep(cfg: RunConfig, param: str, values, jobs: int = 1) -> SweepReport:
    """Independent runs over monotone parameter values; identical seeds
    and initial data, shared fixed time step for comparability."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    values = list(values)
    diffs = np.diff(np.asarray(values, dtype=np.float64))
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ConfigError("sweep values must be strictly monotone")

    configs = [_config_for(cfg, param, v) for v in values]
    if param != "dt" and cfg.dt == 0:
        # pin one conservative step so trajectories stay comparable
        dt = min(_initial_dt(c) for c in configs)
        configs = [c.with_updates(dt=dt) for c in configs]

    tasks = [(c, param) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            payloads = list(pool.map(_sweep_worker, tasks))
    else:
        payloads = [_sweep_worker(t) for t in tasks]

    trend = _trend(param, values, payloads)
    return SweepReport(param=param, values=values,
                       run_summaries=[p["summary"] for p in payloads],
                       trend=trend)


def _initial_dt(cfg: RunConfig) -> float:
    grid = cfg.make_grid()
    params = cfg.make_params()
    rho_scale = np.array([max(cfg.rho0, cfg.rho_b)])
    wave = cfg.speed + sound_speed_max(rho_scale, params)
    return cfg.cfl * min(grid.dx, grid.dy) / wave


def _trend(param, values, payloads):
    trend = {}
    if param == "n":
        rig = [p["summary"]["aggregates"].get("rigidity_mean", 0.0)
               for p in payloads]
        trend["rigidity_mean"] = rig
        trend["strictly_decreasing"] = all(
            a > b for a, b in zip(rig[:-1], rig[1:]))
        trend["decade_ratios"] = [a / b if b > 0 else float("inf")
                                  for a, b in zip(rig[:-1], rig[1:])]
    elif param == "dt":
        res = [p["summary"]["aggregates"].get("mean_abs_energy_residual",
                                              0.0) for p in payloads]
        trend["mean_abs_energy_residual"] = res
        trend["halving_ratios"] = [a / b if b > 0 else float("inf")
                                   for a, b in zip(res[:-1], res[1:])]
    elif param == "N":
        rhos = [p["final_rho"] for p in payloads]
        cau = [float(np.mean(np.abs(a - b)))
               for a, b in zip(rhos[:-1], rhos[1:])]
        trend["cauchy_l1"] = cau  # mean |drho|; same grid, so L1 up to |O|
        trend["decreasing"] = all(a > b for a, b in zip(cau[:-1], cau[1:]))
    elif param == "eps":
        trend["pnorm_gamma_max"] = [
            p["summary"]["aggregates"].get("pnorm_gamma_max", 0.0)
            for p in payloads]
        trend["pnorm_beta_max"] = [
            p["summary"]["aggregates"].get("pnorm_beta_max", 0.0)
            for p in payloads]
    elif param == "delta":
        series = [p["energy_series"] for p in payloads]
        trend["final_E"] = [s[-1][1] if s else 0.0 for s in series]
        if len(series) >= 2 and series[-1] and series[-2]:
            n = min(len(series[-1]), len(series[-2]))
            a = np.array([e for _, e in series[-2][:n]])
            b = np.array([e for _, e in series[-1][:n]])
            denom = np.maximum(np.abs(b), 1e-300)
            trend["last_pair_max_rel_diff"] = float(
                np.max(np.abs(a - b) / denom))
    return trend


def verify(fast: bool = False, report_path=None) -> int:
    """Run the whole property battery; zero exit only when everything
    holds."""
    from .checks import run_verify
    code, _results = run_verify(fast=fast, report_path=report_path)
    return code


def write_sweep_report(path, report: SweepReport):
    with open(path, "w") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True,
                  default=float)
        f.write("\n")
