import json

import pytest

from penaltyflow.cli import main as cli_main
from penaltyflow.config import (default_config, load_config,
                                write_example_config)
from penaltyflow.driver import run, sweep
from penaltyflow.errors import ConfigError


def test_example_config_roundtrip(tmp_path):
    path = tmp_path / "example.cfg"
    write_example_config(path)
    cfg = load_config(path)
    assert cfg == default_config()


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[params]\ndelta = 1e-3\ndeltaa = 1e-3\n")
    with pytest.raises(ConfigError, match="deltaa"):
        load_config(path)
    path.write_text("[paramz]\ndelta = 1e-3\n")
    with pytest.raises(ConfigError, match="paramz"):
        load_config(path)


def test_case_sensitive_knobs(tmp_path):
    path = tmp_path / "nn.cfg"
    path.write_text("[params]\nn = 500\nN = 128\n")
    cfg = load_config(path)
    assert cfg.n == 500.0
    assert cfg.N == 128.0


def test_initial_margin_rejected():
    with pytest.raises(ConfigError, match="margin"):
        default_config(x0=0.2, y0=0.5, radius=0.15)


def test_zero_data_run_inert():
    cfg = default_config(profile="zero", u0="zero", n=0.0, nx=32, ny=32,
                         r=0.07, radius=0.18, speed=0.0, t_end=0.01,
                         dt=1e-3)
    rep = run(cfg, outdir=False, keep_fields=True)
    assert rep.final_vel.max_speed() == 0.0
    assert rep.aggregates["E_final"] == rep.aggregates["E_first"]
    assert not rep.stopped_early


def test_default_run_outputs(tmp_path):
    cfg = default_config(t_end=0.01, snapshots=True, cadence=3, vtk=True)
    rep = run(cfg, outdir=str(tmp_path))
    assert (tmp_path / "diagnostics.csv").exists()
    assert (tmp_path / "body.csv").exists()
    assert (tmp_path / "report.json").exists()
    snaps = list(tmp_path.glob("snap_*_rho.dat"))
    assert snaps, "cadence snapshots written"
    assert list(tmp_path.glob("snap_*.vti"))
    header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
    assert header == ("t,E,dissipation,eps_term,outflow_term,"
                      "convexity_slack_min,mass_residual,energy_residual,"
                      "rigidity,pnorm_gamma,pnorm_beta,Fx,Fy,torque,margin")
    body_header = (tmp_path / "body.csv").read_text().splitlines()[0]
    assert body_header == "t,Xx,Xy,theta,Vx,Vy,w,rigidity_defect,margin"
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["steps"] == rep.steps
    assert report["aggregates"]["max_mass_residual"] <= 1e-10


def test_outdir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("PENALTYFLOW_OUTDIR", str(target))
    cfg = default_config(t_end=0.004, nx=32, ny=32, r=0.07, dt=2e-3)
    rep = run(cfg)
    assert rep.outdir == str(target)
    assert (target / "diagnostics.csv").exists()


def test_early_stop_semantics():
    cfg = default_config(nx=64, ny=64, h=0.08, r=0.04, radius=0.12,
                         x0=0.72, y0=0.5, u0="stream", n=1e3, speed=0.4,
                         t_end=1.5)
    rep = run(cfg, outdir=False)
    assert rep.stopped_early
    assert rep.final_t < 1.5
    # the violating margin belongs to the would-be next step
    assert rep.violation_margin < 0
    assert rep.violation_t > rep.final_t
    # every accepted row respects the guard
    assert all(r[8] >= 0 for r in rep.body_rows)


def test_sweep_requires_monotone_values():
    cfg = default_config(t_end=0.004, nx=32, ny=32, r=0.07)
    with pytest.raises(ConfigError):
        sweep(cfg, "n", [1e3, 1e2, 1e4])
    with pytest.raises(ConfigError):
        sweep(cfg, "mu", [0.1, 0.2])


def test_sweep_isolation_matches_single_runs():
    cfg = default_config(t_end=0.01, nx=32, ny=32, r=0.07, dt=2e-3)
    rep = sweep(cfg, "n", [1e2, 1e3])
    singles = [run(cfg.with_updates(n=v, dt=2e-3), outdir=False)
               for v in (1e2, 1e3)]
    for summary, single in zip(rep.run_summaries, singles):
        assert summary["aggregates"] == single.aggregates


def test_sweep_parallel_jobs_match_serial():
    cfg = default_config(t_end=0.008, nx=32, ny=32, r=0.07, dt=2e-3)
    serial = sweep(cfg, "n", [1e2, 1e3], jobs=1)
    parallel = sweep(cfg, "n", [1e2, 1e3], jobs=2)
    assert serial.run_summaries == parallel.run_summaries


def test_sweep_dx_changes_grid():
    cfg = default_config(t_end=0.004, nx=32, ny=32, r=0.07, dt=1e-3,
                         body_present=False)
    rep = sweep(cfg, "dx", [1 / 32, 1 / 64])
    assert [s["steps"] for s in rep.run_summaries] == [4, 4]


def test_sweep_eps_pressure_norms_bounded():
    # interior density norms stay within a factor 2 across the
    # mass-diffusion sweep
    cfg = default_config(t_end=0.04)
    rep = sweep(cfg, "eps", [4e-3, 2e-3, 1e-3])
    for key in ("pnorm_gamma_max", "pnorm_beta_max"):
        vals = rep.trend[key]
        assert max(vals) <= 2.0 * min(vals)


def test_sweep_delta_energy_trajectories_converge():
    cfg = default_config(t_end=0.04)
    rep = sweep(cfg, "delta", [1e-2, 1e-3, 1e-4])
    assert rep.trend["last_pair_max_rel_diff"] <= 0.05


def test_determinism_bitwise(tmp_path):
    cfg = default_config(t_end=0.008, nx=48, ny=48, r=0.05)
    run(cfg, outdir=str(tmp_path / "a"))
    run(cfg, outdir=str(tmp_path / "b"))
    run(cfg.with_updates(workers=4), outdir=str(tmp_path / "c"))
    ba = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    bb = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    bc = (tmp_path / "c" / "diagnostics.csv").read_bytes()
    assert ba == bb
    assert ba == bc


def test_cli_run_and_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "[grid]\nnx = 32\nny = 32\n[params]\nr = 0.07\n"
        "[time]\nt_end = 0.004\ndt = 2e-3\n"
        f"[output]\ndir = {tmp_path / 'out'}\n")
    assert cli_main(["run", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert cli_main(["sweep", "--config", str(cfg_path), "--param", "n",
                     "--values", "100,1000"]) == 0
    assert (tmp_path / "out" / "sweep_n.json").exists()
    out = capsys.readouterr().out
    assert "rigidity_mean" in out


def test_cli_example_config(tmp_path):
    path = tmp_path / "ex.cfg"
    assert cli_main(["example-config", str(path)]) == 0
    assert load_config(path) == default_config()


def test_verify_fast_green_and_fault_injection(tmp_path):
    from penaltyflow.checks import run_verify
    code, results = run_verify(fast=True,
                               report_path=str(tmp_path / "verify.json"))
    assert code == 0
    assert len(results) >= 30
    data = json.loads((tmp_path / "verify.json").read_text())
    assert data["n_failed"] == 0
    code_bad, results_bad = run_verify(fast=True,
                                       inject_fault="flip-lambda-sign")
    assert code_bad == 1
    failed = [r["name"] for r in results_bad if not r["passed"]]
    assert any("stress" in name for name in failed)


def test_run_config_is_immutable_value_object():
    cfg = default_config()
    cfg2 = cfg.with_updates(n=123.0)
    assert cfg.n != cfg2.n
    with pytest.raises(Exception):
        cfg.n = 5.0
