"""Scenario orchestration: runs, sweeps, check dispatch, artifact output.

The eps sweep fans out over a bounded worker pool; every run is itself
deterministic, and a single collector writes the output files in sorted
order, so reports are byte-identical across repeats and thread counts.
Wall-clock timings never enter the canonical CSV/JSON artifacts; they are
segregated into a sidecar file.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone

from . import verify
from .errors import ConfigError
from .geometry import prepare_initial_data
from .potential import STANDARD_WELL
from .scenarios import ScenarioConfig
from .solver import evolve
from .fields import Grid, dump_phase_values

CSV_HEADER = "scenario,epsilon,check,value,target,tolerance,sided,pass,seconds"


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_to_csv_text(report):
    lines = [CSV_HEADER]
    for r in report.sorted_rows():
        lines.append(",".join([
            r.scenario, _fmt(r.epsilon), r.check, _fmt(r.value),
            _fmt(r.target), _fmt(r.tolerance), r.sided,
            "true" if r.passed else "false",
            "0.0",  # wall time lives in the timing sidecar
        ]))
    return "\n".join(lines) + "\n"


def write_report(outdir, report):
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "report.csv")
    with open(csv_path, "w") as fh:
        fh.write(report_to_csv_text(report))
    rows = [{
        "scenario": r.scenario, "epsilon": r.epsilon, "check": r.check,
        "value": r.value, "target": r.target, "tolerance": r.tolerance,
        "sided": r.sided, "pass": r.passed,
    } for r in report.sorted_rows()]
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump({"meta": report.meta, "rows": rows}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    timing = {f"{r.scenario}/{r.check}/{_fmt(r.epsilon)}": r.seconds
              for r in report.sorted_rows()}
    with open(os.path.join(outdir, "report_timing.json"), "w") as fh:
        json.dump({"written_at": datetime.now(timezone.utc).isoformat(),
                   "seconds": timing}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path


def write_energy_log(outdir, scenario, eps, traj):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"energy_{scenario}_eps{_fmt(eps)}.csv")
    with open(path, "w") as fh:
        fh.write("time,normalized_energy,phase_volume\n")
        for t, e, v in zip(traj.times, traj.energies, traj.volumes):
            fh.write(f"{_fmt(t)},{_fmt(e)},{_fmt(v)}\n")
    return path


def run_one(cfg: ScenarioConfig, idx, well=STANDARD_WELL, dump_dir=None):
    """Prepare and evolve the run for eps index ``idx`` of the scenario."""
    eps = cfg.epsilons[idx]
    grid = cfg.grid_for(idx)
    pf0 = prepare_initial_data(cfg.shape(), eps, grid, well)
    sink = None
    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)
        counter = [0]

        def sink(snap):
            name = f"{cfg.name}_eps{_fmt(eps)}_{counter[0]:05d}.acf1"
            dump_phase_values(os.path.join(dump_dir, name), grid,
                              snap.values, snap.eps, snap.time)
            counter[0] += 1

    traj = evolve(pf0, cfg.t_end, cfg.snapshot_every, safety=cfg.safety,
                  well=well, meta={"scenario": cfg.name}, on_snapshot=sink)
    return traj


def run_sweep(cfg: ScenarioConfig, threads=1, well=STANDARD_WELL,
              dump_dir=None):
    """All eps runs of a scenario; returns {eps: trajectory}."""
    indices = list(range(len(cfg.epsilons)))
    if threads <= 1 or len(indices) <= 1:
        trajs = [run_one(cfg, i, well, dump_dir) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(lambda i: run_one(cfg, i, well, dump_dir),
                                  indices))
    return {cfg.epsilons[i]: trajs[i] for i in indices}


def _default_window(cfg, params):
    t1 = params.get("t1", 0.2 * cfg.t_end)
    t2 = params.get("t2", cfg.t_end)
    return float(t1), float(t2)


def _check_subsweep(cfg, params, t_end, snapshot_every, well):
    """Dedicated refinement schedule for a sweep-level check.

    The scenario's matched eps/h sweep keeps the relative discretization
    error constant, which floors eps-decay observables; these schedules
    grow eps/h as eps shrinks so both error families decay.
    """
    eps_list = [float(e) for e in params["epsilons"]]
    res_list = [int(r) for r in params["resolutions"]]
    if len(res_list) != len(eps_list):
        raise ConfigError("check-level sweep needs one resolution per eps")
    extent = float(params.get("extent", cfg.extent))
    out = {}
    for eps, res in zip(eps_list, res_list):
        grid = Grid.uniform(cfg.dim, extent, res, bc=cfg.boundary)
        pf0 = prepare_initial_data(cfg.shape(), eps, grid, well)
        out[eps] = evolve(pf0, t_end, snapshot_every, safety=cfg.safety,
                          well=well, meta={"scenario": cfg.name, "sub": True})
    return out


def _timed(thunk):
    started = time.perf_counter()
    out = thunk()
    elapsed = time.perf_counter() - started
    rows = out if isinstance(out, list) else [out]
    return [replace(r, seconds=elapsed / len(rows)) for r in rows]


def run_checks(cfg: ScenarioConfig, trajs_by_eps, well=STANDARD_WELL):
    """Dispatch every configured check; returns a VerificationReport."""
    rows = []
    scen = cfg.name
    shape = cfg.shape() if cfg.shape_json is not None else None
    flow = cfg.reference_flow
    center = tuple(cfg.shape_json.get("center", (0.0,) * cfg.dim)) \
        if cfg.shape_json else (0.0,) * cfg.dim
    def sweep_sorted():
        return sorted(trajs_by_eps.items(), reverse=True)

    for spec in cfg.checks:
        name, p = spec.name, spec.params
        if name == "energy_dissipation":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.energy_dissipation_check(
                    t, well, scen, slack=p.get("slack")))
        elif name == "discrepancy_ratio":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.discrepancy_ratio_check(
                    t, well, scen, tol=p.get("tolerance")))
        elif name == "profile_fidelity":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.profile_fidelity_check(
                    t, shape, well, scen, tol=p.get("tolerance")))
        elif name == "radius_law":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.radius_law_check(
                    t, flow, scen, tol=p.get("tolerance")))
        elif name == "brakke":
            t1, t2 = _default_window(cfg, p)
            for eps, traj in sweep_sorted():
                for j, test in enumerate(cfg.tests):
                    rows += _timed(lambda t=traj, ts=test, j=j: verify.brakke_residual(
                        t, ts, t1, t2, well, scen,
                        tol_factor=p.get("tolerance"),
                        label=f"{j}-{ts.kind}"))
        elif name == "bv":
            t1, t2 = _default_window(cfg, p)
            for eps, traj in sweep_sorted():
                for j, test in enumerate(cfg.tests):
                    rows += _timed(lambda t=traj, ts=test, j=j: verify.bv_residual(
                        t, ts, t1, t2, well, scen, tol=p.get("tolerance"),
                        label=f"{j}-{ts.kind}"))
        elif name == "l2_flow":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.l2_flow_check(
                    t, list(cfg.tests), well, scen, slack=p.get("slack")))
        elif name == "l2_amplitude":
            test = cfg.tests[int(p.get("test_index", 0))]
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.l2_amplitude_check(
                    t, test, well, scen, tol=p.get("tolerance")))
        elif name == "abscont_identity":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.abscont_identity_check(
                    t, well, scen, tol=p.get("tolerance")))
        elif name == "abscont_blocks":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.abscont_blocks_check(
                    t, well, scen, delta=p.get("delta"), eta=p.get("eta")))
        elif name == "density_ratio":
            for eps, traj in sweep_sorted():
                rows += _timed(lambda t=traj: verify.density_ratio_bound_check(
                    t, center, float(p.get("t_min", 0.0)),
                    float(p.get("r_max", 0.2)), well, scen, cap=p.get("cap")))
        elif name == "discrepancy_decay":
            sweep = trajs_by_eps
            if "epsilons" in p:
                sweep = _check_subsweep(
                    cfg, p, float(p.get("t_end", cfg.t_end)),
                    float(p.get("snapshot_every", cfg.snapshot_every)), well)
            rows += _timed(lambda: verify.discrepancy_decay_rows(
                sweep, well, scen))
        elif name == "bv_decay":
            test = cfg.tests[int(p.get("test_index", 0))]
            rows += _timed(lambda: verify.bv_decay_row(
                trajs_by_eps, test, float(p.get("t_min", 0.2 * cfg.t_end)),
                float(p.get("window", 0.4 * cfg.t_end)), well, scen))
        elif name == "mfp_lsc":
            t_ref = float(p.get("time", 0.6 * cfg.t_end))
            sweep = trajs_by_eps
            if "epsilons" in p:
                sweep = _check_subsweep(cfg, p, t_ref, t_ref / 4.0, well)
            suite = [cfg.tests[i] for i in
                     p.get("test_indices", range(len(cfg.tests)))]
            rows += _timed(lambda: verify.mfp_lsc_rows(
                sweep, flow, suite, t_ref, well, scen,
                slack=p.get("slack")))
        elif name == "geometric_identities":
            rows += _timed(lambda: verify.geometric_identity_rows(
                flow, scen, times=p.get("times")))
        elif name == "bv_counterexample":
            test = cfg.tests[int(p.get("test_index", 0))]
            rows += _timed(lambda: verify.bv_counterexample_row(
                flow, test, float(p["t1"]), float(p["t2"]), scen,
                tol=p.get("tolerance")))
        elif name == "abscont_counterexample":
            rows += _timed(lambda: verify.abscont_counterexample_row(
                flow, cfg.extent,
                int(p.get("resolution", cfg.resolutions[0] if cfg.resolutions else 256)),
                float(p["t1"]), float(p["t2"]), scen,
                n_windows=int(p.get("windows", 4)),
                delta=p.get("delta"), eta=p.get("eta")))
        else:  # unreachable: names validated at load time
            raise ConfigError(f"unknown check {name!r}")
    meta = {
        "scenario": cfg.name,
        "epsilons": list(cfg.epsilons),
        "resolutions": list(cfg.resolutions),
        "extent": cfg.extent,
        "boundary": cfg.boundary,
        "scheme": "euler",
        "safety": cfg.safety,
        "artifact_caps": {
            "l2_cap": "2 (mu0 + dissipation) (1 + slack); computable stand-in",
            "density_ratio_cap": verify.DEFAULTS["density_ratio_cap"],
            "abscont_thresholds": [verify.DEFAULTS["abscont_delta"],
                                   verify.DEFAULTS["abscont_eta"]],
        },
        "defaults": verify.DEFAULTS,
    }
    return verify.VerificationReport(rows=rows, meta=meta)


def verify_scenario(cfg: ScenarioConfig, threads=1, well=STANDARD_WELL,
                    outdir=None, dump_fields=False):
    """Full pipeline: sweep (if any), checks, artifacts on disk."""
    outdir = outdir or cfg.output
    dump_dir = os.path.join(outdir, "fields") if (dump_fields or cfg.dump_fields) else None
    trajs = {}
    if not cfg.analytic_only:
        trajs = run_sweep(cfg, threads=threads, well=well, dump_dir=dump_dir)
    report = run_checks(cfg, trajs, well)
    csv_path = write_report(outdir, report)
    for eps in sorted(trajs, reverse=True):
        write_energy_log(outdir, cfg.name, eps, trajs[eps])
    if cfg.reference_flow is not None:
        with open(os.path.join(outdir, "scenario_meta.json"), "w") as fh:
            json.dump({
                "name": cfg.name, "dimension": cfg.dim,
                "reference_flow": {
                    "kind": cfg.reference_flow.kind,
                    "radius": cfg.reference_flow.r0,
                    "t_cut": cfg.reference_flow.t_cut,
                }}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report, csv_path
