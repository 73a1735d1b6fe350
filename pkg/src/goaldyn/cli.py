"""Command-line front end: ``goaldyn <command> --scenario FILE [--seed N] [--out DIR] [--set k=v]``.

Each command writes tidy CSV tables plus ``summary.json`` into the output
directory. Files contain no timestamps, so a rerun with the same scenario
and seed reproduces them byte for byte. Exit codes: 0 success, 2 invalid
input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidSpec, NumericalError, ScenarioInvalid
from .scenario import Scenario, build_model, load_scenario, shipped_scenarios

COMMANDS = ("simulate", "objective", "weight", "kernel", "game", "lefschetz", "gff", "gauge")
OUT_ENV = "GOALDYN_OUT"
RAIN_PHASE = 7919


@dataclass
class RunReport:
    command: str
    scenario_hash: str
    seed: int
    headline: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # name -> (header, rows)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0

    def summary(self) -> dict:
        return {
            "command": self.command,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "outputs": list(self.outputs),
            "headline": self.headline,
        }


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_cell(x) for x in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def emit_plotdata(report: RunReport, out_dir) -> list[str]:
    """Write every series of the report as ``<name>.csv``; returns file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, (header, rows) in report.series.items():
        write_csv(out / f"{name}.csv", header, rows)
        names.append(f"{name}.csv")
    report.outputs = names
    return names


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _driver(sc: Scenario, model, dt=None):
    from .simulate import BrownianDriver

    return BrownianDriver(sc.seed, model.noise_dim, dt or sc.simulation.dt)


def _rain(sc: Scenario):
    from .simulate import BrownianDriver, StoppingConfig

    st = sc.stopping
    return StoppingConfig(st.b, st.epsilon_resume, BrownianDriver(sc.seed, 1, st.dt, phase=RAIN_PHASE))


def cmd_simulate(sc: Scenario) -> RunReport:
    from .simulate import euler_maruyama, simulate_match

    model = build_model(sc)
    sim = sc.simulation
    path = euler_maruyama(model, sim.z0, sim.horizon, _driver(sc, model), sim.n_paths)
    d = model.dim
    zcols = [f"z{k}" for k in range(d)]
    rows = [
        [p, t, *path.states[p, k]]
        for p in range(min(sim.export_paths, path.n_paths))
        for k, t in enumerate(path.times)
    ]
    mean = path.states.mean(axis=0)
    std = path.states.std(axis=0, ddof=1)
    summary_rows = [[t, *mean[k], *std[k]] for k, t in enumerate(path.times)]
    match = simulate_match(model, sim.z0, _rain(sc), sim.horizon, _driver(sc, model))
    marks = [
        [t, *match.states[0, k], "post" if match.post_rain_from is not None and k >= match.post_rain_from else "pre"]
        for k, t in enumerate(match.times)
    ]
    rep = RunReport("simulate", sc.digest(), sc.seed)
    rep.series = {
        "paths": (["path", "time", *zcols], rows),
        "path_moments": (["time", *[f"mean_{c}" for c in zcols], *[f"std_{c}" for c in zcols]], summary_rows),
        "match": (["time", *zcols, "phase"], marks),
    }
    rep.headline = {
        "final_mean": mean[-1].tolist(),
        "final_std": std[-1].tolist(),
        "rain_stop": match.stopped_at,
        "resumed_at": match.resumed_at,
        "match_end": float(match.times[-1]),
    }
    return rep


def cmd_objective(sc: Scenario) -> RunReport:
    from .simulate import objective_estimate

    model = build_model(sc)
    sim = sc.simulation
    drv = _driver(sc, model)
    est = objective_estimate(model, sim.z0, sim.horizon, sim.n_paths, drv)
    post = objective_estimate(model, sim.z0, sim.horizon, sim.n_paths, drv, post_rain=True, cfg=_rain(sc))
    rep = RunReport("objective", sc.digest(), sc.seed)
    rep.series = {
        "objective": (
            ["variant", "value", "std_error", "n_paths", "below_floor"],
            [["full", *est[:3], est.floor_violated], ["post_rain", *post[:3], post.floor_violated]],
        )
    }
    rep.headline = {
        "objective": est.value,
        "std_error": est.std_error,
        "post_rain_objective": post.value,
        "post_rain_std_error": post.std_error,
        "below_floor": est.floor_violated or post.floor_violated,
    }
    return rep


def _penalization(sc: Scenario):
    from .pathintegral import G_REGISTRY

    return G_REGISTRY[sc.pathintegral.g](**sc.pathintegral.g_params)


def cmd_weight(sc: Scenario) -> RunReport:
    from .errors import NoSignChange
    from .pathintegral import alpha_star_report, brute_force_weight, solve_alpha

    model = build_model(sc)
    pi = sc.pathintegral
    g = _penalization(sc)
    z = np.asarray(pi.z, dtype=float)
    rep_a = alpha_star_report(model, g, pi.s, z)
    try:
        root = solve_alpha(model, g, pi.s, z, bracket=tuple(pi.bracket))
    except NoSignChange:
        root = None
    ag = pi.alpha_grid
    grid = np.linspace(ag.low, ag.high, ag.points)
    sim = sc.simulation
    bf = brute_force_weight(model, sim.z0, sim.horizon, grid, pi.brute_paths, _driver(sc, model), g)
    rep = RunReport("weight", sc.digest(), sc.seed)
    rep.series = {"weight_scores": (["alpha", "score"], list(zip(grid.tolist(), bf.values.tolist())))}
    rep.headline = {
        "alpha_star": rep_a.value + 0.0,  # no negative zero in reports
        "alpha_root": root,
        "alpha_brute": bf.alpha,
        "grid_step": float(grid[1] - grid[0]),
        "residual": rep_a.residual,
        "denominator": rep_a.denominator,
        "numerator": rep_a.numerator,
        "drift_term": rep_a.drift_term,
        "diffusion_term": rep_a.diffusion_term,
    }
    return rep


def cmd_kernel(sc: Scenario) -> RunReport:
    from .pathintegral import ActionField, ActionSpec, gaussian_kernel, propagate_kernel, wick_evolution_residual

    model = build_model(sc)
    pi = sc.pathintegral
    gr = pi.grid
    if not (len(gr.low) == len(gr.high) == len(gr.nodes) == model.dim):
        raise InvalidSpec(f"pathintegral.grid needs {model.dim} axes to match the goal dimension")
    if model.dim > 3:
        raise InvalidSpec("kernel propagation is limited to goal dimension <= 3")
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(gr.low, gr.high, gr.nodes)]
    mean = np.broadcast_to(np.asarray(pi.kernel_mean, dtype=float), (model.dim,))
    kern = gaussian_kernel(axes, mean, pi.kernel_var * np.eye(model.dim), pi.s)
    f = ActionField(model, ActionSpec(pi.lambda_dyn, pi.lambda_lqg), _penalization(sc))
    cols = [f"z{k}" for k in range(model.dim)]
    from .pathintegral import kernel_to_rows

    series = {"kernel_000": ([*cols, "psi"], kernel_to_rows(kern))}
    trace = []
    for step in range(1, pi.n_steps + 1):
        new = propagate_kernel(kern, f, pi.eps_step, include_gradient=pi.include_gradient)
        resid = wick_evolution_residual(kern, new, f)
        m, c = new.moments()
        trace.append([step, new.s_now, new.mass_pre, resid, *m, *np.diag(c)])
        series[f"kernel_{step:03d}"] = ([*cols, "psi"], kernel_to_rows(new))
        kern = new
    series["kernel_trace"] = (
        ["step", "s", "mass_pre", "wick_residual", *[f"mean_{c}" for c in cols], *[f"var_{c}" for c in cols]],
        trace,
    )
    rep = RunReport("kernel", sc.digest(), sc.seed, series=series)
    rep.headline = {
        "steps": pi.n_steps,
        "final_mass": kern.mass(),
        "final_mean": trace[-1][4 : 4 + model.dim],
        "max_wick_residual": max(r[3] for r in trace),
    }
    return rep


def cmd_game(sc: Scenario) -> RunReport:
    from .game import deviation_check, feasibility_checks, find_equilibrium, game_from_dict, profile_rows

    game = game_from_dict(sc.game)
    res = find_equilibrium(game)
    checks = deviation_check(game, res.profile, res.values)
    feas = feasibility_checks(res.profile)
    rep = RunReport("game", sc.digest(), sc.seed)
    rep.series = {
        "equilibrium": (["player", "state", "action", "probability"], profile_rows(game, res.profile)),
        "values": (
            ["player", "state", "value"],
            [[i, game.state_labels[s], res.values[i, s]] for i in range(game.n_players) for s in range(game.n_states)],
        ),
    }
    rep.headline = {
        "certificate": res.certificate,
        "deviation_check": all(bool(c.all()) for c in checks),
        "feasible": feas.ok,
        "method": res.method,
        "iterations": res.iterations,
        "n_states": game.n_states,
    }
    return rep


def cmd_lefschetz(sc: Scenario) -> RunReport:
    from .topology import complex_from_dict, lefschetz_number

    tp = sc.topology
    cx = complex_from_dict(tp.complex)
    verts = cx.vertices
    if tp.vertex_map is not None:
        vmap = {int(k): int(v) for k, v in tp.vertex_map.items()}
        missing = set(verts) - set(vmap)
        if missing:
            raise InvalidSpec(f"topology.vertex_map misses vertices {sorted(missing)}")
    else:
        vmap = {v: verts[(k + tp.rotation) % len(verts)] for k, v in enumerate(verts)}
    rep_l = lefschetz_number(cx, vmap, tp.rounds)
    rep = RunReport("lefschetz", sc.digest(), sc.seed)
    rep.series = {
        "homology_traces": (
            ["degree", "homology_trace"],
            [[m, str(t)] for m, t in enumerate(rep_l.homology_traces)],
        )
    }
    lam = rep_l.lefschetz
    rep.headline = {
        "lefschetz": int(lam) if lam.denominator == 1 else str(lam),
        "chain_trace_alt": str(rep_l.chain_trace_alt),
        "homology_trace_alt": str(rep_l.homology_trace_alt),
        "hopf_holds": rep_l.hopf_holds,
        "fixed_point_forced": rep_l.fixed_point_forced,
        "subdivision_check": None if rep_l.homotopy_check is None else str(rep_l.homotopy_check),
        "euler_characteristic": cx.euler_characteristic(),
    }
    return rep


def cmd_gff(sc: Scenario, check_r: float | None = None) -> RunReport:
    from .lqgfield import distances_from, quantum_area, sample_gff, scaling_check

    lq = sc.lqg
    fld = sample_gff(lq.n, sc.seed)
    rng = np.random.default_rng(sc.seed)
    pts = rng.integers(0, lq.n, size=(lq.n_pairs, 2, 2))
    pairs = [(tuple(int(x) for x in p[0]), tuple(int(x) for x in p[1])) for p in pts]
    dist = distances_from(fld, [a for a, _ in pairs])
    rows = [[*a, *b, dist[k, b[0] * lq.n + b[1]]] for k, (a, b) in enumerate(pairs)]
    r = lq.r if check_r is None else check_r
    sr = scaling_check(fld, r, pairs)
    rep = RunReport("gff", sc.digest(), sc.seed)
    rep.series = {
        "field": ([f"c{j}" for j in range(lq.n)], fld.h.tolist()),
        "distances": (["a_i", "a_j", "b_i", "b_j", "distance"], rows),
    }
    rep.headline = {
        "n": lq.n,
        "quantum_area": quantum_area(fld),
        "q_const": fld.q_const,
        "scaling_r": r,
        "scaling_factor": sr.factor,
        "scaling_residual": sr.max_rel_residual,
        "scaling_passed": sr.passed,
    }
    return rep


INTEGRANDS: dict[str, Callable] = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "square": np.square}


def cmd_gauge(sc: Scenario) -> RunReport:
    from scipy.integrate import quad

    from .gauge import build_delta_fine, dyadic_schedule, hk_integral, is_delta_fine, rain_gauge
    from .simulate import time_grid

    gc = sc.gauge
    if len(gc.interval) != 2 or not gc.interval[1] > gc.interval[0]:
        raise InvalidSpec("gauge.interval must be [a, b] with b > a")
    a, b = gc.interval
    f = INTEGRANDS[gc.integrand]
    if gc.rain_gauge:
        cfg = _rain(sc)
        times = time_grid(a, b, cfg.rain_driver.dt)
        incr = cfg.rain_driver.normals(times.size - 1, 1)[0, :, 0] * np.sqrt(np.diff(times))
        path = np.concatenate([[0.0], np.cumsum(incr)])
        base = rain_gauge(times, path, cfg.b, b - a)
        schedule = dyadic_schedule(base)
    else:
        schedule = dyadic_schedule(b - a)
    res = hk_integral(f, (a, b), schedule, gc.tol)
    gauge = schedule(res.levels)
    part = build_delta_fine(gauge, (a, b))
    problems = is_delta_fine(part, gauge, (a, b))
    ref = quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    rep = RunReport("gauge", sc.digest(), sc.seed)
    rep.series = {
        "partition": (["tag", "left", "right"], [list(c) for c in part.cells]),
        "refinement": (["level", "change"], [[k + 1, r] for k, r in enumerate(res.history)]),
    }
    rep.headline = {
        "value": res.value,
        "reference": ref,
        "residual": res.residual,
        "cells": res.partition_card,
        "delta_fine": not problems,
    }
    return rep


def run(command: str, scenario_path=None, overrides=None, seed=None, check_scaling=None) -> RunReport:
    if command not in COMMANDS:
        raise InvalidSpec(f"unknown command {command!r}")
    sc = load_scenario(scenario_path, overrides, seed)
    t0 = time.perf_counter()
    if command == "gff":
        rep = cmd_gff(sc, check_scaling)
    else:
        rep = globals()[f"cmd_{command}"](sc)
    rep.headline = _plain(rep.headline)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _scaling_arg(text: str) -> float:
    raw = text.split("=", 1)[1] if "=" in text else text
    try:
        return float(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected r=<number>, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="goaldyn", description="Goal-dynamics numerics from scenario files.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", default=None, help=f"YAML file or shipped name ({', '.join(shipped_scenarios())})")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./goaldyn-out/<command>)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted override, repeatable")
    p.add_argument("--check-scaling", type=_scaling_arg, default=None, metavar="r=R", help="gff: shift used by the scaling check")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rep = run(args.command, args.scenario, args.overrides, args.seed, args.check_scaling)
        out = Path(args.out or os.environ.get(OUT_ENV) or Path("goaldyn-out") / args.command)
        emit_plotdata(rep, out)
        rep.outputs.append("summary.json")
        with open(out / "summary.json", "w") as fh:
            json.dump(rep.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except ScenarioInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return 2
    except InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(rep.headline, sort_keys=True))
    print(f"wrote {len(rep.outputs)} files to {out} in {rep.wall_time:.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
