"""Acceptance checks, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line with the measured numbers
and then asserts. The lines are printed in an "acceptance" section at the
end of any pytest run that includes this file.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import VERDICTS, all_path_lengths, audit, independent_deviation_ok, single_player_vi  # noqa: E402

from goaldyn.cli import COMMANDS, main  # noqa: E402
from goaldyn.game import FiniteGame, find_equilibrium, matching_pennies, uniform_profile, value_of_profile  # noqa: E402
from goaldyn.gauge import build_delta_fine, dyadic_schedule, hk_integral, split_points  # noqa: E402
from goaldyn.lqgfield import GridField, lqg_distance, sample_gff, scaling_check  # noqa: E402
from goaldyn.model import scalar_model  # noqa: E402
from goaldyn.pathintegral import (  # noqa: E402
    PenalizationG,
    alpha_star_closed_form,
    brute_force_weight,
    foc_residual,
    gaussian_integral,
    gaussian_kernel,
    laplace_step,
    propagate_kernel,
    solve_alpha,
)
from goaldyn.simulate import BrownianDriver, StoppingConfig, euler_maruyama, first_passage_times, reflection_cdf  # noqa: E402
from goaldyn.topology import (  # noqa: E402
    EXAMPLES,
    commutant_basis,
    filled_triangle,
    hexagon,
    hopf_trace_check,
    lefschetz_number,
    random_chain_map,
    rotation_map,
)


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
    print(line)
    VERDICTS.append(line)
    assert ok, line


def random_scalar_model(rng):
    return scalar_model(
        z_star=rng.uniform(-1, 1),
        kappa_d=rng.uniform(0.2, 2),
        c_w=rng.uniform(-1, 1),
        w=rng.uniform(0.1, 3),
        gamma_opp=rng.uniform(0.05, 0.5),
        p0=rng.uniform(0, 0.5),
        kappa_p=rng.uniform(0, 0.5),
        a0=rng.uniform(0, 1),
        crowd=rng.uniform(0, 1),
        rho=rng.uniform(0, 0.9),
        n_matches=int(rng.integers(1, 4)),
    )


def test_criterion_01_closed_form_weight():
    rng = np.random.default_rng(1)
    worst_res = worst_gap = 0.0
    for _ in range(25):
        m = random_scalar_model(rng)
        g = [PenalizationG.quadratic(rng.uniform(0.2, 2)), PenalizationG.saturating(rng.uniform(0.2, 2), 0.1)][int(rng.integers(2))]
        z = np.array([rng.uniform(0, 2)])
        a = alpha_star_closed_form(m, g, 0.0, z)
        root = solve_alpha(m, g, 0.0, z, bracket=(-1e3, 1e3))
        worst_res = max(worst_res, abs(foc_residual(a, m, g, 0.0, z)[0]))
        worst_gap = max(worst_gap, abs(a - root))
    ok = worst_res <= 1e-8 and worst_gap <= 1e-8
    verdict(1, ok, f"25 scenarios, max |residual| {worst_res:.2e}, max |closed - root| {worst_gap:.2e} (tol 1e-8)")


def test_criterion_02_grid_argmax():
    rng = np.random.default_rng(42)
    cells = []
    for k in range(5):
        zs, cw, a0, w = rng.uniform(-1, 1), rng.uniform(-0.8, 0.8), rng.uniform(0, 0.8), rng.uniform(0.5, 2)
        m = scalar_model(z_star=zs, kappa_d=1.0, c_w=cw, w=w, h0="unit", a0=a0, gamma_opp=0.3, kappa_p=0.0, rho=0.0)
        z0 = np.array([zs + cw * w])  # stationary mean of the drift
        g = PenalizationG.quadratic(rng.uniform(0.5, 2))
        a = alpha_star_closed_form(m, g, 0.0, z0)
        half = 2.0 * max(1.0, abs(a))
        lo = a - half * rng.uniform(0.5, 1.5)  # off-node bracket
        grid = np.linspace(lo, lo + 2 * half, 101)
        bf = brute_force_weight(m, z0, 1.0, grid, 2000, BrownianDriver(100 + k, 1, 0.01), g)
        concave = bool(np.all(np.diff(bf.values, 2) <= 1e-12))
        cells.append(float(abs(bf.alpha - a) / (grid[1] - grid[0])) if concave else math.inf)
    ok = max(cells) <= 1.0
    verdict(2, ok, f"5 scenarios, argmax offset in grid cells {[round(c, 3) for c in cells]} (tol 1)")


def test_criterion_03_gaussian_kernel():
    ax = np.linspace(-6, 6, 64)
    m0, v0, q, c, eps = 0.3, 0.8, 2.0, -0.4, 0.25
    k = gaussian_kernel([ax], [m0], [[v0]])
    new = propagate_kernel(k, lambda s, z: 0.5 * q * (z[..., 0] - c) ** 2 + 1.0, eps)
    prec = 1 / v0 + eps * q
    mean, var = (m0 / v0 + eps * q * c) / prec, 1 / prec
    got_m, got_c = new.moments()
    dm, dv = abs(got_m[0] - mean), abs(got_c[0, 0] - var) / var
    verdict(3, dm <= 1e-6 and dv <= 1e-5, f"64 nodes, |mean error| {dm:.2e} (tol 1e-6), relative variance error {dv:.2e} (tol 1e-5)")


def test_criterion_04_laplace_exactness():
    rng = np.random.default_rng(4)
    worst = 0.0
    for d in (1, 2, 3):
        a = rng.normal(size=(d, d))
        q = a @ a.T + d * np.eye(d)
        for eps in (0.2, 1.0, 5.0):
            lap = laplace_step(lambda x: 0.5 + 0.5 * x @ q @ x, np.zeros(d), eps)
            exact = gaussian_integral(q, 0.5, eps)
            worst = max(worst, abs(lap.integral - exact) / exact)
    verdict(4, worst <= 1e-10, f"d in 1..3, max relative error {worst:.2e} (tol 1e-10)")


def test_criterion_05_weak_order():
    m = scalar_model(z_star=0.0, kappa_d=1.0, c_w=0.0, gamma_opp=0.1, sigma_hat_max=0.5)
    dts = [0.1, 0.05, 0.025, 0.0125]
    exact = 10.0 * math.exp(-1.0)
    errs = []
    for dt in dts:
        p = euler_maruyama(m, [10.0], 1.0, BrownianDriver(5, 1, dt), n_paths=10_000)
        errs.append(abs(p.states[:, -1, 0].mean() - exact))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    verdict(5, abs(slope - 1.0) <= 0.3, f"OU mean at t=1, 1e4 paths, errors {[f'{e:.2e}' for e in errs]}, slope {slope:.3f} (1 +- 0.3)")


def test_criterion_06_rain_first_passage():
    n, b = 100_000, 1.0
    cfg = StoppingConfig(b, 0.0, BrownianDriver(6, 1, 2.5e-4, phase=7919))
    tau = np.sort(first_passage_times(cfg, 1.0, n, 5000))
    t = np.linspace(0.01, 1.0, 100)
    emp = np.searchsorted(tau, t, side="right") / n
    ref = reflection_cdf(b, t)
    sup = float(np.max(np.abs(emp - ref)))
    thr = 0.01 + 3 * float(np.max(np.sqrt(ref * (1 - ref) / n)))
    verdict(6, sup <= thr, f"1e5 paths, sup |F_emp - 2 Phi(-b/sqrt t)| {sup:.4f} (tol {thr:.4f})")


def test_criterion_07_gauge_integral():
    tol = 1e-8
    res = hk_integral(np.sin, (0.0, math.pi), tol=tol)
    err = abs(res.value - 2.0)
    rng = np.random.default_rng(7)
    worst_split = 0.0
    for _ in range(3):
        cuts = rng.uniform(0.1, math.pi - 0.1, int(rng.integers(1, 4)))
        parts = sum(hk_integral(np.sin, piece, tol=tol).value for piece in split_points((0.0, math.pi), cuts))
        worst_split = max(worst_split, abs(parts - res.value))
    sched = dyadic_schedule(math.pi)
    fine = all(audit(build_delta_fine(sched(k), (0.0, math.pi)), sched(k), 0.0, math.pi) for k in range(res.levels + 1))
    ok = err <= tol and worst_split <= 3 * tol and fine
    verdict(7, ok, f"|HK(sin) - 2| {err:.2e} (tol 1e-8), split gap {worst_split:.2e} (tol 3e-8), {res.levels + 1} partitions fine: {fine}")


def test_criterion_08_games():
    rng = np.random.default_rng(8)
    vi_gap = 0.0
    for _ in range(5):
        game = FiniteGame(rng.normal(size=(1, 5, 3)), rng.dirichlet(np.ones(5), size=(5, 3)), 0.3)
        res = find_equilibrium(game)
        vi_gap = max(vi_gap, float(np.max(np.abs(res.values[0] - single_player_vi(game)))))
    omega, theta = 1.7, 0.15
    one = FiniteGame([[[omega]]], [[[1.0]]], theta)
    geo = abs(value_of_profile(one, uniform_profile(one))[0, 0] - omega / theta) / (omega / theta)
    mp = find_equilibrium(matching_pennies())
    mp_gap = max(float(np.max(np.abs(p - 0.5))) for p in mp.profile)
    checked = mp.certificate and independent_deviation_ok(matching_pennies(), mp.profile)
    for seed in range(5):
        g = FiniteGame(
            rng.normal(size=(2, 3, 2, 2)), rng.dirichlet(np.ones(3), size=(3, 2, 2)), 0.4
        )
        r = find_equilibrium(g)
        checked = checked and r.certificate and independent_deviation_ok(g, r.profile)
    ok = vi_gap <= 1e-9 and geo <= 1e-12 and mp_gap <= 1e-3 and checked
    verdict(8, ok, f"VI gap {vi_gap:.1e}, geometric rel error {geo:.1e}, pennies |p - 1/2| {mp_gap:.1e}, independent check {checked}")


def test_criterion_09_topology():
    names = ["triangle_boundary", "filled_triangle", "hexagon", "two_triangles", "tetrahedron_boundary"]
    rng = np.random.default_rng(9)
    hopf = 0
    for name in names:
        cx = EXAMPLES[name]()
        basis = commutant_basis(cx)
        hopf += sum(hopf_trace_check(cx, random_chain_map(cx, rng, basis)).hopf_holds for _ in range(20))
    ident = all(
        lefschetz_number(cx, {v: v for v in cx.vertices}).lefschetz == cx.euler_characteristic()
        for cx in (f() for f in EXAMPLES.values())
    )
    hexa = lefschetz_number(hexagon(), rotation_map(6)).lefschetz
    disk = lefschetz_number(filled_triangle(), {0: 0, 1: 1, 2: 2}).lefschetz
    ok = hopf == 100 and ident and hexa == 0 and disk == 1
    verdict(9, ok, f"Hopf exact on {hopf}/100 maps, Lambda(id) = chi on all: {ident}, hexagon rotation {hexa}, disk {disk}")


def test_criterion_10_lqg():
    rng = np.random.default_rng(10)
    fields = [sample_gff(32, seed) for seed in range(10)]
    worst = 0.0
    for k in range(100):
        f = fields[k % 10]
        a, b = (tuple(int(x) for x in rng.integers(0, 32, 2)) for _ in range(2))
        rep = scaling_check(f, float(rng.uniform(-3, 3)), pairs=[(a, b)])
        worst = max(worst, rep.max_rel_residual)
    exact = True
    for seed in range(5):
        f = GridField(sample_gff(4, seed).h + np.random.default_rng(seed).normal(size=(4, 4)))
        for _ in range(5):
            a, b = (tuple(int(x) for x in rng.integers(0, 4, 2)) for _ in range(2))
            d, e = lqg_distance(f, a, b), all_path_lengths(f, a, b)
            exact = exact and abs(d - e) <= 1e-13 * max(1.0, e)
    ok = worst <= 1e-12 and exact
    verdict(10, ok, f"100 triples on 32x32, max relative residual {worst:.1e} (tol 1e-12), 4x4 Dijkstra = enumeration: {exact}")


def test_criterion_11_determinism(tmp_path):
    same = []
    for cmd in COMMANDS:
        a, b = tmp_path / cmd / "a", tmp_path / cmd / "b"
        codes = (main([cmd, "--out", str(a), "--seed", "3"]), main([cmd, "--out", str(b), "--seed", "3"]))
        names = sorted(p.name for p in a.iterdir())
        ident = codes == (0, 0) and names == sorted(p.name for p in b.iterdir())
        ident = ident and all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
        same.append(ident)
    bad = [c for c, s in zip(COMMANDS, same) if not s]
    verdict(11, not bad, f"{len(COMMANDS)} commands re-run with seed 3, byte-identical: {sum(same)}/{len(COMMANDS)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
