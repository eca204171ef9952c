"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated, in criterion order, in the
terminal summary (see ``conftest.py``).
"""

import mpmath as mp
import numpy as np
import pytest

from boltzrep.analytic import (
    ExponentialFamilyFit,
    TruncatedGaussianFit,
    c_norm,
    critical_beta_period2,
    critical_beta_symmetric,
    find_period2,
    mu,
    period2_residual,
    solve_constraint_family,
    solve_quadratic_centers,
    solve_symmetric_gamma,
)
from boltzrep.core import Density, Grid, LearningParams, ks_distance
from boltzrep.dynamics import INITS, evolve, initial_state, replicator_rhs
from boltzrep.games import Bilinear, Investment, PoliticalAd, Quadratic, tabulate
from boltzrep.simulate import SimConfig, run_simulation
from boltzrep.steady import gibbs_map, solve_steady
from conftest import ACCEPTANCE_LINES

GRID = Grid(401)


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def sup(a, b):
    return float(np.max(np.abs(np.asarray(getattr(a, "values", a)) - np.asarray(getattr(b, "values", b)))))


def steady_from(kernel, beta, init_name, **kw):
    s = initial_state(kernel.grid, init_name)
    return solve_steady(kernel, beta, (s.p1, s.p2), **kw)


def test_criterion_01_investment_uniform():
    kernel = tabulate(Investment(), GRID)
    u = Density.uniform(GRID)
    worst_steady, worst_evolve = 0.0, 0.0
    all_converged = True
    for beta in (5.0, 20.0, 80.0):
        for name in ("uniform", "left-tilt", "asymmetric"):
            res = steady_from(kernel, beta, name)
            all_converged &= res.converged
            worst_steady = max(worst_steady, sup(res.p1, u), sup(res.p2, u))
        rec = evolve(initial_state(GRID, "left-tilt"), kernel, LearningParams(beta))
        f = rec.final
        worst_evolve = max(worst_evolve, sup(f.p1, u), sup(f.p2, u))
    ok = all_converged and worst_steady <= 1e-8 and worst_evolve <= 1e-4
    report(1, ok, f"investment uniform: steady dev {worst_steady:.2e} (<=1e-8), evolve dev {worst_evolve:.2e} (<=1e-4)")


def test_criterion_02_bilinear_analytic_vs_grid():
    worst = 0.0
    for a, b in ((1.0, 0.0), (1.0, 0.5), (-1.0, 0.1)):
        kernel = tabulate(Bilinear(a, b, a, b), GRID)
        for beta in (5.0, 10.0, 40.0):
            roots = solve_symmetric_gamma(a, b, beta)
            assert len(roots) == 1
            res = steady_from(kernel, beta, "uniform")
            p, _ = ExponentialFamilyFit(roots[0], roots[0]).densities(GRID)
            worst = max(worst, sup(res.p1, p), sup(res.p2, p))
            pair = find_period2(a, b, beta)
            if pair is not None:
                res = steady_from(kernel, beta, "asymmetric")
                q1, q2 = ExponentialFamilyFit(*pair).densities(GRID)
                worst = max(worst, sup(res.p1, q1), sup(res.p2, q2))
    report(2, worst <= 1e-5, f"bilinear gamma-root densities vs grid steady states: max dev {worst:.2e} (<=1e-5, m=401)")


def test_criterion_03_bilinear_multistability():
    n1 = len(solve_symmetric_gamma(1.0, -0.5, 1.0))
    n50 = len(solve_symmetric_gamma(1.0, -0.5, 50.0))
    bcs = [critical_beta_symmetric(1.0, -0.5, panels=p) for p in (1024, 4096, 16384)]
    spread = max(bcs) - min(bcs)
    ok = n1 == 1 and n50 == 3 and spread <= 1e-3
    report(3, ok, f"a=1 b=-0.5: {n1} root at beta=1, {n50} at beta=50; beta_c={bcs[1]:.4f}, scan-refinement spread {spread:.1e} (<=1e-3)")


def test_criterion_04_large_beta_asymptotics():
    ratios = []
    for beta in (100.0, 200.0, 400.0):
        roots = solve_symmetric_gamma(1.0, -0.5, beta)
        assert len(roots) == 3
        ratios.append(max(abs(roots[0]), abs(roots[-1])) / beta)
    rel = abs(ratios[-1] - 0.5) / 0.5
    approaching = abs(ratios[2] - 0.5) < abs(ratios[1] - 0.5) < abs(ratios[0] - 0.5)
    ok = rel <= 0.05 and approaching
    report(4, ok, f"|gamma/beta| at beta=100,200,400: {ratios[0]:.4f}, {ratios[1]:.4f}, {ratios[2]:.4f}; rel. error {rel:.2%} (<=5%)")


def test_criterion_05_asymmetric_branch():
    a, b = -1.0, 0.1
    bc = critical_beta_period2(a, b)
    below = [find_period2(a, b, bc * f) for f in (0.25, 0.5, 0.9, 0.999)]
    above_betas = [bc * 1.001, bc * 1.1, 30.0, 40.0, 80.0]
    above = [find_period2(a, b, bt) for bt in above_betas]
    none_below = all(p is None for p in below)
    pairs_above = all(p is not None for p in above)
    worst_res = max(period2_residual(p[0], p[1], a, b, bt) for p, bt in zip(above, above_betas) if p is not None)
    beta = 40.0
    res = steady_from(tabulate(Bilinear(a, b, a, b), GRID), beta, "asymmetric")
    q1, q2 = ExponentialFamilyFit(*find_period2(a, b, beta)).densities(GRID)
    dev = max(sup(res.p1, q1), sup(res.p2, q2))
    ok = none_below and pairs_above and worst_res <= 1e-10 and res.converged and dev <= 1e-4
    report(5, ok, f"a=-1 b=0.1: beta_c={bc:.4f}, none below / pair above: {none_below}/{pairs_above}, "
                  f"residual {worst_res:.1e} (<=1e-10), steady dev at beta=40 {dev:.2e} (<=1e-4)")


def test_criterion_06_bilinear_saturation():
    (g3,) = solve_symmetric_gamma(-1.0, 0.1, 1e3)
    (g4,) = solve_symmetric_gamma(-1.0, 0.1, 1e4)
    diff = abs(g4 - g3)
    report(6, diff <= 0.05, f"a=-1 b=0.1: gamma(1e3)={g3:.5f}, gamma(1e4)={g4:.5f}, diff {diff:.2e} (<=0.05)")


def test_criterion_07_truncated_gaussian_identities():
    half = max(abs(mu(0.5, bt) - 0.5) for bt in (1.0, 10.0, 100.0))
    worst = 0.0
    for z in (0.0, 0.2, 0.5, 0.75, 1.0):
        for beta in (0.5, 5.0, 50.0, 500.0):
            with mp.workdps(30):
                f = lambda x: mp.exp(-beta * (x - z) ** 2)  # noqa: E731
                pts = [0, z, 1] if 0 < z < 1 else [0, 1]
                norm = mp.quad(f, pts)
                mean = mp.quad(lambda x: x * f(x), pts) / norm
            worst = max(worst, abs(c_norm(z, beta) - float(1 / norm)) / float(1 / norm), abs(mu(z, beta) - float(mean)))
    ok = half <= 1e-14 and worst <= 1e-10
    report(7, ok, f"mu(0.5)-0.5 max {half:.1e} (<=1e-14); c_norm/mu vs quadrature on 20 points max {worst:.1e} (<=1e-10)")


def test_criterion_08_quadratic_symmetric():
    betas = np.geomspace(0.1, 1e4, 25)
    found = all(
        any(abs(x - 0.5) <= 1e-12 and abs(y - 0.5) <= 1e-12 for x, y in solve_quadratic_centers(0.5, 0.5, bt))
        for bt in betas
    )
    beta = 10.0
    res = steady_from(tabulate(Quadratic(0.5, 0.5), GRID), beta, "uniform")
    p1, p2 = TruncatedGaussianFit(0.5, 0.5, beta).densities(GRID, exact_norm=True)
    dev = max(sup(res.p1, p1), sup(res.p2, p2))
    ok = found and dev <= 1e-5
    report(8, ok, f"a=0.5: (0.5,0.5) found at all {len(betas)} betas: {found}; steady vs c(0.5)exp(-10(x-0.5)^2) dev {dev:.2e} (<=1e-5)")


def test_criterion_09_asymmetric_quadratic_drift():
    (x10, y10), = solve_quadratic_centers(0.45, 0.55, 10.0)
    (x50, y50), = solve_quadratic_centers(0.45, 0.55, 50.0)
    ok = x50 < x10 and y50 > y10
    report(9, ok, f"a=(0.45,0.55): centers beta=10 ({x10:.4f},{y10:.4f}) -> beta=50 ({x50:.4f},{y50:.4f})")


def test_criterion_10_political_ad():
    kernel = tabulate(PoliticalAd(), GRID)
    means = {}
    for beta in (10.0, 100.0):
        res = steady_from(kernel, beta, "uniform")
        assert res.converged
        means[beta] = res.p1.mean()
    d10, d100 = abs(means[10.0] - 0.25), abs(means[100.0] - 0.25)
    ok = d100 <= 0.05 and d100 < d10
    report(10, ok, f"political ad mean: beta=10 {means[10.0]:.4f}, beta=100 {means[100.0]:.4f} (|x-0.25|<=0.05, closer at 100)")


CATALOG = [
    Bilinear(1, 0, 1, 0),
    Bilinear(-1, 0.1, -1, 0.1),
    Quadratic(0.5, 0.5),
    Quadratic(0.45, 0.55),
    PoliticalAd(),
    Investment(),
]


def test_criterion_11_dynamics_steady_consistency():
    beta = 10.0
    worst_dev, worst_rhs = 0.0, 0.0
    for game in CATALOG:
        kernel = tabulate(game, GRID)
        rec = evolve(initial_state(GRID, "uniform"), kernel, LearningParams(beta))
        f = rec.final
        fixed = solve_steady(kernel, beta, (f.p1, f.p2), tol=1e-12)
        assert fixed.converged
        g1, g2 = gibbs_map(fixed.p1, fixed.p2, kernel, beta)
        assert max(sup(g1, fixed.p1), sup(g2, fixed.p2)) <= 1e-11
        worst_dev = max(worst_dev, sup(f.p1, fixed.p1), sup(f.p2, fixed.p2))
        d1, d2 = replicator_rhs(f, kernel, beta)
        worst_rhs = max(worst_rhs, float(np.max(np.abs(d1))), float(np.max(np.abs(d2))))
    ok = worst_dev <= 1e-4 and worst_rhs <= 1e-6
    report(11, ok, f"{len(CATALOG)} catalog games at beta=10: evolve end vs fixed point {worst_dev:.2e} (<=1e-4), rhs {worst_rhs:.2e} (<=1e-6)")


def test_criterion_12_frozen_opponent_free_energy():
    rng = np.random.default_rng(20240612)
    grid = Grid(201)
    worst_drop = 0.0
    for _ in range(20):
        kind = rng.integers(4)
        if kind == 0:
            a, b = rng.uniform(-1, 1, 2)
            game = Bilinear(a, b, a, b)
        elif kind == 1:
            game = Quadratic(*rng.uniform(0.05, 0.95, 2))
        else:
            game = (PoliticalAd(), Investment())[kind - 2]
        init = initial_state(grid, INITS[rng.integers(len(INITS))], tilt=rng.uniform(0.5, 5))
        beta = float(rng.uniform(1, 50))
        params = LearningParams(beta, t_max=20.0)
        rec = evolve(init, tabulate(game, grid), params, record_every=0.1, frozen=2)
        steps = np.diff(rec.free_energy1)
        worst_drop = max(worst_drop, float(-steps.min()) if steps.size else 0.0)
    ok = worst_drop <= 1e-10
    report(12, ok, f"20 random frozen-opponent runs: largest free-energy decrease per step {max(worst_drop, 0.0):.1e} (<=1e-10)")


def test_criterion_13_simulation_agreement():
    grid = Grid(201)
    beta = 10.0
    out = []
    for game in (Bilinear(1, 0, 1, 0), Quadratic(0.5, 0.5), Investment()):
        u = Density.uniform(grid)
        ref = solve_steady(tabulate(game, grid), beta, (u, u))
        assert ref.converged
        res = run_simulation(game, SimConfig(beta=beta), grid, (ref.p1, ref.p2))
        ks = max(ks_distance(res.p1, ref.p1), ks_distance(res.p2, ref.p2))
        out.append((game.kind, ks))
    worst = max(k for _, k in out)
    detail = ", ".join(f"{name} {k:.4f}" for name, k in out)
    report(13, worst <= 0.05, f"simulation vs steady KS at beta=10: {detail} (<=0.05)")


def test_criterion_14_metastability():
    small = solve_constraint_family(0.5, 1.0)
    large = solve_constraint_family(0.5, 200.0, band=1e-3)
    unique = len(small.roots) == 1 and small.roots[0] == pytest.approx(0.5, abs=1e-12)
    ok = unique and large.plateau_width >= 0.2
    report(14, ok, f"a=0.5: roots at beta=1 {small.roots}; plateau width at beta=200 {large.plateau_width:.3f} (>=0.2)")
