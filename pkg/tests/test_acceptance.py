"""Acceptance criteria 1-10 at full size.

Each test prints one ``criterion N: PASS|FAIL`` line (shown even without
``-s``) and then asserts the criterion.
"""
import math
import time

import numpy as np
import pytest

from horseshoe_lab import cones, hyper, manifolds, symbolic, thermo
from horseshoe_lab.orbits import decode_batch, random_words
from horseshoe_lab.params import SolverHints, solve_params, validate


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return emit


def test_criterion_1_parameter_synthesis(report):
    t0 = time.perf_counter()
    p = solve_params(SolverHints())
    rep = validate(p)
    elapsed = time.perf_counter() - t0
    low = min(e.margin for e in rep.entries)
    ok = rep.passed and low > 0 and len(rep.entries) >= 20 and elapsed < 1.0
    assert report(1, ok, f"{len(rep.entries)} conditions, min margin {low:.3g}, {elapsed:.3f} s")


def test_criterion_2_cone_invariance(p, report):
    t0 = time.perf_counter()
    res = cones.invariance_sweep(p, np.random.default_rng(2), 500, depth=20, per_orbit=20)
    elapsed = time.perf_counter() - t0
    ok = res.x.size >= 10_000 and res.failures == 0 and elapsed < 60
    assert report(2, ok, f"{res.x.size} points, {res.failures} failures, "
                         f"min margins {res.margin_u.min():.3g}/{res.margin_s.min():.3g}, {elapsed:.1f} s")


def test_criterion_3_tube_expansion(p, report):
    rng = np.random.default_rng(3)
    tubes = []
    while len(tubes) < 1000:
        ob = decode_batch(p, random_words(rng, 200, 200, p, inject=0.3))
        tubes += cones.harvest_tubes(p, ob)
    bad = sum(not hyper.tube_expansion_check(p, t) for t in tubes)
    assert report(3, bad == 0, f"{len(tubes)} tubes, {bad} failures")


def test_criterion_4_lyapunov_floor(p, report):
    floor = math.log(p.rho) / 5 - 1e-3
    res = hyper.lyapunov_unstable(p, random_words(np.random.default_rng(4), 1000, 10_000, p, inject=0.3))
    fixed = hyper.lyapunov_unstable(p, hyper.periodic_word((9,), 200)[None, :]).exponent[0]
    per3 = hyper.lyapunov_unstable(p, hyper.periodic_word(p.itinerary, 3000)[None, :]).exponent[0]
    per3_err = abs(per3 - (2 * math.log(p.sigma) + math.log(p.rho)) / 3)
    fixed_err = abs(fixed - math.log(p.sigma))
    ok = res.exponent.min() >= floor and fixed_err < 1e-10 and per3_err < 1e-10
    assert report(4, ok, f"min exponent {res.exponent.min():.4f} vs floor {floor:.4f}, "
                         f"fixed err {fixed_err:.1e}, period-3 err {per3_err:.1e}")


def test_criterion_5_stable_contraction(p, report):
    ob = decode_batch(p, random_words(np.random.default_rng(5), 300, 200, p, inject=0.3))
    oc = cones.orbit_cones(p, ob)
    sc = hyper.stable_contraction_check(p, ob, oc, rng=np.random.default_rng(55))
    ok = sc.windows >= 1000 and sc.violations == 0
    assert report(5, ok, f"{sc.windows} windows, {sc.violations} violations, C = {sc.C:.3g}, "
                         f"worst ratio {sc.worst_ratio:.3g}")


def test_criterion_6_tangency(p, report):
    rep = manifolds.tangency_order(p)
    thetas = hyper.theta_grid(p)
    angles = [manifolds.transversality_angle(p, th) for th in thetas]
    kappa = hyper.fit_linear_floor(thetas, angles)
    ok = (rep.order == 3 and rep.rel_err < 1e-6 and rep.d1 < 1e-8 and rep.d2 < 1e-8
          and kappa > 0 and all(a >= kappa * t for a, t in zip(angles, thetas)))
    assert report(6, ok, f"order {rep.order}, a3 rel err {rep.rel_err:.1e}, "
                         f"d1 {rep.d1:.1e}, d2 {rep.d2:.1e}, kappa {kappa:.3g}")


def test_criterion_7_boundary_of_hyperbolicity(p, report):
    rows, ok = [], True
    for th in hyper.theta_grid(p):
        r = hyper.uniform_doubling_time(p, th, rng=np.random.default_rng(7), n_points=1000)
        npr = hyper.n_prime(p, th)
        within = not r.failed and r.N <= 2 * npr
        ok &= within
        rows.append(f"theta {th:.2e}: N={r.N}, N'={npr}")
    r0 = hyper.uniform_doubling_time(p, 0.0, rng=np.random.default_rng(7), n_points=1000)
    ok &= r0.failed and r0.witness is not None
    rows.append(f"theta 0: {'no doubling within ' + str(r0.cap) if r0.failed else 'N=' + str(r0.N)}")
    assert report(7, ok, "; ".join(rows))


def test_criterion_8_symbolic_conjugacy(p, report):
    rng = np.random.default_rng(8)
    words = symbolic.random_symbol_words(p, rng, 1000, 15, 15, inject=0.3)
    rt_fail = len(symbolic.roundtrip_failures(p, words))
    wa = symbolic.random_symbol_words(p, rng, 1000, 10, 10)
    wb = symbolic.random_symbol_words(p, rng, 1000, 10, 10)
    pairs = [(symbolic.decode(p, a), symbolic.decode(p, b)) for a, b in zip(wa, wb)]
    expansive = symbolic.expansivity_check(p, pairs)
    qs = list(range(2, 9))
    fit = symbolic.holder_modulus(p, symbolic.common_window_pairs(p, rng, qs, 6),
                                  symbolic.cube_law_pairs(p, qs))
    ok = rt_fail == 0 and expansive and fit.exponent > 0 and fit.cube_law_ok
    assert report(8, ok, f"round trip failures {rt_fail}/1000, expansive {expansive}, "
                         f"Holder exponent {fit.exponent:.3g}, cube law worst ratio {fit.cube_law_worst:.3g}")


def test_criterion_9_thermodynamics(p, report):
    t0 = time.perf_counter()
    p0 = thermo.pressure(p, thermo.zero_potential(), 8)
    d0 = thermo.variational_check(p, thermo.zero_potential(), 8).defect
    geo = thermo.geometric_potential()
    dg = thermo.variational_check(p, geo, 8).defect
    spread = thermo.uniqueness_spread(p, geo, 8, np.random.default_rng(9), starts=10)
    elapsed = time.perf_counter() - t0
    ok = abs(p0 - math.log(3)) < 1e-8 and d0 < 1e-6 and dg < 1e-6 and spread < 1e-8 and elapsed < 120
    assert report(9, ok, f"P(0) - log 3 = {p0 - math.log(3):.1e}, defects {d0:.1e}/{dg:.1e}, "
                         f"start spread {spread:.1e}, {elapsed:.1f} s")


def test_criterion_10_family_closure(p, report):
    short = manifolds.first_return_words(p, 3 * (p.k_c + 1))
    rep = manifolds.family_closure(p, np.random.default_rng(10), 100)
    ok = rep.transforms > 0 and rep.violations == 0 and rep.ineq16_failures == 0
    assert report(10, ok, f"{rep.curves} curves x {rep.words} return words (none of length <= "
                          f"{3 * (p.k_c + 1)}; {len(short)} found), {rep.violations} violations")
