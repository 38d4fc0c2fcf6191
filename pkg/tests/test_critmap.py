import math

import mpmath
import numpy as np
import pytest

from horseshoe_lab.basemap import f0_apply, is_escaped, rectangle_of
from horseshoe_lab.critmap import (CriticalMapError, apply, critical_orbit, cubic_jacobian,
                                   depressed_cubic_root, frame, glue_det_bound, inverse, jacobian,
                                   local_cubic, local_cubic_inverse, region, solve_cubic_real)


def test_local_cubic_examples(p):
    assert local_cubic(p, 0.0, 0.0) == (0.0, 0.0)
    x = p.alpha_max / 3
    assert local_cubic(p, x, 0.0) == pytest.approx((0.0, p.b * x))
    y = p.beta_max / 2
    u, v = local_cubic(p, 0.0, y)
    assert u == pytest.approx(-p.eps1 * y) and v == pytest.approx(-p.c * y ** 3)
    with pytest.raises(CriticalMapError):
        local_cubic(p, 2 * p.alpha_max, 0.0)


def test_local_inverse_roundtrip_and_denominators(p):
    for x in (0.0, p.alpha_max / 2, p.alpha_max):
        for y in (-p.beta_max, 0.0, p.beta_max):
            back = local_cubic_inverse(p, *local_cubic(p, x, y))
            assert back[0] == pytest.approx(x, abs=1e-9 * p.alpha_max)
            assert back[1] == pytest.approx(y, abs=1e-12 * p.beta_max)
    assert p.b - p.c * p.beta_max == pytest.approx(p.c * p.beta_max)
    assert p.b + p.c * p.beta_max == pytest.approx(3 * p.c * p.beta_max)


def test_jacobian_examples(p):
    J = cubic_jacobian(p, 0.0, 0.0, 0.0)
    assert np.array_equal(J, np.array([[0.0, -p.eps1], [p.b, 0.0]]))
    J = cubic_jacobian(p, p.alpha_max, p.beta_max, 0.0)
    assert np.linalg.det(J) == pytest.approx(p.eps1 * (p.b - p.c * p.beta_max), rel=1e-12)
    J = jacobian(p, (p.l0 / 2, 1 - p.l0 / 2))
    assert abs(J[0, 0]) == pytest.approx(p.lam) and abs(J[1, 1]) == pytest.approx(p.rho)


def test_image_of_xi_is_level_with_xi_prime(p):
    fr = frame(p)
    img = apply(p, fr.xi)
    assert img[1] == pytest.approx(f0_apply(p, fr.xi)[1], abs=1e-15)
    assert rectangle_of(p, fr.xi) == 4


def test_roundtrip_in_critical_box(p, rng):
    xi2 = mpmath.mpf(p.xi2)
    with mpmath.workdps(50):
        for _ in range(1000):
            pt = (mpmath.mpf(rng.random() * p.alpha_max), xi2 + mpmath.mpf((2 * rng.random() - 1) * p.beta_max))
            back = inverse(p, apply(p, pt))
            assert abs(back[0] - pt[0]) <= 1e-12 * p.alpha_max
            assert abs(back[1] - pt[1]) <= 1e-12 * p.beta_max


def test_top_edge_image(p):
    fr = frame(p)
    for x in (0.0, p.alpha_max / 2, p.alpha_max):
        img = apply(p, (x, p.xi2 + p.beta_max))
        assert img[0] - fr.f_xi[0] == pytest.approx(-p.eps1 * p.beta_max, rel=1e-6)
        expect = p.b * x - p.c * p.beta_max * (p.beta_max ** 2 + x)
        assert img[1] - fr.f_xi[1] == pytest.approx(expect, rel=1e-6, abs=1e-14)


def test_critical_box_image_stays_in_band(p):
    fr = frame(p)
    lo, hi = fr.band
    for x in (0.0, p.alpha_max):
        for y in (-p.beta_max, p.beta_max):
            u = apply(p, (x, p.xi2 + y))[0]
            assert lo < u < hi
    assert 2 * p.eps1 * p.beta_max < p.l0 * p.lam ** (p.n_c + 1)


def test_critical_orbit(p):
    orb = critical_orbit(p, 6, 12)
    back = [pt for k, *pt in orb if k < 0]
    assert all(x == 0.0 for x, _ in back)
    assert all(rectangle_of(p, pt) == 7 for pt in back)
    fwd = [rectangle_of(p, (x, y)) for k, x, y in orb if k > 0]
    assert fwd == [8, 1, 6] * 4
    assert not ({4, 7} & set(fwd))


def test_region_labels(p):
    assert region(p, frame(p).xi) == "critical"
    assert region(p, (0.5, 0.5)) == "linear"
    assert region(p, (p.alpha_max * 1.2, p.xi2)) == "glue"


def test_invariant_set_avoids_the_glue_collar(p, rng):
    # the collar determinant is not below one (see max_abs_det); decoded Λ points never sit there
    from horseshoe_lab.orbits import critical_window_words, decode_batch, random_words
    W = np.vstack([random_words(rng, 300, 60, p, inject=0.5),
                   critical_window_words(p, rng, 100, 20, 60)])
    ob = decode_batch(p, W)
    labels = {region(p, (x, y)) for x, y in zip(ob.x[:, 5:-5].ravel(), ob.y[:, 5:-5].ravel())}
    assert "glue" not in labels and "critical" in labels
    assert np.isfinite(glue_det_bound(p, 41))


def test_escape_under_f0_implies_escape_under_f(p, rng):
    # points leaving Q under F0 within k_c steps also leave under F
    count = 0
    while count < 2000:
        pt = (rng.random(), rng.random())
        q0 = q1 = pt
        n0 = n1 = None
        for k in range(p.k_c + 1):
            if n0 is None:
                q0 = f0_apply(p, q0)
                if is_escaped(q0) or rectangle_of(p, q0) is None:
                    n0 = k
            if n1 is None:
                q1 = apply(p, q1)
                if is_escaped(q1) or rectangle_of(p, q1) is None:
                    n1 = k
        if n0 is None:
            continue
        count += 1
        assert n1 is not None and n1 <= n0


def test_cubic_solver_known_roots():
    assert solve_cubic_real(1, 0, 0, 0) == [0.0]
    assert solve_cubic_real(1, 0, -1, 0) == pytest.approx([-1, 0, 1], abs=1e-14)
    with pytest.raises(CriticalMapError):
        solve_cubic_real(0, 1, 1, 1)


def _bisection_roots(a, b, c):
    f = lambda t: ((t + a) * t + b) * t + c
    R = 1 + max(abs(a), abs(b), abs(c))
    grid = np.linspace(-R, R, 4001)
    vals = f(grid)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        lo, hi = grid[i], grid[i + 1]
        for _ in range(80):
            mid = (lo + hi) / 2
            if np.sign(f(mid)) == np.sign(f(lo)):
                lo = mid
            else:
                hi = mid
        roots.append((lo + hi) / 2)
    return roots


def test_cubic_solver_against_bisection(rng):
    for _ in range(10000):
        a, b, c = rng.normal(size=3) * 3
        got = solve_cubic_real(1.0, a, b, c)
        want = _bisection_roots(a, b, c)
        # near-double roots can hide a sign change from the grid; compare only what the oracle resolves
        for r in want:
            assert min(abs(g - r) for g in got) < 1e-8 * max(1, abs(r))
        for g in got:
            assert abs(((g + a) * g + b) * g + c) <= 1e-12 * (1 + abs(a) + abs(b) + abs(c)) * max(1, abs(g)) ** 3


def test_depressed_root_float_and_mp():
    for pc, qc in ((0.0, -8.0), (3.0, 1.0), (1e-12, -1e-30)):
        t = depressed_cubic_root(pc, qc)
        assert abs(t ** 3 + pc * t + qc) <= 1e-12 * max(1.0, abs(qc))
        with mpmath.workdps(50):
            tm = depressed_cubic_root(mpmath.mpf(pc), mpmath.mpf(qc))
            assert isinstance(tm, mpmath.mpf)
            assert abs(tm ** 3 + pc * tm + qc) < mpmath.mpf(10) ** -40
