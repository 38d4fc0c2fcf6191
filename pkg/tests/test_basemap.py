import numpy as np
import pytest

from horseshoe_lab.basemap import (BRANCHES, Escaped, admissible, f0_apply, f0_inverse, f0_jacobian,
                                   column_bounds, gen_rectangle, is_escaped, rectangle_of, stripe_bounds,
                                   transition_matrix)
from horseshoe_lab.params import col_of, row_of


def test_transition_matrix_structure():
    A = transition_matrix()
    assert (A.sum(axis=1) == 3).all() and (A.sum(axis=0) == 3).all()
    assert A[7, 0] == 1 and A[0, 0] == 0
    assert list(A[7]) == [1, 0, 0, 1, 0, 0, 1, 0, 0]
    # returned copy cannot corrupt the module table
    A[0, 0] = 1
    assert transition_matrix()[0, 0] == 0


def test_labeling():
    assert [row_of(i) for i in range(1, 10)] == [1, 1, 1, 2, 2, 2, 3, 3, 3]
    assert [col_of(i) for i in range(1, 10)] == [1, 2, 3] * 3
    assert {r: BRANCHES[r].target_col for r in (1, 2, 3)} == {1: 3, 2: 2, 3: 1}


def test_fixed_point_and_escape(p):
    assert f0_apply(p, (0.0, 0.0)) == (0.0, 0.0)
    gap = (0.5, p.slot - p.d / 2)
    assert f0_apply(p, gap) is Escaped and is_escaped(f0_apply(p, gap))
    assert f0_inverse(p, (0.0, 0.0)) == (0.0, 0.0)
    assert is_escaped(f0_inverse(p, (p.l0 + p.d / 2, 0.5)))


def _sample(p, rng, s):
    (x0, x1), (y0, y1) = column_bounds(p, col_of(s)), stripe_bounds(p, row_of(s))
    return x0 + (x1 - x0) * rng.random(), y0 + (y1 - y0) * rng.random()


def test_r8_maps_into_first_column(p, rng):
    lo, hi = column_bounds(p, 1)
    for _ in range(50):
        img = f0_apply(p, _sample(p, rng, 8))
        assert lo <= img[0] <= hi
        assert rectangle_of(p, img) in (1, 4, 7, None)


def test_inverse_roundtrip(p, rng):
    for s in range(1, 10):
        for _ in range(3):
            pt = _sample(p, rng, s)
            back = f0_inverse(p, f0_apply(p, pt))
            assert back == pytest.approx(pt, abs=1e-14)


def test_jacobian_is_diagonal_and_contracts_area(p):
    for s in range(1, 10):
        pt = (sum(column_bounds(p, col_of(s))) / 2, sum(stripe_bounds(p, row_of(s))) / 2)
        J = f0_jacobian(p, pt)
        assert J[0, 1] == 0 and J[1, 0] == 0
        assert abs(J[0, 0]) == pytest.approx(p.lam)
        assert abs(J[1, 1]) == pytest.approx(p.rate(s))
        assert abs(np.linalg.det(J)) < 1


def test_rectangle_lookup(p):
    assert rectangle_of(p, (0.0, 0.0)) == 7
    assert rectangle_of(p, (0.0, 1.0)) == 1
    assert rectangle_of(p, (0.0, p.xi2)) == 4
    assert rectangle_of(p, (0.5, p.l0 + p.d / 2)) is None


def test_gen_rectangle_sizes(p):
    for n in range(1, 6):
        r = gen_rectangle(p, (7,) * n, (7,))
        assert r.x0 == 0.0
        assert r.width == pytest.approx(p.lam ** (n + 1), rel=1e-10)
        assert r.width <= p.lam ** n * p.l0
    r = gen_rectangle(p, (), (8, 1, 6))
    assert r.height == pytest.approx(1 / (p.sigma * p.rho * p.sigma), rel=1e-10)
    assert r.height <= p.l0 / (p.sigma * p.rho)
    assert gen_rectangle(p, (1, 1), ()) is None
    assert not admissible((1, 1))


def test_gen_rectangle_nesting(p, rng):
    from horseshoe_lab.orbits import random_words
    for w in random_words(rng, 30, 10, p):
        w = tuple(int(s) for s in w)
        for n in range(1, 4):
            big = gen_rectangle(p, w[5 - n:5], w[5:8])
            assert big.contains(gen_rectangle(p, w[4 - n:5], w[5:8]), 1e-15)
            assert big.contains(gen_rectangle(p, w[5 - n:5], w[5:9]), 1e-15)


def test_image_of_cylinder_lands_in_shifted_cylinder(p, rng):
    from horseshoe_lab.orbits import random_words
    for w in random_words(rng, 20, 8, p):
        w = tuple(int(s) for s in w)
        r = gen_rectangle(p, w[:3], w[3:])
        shifted = gen_rectangle(p, w[:4], w[4:])
        corners = [f0_apply(p, (x, y)) for x in (r.x0, r.x1) for y in (r.y0, r.y1)]
        xs, ys = zip(*corners)
        assert shifted.x0 - 1e-14 <= min(xs) and max(xs) <= shifted.x1 + 1e-14
        assert shifted.y0 - 1e-14 <= min(ys) and max(ys) <= shifted.y1 + 1e-14


def test_csv_row(p):
    assert gen_rectangle(p, (7,), (4,)).csv_row()[0] == "7.4"
