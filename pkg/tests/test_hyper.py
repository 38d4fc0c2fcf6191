import math

import numpy as np
import pytest

from horseshoe_lab import cones, hyper
from horseshoe_lab.orbits import batch_jacobians, decode_batch, random_words


@pytest.fixture(scope="module")
def batch(p):
    rng = np.random.default_rng(7)
    ob = decode_batch(p, random_words(rng, 200, 200, p, inject=0.3))
    oc = cones.orbit_cones(p, ob)
    return ob, oc, cones.harvest_tubes(p, ob, oc)


def test_tube_expansion(p, batch):
    tubes = batch[2]
    assert len(tubes) > 1000
    assert all(hyper.tube_expansion_check(p, t) for t in tubes)


def test_tube_check_rejects_partial_segment(p, batch):
    t = batch[2][0]
    bad = cones.Tube(t.start, t.visit, t.end, t.n, t.m, t.x, t.eta, t.jacobians[:-1], t.slopes)
    with pytest.raises(ValueError):
        hyper.tube_expansion_check(p, bad)


def test_entry_growth_is_sigma_power(p, batch):
    for t in batch[2][:200]:
        assert hyper.entry_vertical_growth(t) == pytest.approx(p.sigma ** t.n, rel=1e-12)


def test_exit_step_ratio_at_least_eps(p, batch):
    assert min(hyper.exit_step_ratio(t) for t in batch[2]) >= p.eps1


def test_complete_piece_growth(p, batch):
    ob, oc, _ = batch
    J = batch_jacobians(p, ob)
    rng = np.random.default_rng(3)
    checked = 0
    for row in range(40):
        iv = hyper.tube_intervals(oc, row)
        for _ in range(5):
            m1 = int(rng.integers(5, 100))
            m2 = int(rng.integers(m1 + 5, 190))
            rec = hyper.complete_piece_growth(p, ob, oc, row, m1, m2, J[row])
            assert rec.complete == hyper.is_complete(iv, m1, m2)
            if rec.complete:
                assert rec.total >= hyper.complete_piece_bound(p, rec)
                checked += 1
    assert checked > 20


def test_incomplete_piece_flagged(p, batch):
    ob, oc, tubes = batch
    row = next(i for i in range(ob.shape[0]) if hyper.tube_intervals(oc, i))
    a, b = hyper.tube_intervals(oc, row)[0]
    rec = hyper.complete_piece_growth(p, ob, oc, row, a + 1, b + 3)
    assert not rec.complete and math.isnan(rec.total)


def test_lyapunov_fixed_and_period3(p):
    fixed = hyper.lyapunov_unstable(p, hyper.periodic_word((9,), 200)[None, :]).exponent[0]
    assert abs(fixed - math.log(p.sigma)) < 1e-10
    per3 = hyper.lyapunov_unstable(p, hyper.periodic_word(p.itinerary, 3000)[None, :]).exponent[0]
    assert abs(per3 - (2 * math.log(p.sigma) + math.log(p.rho)) / 3) < 1e-10


def test_lyapunov_floor(p, rng):
    res = hyper.lyapunov_unstable(p, random_words(rng, 50, 2000, p, inject=0.3))
    assert res.exponent.min() >= math.log(p.rho) / 5 - 1e-3


def test_directions_converge(p):
    word = hyper.periodic_word(p.itinerary, 150)
    eu, es = hyper.direction_at(p, word, 75, 60)
    assert eu.residual < 1e-12 and es.residual < 1e-12
    # diagonal cycle: E^u vertical, E^s horizontal
    assert abs(eu.vector[0]) < 1e-12 and abs(es.vector[1]) < 1e-12
    with pytest.raises(ValueError):
        hyper.direction_at(p, word, 10, 60)


def test_det_angle_identity(rng):
    for _ in range(200):
        M = rng.normal(size=(2, 2)) * 10 ** rng.uniform(-3, 3, size=(2, 2))
        u, w = rng.normal(size=2), rng.normal(size=2)
        assert hyper.det_angle_residual(M, u, w) < 1e-9


def test_stable_contraction(p, batch):
    ob, oc, _ = batch
    sc = hyper.stable_contraction_check(p, ob, oc, rng=np.random.default_rng(1))
    assert sc.windows > 1000 and sc.violations == 0


def test_doubling_grid_and_zero_theta(p):
    Ns = []
    for th in hyper.theta_grid(p):
        r = hyper.uniform_doubling_time(p, th, n_points=200)
        assert not r.failed
        Ns.append(r.N)
    # smaller θ never doubles faster
    assert Ns == sorted(Ns)
    r0 = hyper.uniform_doubling_time(p, 0.0, n_points=50)
    assert r0.failed and r0.cap == hyper.ZERO_THETA_CAP
    assert r0.witness["vector"] == [1.0, 0.0]


def test_n_prime(p):
    for th in hyper.theta_grid(p):
        n = hyper.n_prime(p, th)
        assert p.A * th * p.rho ** n > 2
        assert n == 1 or p.A * th * p.rho ** (n - 1) <= 2


def test_fit_linear_floor():
    assert hyper.fit_linear_floor([1.0, 2.0], [3.0, 4.0]) == 2.0
