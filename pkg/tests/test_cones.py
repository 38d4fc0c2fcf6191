import math

import numpy as np
import pytest

from horseshoe_lab import cones
from horseshoe_lab.critmap import frame
from horseshoe_lab.orbits import critical_window_words, decode_batch, random_words


def test_cone_membership():
    u = cones.Cone(2.0)
    assert u.contains([1.0, 2.0]) and not u.contains([1.0, 2.0], strict=True)
    assert u.contains([0.0, 1.0]) and not u.contains([1.0, 1.0])
    s = u.complement()
    assert s.kind == "stable" and s.contains([1.0, 1.0])
    v = cones.Cone.vertical_line()
    assert v.contains([0.0, 3.0]) and not v.contains([1e-30, 3.0])
    with pytest.raises(ValueError):
        cones.Cone(-1.0)
    with pytest.raises(ValueError):
        cones.Cone(1.0, kind="sideways")


def test_generic_slope(p):
    assert cones.generic_slope(p) == pytest.approx(p.A * p.d / (3 * p.c * p.beta_max), rel=1e-14)


def test_cone_on_critical_orbit_rejected(p):
    with pytest.raises(cones.ConeError):
        cones.unstable_cone(p, frame(p).xi)


def test_invariance_at_free_point(p, rng):
    W = random_words(rng, 20, 41, p)
    ob = decode_batch(p, W)
    for i in range(W.shape[0]):
        pt = (float(ob.x[i, 20]), float(ob.y[i, 20]))
        assert cones.check_unstable_invariance(p, pt) > 0
        assert cones.check_stable_invariance(p, pt) > 0


def test_sweep_zero_failures(p, rng):
    res = cones.invariance_sweep(p, rng, 100, depth=20, per_orbit=20)
    assert res.x.size == 2000
    assert res.failures == 0
    # the injected critical windows put some points in every phase
    assert set(np.unique(res.phase)) >= {cones.FREE, cones.PRE, cones.POST}
    assert res.to_csv().startswith("x,y,phase,margin_u,margin_s\n")


def test_sweep_through_critical_windows(p, rng):
    W = critical_window_words(p, rng, 40, 20, 60)
    ob = decode_batch(p, W)
    oc = cones.orbit_cones(p, ob)
    J = cones.batch_jacobians(p, ob)
    sl, nxt = slice(20, 40), slice(21, 41)
    mu = cones.unstable_margins(J[:, sl], oc.slope[:, sl], oc.slope[:, nxt])
    ms = cones.stable_margins(J[:, sl], oc.slope[:, sl], oc.slope[:, nxt])
    assert np.all(mu > 0) and np.all(ms > 0)


@pytest.fixture(scope="module")
def tubes(p):
    rng = np.random.default_rng(7)
    ob = decode_batch(p, random_words(rng, 200, 200, p, inject=0.3))
    out = cones.harvest_tubes(p, ob)
    assert len(out) > 50
    return out


def test_tube_exit_slope_exceeds_generic(p, tubes):
    assert min(cones.exit_slope_margin(p, t) for t in tubes) > 0


def test_return_inequality(p, tubes):
    assert min(cones.return_inequality(p, t) for t in tubes) > 0


def test_n_minus_counts_sevens(p, tubes):
    for t in tubes:
        assert t.n >= p.n_c and math.isfinite(t.m)
