import mpmath
import numpy as np
import pytest

from horseshoe_lab import symbolic as S
from horseshoe_lab.basemap import column_bounds, gen_rectangle
from horseshoe_lab.critmap import frame, region
from horseshoe_lab.params import col_of


def test_parse_and_str():
    w = S.SymbolWord.parse("777.4816")
    assert w.backward == (7, 7, 7) and w.forward == (4, 8, 1, 6)
    assert str(w) == "777.4816" and w.split == 3 and w.is_admissible()
    for bad in ("7774816", "7.7.4", "7a.4", "70.4"):
        with pytest.raises(S.WordError):
            S.SymbolWord.parse(bad)


def test_decode_rejects_inadmissible(p):
    with pytest.raises(S.WordError):
        S.decode(p, "66.6")
    with pytest.raises(S.WordError):
        S.decode(p, "777.")


def test_code_of_fixed_point(p):
    res = S.code(p, (0.0, 0.0), 10, 10)
    assert res.complete
    assert res.word.symbols == (7,) * 20


def test_code_of_critical_point(p):
    # float rounding of ξ is amplified by ~40 per step, so keep the float window short
    res = S.code(p, frame(p).xi, 8, 6)
    assert res.complete
    assert res.word.backward == (7,) * 8
    assert res.word.forward == (4, 8, 1, 6, 8, 1)
    d = S.decode(p, "7" * 20 + "." + "4" + "816" * 8)
    res = S.code(p, (d.x, d.y), 20, 25, dps=d.dps)
    assert str(res.word) == str(d.word)


def test_code_reports_escape(p):
    res = S.code(p, (0.5, 0.3), 5, 5)
    assert not res.complete and res.escape == 0


def test_roundtrip(p, rng):
    words = S.random_symbol_words(p, rng, 100, 15, 15, inject=0.3)
    assert S.roundtrip_failures(p, words) == []


def test_decoded_point_in_generation_rectangle(p, rng):
    for w in S.random_symbol_words(p, rng, 50, 6, 6):
        d = S.decode(p, w)
        R = gen_rectangle(p, w.backward, w.forward)
        assert R.x0 <= d.x <= R.x1 and R.y0 <= d.y <= R.y1
        assert R.x1 - R.x0 <= d.width_bound + 1e-16
        assert R.y1 - R.y0 <= d.height_bound + 1e-16


def test_decode_through_critical_box(p):
    d = S.decode(p, "7777777777.48168")
    assert region(p, d.point) == "critical"
    assert abs(d.x - column_bounds(p, col_of(4))[0]) < p.lam ** 10


def test_working_dps_grows_with_window(p):
    assert S.working_dps(p, 40, 40) > S.working_dps(p, 10, 10) >= 50


def test_expansivity(p, rng):
    wa = S.random_symbol_words(p, rng, 60, 10, 10)
    wb = S.random_symbol_words(p, rng, 60, 10, 10)
    pairs = [(S.decode(p, a), S.decode(p, b)) for a, b in zip(wa, wb)]
    assert S.expansivity_check(p, pairs)


def test_close_points_separate(p):
    a = S.decode(p, "816816816.816816816")
    b = S.decode(p, "816816816.816816819")
    n = S.separation_time(p, a, b, 9)
    assert n is not None and n >= 6


def test_holder_and_cube_law(p, rng):
    qs = list(range(2, 9))
    fit = S.holder_modulus(p, S.common_window_pairs(p, rng, qs, 4), S.cube_law_pairs(p, qs))
    assert fit.exponent > 0
    assert fit.cube_law_ok and fit.cube_law_worst <= 1
    with pytest.raises(ValueError):
        S.holder_modulus(p, [])


def test_cube_law_pairs_share_future(p):
    for q, a, b in S.cube_law_pairs(p, range(2, 9)):
        assert q >= 4
        assert a.forward[:q] == b.forward[:q] and a.forward[q] != b.forward[q]
        assert a.is_admissible() and b.is_admissible()
