import dataclasses
import math

import pytest

from horseshoe_lab.params import (ParamError, ParamSet, SolverHints, max_abs_det, parse_kv,
                                  solve_params, validate)


def test_default_solution_passes_every_condition(p):
    rep = validate(p)
    assert rep.passed
    assert all(e.margin > 0 for e in rep.entries)
    assert len(set(rep.ids())) == len(rep.ids())


def test_default_constants(p):
    assert p.lam == pytest.approx(40 ** -1.1)
    assert (p.n_c, p.k_c, p.k1, p.k2) == (6, 2, 2, 1)
    assert 3 * p.l0 + 2 * p.d == pytest.approx(1.0, abs=1e-15)
    # normalizations of the synthesis
    # cβ² = σ: the cubic meets the linear branch height at η = ±β
    assert p.c * p.beta_max ** 2 == pytest.approx(p.sigma, rel=1e-12)
    assert p.b == pytest.approx(2 * p.c * p.beta_max, rel=1e-12)
    assert p.A == pytest.approx(p.c / (8 * p.eps1), rel=1e-12)
    # half of the upper bound l0 ≤ β·σ^k1·ρ^k2 ≤ d, so the box sits inside its generation rectangle
    assert p.beta_max == pytest.approx(p.d / 2 * p.sigma ** -p.k1 * p.rho ** -p.k2, rel=1e-12)
    assert p.l0 <= p.beta_max * p.sigma ** p.k1 * p.rho ** p.k2 <= p.d
    assert p.alpha_max == pytest.approx(p.l0 * p.lam ** p.n_c, rel=1e-12)
    assert p.lam * p.beta_max ** 2 / 10 < p.alpha_max <= p.beta_max ** 2 / 10
    assert 18 / (p.d ** 2 * p.A) < 1
    assert p.sigma > p.rho


def test_tampered_b_fails_on_4b(p):
    rep = validate(dataclasses.replace(p, b=1.5 * p.b))
    assert not rep.passed
    assert "(4b)" in [e.id for e in rep.failures()]


def test_large_lambda_fails(p):
    rep = validate(dataclasses.replace(p, lam=0.4))
    assert "λ < 1/3" in [e.id for e in rep.failures()]


def test_non_finite_field_rejected(p):
    with pytest.raises(ParamError, match="c"):
        validate(dataclasses.replace(p, c=math.nan))


def test_hints_violating_ordering_rejected():
    with pytest.raises(ParamError):
        solve_params(SolverHints(sigma=30.0, rho=40.0))


def test_incompatible_kc_rejected():
    with pytest.raises(ParamError):
        solve_params(SolverHints(k_c=3))


def test_refreshability_keeps_validity(p):
    # larger c with cβ² = 1 held, or a smaller ε₁, keeps every margin positive
    q = dataclasses.replace(p, eps1=p.eps1 / 2, A=p.c / (4 * p.eps1))
    assert validate(q).passed


def test_max_abs_det(p):
    assert max_abs_det(p) < 1
    assert max_abs_det(p) >= p.lam * p.sigma
    assert 3 * p.eps1 * p.c * p.beta_max <= max_abs_det(p) + 1e-15


def test_serialization_roundtrip(p):
    assert ParamSet.from_kv(p.to_kv()) == p
    assert ParamSet.from_json(p.to_json()) == p
    assert parse_kv("a = 1 # note\n\nb=x\n") == {"a": "1", "b": "x"}
    with pytest.raises(ParamError):
        parse_kv("no equals sign")


def test_condition_csv_columns(p):
    head = validate(p).to_csv().splitlines()[0]
    assert head == "id,equation,lhs,rhs,margin,pass"
