"""Parameter ledger, synthesis and validation for the perturbed horseshoe.

All constants of the construction live in an immutable :class:`ParamSet`.
:func:`solve_params` builds an admissible set from a few hints and
:func:`validate` lists every inequality with its margin.

Margins are relative: for ``lhs < rhs`` the margin is
``(rhs - lhs) / max(|lhs|, |rhs|)``; for equalities it is
``EQ_TOL - relative_error``.  A condition passes iff its margin is > 0.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

EQ_TOL = 1e-12
MARGIN_BIG = 2.0

# symbol -> row (1 top, 2 middle, 3 bottom) and column
def row_of(symbol: int) -> int:
    return (symbol - 1) // 3 + 1


def col_of(symbol: int) -> int:
    return (symbol - 1) % 3 + 1


class ParamError(ValueError):
    """Raised for unusable parameter sets or unsatisfiable hints."""


@dataclass(frozen=True)
class SolverHints:
    """Inputs of :func:`solve_params`.

    ``k_c=None`` picks the smallest admissible value for ``itinerary``,
    the repeating forward word of the image of the critical point.
    """

    sigma: float = 40.0
    rho: float = 30.0
    lam: float = 40.0 ** -1.1
    k_c: int | None = None
    itinerary: tuple[int, ...] = (8, 1, 6)
    eps_fraction: float = 0.1
    theta: float = 0.0


@dataclass(frozen=True)
class ParamSet:
    lam: float
    sigma: float
    rho: float
    d: float
    l0: float
    c: float
    b: float
    eps1: float
    A: float
    beta_max: float
    alpha_max: float
    n_c: int
    k_c: int
    k1: int
    k2: int
    D: float
    theta: float
    xi2: float
    Delta: float
    itinerary: tuple[int, ...] = field(default=(8, 1, 6))

    # geometry helpers -------------------------------------------------
    @property
    def slot(self) -> float:
        """Distance between consecutive column (or row) origins."""
        return self.l0 + self.d

    def rate(self, symbol: int) -> float:
        return self.rho if row_of(symbol) == 1 else self.sigma

    def row_bottom(self, row: int) -> float:
        return {1: 2 * self.slot, 2: self.slot, 3: 0.0}[row]

    def col_left(self, col: int) -> float:
        return (col - 1) * self.slot

    def with_theta(self, theta: float) -> "ParamSet":
        return replace(self, theta=float(theta))

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        out = asdict(self)
        out["itinerary"] = list(self.itinerary)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSet":
        kw = {}
        for f in fields(cls):
            if f.name not in data:
                if f.name == "itinerary":
                    continue
                raise ParamError(f"missing field {f.name}")
            val = data[f.name]
            if f.name == "itinerary":
                if isinstance(val, str):
                    val = [int(ch) for ch in val if ch.isdigit()]
                kw[f.name] = tuple(int(v) for v in val)
            elif f.name in ("n_c", "k_c", "k1", "k2"):
                kw[f.name] = int(float(val))
            else:
                kw[f.name] = float(val)
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ParamSet":
        return cls.from_dict(json.loads(text))

    def to_kv(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if key == "itinerary":
                val = "".join(str(s) for s in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "ParamSet":
        return cls.from_dict(parse_kv(text))


def parse_kv(text: str) -> dict:
    """Parse flat ``key=value`` text; ``#`` starts a comment."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamError(f"malformed line: {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


@dataclass(frozen=True)
class ConditionEntry:
    id: str
    equation: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    entries: tuple[ConditionEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[ConditionEntry]:
        return [e for e in self.entries if not e.passed]

    def __getitem__(self, cid: str) -> ConditionEntry:
        for e in self.entries:
            if e.id == cid:
                return e
        raise KeyError(cid)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "equation", "lhs", "rhs", "margin", "pass"])
        for e in self.entries:
            w.writerow([e.id, e.equation, repr(e.lhs), repr(e.rhs), repr(e.margin), int(e.passed)])
        return buf.getvalue()


# ----------------------------------------------------------------------
# helpers

def _less(cid, eq, lhs, rhs, strict=True):
    scale = max(abs(lhs), abs(rhs))
    margin = (rhs - lhs) / scale if scale > 0 else 0.0
    ok = margin > 0 if strict else (margin > 0 or lhs == rhs)
    if not strict and lhs == rhs:
        margin = EQ_TOL
    return ConditionEntry(cid, eq, float(lhs), float(rhs), float(margin), bool(ok))


def _equal(cid, eq, lhs, rhs):
    scale = max(abs(lhs), abs(rhs))
    err = abs(lhs - rhs) / scale if scale > 0 else 0.0
    margin = EQ_TOL - err
    return ConditionEntry(cid, eq, float(lhs), float(rhs), float(margin), margin > 0)


def _flag(cid, eq, ok):
    return ConditionEntry(cid, eq, float(ok), 1.0, 1.0 if ok else -1.0, bool(ok))


def critical_word(itinerary, length):
    """Forward symbols s_0, s_1, ... of the critical point: 4 then the itinerary."""
    out = [4]
    i = 0
    while len(out) < length:
        out.append(itinerary[i % len(itinerary)])
        i += 1
    return out


def minimal_kc(itinerary) -> int:
    """Smallest k >= 1 with s_{k+1} in a middle-row rectangle (5 or 6)."""
    word = critical_word(itinerary, 3 * len(itinerary) + 3)
    for k in range(1, len(word) - 1):
        if word[k + 1] in (5, 6):
            return k
    raise ParamError("itinerary never visits R5 or R6")


def visit_counts(itinerary, k_c, sigma_rows=(2, 3)):
    """(k1, k2): sigma-rate and rho-rate visits among s_0..s_{k_c}."""
    word = critical_word(itinerary, k_c + 1)
    k2 = sum(1 for s in word if row_of(s) == 1)
    return len(word) - k2, k2


def periodic_height(p_like, itinerary):
    """Height of the periodic point whose forward word repeats ``itinerary``."""
    from .basemap import branch_apply

    scale, shift = 1.0, 0.0  # y_m = scale * y_0 + shift
    for s in itinerary:
        v0 = branch_apply(p_like, row_of(s), 0.0, 0.0)[1]
        v1 = branch_apply(p_like, row_of(s), 0.0, 1.0)[1]
        slope = v1 - v0
        scale, shift = slope * scale, slope * shift + v0
    return shift / (1.0 - scale)


def check_itinerary(itinerary):
    from .basemap import transition_matrix

    A = transition_matrix()
    word = list(itinerary) + [itinerary[0]]
    if any(s in (4, 7) for s in itinerary):
        raise ParamError("itinerary must avoid symbols 4 and 7")
    if not any(s in (5, 6) for s in itinerary) or not any(s in (1, 2, 3) for s in itinerary):
        raise ParamError("itinerary must visit {5,6} and {1,2,3}")
    if A[3, itinerary[0] - 1] == 0:
        raise ParamError("symbol 4 cannot be followed by the itinerary start")
    for a, b in zip(word, word[1:]):
        if A[a - 1, b - 1] == 0:
            raise ParamError(f"inadmissible transition {a}->{b}")


# ----------------------------------------------------------------------

def solve_params(hints: SolverHints = SolverHints()) -> ParamSet:
    """Synthesize an admissible :class:`ParamSet` from ``hints``."""
    lam, sigma, rho = float(hints.lam), float(hints.sigma), float(hints.rho)
    if not all(math.isfinite(v) and v > 0 for v in (lam, sigma, rho)):
        raise ParamError("hints must be positive and finite")
    if not lam < 1:
        raise ParamError("λ < 1 required")
    q_rho, q_sigma = math.log(lam) / math.log(rho), math.log(lam) / math.log(sigma)
    if not (-1.2 < q_rho < q_sigma < -1):
        raise ParamError("hints violate −1.2 < log λ/log ρ < log λ/log σ < −1")
    if not lam < 1 / 3:
        raise ParamError("λ < 1/3 required")

    itinerary = tuple(hints.itinerary)
    check_itinerary(itinerary)
    kmin = minimal_kc(itinerary)
    k_c = kmin if hints.k_c is None else int(hints.k_c)
    if critical_word(itinerary, k_c + 2)[k_c + 1] not in (5, 6):
        raise ParamError(f"k_c={k_c} incompatible: F0^(k_c+1)(ξ) must lie in R5 ∪ R6")

    l0 = max(lam, 1 / rho)
    d = (1 - 3 * l0) / 2
    k1, k2 = visit_counts(itinerary, k_c)
    beta = 0.5 * d * sigma ** -k1 * rho ** -k2
    c = sigma / beta**2
    b = 2 * c * beta

    n_c = None
    for n in range(1, 400):
        alpha = l0 * lam**n
        if lam * beta**2 / 10 < alpha <= beta**2 / 10:
            n_c = n
            break
    if n_c is None:
        raise ParamError("no integer n_c satisfies λβ²/10 < l0·λ^n ≤ β²/10")
    alpha = l0 * lam**n_c

    bounds = [
        lam * alpha / (2 * beta),
        lam ** (n_c + 2) / (2 * beta),
        l0 * lam ** (n_c + 1) / (2 * beta),
        beta / 15,
        1 / (8 * beta**2),
        1 / (3 * c * beta),
    ]
    eps1 = hints.eps_fraction * min(bounds)
    A = c / (8 * eps1)

    slope = 2**3 * 3**4 / d**3 * beta**2 * eps1
    D0 = 2**3 * 3 * 7 * (19 * beta**2 + alpha) / d**3 * eps1 / (1 - slope)
    D = max(1.0, 10 * D0)

    from .basemap import branch_inverse

    base = ParamSet(lam, sigma, rho, d, l0, c, b, eps1, A, beta, alpha, n_c, k_c,
                    k1, k2, D, float(hints.theta), 0.5, 0.0, itinerary)
    xi_img = periodic_height(base, itinerary)
    xi2 = branch_inverse(base, 2, 0.0, xi_img)[1]
    base = replace(base, xi2=xi2)
    return replace(base, Delta=max_abs_det(base))


def max_abs_det(p: ParamSet, glue: bool = False) -> float:
    """Supremum of |det DF| over the zones visited by the invariant set.

    Linear zones give λσ (σ > ρ); the cubic zone gives ε₁(b + cβ) at
    y = −β.  With ``glue=True`` the blend collar, which no invariant
    point visits, is sampled numerically and included.
    """
    vals = [p.lam * p.sigma, p.lam * p.rho, p.eps1 * (p.b + p.c * p.beta_max)]
    if glue:
        from .critmap import glue_det_bound

        vals.append(glue_det_bound(p))
    return max(vals)


_INT_FIELDS = ("n_c", "k_c", "k1", "k2")


def validate(p: ParamSet) -> ConditionReport:
    """Evaluate every condition of the construction on ``p``."""
    for f in fields(p):
        val = getattr(p, f.name)
        if f.name == "itinerary":
            continue
        if not math.isfinite(float(val)):
            raise ParamError(f"non-finite field: {f.name}")
        if f.name in _INT_FIELDS and (int(val) != val or val <= 0):
            raise ParamError(f"field must be a positive integer: {f.name}")

    lam, s, r, d, l0 = p.lam, p.sigma, p.rho, p.d, p.l0
    c, b, e, A, beta, alpha = p.c, p.b, p.eps1, p.A, p.beta_max, p.alpha_max
    P = s ** -p.k1 * r ** -p.k2
    E = []
    q_rho = math.log(lam) / math.log(r) if lam > 0 and r > 1 else float("nan")
    q_sig = math.log(lam) / math.log(s) if lam > 0 and s > 1 else float("nan")
    E.append(_less("(1a)", "rate ordering", -1.2, q_rho))
    E.append(_less("(1b)", "rate ordering", q_rho, q_sig))
    E.append(_less("(1c)", "rate ordering", q_sig, -1.0))
    E.append(_less("λ < 1/3", "layout", lam, 1 / 3))
    E.append(_less("σ > 3", "layout", 3.0, s))
    E.append(_less("ρ > 3", "layout", 3.0, r))
    E.append(_less("σ > ρ", "rate ordering", r, s))
    E.append(_equal("geometry", "3l0+2d=1", 3 * l0 + 2 * d, 1.0))
    E.append(_less("l0 ≥ λ", "layout", lam, l0, strict=False))
    E.append(_less("l0 ≥ 1/ρ", "layout", 1 / r, l0, strict=False))
    E.append(_less("(3a)", "box height", l0 * P, beta, strict=False))
    E.append(_less("(3b)", "box height", beta, d * P, strict=False))
    E.append(_equal("(3c)", "box width", alpha, l0 * lam**p.n_c))
    E.append(_less("(4a-lo)", "cubic coefficients", 1.0, 3 * c * beta))
    E.append(_less("(4a-hi)", "cubic coefficients", 3 * c * beta, 1 / e))
    E.append(_equal("(4b)", "cubic coefficients", b, 2 * c * beta))
    E.append(_less("(4c)", "cubic coefficients", MARGIN_BIG, A * d * e / (3 * c * beta), strict=False))
    E.append(_equal("(4d)", "cubic coefficients", A, c / (8 * e)))
    E.append(_less("(4d-big)", "cubic coefficients", 1.0, A))
    E.append(_less("(5a-1)", "image placement", c * beta**3, 2 * d / 3 * s * P))
    E.append(_less("(5a-2)", "image placement", c * beta**3 + 3 * c * beta * alpha, 2 * d / 3 * s * P))
    E.append(_less("(5b)", "image placement", 2 * e * beta, l0 * lam ** (p.n_c + 1)))
    E.append(_less("(5b')", "image width", 2 * e * beta, lam ** (p.n_c + 2)))
    E.append(_less("(5c)", "image placement", 2 * l0 * s * P + c * beta * alpha - c * beta**3, c * beta**3))
    E.append(_equal("(6)", "box height", beta, 0.5 * d * P))
    E.append(_less("(7-lo)", "box aspect", lam * beta**2 / 10, alpha))
    E.append(_less("(7-hi)", "box aspect", alpha, beta**2 / 10, strict=False))
    E.append(_equal("(8)", "vertical match", c * beta**2, s))
    E.append(_less("(ε-a)", "ε smallness", 2 * e * beta, lam * alpha))
    E.append(_less("(ε-b)", "ε smallness", 15 * e, beta))
    E.append(_less("(ε-c)", "ε smallness", e * beta**2, 1 / 8))
    E.append(_less("18/(d²A) < 1", "cone slack", 18 / (d**2 * A), 1.0))
    E.append(_less("18σ/(d²A) < 1", "cone slack", 18 * s / (d**2 * A), 1.0))
    E.append(_less("Δ < 1", "contraction rate", p.Delta, 1.0))
    E.append(_less("n_c > 5", "entry run", 5.0, float(p.n_c)))
    word = critical_word(p.itinerary, p.k_c + 2)
    E.append(_flag("k_c itinerary", "F0^(k_c+1)(ξ) ∈ R5∪R6", word[p.k_c + 1] in (5, 6)))
    k1, k2 = visit_counts(p.itinerary, p.k_c)
    E.append(_flag("k1,k2 counts", "visit counts", (k1, k2) == (p.k1, p.k2)))
    return ConditionReport(tuple(E))
