"""Invariant curve families, local manifolds and the cubic tangency.

Vertical curves in the critical box are graphs x(η) over η ∈ [−β, β]
(offsets from ξ) and are stored by their values at Chebyshev nodes.
Local unstable and stable manifolds are full-height or full-width graphs
computed from the orbit sweep with pinned boundary data.  A pinned
starting abscissa with a free final height traces W^u, and the dual
traces W^s.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from itertools import product

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as C

from .basemap import BRANCHES, admissible, column_bounds, stripe_bounds, successors
from .critmap import frame, region
from .orbits import critical_future, decode_scalar
from .params import ParamSet, col_of, row_of


class ManifoldError(ValueError):
    """Invalid return word, escaping orbit or unresolved construction."""


# ----------------------------------------------------------------------
# vertical curves in the critical box

def cheb_nodes(n: int, lo: float, hi: float) -> np.ndarray:
    k = np.arange(n)
    t = np.cos(np.pi * (2 * k + 1) / (2 * n))[::-1]
    return lo + (hi - lo) * (t + 1) / 2


@dataclass(frozen=True)
class VerticalCurve:
    """x(η), x'(η), x''(η) sampled at ``eta`` (offsets from ξ)."""

    eta: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray

    @classmethod
    def from_function(cls, f, df, ddf, beta: float, n: int = 48):
        e = cheb_nodes(n, -beta, beta)
        return cls(e, f(e), df(e), ddf(e))

    def interpolant(self, beta: float):
        """Chebyshev series for x on [−β, β] (argument scaled to [−1, 1])."""
        coef = C.chebfit(self.eta / beta, self.x, self.eta.size - 1)
        scale = max(float(np.max(np.abs(coef))), np.finfo(float).tiny)
        return C.chebtrim(coef, 1e-15 * scale)

    def bound_violations(self, p: ParamSet, rel_tol: float = 1e-9) -> dict:
        slope_bound = (3 * self.eta ** 2 + self.x) / (6 * p.beta_max)
        return {
            "slope": int(np.sum(np.abs(self.dx) > slope_bound * (1 + rel_tol))),
            "curvature": int(np.sum(np.abs(self.ddx) > p.D * (1 + rel_tol))),
            "range": int(np.sum((self.x < 0) | (self.x > p.alpha_max * (1 + rel_tol)))),
        }

    def in_family(self, p: ParamSet) -> bool:
        return not any(self.bound_violations(p).values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "slope"])
        for e, x, dx in zip(self.eta, self.x, self.dx):
            w.writerow([repr(float(e)), repr(float(x)), repr(float(e)), repr(float(dx))])
        return buf.getvalue()


def edge_curve(p: ParamSet, side: str = "left", n: int = 48) -> VerticalCurve:
    """Left (x ≡ 0) or right (x ≡ α) side of the critical box."""
    x0 = 0.0 if side == "left" else p.alpha_max
    return VerticalCurve.from_function(lambda e: np.full_like(e, x0), np.zeros_like,
                                       np.zeros_like, p.beta_max, n)


def random_family_curve(p: ParamSet, rng, n: int = 48) -> VerticalCurve:
    """x(η) = x0 + r·x0·η/(6β) + q·η³/(6β); lies in 𝒱.

    |r| ≤ 1/2 and |q| ≤ min(1/2, 3x0/(2β²)) keep x within [2x0/3, 4x0/3].
    """
    b = p.beta_max
    x0 = rng.uniform(0.1, 0.7) * p.alpha_max
    r = rng.uniform(-0.5, 0.5)
    q = rng.uniform(-1.0, 1.0) * min(0.5, 1.5 * x0 / b ** 2)
    return VerticalCurve.from_function(
        lambda e: x0 + r * x0 * e / (6 * b) + q * e ** 3 / (6 * b),
        lambda e: r * x0 / (6 * b) + 3 * q * e ** 2 / (6 * b),
        lambda e: 6 * q * e / (6 * b),
        b, n)


# ----------------------------------------------------------------------
# first-return words and the graph transform

def is_visit_at(p: ParamSet, word, j: int) -> bool:
    """Symbolic visit rule at index j (past and future inside ``word``)."""
    nc = p.n_c
    if j - nc - 1 < 0 or word[j] != critical_future(p)[0]:
        return False
    if any(s != 7 for s in word[j - nc:j]) or row_of(word[j - nc - 1]) != 3:
        return False
    return True


def first_return_words(p: ParamSet, max_len: int) -> list[tuple[int, ...]]:
    """Words s_1..s_r taking the critical box back to itself for the first time.

    The image of the box lies in one rectangle for k_c + 1 steps, so every
    return starts with the critical cycle prefix; it ends with a bottom-row
    symbol, at least n_c sevens and the critical symbol.
    """
    fut = critical_future(p)
    prefix = list(fut[1:])
    found = set()
    free = max_len - len(prefix) - p.n_c - 2
    for lm in range(0, free + 1):
        for mid in _paths(prefix[-1], lm):
            head = prefix + list(mid)
            for b in (7, 8, 9):
                for extra in range(0, free - lm + 1):
                    w = head + [b] + [7] * (p.n_c + extra) + [fut[0]]
                    if len(w) > max_len or not admissible(w):
                        continue
                    full = [7] * (p.n_c + 1) + [fut[0]] + w
                    if any(is_visit_at(p, full, j) for j in range(p.n_c + 2, len(full) - 1)):
                        continue
                    found.add(tuple(w))
    return sorted(found, key=lambda w: (len(w), w))


def _paths(start: int, length: int):
    if length == 0:
        yield ()
        return
    for s in successors(start):
        for rest in _paths(s, length - 1):
            yield (s,) + rest


def minimal_return_length(p: ParamSet) -> int:
    return (p.k_c + 1) + 1 + p.n_c + 1


@dataclass(frozen=True)
class ReturnMap:
    """Composite affine data along a return word s_1..s_{r-1}, then the visit."""

    n: int
    k1: int
    k2: int
    hx: float
    hy: float
    x_at_zero: float
    eta_at_zero: float


def return_map(p: ParamSet, word, dps: int = 60) -> ReturnMap:
    """Affine pieces of the return from F(ξ) + (u, v) to the box.

    x_new = x_at_zero + hx·u and η_new = eta_at_zero + hy·v, with the
    constants computed in extended precision.
    """
    word = tuple(word)
    if not word or word[-1] != critical_future(p)[0]:
        raise ManifoldError("a return word must end at the critical symbol")
    fr = frame(p)
    with mpmath.workdps(dps):
        X, Y = mpmath.mpf(fr.f_xi[0]), mpmath.mpf(fr.f_xi[1])
        hx, hy = 1.0, 1.0
        k1 = k2 = 0
        for s in word[:-1]:
            br = BRANCHES[row_of(s)]
            r = br.rate(p)
            xl = mpmath.mpf(p.col_left(br.target_col))
            X = xl + p.lam * X if br.h_sign > 0 else xl + p.lam * (1 - X)
            t = r * (Y - mpmath.mpf(p.row_bottom(row_of(s))))
            Y = t if br.v_sign > 0 else 1 - t
            hx *= br.h_sign * p.lam
            hy *= br.v_sign * r
            if r == p.sigma:
                k1 += 1
            else:
                k2 += 1
        return ReturnMap(len(word) - 1, k1, k2, hx, hy, float(X), float(Y - mpmath.mpf(p.xi2)))


@dataclass
class TransformResult:
    curve: VerticalCurve
    t: np.ndarray
    ineq16: np.ndarray
    return_map: ReturnMap


def unstable_graph_transform(p: ParamSet, curve: VerticalCurve, word, theta=None,
                             n: int | None = None) -> TransformResult:
    """Image of ``curve`` under the first return along ``word`` (s_1..s_r)."""
    word = tuple(word)
    if len(word) < p.k_c + 1:
        raise ManifoldError("a first return takes at least k_c + 1 steps")
    fut = critical_future(p)
    full = [7] * (p.n_c + 1) + [fut[0]] + list(word)
    if not admissible(full) or not is_visit_at(p, full, len(full) - 1):
        raise ManifoldError("word is not a return to the critical box")
    if any(is_visit_at(p, full, j) for j in range(p.n_c + 2, len(full) - 1)):
        raise ManifoldError("word is not a first return")
    th = p.theta if theta is None else float(theta)
    b_, c_, eps = p.b, p.c, p.eps1
    beta = p.beta_max
    coef = curve.interpolant(beta)
    dcoef = C.chebder(coef) / beta
    ddcoef = C.chebder(dcoef) / beta

    def xs(t):
        return C.chebval(t / beta, coef)

    def v(t):
        x = xs(t)
        return b_ * x - c_ * t * (t * t + x + th)

    rm = return_map(p, word)
    n = n or curve.eta.size
    eta_new = cheb_nodes(n, -beta, beta)
    # η_new = η0 + hy·v(t); v is decreasing in t on the box
    target = (eta_new - rm.eta_at_zero) / rm.hy
    lo = np.full(n, -beta)
    hi = np.full(n, beta)
    vlo, vhi = v(lo), v(hi)
    if np.any((target - vlo) * (target - vhi) > 0):
        raise ManifoldError("image does not cross the critical box")
    for _ in range(200):
        mid = (lo + hi) / 2
        vm = v(mid)
        left = (vm - target) * (vlo - target) > 0
        lo, vlo = np.where(left, mid, lo), np.where(left, vm, vlo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))):
            break
    t = (lo + hi) / 2
    x, dx, ddx = xs(t), C.chebval(t / beta, dcoef), C.chebval(t / beta, ddcoef)
    vp = (b_ - c_ * t) * dx - c_ * (3 * t * t + x + th)
    vpp = (b_ - c_ * t) * ddx - 2 * c_ * dx - 6 * c_ * t
    a = rm.hx * (-eps)
    x_new = rm.x_at_zero + a * t
    dx_new = a / (rm.hy * vp)
    ddx_new = -a * vpp / (rm.hy ** 2 * vp ** 3)
    R = p.sigma ** rm.k1 * p.rho ** rm.k2
    lhs16 = 2 * p.lam ** rm.n * eps / (R * c_ * (3 * t * t + x))
    ineq16 = lhs16 / ((3 * beta ** 2 + p.alpha_max) / (6 * beta))
    return TransformResult(VerticalCurve(eta_new, x_new, dx_new, ddx_new), t, ineq16, rm)


# ----------------------------------------------------------------------
# local manifolds from the pinned sweep

@dataclass
class CurveGraph:
    """Graph over ``grid`` (y for unstable, x for stable); ``value`` is the other coordinate."""

    kind: str
    grid: np.ndarray
    value: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    gaps: list
    glue_hits: int

    @property
    def gap(self) -> float:
        return float(np.max(np.abs(self.upper - self.lower)))

    def slopes(self) -> np.ndarray:
        return np.gradient(self.value, self.grid)

    def __call__(self, s):
        return np.interp(s, self.grid, self.value)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "slope"])
        for g, v_, sl in zip(self.grid, self.value, self.slopes()):
            x, y = (v_, g) if self.kind == "unstable" else (g, v_)
            w.writerow([repr(float(g)), repr(float(x)), repr(float(y)), repr(float(sl))])
        return buf.getvalue()


def _pinned(p, word, x_first, y_last, theta, dps):
    ob = decode_scalar(p, word, theta=theta, dps=dps, x_first=x_first, y_last=y_last)
    glue = any(region(p, (x, y)) == "glue" for x, y in zip(ob.x, ob.y))
    return ob, glue


def unstable_leaf_point(p: ParamSet, backward, y, x_first, theta=None, dps: int = 50):
    """x at height y of the pushed image of the vertical line x = x_first."""
    ob, glue = _pinned(p, tuple(backward), x_first, y, theta, dps)
    return ob.x[-1], glue


def unstable_manifold_local(p: ParamSet, backward, n_grid: int = 65, theta=None, dps: int = 50,
                            tol: float | None = None) -> CurveGraph:
    """W^u_loc of points with past ``backward`` (s_-n..s_-1) as a graph x(y), y ∈ [0,1].

    The sides of the column of s_-k, pushed forward along the last k
    symbols, bracket the leaf; k grows until the gap is below ``tol``.
    """
    backward = tuple(backward)
    if not backward or not admissible(backward):
        raise ManifoldError("inadmissible or empty backward word")
    tol = tol if tol is not None else 1e-10 * p.beta_max
    ys = np.linspace(0.0, 1.0, n_grid)
    gaps, lower, upper, hits = [], None, None, 0
    for k in range(1, len(backward) + 1):
        sub = backward[-k:]
        x0, x1 = column_bounds(p, col_of(sub[0]))
        lo, hi = [], []
        for y in ys:
            a, g1 = unstable_leaf_point(p, sub, y, x0, theta, dps)
            b, g2 = unstable_leaf_point(p, sub, y, x1, theta, dps)
            hits += g1 + g2
            lo.append(a)
            hi.append(b)
        lower = np.array([float(v) for v in lo])
        upper = np.array([float(v) for v in hi])
        gaps.append(float(max(abs(h - l) for l, h in zip(lo, hi))))
        if gaps[-1] < tol:
            break
    if gaps[-1] >= tol:
        raise ManifoldError(f"bracketing gap {gaps[-1]:.3g} above tolerance; extend the word")
    return CurveGraph("unstable", ys, (lower + upper) / 2, lower, upper, gaps, hits)


def stable_leaf_point(p: ParamSet, forward, x, y_last, theta=None, dps: int = 50):
    ob, glue = _pinned(p, tuple(forward), x, y_last, theta, dps)
    return ob.y[0], glue


def stable_manifold_local(p: ParamSet, forward, n_grid: int = 65, theta=None, dps: int = 50,
                          tol: float | None = None) -> CurveGraph:
    """W^s_loc of points with future ``forward`` (s_0..s_k) as a graph y(x), x ∈ [0,1].

    Upper and lower sides of the stripe reached after k steps, pulled
    back along the word, bracket the leaf.  The tolerance is relative to
    the height of the stripe of s_0.
    """
    forward = tuple(forward)
    if not forward or not admissible(forward):
        raise ManifoldError("inadmissible or empty forward word")
    h0 = 1.0 / p.rate(forward[0])
    tol = tol if tol is not None else 1e-10 * h0
    xs = np.linspace(0.0, 1.0, n_grid)
    gaps, lower, upper, hits = [], None, None, 0
    for k in range(1, len(forward) + 1):
        sub = forward[:k]
        lo, hi = [], []
        for x in xs:
            a, g1 = stable_leaf_point(p, sub, x, 0.0, theta, dps)
            b, g2 = stable_leaf_point(p, sub, x, 1.0, theta, dps)
            hits += g1 + g2
            lo.append(a)
            hi.append(b)
        lower = np.array([float(min(a, b)) for a, b in zip(lo, hi)])
        upper = np.array([float(max(a, b)) for a, b in zip(lo, hi)])
        gaps.append(float(max(abs(b - a) for a, b in zip(lo, hi))))
        if gaps[-1] < tol:
            break
    if gaps[-1] >= tol:
        raise ManifoldError(f"bracketing gap {gaps[-1]:.3g} above tolerance; extend the word")
    return CurveGraph("stable", xs, (lower + upper) / 2, lower, upper, gaps, hits)


# ----------------------------------------------------------------------
# local product structure

@dataclass(frozen=True)
class BracketPoint:
    x: float
    y: float
    tangential: bool


def bracket(p: ParamSet, backward, forward, theta=None, dps: int = 50) -> BracketPoint:
    """W^u_loc(past = ``backward``) ∩ W^s_loc(future = ``forward``).

    Solves y = y_s(x_u(y)) on the stripe of s_0 with both leaves
    evaluated pointwise by the pinned sweep.
    """
    backward, forward = tuple(backward), tuple(forward)
    if not admissible(backward + forward[:1]):
        raise ManifoldError("past and future do not concatenate")
    x_edge = column_bounds(p, col_of(backward[0]))[0]
    y_edge = 0.0

    def xu(y):
        return unstable_leaf_point(p, backward, y, x_edge, theta, dps)[0]

    def ys(x):
        return stable_leaf_point(p, forward, x, y_edge, theta, dps)[0]

    with mpmath.workdps(dps):
        y = ys(xu(mpmath.mpf(stripe_bounds(p, row_of(forward[0]))[0])))
        for _ in range(60):
            y_new = ys(xu(y))
            if abs(y_new - y) <= mpmath.mpf(10) ** (-dps + 10):
                y = y_new
                break
            y = y_new
        x = xu(y)
        h = mpmath.mpf(10) ** (-dps // 3)
        # tangential when the unstable leaf has vanishing dx/dy relative to its scale
        d = (xu(y + h) - xu(y - h)) / (2 * h)
        sl_s = (ys(x + h) - ys(x - h)) / (2 * h)
        tangential = abs(d * sl_s) >= 1 - 1e-6
    return BracketPoint(float(x), float(y), bool(tangential))


# ----------------------------------------------------------------------
# cubic tangency at F(ξ)

@dataclass
class TangencyReport:
    order: int
    a3: float
    a3_expected: float
    rel_err: float
    d1: float
    d2: float
    d3: float
    fit_residual: float
    angle: float

    def to_json(self) -> str:
        return json.dumps({"order": self.order, "a3": self.a3, "a3_expected": self.a3_expected,
                           "residuals": {"a3_rel": self.rel_err, "d1": self.d1, "d2": self.d2,
                                         "fit": self.fit_residual},
                           "d3": self.d3, "angle": self.angle}, sort_keys=True)


def image_of_unstable_leaf(p: ParamSet, s, theta=None, past: int = 30, dps: int = 80):
    """Offsets (u, w) from F(ξ) of the point of F(W^u_loc(ξ)) at parameter s = −η.

    W^u_loc(ξ) is the left side x = 0; the point is found by the pinned
    sweep along the past 7^past 4, with the height after the fold fixed
    by the cubic value.
    """
    th = p.theta if theta is None else theta
    fr = frame(p)
    with mpmath.workdps(dps):
        s = mpmath.mpf(s)
        eta = -s
        v = -p.c * eta * (eta * eta + th)
        y_last = mpmath.mpf(fr.f_xi[1]) + v
        word = (7,) * past + (critical_future(p)[0],)
        ob = decode_scalar(p, word, theta=th, dps=dps, x_first=0, y_last=y_last)
        return ob.x[-1] - mpmath.mpf(fr.f_xi[0]), ob.y[-1] - mpmath.mpf(fr.f_xi[1])


def stable_leaf_height(p: ParamSet, x, theta=None, depth: int = 45, dps: int = 100):
    """Height of W^s_loc(F(ξ)) above x (the leaf of the critical cycle)."""
    cyc = list(p.itinerary)
    fwd = tuple(cyc[i % len(cyc)] for i in range(depth))
    with mpmath.workdps(dps):
        a = stable_leaf_point(p, fwd, x, 0.0, dps=dps)[0]
        b = stable_leaf_point(p, fwd, x, 1.0, dps=dps)[0]
        return (a + b) / 2, abs(b - a)


def tangency_order(p: ParamSet, theta=None, n: int = 9, scale: float = 0.5,
                   dps: int = 80, tol: float = 1e-8) -> TangencyReport:
    """Order of contact of F(W^u_loc(ξ)) with W^s_loc(F(ξ)) at F(ξ)."""
    th = p.theta if theta is None else theta
    fr = frame(p)
    eps = p.eps1
    # the stable leaf through F(ξ), measured at F(ξ)
    with mpmath.workdps(dps):
        h0, width = stable_leaf_height(p, mpmath.mpf(fr.f_xi[0]), dps=dps)
        ref = h0 - mpmath.mpf(fr.f_xi[1])
        if width > mpmath.mpf(p.c) * mpmath.mpf(p.beta_max) ** 3 * 1e-20:
            raise ManifoldError("stable leaf not resolved")
    beta = p.beta_max
    hs = [scale * beta * 2.0 ** (-k) for k in range(n)]

    def w_of(s):
        u, w = image_of_unstable_leaf(p, s, th, dps=dps)
        return u, w - ref

    # least-squares cubic in s = −u/ε on symmetric samples
    S = np.array(sorted([h for h in hs] + [-h for h in hs]))
    W = np.array([float(w_of(s)[1]) for s in S])
    U = np.array([float(w_of(s)[0]) for s in S])
    if np.max(np.abs(U / eps - S)) > 1e-9 * beta:
        raise ManifoldError("unstable leaf image is not parametrized by −ε₁η")
    V = np.vander(S / beta, 4, increasing=True)
    coef, *_ = np.linalg.lstsq(V, W, rcond=None)
    fit = float(np.max(np.abs(V @ coef - W)) / max(np.max(np.abs(W)), 1e-300))
    A3 = coef[3] / beta ** 3  # w ≈ A3·s³ with s = −u/ε₁, so a3 = A3 / (−ε₁)³·(−1)^3
    a3 = A3 / eps ** 3
    expected = p.c / eps ** 3
    # Richardson-extrapolated central differences at s = 0, scaled by the cubic size
    with mpmath.workdps(dps):
        def wm(s):
            return w_of(s)[1]

        def d1(h):
            return (wm(h) - wm(-h)) / (2 * h)

        def d2(h):
            return (wm(h) - 2 * wm(0) + wm(-h)) / (h * h)

        def rich(f, h):
            return (4 * f(h / 2) - f(h)) / 3

        h = mpmath.mpf(beta) / 64
        D1 = float(rich(d1, h)) / (p.c * beta ** 2)
        D2 = float(rich(d2, h)) / (p.c * beta)
        D3 = float((wm(2 * h) - 2 * wm(h) + 2 * wm(-h) - wm(-2 * h)) / (2 * h ** 3)) / p.c
    order = 1 if abs(D1) >= tol else (2 if abs(D2) >= tol else (3 if abs(D3) >= tol else 4))
    angle = math.atan2(p.c * th, eps)
    return TangencyReport(order, float(a3), float(expected), float(abs(a3 / expected - 1)),
                          abs(D1), abs(D2), D3, fit, angle)


def transversality_angle(p: ParamSet, theta: float) -> float:
    """Angle at F(ξ) between F_θ(W^u_loc(ξ)) and the horizontal stable leaf."""
    u1, w1 = image_of_unstable_leaf(p, 1e-3 * p.beta_max, theta)
    u0, w0 = image_of_unstable_leaf(p, -1e-3 * p.beta_max, theta)
    return float(mpmath.atan2(abs(w1 - w0), abs(u1 - u0)))


# ----------------------------------------------------------------------
# closure sweep

@dataclass
class ClosureReport:
    curves: int
    words: int
    transforms: int
    violations: int
    ineq16_failures: int
    worst_slope_ratio: float


def family_closure(p: ParamSet, rng, n_curves: int = 100, max_len: int | None = None,
                   theta=None) -> ClosureReport:
    """𝒱-bounds on images of random family curves under every return word."""
    max_len = max_len or minimal_return_length(p) + p.k_c + 1
    words = first_return_words(p, max_len)
    if not words:
        raise ManifoldError("no first-return words up to the requested length")
    curves = [edge_curve(p, "left"), edge_curve(p, "right")]
    curves += [random_family_curve(p, rng) for _ in range(max(n_curves - 2, 0))]
    viol = bad16 = count = 0
    worst = 0.0
    for cv, w in product(curves, words):
        res = unstable_graph_transform(p, cv, w, theta)
        out = res.curve
        v = out.bound_violations(p)
        viol += sum(v.values())
        bad16 += int(np.sum(res.ineq16 > 1))
        bound = (3 * out.eta ** 2 + out.x) / (6 * p.beta_max)
        worst = max(worst, float(np.max(np.abs(out.dx) / bound)))
        count += 1
    return ClosureReport(len(curves), len(words), count, viol, bad16, worst)
