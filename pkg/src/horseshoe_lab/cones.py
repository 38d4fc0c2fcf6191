"""Unstable and stable cone fields with critical-tube bookkeeping.

Along an orbit, a visit to the critical box at index v opens a tube that
runs from v − n₋ to v + n₊.  Slopes are

* free points: G = A·d/(3cβ_max);
* pre-critical point v − j: G·(σ/(λκ))^(n₋ − j), the pulled-back cone;
* the visit itself: G·(σ/(λκ))^n₋, or the vertical line when x = 0;
* post-critical point v + i: A(3η² + x + θ)·∏_{l<i} r_l/(λκ).

κ > 1 is a small slack that turns the equality of exact pushforwards
into a strict containment.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .basemap import is_escaped
from .critmap import apply, inverse, jacobian, region
from .orbits import OrbitBatch, batch_jacobians, decode_batch, random_words
from .params import ParamSet

KAPPA = 1.01

FREE, PRE, AT, POST = 0, 1, 2, 3
PHASES = {FREE: "free", PRE: "pre-critical", AT: "at-critical", POST: "post-critical"}


class ConeError(ValueError):
    """Cone requested on the critical orbit, or on an escaping point."""


@dataclass(frozen=True)
class TubeContext:
    n_minus: float
    n_plus: float
    phase: str
    index: int = 0


@dataclass(frozen=True)
class Cone:
    """``unstable``: {|v_y| ≥ s|v_x|}; ``stable``: {|v_y| ≤ s|v_x|}."""

    slope: float
    kind: str = "unstable"
    vertical: bool = False

    def __post_init__(self):
        if self.kind not in ("unstable", "stable"):
            raise ValueError("kind must be 'unstable' or 'stable'")
        if self.slope < 0 or (math.isinf(self.slope) and not self.vertical):
            raise ValueError("slope must be finite and non-negative")

    @classmethod
    def vertical_line(cls, kind="unstable"):
        return cls(math.inf, kind, vertical=True)

    def contains(self, v, strict: bool = False) -> bool:
        vx, vy = abs(float(v[0])), abs(float(v[1]))
        if self.vertical:
            inside_u = vx == 0
            return inside_u if self.kind == "unstable" else (not inside_u or not strict)
        if self.kind == "unstable":
            return vy > self.slope * vx if strict else vy >= self.slope * vx
        return vy < self.slope * vx if strict else vy <= self.slope * vx

    def complement(self) -> "Cone":
        other = "stable" if self.kind == "unstable" else "unstable"
        return Cone(self.slope, other, self.vertical)


# ----------------------------------------------------------------------
# scalar ingredients

def generic_slope(p: ParamSet) -> float:
    return p.A * p.d / (3 * p.c * p.beta_max)


def n_minus(p: ParamSet, x) -> float:
    """sup{k : x ≤ d·λ^k}; infinite at x = 0, −1 when x > d."""
    x = float(x)
    if x <= 0:
        return math.inf
    if x > p.d:
        return -1
    k = math.floor(math.log(x / p.d) / math.log(p.lam))
    while x > p.d * p.lam ** k:  # guard the floor against rounding
        k -= 1
    while x <= p.d * p.lam ** (k + 1):
        k += 1
    return k


def vertical_offset(p: ParamSet, x, eta, theta=0.0) -> float:
    """Height of F(ξ + (x, η)) above F(ξ)."""
    return p.b * x - p.c * eta * (eta * eta + x + theta)


def post_rates(p: ParamSet, count: int) -> np.ndarray:
    """Stripe rates along the critical cycle, starting at F(ξ)."""
    cyc = [p.rate(s) for s in p.itinerary]
    return np.array([cyc[i % len(cyc)] for i in range(count)])


def n_plus(p: ParamSet, x, eta, theta=0.0, cap: int = 400) -> float:
    """sup{k : σ^{k1}ρ^{k2}|v| ≤ d}, counting rates along the cycle."""
    v = abs(vertical_offset(p, x, eta, theta))
    if v == 0:
        return math.inf
    logs = np.concatenate([[0.0], np.cumsum(np.log(post_rates(p, cap)))])
    ok = np.nonzero(np.log(v) + logs <= math.log(p.d))[0]
    return int(ok[-1]) if ok.size else -1


def rate_counts(p: ParamSet, k: int) -> tuple[int, int]:
    """(#σ, #ρ) among the first k cycle rates."""
    r = post_rates(p, k)
    return int(np.sum(r == p.sigma)), int(np.sum(r == p.rho))


# ----------------------------------------------------------------------
# slope assignment along one orbit

def assign_slopes(p: ParamSet, visit, xloc, eta, theta=0.0, kappa: float = KAPPA):
    """Slopes, phases, n₋ and n₊ along a single orbit (1-D arrays)."""
    visit = np.asarray(visit, dtype=bool)
    L = visit.size
    G = generic_slope(p)
    slope = np.full(L, G)
    phase = np.full(L, FREE, dtype=np.int8)
    nm = np.full(L, np.nan)
    np_ = np.full(L, np.nan)
    gain = p.sigma / (p.lam * kappa)
    for v in np.nonzero(visit)[0]:
        x, e = float(xloc[v]), float(eta[v])
        nmin = n_minus(p, x)
        npl = n_plus(p, x, e, theta)
        phase[v] = AT
        nm[v], np_[v] = nmin, npl
        slope[v] = math.inf if math.isinf(nmin) else G * gain ** nmin
        jmax = v if math.isinf(nmin) else min(int(nmin), v)
        for j in range(1, jmax + 1):
            phase[v - j] = PRE
            nm[v - j], np_[v - j] = nmin, npl
            slope[v - j] = math.inf if math.isinf(nmin) else G * gain ** (nmin - j)
        s = p.A * (3 * e * e + x + theta)
        rates = post_rates(p, max(int(min(npl, L)), 1))
        imax = L - 1 - v if math.isinf(npl) else min(max(int(npl), 1), L - 1 - v)
        for i in range(1, imax + 1):
            phase[v + i] = POST
            nm[v + i], np_[v + i] = nmin, npl
            slope[v + i] = s
            s = s * rates[(i - 1) % rates.size] / (p.lam * kappa)
    return slope, phase, nm, np_


@dataclass
class OrbitCones:
    slope: np.ndarray
    phase: np.ndarray
    n_minus: np.ndarray
    n_plus: np.ndarray


def orbit_cones(p: ParamSet, ob: OrbitBatch, kappa: float = KAPPA) -> OrbitCones:
    m, L = ob.shape
    out = [assign_slopes(p, ob.visit[i], ob.xloc[i], ob.eta[i], ob.theta, kappa) for i in range(m)]
    return OrbitCones(*(np.stack([o[k] for o in out]) for k in range(4)))


# ----------------------------------------------------------------------
# invariance margins for a batch of (J, s_from, s_to)

def _slope(wx, wy):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(wx == 0, np.inf, np.abs(wy) / np.abs(wx))


def unstable_margins(J, s_from, s_to):
    """Relative excess of image-boundary slopes over the target slope.

    Vertical source cones (s = inf) are mapped as the single vector (0, 1).
    A result of −inf flags an image cone that wraps through the horizontal.
    """
    J = np.asarray(J, dtype=float)
    s_from = np.asarray(s_from, dtype=float)
    s_to = np.asarray(s_to, dtype=float)
    vert = np.isinf(s_from)
    sf = np.where(vert, 0.0, s_from)
    out = np.full(s_from.shape, np.inf)
    for sign in (1.0, -1.0):
        vx = np.where(vert, 0.0, 1.0)
        vy = np.where(vert, 1.0, sign * sf)
        wx = J[..., 0, 0] * vx + J[..., 0, 1] * vy
        wy = J[..., 1, 0] * vx + J[..., 1, 1] * vy
        si = _slope(wx, wy)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(np.isinf(s_to), np.where(np.isinf(si), np.inf, -np.inf), si / s_to - 1)
        out = np.minimum(out, rel)
    # preimage of the horizontal direction must lie outside the source cone
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    hx, hy = J[..., 1, 1] / det, -J[..., 1, 0] / det
    wraps = ~vert & (_slope(hx, hy) >= sf)
    return np.where(wraps, -np.inf, out)


def stable_margins(J, s_from, s_to):
    """Relative slack of pulled-back stable boundaries below the source slope."""
    J = np.asarray(J, dtype=float)
    s_from = np.asarray(s_from, dtype=float)
    s_to = np.asarray(s_to, dtype=float)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Ji = np.empty_like(J)
    Ji[..., 0, 0] = J[..., 1, 1] / det
    Ji[..., 0, 1] = -J[..., 0, 1] / det
    Ji[..., 1, 0] = -J[..., 1, 0] / det
    Ji[..., 1, 1] = J[..., 0, 0] / det
    out = np.full(s_from.shape, np.inf)
    vert_to = np.isinf(s_to)
    st = np.where(vert_to, 0.0, s_to)
    for sign in (1.0, -1.0):
        wx = Ji[..., 0, 0] + Ji[..., 0, 1] * sign * st
        wy = Ji[..., 1, 0] + Ji[..., 1, 1] * sign * st
        si = _slope(wx, wy)
        with np.errstate(invalid="ignore"):
            rel = np.where(np.isinf(s_from), np.where(np.isinf(si), -np.inf, 1.0), 1 - si / s_from)
        out = np.minimum(out, np.where(vert_to, 1.0, rel))
    # the vertical direction must not be pulled into the source stable cone
    wraps = _slope(J[..., 0, 1], J[..., 1, 1]) <= st
    return np.where(wraps & ~vert_to, -np.inf, out)


# ----------------------------------------------------------------------
# pointwise API

@dataclass
class LocalOrbit:
    points: list
    index: int
    visit: np.ndarray
    xloc: np.ndarray
    eta: np.ndarray
    theta: float


def _theta(p, theta):
    return p.theta if theta is None else float(theta)


def local_orbit(p: ParamSet, pt, theta=None, n_back: int | None = None, n_fwd: int | None = None,
                dps: int = 60) -> LocalOrbit:
    """Short orbit through ``pt`` in mpmath, truncated at escapes."""
    th = _theta(p, theta)
    n_back = n_back if n_back is not None else 3 * (p.n_c + p.k_c) + 10
    n_fwd = n_fwd if n_fwd is not None else 3 * (p.n_c + p.k_c) + 10
    with mpmath.workdps(dps):
        q0 = (mpmath.mpf(pt[0]), mpmath.mpf(pt[1]))
        fwd, q = [q0], q0
        for _ in range(n_fwd):
            q = apply(p, q, th)
            if is_escaped(q):
                break
            fwd.append(q)
        bwd, q = [], q0
        for _ in range(n_back):
            q = inverse(p, q, th)
            if is_escaped(q):
                break
            bwd.append(q)
        pts = list(reversed(bwd)) + fwd
        visit = np.array([region(p, q) == "critical" for q in pts])
        xloc = np.array([float(q[0]) if v else 0.0 for q, v in zip(pts, visit)])
        eta = np.array([float(q[1] - mpmath.mpf(p.xi2)) if v else 0.0 for q, v in zip(pts, visit)])
    return LocalOrbit(pts, len(bwd), visit, xloc, eta, th)


def on_critical_orbit(p: ParamSet, lo: LocalOrbit) -> bool:
    return any(v and x == 0 and e == 0 for v, x, e in zip(lo.visit, lo.xloc, lo.eta))


def tube_context(p: ParamSet, pt, theta=None) -> TubeContext:
    lo = local_orbit(p, pt, theta)
    _, phase, nm, npl = assign_slopes(p, lo.visit, lo.xloc, lo.eta, lo.theta)
    i = lo.index
    ph = int(phase[i])
    if ph == FREE:
        return TubeContext(math.nan, math.nan, PHASES[FREE])
    vis = np.nonzero(lo.visit)[0]
    v = vis[np.argmin(np.abs(vis - i))] if vis.size else i
    return TubeContext(float(nm[i]), float(npl[i]), PHASES[ph], int(i - v))


def _cones_at(p, pt, theta):
    lo = local_orbit(p, pt, theta)
    if on_critical_orbit(p, lo):
        raise ConeError("no cone field on the critical orbit")
    slope, *_ = assign_slopes(p, lo.visit, lo.xloc, lo.eta, lo.theta)
    return lo, slope


def unstable_cone(p: ParamSet, pt, theta=None) -> Cone:
    lo, slope = _cones_at(p, pt, theta)
    s = slope[lo.index]
    return Cone.vertical_line() if math.isinf(s) else Cone(float(s))


def stable_cone(p: ParamSet, pt, theta=None) -> Cone:
    return unstable_cone(p, pt, theta).complement()


def _step(p, pt, theta):
    lo, slope = _cones_at(p, pt, theta)
    i = lo.index
    if i + 1 >= len(lo.points):
        raise ConeError("image leaves the square")
    J = jacobian(p, lo.points[i], lo.theta)
    return J, slope[i], slope[i + 1]


def check_unstable_invariance(p: ParamSet, pt, theta=None) -> float:
    J, s0, s1 = _step(p, pt, theta)
    return float(unstable_margins(J, s0, s1))


def check_stable_invariance(p: ParamSet, pt, theta=None) -> float:
    """Margin for DF⁻¹ C^s(F(pt)) ⊂ C^s(pt)."""
    J, s0, s1 = _step(p, pt, theta)
    return float(stable_margins(J, s0, s1))


# ----------------------------------------------------------------------
# sweeps over decoded orbits

@dataclass
class SweepResult:
    x: np.ndarray
    y: np.ndarray
    phase: np.ndarray
    margin_u: np.ndarray
    margin_s: np.ndarray

    @property
    def failures(self) -> int:
        return int(np.sum(~(self.margin_u > 0)) + np.sum(~(self.margin_s > 0)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "phase", "margin_u", "margin_s"])
        for row in zip(self.x, self.y, self.phase, self.margin_u, self.margin_s):
            w.writerow([repr(float(row[0])), repr(float(row[1])), PHASES[int(row[2])],
                        repr(float(row[3])), repr(float(row[4]))])
        return buf.getvalue()


def invariance_sweep(p: ParamSet, rng, n_orbits: int, depth: int = 20, per_orbit: int = 20,
                     theta=None, inject: float = 0.3) -> SweepResult:
    """Cone margins at ``per_orbit`` points of each decoded orbit.

    Each checked point has at least ``depth`` symbols of context on both sides.
    """
    L = 2 * depth + per_orbit + 1
    W = random_words(rng, n_orbits, L, p, inject=inject)
    ob = decode_batch(p, W, theta)
    oc = orbit_cones(p, ob)
    J = batch_jacobians(p, ob)
    sl = slice(depth, depth + per_orbit)
    nxt = slice(depth + 1, depth + per_orbit + 1)
    mu = unstable_margins(J[:, sl], oc.slope[:, sl], oc.slope[:, nxt])
    ms = stable_margins(J[:, sl], oc.slope[:, sl], oc.slope[:, nxt])
    return SweepResult(ob.x[:, sl].ravel(), ob.y[:, sl].ravel(), oc.phase[:, sl].ravel(),
                       mu.ravel(), ms.ravel())


# ----------------------------------------------------------------------
# critical tubes

@dataclass(frozen=True)
class Tube:
    """Orbit segment F^{-n}(M)..F^{m}(M) around a visit M."""

    start: int
    visit: int
    end: int
    n: int
    m: int
    x: float
    eta: float
    jacobians: np.ndarray
    slopes: np.ndarray

    @property
    def length(self) -> int:
        return self.n + 1 + self.m


def harvest_tubes(p: ParamSet, ob: OrbitBatch, oc: OrbitCones | None = None) -> list[Tube]:
    """Complete tubes (both ends inside the window, finite n₋, n₊)."""
    oc = oc or orbit_cones(p, ob)
    J = batch_jacobians(p, ob)
    m_, L = ob.shape
    out = []
    for i, v in zip(*np.nonzero(ob.visit)):
        n, m = oc.n_minus[i, v], oc.n_plus[i, v]
        if not (np.isfinite(n) and np.isfinite(m)):
            continue
        n, m = int(n), max(int(m), 1)
        a, b = v - n, v + m
        if a < 1 or b >= L - 1:
            continue
        out.append(Tube(int(a), int(v), int(b), n, m, float(ob.xloc[i, v]), float(ob.eta[i, v]),
                        J[i, a:b + 1].copy(), oc.slope[i, a:b + 2].copy()))
    return out


def return_inequality(p: ParamSet, tube: Tube, theta=0.0) -> float:
    """Relative margin of σ^{k1}ρ^{k2}(3y²+x+θ) > d/(3cβ_max) over n₊+1 cycle steps."""
    k1, k2 = rate_counts(p, tube.m + 1)
    lhs = p.sigma ** k1 * p.rho ** k2 * (3 * tube.eta ** 2 + tube.x + theta)
    rhs = p.d / (3 * p.c * p.beta_max)
    return lhs / rhs - 1


def exit_slope_margin(p: ParamSet, tube: Tube) -> float:
    """Relative excess of the exit-point slope over the generic one."""
    return float(tube.slopes[tube.n + tube.m] / generic_slope(p) - 1)
