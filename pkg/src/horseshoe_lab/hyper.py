"""Expansion and contraction certificates along decoded orbits."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .basemap import BRANCHES
from .cones import FREE, OrbitCones, Tube, orbit_cones
from .critmap import frame
from .orbits import (OrbitBatch, batch_jacobians, critical_window_words, decode_batch,
                     random_words)
from .params import ParamSet, row_of


def supnorm(v) -> np.ndarray:
    return np.max(np.abs(v), axis=-1)


@dataclass
class Certificate:
    point: list
    window: list
    bound: float
    measured: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# ----------------------------------------------------------------------
# tubes

def _cone_vectors(slope: float) -> list[np.ndarray]:
    """Boundary vectors of an unstable cone, plus the vertical."""
    if math.isinf(slope):
        return [np.array([0.0, 1.0])]
    return [np.array([1.0, slope]), np.array([1.0, -slope]), np.array([0.0, 1.0])]


def tube_growth(tube: Tube, v) -> float:
    w = np.asarray(v, dtype=float)
    for J in tube.jacobians:
        w = J @ w
    return float(supnorm(w) / supnorm(np.asarray(v, dtype=float)))


def tube_expansion_check(p: ParamSet, tube: Tube, v=None) -> bool:
    """‖DF^{n+1+m} v‖∞ ≥ ρ^{(n+1+m)/5}‖v‖∞ for v in the entry cone."""
    if tube.jacobians.shape[0] != tube.length:
        raise ValueError("segment is not a tube")
    bound = p.rho ** (tube.length / 5)
    vecs = [v] if v is not None else _cone_vectors(tube.slopes[0])
    return all(tube_growth(tube, w) >= bound for w in vecs)


def entry_vertical_growth(tube: Tube) -> float:
    """Vertical growth over the pre-critical part (σⁿ for a 7-run)."""
    w = np.array([0.0, 1.0])
    for J in tube.jacobians[: tube.n]:
        w = J @ w
    return float(abs(w[1]))


def exit_step_ratio(tube: Tube) -> float:
    """min ‖DF(M)ṽ‖∞/‖ṽ‖∞ over the cone at M (boundary and vertical)."""
    J = tube.jacobians[tube.n]
    return min(float(supnorm(J @ w) / supnorm(w)) for w in _cone_vectors(tube.slopes[tube.n]))


# ----------------------------------------------------------------------
# complete pieces

@dataclass
class GrowthRecord:
    window: tuple[int, int]
    factors: np.ndarray
    complete: bool

    @property
    def total(self) -> float:
        return float(np.prod(self.factors)) if self.complete else math.nan


def tube_intervals(oc: OrbitCones, row: int) -> list[tuple[int, int]]:
    """[start, end] index pairs of tubes on one orbit."""
    ph = oc.phase[row]
    out, L = [], ph.size
    j = 0
    while j < L:
        if ph[j] != FREE:
            k = j
            while k + 1 < L and ph[k + 1] != FREE and not (ph[k + 1] == 1 and ph[k] == 3):
                k += 1
            out.append((j, k))
            j = k + 1
        else:
            j += 1
    return out


def is_complete(intervals, m1: int, m2: int) -> bool:
    return all(b < m1 or a > m2 or (m1 <= a and b <= m2) for a, b in intervals)


def complete_piece_growth(p: ParamSet, ob: OrbitBatch, oc: OrbitCones, row: int,
                          m1: int, m2: int, J=None) -> GrowthRecord:
    """Per-step sup-norm growth of the worst cone vector on [m1, m2]."""
    J = batch_jacobians(p, ob)[row] if J is None else J
    complete = is_complete(tube_intervals(oc, row), m1, m2)
    if not complete:
        return GrowthRecord((m1, m2), np.array([]), False)
    best = None
    for v in _cone_vectors(oc.slope[row, m1]):
        w = v.copy()
        f = []
        for j in range(m1, m2 + 1):
            w2 = J[j] @ w
            f.append(supnorm(w2) / supnorm(w))
            w = w2 / supnorm(w2)
        f = np.array(f)
        if best is None or np.sum(np.log(f)) < np.sum(np.log(best)):
            best = f
    return GrowthRecord((m1, m2), best, True)


def complete_piece_bound(p: ParamSet, rec: GrowthRecord) -> float:
    n = rec.window[1] - rec.window[0]
    return p.rho ** (n / 5)


# ----------------------------------------------------------------------
# Lyapunov exponents

@dataclass
class LyapunovResult:
    exponent: np.ndarray
    liminf: np.ndarray
    steps: int


def lyapunov_from_jacobians(J: np.ndarray, slope0=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean log growth of a renormalized vector started vertical.

    Returns (exponent, min over trailing windows of length n/10).
    """
    m, L = J.shape[:2]
    w = np.zeros((m, 2))
    w[:, 1] = 1.0
    logs = np.empty((m, L))
    for j in range(L):
        w = np.einsum("mij,mj->mi", J[:, j], w)
        nrm = supnorm(w)
        logs[:, j] = np.log(nrm)
        w /= nrm[:, None]
    exp = logs.mean(axis=1)
    win = max(L // 10, 1)
    cs = np.concatenate([np.zeros((m, 1)), np.cumsum(logs, axis=1)], axis=1)
    trailing = (cs[:, win:] - cs[:, :-win]) / win
    return exp, trailing[:, L // 2 - win:].min(axis=1) if L >= 2 * win else trailing.min(axis=1)


def lyapunov_unstable(p: ParamSet, words, theta=None, chunk: int = 100) -> LyapunovResult:
    words = np.atleast_2d(np.asarray(words))
    exps, lims = [], []
    for a in range(0, words.shape[0], chunk):
        ob = decode_batch(p, words[a:a + chunk], theta)
        J = batch_jacobians(p, ob)
        e, l = lyapunov_from_jacobians(J)
        exps.append(e)
        lims.append(l)
    return LyapunovResult(np.concatenate(exps), np.concatenate(lims), words.shape[1])


def periodic_word(cycle, length: int) -> np.ndarray:
    cyc = list(cycle)
    return np.array([cyc[i % len(cyc)] for i in range(length)])


# ----------------------------------------------------------------------
# invariant directions

@dataclass
class DirectionEstimate:
    vector: np.ndarray
    residual: float
    depth: int


def _angle(u, v) -> float:
    c = abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(math.asin(min(c, 1.0)))


def _push(Js, v):
    hist = [v / np.linalg.norm(v)]
    for J in Js:
        v = J @ v
        v = v / np.linalg.norm(v)
        hist.append(v)
    return hist


def unstable_direction(p: ParamSet, J_past: np.ndarray, depth: int | None = None) -> DirectionEstimate:
    """Direction of E^u at the point reached after the Jacobians ``J_past``."""
    Js = J_past if depth is None else J_past[-depth:]
    hist = _push(Js, np.array([0.0, 1.0]))
    res = _angle(hist[-1], hist[-2]) if len(hist) > 1 else math.inf
    return DirectionEstimate(hist[-1], res, len(Js))


def stable_direction(p: ParamSet, J_future: np.ndarray, depth: int | None = None) -> DirectionEstimate:
    """Direction of E^s at the point where the Jacobians ``J_future`` start."""
    Js = J_future if depth is None else J_future[:depth]
    inv = [np.linalg.inv(J) for J in Js[::-1]]
    hist = _push(inv, np.array([1.0, 0.0]))
    res = _angle(hist[-1], hist[-2]) if len(hist) > 1 else math.inf
    return DirectionEstimate(hist[-1], res, len(Js))


def direction_at(p: ParamSet, word, index: int, depth: int, theta=None):
    """(E^u, E^s) estimates at position ``index`` of a decoded word."""
    ob = decode_batch(p, np.asarray(word)[None, :], theta)
    J = batch_jacobians(p, ob)[0]
    if index < depth or index + depth > J.shape[0]:
        raise ValueError("word too short for the requested depth")
    return (unstable_direction(p, J[index - depth:index]),
            stable_direction(p, J[index:index + depth]))


def stable_growth_factors(J: np.ndarray) -> np.ndarray:
    """Per-step sup-norm growth along E^s, obtained by pulling back from the end."""
    L = J.shape[0]
    w = np.array([1.0, 0.0])
    ws = [None] * (L + 1)
    ws[L] = w
    for j in range(L - 1, -1, -1):
        w = np.linalg.solve(J[j], w)
        w = w / supnorm(w)
        ws[j] = w
    return np.array([supnorm(J[j] @ ws[j]) / supnorm(ws[j]) for j in range(L)])


@dataclass
class StableContraction:
    C: float
    violations: int
    windows: int
    worst_ratio: float


def stable_contraction_check(p: ParamSet, ob: OrbitBatch, oc: OrbitCones, margin: int = 20,
                             windows_per_orbit: int = 4, rng=None) -> StableContraction:
    """‖DFⁿ|E^s‖ ≤ C·Δⁿρ^{−n/5} on complete windows, C fixed from n = 1."""
    rng = rng or np.random.default_rng(0)
    J = batch_jacobians(p, ob)
    m, L = ob.shape
    rate = p.Delta * p.rho ** (-1 / 5)
    samples = []
    for i in range(m):
        g = stable_growth_factors(J[i])
        iv = tube_intervals(oc, i)
        starts = [j for j in range(margin, L - margin) if is_complete(iv, j, j)]
        for _ in range(windows_per_orbit):
            m1 = int(rng.choice(starts))
            ends = [k for k in range(m1, L - margin) if is_complete(iv, m1, k)]
            m2 = int(rng.choice(ends))
            samples.append((m1, m2, g[m1:m2 + 1]))
        for j in starts:
            samples.append((j, j, g[j:j + 1]))
    C = max(float(f[0]) / rate for a, b, f in samples if a == b)
    worst, viol, count = 0.0, 0, 0
    for a, b, f in samples:
        n = b - a + 1
        ratio = float(np.prod(f)) / (C * rate ** n)
        worst = max(worst, ratio)
        viol += ratio > 1
        count += 1
    return StableContraction(C, viol, count, worst)


def det_angle_residual(M: np.ndarray, u, w) -> float:
    """Relative residual of |det M| = (sin∠(Mu,Mw)/sin∠(u,w))·(|Mu||Mw|/(|u||w|))."""
    u, w = np.asarray(u, float), np.asarray(w, float)
    Mu, Mw = M @ u, M @ w

    def sin(a, b):
        return abs(a[0] * b[1] - a[1] * b[0]) / (np.linalg.norm(a) * np.linalg.norm(b))

    rhs = (sin(Mu, Mw) / sin(u, w)) * (np.linalg.norm(Mu) * np.linalg.norm(Mw)
                                       / (np.linalg.norm(u) * np.linalg.norm(w)))
    lhs = abs(np.linalg.det(M))
    return abs(lhs - rhs) / lhs


# ----------------------------------------------------------------------
# uniform hyperbolicity of F_θ

DEFAULT_THETA_FACTORS = (1e-2, 1e-4, 1e-6)
ZERO_THETA_CAP = 200


def theta_grid(p: ParamSet, factors=DEFAULT_THETA_FACTORS) -> list[float]:
    return [f * p.beta_max ** 2 for f in factors]


def doubling_cap(p: ParamSet, theta: float) -> int:
    if theta <= 0:
        return ZERO_THETA_CAP
    return 10 * math.ceil(math.log(2) / (min(theta * p.A, 1.0) * math.log(p.rho)))


def n_prime(p: ParamSet, theta: float) -> int:
    """Smallest N' ≥ 1 with Aθρ^{N'} > 2."""
    n = 1
    while p.A * theta * p.rho ** n <= 2:
        n += 1
    return n


@dataclass
class DoublingResult:
    theta: float
    N: int | None
    cap: int
    witness: dict | None = None
    per_point: np.ndarray = field(default_factory=lambda: np.array([]))

    @property
    def failed(self) -> bool:
        return self.N is None


def _doubling_time(Js, v, cap):
    w = np.asarray(v, float)
    n0 = supnorm(w)
    for n in range(1, min(cap, len(Js)) + 1):
        w = Js[n - 1] @ w
        if supnorm(w) >= 2 * n0:
            return n
    return None


def doubling_sample(p: ParamSet, rng, n_points: int, theta: float, horizon: int,
                    depth: int = 20, inject: float = 0.3):
    """Decoded F_θ orbits and cones; the checked point sits at index ``depth``."""
    L = depth + horizon + 8
    W = random_words(rng, n_points, L, p, inject=inject)
    # orbits through the critical box ever closer to ξ
    crit = critical_window_words(p, rng, max(n_points // 10, 12), depth, L)
    ob = decode_batch(p, np.vstack([W, crit]), theta)
    return ob, orbit_cones(p, ob), batch_jacobians(p, ob)


def critical_image_jacobians(p: ParamSet, theta: float, steps: int) -> np.ndarray:
    """Jacobians along the forward orbit of F(ξ) (the periodic cycle)."""
    out = []
    cyc = list(p.itinerary)
    for k in range(steps):
        s = cyc[k % len(cyc)]
        br = BRANCHES[row_of(s)]
        out.append(np.diag([br.h_sign * p.lam, br.v_sign * p.rate(s)]))
    return np.array(out)


def uniform_doubling_time(p: ParamSet, theta: float, sample=None, rng=None,
                          n_points: int = 1000, depth: int = 20) -> DoublingResult:
    """Smallest N such that every sampled point and cone vector doubles within N steps."""
    cap = doubling_cap(p, theta)
    rng = rng or np.random.default_rng(0)
    if sample is None:
        sample = doubling_sample(p, rng, n_points, theta, cap, depth)
    ob, oc, J = sample
    worst = 0
    per = []
    fx = frame(p).f_xi
    # the critical value F(ξ) with the cone vector (1, Aθ)
    Jc = critical_image_jacobians(p, theta, cap)
    n = _doubling_time(Jc, np.array([1.0, p.A * theta]), cap)
    if n is None:
        return DoublingResult(theta, None, cap, {"point": list(fx), "vector": [1.0, p.A * theta],
                                                  "phase": "post-critical"})
    worst = n
    for i in range(ob.shape[0]):
        s = oc.slope[i, depth]
        Js = J[i, depth:]
        times = []
        for v in _cone_vectors(s):
            t = _doubling_time(Js, v, cap)
            if t is None:
                return DoublingResult(theta, None, cap, {"point": [float(ob.x[i, depth]), float(ob.y[i, depth])],
                                                          "vector": v.tolist(), "phase": int(oc.phase[i, depth])})
            times.append(t)
        per.append(max(times))
        worst = max(worst, max(times))
    return DoublingResult(theta, worst, cap, None, np.array(per))


def theta_security_angle(p: ParamSet, theta: float) -> float:
    """Angle between DF_θ(ξ)·(0,1) and the boundary of the cone at F(ξ)."""
    img = math.atan2(p.c * theta, p.eps1)
    bnd = math.atan(p.A * theta)
    return img - bnd


def fit_linear_floor(thetas, margins) -> float:
    """Largest κ with margin ≥ κθ over the grid."""
    return float(min(m / t for t, m in zip(thetas, margins)))

