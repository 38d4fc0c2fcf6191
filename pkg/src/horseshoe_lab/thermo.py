"""Transfer operators, pressure and equilibrium measures on the 9-symbol subshift.

A potential is evaluated on finite forward words; the depth-m operator
treats it as constant on m-cylinders.  States are the admissible m-words
in lexicographic order, encoded as base-10 integers.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .basemap import gen_rectangle, predecessors, successors
from .critmap import apply
from .orbits import decode_batch
from .params import ParamSet


class PressureError(RuntimeError):
    """Power iteration did not reach the eigenvalue residual."""


# ----------------------------------------------------------------------
# words

def admissible_words(m: int) -> np.ndarray:
    """All admissible m-words, shape (9·3^(m-1), m), lexicographically sorted."""
    if m < 1:
        raise ValueError("depth must be positive")
    W = np.arange(1, 10, dtype=np.int64)[:, None]
    succ = np.array([[0, 0, 0]] + [sorted(successors(s)) for s in range(1, 10)], dtype=np.int64)
    for _ in range(m - 1):
        nxt = succ[W[:, -1]]
        W = np.concatenate([np.repeat(W, 3, axis=0), nxt.reshape(-1, 1)], axis=1)
    return W


def word_codes(W: np.ndarray) -> np.ndarray:
    m = W.shape[1]
    return W @ (10 ** np.arange(m - 1, -1, -1, dtype=np.int64))


def extend_minimal(W: np.ndarray, extra: int) -> np.ndarray:
    """Append ``extra`` symbols, always the smallest admissible successor."""
    first = np.array([0] + [min(successors(s)) for s in range(1, 10)], dtype=np.int64)
    out = [W]
    last = W[:, -1]
    for _ in range(extra):
        last = first[last]
        out.append(last[:, None])
    return np.concatenate(out, axis=1)


def minimal_past(W: np.ndarray, length: int) -> np.ndarray:
    """Prepend ``length`` symbols, always the smallest admissible predecessor."""
    first = np.array([0] + [min(predecessors(s)) for s in range(1, 10)], dtype=np.int64)
    out = [W]
    head = W[:, 0]
    for _ in range(length):
        head = first[head]
        out.insert(0, head[:, None])
    return np.concatenate(out, axis=1)


# ----------------------------------------------------------------------
# potentials

@dataclass(frozen=True)
class Potential:
    """φ on forward words; ``func`` maps an (n, k) word array to n values.

    ``holder_scale`` is the declared ratio r with osc_m φ = O(r^m).
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    holder_scale: float = 0.0

    def __call__(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=np.int64)
        if W.ndim == 1:
            W = W[None, :]
        return np.asarray(self.func(W), dtype=float).reshape(W.shape[0])


def zero_potential() -> Potential:
    return Potential("zero", lambda W: np.zeros(W.shape[0]), 0.0)


def constant_potential(k: float) -> Potential:
    return Potential(f"constant({k!r})", lambda W: np.full(W.shape[0], float(k)), 0.0)


def vertical_rate_potential(p: ParamSet, t: float = 1.0) -> Potential:
    """φ(w) = −t·log(vertical expansion rate at w₀)."""
    logs = np.array([0.0] + [math.log(p.rate(s)) for s in range(1, 10)])
    return Potential(f"vertical_rate(t={t!r})", lambda W: -t * logs[W[:, 0]], 0.0)


def geometric_potential(weights=None, r: float = 0.5) -> Potential:
    """φ(w) = Σ_j r^j g(w_j), a Hölder potential depending on the whole future."""
    g = np.zeros(10)
    g[1:] = np.cos(np.arange(1, 10)) if weights is None else np.asarray(weights, float)

    def f(W):
        return (g[W] * r ** np.arange(W.shape[1])).sum(axis=1)

    return Potential(f"geometric(r={r!r})", f, r)


def pulled_back_potential(p: ParamSet, g: Callable, past: int = 12, theta=None) -> Potential:
    """φ̃(w) = g(point of Λ with future w), the past fixed to the minimal one."""

    def f(W):
        full = minimal_past(W, past)
        ob = decode_batch(p, full, theta)
        return g(ob.x[:, past], ob.y[:, past])

    scale = 1.0 / min(p.sigma, p.rho)
    return Potential("pulled_back", f, scale)


def cylinder_oscillation(potential: Potential, m: int, rng, samples: int = 2000,
                         extra: int = 8) -> float:
    """Largest spread of φ over random extensions of random m-words."""
    W = admissible_words(m)
    idx = rng.integers(0, W.shape[0], samples)
    base = W[idx]
    vals = []
    for _ in range(4):
        ext = [base]
        last = base[:, -1]
        table = np.array([[0, 0, 0]] + [sorted(successors(s)) for s in range(1, 10)])
        for _ in range(extra):
            last = table[last, rng.integers(0, 3, samples)]
            ext.append(last[:, None])
        vals.append(potential(np.concatenate(ext, axis=1)))
    V = np.array(vals)
    return float(np.max(V.max(axis=0) - V.min(axis=0)))


# ----------------------------------------------------------------------
# transfer operator

@dataclass(frozen=True)
class TransferOperator:
    depth: int
    words: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def size(self) -> int:
        return self.words.shape[0]

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return self.matrix @ h


def transfer_operator(p: ParamSet, potential: Potential, m: int = 8) -> TransferOperator:
    """(L h)(w) = Σ_{s·w admissible} e^{φ(s·w)} h(s·w), truncated to depth m."""
    if m < 2:
        raise ValueError("depth must be at least 2")
    W = admissible_words(m)
    codes = word_codes(W)
    phi = potential(W)
    rows, cols = [], []
    head = 10 ** (m - 1)
    tail = codes // 10
    for s in range(1, 10):
        ok = np.isin(W[:, 0], successors(s))
        src = np.nonzero(ok)[0]
        prev = np.searchsorted(codes, s * head + tail[src])
        rows.append(src)
        cols.append(prev)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    M = sp.csr_matrix((np.exp(phi[cols]), (rows, cols)), shape=(len(W), len(W)))
    return TransferOperator(m, W, phi, M)


def transfer_apply(p: ParamSet, potential: Potential, h: np.ndarray, m: int | None = None) -> np.ndarray:
    """Apply the depth-m operator to ``h`` given as values on the m-words."""
    h = np.asarray(h, float)
    m = m or round(math.log(h.size / 3, 3)) + 1
    op = transfer_operator(p, potential, m)
    if h.size != op.size:
        raise ValueError("h does not match the number of admissible words")
    return op(h)


def _power(M, start, tol, cap):
    v = np.asarray(start, float)
    v = v / v.sum()
    r = 0.0
    for it in range(1, cap + 1):
        w = M @ v
        r = w.sum()
        w = w / r
        res = np.max(np.abs(M @ w - r * w)) / (r * np.max(np.abs(w)))
        v = w
        if res <= tol:
            return r, v, it, res
    raise PressureError(f"no convergence after {cap} iterations (residual {res:.3g})")


@dataclass(frozen=True)
class Eigendata:
    eigenvalue: float
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    iterations: int
    residual: float

    @property
    def pressure(self) -> float:
        return math.log(self.eigenvalue)


def dominant_eigendata(op: TransferOperator, rng=None, tol: float = 1e-12, cap: int = 10000) -> Eigendata:
    n = op.size
    start = np.ones(n) if rng is None else rng.random(n) + 0.1
    r, h, it, res = _power(op.matrix, start, tol, cap)
    start = np.ones(n) if rng is None else rng.random(n) + 0.1
    r2, nu, it2, res2 = _power(op.matrix.T.tocsr(), start, tol, cap)
    return Eigendata(r, h, nu, max(it, it2), max(res, res2))


def pressure(p: ParamSet, potential: Potential, m: int = 8, tol: float = 1e-12, cap: int = 10000) -> float:
    """log of the dominant eigenvalue of the depth-m operator."""
    op = transfer_operator(p, potential, m)
    r, _, _, _ = _power(op.matrix, np.ones(op.size), tol, cap)
    return math.log(r)


def pressure_curve(p: ParamSet, potential: Potential, depths) -> list[tuple[int, float]]:
    return [(m, pressure(p, potential, m)) for m in depths]


def pressure_curve_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "pressure"])
    for m, v in curve:
        w.writerow([m, repr(float(v))])
    return buf.getvalue()


def cauchy_ratios(curve) -> np.ndarray:
    """Ratios of successive differences of a pressure curve."""
    v = np.array([c[1] for c in curve])
    d = np.abs(np.diff(v))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d[:-1] > 0, d[1:] / np.where(d[:-1] > 0, d[:-1], 1.0), 0.0)


def duality_residual(op: TransferOperator, eig: Eigendata, h: np.ndarray) -> float:
    """|⟨L h, ν⟩ − λ⟨h, ν⟩| relative to λ⟨h, ν⟩."""
    lhs = float(eig.left @ op(h))
    rhs = eig.eigenvalue * float(eig.left @ h)
    return abs(lhs - rhs) / abs(rhs)


def uniqueness_spread(p: ParamSet, potential: Potential, m: int, rng, starts: int = 10) -> float:
    """Sup-distance between normalized eigenvectors reached from random positive starts."""
    op = transfer_operator(p, potential, m)
    vecs = [_power(op.matrix, rng.random(op.size) + 1e-3, 1e-13, 10000)[1] for _ in range(starts)]
    ref = vecs[0]
    return max(float(np.max(np.abs(v - ref)) / np.max(ref)) for v in vecs)


# ----------------------------------------------------------------------
# measures

@dataclass(frozen=True)
class CylinderMeasure:
    """Weights on the admissible m-words; ``next_prob`` holds P(w → w·s) per successor slot."""

    depth: int
    words: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    next_prob: np.ndarray = field(repr=False)
    log_eigenvalue: float = 0.0

    def marginal(self, n: int, last: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Weights of n-words read from the start (or the end) of the m-words."""
        if not 1 <= n <= self.depth:
            raise ValueError("marginal length out of range")
        sub = self.words[:, -n:] if last else self.words[:, :n]
        codes, inv = np.unique(word_codes(sub), return_inverse=True)
        return codes, np.bincount(inv, weights=self.weights)

    def shift_defect(self, n: int | None = None) -> float:
        n = n or self.depth - 1
        c1, w1 = self.marginal(n)
        c2, w2 = self.marginal(n, last=True)
        if not np.array_equal(c1, c2):
            return math.inf
        return float(np.max(np.abs(w1 - w2)))

    def entropy(self) -> float:
        """Conditional entropy of the next symbol given the current m-word."""
        P = self.next_prob
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(P > 0, P * np.log(P), 0.0)
        return float(-(self.weights * t.sum(axis=1)).sum())

    def integral(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["word", "weight"])
        for word, wt in zip(self.words, self.weights):
            w.writerow(["".join(map(str, word)), repr(float(wt))])
        return buf.getvalue()


def equilibrium_measure(p: ParamSet, potential: Potential, m: int = 8, eig: Eigendata | None = None) -> CylinderMeasure:
    """Markov measure built from the left and right dominant eigenvectors."""
    op = transfer_operator(p, potential, m)
    eig = eig or dominant_eigendata(op)
    h, nu = eig.right, eig.left
    if np.min(h) <= 0 or np.min(nu) <= 0:
        raise PressureError("degenerate dominant eigenvector")
    pi = h * nu
    pi = pi / pi.sum()
    codes = word_codes(op.words)
    succ = np.array([[0, 0, 0]] + [sorted(successors(s)) for s in range(1, 10)], dtype=np.int64)
    nxt = (codes % 10 ** (m - 1))[:, None] * 10 + succ[op.words[:, -1]]
    j = np.searchsorted(codes, nxt)
    P = np.exp(op.phi)[:, None] * nu[j] / (eig.eigenvalue * nu[:, None])
    return CylinderMeasure(m, op.words, pi, P, math.log(eig.eigenvalue))


@dataclass(frozen=True)
class VariationalReport:
    pressure: float
    entropy: float
    integral: float

    @property
    def defect(self) -> float:
        return abs(self.entropy + self.integral - self.pressure)


def variational_check(p: ParamSet, potential: Potential, m: int = 8) -> VariationalReport:
    mu = equilibrium_measure(p, potential, m)
    return VariationalReport(mu.log_eigenvalue, mu.entropy(), mu.integral(potential(mu.words)))


def gibbs_constant(p: ParamSet, potential: Potential, mu: CylinderMeasure, rng, samples: int = 2000) -> float:
    """K with μ[w] / exp(S_m φ(w) − mP) ∈ [1/K, K] on random m-cylinders."""
    m = mu.depth
    idx = rng.integers(0, mu.words.shape[0], samples)
    W = mu.words[idx]
    ext = extend_minimal(W, m - 1)
    S = sum(potential(ext[:, j:j + m]) for j in range(m))
    ratio = mu.weights[idx] / np.exp(S - m * mu.log_eigenvalue)
    return float(max(ratio.max(), 1.0 / ratio.min()))


# ----------------------------------------------------------------------
# pushforward to Λ

@dataclass(frozen=True)
class PointCloud:
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    diam: np.ndarray = field(repr=False)
    split: int

    @property
    def total_mass(self) -> float:
        return float(self.weight.sum())

    @property
    def max_diam(self) -> float:
        return float(self.diam.max())

    def integrate(self, g) -> float:
        return float(self.weight @ g(self.x, self.y))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "weight"])
        for a, b, c in zip(self.x, self.y, self.weight):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
        return buf.getvalue()


def push_to_lambda(p: ParamSet, measure: CylinderMeasure, depth: int | None = None, theta=None) -> PointCloud:
    """Decode every depth-word (split in the middle) into a weighted point of Λ."""
    depth = depth or measure.depth
    if depth > measure.depth:
        raise ValueError("measure is coarser than the requested depth")
    codes, wts = measure.marginal(depth)
    W = np.array([list(map(int, str(c))) for c in codes], dtype=np.int64)
    k = depth // 2
    ob = decode_batch(p, W, theta)
    diam = np.empty(len(W))
    for i, w in enumerate(W):
        r = gen_rectangle(p, tuple(w[:k]), tuple(w[k:]))
        diam[i] = max(r.width, r.height)
    return PointCloud(ob.x[:, k].copy(), ob.y[:, k].copy(), wts, diam, k)


def invariance_defect(p: ParamSet, cloud: PointCloud, g, theta=None) -> float:
    """|∫ g∘F dμ − ∫ g dμ| over the cloud."""
    fx = np.empty_like(cloud.x)
    fy = np.empty_like(cloud.y)
    for i, (a, b) in enumerate(zip(cloud.x, cloud.y)):
        fx[i], fy[i] = apply(p, (float(a), float(b)), theta)
    return abs(float(cloud.weight @ g(fx, fy)) - cloud.integrate(g))
