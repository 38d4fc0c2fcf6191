"""Orbit pieces of the invariant set, decoded from symbol windows.

A window s_0..s_{L-1} determines an orbit piece: horizontal coordinates
contract forward and vertical ones contract backward, so x is swept
forward from the centre of the first column and y backward from the
centre of the last stripe.  At a critical visit the forward step uses
the cubic formula, x_{j+1} = F(ξ)_x − ε₁η_j, and the backward step
solves the depressed cubic for the local height η_j.  Two sweeps
usually agree to rounding; we iterate until they do.

Local offsets (x_j, η_j) at visits are stored separately because the
global coordinates cannot resolve them in double precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from .basemap import BRANCHES, successors, transition_matrix
from .critmap import depressed_cubic_root, frame
from .params import ParamSet, col_of, critical_word, row_of

SYMBOLS = np.arange(1, 10)


def _tables(p: ParamSet):
    """Per-symbol branch data, index 0 unused."""
    rows = np.array([0] + [row_of(s) for s in range(1, 10)])
    h = np.array([0] + [BRANCHES[row_of(s)].h_sign for s in range(1, 10)], dtype=float)
    v = np.array([0] + [BRANCHES[row_of(s)].v_sign for s in range(1, 10)], dtype=float)
    rate = np.array([1.0] + [p.rate(s) for s in range(1, 10)])
    xl = np.array([0.0] + [p.col_left(BRANCHES[row_of(s)].target_col) for s in range(1, 10)])
    yb = np.array([0.0] + [p.row_bottom(row_of(s)) for s in range(1, 10)])
    col_mid = np.array([0.0] + [p.col_left(col_of(s)) + p.lam / 2 for s in range(1, 10)])
    row_mid = np.array([0.0] + [p.row_bottom(row_of(s)) + 0.5 / p.rate(s) for s in range(1, 10)])
    return rows, h, v, rate, xl, yb, col_mid, row_mid


def critical_future(p: ParamSet) -> tuple[int, ...]:
    """s_0..s_{k_c+1} of a critical visit."""
    return tuple(critical_word(p.itinerary, p.k_c + 2))


# ----------------------------------------------------------------------
# random admissible words

def successor_table() -> np.ndarray:
    tab = np.zeros((10, 3), dtype=np.int8)
    for s in range(1, 10):
        tab[s] = successors(s)
    return tab


def random_words(rng: np.random.Generator, m: int, length: int, p: ParamSet | None = None,
                 inject: float = 0.0) -> np.ndarray:
    """``m`` admissible words of given length (uniform Markov chain).

    With ``inject > 0`` and a parameter set, at each bottom-row symbol a
    critical pattern 7^k 4 8 1 6 (k ≥ n_c) is spliced in with that
    probability, so visits to the critical box are frequent.
    """
    tab = successor_table()
    out = np.empty((m, length), dtype=np.int8)
    out[:, 0] = rng.integers(1, 10, size=m)
    if inject <= 0 or p is None:
        for j in range(1, length):
            out[:, j] = tab[out[:, j - 1], rng.integers(0, 3, size=m)]
        return out
    fut = critical_future(p)
    for i in range(m):
        w = [int(out[i, 0])]
        while len(w) < length:
            s = w[-1]
            if row_of(s) == 3 and rng.random() < inject:
                k = p.n_c + int(rng.integers(0, 4))
                w.extend([7] * k + list(fut))
            else:
                w.append(int(tab[s, rng.integers(0, 3)]))
        out[i] = w[:length]
    return out


def critical_window_words(p: ParamSet, rng: np.random.Generator, count: int, past: int,
                          length: int) -> np.ndarray:
    """Words 7^past · 4 (cycle)^r · random tail, with r cycling through 0, 1, 2, ...

    The visit sits at index ``past``; larger r puts it closer to ξ.
    """
    tab = successor_table()
    fut = critical_future(p)
    cyc = list(p.itinerary)
    out = np.empty((count, length), dtype=np.int8)
    max_r = max((length - past - 1) // len(cyc) - 1, 0)
    for i in range(count):
        r = i % (max_r + 1)
        w = [7] * past + [fut[0]] + cyc * r
        while len(w) < length:
            w.append(int(tab[w[-1], rng.integers(0, 3)]))
        out[i] = w[:length]
    return out


def is_admissible(word) -> bool:
    A = transition_matrix()
    return all(A[a - 1, b - 1] for a, b in zip(word, word[1:]))


# ----------------------------------------------------------------------
# batch decoding (double precision)

@dataclass
class OrbitBatch:
    """Decoded orbit pieces; arrays have shape (m, L)."""

    words: np.ndarray
    x: np.ndarray
    y: np.ndarray
    visit: np.ndarray
    xloc: np.ndarray
    eta: np.ndarray
    theta: float

    @property
    def shape(self):
        return self.words.shape


def _future_ok(words, fut):
    m, L = words.shape
    ok = np.ones((m, L), dtype=bool)
    known = np.ones((m, L), dtype=bool)
    for k, s in enumerate(fut[1:], start=1):
        shifted = np.zeros((m, L), dtype=bool)
        has = np.zeros((m, L), dtype=bool)
        if k < L:
            shifted[:, : L - k] = words[:, k:] == s
            has[:, : L - k] = True
        ok &= shifted | ~has
        known &= has
    return ok, known


def decode_batch(p: ParamSet, words, theta: float | None = None, max_pass: int = 8) -> OrbitBatch:
    """Decode every position of every window."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    th = p.theta if theta is None else float(theta)
    m, L = words.shape
    rows, h, v, rate, xl, yb, col_mid, row_mid = _tables(p)
    fr = frame(p)
    fx, fy = fr.f_xi
    fut = critical_future(p)
    fut_ok, fut_known = _future_ok(words, fut)
    cand = (words == 4) & fut_ok

    x = np.zeros((m, L))
    y = np.zeros((m, L))
    eta = np.zeros((m, L))
    visit = np.zeros((m, L), dtype=bool)
    prev_x = None
    for _ in range(max_pass):
        # forward sweep for x
        x[:, 0] = col_mid[words[:, 0]]
        for j in range(L - 1):
            s = words[:, j]
            xj = x[:, j]
            lin = np.where(h[s] > 0, xl[s] + p.lam * xj, xl[s] + p.lam * (1 - xj))
            vis = cand[:, j] & (xj <= p.alpha_max)
            x[:, j + 1] = np.where(vis, fx - p.eps1 * eta[:, j], lin)
        # backward sweep for y
        y[:, L - 1] = row_mid[words[:, L - 1]]
        visit[:, L - 1] = False
        for j in range(L - 2, -1, -1):
            s = words[:, j]
            yn = y[:, j + 1]
            t = np.where(v[s] > 0, yn, 1 - yn)
            lin = yb[s] + t / rate[s]
            xj = x[:, j]
            vis = cand[:, j] & (xj <= p.alpha_max)
            if vis.any():
                vv = yn - fy
                pc = xj + th
                qc = (vv - p.b * xj) / p.c
                e = _depressed_root_vec(pc, qc)
                ok = vis & (fut_known[:, j] | (np.abs(e) <= p.beta_max))
                eta[:, j] = np.where(ok, e, 0.0)
                visit[:, j] = ok
                y[:, j] = np.where(ok, p.xi2 + e, lin)
            else:
                visit[:, j] = False
                eta[:, j] = 0.0
                y[:, j] = lin
        if prev_x is not None and np.array_equal(prev_x, x):
            break
        prev_x = x.copy()
    xloc = np.where(visit, x, 0.0)
    eta = np.where(visit, eta, 0.0)
    return OrbitBatch(words, x, y, visit, xloc, eta, th)


def _depressed_root_vec(pc, qc):
    """Real root of t³ + pc t + qc = 0 for pc ≥ 0 (vectorized, stable)."""
    pc = np.maximum(pc, 0.0)
    disc = (qc / 2) ** 2 + (pc / 3) ** 3
    s = np.sqrt(disc)
    t = np.where(qc >= 0, -qc / 2 - s, -qc / 2 + s)
    A = np.cbrt(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(A != 0, A - pc / (3 * np.where(A != 0, A, 1.0)), 0.0)
    return r


def batch_jacobians(p: ParamSet, ob: OrbitBatch) -> np.ndarray:
    """DF at every decoded point, shape (m, L, 2, 2)."""
    m, L = ob.shape
    _, h, v, rate, *_ = _tables(p)
    s = ob.words
    J = np.zeros((m, L, 2, 2))
    J[..., 0, 0] = h[s] * p.lam
    J[..., 1, 1] = v[s] * rate[s]
    if ob.visit.any():
        xv, ev = ob.xloc[ob.visit], ob.eta[ob.visit]
        Jv = np.zeros((xv.size, 2, 2))
        Jv[:, 0, 1] = -p.eps1
        Jv[:, 1, 0] = p.b - p.c * ev
        Jv[:, 1, 1] = -p.c * (3 * ev**2 + xv + ob.theta)
        J[ob.visit] = Jv
    return J


# ----------------------------------------------------------------------
# scalar decoding at arbitrary precision

@dataclass
class Orbit:
    """A single decoded orbit piece (scalar entries, float or mpf)."""

    word: tuple[int, ...]
    x: list
    y: list
    visit: list
    eta: list
    theta: float


def decode_scalar(p: ParamSet, word, theta=None, dps: int | None = None, max_pass: int = 10,
                  x_first=None, y_last=None) -> Orbit:
    """Decode one window with mpmath (``dps`` digits) or floats (dps=None).

    ``x_first`` pins the first horizontal coordinate instead of the column
    centre.  With ``y_last`` the orbit gets one extra point after the word,
    at that height, with no symbol attached.
    """
    word = tuple(int(s) for s in word)
    n_sym = len(word)
    L = n_sym + (1 if y_last is not None else 0)
    th = p.theta if theta is None else theta
    if dps is not None:
        mpmath.mp.dps = dps
        num = mpmath.mpf
    else:
        num = float
    fr = frame(p)
    fx, fy = num(fr.f_xi[0]), num(fr.f_xi[1])
    lam, eps, b, c = num(p.lam), num(p.eps1), num(p.b), num(p.c)
    alpha, beta, xi2 = num(p.alpha_max), num(p.beta_max), num(p.xi2)
    th = num(th)
    fut = critical_future(p)

    def fut_state(j):
        ok, known = True, True
        for k, s in enumerate(fut[1:], start=1):
            if j + k < n_sym:
                ok &= word[j + k] == s
            else:
                known = False
        return ok, known

    fs = [fut_state(j) for j in range(L)]
    x = [num(0)] * L
    y = [num(0)] * L
    eta = [num(0)] * L
    visit = [False] * L
    prev = None
    for _ in range(max_pass):
        x[0] = num(x_first) if x_first is not None else num(p.col_left(col_of(word[0]))) + lam / 2
        for j in range(L - 1):
            s = word[j]
            br = BRANCHES[row_of(s)]
            xl_ = num(p.col_left(br.target_col))
            if s == 4 and fs[j][0] and x[j] <= alpha:
                x[j + 1] = fx - eps * eta[j]
            else:
                x[j + 1] = xl_ + lam * x[j] if br.h_sign > 0 else xl_ + lam * (1 - x[j])
        if y_last is not None:
            y[-1] = num(y_last)
        else:
            s = word[-1]
            y[-1] = num(p.row_bottom(row_of(s))) + num(0.5) / num(p.rate(s))
        for j in range(L - 2, -1, -1):
            s = word[j]
            br = BRANCHES[row_of(s)]
            yn = y[j + 1]
            visit[j] = False
            if s == 4 and fs[j][0] and x[j] <= alpha:
                e = depressed_cubic_root(x[j] + th, ((yn - fy) - b * x[j]) / c)
                if fs[j][1] or abs(e) <= beta:
                    visit[j] = True
                    eta[j] = e
                    y[j] = xi2 + e
                    continue
            eta[j] = num(0)
            t = yn if br.v_sign > 0 else 1 - yn
            y[j] = num(p.row_bottom(row_of(s))) + t / num(p.rate(s))
        if prev is not None and prev == x:
            break
        prev = list(x)
    return Orbit(word, x, y, visit, eta, th)


def decode_point(p: ParamSet, backward, forward, theta=None, dps: int | None = None):
    """Point with past ``backward`` (s_-n..s_-1) and future ``forward`` (s_0..)."""
    ob = decode_scalar(p, tuple(backward) + tuple(forward), theta=theta, dps=dps)
    n = len(backward)
    return ob.x[n], ob.y[n], ob
