"""Coding and decoding between Λ and admissible words over {1..9}.

Words are written as digit strings with a '.' before s_0, e.g. "777.4816".
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .basemap import admissible, is_escaped, rectangle_of
from .critmap import apply, inverse
from .orbits import critical_future, decode_scalar, random_words
from .params import ParamSet


class WordError(ValueError):
    """Inadmissible or malformed word."""


@dataclass(frozen=True)
class SymbolWord:
    backward: tuple[int, ...]
    forward: tuple[int, ...]

    def __post_init__(self):
        allsyms = self.backward + self.forward
        if any(not 1 <= s <= 9 for s in allsyms):
            raise WordError("symbols must lie in 1..9")

    @property
    def symbols(self) -> tuple[int, ...]:
        return self.backward + self.forward

    @property
    def split(self) -> int:
        return len(self.backward)

    def is_admissible(self) -> bool:
        return admissible(self.symbols)

    def __str__(self):
        return "".join(map(str, self.backward)) + "." + "".join(map(str, self.forward))

    @classmethod
    def parse(cls, text: str) -> "SymbolWord":
        text = text.strip()
        if text.count(".") != 1 or not text.replace(".", "").isdigit():
            raise WordError(f"bad word {text!r}")
        b, f = text.split(".")
        return cls(tuple(map(int, b)), tuple(map(int, f)))


@dataclass(frozen=True)
class CodeResult:
    """Itinerary of a point; ``escape`` is the first index (relative to s_0) that left Q."""

    word: SymbolWord
    escape: int | None = None

    @property
    def complete(self) -> bool:
        return self.escape is None


@dataclass(frozen=True)
class DecodedPoint:
    x: object
    y: object
    width_bound: float
    height_bound: float
    word: SymbolWord
    dps: int

    @property
    def point(self) -> tuple[float, float]:
        return float(self.x), float(self.y)


def working_dps(p: ParamSet, n_back: int, n_fwd: int) -> int:
    """Digits needed to iterate a window without losing the itinerary."""
    grow_f = math.log10(max(p.sigma, p.rho)) * n_fwd
    grow_b = -math.log10(p.lam) * n_back
    return int(30 + max(grow_f, grow_b) + 20)


def decode(p: ParamSet, word: SymbolWord | str, theta=None, dps: int | None = None) -> DecodedPoint:
    """Point of Λ (under F) whose itinerary over the window is ``word``."""
    if isinstance(word, str):
        word = SymbolWord.parse(word)
    if not word.forward:
        raise WordError("word needs at least the symbol s_0")
    if not word.is_admissible():
        raise WordError(f"inadmissible word {word}")
    n, k = len(word.backward), len(word.forward)
    dps = dps or working_dps(p, n, k)
    ob = decode_scalar(p, word.symbols, theta=theta, dps=dps)
    width = p.lam ** n * p.l0
    height = float(np.prod([1.0 / p.rate(s) for s in word.forward[:-1]])) * p.l0
    return DecodedPoint(ob.x[n], ob.y[n], width, height, word, dps)


def code(p: ParamSet, pt, n_back: int, n_fwd: int, theta=None, dps: int | None = None) -> CodeResult:
    """Rectangles visited by F^j(pt) for -n_back ≤ j < n_fwd."""
    dps = dps or working_dps(p, n_back, n_fwd)
    with mpmath.workdps(dps):
        x0, y0 = mpmath.mpf(pt[0]), mpmath.mpf(pt[1])
        fwd, escape = [], None
        q = (x0, y0)
        for j in range(n_fwd):
            r = rectangle_of(p, q)
            if r is None:
                escape = j
                break
            fwd.append(r)
            if j < n_fwd - 1:
                q = apply(p, q, theta)
                if is_escaped(q):
                    escape = j + 1
                    break
        bwd = []
        q = (x0, y0)
        for j in range(1, n_back + 1):
            q = inverse(p, q, theta)
            if is_escaped(q) or rectangle_of(p, q) is None:
                escape = -j if escape is None else escape
                break
            bwd.append(rectangle_of(p, q))
    return CodeResult(SymbolWord(tuple(reversed(bwd)), tuple(fwd)), escape)


def random_symbol_words(p: ParamSet, rng, m: int, n_back: int, n_fwd: int, inject: float = 0.0):
    W = random_words(rng, m, n_back + n_fwd, p, inject=inject)
    return [SymbolWord(tuple(map(int, w[:n_back])), tuple(map(int, w[n_back:]))) for w in W]


def roundtrip_failures(p: ParamSet, words) -> list[SymbolWord]:
    """Words w with code(decode(w)) != w."""
    bad = []
    for w in words:
        d = decode(p, w)
        c = code(p, (d.x, d.y), len(w.backward), len(w.forward), dps=d.dps)
        if not c.complete or c.word != w:
            bad.append(w)
    return bad


# ----------------------------------------------------------------------
# expansivity

def _orbit_mp(p, pt, n, theta, dps, forward=True):
    out = [pt]
    with mpmath.workdps(dps):
        q = pt
        for _ in range(n):
            q = apply(p, q, theta) if forward else inverse(p, q, theta)
            if is_escaped(q):
                break
            out.append(q)
    return out


def separation_time(p: ParamSet, a: DecodedPoint, b: DecodedPoint, N: int, theta=None) -> int | None:
    """Smallest |n| ≤ N with sup-distance of F^n(a), F^n(b) above d (None if none)."""
    dps = max(a.dps, b.dps)
    fa = _orbit_mp(p, (a.x, a.y), N, theta, dps)
    fb = _orbit_mp(p, (b.x, b.y), N, theta, dps)
    ba = _orbit_mp(p, (a.x, a.y), N, theta, dps, forward=False)
    bb = _orbit_mp(p, (b.x, b.y), N, theta, dps, forward=False)
    for n in range(N + 1):
        for seq_a, seq_b in ((fa, fb), (ba, bb)):
            if n < len(seq_a) and n < len(seq_b):
                qa, qb = seq_a[n], seq_b[n]
                if max(abs(qa[0] - qb[0]), abs(qa[1] - qb[1])) > p.d:
                    return n
    return None


def expansivity_check(p: ParamSet, pairs, N: int | None = None, theta=None) -> bool:
    """Every pair of distinct decoded points separates beyond d within N steps."""
    for a, b in pairs:
        if a.word == b.word:
            continue
        n = N if N is not None else max(len(a.word.forward), len(a.word.backward))
        if separation_time(p, a, b, n, theta) is None:
            return False
    return True


# ----------------------------------------------------------------------
# Hölder modulus

@dataclass(frozen=True)
class HolderFit:
    exponent: float
    slope: float
    intercept: float
    n_samples: int
    cube_law_ok: bool
    cube_law_worst: float


def common_window_pairs(p: ParamSet, rng, q_values, per_q: int, margin: int = 4):
    """Pairs of words agreeing exactly on s_-q..s_{q-1} and differing right outside."""
    out = []
    for q in q_values:
        L = q + margin
        made = 0
        while made < per_q:
            base = random_words(rng, 1, 2 * L, p)[0]
            alt = base.copy()
            # resample the tails on both sides of the common window
            for j in range(L + q, 2 * L):
                choices = [s for s in range(1, 10) if admissible((int(alt[j - 1]), s))]
                alt[j] = rng.choice(choices)
            for j in range(L - q - 1, -1, -1):
                choices = [s for s in range(1, 10) if admissible((s, int(alt[j + 1])))]
                alt[j] = rng.choice(choices)
            if alt[L + q] == base[L + q] or alt[L - q - 1] == base[L - q - 1]:
                continue
            wa = SymbolWord(tuple(map(int, base[:L])), tuple(map(int, base[L:])))
            wb = SymbolWord(tuple(map(int, alt[:L])), tuple(map(int, alt[L:])))
            out.append((q, wa, wb))
            made += 1
    return out


def cube_law_pairs(p: ParamSet, q_values, tail=4):
    """ξ-window words: past 7^K, future s_0..s_{q-1} of ξ, then a deviating tail.

    Only q ≥ 4 is used: a shorter common future does not force a visit.
    """
    fut = critical_future(p)
    cyc = tuple(p.itinerary)
    out = []
    # a long run of 7s puts x within λ^K of the left edge, so ξ's own offset is negligible
    K = 30
    for q in q_values:
        if q < len(fut):
            continue
        xi_fut = [fut[0]]
        while len(xi_fut) < q + tail:
            xi_fut.extend(cyc)
        xi_fut = xi_fut[: q + tail]
        dev = list(xi_fut[:q])
        prev = dev[-1]
        while len(dev) < q + tail:
            cand = [s for s in range(1, 10) if admissible((prev, s))]
            s = next(s for s in cand if len(dev) > q or s != xi_fut[len(dev)])
            dev.append(s)
            prev = s
        out.append((q, SymbolWord((7,) * K, tuple(xi_fut)), SymbolWord((7,) * K, tuple(dev))))
    return out


def holder_modulus(p: ParamSet, samples, cube_samples=()) -> HolderFit:
    """Fit log sup-distance against the common-window half length q.

    ``samples`` holds (q, word_a, word_b).  The exponent is reported for
    the symbolic metric 2^-q, i.e. dist ≈ C·(2^-q)^γ.
    """
    if len(samples) < 3:
        raise ValueError("insufficient samples for a fit")
    qs, ld = [], []
    for q, wa, wb in samples:
        a, b = decode(p, wa), decode(p, wb)
        dist = max(abs(a.x - b.x), abs(a.y - b.y))
        if dist > 0:
            qs.append(q)
            ld.append(float(mpmath.log(dist)))
    slope, intercept = np.polyfit(np.array(qs, float), np.array(ld), 1)
    worst = -math.inf
    for q, wa, wb in cube_samples:
        a, b = decode(p, wa), decode(p, wb)
        yl = abs(float(b.y - a.y))
        bound = (p.d / (p.c * p.rho ** (q - 2))) ** (1.0 / 3.0)
        worst = max(worst, yl / bound)
    ok = worst <= 1.0 if cube_samples else True
    return HolderFit(-slope / math.log(2), float(slope), float(intercept), len(qs), ok, worst)
