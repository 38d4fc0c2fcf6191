"""Piecewise-linear horseshoe F0 on the unit square.

Layout: three horizontal stripes (bottom, middle, top) and three vertical
column strips of width λ.  Slot ``j`` starts at ``(j-1)(l0+d)``.  The
bottom and middle stripes have height 1/σ, the top stripe 1/ρ, each
bottom-aligned in its slot, so F0 maps a full-width stripe onto a full
column strip.  Rectangle ``R_i`` is the intersection of row ``⌈i/3⌉``
(1 = top) with column ``((i-1) mod 3)+1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamSet, col_of, row_of


class _Escaped:
    """Marker value for points leaving the square."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "Escaped"

    def __bool__(self):
        return False


Escaped = _Escaped()


def is_escaped(val) -> bool:
    return val is Escaped


@dataclass(frozen=True)
class Branch:
    """Affine piece of F0 on one horizontal stripe."""

    row: int
    target_col: int
    h_sign: int
    v_sign: int = 1

    def rate(self, p: ParamSet) -> float:
        return p.rho if self.row == 1 else p.sigma


# top -> column 3, middle -> column 2 (rotated by a half turn), bottom -> column 1
BRANCHES = {
    1: Branch(1, 3, +1, +1),
    2: Branch(2, 2, -1, -1),
    3: Branch(3, 1, +1, +1),
}


@dataclass(frozen=True)
class RectangleId:
    id: int

    def __post_init__(self):
        if not 1 <= self.id <= 9:
            raise ValueError("rectangle id must be in 1..9")

    @property
    def row(self) -> int:
        return row_of(self.id)

    @property
    def col(self) -> int:
        return col_of(self.id)


@dataclass(frozen=True)
class GenRectangle:
    backward: tuple[int, ...]
    forward: tuple[int, ...]
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, other: "GenRectangle", tol: float = 0.0) -> bool:
        return (self.x0 - tol <= other.x0 and other.x1 <= self.x1 + tol
                and self.y0 - tol <= other.y0 and other.y1 <= self.y1 + tol)

    def csv_row(self) -> list:
        word = "".join(map(str, self.backward)) + "." + "".join(map(str, self.forward))
        return [word, repr(self.x0), repr(self.x1), repr(self.y0), repr(self.y1)]


def _build_transitions() -> np.ndarray:
    A = np.zeros((9, 9), dtype=int)
    for i in range(1, 10):
        tgt = BRANCHES[row_of(i)].target_col
        for j in range(1, 10):
            if col_of(j) == tgt:
                A[i - 1, j - 1] = 1
    A.setflags(write=False)
    return A


_A = _build_transitions()
_ALLOWED = frozenset((i + 1, j + 1) for i in range(9) for j in range(9) if _A[i, j])


def transition_matrix() -> np.ndarray:
    """A[i, j] = 1 iff F0(R_{i+1}) meets R_{j+1}."""
    return _A.copy()


def admissible(word) -> bool:
    return all((a, b) in _ALLOWED for a, b in zip(word, word[1:]))


def successors(symbol: int) -> tuple[int, ...]:
    tgt = BRANCHES[row_of(symbol)].target_col
    return tuple(j for j in range(1, 10) if col_of(j) == tgt)


def predecessors(symbol: int) -> tuple[int, ...]:
    return tuple(i for i in range(1, 10) if BRANCHES[row_of(i)].target_col == col_of(symbol))


# ----------------------------------------------------------------------
# stripe / column geometry

def stripe_bounds(p: ParamSet, row: int) -> tuple[float, float]:
    y0 = p.row_bottom(row)
    return y0, y0 + 1.0 / (p.rho if row == 1 else p.sigma)


def column_bounds(p: ParamSet, col: int) -> tuple[float, float]:
    x0 = p.col_left(col)
    return x0, x0 + p.lam


def _like(val, a):
    """Cast ``a`` to the scalar type of ``val`` (float or mpf)."""
    return a if isinstance(val, (float, int, np.floating)) else type(val)(a)


def stripe_of(p: ParamSet, y) -> int | None:
    for row in (1, 2, 3):
        y0 = _like(y, p.row_bottom(row))
        y1 = y0 + _like(y, 1) / _like(y, p.rho if row == 1 else p.sigma)
        if y0 <= y <= y1:
            return row
    return None


def column_of(p: ParamSet, x) -> int | None:
    for col in (1, 2, 3):
        x0 = _like(x, p.col_left(col))
        if x0 <= x <= x0 + _like(x, p.lam):
            return col
    return None


def rectangle_of(p: ParamSet, pt) -> int | None:
    """Label of the rectangle containing ``pt``, or None in a gap."""
    row, col = stripe_of(p, pt[1]), column_of(p, pt[0])
    if row is None or col is None:
        return None
    return 3 * (row - 1) + col


# ----------------------------------------------------------------------
# the map and its branch inverse

def branch_apply(p: ParamSet, row: int, x, y):
    br = BRANCHES[row]
    r = br.rate(p)
    xl = p.col_left(br.target_col)
    u = xl + p.lam * x if br.h_sign > 0 else xl + p.lam * (1 - x)
    t = r * (y - p.row_bottom(row))
    v = t if br.v_sign > 0 else 1 - t
    return u, v


def branch_inverse(p: ParamSet, row: int, u, v):
    br = BRANCHES[row]
    r = br.rate(p)
    xl = p.col_left(br.target_col)
    x = (u - xl) / p.lam if br.h_sign > 0 else 1 - (u - xl) / p.lam
    t = v if br.v_sign > 0 else 1 - v
    y = p.row_bottom(row) + t / r
    return x, y


def f0_apply(p: ParamSet, pt):
    """Image under F0, or ``Escaped`` when ``pt`` is off every stripe."""
    x, y = pt
    if not (0 <= x <= 1 and 0 <= y <= 1):
        return Escaped
    row = stripe_of(p, y)
    if row is None:
        return Escaped
    return branch_apply(p, row, x, y)


def f0_inverse(p: ParamSet, pt):
    """Inverse of F0 on the column strips, or ``Escaped`` off them."""
    u, v = pt
    if not (0 <= u <= 1 and 0 <= v <= 1):
        return Escaped
    col = column_of(p, u)
    if col is None:
        return Escaped
    row = next(r for r, br in BRANCHES.items() if br.target_col == col)
    return branch_inverse(p, row, u, v)


def f0_jacobian(p: ParamSet, pt) -> np.ndarray:
    row = stripe_of(p, pt[1])
    if row is None:
        raise ValueError("point lies in a gap")
    br = BRANCHES[row]
    return np.array([[br.h_sign * p.lam, 0.0], [0.0, br.v_sign * br.rate(p)]])


# ----------------------------------------------------------------------
# generation rectangles

def backward_interval(p: ParamSet, backward) -> tuple[float, float]:
    """x-range of points whose past is ``backward`` = (s_-n, ..., s_-1)."""
    lo, hi = column_bounds(p, col_of(backward[0]))
    for s in backward:
        a, _ = branch_apply(p, row_of(s), lo, 0.0)
        b, _ = branch_apply(p, row_of(s), hi, 0.0)
        lo, hi = min(a, b), max(a, b)
    return lo, hi


def forward_interval(p: ParamSet, forward) -> tuple[float, float]:
    """y-range of points whose future is ``forward`` = (s_0, ..., s_k)."""
    lo, hi = 0.0, 1.0
    for s in reversed(forward):
        row = row_of(s)
        if BRANCHES[row].v_sign < 0:
            lo, hi = 1 - hi, 1 - lo
        r = p.rho if row == 1 else p.sigma
        y0 = p.row_bottom(row)
        lo, hi = y0 + lo / r, y0 + hi / r
    return lo, hi


def gen_rectangle(p: ParamSet, backward, forward) -> GenRectangle | None:
    """Bounding box of the cylinder ``backward . forward`` (None if empty).

    ``backward`` lists s_-n..s_-1 and ``forward`` lists s_0..s_k.  For
    n backward and k+1 forward symbols the box has width λ^(n+1) and
    height ∏ 1/rate(s_i), bounded by λ^n·l0 and l0·σ^-k1·ρ^-k2.
    """
    backward, forward = tuple(backward), tuple(forward)
    if not admissible(backward + forward):
        return None
    if forward:
        x0, x1 = column_bounds(p, col_of(forward[0]))
    else:
        x0, x1 = 0.0, 1.0
    if backward:
        bx0, bx1 = backward_interval(p, backward)
        x0, x1 = max(x0, bx0), min(x1, bx1)
    y0, y1 = forward_interval(p, forward) if forward else (0.0, 1.0)
    return GenRectangle(backward, forward, x0, x1, y0, y1)
