"""The perturbed map F (and F_θ) around the critical point ξ.

Near ξ = (0, ξ₂) the map is replaced on the critical box
``[0, α] × [ξ₂ − β, ξ₂ + β]`` by

    F(ξ + (x, y)) = F(ξ) + (−ε₁ y,  b x − c y (y² + x + θ)).

A collar around the box blends this formula into F0 with a quintic
smoothstep; outside the collar F = F0.  Every routine accepts floats or
``mpmath.mpf`` scalars, so orbits can be followed at any precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import optimize

from .basemap import (
    BRANCHES,
    Escaped,
    branch_apply,
    branch_inverse,
    column_bounds,
    f0_apply,
    f0_inverse,
    f0_jacobian,
    rectangle_of,
    stripe_of,
)
from .params import ParamSet, periodic_height, row_of


class CriticalMapError(ValueError):
    """Bad input for the critical-zone formulas."""


@dataclass(frozen=True)
class CriticalFrame:
    xi: tuple[float, float]
    f_xi: tuple[float, float]
    xi_prime: tuple[float, float]
    alpha: float
    beta: float
    collar_x: float
    collar_y: float
    itinerary: tuple[int, ...]

    @property
    def band(self) -> tuple[float, float]:
        """x-range of the generation-(n_c+2) band through ξ'."""
        return self.xi_prime[0] - self.band_width, self.xi_prime[0]

    band_width: float = 0.0


def frame(p: ParamSet) -> CriticalFrame:
    xi_prime = branch_apply(p, 2, 0.0, p.xi2)
    width = p.lam ** (p.n_c + 2)
    f_xi = (xi_prime[0] - width / 2, xi_prime[1])
    return CriticalFrame(
        xi=(0.0, p.xi2),
        f_xi=f_xi,
        xi_prime=xi_prime,
        alpha=p.alpha_max,
        beta=p.beta_max,
        collar_x=p.d * p.lam**p.n_c / 10,
        collar_y=p.d * p.sigma ** -p.k1 * p.rho ** -p.k2 / 10,
        itinerary=tuple(p.itinerary),
        band_width=width,
    )


def _theta(p, theta):
    return p.theta if theta is None else theta


# ----------------------------------------------------------------------
# local cubic

def cubic_offsets(p: ParamSet, x, y, theta=None):
    """Unchecked local formula (also used on the collar)."""
    th = _theta(p, theta)
    return -p.eps1 * y, p.b * x - p.c * y * (y * y + x + th)


def local_cubic(p: ParamSet, x, y, theta=None):
    """Image offsets (u, v) of ξ + (x, y) relative to F(ξ)."""
    if not (0 <= x <= p.alpha_max * (1 + 1e-12) and abs(y) <= p.beta_max * (1 + 1e-12)):
        raise CriticalMapError("offset outside the critical box")
    return cubic_offsets(p, x, y, theta)


def local_cubic_inverse(p: ParamSet, u, v, theta=None):
    """Inverse of :func:`local_cubic`."""
    th = _theta(p, theta)
    y = -u / p.eps1
    if abs(y) > p.beta_max * (1 + 1e-9):
        raise CriticalMapError("point not in the image of the critical box")
    x = (v + p.c * y * (y * y + th)) / (p.b - p.c * y)
    if not (-p.alpha_max * 1e-9 <= x <= p.alpha_max * (1 + 1e-9)):
        raise CriticalMapError("point not in the image of the critical box")
    return x, y


def cubic_jacobian(p: ParamSet, x, y, theta=None) -> np.ndarray:
    th = _theta(p, theta)
    return np.array([[0.0, -p.eps1], [p.b - p.c * y, -p.c * (3 * y * y + x + th)]], dtype=float)


# ----------------------------------------------------------------------
# real cubic roots

def solve_cubic_real(a3, a2, a1, a0, polish: int = 3) -> list[float]:
    """Distinct real roots of a3·t³ + a2·t² + a1·t + a0, sorted.

    Cardano for one real root, the trigonometric form for three, then a
    few Newton steps on the original polynomial.
    """
    if a3 == 0:
        raise CriticalMapError("leading coefficient must be non-zero")
    a, b, c = a2 / a3, a1 / a3, a0 / a3
    shift = a / 3
    p_ = b - a * a / 3
    q_ = 2 * a**3 / 27 - a * b / 3 + c
    disc = (q_ / 2) ** 2 + (p_ / 3) ** 3
    scale = max(1.0, abs(a), abs(b) ** 0.5, abs(c) ** (1 / 3))
    tol = 1e-14 * scale**6
    if abs(p_) <= 1e-15 * scale**2 and abs(q_) <= 1e-15 * scale**3:
        roots = [0.0]
    elif disc > tol:
        s = math.sqrt(disc)
        t = -q_ / 2 - math.copysign(s, q_)
        A = math.copysign(abs(t) ** (1 / 3), t)
        roots = [A - p_ / (3 * A) if A != 0 else 0.0]
    elif disc < -tol:
        r = math.sqrt(-p_ / 3)
        phi = math.acos(max(-1.0, min(1.0, -q_ / (2 * r**3))))
        roots = [2 * r * math.cos((phi - 2 * math.pi * k) / 3) for k in range(3)]
    else:
        # double root: t = 3q/p (simple) and -3q/(2p) (double)
        roots = [3 * q_ / p_, -3 * q_ / (2 * p_)]
    out = []
    for t in roots:
        z = t - shift
        for _ in range(polish):
            f = ((z + a) * z + b) * z + c
            df = (3 * z + 2 * a) * z + b
            if df == 0:
                break
            step = f / df
            if not math.isfinite(step):
                break
            z -= step
        out.append(z)
    out.sort()
    dedup = []
    for z in out:
        if not dedup or abs(z - dedup[-1]) > 1e-9 * max(1.0, abs(z)):
            dedup.append(z)
    return dedup


def depressed_cubic_root(pc, qc):
    """Real root of t³ + pc·t + qc = 0 when pc ≥ 0 (unique), generic scalar."""
    if isinstance(pc, mpmath.mpf) or isinstance(qc, mpmath.mpf):
        sqrt = mpmath.sqrt

        def cbrt(z):
            return mpmath.cbrt(z) if z >= 0 else -mpmath.cbrt(-z)
    else:
        sqrt, cbrt = math.sqrt, np.cbrt
    if pc == 0:
        return -cbrt(qc)
    disc = (qc / 2) ** 2 + (pc / 3) ** 3
    s = sqrt(disc)
    t = -qc / 2 - s if qc >= 0 else -qc / 2 + s
    A = cbrt(t)
    if A == 0:
        return 0 * qc
    return A - pc / (3 * A)


# ----------------------------------------------------------------------
# glue collar

def _smooth(t):
    return t * t * t * (10 - 15 * t + 6 * t * t)


def _dsmooth(t):
    return 30 * t * t * (1 - t) ** 2


def _clip01(t):
    return 0 * t if t < 0 else (1 + 0 * t if t > 1 else t)


def region(p: ParamSet, pt) -> str:
    """'critical', 'glue' or 'linear'."""
    x, y = pt
    yl = y - p.xi2
    fr_x = p.alpha_max
    if 0 <= x <= fr_x and abs(yl) <= p.beta_max:
        return "critical"
    fr = frame(p)
    if 0 <= x <= fr_x + fr.collar_x and abs(yl) <= p.beta_max + fr.collar_y:
        return "glue"
    return "linear"


def _weight(p, fr, x, yl):
    tx = _clip01((x - p.alpha_max) / fr.collar_x)
    ty = _clip01((abs(yl) - p.beta_max) / fr.collar_y)
    sx, sy = _smooth(tx), _smooth(ty)
    w = (1 - sx) * (1 - sy)
    dwx = -_dsmooth(tx) / fr.collar_x * (1 - sy) if 0 < tx < 1 else 0.0
    sgn = 1 if yl >= 0 else -1
    dwy = -(1 - sx) * _dsmooth(ty) / fr.collar_y * sgn if 0 < ty < 1 else 0.0
    return w, float(dwx), float(dwy)


def _glue_offsets(p, fr, x, yl, theta):
    """Blended image relative to F(ξ) on the collar."""
    gu, gv = cubic_offsets(p, x, yl, theta)
    f0u, f0v = _f0_offsets(p, fr, x, yl)
    w, _, _ = _weight(p, fr, x, yl)
    return f0u + w * (gu - f0u), f0v + w * (gv - f0v)


def _f0_offsets(p, fr, x, yl):
    # F0 near ξ relative to F(ξ); the middle branch reverses both axes
    return fr.band_width / 2 - p.lam * x, -p.sigma * yl


# ----------------------------------------------------------------------
# global map

def apply(p: ParamSet, pt, theta=None):
    """Image of ``pt`` under F_θ, or ``Escaped``."""
    x, y = pt
    if not (0 <= x <= 1 and 0 <= y <= 1):
        return Escaped
    reg = region(p, pt)
    if reg == "linear":
        return f0_apply(p, pt)
    fr = frame(p)
    yl = y - p.xi2
    if reg == "critical":
        u, v = cubic_offsets(p, x, yl, theta)
    else:
        u, v = _glue_offsets(p, fr, x, yl, theta)
    return fr.f_xi[0] + u, fr.f_xi[1] + v


def jacobian(p: ParamSet, pt, theta=None) -> np.ndarray:
    """DF_θ at ``pt``; analytic on all three zones."""
    x, y = pt
    reg = region(p, pt)
    if reg == "linear":
        if stripe_of(p, y) is None:
            raise CriticalMapError("point lies in a gap")
        return f0_jacobian(p, pt)
    yl = y - p.xi2
    if reg == "critical":
        return cubic_jacobian(p, float(x), float(yl), theta)
    fr = frame(p)
    x, yl = float(x), float(yl)
    gu, gv = cubic_offsets(p, x, yl, theta)
    f0u, f0v = _f0_offsets(p, fr, x, yl)
    du, dv = gu - f0u, gv - f0v
    w, dwx, dwy = _weight(p, fr, x, yl)
    J0 = f0_jacobian(p, (x, p.xi2))
    JG = cubic_jacobian(p, x, yl, theta)
    J = J0 + w * (JG - J0)
    J[0, 0] += du * dwx
    J[0, 1] += du * dwy
    J[1, 0] += dv * dwx
    J[1, 1] += dv * dwy
    return J


def inverse(p: ParamSet, pt, theta=None):
    """Preimage of ``pt`` under F_θ, or ``Escaped``."""
    u, v = pt
    if not (0 <= u <= 1 and 0 <= v <= 1):
        return Escaped
    fr = frame(p)
    U, V = u - fr.f_xi[0], v - fr.f_xi[1]
    if abs(U) <= p.eps1 * p.beta_max * (1 + 1e-9):
        try:
            x, yl = local_cubic_inverse(p, U, V, theta)
            return max(x, 0 * x), p.xi2 + yl
        except CriticalMapError:
            pass
    q = f0_inverse(p, pt)
    if q is Escaped:
        return Escaped
    reg = region(p, q)
    if reg == "linear":
        return q
    return _glue_inverse(p, fr, pt, q, theta)


def _glue_inverse(p, fr, pt, seed, theta):
    sx = p.alpha_max + fr.collar_x
    sy = p.beta_max + fr.collar_y
    su, sv = p.lam * sx, p.sigma * sy
    target = (float(pt[0]) - fr.f_xi[0], float(pt[1]) - fr.f_xi[1])

    def resid(z):
        x, yl = z[0] * sx, z[1] * sy
        u, v = _glue_offsets(p, fr, x, yl, theta)
        return [(u - target[0]) / su, (v - target[1]) / sv]

    seeds = [(float(seed[0]) / sx, (float(seed[1]) - p.xi2) / sy)]
    seeds += [(a, b) for a in (0.2, 0.6, 0.95) for b in (-0.9, -0.5, 0.5, 0.9)]
    for z0 in seeds:
        sol = optimize.root(resid, z0, method="hybr", tol=1e-14)
        z = sol.x
        x, yl = z[0] * sx, z[1] * sy
        if not (0 <= x <= sx and abs(yl) <= sy):
            continue
        if region(p, (x, p.xi2 + yl)) != "glue":
            continue
        if max(abs(r) for r in resid(z)) < 1e-10:
            return x, p.xi2 + yl
    return Escaped


# ----------------------------------------------------------------------
# critical orbit

def cycle_heights(p: ParamSet) -> list[float]:
    """Heights of F^k(ξ), k = 1..len(itinerary), from the exact cycle."""
    it = list(p.itinerary)
    return [periodic_height(p, it[k:] + it[:k]) for k in range(len(it))]


def critical_orbit(p: ParamSet, n_back: int, n_fwd: int) -> list[tuple[int, float, float]]:
    """Points F^k(ξ) for -n_back <= k <= n_fwd as (k, x, y)."""
    out = []
    y = p.xi2
    back = []
    for k in range(1, n_back + 1):
        y = branch_inverse(p, 3, 0.0, y)[1]
        back.append((-k, 0.0, y))
    out.extend(reversed(back))
    out.append((0, 0.0, p.xi2))
    fr = frame(p)
    heights = cycle_heights(p)
    x = fr.f_xi[0]
    it = p.itinerary
    for k in range(1, n_fwd + 1):
        out.append((k, x, heights[(k - 1) % len(it)]))
        x = branch_apply(p, row_of(it[(k - 1) % len(it)]), x, 0.0)[0]
    return out


def critical_orbit_csv(p: ParamSet, n_back: int, n_fwd: int) -> str:
    lines = ["k,x,y,rectangle,in_critical_tube"]
    for k, x, y in critical_orbit(p, n_back, n_fwd):
        rect = rectangle_of(p, (x, y))
        tube = int(-p.n_c <= k <= p.k_c + 1)
        lines.append(f"{k},{x!r},{y!r},{rect},{tube}")
    return "\n".join(lines) + "\n"


def glue_det_bound(p: ParamSet, n: int = 121) -> float:
    """Sampled sup of |det DF| on the blend collar."""
    fr = frame(p)
    xs = np.linspace(0.0, p.alpha_max + fr.collar_x, n)
    ys = np.linspace(-(p.beta_max + fr.collar_y), p.beta_max + fr.collar_y, n)
    best = 0.0
    for x in xs:
        for yl in ys:
            pt = (float(x), p.xi2 + float(yl))
            if region(p, pt) != "glue":
                continue
            best = max(best, abs(np.linalg.det(jacobian(p, pt))))
    return best
