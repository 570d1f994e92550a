"""Rotationally symmetric translators and shrinkers.

All integrators are classical fixed-step RK4 so repeated solves are
bit-identical.
"""
from dataclasses import dataclass, field
from math import inf, pi, sqrt

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import _kernels as K
from .errors import NoSolutionError, NumericalError, RangeError, ValidationError
from .flow_sim import ProfileCurve
from .io import write_csv, write_kv

# (end radius, step) segments for the bowl, chosen so each segment is uniform
BOWL_SEGMENTS = ((2.0, 1e-3), (20.0, 1e-2), (200.0, 0.1), (1000.0, 1.0))


class IntegrationError(NumericalError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


def _d1(f, h):
    return (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)


def _d2(f, h):
    return (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)


# ------------------------------------------------------------------ bowl

@dataclass
class SolitonProfile:
    n: int
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    residual: float
    tip: float = 0.0
    speed: float = 1.0
    _inv: object = field(default=None, repr=False)

    def height(self, rq):
        return self.tip + np.interp(rq, self.r, self.u)

    def _inverse(self):
        if self._inv is None:
            # r^2 as a function of height is smooth through the tip: d(r^2)/du -> 2n
            slope = np.empty_like(self.r)
            slope[0] = 2.0 * self.n
            slope[1:] = 2.0 * self.r[1:] / self.du[1:]
            self._inv = CubicHermiteSpline(self.u, self.r ** 2, slope)
        return self._inv

    def radius_sq_at_height(self, h):
        """Squared radius at height h above the tip; 2n h below it (smooth extension)."""
        h = np.asarray(h, dtype=float)
        if np.any(h > self.u[-1]):
            raise RangeError(f"height beyond the solved range (max {self.u[-1]:.6g})")
        return np.where(h >= 0, self._inverse()(np.clip(h, 0.0, None)), 2.0 * self.n * h)

    def write(self, path):
        path = write_csv(path, ["r", "u"], zip(self.r, self.u + self.tip))
        write_kv(path.with_suffix(".meta.txt"), {
            "kind": "bowl", "n": self.n, "speed": self.speed, "tip": self.tip,
            "residual": self.residual, "r_max": self.r[-1]})
        return path


def solve_bowl(n: int, r_max: float = 1000.0, tol: float = 1e-8, tip: float = 0.0) -> SolitonProfile:
    """Translator u''/(1+u'^2) + (n-1)u'/r = 1 with u(0) = u'(0) = 0.

    Output nodes are uniform on each segment of BOWL_SEGMENTS. The slope
    relaxes at rate ~ r/(n-1), so inner steps are refined to keep RK4 stable.
    """
    if n < 2 or r_max < 10:
        raise ValidationError("need n >= 2 and r_max >= 10")
    segs = [(min(e, r_max), h) for e, h in BOWL_SEGMENTS]
    if r_max > BOWL_SEGMENTS[-1][0]:
        segs.append((r_max, 1.0))
    r_parts, u_parts, v_parts = [np.zeros(1)], [np.zeros(1)], [np.zeros(1)]
    start, u, v = 0.0, 0.0, 0.0
    pieces = []
    count = 1
    for end, h in segs:
        if end <= start:
            continue
        m = int(round((end - start) / h))
        h = (end - start) / m
        sub = max(1, int(np.ceil(h * end / (n - 1))))
        us, vs, status = K.bowl_segment(float(n), start, u, v, h, m, sub)
        if status:
            last = start + h * us.size
            raise IntegrationError(f"bowl integration failed near r={last:.6g}", last)
        r_parts.append(start + h * np.arange(1, m + 1))
        u_parts.append(us)
        v_parts.append(vs)
        pieces.append((count - 1, count + m, h))
        count += m
        start, u, v = end, us[-1], vs[-1]
    r, u, v = np.concatenate(r_parts), np.concatenate(u_parts), np.concatenate(v_parts)
    res = 0.0
    for i0, i1, h in pieces:
        us = u[i0:i1]
        if us.size < 5:
            continue
        rr = r[i0 + 2:i1 - 2]
        d1, d2 = _d1(us, h), _d2(us, h)
        # at the axis (n-1)u'/r -> (n-1)u''
        with np.errstate(divide="ignore", invalid="ignore"):
            drift = np.where(rr > 0, (n - 1) * d1 / np.where(rr > 0, rr, 1.0), (n - 1) * d2)
        res = max(res, float(np.max(np.abs(d2 / (1 + d1 * d1) + drift - 1.0))))
    if res > tol:
        raise IntegrationError(f"bowl residual {res:.3e} above tolerance {tol:.1e}", r[-1])
    return SolitonProfile(n, r, u, v, res, tip)


def bowl_tip_series(n, r):
    """Two-term expansion of the bowl at its tip."""
    return r * r / (2 * n) + r ** 4 / (4 * n ** 3 * (n + 2))


@dataclass
class TranslatingBowl:
    """The bowl moving with unit speed: tip height psi(t) = tip + t."""
    bowl: SolitonProfile
    t_first: float = -1e6
    t_last: float = 0.0

    @property
    def n(self):
        return self.bowl.n

    def time_range(self):
        return self.t_first, self.t_last

    def tip_height(self, t):
        return self.bowl.tip + t

    def radius_sq(self, t, zq):
        return self.bowl.radius_sq_at_height(np.asarray(zq, dtype=float) - self.tip_height(t))

    def profile_at(self, t, z):
        return ProfileCurve(self.n, z, self.radius_sq(t, z))


# -------------------------------------------------------------- shrinkers

@dataclass
class ShrinkerProfile:
    n: int
    kind: str
    z: np.ndarray
    r: np.ndarray
    residual: float
    representation: str = "radius-graph"
    a: float = None
    meta: dict = field(default_factory=dict)

    def write(self, path):
        path = write_csv(path, ["z", "r"], zip(self.z, self.r))
        items = {"kind": self.kind, "n": self.n, "representation": self.representation,
                 "residual": self.residual}
        if self.a is not None:
            items["a"] = self.a
        items.update(self.meta)
        write_kv(path.with_suffix(".meta.txt"), items)
        return path


def shrinker_residual(n, z, r, dr, d2r):
    """Pointwise (n-1)/r - r''/(1+r'^2) - (r - z r')/2."""
    return (n - 1) / r - d2r / (1 + dr * dr) - (r - z * dr) / 2


def _ads_curve(n, a, h):
    """Arclength shooting from the cap at height a down to z = 0.

    Returns (samples [z, r, theta], graph flag). theta is the tangent angle,
    starting at pi/2 where the curve leaves the axis perpendicularly.
    """
    Y, status = K.ads_shoot(float(n), float(a), float(h), int(20 * (a + 10) / h))
    return Y, status == 0


def ads_admissible(n, a, h=1e-3):
    """The profile is accepted when it reaches z = 0 as a graph with its widest point at z >= 0."""
    Y, graph = _ads_curve(n, a, h)
    return graph and Y[-1, 0] == 0.0 and Y[-1, 2] >= pi


def ads_bracket(n, a_lo=0.5, a_hi=20.0, h=1e-3, tol=1e-10):
    """Smallest admissible cap height on [a_lo, a_hi] by bisection."""
    if not ads_admissible(n, a_hi, h):
        raise NoSolutionError(f"no admissible cap height on the scanned range [{a_lo}, {a_hi}]")
    if ads_admissible(n, a_lo, h):
        return a_lo
    lo, hi = a_lo, a_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ads_admissible(n, mid, h):
            hi = mid
        else:
            lo = mid
    return hi


def solve_shrinker_profile(n: int, kind: str, a: float = None, tol: float = 1e-8,
                           dz: float = 1e-2, h: float = None, z_half: float = 10.0) -> ShrinkerProfile:
    """Cylinder and sphere in closed form; ADS(a) by arclength shooting from its cap."""
    if n < 1:
        raise ValidationError("n must be positive")
    if kind == "cylinder":
        if n < 2:
            raise ValidationError("the cylinder needs n >= 2")
        R = sqrt(2.0 * (n - 1))
        z = np.linspace(-z_half, z_half, int(round(2 * z_half / dz)) + 1)
        r = np.full(z.size, R)
        res = float(np.max(np.abs(shrinker_residual(n, z, r, 0.0 * z, 0.0 * z))))
        return ShrinkerProfile(n, kind, z, r, res)
    if kind == "sphere":
        R = sqrt(2.0 * n)
        zc = 0.95 * R
        z = np.linspace(-zc, zc, int(round(2 * zc / dz)) + 1)
        r = np.sqrt(2.0 * n - z * z)
        dr = -z / r
        d2r = -2.0 * n / r ** 3
        res = float(np.max(np.abs(shrinker_residual(n, z, r, dr, d2r))))
        if res > tol:
            raise NumericalError(f"sphere residual {res:.3e} above tolerance")
        return ShrinkerProfile(n, kind, z, r, res)
    if kind != "ads":
        raise ValidationError(f"unknown shrinker kind {kind!r}")
    if a is None or not a > 0:
        raise ValidationError("the ADS family needs a positive cap height a")
    if h is None:
        h = 1e-3 * min(1.0, 4.0 / a)  # the cap curvature a/(2n) grows with a
    Y, graph = _ads_curve(n, a, h)
    if not (graph and Y[-1, 0] == 0.0 and Y[-1, 2] >= pi):
        a_min = ads_bracket(n)
        raise NoSolutionError(f"a={a} outside the admissible range [{a_min:.8f}, 20]")
    # residual of the arclength equation on the uniform part of the curve
    body = Y[:-1]
    th = body[:, 2]
    dth = _d1(th, h)
    zz, rr, tt = body[2:-2, 0], body[2:-2, 1], th[2:-2]
    ok = rr > 1e-3
    rhs = (n - 1) * np.cos(tt[ok]) / rr[ok] + (zz[ok] * np.sin(tt[ok]) - rr[ok] * np.cos(tt[ok])) / 2
    res = float(np.max(np.abs(dth[ok] - rhs)))
    if res > tol:
        raise NumericalError(f"ADS residual {res:.3e} above tolerance {tol:.1e}")
    z, r = Y[::-1, 0], Y[::-1, 1]
    widest = float(z[np.argmax(r)])
    meta = {"convention": "cap at height a, perpendicular to the axis; accepted when the widest point lies at z >= 0",
            "max_radius": float(r.max()), "widest_height": widest, "base_radius": float(r[0])}
    return ShrinkerProfile(n, "ads", z, r, res, "arclength", a, meta)


# ------------------------------------------------------------ exact models

@dataclass(frozen=True)
class ExactModel:
    """Self-similarly shrinking model with extinction at t = 0."""
    kind: str
    n: int
    k: int  # number of curved directions

    @property
    def radius(self):
        """Radius of the time -1 slice."""
        return inf if self.k == 0 else sqrt(2.0 * self.k)

    def radius_at(self, t):
        if self.k == 0:
            return inf
        if t > 0:
            raise RangeError("the model is extinct for t > 0")
        return sqrt(-2.0 * self.k * t)

    def flow(self, x, t):
        """Position at time t of the point x on the time -1 slice."""
        return np.asarray(x, dtype=float) if self.k == 0 else np.asarray(x, dtype=float) * sqrt(-t)


def exact_model(kind: str, n: int) -> ExactModel:
    if kind == "plane":
        return ExactModel(kind, n, 0)
    if kind == "sphere":
        return ExactModel(kind, n, n)
    if kind == "cylinder":
        if n < 2:
            raise ValidationError("the cylinder needs n >= 2")
        return ExactModel(kind, n, n - 1)
    raise ValidationError(f"unknown model {kind!r}")
