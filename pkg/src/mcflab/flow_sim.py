"""Rotationally symmetric mean curvature flow and its renormalization.

A profile is stored as the squared radius v = r^2 over a uniform axial grid.
Where a cap meets the axis v crosses zero with nonzero slope, so the flow
equation for v stays regular there; nodes with v <= 0 lie outside the
surface and carry a smooth extension.
"""
from dataclasses import dataclass, field
from math import exp, sqrt

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from . import _kernels as K
from .cylinder_spectral import CylinderGraph, cylinder_radius
from .errors import (BlowUpError, NonConvergenceError, NotYetCylindricalError, NumericalError,
                     RangeError, RejectedStepError, ValidationError)
from .io import write_csv

_BC = {"neumann": K.NEUMANN, "free": K.FREE}


class NeckPinch(NumericalError):
    """Raised by a single step when the neck is below the resolution threshold."""


@dataclass(frozen=True)
class ProfileCurve:
    n: int
    z: np.ndarray
    v: np.ndarray  # squared radius; negative values extend the profile past caps
    bc_lo: str = "free"
    bc_hi: str = "free"

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if z.ndim != 1 or z.size < 5 or v.shape != z.shape:
            raise ValidationError("profile needs matching 1-d z and v arrays with >= 5 nodes")
        d = np.diff(z)
        if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
            raise ValidationError("axial grid must be uniform and increasing")
        if not np.all(np.isfinite(v)):
            raise ValidationError("squared radius must be finite")
        if self.bc_lo not in _BC or self.bc_hi not in _BC:
            raise ValidationError("boundary type must be 'neumann' or 'free'")
        if self.n < 1:
            raise ValidationError("n must be positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v", v)

    @property
    def dz(self):
        return (self.z[-1] - self.z[0]) / (self.z.size - 1)

    @property
    def r(self):
        return np.sqrt(np.clip(self.v, 0.0, None))

    @property
    def inside(self):
        return self.v > 0.0

    def inside_range(self):
        idx = np.flatnonzero(self.v > 0.0)
        if idx.size == 0:
            return None
        return int(idx[0]), int(idx[-1])

    def caps(self):
        """(lower, upper) axial positions where r reaches 0; None for open ends."""
        rng = self.inside_range()
        if rng is None:
            return None, None
        lo, hi = rng
        z, v = self.z, self.v
        lower = upper = None
        if lo > 0:
            lower = z[lo - 1] + (z[lo] - z[lo - 1]) * (-v[lo - 1]) / (v[lo] - v[lo - 1])
        if hi < z.size - 1:
            upper = z[hi] + (z[hi + 1] - z[hi]) * v[hi] / (v[hi] - v[hi + 1])
        return lower, upper

    def axial_extent(self):
        lo, hi = self.caps()
        return (-np.inf if lo is None else lo), (np.inf if hi is None else hi)

    def neck(self):
        """Smallest interior local minimum of r as (r_min, z); None if v is unimodal."""
        rng = self.inside_range()
        if rng is None:
            return None
        lo, hi = rng
        v = self.v
        cand = []
        for i in range(lo + 1, hi):
            if v[i] <= v[i - 1] and v[i] <= v[i + 1]:
                cand.append(i)
        if lo == 0 and self.bc_lo == "neumann" and v[0] <= v[1]:
            cand.append(0)
        if hi == v.size - 1 and self.bc_hi == "neumann" and v[-1] <= v[-2]:
            cand.append(hi)
        if not cand:
            return None
        cand = np.array(sorted(cand))
        vmin = v[cand].min()
        ties = cand[v[cand] == vmin]
        i = int(ties[ties.size // 2])
        return sqrt(vmin), float(self.z[i])

    def max_radius(self):
        return sqrt(max(float(self.v.max()), 0.0))

    def spline(self):
        return CubicSpline(self.z, self.v)

    # constructors ---------------------------------------------------------

    @classmethod
    def from_radius(cls, n, z, r, bc_lo="free", bc_hi="free"):
        """Build from radii; nodes with r <= 0 or nan are outside and get extended."""
        z = np.asarray(z, dtype=float)
        r = np.asarray(r, dtype=float)
        v = np.where(np.isfinite(r) & (r > 0), r * r, 0.0)
        idx = np.flatnonzero(v > 0)
        if idx.size < 3:
            raise ValidationError("need at least three inside nodes")
        lo, hi = int(idx[0]), int(idx[-1])
        for j in range(1, lo + 1):
            v[lo - j] = K._outer_value(v[lo], v[lo + 1], v[lo + 2], j)
        for j in range(1, z.size - hi):
            v[hi + j] = K._outer_value(v[hi], v[hi - 1], v[hi - 2], j)
        return cls(n, z, v, bc_lo, bc_hi)


def uniform_grid(a, b, dz):
    m = int(round((b - a) / dz))
    return np.linspace(a, b, m + 1)


def cylinder_profile(n, r0, half_length, dz):
    """Finite cylinder segment with Neumann ends."""
    z = uniform_grid(-half_length, half_length, dz)
    return ProfileCurve(n, z, np.full(z.size, r0 * r0), "neumann", "neumann")


def sphere_profile(n, R, dz, margin=0.5):
    z = uniform_grid(-R - margin, R + margin, dz)
    return ProfileCurve(n, z, R * R - z * z)


def capped_cylinder_profile(n, r0, half_length, dz, margin=0.5):
    """Cylinder of radius r0 on |z| <= half_length closed by hemispheres."""
    ext = half_length + r0 + margin
    z = uniform_grid(-ext, ext, dz)
    d = np.abs(z) - half_length
    v = np.where(d <= 0, r0 * r0, r0 * r0 - d * d)
    return ProfileCurve(n, z, v)


DUMBBELL_DEFAULTS = {"neck": 0.35, "bulge": 0.65, "halflength": 4.0}


def dumbbell_profile(n, dz, neck=0.35, bulge=0.65, halflength=4.0, margin=0.5):
    """r = neck + bulge (1 - cos(pi z / h))^2 / 4 on |z| <= h, hemispherical caps beyond."""
    rho = neck + bulge
    ext = halflength + rho + margin
    z = uniform_grid(-ext, ext, dz)
    core = neck + bulge * (1.0 - np.cos(np.pi * z / halflength)) ** 2 / 4.0
    d = np.abs(z) - halflength
    v = np.where(d <= 0, core * core, rho * rho - d * d)
    return ProfileCurve(n, z, v)


# ------------------------------------------------------------------ stepping

def stable_dt(p: ProfileCurve) -> float:
    nk = p.neck()
    rmin = nk[0] if nk is not None else p.max_radius()
    bound = 0.2 * p.dz ** 2
    if p.n > 1:
        bound = min(bound, 0.1 * rmin * rmin / (p.n - 1))
    return bound


def step_profile_flow(p: ProfileCurve, dt: float, pinch_factor: float = 10.0) -> ProfileCurve:
    """One semi-implicit step of r_t = r_zz/(1 + r_z^2) - (n-1)/r."""
    nk = p.neck()
    if nk is not None and nk[0] < pinch_factor * p.dz:
        raise NeckPinch(f"neck radius {nk[0]:.4g} below threshold at z={nk[1]:.4g}")
    bound = stable_dt(p)
    if dt > bound * (1 + 1e-12):
        raise RejectedStepError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    v, _, status = K.flow_steps(p.v, p.dz, p.n, dt, 1, _BC[p.bc_lo], _BC[p.bc_hi])
    if status:
        raise NeckPinch("surface collapsed or split during the step")
    return ProfileCurve(p.n, p.z, v, p.bc_lo, p.bc_hi)


@dataclass
class FlowConfig:
    t_max: float = 10.0
    snapshot_every: int = 10
    pinch_factor: float = 10.0
    dt_min: float = 1e-14
    max_steps: int = 10_000_000
    fit_points: int = 8


@dataclass
class FlowTrajectory:
    n: int
    z: np.ndarray
    times: np.ndarray
    V: np.ndarray
    bc_lo: str = "free"
    bc_hi: str = "free"
    dt_log: np.ndarray = None
    curvature_log: np.ndarray = None
    termination: str = None
    singular: tuple = None  # (z*, t*) for a neck pinch
    t_star: float = None  # extrapolated singular or extinction time
    _splines: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.times.size

    def profile(self, k) -> ProfileCurve:
        return ProfileCurve(self.n, self.z, self.V[k], self.bc_lo, self.bc_hi)

    def snapshots(self):
        for k in range(self.times.size):
            yield float(self.times[k]), self.profile(k)

    def time_range(self):
        return float(self.times[0]), float(self.times[-1])

    def _spl(self, k):
        s = self._splines.get(k)
        if s is None:
            s = CubicSpline(self.z, self.V[k])
            self._splines[k] = s
        return s

    def radius_sq(self, t, zq):
        """Squared radius at time t, linear in t between snapshots, cubic in z."""
        t0, t1 = self.time_range()
        if t < t0 - 1e-15 or t > t1 + 1e-15:
            raise RangeError(f"time {t} outside trajectory [{t0}, {t1}]")
        zq = np.asarray(zq, dtype=float)
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2))
        ta, tb = self.times[k], self.times[k + 1]
        w = 0.0 if tb == ta else (t - ta) / (tb - ta)
        out = (1 - w) * self._spl(k)(zq) + w * self._spl(k + 1)(zq)
        out = np.where((zq < self.z[0]) | (zq > self.z[-1]), np.nan, out)
        return out

    def profile_at(self, t, z=None):
        z = self.z if z is None else z
        return ProfileCurve(self.n, z, self.radius_sq(t, z), self.bc_lo, self.bc_hi)

    def write_csv(self, path, every=1):
        rows = []
        for k in range(0, self.times.size, every):
            r = np.sqrt(np.clip(self.V[k], 0.0, None))
            t = self.times[k]
            rows.extend((t, zi, ri) for zi, ri in zip(self.z, r))
        return write_csv(path, ["t", "z", "r"], rows)


def _root_linear(ts, vs):
    """Zero of the least-squares line through (t, v)."""
    if len(ts) < 2:
        return float(ts[-1])
    A = np.vstack([ts, np.ones(len(ts))]).T
    slope, icpt = np.linalg.lstsq(A, np.asarray(vs), rcond=None)[0]
    if slope >= 0:
        return float(ts[-1])
    return float(-icpt / slope)


def run_to_singularity(p0: ProfileCurve, cfg: FlowConfig = None) -> FlowTrajectory:
    """Integrate until a neck pinch, cap collapse or the time limit."""
    cfg = cfg or FlowConfig()
    if cfg.t_max <= 0 or cfg.pinch_factor <= 0 or cfg.snapshot_every < 1:
        raise ValidationError("flow configuration thresholds must be positive")
    n, z, dz = p0.n, p0.z, p0.dz
    thr = cfg.pinch_factor * dz
    bl, bh = _BC[p0.bc_lo], _BC[p0.bc_hi]
    times = [0.0]
    V = [p0.v.copy()]
    dts, curv = [], []
    t = 0.0
    v = p0.v.copy()
    p = p0
    reason = None
    steps = 0

    def partial():
        return FlowTrajectory(n, z, np.array(times), np.array(V), p0.bc_lo, p0.bc_hi,
                              np.array(dts), np.array(curv))

    while True:
        nk = p.neck()
        rmax = p.max_radius()
        if nk is not None and nk[0] < thr:
            reason = "neck-radius-threshold"
            break
        if rmax < thr:
            reason = "cap-collapse"
            break
        if t >= cfg.t_max - 1e-15:
            reason = "time-limit"
            break
        if steps >= cfg.max_steps:
            raise NonConvergenceError("step budget exhausted", partial())
        dt = stable_dt(p)
        if dt < cfg.dt_min:
            raise NonConvergenceError(f"step size collapsed to {dt:.3e}", partial())
        k = cfg.snapshot_every
        if t + k * dt > cfg.t_max:
            k = max(1, int(np.ceil((cfg.t_max - t) / dt - 1e-9)))
            dt = (cfg.t_max - t) / k
        v, done, status = K.flow_steps(v, dz, n, dt, k, bl, bh)
        t = t + done * dt
        steps += done
        if done:
            times.append(t)
            V.append(v.copy())
            dts.append(dt)
        p = ProfileCurve(n, z, v, p0.bc_lo, p0.bc_hi)
        curv.append(1.0 / (nk[0] if nk is not None else rmax))
        if status == 1:
            reason = "cap-collapse"
            break
        if status == 2:
            reason = "neck-radius-threshold"
            break

    traj = FlowTrajectory(n, z, np.array(times), np.array(V), p0.bc_lo, p0.bc_hi,
                          np.array(dts), np.array(curv), termination=reason)
    m = cfg.fit_points
    if reason == "neck-radius-threshold":
        vals = [(tt, pp.neck()) for tt, pp in list(traj.snapshots())[-m:]]
        vals = [(tt, nk) for tt, nk in vals if nk is not None]
        ts = [tt for tt, _ in vals]
        vs = [nk[0] ** 2 for _, nk in vals]
        zstar = vals[-1][1][1] if vals else float("nan")
        traj.t_star = _root_linear(ts, vs) if vals else t
        traj.singular = (zstar, traj.t_star)
    elif reason == "cap-collapse":
        ts = traj.times[-m:]
        vs = traj.V[-m:].max(axis=1)
        keep = vs > 0
        traj.t_star = _root_linear(ts[keep], vs[keep]) if keep.sum() >= 2 else t
    return traj


# ------------------------------------------------------------ analytic flows

@dataclass
class ShrinkingCylinder:
    """Round cylinder of radius sqrt(2(n-1)(T - t)), exact."""
    n: int
    T: float = 0.0
    t_first: float = -1e6

    def time_range(self):
        return self.t_first, self.T

    def radius_sq(self, t, zq):
        return np.full(np.shape(zq), 2.0 * (self.n - 1) * (self.T - t))

    def profile_at(self, t, z):
        return ProfileCurve(self.n, z, self.radius_sq(t, z), "neumann", "neumann")


@dataclass
class ShrinkingSphere:
    """Round sphere of radius sqrt(R0^2 - 2 n t) centered at z = 0."""
    n: int
    R0: float = 1.0

    def extinction(self):
        return self.R0 ** 2 / (2.0 * self.n)

    def time_range(self):
        return 0.0, self.extinction()

    def radius_sq(self, t, zq):
        zq = np.asarray(zq, dtype=float)
        return self.R0 ** 2 - 2.0 * self.n * t - zq * zq

    def profile_at(self, t, z):
        return ProfileCurve(self.n, z, self.radius_sq(t, z))


# --------------------------------------------------------------- rescaling

@dataclass(frozen=True)
class Center:
    z0: float
    t0: float
    perp: tuple = ()  # offset of the center from the axis, in R^n


@dataclass
class RenormalizedTrajectory:
    n: int
    center: Center
    taus: np.ndarray
    graphs: list
    rho: np.ndarray  # achieved graphical radius (deviation and slope below 0.1)
    window: np.ndarray  # half-width on which the slice is a graph
    convention: str = "rho = largest |z| window with |u| < 0.1 and |u_z| < 0.1"


def _angular_projection(n, r, p):
    """Mode-0 and mode-1 coefficients of the distance from the line through p.

    For a round slice of radius r around the axis, seen from an axis parallel
    line offset by |p|, s(x) = -|p| x + sqrt(r^2 - |p|^2 (1 - x^2)) with
    x = <w, p/|p|>; modes use the weight (1 - x^2)^{(n-3)/2}.
    """
    q = float(np.linalg.norm(p)) if len(p) else 0.0
    if q == 0.0:
        return r, np.zeros_like(r)
    x, w = roots_jacobi(32, (n - 3) / 2.0, (n - 3) / 2.0)
    rr = r[:, None]
    s = -q * x[None, :] + np.sqrt(np.clip(rr * rr - q * q * (1 - x * x)[None, :], 0.0, None))
    m0 = (s * w).sum(1) / w.sum()
    m1 = (s * x * w).sum(1) / (x * x * w).sum()
    return m0, m1


def rescale_about(traj, X0: Center, taus, z=None, band=0.1) -> RenormalizedTrajectory:
    """Slices e^{tau/2}(M_{t0 - e^{-tau}} - x0) as graphs over the cylinder."""
    n = traj.n
    R = cylinder_radius(n)
    z = np.linspace(-14.0, 14.0, 2801) if z is None else np.asarray(z, dtype=float)
    taus = np.asarray(taus, dtype=float)
    t_lo, t_hi = traj.time_range()
    p = np.asarray(X0.perp, dtype=float)
    phat = p / np.linalg.norm(p) if p.size and np.linalg.norm(p) > 0 else None
    graphs, rho, window = [], [], []
    mid = np.argmin(np.abs(z))
    for tau in taus:
        t = X0.t0 - exp(-tau)
        if t < t_lo - 1e-12 or t > t_hi + 1e-12:
            raise RangeError(f"tau={tau:.4g} needs time {t:.6g} outside [{t_lo:.6g}, {t_hi:.6g}]")
        scale = exp(tau / 2.0)
        zp = X0.z0 + z / scale
        vv = traj.radius_sq(t, zp)
        ok = np.isfinite(vv) & (vv > 0)
        r = np.sqrt(np.where(ok, vv, 0.0))
        m0, m1 = _angular_projection(n, r, p)
        u0 = scale * m0 - R
        good = ok & (np.abs(u0) < 0.5 * R)
        # largest symmetric window of consecutive good nodes around z = 0
        W = _sym_window(z, good, mid)
        if W < 1.0:
            raise NotYetCylindricalError(f"slice at tau={tau:.4g} is not a graph over |z| <= 1")
        inwin = np.abs(z) <= W
        u0 = np.where(inwin, u0, 0.0)
        u1 = np.zeros((n, z.size))
        if phat is not None:
            u1 = np.where(inwin, scale * m1, 0.0)[None, :] * phat[:, None]
        uz = np.gradient(u0, z)
        small = inwin & (np.abs(u0) < band) & (np.abs(uz) < band)
        rho.append(_sym_window(z, small, mid))
        window.append(W)
        graphs.append(CylinderGraph(n, z, u0, u1))
    return RenormalizedTrajectory(n, X0, taus, graphs, np.array(rho), np.array(window))


def _sym_window(z, good, mid):
    if not good[mid]:
        return 0.0
    bad_r = np.flatnonzero(~good[mid:])
    bad_l = np.flatnonzero(~good[:mid + 1][::-1])
    right = z[mid + bad_r[0] - 1] if bad_r.size else z[-1]
    left = -z[mid - bad_l[0] + 1] if bad_l.size else -z[0]
    return float(min(right, left))


# ------------------------------------------------------- renormalized flow

def step_renormalized(u: CylinderGraph, dtau: float, n: int = None, max_substep: float = 1e-3) -> CylinderGraph:
    """Advance the renormalized graph flow by dtau on the fixed window.

    Mode 0 follows the full rotationally symmetric equation for
    w = R + u0; mode 1 follows its linearization L. End values stay fixed.
    """
    n = u.n if n is None else n
    R = cylinder_radius(n)
    if np.any(np.abs(u.mode0) >= 0.5 * R):
        raise BlowUpError("graph outside the validity band |u0| < R/2")
    m = max(1, int(np.ceil(dtau / max_substep - 1e-12)))
    h = dtau / m
    dz = (u.z[-1] - u.z[0]) / (u.z.size - 1)
    m0, _, st = K.renorm_steps(u.mode0, u.z, dz, h, m, 1.0, R, float(n - 1), True)
    if st or np.any(np.abs(m0) >= 0.5 * R):
        raise BlowUpError("renormalized graph left the validity band")
    m1 = np.empty_like(u.mode1)
    for i in range(n):
        m1[i], _, st = K.renorm_steps(u.mode1[i], u.z, dz, h, m, 0.5, R, float(n - 1), False)
        if st:
            raise BlowUpError("mode-1 component diverged")
    return CylinderGraph(n, u.z, m0, m1)
