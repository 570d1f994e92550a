"""Gaussian area, entropy, Huisken density and the cylindrical scale."""
import warnings
from dataclasses import dataclass, field
from math import exp, gamma, inf, isfinite, log2, pi, sqrt

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ive, roots_legendre

from .errors import NumericalError, RangeError, ValidationError
from .flow_sim import FlowTrajectory, ProfileCurve, ShrinkingCylinder, ShrinkingSphere
from .io import write_csv, write_kv
from .solitons import ExactModel

GL_NODES = 8
WINDOW_SIGMAS = 10.0  # axial integration window, in units of sqrt(lambda)
SUPPORT_SIGMAS = 8.0  # open ends closer than this trigger a truncation warning


class TruncationWarning(UserWarning):
    pass


# ---------------------------------------------------------------- surfaces

@dataclass(frozen=True)
class Plane:
    """The hyperplane {x_{n+1} = offset}."""
    n: int
    offset: float = 0.0


@dataclass(frozen=True)
class Sphere:
    """Round n-sphere of the given radius centered on the axis at height c."""
    n: int
    radius: float
    c: float = 0.0


@dataclass(frozen=True)
class Cylinder:
    """S^{n-1}(radius) x R around the x_{n+1} axis."""
    n: int
    radius: float


def as_surface(s):
    if isinstance(s, ExactModel):
        if s.kind == "plane":
            return Plane(s.n)
        if s.kind == "sphere":
            return Sphere(s.n, s.radius)
        return Cylinder(s.n, s.radius)
    if isinstance(s, (Plane, Sphere, Cylinder, ProfileCurve)):
        return s
    raise ValidationError(f"unsupported surface {type(s).__name__}")


def scaled(s, mu):
    """The surface mu * s (dilation about the origin)."""
    s = as_surface(s)
    if isinstance(s, Plane):
        return Plane(s.n, mu * s.offset)
    if isinstance(s, Sphere):
        return Sphere(s.n, mu * s.radius, mu * s.c)
    if isinstance(s, Cylinder):
        return Cylinder(s.n, mu * s.radius)
    return ProfileCurve(s.n, mu * s.z, mu * mu * s.v, s.bc_lo, s.bc_hi)


def _split_center(y, n):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size == 1:
        return 0.0, float(y[0])
    if y.size != n + 1:
        raise ValidationError(f"center needs 1 or {n + 1} coordinates, got {y.size}")
    return float(np.linalg.norm(y[:n])), float(y[n])


def _sphere_factor(m, rho, q, lam):
    """int over S^m(rho) of exp(-|x - p|^2 / 4 lam), |p| = q, p in the span of the sphere.

    Closed form through the von Mises-Fisher normalizer, written with the
    exponentially scaled Bessel function so large arguments stay finite.
    rho and q may be arrays.
    """
    rho = np.asarray(rho, dtype=float)
    kappa = rho * q / (2.0 * lam)
    base = rho ** m * np.exp(-(rho - q) ** 2 / (4.0 * lam))
    if q == 0.0:
        return base * _sphere_area(m)
    nu = (m - 1) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = (2 * pi) ** ((m + 1) / 2.0) * kappa ** (-nu) * ive(nu, kappa)
    small = kappa < 1e-8
    if np.any(small):
        ang = np.where(small, _sphere_area(m) * np.exp(-kappa), ang)
    return base * ang


def _sphere_area(m):
    """|S^m|, including |S^0| = 2."""
    return 2.0 * pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0)


@dataclass(frozen=True)
class GaussianAreaQuery:
    surface: object
    center: object
    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and isfinite(self.lam)):
            raise ValidationError("the scale lambda must be positive and finite")


def gaussian_area(q, center=None, lam=None):
    """(4 pi lam)^{-n/2} int exp(-|x - y|^2 / (4 lam)) dA.

    Accepts a GaussianAreaQuery, or (surface, center, lam). The center is an
    axis height or a point (x_1..x_n, x_{n+1}) with x_{n+1} along the axis.
    """
    if not isinstance(q, GaussianAreaQuery):
        q = GaussianAreaQuery(q, center, lam)
    s = as_surface(q.surface)
    lam = float(q.lam)
    n = s.n
    qp, yz = _split_center(q.center, n)
    if isinstance(s, Plane):
        if qp and n == 0:
            raise ValidationError("degenerate plane")
        return exp(-(yz - s.offset) ** 2 / (4.0 * lam))
    norm = (4.0 * pi * lam) ** (-n / 2.0)
    if isinstance(s, Sphere):
        # the center sees the sphere through its distance to the sphere's center
        d = sqrt(qp * qp + (yz - s.c) ** 2)
        return float(norm * _sphere_factor(n, s.radius, d, lam))
    if isinstance(s, Cylinder):
        if n < 2:
            raise ValidationError("the cylinder needs n >= 2")
        return float(norm * sqrt(4.0 * pi * lam) * _sphere_factor(n - 1, s.radius, qp, lam))
    return _profile_area(s, qp, yz, lam, norm)


def _gl_panels(a, b, width):
    m = max(1, int(np.ceil((b - a) / width - 1e-12)))
    x, w = roots_legendre(GL_NODES)
    edges = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _spline_root(spl, k, guess):
    """Root of the spline's cubic piece on interval k, nearest to guess."""
    c = spl.c[:, k]
    x0 = spl.x[k]
    h = spl.x[k + 1] - x0
    roots = np.roots(c)
    real = roots[np.abs(roots.imag) <= 1e-12 * max(1.0, h)].real
    real = real[(real >= -1e-12 * h) & (real <= h * (1 + 1e-12))]
    if real.size == 0:
        return guess
    return float(x0 + real[np.argmin(np.abs(x0 + real - guess))])


def _profile_area(p: ProfileCurve, qp, yz, lam, norm):
    n = p.n
    spl = p.spline()
    dspl = spl.derivative()
    rng = p.inside_range()
    if rng is None:
        return 0.0
    lo_cap, hi_cap = p.caps()
    # the integrand uses the spline, so its caps are the spline's roots
    if lo_cap is not None:
        lo_cap = _spline_root(spl, rng[0] - 1, lo_cap)
    if hi_cap is not None:
        hi_cap = _spline_root(spl, rng[1], hi_cap)
    zl = p.z[rng[0]] if lo_cap is None else lo_cap
    zh = p.z[rng[1]] if hi_cap is None else hi_cap
    sig = sqrt(lam)
    for cap, end in ((lo_cap, zl), (hi_cap, zh)):
        if cap is None and abs(end - yz) < SUPPORT_SIGMAS * sig:
            bound = exp(-(end - yz) ** 2 / (4 * lam))
            warnings.warn(f"open end at z={end:.6g} inside the Gaussian support; "
                          f"relative tail up to {bound:.2e}", TruncationWarning, stacklevel=3)
    a = max(zl, yz - WINDOW_SIGMAS * sig)
    b = min(zh, yz + WINDOW_SIGMAS * sig)
    if b <= a:
        return 0.0
    width = min(p.dz, sig / 4.0)

    def integrand(z, dzdw=None):
        v = np.clip(spl(z), 0.0, None)
        vz = dspl(z)
        r = np.sqrt(v)
        # r^{n-1} sqrt(1 + r_z^2) dz = r^{n-2} sqrt(4v + v_z^2)/2 dz; sphere factor carries r^{n-1}
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = np.where(r > 0, _sphere_factor(n - 1, r, qp, lam) / np.where(r > 0, r, 1.0), 0.0)
        f = ang * np.sqrt(4.0 * v + vz * vz) / 2.0 * np.exp(-(z - yz) ** 2 / (4.0 * lam))
        return f if dzdw is None else f * dzdw

    total = 0.0
    # near a cap r ~ sqrt(z - z_cap); substitute z = z_cap +/- w^2
    cap_len = min(4.0 * p.dz, 0.25 * (b - a))
    if lo_cap is not None and a == zl:
        w, ww = _gl_panels(0.0, sqrt(cap_len), max(sqrt(cap_len) / 4, 1e-300))
        total += float(np.dot(ww, integrand(zl + w * w, 2.0 * w)))
        a = zl + cap_len
    if hi_cap is not None and b == zh:
        w, ww = _gl_panels(0.0, sqrt(cap_len), max(sqrt(cap_len) / 4, 1e-300))
        total += float(np.dot(ww, integrand(zh - w * w, 2.0 * w)))
        b = zh - cap_len
    if b > a:
        x, wx = _gl_panels(a, b, width)
        total += float(np.dot(wx, integrand(x)))
    return norm * total


# ----------------------------------------------------------------- entropy

@dataclass
class EntropyResult:
    value: float
    center: float  # axis height of the maximizer
    lam: float
    boundary: bool  # optimizer hit the search box


def _search_box(s):
    if isinstance(s, Plane):
        return s.offset - 1.0, s.offset + 1.0, 1.0
    if isinstance(s, Sphere):
        return s.c - s.radius, s.c + s.radius, s.radius
    if isinstance(s, Cylinder):
        return -s.radius, s.radius, s.radius
    lo, hi = s.axial_extent()
    if not isfinite(lo):
        lo = s.z[0]
    if not isfinite(hi):
        hi = s.z[-1]
    return lo, hi, s.max_radius()


def entropy(surface, n=None, grid=41, log2_range=(-6.0, 6.0), tol=1e-8, max_sweeps=50):
    """Supremum of the Gaussian area over axis centers and scales.

    Coarse grid over (axis height, log2(lambda / l^2)), then coordinate
    descent with bounded line searches; l is the surface's radial size.
    """
    s = as_surface(surface)
    if n is not None and n != s.n:
        raise ValidationError("n does not match the surface")
    zlo, zhi, ell = _search_box(s)
    llo, lhi = log2_range

    def F(zc, lg):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return gaussian_area(s, zc, ell * ell * 2.0 ** lg)

    Zs = np.linspace(zlo, zhi, grid)
    Ls = np.linspace(llo, lhi, grid)
    vals = np.array([[F(zc, lg) for lg in Ls] for zc in Zs])
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    zc, lg, best = float(Zs[i]), float(Ls[j]), float(vals[i, j])
    for _ in range(max_sweeps):
        old = (zc, lg)
        if zhi > zlo:
            dz = (zhi - zlo) / (grid - 1)
            a, b = max(zlo, zc - dz), min(zhi, zc + dz)
            r = minimize_scalar(lambda x: -F(x, lg), bounds=(a, b), method="bounded",
                                options={"xatol": tol})
            if -r.fun > best:
                zc, best = float(r.x), float(-r.fun)
        dl = (lhi - llo) / (grid - 1)
        a, b = max(llo, lg - dl), min(lhi, lg + dl)
        r = minimize_scalar(lambda x: -F(zc, x), bounds=(a, b), method="bounded",
                            options={"xatol": tol})
        if -r.fun > best:
            lg, best = float(r.x), float(-r.fun)
        if abs(zc - old[0]) <= tol * max(1.0, ell) and abs(lg - old[1]) <= tol:
            break
    edge = 1e-6 * (lhi - llo)
    boundary = lg <= llo + edge or lg >= lhi - edge
    if isinstance(s, Plane):
        boundary = False  # every scale attains the value
    elif not isinstance(s, Cylinder):
        boundary = boundary or zc <= zlo + edge * ell or zc >= zhi - edge * ell
    return EntropyResult(best, zc, ell * ell * 2.0 ** lg, boundary)


def cylinder_entropy(n):
    """Entropy of S^{n-1} x R, which equals the F-value of the round S^{n-1}(sqrt(2(n-1)))."""
    k = n - 1
    return (4 * pi) ** (-k / 2) * (2.0 * k) ** (k / 2) * _sphere_area(k) * exp(-k / 2)


# ---------------------------------------------------------- Huisken density

@dataclass(frozen=True)
class StaticPlane:
    n: int
    offset: float = 0.0
    t_first: float = -1e6
    t_last: float = 1e6

    def time_range(self):
        return self.t_first, self.t_last

    def tip_height(self, t):
        return self.offset


def surface_at(traj, k=None, t=None):
    """The time slice of a trajectory: snapshot k, or time t for analytic flows."""
    if isinstance(traj, FlowTrajectory):
        if k is None:
            raise ValidationError("simulated trajectories are sampled by snapshot index")
        return traj.profile(k)
    if isinstance(traj, ShrinkingCylinder):
        return Cylinder(traj.n, sqrt(2.0 * (traj.n - 1) * (traj.T - t)))
    if isinstance(traj, ShrinkingSphere):
        return Sphere(traj.n, sqrt(traj.R0 ** 2 - 2.0 * traj.n * t))
    if isinstance(traj, StaticPlane):
        return Plane(traj.n, traj.offset)
    if hasattr(traj, "profile_at"):
        raise ValidationError("pass an explicit axial grid through a FlowTrajectory for this flow")
    raise ValidationError(f"unsupported trajectory {type(traj).__name__}")


@dataclass
class DensityReport:
    times: np.ndarray
    lams: np.ndarray
    theta: np.ndarray
    monotone: bool
    worst_step: int  # index k with the largest increase theta[k+1] - theta[k]
    worst_increase: float
    limit: float
    tol: float

    def check(self):
        if not self.monotone:
            raise NumericalError(
                f"density increases by {self.worst_increase:.3e} at step {self.worst_step} "
                f"(t={self.times[self.worst_step]:.6g}); refine the discretization")
        return self


def huisken_density(traj, X0, t0, times=None, tol=1e-3):
    """Gaussian areas of the slices at scale t0 - t, their monotonicity, and the limit t -> t0."""
    if isinstance(traj, FlowTrajectory):
        # slices within rounding of t0 carry no scale information
        ks = np.flatnonzero(traj.times < t0 - 1e-12 * max(1.0, abs(t0)))
        ts = traj.times[ks]
        slices = [traj.profile(int(k)) for k in ks]
    else:
        if times is None:
            raise ValidationError("analytic flows need explicit sample times")
        ts = np.asarray(times, dtype=float)
        ts = ts[ts < t0 - 1e-12 * max(1.0, abs(t0))]
        slices = [surface_at(traj, t=float(t)) for t in ts]
    if ts.size < 2:
        raise RangeError("need at least two slices before t0")
    lams = t0 - ts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        theta = np.array([gaussian_area(s, X0, lam) for s, lam in zip(slices, lams)])
    inc = np.diff(theta)
    k = int(np.argmax(inc))
    worst = float(inc[k])
    # limit from c0 + c1 (t0 - t) over the last decade of scales
    sel = lams <= 10.0 * lams[-1]
    if sel.sum() >= 2:
        A = np.vstack([np.ones(sel.sum()), lams[sel]]).T
        limit = float(np.linalg.lstsq(A, theta[sel], rcond=None)[0][0])
    else:
        limit = float(theta[-1])
    return DensityReport(ts, lams, theta, worst <= tol, k, worst, limit, tol)


# ------------------------------------------------------- cylindrical scale

VERDICTS = ("cylindrical", "not-cylindrical", "undecidable")
MAX_RESCALED_SPACING = 0.25


@dataclass
class CylindricalScaleReport:
    center: tuple
    epsilon: float
    window: float
    verdicts: dict
    deviations: dict
    J: float
    Z: float
    order: int = 2
    convention: str = "C2 closeness: sup of value, first and second derivative deviations"
    notes: dict = field(default_factory=dict)

    def write(self, path):
        rows = [(j, 2.0 ** j, self.verdicts[j], self.deviations[j]) for j in sorted(self.verdicts)]
        path = write_csv(path, ["j", "r", "verdict", "deviation"], rows)
        write_kv(path.with_suffix(".summary.txt"), {
            "J": self.J, "Z": self.Z, "epsilon": self.epsilon, "order": self.order,
            "window": self.window, "convention": self.convention})
        return path


def _scale_deviation(traj, z0, t0, r, n, rho, samples=5):
    """C^2 distance on B(0, rho) x [-2, -1] between the rescaled flow and the round cylinder."""
    dz = traj.z[1] - traj.z[0]
    h = dz / r
    worst = 0.0
    for s in np.linspace(-2.0, -1.0, samples):
        rc = sqrt(-2.0 * (n - 1) * s)
        if rho <= rc:
            raise ValidationError("window smaller than the cylinder radius")
        zmax = sqrt(rho * rho - rc * rc)
        m = int(np.ceil(zmax / h))
        zh = h * np.arange(-m - 2, m + 3)
        vv = traj.radius_sq(t0 + r * r * s, z0 + r * zh)
        if np.any(~np.isfinite(vv)):
            return None
        if np.any(vv <= 0):
            return inf
        R = np.sqrt(vv) / r - rc
        d1 = (R[2:] - R[:-2]) / (2 * h)
        d2 = (R[2:] - 2 * R[1:-1] + R[:-2]) / (h * h)
        core = slice(1, -1)
        worst = max(worst, float(np.max(np.abs(R[2:-2]))), float(np.max(np.abs(d1[core]))),
                    float(np.max(np.abs(d2[core]))))
    return worst


def cylindrical_scale(traj: FlowTrajectory, X, epsilon=0.05, window=5.0, j_range=None):
    """Dyadic scan of epsilon-cylindricality around X = (axis height, time).

    J is the lowest j of the topmost contiguous run of cylindrical verdicts;
    Z = 2^J. Scales whose time span [t - 2r^2, t - r^2] is not covered, or
    whose rescaled grid spacing exceeds MAX_RESCALED_SPACING, are undecidable.
    """
    z0, t0 = float(X[0]), float(X[1])
    n = traj.n
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    rho = min(1.0 / epsilon, window)
    dz = traj.z[1] - traj.z[0]
    t_lo, t_hi = traj.time_range()
    if j_range is None:
        j_range = range(int(np.floor(log2(dz))), int(np.ceil(log2(traj.z[-1] - traj.z[0]))) + 1)
    verdicts, devs = {}, {}
    for j in j_range:
        r = 2.0 ** j
        if t0 - 2 * r * r < t_lo - 1e-15 or t0 - r * r > t_hi + 1e-15 or dz / r > MAX_RESCALED_SPACING:
            verdicts[j], devs[j] = "undecidable", float("nan")
            continue
        d = _scale_deviation(traj, z0, t0, r, n, rho)
        if d is None:
            verdicts[j], devs[j] = "undecidable", float("nan")
        else:
            verdicts[j] = "cylindrical" if d <= epsilon else "not-cylindrical"
            devs[j] = d
    J = inf
    decided = [j for j in sorted(verdicts, reverse=True) if verdicts[j] != "undecidable"]
    started = False
    for j in decided:
        if verdicts[j] == "cylindrical":
            J, started = j, True
        elif started:
            break
    Z = 2.0 ** J if isfinite(J) else inf
    return CylindricalScaleReport((z0, t0), epsilon, rho, verdicts, devs, J, Z)
