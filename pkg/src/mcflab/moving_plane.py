"""Moving-plane sweeps on planar cross-sections through the axis.

A section is a polygon in coordinates (x_0, x_1). Sweeping along coordinate
``axis`` reflects the part beyond the plane {x_axis = mu} back across it and
asks whether it lands inside the part before the plane.

Containment is decided on scanlines: transverse rows at a quarter of the input
spacing, with exact polygon crossings along each row. The margin of a row is
the gap between a reflected interval and the boundary of the interval of the
section that has to contain it. Where both meet the plane itself the gap on
that side is not counted. Negative margins are violation depths.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing

from . import _kernels as K
from .errors import NoStartPlaneError, ValidationError
from .flow_sim import ProfileCurve
from .io import read_csv, write_csv

RASTER_FACTOR = 4
SWEEP_STEPS = 256


@dataclass(frozen=True)
class CrossSection:
    points: np.ndarray  # (m, 2), ordered along the curve
    closed: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValidationError("a section needs at least three (x0, x1) points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("section points must be finite")
        if self.closed:
            if np.array_equal(pts[0], pts[-1]):
                pts = pts[:-1]
            if not LinearRing(pts).is_simple:
                raise ValidationError("closed section must be a simple polygon")
        object.__setattr__(self, "points", pts)

    @property
    def bbox(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def orientation(self):
        """+1 counterclockwise, -1 clockwise (shoelace sign)."""
        x, y = self.points.T
        a = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
        return 1 if a > 0 else -1

    def spacing(self):
        d = np.linalg.norm(np.diff(np.vstack([self.points, self.points[:1]]), axis=0), axis=1)
        return float(np.median(d[d > 0]))

    def translated(self, delta, axis=0):
        pts = self.points.copy()
        pts[:, axis] += delta
        return CrossSection(pts, self.closed)

    def mirrored(self, mu, axis=0):
        pts = self.points.copy()
        pts[:, axis] = 2.0 * mu - pts[:, axis]
        return CrossSection(pts[::-1], self.closed)

    @classmethod
    def from_graph(cls, z, r):
        """Axis-containing section of a surface of revolution: (z, +r) out and (z, -r) back."""
        z = np.asarray(z, dtype=float)
        r = np.asarray(r, dtype=float)
        if r[0] != 0 or r[-1] != 0:
            raise ValidationError("the radius must vanish at both ends of a closed section")
        upper = np.column_stack([z, r])
        lower = np.column_stack([z[-2:0:-1], -r[-2:0:-1]])
        return cls(np.vstack([upper, lower]))

    @classmethod
    def from_profile(cls, p: ProfileCurve):
        lo, hi = p.caps()
        if lo is None or hi is None:
            raise ValidationError("profile must be capped at both ends")
        ins = p.inside
        z = np.concatenate([[lo], p.z[ins], [hi]])
        r = np.concatenate([[0.0], p.r[ins], [0.0]])
        return cls.from_graph(z, r)

    def write(self, path):
        return write_csv(path, ["x0", "x1"], self.points)

    @classmethod
    def read(cls, path, closed=True):
        _, rows = read_csv(path)
        return cls(np.array(rows, dtype=float), closed)


@dataclass
class _Rows:
    """Scanline intervals of a section, independent of the plane."""
    row: np.ndarray
    a: np.ndarray
    b: np.ndarray
    span: float
    x_ref: float
    h: float


def _rows(s: CrossSection, axis, window=None, h=None):
    if not s.closed and window is None:
        raise ValidationError("open section: declare the far-field window on which symmetry is assumed")
    along = s.points[:, axis]
    across = s.points[:, 1 - axis]
    h = s.spacing() / RASTER_FACTOR if h is None else h
    lo, hi = across.min(), across.max()
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
        if hi <= lo:
            raise ValidationError("the window does not meet the section")
    m = max(1, int(np.ceil((hi - lo) / h)))
    ys = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    # crossings are computed relative to the section so translations commute
    x_ref = float(along.min())
    offsets, xs = K.scanline(np.ascontiguousarray(along - x_ref), np.ascontiguousarray(across), ys)
    counts = np.diff(offsets)
    if np.any(counts % 2):
        raise ValidationError("odd number of crossings on a scanline; section is not closed")
    rid = np.repeat(np.arange(m), counts // 2)
    return _Rows(rid, xs[0::2], xs[1::2], float(np.ptp(along)) + 1.0, x_ref, (hi - lo) / m)


def _margin(R: _Rows, mu_rel):
    """Smallest row margin for the plane at mu_rel (relative coordinates)."""
    row, a, b = R.row, R.a, R.b
    left = a < mu_rel
    refl = b > mu_rel
    if not np.any(refl):
        return np.inf
    Lr, L, Rr = row[left], a[left], np.minimum(b[left], mu_rel)
    pr = row[refl]
    p = 2.0 * mu_rel - b[refl]
    q = 2.0 * mu_rel - np.maximum(a[refl], mu_rel)
    if Lr.size == 0:
        return float(-np.max(q - p))
    keyL = Lr * R.span + L
    idx = np.searchsorted(keyL, pr * R.span + p, side="right") - 1
    first = np.searchsorted(keyL, pr * R.span - R.span / 2, side="left")
    ok = (idx >= 0) & (Lr[np.clip(idx, 0, None)] == pr)
    idx = np.where(ok, idx, first)
    has = (idx < Lr.size) & (Lr[np.clip(idx, 0, Lr.size - 1)] == pr)
    idx = np.clip(idx, 0, Lr.size - 1)
    far = p - L[idx]
    at_plane = (q == mu_rel) & (Rr[idx] == mu_rel)
    near = np.where(at_plane, np.inf, Rr[idx] - q)
    m = np.where(has, np.minimum(far, near), -(q - p))
    return float(m.min())


@dataclass(frozen=True)
class ReflectionResult:
    mu: float
    contained: bool
    margin: float


def _tol(s):
    lo, hi = s.bbox
    return 1e-9 * float(np.max(hi - lo))


def reflect_and_test(s: CrossSection, mu: float, axis: int = 0, window=None, h=None) -> ReflectionResult:
    R = _rows(s, axis, window, h)
    m = _margin(R, mu - R.x_ref)
    return ReflectionResult(mu, bool(m >= -_tol(s)), m)


def sweep(s: CrossSection, mus, axis=0, window=None, h=None):
    R = _rows(s, axis, window, h)
    return np.array([_margin(R, mu - R.x_ref) for mu in mus])


def write_sweep(path, mus, margins):
    return write_csv(path, ["mu", "margin"], zip(mus, margins))


@dataclass(frozen=True)
class SymmetryResult:
    mu: float
    residual: float  # Hausdorff distance between the section and its mirror about mu
    margin: float
    cell: float  # scanline spacing
    trace: tuple = field(default=(), repr=False)  # (mu, margin) of the coarse sweep


def _resample(pts, h):
    closed = np.vstack([pts, pts[:1]])
    seg = np.diff(closed, axis=0)
    k = np.maximum(1, np.ceil(np.linalg.norm(seg, axis=1) / h)).astype(int)
    t = np.concatenate([np.arange(m) / m for m in k])
    base = np.repeat(np.arange(len(pts)), k)
    return closed[base] + t[:, None] * seg[base]


def asymmetry(s: CrossSection, mu: float, axis: int = 0, h: float = None) -> float:
    """Hausdorff distance between the boundary and its mirror about mu, sampled at spacing h."""
    h = s.spacing() / RASTER_FACTOR if h is None else h
    a = _resample(s.points, h)
    b = a.copy()
    b[:, axis] = 2.0 * mu - b[:, axis]
    d1 = cKDTree(a).query(b)[0].max()
    d2 = cKDTree(b).query(a)[0].max()
    return float(max(d1, d2))


def find_symmetry_plane(s: CrossSection, axis: int = 0, tol: float = None, window=None, h=None) -> SymmetryResult:
    """Lower the plane from the far end until containment fails, then bisect the crossing.

    The coarse sweep uses SWEEP_STEPS planes across the section; containment is
    assumed monotone between them.
    """
    R = _rows(s, axis, window, h)
    ctol = _tol(s)
    hi_end = R.span - 1.0
    tol = 1e-3 * R.h if tol is None else tol
    if _margin(R, hi_end - R.h) < -ctol:
        raise NoStartPlaneError("containment fails already next to the bounding box")
    step = max(R.h, hi_end / SWEEP_STEPS)
    mu = hi_end - R.h
    if _margin(R, mu) < -ctol:
        raise NoStartPlaneError("containment fails already next to the bounding box")
    good = mu
    bad = None
    trace = []
    while mu > 0.0:
        mu -= step
        trace.append((mu + R.x_ref, _margin(R, mu)))
        if trace[-1][1] < -ctol:
            bad = mu
            break
        good = mu
    if bad is None:
        bad = -step
    while good - bad > tol:
        mid = 0.5 * (good + bad)
        if _margin(R, mid) < -ctol:
            bad = mid
        else:
            good = mid
    mu_star = good + R.x_ref
    return SymmetryResult(mu_star, asymmetry(s, mu_star, axis, R.h), _margin(R, good), R.h, tuple(trace))
