"""Gaussian L2 geometry of the shrinking cylinder.

The cylinder has radius R = sqrt(2(n-1)) around the x_{n+1} = z axis.
Fields are stored by angular mode: u(z, w) = u0(z) + sum_i u1_i(z) <w, e_i>,
modes 0 and 1 only. Inner products use the Gaussian weight
(4 pi)^{-n/2} exp(-|x|^2/4), which on the cylinder splits into the constant
factor exp(-R^2/4) R^{n-1}, exact angular integrals, and an axial
Gauss-Legendre rule.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from math import e, exp, gamma, pi, sqrt

import numpy as np
from scipy.special import roots_legendre

from .errors import GridMismatchError, QuadratureError, StencilError, TruncationError, ValidationError

Z_MAX = 12.0
N_NODES = 400
MIN_EXTENT = 8.0
_STENCIL = 10  # local Lagrange interpolation, exact for degree <= 9


def sphere_area(n: int) -> float:
    """|S^{n-1}|, the area of the unit sphere in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def cylinder_radius(n: int) -> float:
    return sqrt(2.0 * (n - 1))


def weight_prefactor(n: int) -> float:
    """(4 pi)^{-n/2} e^{-R^2/4} R^{n-1} |S^{n-1}|; multiplies every axial integral."""
    R = cylinder_radius(n)
    return (4.0 * pi) ** (-n / 2.0) * exp(-R * R / 4.0) * R ** (n - 1) * sphere_area(n)


def norm_sq_axial(n: int) -> float:
    """Closed form of ||x_{n+1}||_G^2."""
    return (exp(-(n - 1) / 2.0) * pi ** (-(n - 1) / 2.0) * 2.0 ** (-(n - 3) / 2.0)
            * (n - 1) ** ((n - 1) / 2.0) * sphere_area(n))


def norm_sq_radial(n: int) -> float:
    """||x_i||_G^2 for 1 <= i <= n."""
    return (1.0 - 1.0 / n) * norm_sq_axial(n)


def norm_sq_one(n: int) -> float:
    return 0.5 * norm_sq_axial(n)


def psi0_const(n: int) -> float:
    """Prefactor of the normalized zero-mode psi_0 = K (z^2 - 2)."""
    return 2.0 ** ((n - 7) / 4.0) * (e * pi / (n - 1)) ** ((n - 1) / 4.0) * sphere_area(n) ** -0.5


def psii_const(n: int) -> float:
    """Prefactor of the normalized zero-mode psi_i = K x_i z."""
    return (2.0 ** ((n - 5) / 4.0) * (1.0 - 1.0 / n) ** -0.5
            * (e * pi / (n - 1)) ** ((n - 1) / 4.0) * sphere_area(n) ** -0.5)


def _check_uniform(z):
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValidationError("z grid must be a 1-d array with at least two nodes")
    d = np.diff(z)
    if np.any(d <= 0):
        raise ValidationError("z grid must be strictly increasing")
    dz = (z[-1] - z[0]) / (z.size - 1)
    if np.max(np.abs(d - dz)) > 1e-12 * max(1.0, abs(dz)) * max(1.0, np.max(np.abs(z))):
        raise ValidationError("z grid must be uniform")
    return z, dz


@dataclass(frozen=True)
class ModeField:
    """Scalar field on the cylinder with angular modes 0 and 1."""
    n: int
    z: np.ndarray
    mode0: np.ndarray
    mode1: np.ndarray = field(default=None)

    def __post_init__(self):
        if int(self.n) < 2:
            raise ValidationError("n must be at least 2")
        z, _ = _check_uniform(self.z)
        m0 = np.asarray(self.mode0, dtype=float)
        m1 = np.zeros((self.n, z.size)) if self.mode1 is None else np.asarray(self.mode1, dtype=float)
        if m0.shape != z.shape or m1.shape != (self.n, z.size):
            raise ValidationError("mode arrays must share the z grid length")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "mode0", m0)
        object.__setattr__(self, "mode1", m1)

    @property
    def dz(self):
        return (self.z[-1] - self.z[0]) / (self.z.size - 1)

    def __add__(self, other):
        _same_grid(self, other)
        return ModeField(self.n, self.z, self.mode0 + other.mode0, self.mode1 + other.mode1)

    def __sub__(self, other):
        _same_grid(self, other)
        return ModeField(self.n, self.z, self.mode0 - other.mode0, self.mode1 - other.mode1)

    def scale(self, s):
        return ModeField(self.n, self.z, s * self.mode0, s * self.mode1)

    def mul(self, w):
        """Multiply by an axially symmetric function sampled on the grid."""
        return ModeField(self.n, self.z, w * self.mode0, w * self.mode1)

    def trim(self, k):
        sl = slice(k, self.z.size - k)
        return ModeField(self.n, self.z[sl], self.mode0[sl], self.mode1[:, sl])


class CylinderGraph(ModeField):
    """Radial deviation from the cylinder; must keep the radius positive."""

    def __post_init__(self):
        super().__post_init__()
        R = cylinder_radius(self.n)
        if np.any(~np.isfinite(self.mode0)) or np.any(~np.isfinite(self.mode1)):
            raise ValidationError("graph values must be finite")
        if np.any(np.abs(self.mode0) >= R) or np.any(np.abs(self.mode1) >= R):
            raise ValidationError("graph deviation must stay below the cylinder radius")


def _same_grid(f, g):
    if f.n != g.n or f.z.shape != g.z.shape or np.any(f.z != g.z):
        raise GridMismatchError("fields live on different grids")


# -------------------------------------------------------------- constructors

def const_field(n, z, c=1.0):
    z = np.asarray(z, dtype=float)
    return ModeField(n, z, np.full(z.size, float(c)))


def axial_field(n, z, f0):
    """Mode-0 field from a callable or array."""
    z = np.asarray(z, dtype=float)
    v = f0(z) if callable(f0) else f0
    return ModeField(n, z, np.asarray(v, dtype=float) * np.ones_like(z))


def radial_field(n, z, i, f1):
    """Mode-1 field f1(z) <w, e_i> (i is 1-based)."""
    z = np.asarray(z, dtype=float)
    m1 = np.zeros((n, z.size))
    m1[i - 1] = f1(z) if callable(f1) else f1
    return ModeField(n, z, np.zeros(z.size), m1)


def plus_modes(n, z):
    """[1, x_1, ..., x_n, x_{n+1}] (unnormalized)."""
    R = cylinder_radius(n)
    out = [const_field(n, z)]
    out += [radial_field(n, z, i, R) for i in range(1, n + 1)]
    out.append(axial_field(n, z, lambda s: s))
    return out


def zero_modes(n, z):
    """[psi_0, psi_1, ..., psi_n], unit Gaussian norm."""
    R = cylinder_radius(n)
    k0, k1 = psi0_const(n), psii_const(n)
    out = [axial_field(n, z, lambda s: k0 * (s * s - 2.0))]
    out += [radial_field(n, z, i, lambda s: k1 * R * s) for i in range(1, n + 1)]
    return out


def cutoff(s):
    """1 on |s| <= 1/2, 0 on |s| >= 1, cubic smoothstep taper in between."""
    t = np.clip((np.abs(s) - 0.5) / 0.5, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


# -------------------------------------------------------------- quadrature

@lru_cache(maxsize=8)
def _gl(zq):
    x, w = roots_legendre(N_NODES)
    return zq * x, zq * w


@lru_cache(maxsize=32)
def _interp_plan(z0, dz, N, zq):
    nodes, w = _gl(zq)
    s = (nodes - z0) / dz
    start = np.clip(np.floor(s).astype(int) - _STENCIL // 2 + 1, 0, N - _STENCIL)
    idx = start[:, None] + np.arange(_STENCIL)[None, :]
    xi = idx.astype(float)
    lag = np.ones((nodes.size, _STENCIL))
    for j in range(_STENCIL):
        for m in range(_STENCIL):
            if m != j:
                lag[:, j] *= (s - xi[:, m]) / (xi[:, j] - xi[:, m])
    return idx, lag, w * np.exp(-nodes * nodes / 4.0)


def _plan_for(f):
    z = f.z
    if z.size < _STENCIL:
        raise StencilError("grid has too few nodes for quadrature interpolation")
    zq = min(Z_MAX, -z[0], z[-1])
    if zq < MIN_EXTENT:
        raise TruncationError(f"grid covers only |z| <= {zq:.3g}; need at least {MIN_EXTENT}")
    return _interp_plan(float(z[0]), float(f.dz), int(z.size), float(zq))


def _at_nodes(arr, plan):
    idx, lag, _ = plan
    return np.sum(arr[..., idx] * lag, axis=-1)


def gaussian_inner(f: ModeField, g: ModeField, n: int = None) -> float:
    """<f, g>_G over the cylinder."""
    _same_grid(f, g)
    if n is not None and n != f.n:
        raise GridMismatchError("dimension mismatch")
    plan = _plan_for(f)
    wq = plan[2]
    s = _at_nodes(f.mode0, plan) * _at_nodes(g.mode0, plan)
    s = s + np.sum(_at_nodes(f.mode1, plan) * _at_nodes(g.mode1, plan), axis=0) / f.n
    return weight_prefactor(f.n) * float(np.dot(wq, s))


def gaussian_norm_sq(f: ModeField) -> float:
    return gaussian_inner(f, f)


# -------------------------------------------------------------- operator L

def _d1(f, dz):
    return (-f[..., 4:] + 8.0 * f[..., 3:-1] - 8.0 * f[..., 1:-3] + f[..., :-4]) / (12.0 * dz)


def _d2(f, dz):
    return (-f[..., 4:] + 16.0 * f[..., 3:-1] - 30.0 * f[..., 2:-2]
            + 16.0 * f[..., 1:-3] - f[..., :-4]) / (12.0 * dz * dz)


def eval_L(f: ModeField, n: int = None) -> ModeField:
    """Delta_Sigma f - (z/2) f_z + f on interior nodes (two layers dropped).

    The unit-sphere Laplacian acts as 0 on mode 0 and -(n-1) on mode 1,
    scaled by 1/R^2 = 1/(2(n-1)).
    """
    n = f.n if n is None else n
    if n != f.n:
        raise GridMismatchError("dimension mismatch")
    dz = f.dz
    if f.z.size < 5:
        raise StencilError("need at least 5 nodes for the 4th-order stencil")
    if dz > 0.25:
        raise StencilError(f"grid spacing {dz:.3g} too coarse for the 4th-order stencil")
    zi = f.z[2:-2]
    R2 = cylinder_radius(n) ** 2
    m0 = _d2(f.mode0, dz) - 0.5 * zi * _d1(f.mode0, dz) + f.mode0[2:-2]
    m1 = (_d2(f.mode1, dz) - 0.5 * zi * _d1(f.mode1, dz)
          + (1.0 - (n - 1) / R2) * f.mode1[:, 2:-2])
    return ModeField(n, zi, m0, m1)


# -------------------------------------------------------------- projections

@dataclass(frozen=True)
class SpectralCoefficients:
    n: int
    a: float
    b: np.ndarray
    c: float
    alpha0: float
    alpha: np.ndarray
    U_plus: float
    U_zero: float
    U_minus: float
    norm_sq: float

    def uplus_closed_form(self) -> float:
        """||x_{n+1}||^2 (a^2 + (1 - 1/n) sum b_i^2 + c^2/2)."""
        n = self.n
        return norm_sq_axial(n) * (self.a ** 2 + (1.0 - 1.0 / n) * float(np.sum(self.b ** 2))
                                   + 0.5 * self.c ** 2)

    def recenter_offset(self) -> np.ndarray:
        """Translation sqrt(2(n-1)) b that removes the x_i components."""
        return cylinder_radius(self.n) * self.b

    def row(self, tau):
        return [tau, self.a, *self.b, self.c, self.alpha0, *self.alpha,
                self.U_plus, self.U_zero, self.U_minus]


def coefficient_header(n):
    return (["tau", "a"] + [f"b{i}" for i in range(1, n + 1)] + ["c", "alpha0"]
            + [f"alpha{i}" for i in range(1, n + 1)] + ["Uplus", "Uzero", "Uminus"])


def project_modes(u: ModeField, rho: float, n: int = None, rel_tol: float = 1e-9) -> SpectralCoefficients:
    """Project u * cutoff(z/rho) onto the plus and zero eigenspaces of L."""
    n = u.n if n is None else n
    if n != u.n:
        raise GridMismatchError("dimension mismatch")
    if not np.all(np.isfinite(u.mode0)) or not np.all(np.isfinite(u.mode1)):
        raise ValidationError("u must be finite")
    if rho < 1.0:
        raise ValidationError("cutoff radius must be >= 1")
    if rho > max(-u.z[0], u.z[-1]) + 1e-12:
        raise TruncationError(f"cutoff radius {rho} exceeds the grid extent")
    uh = u.mul(cutoff(u.z / rho))
    z = u.z
    plus = plus_modes(n, z)
    zero = zero_modes(n, z)
    c = gaussian_inner(uh, plus[0]) / norm_sq_one(n)
    b = np.array([gaussian_inner(uh, p) for p in plus[1:n + 1]]) / norm_sq_radial(n)
    a = gaussian_inner(uh, plus[n + 1]) / norm_sq_axial(n)
    alpha0 = gaussian_inner(uh, zero[0])
    alpha = np.array([gaussian_inner(uh, q) for q in zero[1:]])

    p_plus = plus[0].scale(c) + plus[n + 1].scale(a)
    for bi, p in zip(b, plus[1:n + 1]):
        p_plus = p_plus + p.scale(bi)
    p_zero = zero[0].scale(alpha0)
    for ai, q in zip(alpha, zero[1:]):
        p_zero = p_zero + q.scale(ai)
    total = gaussian_norm_sq(uh)
    up = gaussian_norm_sq(p_plus)
    u0 = gaussian_norm_sq(p_zero)
    um = total - up - u0
    tol = rel_tol * total + 1e-300
    if um < -tol:
        raise QuadratureError(f"negative minus-mode energy {um:.3e} beyond tolerance {tol:.3e}")
    return SpectralCoefficients(n, a, b, c, alpha0, alpha, up, u0, max(um, 0.0), total)
