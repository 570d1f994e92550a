"""Hot loops, compiled with numba when available.

Set ``MCFLAB_NO_NUMBA=1`` to force the pure-numpy path. Both paths share
signatures and return the same values up to rounding.
"""
import os

import numpy as np
from scipy.linalg import solve_banded

NEUMANN = 0
FREE = 1

_DISABLED = os.environ.get("MCFLAB_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by MCFLAB_NO_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def backend():
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------- tridiagonal

def _thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; lower[0] and upper[-1] are ignored."""
    m = diag.shape[0]
    cp = np.empty(m)
    dp = np.empty(m)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, m):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    x = np.empty(m)
    x[m - 1] = dp[m - 1]
    for i in range(m - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _banded(lower, diag, upper, rhs):
    ab = np.zeros((3, diag.shape[0]))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


# ---------------------------------------------------------- profile flow (r^2)
#
# v = r^2 obeys v_t = (4 v v_zz - 2 v_z^2)/(4 v + v_z^2) - 2(n-1), which is
# regular where a cap meets the axis. Diffusion is implicit with frozen
# coefficient, the rest explicit. Nodes with v <= 0 lie outside the surface
# and are refilled by quadratic extrapolation after every step.

def _outer_value(f0, f1, f2, m):
    x = -float(m)
    p = f0 + x * (f1 - f0) + 0.5 * x * (x - 1.0) * (f2 - 2.0 * f1 + f0)
    lin = f0 + x * (f1 - f0)
    val = min(p, lin)
    if val > 0.0:
        val = -1e-12 * m
    return val


def _flow_steps_loop(v, dz, n, dt, nsteps, bc_lo, bc_hi):
    v = v.copy()
    N = v.shape[0]
    lower = np.empty(N)
    diag = np.empty(N)
    upper = np.empty(N)
    rhs = np.empty(N)
    inv = 1.0 / (dz * dz)
    for step in range(nsteps):
        lo = -1
        hi = -1
        for i in range(N):
            if v[i] > 0.0:
                if lo < 0:
                    lo = i
                hi = i
        if lo < 0 or hi - lo < 3:
            return v, step, 1
        for i in range(lo, hi + 1):
            if v[i] <= 0.0:
                return v, step, 2
        if lo == 0 and bc_lo == NEUMANN:
            gl = v[1]
        else:
            gl = 3.0 * v[lo] - 3.0 * v[lo + 1] + v[lo + 2]
        if hi == N - 1 and bc_hi == NEUMANN:
            gr = v[N - 2]
        else:
            gr = 3.0 * v[hi] - 3.0 * v[hi - 1] + v[hi - 2]
        m = hi - lo + 1
        for k in range(m):
            i = lo + k
            vl = v[i - 1] if k > 0 else gl
            vr = v[i + 1] if k < m - 1 else gr
            vz = (vr - vl) / (2.0 * dz)
            den = 4.0 * v[i] + vz * vz
            al = dt * inv * 4.0 * v[i] / den
            lower[k] = -al
            diag[k] = 1.0 + 2.0 * al
            upper[k] = -al
            rhs[k] = v[i] + dt * (-2.0 * vz * vz / den - 2.0 * (n - 1))
        # boundary rows: implicit mirror at Neumann ends, explicit update with
        # the neighbouring second difference at caps and free ends
        al_lo = -lower[0]
        al_hi = -upper[m - 1]
        if lo == 0 and bc_lo == NEUMANN:
            upper[0] = -2.0 * al_lo
        else:
            rhs[0] += al_lo * (v[lo] - 2.0 * v[lo + 1] + v[lo + 2])
            diag[0] = 1.0
            upper[0] = 0.0
        if hi == N - 1 and bc_hi == NEUMANN:
            lower[m - 1] = -2.0 * al_hi
        else:
            rhs[m - 1] += al_hi * (v[hi] - 2.0 * v[hi - 1] + v[hi - 2])
            diag[m - 1] = 1.0
            lower[m - 1] = 0.0
        x = _thomas(lower[:m], diag[:m], upper[:m], rhs[:m])
        for k in range(m):
            v[lo + k] = x[k]
        for j in range(1, lo + 1):
            v[lo - j] = _outer_value(v[lo], v[lo + 1], v[lo + 2], j)
        for j in range(1, N - hi):
            v[hi + j] = _outer_value(v[hi], v[hi - 1], v[hi - 2], j)
    return v, nsteps, 0


def _flow_steps_np(v, dz, n, dt, nsteps, bc_lo, bc_hi):
    v = np.array(v, dtype=float)
    N = v.size
    inv = 1.0 / (dz * dz)
    for step in range(nsteps):
        idx = np.flatnonzero(v > 0.0)
        if idx.size == 0 or idx[-1] - idx[0] < 3:
            return v, step, 1
        lo, hi = int(idx[0]), int(idx[-1])
        if idx.size != hi - lo + 1:
            return v, step, 2
        gl = v[1] if (lo == 0 and bc_lo == NEUMANN) else 3.0 * v[lo] - 3.0 * v[lo + 1] + v[lo + 2]
        gr = v[N - 2] if (hi == N - 1 and bc_hi == NEUMANN) else 3.0 * v[hi] - 3.0 * v[hi - 1] + v[hi - 2]
        w = v[lo:hi + 1]
        ext = np.concatenate(([gl], w, [gr]))
        vz = (ext[2:] - ext[:-2]) / (2.0 * dz)
        den = 4.0 * w + vz * vz
        al = dt * inv * 4.0 * w / den
        rhs = w + dt * (-2.0 * vz * vz / den - 2.0 * (n - 1))
        lower, diag, upper = -al, 1.0 + 2.0 * al, -al.copy()
        if lo == 0 and bc_lo == NEUMANN:
            upper[0] = -2.0 * al[0]
        else:
            rhs[0] += al[0] * (v[lo] - 2.0 * v[lo + 1] + v[lo + 2])
            diag[0], upper[0] = 1.0, 0.0
        if hi == N - 1 and bc_hi == NEUMANN:
            lower[-1] = -2.0 * al[-1]
        else:
            rhs[-1] += al[-1] * (v[hi] - 2.0 * v[hi - 1] + v[hi - 2])
            diag[-1], lower[-1] = 1.0, 0.0
        v[lo:hi + 1] = _banded(lower, diag, upper, rhs)
        for j in range(1, lo + 1):
            v[lo - j] = _outer_value(v[lo], v[lo + 1], v[lo + 2], j)
        for j in range(1, N - hi):
            v[hi + j] = _outer_value(v[hi], v[hi - 1], v[hi - 2], j)
    return v, nsteps, 0


# ------------------------------------------------------- renormalized flow
#
# Crank-Nicolson on the linear part a*u_zz - (z/2) u_z + c*u with frozen a,
# explicit quadratic remainder. Ends are Dirichlet (held fixed).

def _renorm_loop(u, z, dz, dt, nsteps, c, R, nm1, nonlinear):
    u = u.copy()
    N = u.shape[0]
    m = N - 2
    lower = np.empty(m)
    diag = np.empty(m)
    upper = np.empty(m)
    rhs = np.empty(m)
    inv = 1.0 / (dz * dz)
    h = 0.5 * dt
    for step in range(nsteps):
        for k in range(m):
            i = k + 1
            uz = (u[i + 1] - u[i - 1]) / (2.0 * dz)
            if nonlinear:
                a = 1.0 / (1.0 + uz * uz)
                e = -nm1 * u[i] * u[i] / (R * R * (R + u[i]))
            else:
                a = 1.0
                e = 0.0
            lo_c = a * inv + 0.25 * z[i] / dz
            up_c = a * inv - 0.25 * z[i] / dz
            mid_c = -2.0 * a * inv + c
            mu = lo_c * u[i - 1] + mid_c * u[i] + up_c * u[i + 1]
            lower[k] = -h * lo_c
            diag[k] = 1.0 - h * mid_c
            upper[k] = -h * up_c
            rhs[k] = u[i] + h * mu + dt * e
        rhs[0] -= lower[0] * u[0]
        rhs[m - 1] -= upper[m - 1] * u[N - 1]
        x = _thomas(lower, diag, upper, rhs)
        for k in range(m):
            if not np.isfinite(x[k]):
                return u, step, 1
            u[k + 1] = x[k]
    return u, nsteps, 0


def _renorm_np(u, z, dz, dt, nsteps, c, R, nm1, nonlinear):
    u = np.array(u, dtype=float)
    inv = 1.0 / (dz * dz)
    h = 0.5 * dt
    zi = z[1:-1]
    for step in range(nsteps):
        uz = (u[2:] - u[:-2]) / (2.0 * dz)
        if nonlinear:
            a = 1.0 / (1.0 + uz * uz)
            e = -nm1 * u[1:-1] ** 2 / (R * R * (R + u[1:-1]))
        else:
            a = np.ones_like(uz)
            e = 0.0
        lo_c = a * inv + 0.25 * zi / dz
        up_c = a * inv - 0.25 * zi / dz
        mid_c = -2.0 * a * inv + c
        mu = lo_c * u[:-2] + mid_c * u[1:-1] + up_c * u[2:]
        rhs = u[1:-1] + h * mu + dt * e
        rhs[0] += h * lo_c[0] * u[0]
        rhs[-1] += h * up_c[-1] * u[-1]
        x = _banded(-h * lo_c, 1.0 - h * mid_c, -h * up_c, rhs)
        if not np.all(np.isfinite(x)):
            return u, step, 1
        u[1:-1] = x
    return u, nsteps, 0


# -------------------------------------------------------------- neutral ODE

def _neutral_loop(a0, al, A, dtau, nsteps, every):
    k = al.shape[0]
    nout = nsteps // every + 1
    out0 = np.empty(nout)
    out = np.empty((nout, k))
    out0[0] = a0
    for j in range(k):
        out[0, j] = al[j]
    x0 = a0
    x = al.copy()
    k1 = np.empty(k)
    k2 = np.empty(k)
    k3 = np.empty(k)
    k4 = np.empty(k)
    tmp = np.empty(k)
    row = 1
    for step in range(nsteps):
        s = 0.0
        for j in range(k):
            s += x[j] * x[j]
        f1 = -2.0 * A * x0 * x0 - A * s
        for j in range(k):
            k1[j] = -A * x0 * x[j]
        y0 = x0 + 0.5 * dtau * f1
        s = 0.0
        for j in range(k):
            tmp[j] = x[j] + 0.5 * dtau * k1[j]
            s += tmp[j] * tmp[j]
        f2 = -2.0 * A * y0 * y0 - A * s
        for j in range(k):
            k2[j] = -A * y0 * tmp[j]
        y0 = x0 + 0.5 * dtau * f2
        s = 0.0
        for j in range(k):
            tmp[j] = x[j] + 0.5 * dtau * k2[j]
            s += tmp[j] * tmp[j]
        f3 = -2.0 * A * y0 * y0 - A * s
        for j in range(k):
            k3[j] = -A * y0 * tmp[j]
        y0 = x0 + dtau * f3
        s = 0.0
        for j in range(k):
            tmp[j] = x[j] + dtau * k3[j]
            s += tmp[j] * tmp[j]
        f4 = -2.0 * A * y0 * y0 - A * s
        for j in range(k):
            k4[j] = -A * y0 * tmp[j]
        x0 = x0 + dtau * (f1 + 2.0 * f2 + 2.0 * f3 + f4) / 6.0
        for j in range(k):
            x[j] = x[j] + dtau * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
        if not np.isfinite(x0) or abs(x0) > 1e100:
            return out0[:row], out[:row], step + 1, 1
        if (step + 1) % every == 0:
            out0[row] = x0
            for j in range(k):
                out[row, j] = x[j]
            row += 1
    return out0[:row], out[:row], nsteps, 0


def _neutral_np(a0, al, A, dtau, nsteps, every):
    al = np.array(al, dtype=float)

    def f(y0, y):
        return -2.0 * A * y0 * y0 - A * float(np.dot(y, y)), -A * y0 * y

    out0 = [a0]
    out = [al.copy()]
    x0, x = float(a0), al.copy()
    for step in range(nsteps):
        f1, k1 = f(x0, x)
        f2, k2 = f(x0 + 0.5 * dtau * f1, x + 0.5 * dtau * k1)
        f3, k3 = f(x0 + 0.5 * dtau * f2, x + 0.5 * dtau * k2)
        f4, k4 = f(x0 + dtau * f3, x + dtau * k3)
        x0 = x0 + dtau * (f1 + 2.0 * f2 + 2.0 * f3 + f4) / 6.0
        x = x + dtau * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.isfinite(x0) or abs(x0) > 1e100:
            return np.array(out0), np.array(out), step + 1, 1
        if (step + 1) % every == 0:
            out0.append(x0)
            out.append(x.copy())
    return np.array(out0), np.array(out).reshape(len(out0), al.size), nsteps, 0


# --------------------------------------------------------- scanline crossings

def _scanline_loop(px, py, rows):
    ne = px.shape[0]
    nr = rows.shape[0]
    counts = np.zeros(nr, dtype=np.int64)
    for r in range(nr):
        y = rows[r]
        for e in range(ne):
            y0 = py[e]
            y1 = py[(e + 1) % ne]
            if (y0 <= y < y1) or (y1 <= y < y0):
                counts[r] += 1
    offsets = np.zeros(nr + 1, dtype=np.int64)
    for r in range(nr):
        offsets[r + 1] = offsets[r] + counts[r]
    xs = np.empty(offsets[nr])
    for r in range(nr):
        y = rows[r]
        p = offsets[r]
        for e in range(ne):
            y0 = py[e]
            y1 = py[(e + 1) % ne]
            if (y0 <= y < y1) or (y1 <= y < y0):
                x0 = px[e]
                x1 = px[(e + 1) % ne]
                xs[p] = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                p += 1
        xs[offsets[r]:offsets[r + 1]] = np.sort(xs[offsets[r]:offsets[r + 1]])
    return offsets, xs


def _scanline_np(px, py, rows):
    qx = np.roll(px, -1)
    qy = np.roll(py, -1)
    ylo = np.minimum(py, qy)
    yhi = np.maximum(py, qy)
    per_row = [[] for _ in range(rows.size)]
    for e in np.flatnonzero(py != qy):
        i0 = np.searchsorted(rows, ylo[e], side="left")
        i1 = np.searchsorted(rows, yhi[e], side="left")
        if i1 <= i0:
            continue
        y = rows[i0:i1]
        x = px[e] + (y - py[e]) * (qx[e] - px[e]) / (qy[e] - py[e])
        for j, xv in zip(range(i0, i1), x):
            per_row[j].append(xv)
    counts = np.array([len(p) for p in per_row], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    xs = np.empty(offsets[-1])
    for j, p in enumerate(per_row):
        xs[offsets[j]:offsets[j + 1]] = np.sort(np.array(p, dtype=float))
    return offsets, xs


# ----------------------------------------------------------- soliton ODEs

def _bowl_rhs(n, r, v):
    if r == 0.0:
        return 1.0 / n
    return (1.0 + v * v) * (1.0 - (n - 1) * v / r)


def _bowl_segment(n, r0, u0, v0, h, m_out, sub):
    """RK4 for (u, v = u') of the bowl; ``sub`` inner steps per output node."""
    us = np.empty(m_out)
    vs = np.empty(m_out)
    k = h / sub
    u, v = u0, v0
    for j in range(m_out):
        for i in range(sub):
            rr = r0 + (j * sub + i) * k
            a1 = _bowl_rhs(n, rr, v)
            a2 = _bowl_rhs(n, rr + 0.5 * k, v + 0.5 * k * a1)
            a3 = _bowl_rhs(n, rr + 0.5 * k, v + 0.5 * k * a2)
            a4 = _bowl_rhs(n, rr + k, v + k * a3)
            b2 = v + 0.5 * k * a1
            b3 = v + 0.5 * k * a2
            b4 = v + k * a3
            u = u + k / 6.0 * (v + 2.0 * b2 + 2.0 * b3 + b4)
            v = v + k / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not (np.isfinite(u) and np.isfinite(v)):
            return us[:j], vs[:j], 1
        us[j] = u
        vs[j] = v
    return us, vs, 0


def _ads_rhs(n, a, z, r, th):
    c = np.cos(th)
    if r <= 0.0:
        return a / (2.0 * n)
    return (n - 1) * c / r + (z * np.sin(th) - r * c) / 2.0


def _ads_loop(n, a, h, max_steps):
    """Arclength RK4 from the cap (a, 0) with tangent angle pi/2 down to z = 0.

    Status 0: reached z = 0 as a graph; 1: stopped being a graph; 2: budget.
    """
    out = np.empty((max_steps + 2, 3))
    z, r, th = a, 0.0, np.pi / 2
    out[0, 0] = z
    out[0, 1] = r
    out[0, 2] = th
    for k in range(max_steps):
        # stage derivatives of (z, r, th) along arclength
        c1 = np.cos(th); s1 = np.sin(th); t1 = _ads_rhs(n, a, z, r, th)
        z2 = z + 0.5 * h * c1; r2 = r + 0.5 * h * s1; q2 = th + 0.5 * h * t1
        c2 = np.cos(q2); s2 = np.sin(q2); t2 = _ads_rhs(n, a, z2, r2, q2)
        z3 = z + 0.5 * h * c2; r3 = r + 0.5 * h * s2; q3 = th + 0.5 * h * t2
        c3 = np.cos(q3); s3 = np.sin(q3); t3 = _ads_rhs(n, a, z3, r3, q3)
        z4 = z + h * c3; r4 = r + h * s3; q4 = th + h * t3
        c4 = np.cos(q4); s4 = np.sin(q4); t4 = _ads_rhs(n, a, z4, r4, q4)
        zn = z + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        rn = r + h / 6.0 * (s1 + 2 * s2 + 2 * s3 + s4)
        qn = th + h / 6.0 * (t1 + 2 * t2 + 2 * t3 + t4)
        if not (np.isfinite(zn) and np.isfinite(rn) and np.isfinite(qn)) or rn <= 0.0 or np.cos(qn) >= 0.0:
            return out[:k + 1], 1
        if zn <= 0.0:
            # last step in z, where the curve is a graph: d/dz = (d/ds) / cos
            g = -z
            w1 = np.tan(th); p1 = t1 / np.cos(th)
            rb = r + 0.5 * g * w1; qb = th + 0.5 * g * p1
            w2 = np.tan(qb); p2 = _ads_rhs(n, a, z + 0.5 * g, rb, qb) / np.cos(qb)
            rb = r + 0.5 * g * w2; qb = th + 0.5 * g * p2
            w3 = np.tan(qb); p3 = _ads_rhs(n, a, z + 0.5 * g, rb, qb) / np.cos(qb)
            rb = r + g * w3; qb = th + g * p3
            w4 = np.tan(qb); p4 = _ads_rhs(n, a, 0.0, rb, qb) / np.cos(qb)
            out[k + 1, 0] = 0.0
            out[k + 1, 1] = r + g / 6.0 * (w1 + 2 * w2 + 2 * w3 + w4)
            out[k + 1, 2] = th + g / 6.0 * (p1 + 2 * p2 + 2 * p3 + p4)
            return out[:k + 2], 0
        z, r, th = zn, rn, qn
        out[k + 1, 0] = z
        out[k + 1, 1] = r
        out[k + 1, 2] = th
    return out[:max_steps + 1], 2


if HAS_NUMBA:
    _thomas = njit(cache=True)(_thomas)
    _outer_value = njit(cache=True)(_outer_value)
    flow_steps = njit(cache=True)(_flow_steps_loop)
    renorm_steps = njit(cache=True)(_renorm_loop)
    neutral_rk4 = njit(cache=True)(_neutral_loop)
    scanline = njit(cache=True)(_scanline_loop)
    _bowl_rhs = njit(cache=True)(_bowl_rhs)
    _ads_rhs = njit(cache=True)(_ads_rhs)
    bowl_segment = njit(cache=True)(_bowl_segment)
    ads_shoot = njit(cache=True)(_ads_loop)
    thomas = _thomas
else:
    flow_steps = _flow_steps_np
    renorm_steps = _renorm_np
    neutral_rk4 = _neutral_np
    scanline = _scanline_np
    bowl_segment = _bowl_segment
    ads_shoot = _ads_loop
    thomas = _banded

# pure-numpy references, always importable (used by tests and the benchmark)
flow_steps_np = _flow_steps_np
renorm_steps_np = _renorm_np
neutral_rk4_np = _neutral_np
scanline_np = _scanline_np
