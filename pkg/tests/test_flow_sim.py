from math import e, exp, gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflab import cylinder_spectral as cs
from mcflab.errors import (BlowUpError, NonConvergenceError, NotYetCylindricalError, RangeError,
                           RejectedStepError, ValidationError)
from mcflab.flow_sim import (Center, FlowConfig, NeckPinch, ProfileCurve, ShrinkingCylinder,
                             capped_cylinder_profile, cylinder_profile, dumbbell_profile,
                             rescale_about, run_to_singularity, sphere_profile, stable_dt,
                             step_profile_flow, step_renormalized, uniform_grid)

Z = np.linspace(-14.0, 14.0, 2801)


def neutral_A(n):
    S = 2 * pi ** (n / 2) / gamma(n / 2)
    return (1 / (2 * sqrt(n - 1))) * (2 * e * pi / (n - 1)) ** ((n - 1) / 4) * S ** -0.5


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cylinder_single_step_exact(n):
    p = cylinder_profile(n, 1.3, 1.0, 0.01)
    dt = stable_dt(p)
    q = step_profile_flow(p, dt)
    assert np.max(np.abs(q.r - sqrt(1.3 ** 2 - 2 * (n - 1) * dt))) <= 1e-10


def test_renormalized_cylinder_after_physical_step():
    n = 3
    R = sqrt(2 * (n - 1))
    p = cylinder_profile(n, R, 1.0, 0.01)
    dt = stable_dt(p)
    q = step_profile_flow(p, dt)
    # rescale about the extinction time of the cylinder through p
    T = R * R / (2 * (n - 1))
    assert np.max(np.abs(q.r / sqrt((T - dt) / T) - R)) <= 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_cylinder_extinction(n):
    tr = run_to_singularity(cylinder_profile(n, 1.0, 1.0, 0.01))
    assert tr.termination == "neck-radius-threshold"
    assert tr.t_star == pytest.approx(1 / (2 * (n - 1)), rel=5e-3)
    for t, p in tr.snapshots():
        assert np.max(np.abs(p.v - (1 - 2 * (n - 1) * t))) <= 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_extinction(n):
    for dz in (0.02, 0.01):
        tr = run_to_singularity(sphere_profile(n, 1.0, dz))
        assert tr.termination == "cap-collapse"
        assert tr.t_star == pytest.approx(1 / (2 * n), rel=5e-3)


def test_dumbbell_pinches_at_center():
    tr = run_to_singularity(dumbbell_profile(3, 0.01))
    assert tr.termination == "neck-radius-threshold"
    zs, ts = tr.singular
    assert abs(zs) <= 0.01
    assert 0.029 < ts < 0.032
    assert np.all(np.diff(tr.times) > 0)


def test_second_order_convergence():
    # the exact cylinder is reproduced to rounding at every dz, so the order is
    # measured on a smooth non-constant profile against a fine reference
    def final(dz):
        z = uniform_grid(-1, 1, dz)
        p = ProfileCurve(3, z, 1 + 0.2 * np.cos(np.pi * z), "neumann", "neumann")
        tr = run_to_singularity(p, FlowConfig(t_max=0.05, snapshot_every=50))
        assert tr.termination == "time-limit"
        return z, tr.V[-1]

    zr, vr = final(0.0025)
    errs = []
    for dz in (0.02, 0.01):
        z, v = final(dz)
        errs.append(np.max(np.abs(v - np.interp(z, zr, vr))))
    assert errs[0] / errs[1] >= 3.5


def test_sphere_barrier_containment():
    n, R0 = 3, 1.0
    p = capped_cylinder_profile(n, 0.3, 0.4, 0.01)
    tr = run_to_singularity(p, FlowConfig(snapshot_every=1))
    assert tr.termination == "cap-collapse"
    for t, q in tr.snapshots():
        inside = q.inside
        barrier = R0 ** 2 - 2 * n * t
        assert barrier > 0
        assert np.max(q.z[inside] ** 2 + q.v[inside]) < barrier


def test_step_errors():
    p = cylinder_profile(3, 1.0, 1.0, 0.01)
    with pytest.raises(RejectedStepError):
        step_profile_flow(p, 2 * stable_dt(p))
    thin = cylinder_profile(3, 0.05, 1.0, 0.01)
    with pytest.raises(NeckPinch):
        step_profile_flow(thin, 1e-8)
    with pytest.raises(NonConvergenceError) as ei:
        run_to_singularity(p, FlowConfig(max_steps=5, snapshot_every=1))
    assert len(ei.value.partial) >= 2
    with pytest.raises(ValidationError):
        ProfileCurve(3, np.array([0, 1, 3, 4, 5.0]), np.ones(5))


def test_profile_caps_and_neck():
    p = sphere_profile(3, 1.0, 0.01)
    lo, hi = p.caps()
    assert lo == pytest.approx(-1.0, abs=1e-12) and hi == pytest.approx(1.0, abs=1e-12)
    assert p.neck() is None
    d = dumbbell_profile(3, 0.01)
    r, zn = d.neck()
    assert r == pytest.approx(0.35, abs=1e-12) and zn == 0.0


def test_trajectory_csv(tmp_path):
    tr = run_to_singularity(cylinder_profile(2, 1.0, 0.1, 0.05), FlowConfig(t_max=0.01))
    path = tr.write_csv(tmp_path / "traj.csv")
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"t,z,r"
    assert b"\r" not in path.read_bytes()


# ----------------------------------------------------------- rescaling

def test_rescale_exact_cylinder():
    n = 3
    cyl = ShrinkingCylinder(n, T=0.0)
    rt = rescale_about(cyl, Center(0.0, 0.0), np.linspace(-2, 3, 6))
    for g in rt.graphs:
        assert np.max(np.abs(g.mode0)) <= 1e-12
    assert np.all(rt.rho == 14.0)
    with pytest.raises(RangeError):
        rescale_about(cyl, Center(0.0, 0.0), [-20.0])


def test_rescale_dumbbell_neck():
    tr = run_to_singularity(dumbbell_profile(3, 0.01))
    zs, ts = tr.singular
    tau_end = -np.log(ts - tr.times[-1])
    rt = rescale_about(tr, Center(zs, ts), np.linspace(tau_end - 1, tau_end, 3))
    m = np.abs(Z) <= 5
    assert max(np.max(np.abs(g.mode0[m])) for g in rt.graphs) <= 0.05
    # far from the pinch the slice is not close to a neck
    with pytest.raises(NotYetCylindricalError):
        rescale_about(tr, Center(3.0, ts), [tau_end])


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(-1.0, 3.0))
def test_recentering_identity(delta, tau):
    # moving the center off the axis by -delta e1 equals translating the flow by +delta e1
    n = 3
    cyl = ShrinkingCylinder(n, T=0.0)
    rt = rescale_about(cyl, Center(0.0, 0.0, (-delta, 0.0, 0.0)), [tau])
    g = rt.graphs[0]
    s = exp(tau / 2)
    assert np.max(np.abs(g.mode1[0] - delta * s)) <= 1e-10
    assert np.max(np.abs(g.mode1[1:])) == 0.0
    assert np.max(np.abs(g.mode0)) <= (delta * s) ** 2


# ------------------------------------------------------ renormalized flow

def test_renormalized_fixed_point():
    u = cs.CylinderGraph(3, Z, np.zeros(Z.size))
    out = step_renormalized(u, 10.0, max_substep=1e-3)  # 10^4 substeps
    assert np.max(np.abs(out.mode0)) <= 1e-9


def test_neutral_mode_quasi_static():
    n, eps, dtau = 3, 1e-4, 0.1
    u = cs.CylinderGraph(n, Z, eps * (Z * Z - 2))
    a0 = cs.project_modes(u, 8.0).alpha0
    a1 = cs.project_modes(step_renormalized(u, dtau), 8.0).alpha0
    assert abs(a1 - a0) <= 2 * neutral_A(n) * a0 ** 2 * dtau + 10 * eps ** 3


def test_axial_mode_growth():
    n, eps, dtau = 3, 1e-4, 0.1
    u = cs.CylinderGraph(n, Z, eps * Z)
    c0 = cs.project_modes(u, 8.0)
    c1 = cs.project_modes(step_renormalized(u, dtau), 8.0)
    assert c1.a / c0.a == pytest.approx(exp(dtau / 2), abs=eps ** 2 * 10)


def test_mode1_growth():
    n, eps, dtau = 3, 1e-4, 0.1
    m1 = np.zeros((n, Z.size))
    m1[0] = eps
    c0 = cs.project_modes(cs.CylinderGraph(n, Z, np.zeros(Z.size), m1), 8.0)
    c1 = cs.project_modes(step_renormalized(cs.CylinderGraph(n, Z, np.zeros(Z.size), m1), dtau), 8.0)
    assert c1.b[0] / c0.b[0] == pytest.approx(exp(dtau / 2), rel=1e-8)


def test_renormalized_blowup():
    with pytest.raises(BlowUpError):
        step_renormalized(cs.CylinderGraph(3, Z, np.full(Z.size, 1.2)), 0.1)
