from math import sqrt

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mcflab.errors import NoSolutionError, RangeError, ValidationError
from mcflab.flow_sim import FlowConfig, ProfileCurve, run_to_singularity, sphere_profile, uniform_grid
from mcflab.solitons import (TranslatingBowl, ads_bracket, bowl_tip_series, exact_model, shrinker_residual,
                             solve_bowl, solve_shrinker_profile)


@pytest.fixture(scope="module")
def bowls():
    return {n: solve_bowl(n) for n in (2, 3, 4)}


@pytest.mark.parametrize("n", [2, 3, 4])
def test_bowl_tip_far_field_residual(bowls, n):
    b = bowls[n]
    assert b.residual <= 1e-8
    i = int(np.argmin(np.abs(b.r - 0.01)))
    assert b.r[i] == pytest.approx(0.01, abs=1e-12)
    assert abs(b.u[i] - b.r[i] ** 2 / (2 * n)) <= 1e-8
    assert abs(b.u[i] - bowl_tip_series(n, b.r[i])) <= 1e-13
    assert b.r[-1] == 1000.0
    assert 0.99 <= b.u[-1] * 2 * (n - 1) / b.r[-1] ** 2 <= 1.01
    assert b.u[0] == 0.0 and b.du[0] == 0.0
    assert np.all(np.diff(b.du) > 0)  # convex


def test_bowl_matches_stiff_reference(bowls):
    # independent route: implicit Radau from the series at r = 0.01
    n = 3
    b = bowls[n]

    def f(r, y):
        return [y[1], (1 + y[1] ** 2) * (1 - (n - 1) * y[1] / r)]

    r0 = 0.01
    y0 = [bowl_tip_series(n, r0), r0 / n + r0 ** 3 / (n ** 3 * (n + 2))]
    sol = solve_ivp(f, (r0, 100.0), y0, method="Radau", rtol=1e-12, atol=1e-12, t_eval=[10.0, 100.0])
    for rq, uq in zip(sol.t, sol.y[0]):
        j = int(np.argmin(np.abs(b.r - rq)))
        assert b.u[j] == pytest.approx(uq, rel=1e-8)


def test_bowl_translation_and_determinism(bowls):
    b = bowls[3]
    shifted = solve_bowl(3, tip=0.7)
    assert np.max(np.abs(shifted.height(b.r) - 0.7 - b.u)) <= 1e-10
    again = solve_bowl(3)
    assert np.array_equal(again.u, b.u) and np.array_equal(again.r, b.r)


def test_bowl_errors():
    with pytest.raises(ValidationError):
        solve_bowl(1)
    with pytest.raises(ValidationError):
        solve_bowl(3, r_max=5)


def test_translating_bowl(bowls):
    tb = TranslatingBowl(bowls[3])
    z = np.linspace(-2, 5, 71)
    for t in (-1.5, -1.0, 0.0):
        v = tb.radius_sq(t, z)
        assert tb.profile_at(t, z).caps()[0] == pytest.approx(t, abs=1e-12)
        h = z - t
        above = h > 0
        assert np.allclose(bowls[3].height(np.sqrt(v[above])), h[above], atol=1e-9)
    with pytest.raises(RangeError):
        tb.radius_sq(-1e6, [0.0])


def test_bowl_translates_under_flow(bowls):
    b = bowls[3]
    T = 0.05
    errs = []
    for dz in (0.02, 0.01):
        z = uniform_grid(-0.5, 6.0, dz)
        tr = run_to_singularity(ProfileCurve(3, z, b.radius_sq_at_height(z)), FlowConfig(t_max=T, snapshot_every=100))
        m = (z >= 0.05) & (z <= 4.0)
        errs.append(np.max(np.abs(tr.V[-1][m] - b.radius_sq_at_height(z[m] - T))))
    assert errs[1] <= 1e-6
    assert errs[0] / errs[1] >= 3.0


# -------------------------------------------------------------- shrinkers

@pytest.mark.parametrize("n", [2, 3, 4])
def test_cylinder_and_sphere_shrinkers(n):
    c = solve_shrinker_profile(n, "cylinder")
    assert np.all(c.r == sqrt(2 * (n - 1)))
    assert c.residual <= 1e-14
    s = solve_shrinker_profile(n, "sphere")
    assert s.residual <= 1e-12
    # independent check with finite differences of the sampled sphere
    h = s.z[1] - s.z[0]
    r = s.r
    d1 = (r[2:] - r[:-2]) / (2 * h)
    d2 = (r[2:] - 2 * r[1:-1] + r[:-2]) / h ** 2
    assert np.max(np.abs(shrinker_residual(n, s.z[1:-1], r[1:-1], d1, d2))) <= 1e-2


def test_cylinder_n3_radius_two():
    assert solve_shrinker_profile(3, "cylinder").r[0] == 2.0


def test_sphere_shrinker_self_similar_under_flow():
    n = 3
    R = sqrt(2 * n)
    tr = run_to_singularity(sphere_profile(n, R, 0.01), FlowConfig(t_max=0.5, snapshot_every=100))
    v = tr.V[-1]
    ins = v > 0.05
    # the time -1 slice evolved for 1/2 is the time -1/2 slice
    assert np.max(np.abs(v[ins] - (0.5 * R * R - tr.z[ins] ** 2))) <= 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_ads_bracket_is_the_sphere(n):
    assert ads_bracket(n) == pytest.approx(sqrt(2 * n), abs=1e-8)


def test_ads_profiles():
    n = 3
    R = sqrt(2 * (n - 1))
    prev = np.inf
    for a in (3.0, 5.0, 10.0, 20.0):
        p = solve_shrinker_profile(n, "ads", a=a)
        assert p.residual <= 1e-8
        assert p.z[-1] == a and p.r[-1] == 0.0 and p.z[0] == 0.0
        assert np.all(np.diff(p.z) > 0)
        assert p.r.max() <= sqrt(2 * n)
        excess = p.meta["base_radius"] - R
        assert 0 < excess < prev
        prev = excess
    assert prev < 0.01
    with pytest.raises(NoSolutionError):
        solve_shrinker_profile(n, "ads", a=1.0)


@pytest.mark.xfail(strict=True, reason="cap-started profiles end slightly outside the cylinder radius")
def test_ads_inside_cylinder_radius():
    p = solve_shrinker_profile(3, "ads", a=10.0)
    assert p.r.max() <= 2.0


def test_shrinker_errors():
    with pytest.raises(ValidationError):
        solve_shrinker_profile(3, "torus")
    with pytest.raises(ValidationError):
        solve_shrinker_profile(3, "ads")


def test_exact_models():
    assert exact_model("cylinder", 3).radius == 2.0
    assert exact_model("sphere", 3).radius == sqrt(6)
    assert exact_model("plane", 3).radius == np.inf
    assert exact_model("cylinder", 3).radius_at(-0.25) == pytest.approx(1.0)
    x = np.array([1.0, 2.0])
    assert np.array_equal(exact_model("plane", 2).flow(x, -5.0), x)


def test_profile_files(tmp_path, bowls):
    p = bowls[2].write(tmp_path / "bowl.csv")
    assert p.read_text().startswith("r,u\n")
    assert "residual" in (tmp_path / "bowl.meta.txt").read_text()
    q = solve_shrinker_profile(3, "ads", a=4.0).write(tmp_path / "ads.csv")
    assert q.read_text().startswith("z,r\n")
