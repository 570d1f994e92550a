import os
import subprocess
import sys

import numpy as np
import pytest

from mcflab import _kernels as K
from mcflab.flow_sim import dumbbell_profile, run_to_singularity

compiled = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not available")


def _profile(m=401):
    z = np.linspace(-3, 3, m)
    return z, (0.6 + 0.3 * np.cos(z)) ** 2


@compiled
@pytest.mark.parametrize("bc", [(K.NEUMANN, K.NEUMANN), (K.FREE, K.FREE)])
def test_flow_steps_agree(bc):
    z, v = _profile()
    if bc[0] == K.FREE:
        v = 4.0 - z * z
    dz = z[1] - z[0]
    a = K.flow_steps(v, dz, 3, 1e-5, 50, *bc)
    b = K.flow_steps_np(v, dz, 3, 1e-5, 50, *bc)
    assert a[1:] == b[1:]
    assert np.allclose(a[0], b[0], rtol=1e-12, atol=1e-14)


@compiled
@pytest.mark.parametrize("c, nonlinear", [(1.0, True), (0.5, False)])
def test_renorm_steps_agree(c, nonlinear):
    z = np.linspace(-10, 10, 801)
    u = 0.01 * np.exp(-z * z / 8)
    dz = z[1] - z[0]
    R = np.sqrt(4.0)
    a = K.renorm_steps(u, z, dz, 1e-3, 40, c, R, 2.0, nonlinear)
    b = K.renorm_steps_np(u, z, dz, 1e-3, 40, c, R, 2.0, nonlinear)
    assert a[1:] == b[1:]
    assert np.allclose(a[0], b[0], rtol=1e-12, atol=1e-16)


@compiled
def test_neutral_rk4_agree():
    al = np.array([1e-3, -2e-3, 5e-4])
    a = K.neutral_rk4(-1e-2, al, 0.29, 0.1, 500, 10)
    b = K.neutral_rk4_np(-1e-2, al, 0.29, 0.1, 500, 10)
    assert a[2:] == b[2:]
    assert np.allclose(a[0], b[0], rtol=1e-13) and np.allclose(a[1], b[1], rtol=1e-13)


@compiled
def test_scanline_agree():
    th = np.linspace(0, 2 * np.pi, 300, endpoint=False)
    rad = 1 + 0.3 * np.cos(5 * th)
    px, py = rad * np.cos(th), rad * np.sin(th)
    rows = np.linspace(-1.2, 1.2, 157)
    oa, xa = K.scanline(px, py, rows)
    ob, xb = K.scanline_np(px, py, rows)
    assert np.array_equal(oa, ob)
    assert np.allclose(xa, xb, rtol=0, atol=1e-14)


def test_numpy_fallback_in_subprocess():
    """The environment switch selects the numpy path and reproduces the pinch."""
    code = ("from mcflab import _kernels as K; from mcflab.flow_sim import *; "
            "tr = run_to_singularity(dumbbell_profile(3, 0.02)); print(K.backend(), repr(tr.t_star))")
    env = dict(os.environ, MCFLAB_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, t_star = out.stdout.split()
    assert backend == "numpy"
    ref = run_to_singularity(dumbbell_profile(3, 0.02)).t_star
    assert float(t_star) == pytest.approx(ref, rel=1e-9)
