import os
import subprocess
import sys

import numpy as np
import pytest

from hydrovrb import config, engine, flowfield, kernels
from hydrovrb import vehicle as vh

from conftest import available_backends, random_unit

needs_compiled = pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")


def test_doublet_kernel_matches_reference(backend, rng):
    for _ in range(200):
        c = rng.normal(size=3) * 3
        v_o = rng.normal(size=3)
        v = rng.normal(size=3) * 2
        p = c + random_unit(rng) * rng.uniform(2.0, 8.0)
        out = np.zeros(3)
        hit = backend.doublet_induced(p, v, c, v_o, 2.0, out)
        body = flowfield.FlowBody(c, v_o, radius=1.0, buffer=1.0)
        ref, _ = flowfield.superpose_detailed(p, None, [body], v, project_inside=True)
        assert hit == 0
        assert np.allclose(out, ref, atol=1e-12)


def test_doublet_kernel_inside_projection(backend):
    out = np.zeros(3)
    hit = backend.doublet_induced(np.array([0.5, 0, 0]), np.array([0, 1.0, 0]), np.zeros(3), np.zeros(3), 2.0, out)
    assert hit == 1 and np.all(np.isfinite(out))
    # on the surface the result is tangential
    assert abs(out[0]) < 1e-5


@needs_compiled
def test_backends_agree_on_inner_loop(rng):
    py, cc = kernels.get_backend("python"), kernels.get_backend("compiled")
    P = vh.QuadParams()
    A = vh.allocation_matrix(P)
    args = (np.array([P.mass, P.g, *P.inertia, P.max_rotor_speed]), vh.PIDGains().as_array(),
            np.linalg.inv(A).reshape(-1).copy(), A.reshape(-1).copy(), 1e-3, 10)
    for _ in range(20):
        q = rng.normal(size=4)
        x = np.concatenate([rng.normal(size=6), q / np.linalg.norm(q), rng.normal(size=3) * 0.2])
        u = np.array([*rng.normal(size=2), 9.81 + rng.normal()])
        att = rng.normal(size=3) * 0.2
        xa, xb = x.copy(), x.copy()
        pa, pb = np.zeros(13), np.zeros(13)
        oa, ob = np.zeros(8), np.zeros(8)
        sa = py.quad_advance(xa, pa, u, att, *args, oa)
        sb = cc.quad_advance(xb, pb, u, att, *args, ob)
        assert sa == sb
        assert np.allclose(xa, xb, rtol=1e-12, atol=1e-12)
        assert np.allclose(pa, pb, rtol=1e-12, atol=1e-12)
        assert np.allclose(oa, ob, rtol=1e-12, atol=1e-9)


@needs_compiled
def test_backends_agree_on_scenario():
    cfg = config.load("delta8_avoidance.json", [("timing.duration", 3.0)])
    a = engine.Simulation(cfg, kernels.get_backend("python")).run()
    b = engine.Simulation(cfg, kernels.get_backend("compiled")).run()
    ta, tb = np.array(a.trajectory), np.array(b.trajectory)
    # same algorithm, different floating-point evaluation order
    assert np.max(np.abs(ta[..., :13] - tb[..., :13])) < 1e-8
    assert a.summary()["allocation"] == b.summary()["allocation"]


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")


def test_pure_python_switch():
    env = dict(os.environ, HYDROVRB_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from hydrovrb import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env, check=True)
    assert r.stdout.strip() == "python"
    env.pop("HYDROVRB_PURE_PYTHON")
    r = subprocess.run([sys.executable, "-c", "from hydrovrb import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env, check=True)
    assert r.stdout.strip() in available_backends()


def test_benchmark_script_runs():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    r = subprocess.run([sys.executable, os.path.join(root, "benchmarks", "bench_kernels.py"), "--number", "5",
                        "--repeat", "1", "--scenario-seconds", "0.05"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "quad_advance" in r.stdout and "speed-up" in r.stdout
