import os
import subprocess
import sys
from importlib.util import find_spec

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psmp import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba unavailable or disabled")


def random_nodes(seed, m=50):
    rng = np.random.default_rng(seed)
    pstate = rng.integers(0, 4, m).astype(np.int8)
    computing = (pstate == K.ACTIVE) & (rng.random(m) < 0.5)
    return pstate, computing, rng


def run(kernel, pstate, computing, dt, powers):
    acc = [np.zeros(pstate.size) for _ in range(6)]
    kernel(pstate, computing, dt, np.asarray(powers, float), *acc)
    return acc


def test_numpy_kernel_by_hand():
    pstate = np.array([K.ACTIVE, K.ACTIVE, K.SLEEP, K.SWITCHING_ON, K.SWITCHING_OFF], np.int8)
    computing = np.array([True, False, False, False, False])
    total, wasted, comp, idle, sleep, switch = run(K.integrate_nodes_numpy, pstate, computing, 10.0, (190, 9, 150, 20))
    assert list(total) == [1900, 1900, 90, 1500, 200]
    assert list(wasted) == [0, 1900, 0, 1500, 200]
    assert list(comp) == [10, 0, 0, 0, 0] and list(idle) == [0, 10, 0, 0, 0]
    assert list(sleep) == [0, 0, 10, 0, 0] and list(switch) == [0, 0, 0, 10, 10]


def test_zero_interval_is_noop():
    p, c, _ = random_nodes(0)
    assert all((a == 0).all() for a in run(K.integrate_nodes, p, c, 0.0, (190, 9, 190, 9)))


@needs_numba
@given(st.integers(0, 10_000), st.floats(0, 1e5))
def test_integrate_parity(seed, dt):
    p, c, rng = random_nodes(seed)
    powers = rng.uniform(0, 300, 4)
    a = run(K.integrate_nodes_numpy, p, c, dt, powers)
    b = run(K.integrate_nodes_numba, p, c, dt, powers)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=0)


def test_ecdf_rmse_numpy_ties():
    gaps = np.array([1.0, 1.0, 2.0, 4.0])
    rmse, emp_mean = K.ecdf_exponential_rmse_numpy(gaps, 2.0)
    emp = np.array([0.5, 0.5, 0.75, 1.0])
    theo = 1 - np.exp(-gaps / 2.0)
    assert rmse == pytest.approx(np.sqrt(np.mean((emp - theo) ** 2)))
    assert emp_mean == pytest.approx(emp.mean())


@needs_numba
@given(st.lists(st.integers(0, 50), min_size=1, max_size=300), st.floats(0, 40))
def test_ecdf_parity(gaps, mean):
    g = np.sort(np.asarray(gaps, float))
    a = K.ecdf_exponential_rmse_numpy(g, mean)
    b = K.ecdf_exponential_rmse_numba(g, mean)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("flag,expect", [("1", "numpy"), ("0", "numba" if find_spec("numba") else "numpy")])
def test_env_flag_selects_backend(flag, expect):
    env = dict(os.environ, PSMP_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import psmp; print(psmp.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expect


def test_fallback_episode_matches():
    code = ("import sys; sys.path.insert(0, %r)\n"
            "import numpy as np\n"
            "from invariants import random_case\n"
            "from psmp.simcore import run_episode\n"
            "tot = []\n"
            "for s in range(30):\n"
            "    r = run_episode(*random_case(np.random.default_rng(s)))\n"
            "    tot.append((r.total_energy, r.wasted_energy, r.makespan))\n"
            "print(repr(tot))\n") % os.path.dirname(__file__)
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, PSMP_DISABLE_NUMBA=flag)
        outs.append(eval(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                        check=True).stdout))
    for a, b in zip(*outs):
        assert a == pytest.approx(b, rel=1e-12)
