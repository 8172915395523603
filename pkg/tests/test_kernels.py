import os
import subprocess
import sys

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from tariffdesign import kernels
from tariffdesign._jit import HAVE_NUMBA


@given(st.floats(0.01, 0.99), st.floats(-30, 30),
       st.lists(st.floats(-10, 10), min_size=0, max_size=40))
def test_affine_rollout_paths_agree(a, x0, drive):
    d = np.array(drive, dtype=float)
    ref = kernels._affine_rollout_py(a, x0, d)
    np.testing.assert_allclose(kernels.affine_rollout_numpy(a, x0, d), ref, rtol=1e-10, atol=1e-9)
    if HAVE_NUMBA:
        np.testing.assert_allclose(kernels._affine_rollout_nb(a, x0, d), ref, rtol=1e-12, atol=1e-12)


def _tableau_case(seed):
    rng = np.random.default_rng(seed)
    m, n = 4, 7
    A = np.hstack([rng.uniform(-1, 3, (m, n - m)), np.eye(m)])
    b = rng.uniform(1, 5, m)
    c = np.concatenate([rng.uniform(-4, 2, n - m), np.zeros(m)])
    T = np.zeros((m + 1, n + 1))
    T[:m, :n], T[:m, -1], T[m, :n] = A, b, c
    return T, np.arange(n - m, n, dtype=np.int64), np.ones(n, dtype=np.bool_)


@given(st.integers(0, 2**32 - 1))
def test_simplex_loop_paths_agree(seed):
    T, basis, allowed = _tableau_case(seed)
    T1, b1 = T.copy(), basis.copy()
    out_np = kernels.simplex_loop_numpy(T1, b1, allowed, 1000, 1e-9, 1e-9, 50)
    if HAVE_NUMBA:
        T2, b2 = T.copy(), basis.copy()
        out_nb = kernels._simplex_loop_nb(T2, b2, allowed, 1000, 1e-9, 1e-9, 50)
        assert tuple(int(v) for v in out_nb) == tuple(int(v) for v in out_np)
        np.testing.assert_allclose(T2, T1, atol=1e-9)
        np.testing.assert_array_equal(b2, b1)


_LP_SCRIPT = """
import numpy as np
from tariffdesign.milp import LPParams, solve_lp_arrays
from tariffdesign.verify import random_milp
for seed in range(25):
    m = random_milp(np.random.default_rng(seed), max_binaries=6)
    lb, ub = m.bounds()
    r = solve_lp_arrays(m.cost_vector(), m.matrix().toarray(), m.senses(), m.rhs(), lb, ub, LPParams())
    print(r.status, repr(float(r.objective)))
"""


def _run(flag):
    env = dict(os.environ, TARIFFDESIGN_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _LP_SCRIPT], env=env, capture_output=True, text=True, check=True)
    return [line.split() for line in out.stdout.splitlines()]


def test_lp_results_identical_under_both_paths():
    """The same LPs solved with and without numba reach the same status and value."""
    jit, plain = _run("0"), _run("1")
    assert len(jit) == len(plain) == 25
    assert any(s == "optimal" for s, _ in jit)
    for (s1, v1), (s2, v2) in zip(jit, plain):
        assert s1 == s2
        a, b = float(v1), float(v2)
        assert (np.isnan(a) and np.isnan(b)) or abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_env_flag_disables_numba():
    code = "from tariffdesign import kernels; print(kernels.USE_NUMBA)"
    env = dict(os.environ, TARIFFDESIGN_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
