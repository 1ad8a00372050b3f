import numpy as np
import pytest

from critscore import _accel
from critscore.models import _lmm_kernels as kern

from conftest import random_lmm


@pytest.mark.parametrize("lam", [(0.0, 0.0), (0.0, 0.4), (0.3, 0.7)])
def test_numba_and_numpy_agree(lam):
    data = random_lmm(np.random.default_rng(5), n=12, r_range=(1, 8), p=3, q=3, scale_map=[0, 1, 1])
    ld = np.asarray(lam)[data.scale_map]
    psi = np.array([0.2, -0.1, 0.5])
    a = kern.group_terms(ld, 1.3, psi, data.scale_map, 2, data.stats, use_numba=True)
    b = kern.group_terms(ld, 1.3, psi, data.scale_map, 2, data.stats, use_numba=False)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)
    pa = kern.profile_terms(ld, 1.69, data.stats, use_numba=True)
    pb = kern.profile_terms(ld, 1.69, data.stats, use_numba=False)
    for x, y in zip(pa, pb):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


def test_env_flag_parsing(monkeypatch):
    monkeypatch.setenv("CRITSCORE_THREADS", "3")
    assert _accel.thread_count() == 3
    monkeypatch.setenv("CRITSCORE_THREADS", "0")
    assert _accel.thread_count() >= 1


def test_env_flag_selects_numpy_path():
    import os
    import subprocess
    import sys
    env = dict(os.environ, CRITSCORE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from critscore import _accel; print(_accel.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
