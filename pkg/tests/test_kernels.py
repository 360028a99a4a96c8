import os
import subprocess
import sys

import numpy as np
import pytest

from kanesim import _kernels


def _backend_in_subprocess(value):
    env = dict(os.environ, KANESIM_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "import kanesim; print(kanesim.BACKEND)"],
                         env=env, capture_output=True, text=True)
    return out


def test_env_forces_python_backend():
    out = _backend_in_subprocess("python")
    assert out.returncode == 0
    assert out.stdout.strip() == "python"


def test_default_backend_prefers_compiled():
    expected = "compiled" if _kernels.COMPILED_AVAILABLE else "python"
    env = {k: v for k, v in os.environ.items() if k != "KANESIM_BACKEND"}
    out = subprocess.run([sys.executable, "-c", "import kanesim; print(kanesim.BACKEND)"],
                         env=env, capture_output=True, text=True)
    assert out.stdout.strip() == expected


def test_butcher_table_consistency():
    a, b, c = _kernels.COEFFS["A"], _kernels.COEFFS["B"], _kernels.COEFFS["C"]
    assert np.allclose(a.sum(axis=1), c)
    assert b.sum() == pytest.approx(1.0)


@pytest.mark.skipif(not _kernels.COMPILED_AVAILABLE, reason="compiled kernel not built")
def test_compiled_lands_on_output_times():
    rho = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    h = np.diag([0.01, -0.01]).astype(complex)
    z = np.zeros_like(h)
    w = np.array([[0.0, 1.0], [1.0, 0.0]])
    times = np.array([0.0, 1e-10, 3e-10])
    res = _kernels.integrate_compiled(rho, h, z, z, 0.0, 0.0, w, 6.582119569e-13, 0.0, times,
                                      1e-12, 1e-14, 10**6, driven=False)
    assert res.status == 0
    assert len(res.states) == 3
    hbar = 6.582119569e-13
    for t, s in zip(times, res.states):
        expected = 0.5 * np.exp(-2j * 0.01 * t / hbar - t)
        assert s[0, 1] == pytest.approx(expected, abs=1e-11)
