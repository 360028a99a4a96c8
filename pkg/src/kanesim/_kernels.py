"""Integrator back ends: the compiled DOP853 kernel and a scipy fallback.

The compiled kernel is used when the ``_rkcore`` extension imports. Setting
``KANESIM_BACKEND=python`` forces the fallback, which drives
``scipy.integrate.solve_ivp`` with the same DOP853 method and tolerances.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.integrate import solve_ivp
from scipy.integrate._ivp import dop853_coefficients as _dop

try:  # pragma: no cover - exercised implicitly by whichever path is active
    from . import _rkcore
except ImportError:  # pragma: no cover
    _rkcore = None

#: Butcher table of the 12-stage DOP853 method plus its error weights.
N_STAGES = _dop.N_STAGES
COEFFS = {
    "A": np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES]),
    "B": np.ascontiguousarray(_dop.B),
    "C": np.ascontiguousarray(_dop.C[:N_STAGES]),
    "E3": np.ascontiguousarray(_dop.E3),
    "E5": np.ascontiguousarray(_dop.E5),
}

COMPILED_AVAILABLE = _rkcore is not None


def default_backend() -> str:
    forced = os.environ.get("KANESIM_BACKEND", "").strip().lower()
    if forced in ("python", "compiled"):
        if forced == "compiled" and not COMPILED_AVAILABLE:
            raise ImportError("KANESIM_BACKEND=compiled but the _rkcore extension is not built")
        return forced
    return "compiled" if COMPILED_AVAILABLE else "python"


BACKEND = default_backend()


class KernelResult:
    __slots__ = ("states", "nsteps", "nrejected", "nfev", "t_reached", "status")

    def __init__(self, states, nsteps, nrejected, nfev, t_reached, status):
        self.states = states
        self.nsteps = nsteps
        self.nrejected = nrejected
        self.nfev = nfev
        self.t_reached = t_reached
        self.status = status


def integrate_compiled(rho0, h0, hc, hs, omega, phase, weights, hbar, t0, t_out,
                       rtol, atol, max_steps, driven=True, first_step=0.0) -> KernelResult:
    if _rkcore is None:
        raise ImportError("the compiled integrator is not available")
    out = _rkcore.integrate(
        rho0, h0, hc, hs, float(omega), float(phase), weights, float(hbar), float(t0),
        np.asarray(t_out, dtype=float), float(rtol), float(atol), float(first_step),
        int(max_steps), COEFFS["A"], COEFFS["B"], COEFFS["C"], COEFFS["E3"], COEFFS["E5"],
        bool(driven),
    )
    return KernelResult(*out)


def integrate_python(rho0, hamiltonian, weights, hbar, t0, t_out, rtol, atol, max_steps,
                     first_step=None) -> KernelResult:
    """Fallback path; ``hamiltonian`` is a callable ``t -> H``."""
    d = rho0.shape[0]
    w = np.asarray(weights, dtype=float)
    scale = -1j / hbar

    def rhs(t, y):
        rho = y.reshape(d, d)
        h = hamiltonian(t)
        return (scale * (h @ rho - rho @ h) - w * rho).reshape(-1)

    y = np.array(rho0, dtype=complex).reshape(-1)
    t = float(t0)
    states, nsteps, nfev = [], 0, 0
    for target in np.asarray(t_out, dtype=float):
        if target > t:
            sol = solve_ivp(rhs, (t, target), y, method="DOP853", rtol=rtol, atol=atol,
                            first_step=first_step)
            nfev += sol.nfev
            nsteps += max(len(sol.t) - 1, 0)
            if sol.status != 0:
                return KernelResult(np.array(states), nsteps, 0, nfev, float(sol.t[-1]), 1)
            y = sol.y[:, -1]
            t = float(target)
            if nsteps > max_steps:
                return KernelResult(np.array(states), nsteps, 0, nfev, t, 2)
        states.append(y.reshape(d, d).copy())
    return KernelResult(np.array(states), nsteps, 0, nfev, t, 0)
