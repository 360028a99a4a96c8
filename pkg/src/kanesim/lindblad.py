"""Pure-dephasing master equation.

The density matrix obeys

    d rho / dt = -(i / hbar) [H, rho] - sum_k Gamma_k [Z_k, [Z_k, rho]]

with one rate ``gamma_e`` for every electron site and one rate ``gamma_n``
for every nuclear site. Because each dephasing operator is a Pauli Z, the
dissipator acts elementwise: ``[Z, [Z, rho]]_ij = (z_i - z_j)^2 rho_ij``.
A coherence between states differing on one site therefore decays at
``4 Gamma``, which is why ``T2 = 1 / (4 Gamma)``.

Three solvers are provided:

* :func:`evolve`, an adaptive embedded Runge-Kutta integrator (DOP853) for
  constant or rotating-drive Hamiltonians;
* :func:`evolve_expm`, the exact solution for a constant Hamiltonian via the
  matrix exponential of the 256x256 (two donors) superoperator;
* :func:`analytic_single_spin`, the closed form for one isolated spin.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from . import _kernels
from . import spin_core as sc
from .errors import DomainError, IntegrationError
from .hamiltonian import PhysicalConstants

HBAR = PhysicalConstants().hbar
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_MAX_STEPS = 50_000_000


@dataclass(frozen=True)
class DephasingRates:
    """Dephasing rates (s^-1) applied to every electron and every nucleus."""

    gamma_e: float = 0.0
    gamma_n: float = 0.0

    def __post_init__(self):
        for name in ("gamma_e", "gamma_n"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and non-negative, got {value}")

    @classmethod
    def from_t2(cls, t2e: float | None = None, t2n: float | None = None) -> "DephasingRates":
        """Rates from dephasing times; ``None`` or ``inf`` means no dephasing."""
        def rate(t2):
            if t2 is None or t2 == np.inf:
                return 0.0
            return t2_to_gamma(t2)

        return cls(rate(t2e), rate(t2n))

    def rate_for(self, label) -> float:
        return self.gamma_e if sc.SpinLabel.parse(label).species == sc.ELECTRON else self.gamma_n


TYPICAL_T2E = 60e-3
TYPICAL_T2N = 1.0


def t2_to_gamma(t2: float) -> float:
    """Dephasing rate ``1 / (4 T2)`` for a dephasing time ``t2`` (s)."""
    if not (np.isfinite(t2) and t2 > 0):
        raise DomainError(f"T2 must be positive and finite, got {t2}")
    return 1.0 / (4.0 * t2)


def typical_rates() -> DephasingRates:
    """Rates for T2e = 60 ms and T2n = 1 s."""
    return DephasingRates.from_t2(TYPICAL_T2E, TYPICAL_T2N)


def _labels_for(dim: int, labels=None):
    if labels is not None:
        return [sc.SpinLabel.parse(s) for s in labels]
    return list(sc.layout(sc.n_donors_of(dim)))


def dissipator(rho: np.ndarray, rates: DephasingRates, labels: Sequence | None = None) -> np.ndarray:
    """Sum over sites of ``Gamma [Z, [Z, rho]]``, built from the commutators."""
    rho = np.asarray(rho, dtype=complex)
    labels = _labels_for(rho.shape[0], labels)
    if rho.shape != (2 ** len(labels),) * 2:
        raise DomainError(f"state shape {rho.shape} does not match layout of {len(labels)} sites")
    out = np.zeros_like(rho)
    for s in labels:
        g = rates.rate_for(s)
        if g == 0:
            continue
        z = sc.pauli("Z", s, labels)
        inner = z @ rho - rho @ z
        out += g * (z @ inner - inner @ z)
    return out


def dephasing_weights(rates: DephasingRates, dim: int, labels: Sequence | None = None) -> np.ndarray:
    """Matrix ``W`` with ``dissipator(rho) = W * rho`` elementwise."""
    labels = _labels_for(dim, labels)
    w = np.zeros((dim, dim))
    for s, z in sc.z_diagonals(labels).items():
        g = rates.rate_for(s)
        if g:
            w += g * (z[:, None] - z[None, :]) ** 2
    return w


# -- Hamiltonian sources ---------------------------------------------------------

@dataclass(frozen=True)
class DrivenHamiltonian:
    """``H(t) = h0 + cos(omega t + phase) hc + sin(omega t + phase) hs`` (meV).

    With ``hc`` and ``hs`` omitted the Hamiltonian is constant.
    """

    h0: np.ndarray
    hc: np.ndarray | None = None
    hs: np.ndarray | None = None
    omega: float = 0.0
    phase: float = 0.0

    @property
    def driven(self) -> bool:
        return self.hc is not None or self.hs is not None

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        h = np.asarray(self.h0, dtype=complex)
        if self.driven:
            arg = self.omega * t + self.phase
            if self.hc is not None:
                h = h + np.cos(arg) * self.hc
            if self.hs is not None:
                h = h + np.sin(arg) * self.hs
        return h

    def components(self):
        zero = np.zeros_like(self.h0, dtype=complex)
        hc = zero if self.hc is None else self.hc
        hs = zero if self.hs is None else self.hs
        return (np.ascontiguousarray(self.h0, dtype=complex),
                np.ascontiguousarray(hc, dtype=complex),
                np.ascontiguousarray(hs, dtype=complex))


@dataclass
class EvolutionProblem:
    """Initial state, Hamiltonian, rates and time window for :func:`evolve`.

    ``hamiltonian`` is a constant matrix, a :class:`DrivenHamiltonian`, or any
    callable ``t -> H``. Arbitrary callables run on the scipy fallback.
    ``sample_times`` defaults to the two end points of ``t_span``.
    """

    initial: np.ndarray
    hamiltonian: object
    rates: DephasingRates = field(default_factory=DephasingRates)
    t_span: tuple = (0.0, 1e-6)
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    sample_times: Sequence[float] | None = None
    labels: Sequence | None = None
    hbar: float = HBAR
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.t_span)
        if not t1 > t0:
            raise DomainError(f"t_span must satisfy T > t0, got {self.t_span}")
        self.t_span = (t0, t1)
        if not (self.rtol > 0 and self.atol > 0):
            raise DomainError("tolerances must be positive")
        self.initial = sc.check_density_matrix(np.asarray(self.initial, dtype=complex), what="initial state")
        if self.sample_times is None:
            self.sample_times = (t0, t1)
        times = np.asarray(self.sample_times, dtype=float)
        if np.any(np.diff(times) < 0) or times[0] < t0 or times[-1] > t1:
            raise DomainError("sample_times must be increasing and inside t_span")
        self.sample_times = times


@dataclass
class Trajectory:
    """Sampled solution: ``times`` (s) and the density matrix at each."""

    times: np.ndarray
    states: list
    nsteps: int = 0
    nfev: int = 0
    backend: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, stream=None, spin=None, labels=None, include_entries: bool = False) -> str:
        """CSV with a ``t`` column, optional flattened entries, and Bloch columns.

        ``spin`` selects the site whose ``<X>, <Y>, <Z>`` and Bloch radius are
        reported (default: the first nucleus).
        """
        dim = self.states[0].shape[0]
        labels = _labels_for(dim, labels)
        spin = sc.SpinLabel.parse(spin or next(s for s in labels if s.species == sc.NUCLEUS))
        header = ["t"]
        if include_entries:
            for i in range(dim):
                for j in range(dim):
                    header += [f"re_{i}_{j}", f"im_{i}_{j}"]
        header += ["x", "y", "z", "r"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for t, rho in zip(self.times, self.states):
            row = [f"{t:.12g}"]
            if include_entries:
                for v in np.asarray(rho).reshape(-1):
                    row += [f"{v.real:.12g}", f"{v.imag:.12g}"]
            red = sc.partial_trace(rho, spin, labels)
            vec = sc.bloch_vector(red)
            row += [f"{v:.12g}" for v in vec] + [f"{np.linalg.norm(vec):.12g}"]
            writer.writerow(row)
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def _as_driven(ham) -> DrivenHamiltonian | None:
    if isinstance(ham, DrivenHamiltonian):
        return ham
    if isinstance(ham, np.ndarray):
        return DrivenHamiltonian(np.asarray(ham, dtype=complex))
    return None


def evolve(problem: EvolutionProblem, backend: str | None = None) -> Trajectory:
    """Integrate the master equation with adaptive DOP853 steps.

    Parameters
    ----------
    problem : EvolutionProblem
    backend : {"compiled", "python"}, optional
        Defaults to the compiled kernel when it is built.

    Raises
    ------
    IntegrationError
        If the step size underflows, the step budget runs out, or a sampled
        state violates the density-matrix invariants. States are never
        clamped back into the physical set.
    """
    backend = backend or _kernels.BACKEND
    rho0 = problem.initial
    dim = rho0.shape[0]
    w = dephasing_weights(problem.rates, dim, problem.labels)
    driven = _as_driven(problem.hamiltonian)
    t0 = problem.t_span[0]
    times = problem.sample_times

    if backend == "compiled" and driven is not None:
        h0, hc, hs = driven.components()
        res = _kernels.integrate_compiled(
            rho0, h0, hc, hs, driven.omega, driven.phase, w, problem.hbar, t0, times,
            problem.rtol, problem.atol, problem.max_steps, driven=driven.driven,
        )
    elif backend in ("compiled", "python"):
        fun = driven if driven is not None else problem.hamiltonian
        if not callable(fun):
            raise DomainError("hamiltonian must be a matrix, DrivenHamiltonian or callable")
        res = _kernels.integrate_python(rho0, fun, w, problem.hbar, t0, times,
                                        problem.rtol, problem.atol, problem.max_steps)
        backend = "python"
    else:
        raise DomainError(f"unknown backend {backend!r}")

    if res.status == 1:
        raise IntegrationError(f"step size underflow at t = {res.t_reached:.6e} s", res.t_reached)
    if res.status == 2:
        raise IntegrationError(
            f"step budget of {problem.max_steps} exhausted at t = {res.t_reached:.6e} s", res.t_reached
        )
    states = [np.array(s) for s in res.states]
    for t, rho in zip(times, states):
        sc.check_density_matrix(rho, error=IntegrationError, what=f"state at t = {t:.6e} s")
    return Trajectory(np.array(times), states, int(res.nsteps), int(res.nfev), backend)


# -- superoperator oracle ----------------------------------------------------------

def liouvillian(H: np.ndarray, rates: DephasingRates, labels: Sequence | None = None,
                hbar: float = HBAR) -> np.ndarray:
    """Superoperator ``L`` with ``d vec(rho) / dt = L vec(rho)``, column stacking.

    With column stacking ``vec(A rho B) = (B^T kron A) vec(rho)``, so the
    commutator is ``I kron H - H^T kron I`` and each dephasing term
    ``[Z, [Z, rho]] = 2 rho - 2 Z rho Z`` becomes ``2 I - 2 Z^T kron Z``.
    """
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    labels = _labels_for(d, labels)
    eye = np.eye(d)
    L = (-1j / hbar) * (np.kron(eye, H) - np.kron(H.T, eye))
    for s in labels:
        g = rates.rate_for(s)
        if g:
            z = sc.pauli("Z", s, labels)
            L -= g * (2 * np.eye(d * d) - 2 * np.kron(z.T, z))
    return L


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacked vector of a matrix."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


def evolve_expm(rho0: np.ndarray, H: np.ndarray, rates: DephasingRates, t: float,
                labels: Sequence | None = None, hbar: float = HBAR) -> np.ndarray:
    """Exact state at time ``t`` for a constant Hamiltonian."""
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    if t < 0:
        raise DomainError("t must be non-negative")
    L = liouvillian(H, rates, labels, hbar)
    return unvec(expm(L * t) @ vec(rho0), rho0.shape[0])


def evolve_spectral(rho0: np.ndarray, H: np.ndarray, rates: DephasingRates, times: Sequence[float],
                    labels: Sequence | None = None, hbar: float = HBAR) -> list:
    """States at many times for a constant Hamiltonian, via the eigenmodes of ``L``.

    Each mode is propagated exactly, so accuracy does not degrade when the
    accumulated phase ``|H| t / hbar`` is far too large for a scaled matrix
    exponential (seconds of free evolution with an electron Zeeman term).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("times must be non-negative")
    lam, modes = np.linalg.eig(liouvillian(H, rates, labels, hbar))
    coef = np.linalg.solve(modes, vec(rho0))
    out = []
    for t in times:
        rho = unvec(modes @ (np.exp(lam * t) * coef), d)
        out.append(0.5 * (rho + rho.conj().T))
    return out


def analytic_single_spin(rho0: np.ndarray, gamma: float, t: float) -> np.ndarray:
    """Closed-form dephasing of one spin in its resonant rotating frame."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (2, 2):
        raise DomainError(f"analytic_single_spin needs a 2x2 state, got {rho0.shape}")
    out = rho0.copy()
    f = np.exp(-4.0 * gamma * t)
    out[0, 1] *= f
    out[1, 0] *= f
    return out


def lab_drive_hamiltonian(params, n_donors: int = 1) -> DrivenHamiltonian:
    """Lab-frame :class:`DrivenHamiltonian` for a parameter set."""
    from .hamiltonian import drive_components, static_hamiltonian

    h0 = static_hamiltonian(params, n_donors)
    if params.B_ac == 0:
        return DrivenHamiltonian(h0)
    hc, hs = drive_components(params, n_donors)
    return DrivenHamiltonian(h0, hc, hs, params.omega_ac, params.phase_ac)


def constant_callable(H: np.ndarray) -> Callable[[float], np.ndarray]:
    """Wrap a constant matrix as a callable (forces the fallback path)."""
    H = np.asarray(H, dtype=complex)
    return lambda t: H
