"""Spin Hamiltonians of one or two phosphorus donors.

All energies are in meV and times in seconds. The terms are

* Zeeman: ``-g_n mu_n B Z_n + mu_B B Z_e`` per donor,
* rotating AC drive of amplitude ``B_ac``, frequency ``omega_ac`` and phase
  ``phase_ac`` acting on every spin,
* hyperfine ``A sigma_e . sigma_n`` per donor,
* exchange ``J sigma_e1 . sigma_e2`` between the two electrons.

The rotating frame at angular frequency ``omega`` is generated by
``U = exp(-i omega t S / 2)`` with ``S`` the sum of Z over all sites. In
that frame the rotating drive becomes time independent, and the hyperfine,
exchange and dephasing terms are unchanged because they commute with ``S``.

``omega_ac`` is signed. The nuclear spin precesses in the opposite sense to
the electron, so the frequency that makes a nuclear transition stationary
is negative in this convention.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import spin_core as sc
from .errors import DomainError


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants in meV, tesla and seconds.

    ``g_n`` is the coefficient multiplying ``mu_n B Z_n``. With Pauli
    operators (eigenvalues +-1) the phosphorus-31 nuclear splitting of
    17.23 MHz/T corresponds to ``g_n = 2.2632 / 2``.
    """

    mu_B: float = 5.7883818060e-2
    mu_n: float = 3.15245125844e-5
    g_n: float = 1.1316
    hbar: float = 6.582119569e-13

    def __post_init__(self):
        for name in ("mu_B", "mu_n", "g_n", "hbar"):
            if not getattr(self, name) > 0:
                raise DomainError(f"physical constant {name} must be positive")


#: Reference device values of the "table1" preset (meV and tesla).
TABLE1 = {
    "A": 0.1211e-3,
    "A_z": 0.0606e-3,
    "A_x": 0.0606e-3,
    "B": 2.000,
    "B_ac": 0.0025,
    "A_U": 0.1197e-3,
    "J_U": 0.0423,
}

#: Reference parameter table rows: description, symbol, value text.
TABLE1_ROWS = (
    ("Unperturbed Hyperfine Interaction", "A", "0.1211 x 10^-3 meV"),
    ("Hyperfine Interaction During Z Rotation", "A_z", "0.0606 x 10^-3 meV"),
    ("Hyperfine Interaction during X Rotation", "A_x", "0.0606 x 10^-3 meV"),
    ("Constant Magnetic Field Strength", "B", "2.000 T"),
    ("Rotating Magnetic Field Strength", "B_ac", "0.0025 T"),
    ("Hyperfine Interaction during Interaction", "A_U", "0.1197 x 10^-3 meV"),
    ("Exchange Interaction during Interaction", "J_U", "0.0423 meV"),
)


@dataclass(frozen=True)
class DeviceParams:
    """Device and control parameters.

    ``B``, ``B_ac``, ``omega_ac``, ``phase_ac``, ``A1``, ``A2`` and ``J`` are the
    instantaneous settings used by :func:`h_total`. ``A``, ``A_z``, ``A_x``,
    ``A_U`` and ``J_U`` are the gate-context values the pulse builders switch
    between.
    """

    B: float = TABLE1["B"]
    B_ac: float = TABLE1["B_ac"]
    omega_ac: float = 0.0
    phase_ac: float = 0.0
    A1: float = TABLE1["A"]
    A2: float = TABLE1["A"]
    J: float = 0.0
    A: float = TABLE1["A"]
    A_z: float = TABLE1["A_z"]
    A_x: float = TABLE1["A_x"]
    A_U: float = TABLE1["A_U"]
    J_U: float = TABLE1["J_U"]
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        if not self.B > 0:
            raise DomainError("B must be positive")
        for name in ("B_ac", "A1", "A2", "J", "A", "A_z", "A_x", "A_U", "J_U"):
            value = getattr(self, name)
            if not (value >= 0 and np.isfinite(value)):
                raise DomainError(f"{name} must be finite and non-negative, got {value}")
        for name in ("omega_ac", "phase_ac"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        data = dict(data)
        const = data.pop("constants", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown DeviceParams fields: {sorted(unknown)}")
        if const is not None:
            data["constants"] = PhysicalConstants(**const)
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeviceParams":
        return cls.from_dict(json.loads(text))

    def key(self) -> tuple:
        """Hashable summary used for caching derived quantities."""
        return dataclasses.astuple(self)


PRESETS = {"table1": DeviceParams}


def preset(name: str = "table1") -> DeviceParams:
    """Named parameter preset. Only ``"table1"`` is defined."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise DomainError(f"unknown parameter preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class HamiltonianTerm:
    kind: str
    operator: np.ndarray
    time_dependent: bool = False


def _labels(n_donors):
    return sc.layout(n_donors)


def _check_donor(donor, n_donors):
    if donor not in range(1, n_donors + 1):
        raise DomainError(f"donor {donor} does not exist in a {n_donors}-donor system")


def _dot(a, b, labels):
    return sum(sc.pauli(ax, a, labels) @ sc.pauli(ax, b, labels) for ax in "XYZ")


def h_zeeman(params: DeviceParams, donor: int = 1, n_donors: int = 1) -> HamiltonianTerm:
    """Static Zeeman term of one donor."""
    _check_donor(donor, n_donors)
    c = params.constants
    labels = _labels(n_donors)
    op = (-c.g_n * c.mu_n * params.B) * sc.pauli("Z", f"n{donor}", labels) + (
        c.mu_B * params.B
    ) * sc.pauli("Z", f"e{donor}", labels)
    return HamiltonianTerm("zeeman", op)


def _drive_operators(params, donor, n_donors):
    """Operators multiplying cos(omega t + phi) and sin(omega t + phi)."""
    c = params.constants
    labels = _labels(n_donors)
    gn = -c.g_n * c.mu_n * params.B_ac
    ge = c.mu_B * params.B_ac
    n, e = f"n{donor}", f"e{donor}"
    hc = gn * sc.pauli("X", n, labels) + ge * sc.pauli("X", e, labels)
    hs = gn * sc.pauli("Y", n, labels) + ge * sc.pauli("Y", e, labels)
    return hc, hs


def h_ac(params: DeviceParams, donor: int = 1, t: float = 0.0, n_donors: int = 1) -> HamiltonianTerm:
    """Rotating AC drive on one donor at time ``t``."""
    _check_donor(donor, n_donors)
    hc, hs = _drive_operators(params, donor, n_donors)
    arg = params.omega_ac * t + params.phase_ac
    return HamiltonianTerm("ac_drive", np.cos(arg) * hc + np.sin(arg) * hs, time_dependent=True)


def h_hyperfine(params: DeviceParams, donor: int = 1, n_donors: int = 1) -> HamiltonianTerm:
    """Hyperfine contact term ``A sigma_e . sigma_n`` of one donor."""
    _check_donor(donor, n_donors)
    a = params.A1 if donor == 1 else params.A2
    return HamiltonianTerm("hyperfine", a * _dot(f"e{donor}", f"n{donor}", _labels(n_donors)))


def h_exchange(params: DeviceParams, n_donors: int = 2) -> HamiltonianTerm:
    """Exchange term ``J sigma_e1 . sigma_e2``; needs two donors."""
    if n_donors != 2:
        raise DomainError("exchange coupling needs a two-donor system")
    return HamiltonianTerm("exchange", params.J * _dot("e1", "e2", _labels(2)))


def static_hamiltonian(params: DeviceParams, n_donors: int = 1) -> np.ndarray:
    """Time-independent part: Zeeman, hyperfine and (two donors) exchange."""
    h = sum(
        h_zeeman(params, d, n_donors).operator + h_hyperfine(params, d, n_donors).operator
        for d in range(1, n_donors + 1)
    )
    if n_donors == 2:
        h = h + h_exchange(params, 2).operator
    return h


def drive_components(params: DeviceParams, n_donors: int = 1):
    """``(hc, hs)`` with the drive equal to ``cos(w t + phi) hc + sin(w t + phi) hs``.

    The drive field is global, so it acts on every donor present.
    """
    dim = 4**n_donors
    hc = np.zeros((dim, dim), dtype=complex)
    hs = np.zeros((dim, dim), dtype=complex)
    for d in range(1, n_donors + 1):
        c, s = _drive_operators(params, d, n_donors)
        hc += c
        hs += s
    return hc, hs


def h_total(params: DeviceParams, n_donors: int = 1, t: float = 0.0) -> np.ndarray:
    """Lab-frame Hamiltonian at time ``t`` (meV)."""
    if n_donors not in (1, 2):
        raise DomainError(f"n_donors must be 1 or 2, got {n_donors}")
    hc, hs = drive_components(params, n_donors)
    arg = params.omega_ac * t + params.phase_ac
    return static_hamiltonian(params, n_donors) + np.cos(arg) * hc + np.sin(arg) * hs


def frame_phases(dim: int, omega: float, t: float) -> np.ndarray:
    """Diagonal of ``U = exp(-i omega t S / 2)`` for the frame generator ``S``."""
    return np.exp(-0.5j * omega * t * _total_z_diag(_n_sites(dim)))


def _n_sites(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise DomainError(f"dimension {dim} is not a power of two")
    return n


@lru_cache(maxsize=None)
def _total_z_diag(n_sites: int) -> np.ndarray:
    bits = (np.arange(2**n_sites)[:, None] >> np.arange(n_sites)[::-1]) & 1
    out = np.sum(1 - 2 * bits, axis=1).astype(float)
    out.setflags(write=False)
    return out


def to_rotating_frame(H: np.ndarray, omega: float, t: float, hbar: float | None = None) -> np.ndarray:
    """Hamiltonian in the frame rotating at ``omega``: ``U^dag H U - (hbar omega / 2) S``."""
    H = np.asarray(H, dtype=complex)
    hbar = PhysicalConstants().hbar if hbar is None else hbar
    n = _n_sites(H.shape[0])
    u = frame_phases(H.shape[0], omega, t)
    return (u.conj()[:, None] * H * u[None, :]) - np.diag(0.5 * hbar * omega * _total_z_diag(n))


def to_frame_state(rho_lab: np.ndarray, omega: float, t: float) -> np.ndarray:
    """Lab-frame state expressed in the frame rotating at ``omega``."""
    u = frame_phases(rho_lab.shape[0], omega, t)
    return u.conj()[:, None] * rho_lab * u[None, :]


def from_frame_state(rho_rot: np.ndarray, omega: float, t: float) -> np.ndarray:
    """Inverse of :func:`to_frame_state`."""
    u = frame_phases(rho_rot.shape[0], omega, t)
    return u[:, None] * rho_rot * u.conj()[None, :]


def change_frame(rho: np.ndarray, omega_from: float, omega_to: float, t: float) -> np.ndarray:
    """Re-express a state from one rotating frame in another at time ``t``."""
    return to_frame_state(rho, omega_to - omega_from, t)


def rotating_hamiltonian(params: DeviceParams, n_donors: int = 1, omega: float | None = None) -> np.ndarray:
    """Time-independent Hamiltonian in the frame co-rotating with the drive.

    ``omega`` defaults to ``params.omega_ac``. A frame that differs from the
    drive frequency leaves a time-dependent drive, so that combination is
    rejected when the drive is on.
    """
    if omega is None:
        omega = params.omega_ac
    if params.B_ac > 0 and omega != params.omega_ac:
        raise DomainError("the rotating frame must match the drive frequency while the drive is on")
    return to_rotating_frame(h_total(params, n_donors, 0.0), omega, 0.0, params.constants.hbar)


# -- spectroscopy of the static Hamiltonian -------------------------------------

def _dressed_energy(H, ket):
    w, v = np.linalg.eigh(H)
    return w[int(np.argmax(np.abs(v.conj().T @ ket)))]


def nuclear_transition_frequency(params: DeviceParams, A: float | None = None) -> float:
    """Exact angular frequency (rad/s) that makes one donor's nuclear flip stationary.

    The static single-donor Hamiltonian with hyperfine strength ``A`` is
    diagonalized and the eigenstates closest to ``|down 0>`` and ``|down 1>``
    are used. The result is negative (see module notes).
    """
    a = params.A1 if A is None else A
    p = params.replace(A1=a, B_ac=0.0, omega_ac=0.0, phase_ac=0.0)
    H = static_hamiltonian(p, 1)
    e0 = _dressed_energy(H, sc.make_ket("0", 1))
    e1 = _dressed_energy(H, sc.make_ket("1", 1))
    return float((e0 - e1) / params.constants.hbar)


def idle_frequency(params: DeviceParams) -> float:
    """Nuclear transition frequency at the unperturbed hyperfine value ``A``."""
    return nuclear_transition_frequency(params, params.A)


def z_rotation_rate(params: DeviceParams, A_from: float | None = None, A_to: float | None = None) -> float:
    """Rate (rad/s) at which the nuclear phase advances while A is switched.

    A donor held at ``A_to`` (default ``A_z``), seen from the frame of the
    donor at ``A_from`` (default ``A``), acquires ``Z(theta)`` with
    ``theta = rate * t``.
    """
    a_from = params.A if A_from is None else A_from
    a_to = params.A_z if A_to is None else A_to
    return nuclear_transition_frequency(params, a_to) - nuclear_transition_frequency(params, a_from)


def nuclear_coupling(params: DeviceParams, A: float | None = None) -> complex:
    """Drive-induced matrix element ``<down 1| H_rot |down 0>`` (meV) at ``phase_ac = 0``.

    Computed between the dressed static eigenstates in the frame resonant with
    the addressed transition, so hyperfine enhancement of the drive is
    included. The Rabi frequency is ``2 |coupling| / hbar``.
    """
    a = params.A1 if A is None else A
    omega = nuclear_transition_frequency(params, a)
    p = params.replace(A1=a, omega_ac=omega, phase_ac=0.0)
    H0 = to_rotating_frame(static_hamiltonian(p.replace(B_ac=0.0), 1), omega, 0.0, p.constants.hbar)
    hc, _ = drive_components(p, 1)
    w, v = np.linalg.eigh(H0)
    k0 = int(np.argmax(np.abs(v.conj().T @ sc.make_ket("0", 1))))
    k1 = int(np.argmax(np.abs(v.conj().T @ sc.make_ket("1", 1))))
    # Fix the eigenvector phases so each overlaps its bare state positively.
    v0 = v[:, k0] * np.exp(-1j * np.angle(v[:, k0] @ sc.make_ket("0", 1).conj()))
    v1 = v[:, k1] * np.exp(-1j * np.angle(v[:, k1] @ sc.make_ket("1", 1).conj()))
    return complex(v1.conj() @ hc @ v0)


def rabi_frequency(params: DeviceParams, A: float | None = None) -> float:
    """Nuclear Rabi angular frequency (rad/s) of a resonant X rotation.

    Taken as the splitting of the two drive-coupled levels of the exact
    rotating-frame Hamiltonian divided by hbar, so the rotation angle after a
    time ``t`` is ``rabi_frequency * t``.
    """
    a = params.A_x if A is None else A
    omega = nuclear_transition_frequency(params, a)
    p = params.replace(A1=a, omega_ac=omega, phase_ac=0.0)
    H = rotating_hamiltonian(p, 1)
    w, v = np.linalg.eigh(H)
    # The two eigenvectors with most weight in the electron-down sector.
    down = sc.nuclear_subspace_indices(1)
    weight = np.sum(np.abs(v[down, :]) ** 2, axis=0)
    pair = np.sort(np.argsort(weight)[-2:])
    return float(abs(w[pair[1]] - w[pair[0]]) / params.constants.hbar)


def drive_phase_for_axis(params: DeviceParams, axis_angle: float = 0.0, A: float | None = None) -> float:
    """Drive phase that rotates the nucleus about ``cos(a) X + sin(a) Y``."""
    c = nuclear_coupling(params, A if A is not None else params.A_x)
    return float(np.mod(axis_angle - np.angle(c), 2 * np.pi))


def effective_nuclear_hamiltonian(params: DeviceParams, A1: float, A2: float, J: float, omega: float) -> np.ndarray:
    """4x4 nuclear Hamiltonian (meV) of the electrons-down sector of two donors.

    Obtained by projecting the four dressed eigenstates with most weight in
    that sector onto it, with the projected basis made orthonormal by a
    polar decomposition. Used to seed entangling-segment durations.
    """
    from scipy.linalg import polar

    p = params.replace(A1=A1, A2=A2, J=J, B_ac=0.0, omega_ac=omega, phase_ac=0.0)
    H = rotating_hamiltonian(p, 2)
    w, v = np.linalg.eigh(H)
    idx = sc.nuclear_subspace_indices(2)
    weight = np.sum(np.abs(v[idx, :]) ** 2, axis=0)
    sel = np.argsort(weight)[-4:]
    u, _ = polar(v[np.ix_(idx, sel)])
    heff = u @ np.diag(w[sel]) @ u.conj().T
    return heff - np.trace(heff) / 4 * np.eye(4)


def flip_flop_strength(params: DeviceParams, J: float | None = None, A: float | None = None) -> float:
    """Coefficient ``kappa`` (meV) of ``(kappa / 2)(XX + YY)`` during exchange."""
    j = params.J_U if J is None else J
    a = params.A_U if A is None else A
    heff = effective_nuclear_hamiltonian(params, a, a, j, idle_frequency(params))
    return float(abs(heff[1, 2]))
