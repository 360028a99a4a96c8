"""Piecewise-constant pulse sequences, gate templates and calibration.

A :class:`PulseSequence` is an ordered list of :class:`PulseSegment` s. During
a segment the hyperfine strengths ``A1``, ``A2``, the exchange ``J`` and the
rotating drive (amplitude, angular frequency, phase) are constant.

Frames and phases
-----------------
Each segment is propagated in the frame rotating at its own ``omega_ac``,
where its Hamiltonian is exactly time independent, so the exact propagator
is a matrix exponential. Between segments the state is moved from one frame
to the next at the absolute time of the boundary. The drive of a segment is
``cos(omega_ac t + phase_ac)`` with ``t`` measured from the start of the
sequence, so two consecutive segments with equal ``omega_ac`` and
``phase_ac`` form one continuous carrier. The gate is read out in the
sequence's reference frame (``frame_omega``), in which idle qubits are
stationary; idle phases are thus tracked in software.

Gate constructions
------------------
The two-qubit gates are compositions of resonant X rotations on single
donors, Z rotations made by lowering one donor's hyperfine strength, and
entangling segments with exchange on. In the electrons-down sector an
entangling segment acts on the nuclei as ``exp(-i (angle / 2)(XX + YY))``
up to single-qubit Z phases. Every segment duration, drive phase and Z
correction angle is a free parameter fixed by :func:`calibrate` at zero
dephasing.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from . import hamiltonian as hm
from . import lindblad as lb
from . import spin_core as sc
from .errors import CalibrationError, DomainError, IntegrationError, MissingFixtureError

TWO_PI = 2.0 * np.pi
FORMAT_TAG = "kanesim-pulse-sequence"
FORMAT_VERSION = 1


# -- gate specifications -----------------------------------------------------------

def _rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def _rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _um(angle):
    xx = np.kron(sc.SIGMA_X, sc.SIGMA_X)
    yy = np.kron(sc.SIGMA_Y, sc.SIGMA_Y)
    return expm(-0.5j * angle * (xx + yy))


_FIXED = {
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}
_ANGLED = {"Z": _rz, "X": _rx, "UM": _um}


@dataclass(frozen=True, eq=False)
class GateSpec:
    """Target gate on the nuclear qubits.

    ``name`` is one of ``Z``, ``X``, ``CNOT``, ``SWAP``, ``CZ``, ``UM`` (the
    entangling operation ``exp(-i (angle / 2)(XX + YY))``) or ``I``.
    ``Z`` and ``X`` are ``exp(-i angle Z / 2)`` and ``exp(-i angle X / 2)``.
    CNOT uses the first qubit as control.
    """

    name: str
    angle: float | None = None
    n_qubits: int = 1

    def __post_init__(self):
        name = self.name.upper()
        object.__setattr__(self, "name", name)
        if name in _FIXED:
            object.__setattr__(self, "n_qubits", 2)
            object.__setattr__(self, "angle", None)
        elif name in _ANGLED:
            if self.angle is None:
                raise DomainError(f"gate {name} needs an angle")
            object.__setattr__(self, "angle", float(self.angle))
            object.__setattr__(self, "n_qubits", 2 if name == "UM" else 1)
        elif name == "I":
            if self.n_qubits not in (1, 2):
                raise DomainError("identity acts on 1 or 2 qubits")
            object.__setattr__(self, "angle", None)
        else:
            raise DomainError(f"unknown gate {self.name!r}")

    @property
    def matrix(self) -> np.ndarray:
        if self.name in _FIXED:
            return _FIXED[self.name].copy()
        if self.name == "I":
            return np.eye(2**self.n_qubits, dtype=complex)
        return _ANGLED[self.name](self.angle)

    @property
    def n_donors(self) -> int:
        return self.n_qubits

    @property
    def label(self) -> str:
        """Short name used in tables: ``Z`` and ``X`` mean angle pi."""
        if self.angle is None:
            return self.name
        if self.name in ("Z", "X") and math.isclose(self.angle, np.pi):
            return self.name
        return f"{self.name}({self.angle:.6g})"

    def __eq__(self, other):
        if not isinstance(other, GateSpec):
            return NotImplemented
        return (self.name, self.angle, self.n_qubits) == (other.name, other.angle, other.n_qubits)

    def __hash__(self):
        return hash((self.name, self.angle, self.n_qubits))

    def __repr__(self):
        return f"GateSpec({self.label!r})"

    def to_dict(self) -> dict:
        return {"name": self.name, "angle": self.angle, "n_qubits": self.n_qubits}

    @classmethod
    def from_dict(cls, data: dict) -> "GateSpec":
        return cls(data["name"], data.get("angle"), data.get("n_qubits", 1))

    @classmethod
    def z(cls, theta: float = np.pi) -> "GateSpec":
        return cls("Z", theta)

    @classmethod
    def x(cls, theta: float = np.pi) -> "GateSpec":
        return cls("X", theta)

    @classmethod
    def um(cls, angle: float) -> "GateSpec":
        return cls("UM", angle)

    @classmethod
    def cnot(cls) -> "GateSpec":
        return cls("CNOT")

    @classmethod
    def swap(cls) -> "GateSpec":
        return cls("SWAP")

    @classmethod
    def cz(cls) -> "GateSpec":
        return cls("CZ")

    @classmethod
    def identity(cls, n_qubits: int = 1) -> "GateSpec":
        return cls("I", None, n_qubits)

    @classmethod
    def parse(cls, text: "str | GateSpec") -> "GateSpec":
        """Parse ``"cnot"``, ``"z"`` (angle pi), ``"x(pi/2)"``, ``"um(0.785)"``."""
        if isinstance(text, GateSpec):
            return text
        s = str(text).strip().replace(" ", "")
        if "(" in s:
            if not s.endswith(")"):
                raise DomainError(f"cannot parse gate {text!r}")
            name, arg = s[:-1].split("(", 1)
            return cls(name, _parse_angle(arg))
        name = s.upper()
        if name in ("Z", "X"):
            return cls(name, np.pi)
        return cls(name)


def _parse_angle(text: str) -> float:
    t = text.lower().replace("π", "pi")
    try:
        if "pi" in t:
            num, _, den = t.partition("/")
            factor = num.replace("pi", "").replace("*", "")
            factor = 1.0 if factor in ("", "+") else (-1.0 if factor == "-" else float(factor))
            value = factor * np.pi
            return value / float(den) if den else value
        return float(t)
    except ValueError:
        raise DomainError(f"cannot parse angle {text!r}") from None


# -- segments and sequences ------------------------------------------------------------

@dataclass(frozen=True)
class PulseSegment:
    """Constant control settings held for ``duration`` seconds.

    Zero-duration segments are allowed in templates (a Z correction that
    calibrates to angle zero) and are dropped from calibrated sequences.
    """

    duration: float
    A1: float
    A2: float
    J: float = 0.0
    B_ac_amplitude: float = 0.0
    omega_ac: float = 0.0
    phase_ac: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration >= 0):
            raise DomainError(f"segment duration must be non-negative, got {self.duration}")
        for name in ("A1", "A2", "J", "B_ac_amplitude"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"segment {name} must be non-negative, got {v}")
        if not (np.isfinite(self.omega_ac) and np.isfinite(self.phase_ac)):
            raise DomainError("segment drive frequency and phase must be finite")

    def replace(self, **changes) -> "PulseSegment":
        return dataclasses.replace(self, **changes)

    def control_key(self) -> tuple:
        """Everything except the duration and label."""
        return (self.A1, self.A2, self.J, self.B_ac_amplitude, self.omega_ac, self.phase_ac)

    def device_params(self, base: hm.DeviceParams) -> hm.DeviceParams:
        return base.replace(A1=self.A1, A2=self.A2, J=self.J, B_ac=self.B_ac_amplitude,
                            omega_ac=self.omega_ac, phase_ac=self.phase_ac)


@dataclass(frozen=True)
class FreeParameter:
    """A calibration knob of a template.

    ``kind`` is ``"duration"`` (relative change of a segment duration),
    ``"phase"`` (drive phase in rad) or ``"zangle"`` (Z rotation angle in
    rad; the duration is ``(angle mod 2 pi) / rate``).
    """

    segment: int
    kind: str
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("duration", "phase", "zangle"):
            raise DomainError(f"unknown free-parameter kind {self.kind!r}")
        if self.kind == "zangle" and not self.rate > 0:
            raise DomainError("a zangle parameter needs a positive rate")


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Ordered segments realizing ``target_gate`` on ``n_donors`` donors."""

    segments: tuple
    target_gate: GateSpec
    n_donors: int
    frame_omega: float
    params: hm.DeviceParams = field(default_factory=hm.DeviceParams)
    preset: str = "table1"
    free: tuple = ()
    calibration: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "free", tuple(self.free))
        if self.n_donors not in (1, 2):
            raise DomainError("sequences act on 1 or 2 donors")
        if self.target_gate.n_qubits != self.n_donors:
            raise DomainError(f"{self.target_gate!r} does not act on {self.n_donors} donor(s)")
        for f in self.free:
            if not 0 <= f.segment < len(self.segments):
                raise DomainError(f"free parameter refers to missing segment {f.segment}")
        if self.segments and self.total_duration <= 0 and not self.free:
            raise DomainError("a non-empty sequence needs a positive total duration")

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def __len__(self):
        return len(self.segments)

    def replace(self, **changes) -> "PulseSequence":
        return dataclasses.replace(self, **changes)

    # parameter vector <-> sequence

    def parameter_vector(self) -> np.ndarray:
        """Current free-parameter values (durations as relative change 0)."""
        out = []
        for f in self.free:
            seg = self.segments[f.segment]
            if f.kind == "duration":
                out.append(0.0)
            elif f.kind == "phase":
                out.append(seg.phase_ac)
            else:
                out.append(seg.duration * f.rate)
        return np.array(out, dtype=float)

    def with_parameters(self, x: Sequence[float]) -> "PulseSequence":
        """Sequence with free parameters set from ``x`` (see :meth:`parameter_vector`)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.free),):
            raise DomainError(f"expected {len(self.free)} parameters, got {x.shape}")
        segs = list(self.segments)
        for f, v in zip(self.free, x):
            seg = segs[f.segment]
            if f.kind == "duration":
                segs[f.segment] = seg.replace(duration=abs(seg.duration * (1.0 + v)))
            elif f.kind == "phase":
                segs[f.segment] = seg.replace(phase_ac=float(np.mod(v, TWO_PI)))
            else:
                segs[f.segment] = seg.replace(duration=float(np.mod(v, TWO_PI)) / f.rate)
        return self.replace(segments=tuple(segs))

    def pruned(self) -> "PulseSequence":
        """Drop zero-duration segments and the free-parameter bookkeeping."""
        return self.replace(segments=tuple(s for s in self.segments if s.duration > 0), free=())

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "target_gate": self.target_gate.to_dict(),
            "preset": self.preset,
            "n_donors": self.n_donors,
            "frame_omega": self.frame_omega,
            "total_duration": self.total_duration,
            "params": self.params.to_dict(),
            "calibration": self.calibration,
            "free": [dataclasses.asdict(f) for f in self.free],
            "segments": [dataclasses.asdict(s) for s in self.segments],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        if data.get("format") != FORMAT_TAG:
            raise DomainError("not a pulse-sequence document")
        params = hm.DeviceParams.from_dict(data["params"]) if "params" in data else hm.preset(data["preset"])
        return cls(
            segments=tuple(PulseSegment(**s) for s in data["segments"]),
            target_gate=GateSpec.from_dict(data["target_gate"]),
            n_donors=int(data["n_donors"]),
            frame_omega=float(data["frame_omega"]),
            params=params,
            preset=data.get("preset", "table1"),
            free=tuple(FreeParameter(**f) for f in data.get("free", [])),
            calibration=dict(data.get("calibration", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "PulseSequence":
        return cls.from_json(Path(path).read_text())


# -- propagation ------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _static_parts(params_key, A1, A2, J, omega, n_donors):
    params = _params_from_key(params_key)
    p = params.replace(A1=A1, A2=A2, J=J, B_ac=0.0, omega_ac=omega, phase_ac=0.0)
    h = hm.to_rotating_frame(hm.static_hamiltonian(p, n_donors), omega, 0.0, p.constants.hbar)
    h.setflags(write=False)
    return h


@lru_cache(maxsize=16)
def _drive_parts(params_key, B_ac, n_donors):
    params = _params_from_key(params_key)
    hc, hs = hm.drive_components(params.replace(B_ac=B_ac), n_donors)
    hc.setflags(write=False)
    hs.setflags(write=False)
    return hc, hs


_PARAMS_BY_KEY: dict = {}


def _params_key(params: hm.DeviceParams):
    key = params.key()
    _PARAMS_BY_KEY.setdefault(key, params)
    return key


def _params_from_key(key):
    return _PARAMS_BY_KEY[key]


def segment_hamiltonian(seg: PulseSegment, params: hm.DeviceParams, n_donors: int) -> np.ndarray:
    """Time-independent Hamiltonian (meV) of a segment in its own rotating frame."""
    key = _params_key(params)
    h = _static_parts(key, seg.A1, seg.A2 if n_donors == 2 else params.A2, seg.J if n_donors == 2 else 0.0,
                      seg.omega_ac, n_donors)
    if seg.B_ac_amplitude > 0:
        hc, hs = _drive_parts(key, seg.B_ac_amplitude, n_donors)
        h = h + np.cos(seg.phase_ac) * hc + np.sin(seg.phase_ac) * hs
    return h


def _frame_factor(dim, omega_from, omega_to, t):
    """Ket factor moving a state between frames at time ``t``."""
    return hm.frame_phases(dim, omega_to - omega_from, t).conj()


def sequence_unitary(seq: PulseSequence) -> np.ndarray:
    """Closed-system propagator of the whole sequence, in the reference frame."""
    dim = 4**seq.n_donors
    hbar = seq.params.constants.hbar
    u = np.eye(dim, dtype=complex)
    t = 0.0
    frame = seq.frame_omega
    for seg in seq.segments:
        if seg.duration <= 0:
            continue
        u = _frame_factor(dim, frame, seg.omega_ac, t)[:, None] * u
        w, v = np.linalg.eigh(segment_hamiltonian(seg, seq.params, seq.n_donors))
        u = (v * np.exp(-1j * w * (seg.duration / hbar))) @ (v.conj().T @ u)
        t += seg.duration
        frame = seg.omega_ac
    return _frame_factor(dim, frame, seq.frame_omega, t)[:, None] * u


def _superop_frame_factor(dim, omega_from, omega_to, t):
    c = _frame_factor(dim, omega_from, omega_to, t)
    # column stacking: vec index i + j d holds rho_ij -> c_i conj(c_j)
    return (c[:, None] * c.conj()[None, :]).reshape(-1, order="F")


def _segment_superop(seg, params, n_donors, rates):
    h = segment_hamiltonian(seg, params, n_donors)
    L = lb.liouvillian(h, rates, hbar=params.constants.hbar)
    return expm(L * seg.duration)


def propagate_vectors(vecs: np.ndarray, seq: PulseSequence, rates: lb.DephasingRates) -> np.ndarray:
    """Apply the open-system sequence map to column-stacked states (columns of ``vecs``)."""
    dim = 4**seq.n_donors
    out = np.array(vecs, dtype=complex)
    t = 0.0
    frame = seq.frame_omega
    for seg in seq.segments:
        if seg.duration <= 0:
            continue
        out = _superop_frame_factor(dim, frame, seg.omega_ac, t)[:, None] * out
        out = _segment_superop(seg, seq.params, seq.n_donors, rates) @ out
        t += seg.duration
        frame = seg.omega_ac
    return _superop_frame_factor(dim, frame, seq.frame_omega, t)[:, None] * out


def apply_sequence(rho0: np.ndarray, seq: PulseSequence, rates: lb.DephasingRates | None = None,
                   method: str = "expm", rtol: float = lb.DEFAULT_RTOL,
                   atol: float = lb.DEFAULT_ATOL) -> np.ndarray:
    """Evolve ``rho0`` through the sequence under dephasing.

    Parameters
    ----------
    rho0 : ndarray
        Initial density matrix in the reference frame at t = 0.
    seq : PulseSequence
    rates : DephasingRates, optional
        Zero rates by default.
    method : {"expm", "rk"}
        ``"expm"`` uses the exact propagator of each constant segment;
        ``"rk"`` integrates each segment with the adaptive integrator, which
        is only practical for short sequences.

    Returns
    -------
    ndarray
        Final state in the reference frame.
    """
    rates = rates or lb.DephasingRates()
    rho0 = sc.check_density_matrix(np.asarray(rho0, dtype=complex), what="initial state")
    dim = 4**seq.n_donors
    if rho0.shape != (dim, dim):
        raise DomainError(f"state of shape {rho0.shape} does not fit a {seq.n_donors}-donor sequence")
    if method == "expm":
        if rates.gamma_e == 0 and rates.gamma_n == 0:
            u = sequence_unitary(seq)
            rho = u @ rho0 @ u.conj().T
        else:
            rho = lb.unvec(propagate_vectors(lb.vec(rho0)[:, None], seq, rates)[:, 0], dim)
    elif method == "rk":
        rho = rho0
        t = 0.0
        frame = seq.frame_omega
        for seg in seq.segments:
            if seg.duration <= 0:
                continue
            rho = hm.change_frame(rho, frame, seg.omega_ac, t)
            h = segment_hamiltonian(seg, seq.params, seq.n_donors)
            prob = lb.EvolutionProblem(rho, h, rates, (0.0, seg.duration), rtol=rtol, atol=atol,
                                       hbar=seq.params.constants.hbar)
            rho = lb.evolve(prob).final
            t += seg.duration
            frame = seg.omega_ac
        rho = hm.change_frame(rho, frame, seq.frame_omega, t)
    else:
        raise DomainError(f"unknown propagation method {method!r}")
    return sc.check_density_matrix(rho, error=IntegrationError, what="final state")


def sequence_states(rho0: np.ndarray, seq: PulseSequence, rates: lb.DephasingRates,
                    samples_per_segment: int = 4):
    """Yield ``(t, segment_index, rho)`` at evenly spaced points of every segment.

    States are expressed in the segment's own frame; the first sample of each
    segment is its start. Used to audit positivity and purity along gates.
    """
    dim = 4**seq.n_donors
    rho = np.asarray(rho0, dtype=complex)
    t = 0.0
    frame = seq.frame_omega
    for k, seg in enumerate(seq.segments):
        if seg.duration <= 0:
            continue
        rho = hm.change_frame(rho, frame, seg.omega_ac, t)
        h = segment_hamiltonian(seg, seq.params, seq.n_donors)
        L = lb.liouvillian(h, rates, hbar=seq.params.constants.hbar)
        dt = seg.duration / samples_per_segment
        step = expm(L * dt)
        v = lb.vec(rho)
        for j in range(samples_per_segment):
            yield t + j * dt, k, lb.unvec(v, dim)
            v = step @ v
        rho = lb.unvec(v, dim)
        t += seg.duration
        frame = seg.omega_ac
    yield t, len(seq.segments), hm.change_frame(rho, frame, seq.frame_omega, t)


# -- single-qubit and entangling builders ------------------------------------------

def _check_angle(theta):
    if not (-TWO_PI < theta <= TWO_PI):
        raise DomainError(f"rotation angle must lie in (-2 pi, 2 pi], got {theta}")


def _params(params):
    return hm.preset("table1") if params is None else params


def _hyperfine_pair(params, donor, value):
    a = [params.A, params.A]
    a[donor - 1] = value
    return a


def _z_segment(params, donor, n_donors, duration, frame, label):
    a1, a2 = _hyperfine_pair(params, donor, params.A_z)
    return PulseSegment(duration, a1, a2, 0.0, 0.0, frame, 0.0, label)


def _x_segment(params, donor, theta, label):
    omega = hm.nuclear_transition_frequency(params, params.A_x)
    rabi = hm.rabi_frequency(params)
    axis = 0.0 if theta >= 0 else np.pi
    phase = hm.drive_phase_for_axis(params, axis)
    a1, a2 = _hyperfine_pair(params, donor, params.A_x)
    return PulseSegment(abs(theta) / rabi, a1, a2, 0.0, params.B_ac, omega, phase, label)


def z_rotation_sequence(theta: float, params: hm.DeviceParams | None = None, donor: int = 1,
                        n_donors: int = 1) -> PulseSequence:
    """Z rotation by ``theta`` made by lowering the donor's hyperfine strength to ``A_z``.

    The duration uses the exact difference of the perturbed and unperturbed
    nuclear precession frequencies; ``theta = 0`` gives an empty sequence.
    """
    _check_angle(theta)
    params = _params(params)
    frame = hm.idle_frequency(params)
    if theta == 0:
        return PulseSequence((), GateSpec.identity(n_donors), n_donors, frame, params)
    rate = hm.z_rotation_rate(params)
    angle = TWO_PI if theta == TWO_PI else float(np.mod(theta, TWO_PI))
    seg = _z_segment(params, donor, n_donors, angle / rate, frame, f"Z{donor}")
    target = GateSpec.z(theta) if n_donors == 1 else GateSpec.identity(2)
    return PulseSequence((seg,), target, n_donors, frame, params,
                         free=(FreeParameter(0, "duration"),))


def x_rotation_sequence(theta: float, params: hm.DeviceParams | None = None) -> PulseSequence:
    """Resonant X rotation of one donor by ``theta``.

    The drive frequency is the exact nuclear transition frequency at ``A_x``
    and the duration is ``|theta|`` over the numerically extracted Rabi
    frequency. The reference frame is the drive frame.
    """
    _check_angle(theta)
    params = _params(params)
    frame = hm.nuclear_transition_frequency(params, params.A_x)
    if theta == 0:
        return PulseSequence((), GateSpec.identity(1), 1, frame, params)
    seg = _x_segment(params, 1, theta, "X1")
    return PulseSequence((seg,), GateSpec.x(theta), 1, frame, params,
                         free=(FreeParameter(0, "duration"),))


def entangling_duration(angle: float, params: hm.DeviceParams, J: float | None = None) -> float:
    """Seed duration of an entangling segment: ``angle hbar / kappa``."""
    kappa = hm.flip_flop_strength(params, J)
    return angle * params.constants.hbar / kappa


def _u_segment(params, angle, J, label):
    j = params.J_U if J is None else J
    return PulseSegment(entangling_duration(angle, params, j), params.A_U, params.A_U, j, 0.0,
                        hm.idle_frequency(params), 0.0, label)


def entangling_sequence(angle: float, params: hm.DeviceParams | None = None,
                        J: float | None = None) -> PulseSequence:
    """Template for ``exp(-i (angle / 2)(XX + YY))`` on two nuclei.

    One exchange segment (both donors at ``A_U``, exchange ``J``, default
    ``J_U``) followed by a Z correction on each donor. The exchange duration
    and both correction angles are free for :func:`calibrate`.
    """
    if not (0 <= angle <= np.pi / 2):
        raise DomainError(f"entangling angle must lie in (0, pi/2], got {angle}")
    params = _params(params)
    frame = hm.idle_frequency(params)
    if angle == 0:
        return PulseSequence((), GateSpec.identity(2), 2, frame, params)
    return _build_two_qubit(params, [("U", angle), ("Z", 1), ("Z", 2)], GateSpec.um(angle), J=J)


#: Gate templates as operation lists. ("X", donor, angle) is a resonant
#: rotation, ("U", angle) an entangling segment and ("Z", donor) a Z
#: correction whose angle is left to calibration.
TEMPLATES = {
    "CNOT": [
        ("X", 1, np.pi / 2), ("X", 2, np.pi / 2), ("Z", 1), ("U", np.pi / 4), ("Z", 1),
        ("X", 2, np.pi), ("U", np.pi / 4), ("X", 1, np.pi / 2), ("Z", 1), ("Z", 2),
    ],
    "CZ": [
        ("X", 2, np.pi / 2), ("Z", 1), ("U", np.pi / 2), ("X", 1, np.pi / 2), ("Z", 1),
        ("U", np.pi / 2), ("X", 2, np.pi / 2), ("Z", 1), ("Z", 2),
    ],
    "SWAP": [
        ("Z", 1), ("U", np.pi / 2), ("X", 2, np.pi / 2), ("Z", 1), ("U", np.pi / 2),
        ("X", 1, np.pi / 2), ("Z", 1), ("U", np.pi / 2), ("X", 2, np.pi / 2), ("Z", 1), ("Z", 2),
    ],
}


def _build_two_qubit(params, ops, target, J=None, rng=None):
    frame = hm.idle_frequency(params)
    rate = hm.z_rotation_rate(params)
    segs, free = [], []
    for op in ops:
        k = len(segs)
        if op[0] == "X":
            _, donor, theta = op
            segs.append(_x_segment(params, donor, theta, f"X{donor}({theta / np.pi:.3g}pi)"))
            free += [FreeParameter(k, "phase"), FreeParameter(k, "duration")]
        elif op[0] == "U":
            segs.append(_u_segment(params, op[1], J, f"U({op[1] / np.pi:.3g}pi)"))
            free.append(FreeParameter(k, "duration"))
        elif op[0] == "Z":
            donor = op[1]
            angle = 0.0 if rng is None else rng.uniform(0, TWO_PI)
            segs.append(_z_segment(params, donor, 2, angle / rate, frame, f"Z{donor}"))
            free.append(FreeParameter(k, "zangle", rate))
        else:
            raise DomainError(f"unknown template operation {op!r}")
    return PulseSequence(tuple(segs), target, 2, frame, params, free=tuple(free))


def gate_template(name: "str | GateSpec", params: hm.DeviceParams | None = None,
                  J: float | None = None) -> PulseSequence:
    """Uncalibrated template for a gate (Z and X templates are single segments)."""
    gate = GateSpec.parse(name)
    params = _params(params)
    if gate.name == "Z":
        return z_rotation_sequence(gate.angle, params)
    if gate.name == "X":
        return x_rotation_sequence(gate.angle, params)
    if gate.name == "UM":
        return entangling_sequence(gate.angle, params, J)
    if gate.name in TEMPLATES:
        return _build_two_qubit(params, TEMPLATES[gate.name], gate, J=J)
    raise DomainError(f"no template for gate {gate!r}")


# -- calibration --------------------------------------------------------------------------

def _probe_data(gate: GateSpec):
    from .fidelity import probe_states

    n = gate.n_qubits
    ins, outs = [], []
    for p in probe_states(gate):
        ins.append(sc.embed_nuclear_ket(p.input_ket, n))
        outs.append(sc.embed_nuclear_ket(p.output_ket, n))
    return np.array(ins).T, np.array(outs).T


def closed_system_errors(seq: PulseSequence, gate: GateSpec | None = None) -> np.ndarray:
    """Zero-dephasing error ``1 - |<target|U|input>|^2`` for each probe of the gate."""
    gate = seq.target_gate if gate is None else gate
    ins, outs = _probe_data(gate)
    u = sequence_unitary(seq)
    amp = np.einsum("ij,ij->j", outs.conj(), u @ ins)
    return 1.0 - np.abs(amp) ** 2


def block_infidelity(seq: PulseSequence, gate: GateSpec | None = None) -> float:
    """``1 - |Tr(G^dag U_block)|^2 / d^2`` on the electrons-down block."""
    gate = seq.target_gate if gate is None else gate
    idx = sc.nuclear_subspace_indices(seq.n_donors)
    u = sequence_unitary(seq)[np.ix_(idx, idx)]
    d = len(idx)
    return float(1.0 - abs(np.trace(gate.matrix.conj().T @ u)) ** 2 / d**2)


@dataclass
class CalibrationResult:
    sequence: PulseSequence
    max_error: float
    probe_errors: np.ndarray
    starts_used: int


def calibrate(template: PulseSequence, target: GateSpec | None = None, tol: float | None = None,
              seed: int = 20240601, starts: int = 32, polish_iter: int = 4000) -> PulseSequence:
    """Fix the free parameters of ``template`` at zero dephasing.

    The objective is the maximum over the gate's probe states of the
    closed-system error ``1 - Tr(rho rho')``. The landscape has many local
    minima, so each random restart runs BFGS on the smooth block infidelity
    and then on the mean probe error; the best restart is polished by a
    Nelder-Mead simplex on the maximum probe error itself. Restarts stop
    early once the maximum error is below ``tol / 100``.

    Parameters
    ----------
    template : PulseSequence
        Sequence with at least one free parameter (or an empty identity).
    target : GateSpec, optional
        Defaults to ``template.target_gate``.
    tol : float, optional
        Required maximum probe error; 1e-5 for one-qubit gates and 1e-3 for
        two-qubit gates by default.
    seed : int
        Seed of the random restarts; the result is deterministic given it.
    starts : int
        Maximum number of random restarts.

    Raises
    ------
    CalibrationError
        If the best maximum probe error exceeds ``tol``.
    """
    target = template.target_gate if target is None else target
    if tol is None:
        tol = 1e-5 if target.n_qubits == 1 else 1e-3
    if not template.segments:
        if target.name != "I":
            raise DomainError("an empty template can only realize the identity")
        return template.replace(calibration={"max_error": 0.0, "tol": tol})
    if not template.free:
        raise DomainError("template has no free parameters")
    return _calibrate(template, target, tol, seed, starts, polish_iter).sequence


def _calibrate(template, target, tol, seed, starts, polish_iter) -> CalibrationResult:
    rng = np.random.default_rng(seed)
    kinds = [f.kind for f in template.free]
    x0 = template.parameter_vector()
    ins, outs = _probe_data(target)
    idx = sc.nuclear_subspace_indices(template.n_donors)
    g = target.matrix
    d = len(idx)

    def unitary(x):
        return sequence_unitary(template.with_parameters(x))

    def smooth(x):
        u = unitary(x)[np.ix_(idx, idx)]
        return 1.0 - abs(np.trace(g.conj().T @ u)) ** 2 / d**2

    def probe_errors(x):
        u = unitary(x)
        amp = np.einsum("ij,ij->j", outs.conj(), u @ ins)
        return 1.0 - np.abs(amp) ** 2

    def worst(x):
        return float(np.max(probe_errors(x)))

    def mean(x):
        return float(np.mean(probe_errors(x)))

    periodic = np.array([k in ("phase", "zangle") for k in kinds])
    best_x, best_f, used = x0.copy(), worst(x0), 0
    for attempt in range(starts):
        used = attempt + 1
        start = x0.copy()
        if attempt > 0:
            start[periodic] = rng.uniform(0, TWO_PI, periodic.sum())
        elif periodic.any():
            start[periodic & (x0 == 0)] = rng.uniform(0, TWO_PI, (periodic & (x0 == 0)).sum())
        res = minimize(smooth, start, method="BFGS", options={"gtol": 1e-10, "maxiter": 500})
        if res.fun < 0.1:
            res = minimize(mean, res.x, method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
        f = worst(res.x)
        if f < best_f:
            best_x, best_f = res.x, f
        if best_f < 0.01 * tol:
            break
    n = len(best_x)
    simplex = np.vstack([best_x] + [best_x + np.eye(n)[i] * (0.02 if kinds[i] == "duration" else 0.05)
                                    for i in range(n)])
    res = minimize(worst, best_x, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-8 * tol,
                            "maxiter": polish_iter * n, "maxfev": polish_iter * n})
    if res.fun < best_f:
        best_x, best_f = res.x, float(res.fun)
    seq = template.with_parameters(best_x)
    errs = probe_errors(best_x)
    info = {
        "max_error": float(best_f),
        "tol": float(tol),
        "seed": int(seed),
        "starts_used": int(used),
        "probe_errors": [float(e) for e in errs],
    }
    calibrated = seq.pruned().replace(calibration=info)
    if best_f > tol:
        raise CalibrationError(
            f"calibration of {target!r} stalled at max probe error {best_f:.3e} > tol {tol:.1e}",
            best_f, best_x, calibrated,
        )
    return CalibrationResult(calibrated, best_f, errs, used)


# -- fixtures -------------------------------------------------------------------------------

FIXTURE_GATES = ("z", "x", "cnot", "swap", "cz")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("kanesim") / "data" / "sequences" / f"{name.lower()}.json"))


def load_fixture(name: str) -> PulseSequence:
    path = fixture_path(name)
    if not path.exists():
        raise MissingFixtureError(
            f"no calibrated sequence for {name!r} at {path}; run `kanesim calibrate --gate {name}` first"
        )
    return PulseSequence.load(path)


def _fixture_name(gate: GateSpec):
    if gate.name in ("CNOT", "SWAP", "CZ"):
        return gate.name.lower()
    if gate.name in ("Z", "X") and math.isclose(gate.angle, np.pi):
        return gate.name.lower()
    return None


def gate_sequence(name: "str | GateSpec", params: hm.DeviceParams | None = None,
                  use_fixture: bool = True, **calibrate_kwargs) -> PulseSequence:
    """Calibrated sequence for a gate.

    With the "table1" parameters the shipped fixture is returned; other
    parameters (or ``use_fixture=False``) trigger a fresh calibration.
    """
    gate = GateSpec.parse(name)
    if gate.name not in ("Z", "X", "CNOT", "SWAP", "CZ", "UM"):
        raise DomainError(f"unknown gate {name!r}")
    params = _params(params)
    fixture = _fixture_name(gate)
    if use_fixture and fixture and params == hm.preset("table1"):
        return load_fixture(fixture)
    return calibrate(gate_template(gate, params), gate, **calibrate_kwargs)
