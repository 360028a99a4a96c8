"""State fidelities, probe-state families and gate error suites.

The fidelity of an achieved state ``rho`` with a pure intended state
``rho'`` is ``F = Tr(rho rho')`` and the error is ``E = 1 - F``. A gate is
characterised by the error on a family of probe inputs: the computational
basis states and the inputs that ideally produce each Bell state (for a
one-qubit gate, two probes chosen so the gate's action is visible).
Fidelities are taken on the full donor state, so population left in excited
electron states counts as error.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import lindblad as lb
from . import spin_core as sc
from .errors import DomainError
from .pulses import GateSpec, PulseSequence, gate_sequence, propagate_vectors

PURITY_TOL = 1e-10
MAXIMUM_LABEL = "Maximum"
BELL_LABELS = ("00+11", "00-11", "01+10", "01-10")
BASIS_LABELS = ("00", "01", "10", "11")


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """``Tr(rho target)`` for a pure ``target`` density matrix.

    Raises
    ------
    DomainError
        If the shapes differ or ``target`` is not pure to 1e-10.
    """
    rho = np.asarray(rho, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if rho.shape != target.shape or rho.ndim != 2:
        raise DomainError(f"shape mismatch: {rho.shape} vs {target.shape}")
    if abs(sc.purity(target) - 1.0) > PURITY_TOL:
        raise DomainError("the fidelity formula needs a pure target state")
    return float(np.real(np.sum(rho * target.T)))


@dataclass(frozen=True)
class ProbeState:
    """A probe input and the output the ideal gate would produce.

    ``input_ket`` and ``output_ket`` are nuclear kets; :attr:`state` and
    :attr:`intended_output` are the full donor density matrices with every
    electron spin down.
    """

    label: str
    input_ket: np.ndarray
    output_ket: np.ndarray

    @property
    def n_donors(self) -> int:
        return int(round(np.log2(len(self.input_ket))))

    @property
    def state(self) -> np.ndarray:
        return sc.ket_to_dm(sc.embed_nuclear_ket(self.input_ket, self.n_donors))

    @property
    def intended_output(self) -> np.ndarray:
        return sc.ket_to_dm(sc.embed_nuclear_ket(self.output_ket, self.n_donors))


def _one_qubit_labels(gate: GateSpec):
    # Z-type gates only act visibly on superpositions; X-type gates on the poles.
    return ("0", "1") if gate.name == "X" else ("0", "+")


def probe_states(gate: "GateSpec | str") -> list:
    """Probe family of a gate.

    Two-qubit gates get the four basis inputs labelled by themselves and four
    Bell-output probes labelled by the Bell state they should produce; their
    inputs are ``G^dag |Bell>``. One-qubit gates get two probes labelled by
    their input.
    """
    gate = GateSpec.parse(gate)
    g = gate.matrix
    probes = []
    if gate.n_qubits == 1:
        for label in _one_qubit_labels(gate):
            ket = sc.nuclear_ket(label, 1)
            probes.append(ProbeState(label, ket, g @ ket))
        return probes
    for label in BASIS_LABELS:
        ket = sc.nuclear_ket(label, 2)
        probes.append(ProbeState(label, ket, g @ ket))
    for label in BELL_LABELS:
        out = sc.nuclear_ket(label, 2)
        probes.append(ProbeState(label, g.conj().T @ out, out))
    return probes


def custom_probe(gate: "GateSpec | str", input_label: str) -> ProbeState:
    """Probe with an arbitrary labelled input, e.g. ``"00+01"`` for two qubits."""
    gate = GateSpec.parse(gate)
    ket = sc.nuclear_ket(input_label, gate.n_qubits)
    return ProbeState(sc.normalize_label(input_label), ket, gate.matrix @ ket)


def select_probes(gate: "GateSpec | str", labels: Sequence[str] | None) -> list:
    """Probes of ``gate`` with the given labels (all probes when ``labels`` is None).

    Labels that are not part of the family are treated as explicit inputs.
    """
    probes = probe_states(gate)
    if not labels:
        return probes
    by_label = {p.label: p for p in probes}
    out = []
    for label in labels:
        key = sc.normalize_label(label)
        out.append(by_label[key] if key in by_label else custom_probe(gate, key))
    return out


@dataclass(frozen=True)
class GateErrorRecord:
    gate: str
    label: str
    gamma_e: float
    gamma_n: float
    fidelity: float
    error: float

    def __post_init__(self):
        if abs(self.error - (1.0 - self.fidelity)) > 1e-15:
            raise DomainError("error must equal 1 - fidelity")

    @classmethod
    def from_fidelity(cls, gate, label, gamma_e, gamma_n, fid) -> "GateErrorRecord":
        fid = float(fid)
        return cls(gate, label, float(gamma_e), float(gamma_n), fid, 1.0 - fid)

    def row(self) -> list:
        return [self.gate, self.label, _fmt(self.gamma_e), _fmt(self.gamma_n),
                _fmt(self.fidelity), _fmt(self.error)]


CSV_HEADER = ("gate", "state", "gamma_e", "gamma_n", "fidelity", "error")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def probe_fidelities(seq: PulseSequence, probes: Sequence[ProbeState],
                     rates: lb.DephasingRates) -> np.ndarray:
    """Fidelity of each probe after the sequence, all probes propagated together."""
    vecs = np.stack([lb.vec(p.state) for p in probes], axis=1)
    finals = propagate_vectors(vecs, seq, rates)
    dim = 4**seq.n_donors
    out = []
    for p, v in zip(probes, finals.T):
        rho = sc.check_density_matrix(lb.unvec(v, dim), error=_integration_error(), what="gate output")
        out.append(fidelity(rho, p.intended_output))
    return np.array(out)


def _integration_error():
    from .errors import IntegrationError

    return IntegrationError


def gate_error_suite(gate: "GateSpec | str | PulseSequence", params=None,
                     rates: lb.DephasingRates | None = None,
                     probes: Sequence[str] | None = None,
                     include_maximum: bool = True) -> list:
    """Error of every probe of a calibrated gate, plus a ``Maximum`` record.

    Parameters
    ----------
    gate : GateSpec, str or PulseSequence
        A gate name (the calibrated sequence is looked up) or a sequence.
    params : DeviceParams, optional
        Device parameters; the "table1" preset by default.
    rates : DephasingRates, optional
        Zero rates by default.
    probes : list of str, optional
        Restrict to these probe labels.
    """
    seq = gate if isinstance(gate, PulseSequence) else gate_sequence(gate, params)
    rates = rates or lb.DephasingRates()
    chosen = select_probes(seq.target_gate, probes)
    fids = probe_fidelities(seq, chosen, rates)
    name = seq.target_gate.label
    records = [GateErrorRecord.from_fidelity(name, p.label, rates.gamma_e, rates.gamma_n, f)
               for p, f in zip(chosen, fids)]
    if include_maximum:
        records.append(maximum_record(records))
    return records


def maximum_record(records: Iterable[GateErrorRecord]) -> GateErrorRecord:
    worst = max(records, key=lambda r: r.error)
    return GateErrorRecord(worst.gate, MAXIMUM_LABEL, worst.gamma_e, worst.gamma_n,
                           worst.fidelity, worst.error)


def records_to_csv(records: Iterable[GateErrorRecord], stream=None, header: bool = True) -> str:
    """Write records with the fixed header and 12 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.row())
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def format_table(systematic: Sequence[GateErrorRecord], typical: Sequence[GateErrorRecord] | None = None,
                 title: str | None = None) -> str:
    """Plain-text table with columns state, systematic error and (optionally) typical error."""
    lines = []
    gate = systematic[0].gate if systematic else ""
    lines.append(title or f"{gate} gate error")
    cols = ["State", "Systematic Error"] + (["Typical Error"] if typical is not None else [])
    lines.append("  ".join(f"{c:<18}" for c in cols).rstrip())
    typ = {r.label: r for r in typical} if typical is not None else {}
    for r in systematic:
        label = r.label if r.label == MAXIMUM_LABEL else f"|{r.label}>"
        cells = [f"{label:<18}", f"{r.error:<18.2e}"]
        if typical is not None:
            cells.append(f"{typ[r.label].error:.2e}")
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)
