"""Dephasing-rate sweeps and free-evolution runs.

A sweep evaluates a calibrated gate on a grid of electron and nuclear
dephasing rates. Grid points are independent, so they are farmed out to a
process pool; results are gathered in grid order, so the CSV does not
depend on the number of workers.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hamiltonian as hm
from . import lindblad as lb
from . import spin_core as sc
from .errors import DomainError
from .fidelity import (GateErrorRecord, MAXIMUM_LABEL, maximum_record, probe_fidelities,
                       records_to_csv, select_probes)
from .pulses import GateSpec, PulseSequence, gate_sequence

WORKERS_ENV = "KANESIM_WORKERS"
TYPICAL = lb.typical_rates()


def log_axis(lo: float, hi: float, n: int) -> list:
    """``n`` log-spaced rates from ``lo`` to ``hi`` inclusive."""
    if not (0 < lo < hi) or n < 2:
        raise DomainError("log axis needs 0 < lo < hi and at least two points")
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), int(n))]


def default_axis(typical: float) -> list:
    """Zero, 17 log-spaced points over [1, 1e8] s^-1, and the typical rate."""
    return sorted({0.0, float(typical), *log_axis(1.0, 1e8, 17)})


@dataclass(frozen=True)
class SweepGrid:
    gamma_e_values: tuple
    gamma_n_values: tuple
    gate: str = "CNOT"
    probes: tuple = ()

    def __post_init__(self):
        for name in ("gamma_e_values", "gamma_n_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise DomainError(f"{name} is empty")
            arr = np.array(vals)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DomainError(f"{name} must be finite and non-negative")
            if np.any(np.diff(arr) <= 0):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "probes", tuple(self.probes))
        GateSpec.parse(self.gate)

    @classmethod
    def default(cls, gate: str = "CNOT", probes: Sequence[str] = ()) -> "SweepGrid":
        """Default grid; it contains the zero point and the typical rates."""
        return cls(tuple(default_axis(TYPICAL.gamma_e)), tuple(default_axis(TYPICAL.gamma_n)),
                   gate, tuple(probes))

    @classmethod
    def log(cls, lo: float, hi: float, n: int, gate: str = "CNOT", probes: Sequence[str] = ()) -> "SweepGrid":
        axis = tuple(log_axis(lo, hi, n))
        return cls(axis, axis, gate, tuple(probes))

    @property
    def shape(self) -> tuple:
        return len(self.gamma_e_values), len(self.gamma_n_values)

    def points(self):
        for ge in self.gamma_e_values:
            for gn in self.gamma_n_values:
                yield ge, gn

    def to_dict(self) -> dict:
        return {"gamma_e_values": list(self.gamma_e_values), "gamma_n_values": list(self.gamma_n_values),
                "gate": self.gate, "probes": list(self.probes)}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepGrid":
        return cls(tuple(data["gamma_e_values"]), tuple(data["gamma_n_values"]),
                   data.get("gate", "CNOT"), tuple(data.get("probes", ())))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError(f"{WORKERS_ENV} must be at least 1")
        return n
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    """Everything that determines a sweep's output."""

    grid: SweepGrid = field(default_factory=SweepGrid.default)
    preset: str = "table1"
    output: str | None = None
    summary: str | None = None
    rtol: float = lb.DEFAULT_RTOL
    atol: float = lb.DEFAULT_ATOL
    workers: int = field(default_factory=default_workers)
    sequence_file: str | None = None

    def __post_init__(self):
        hm.preset(self.preset)
        if int(self.workers) < 1:
            raise DomainError("worker count must be at least 1")
        self.workers = int(self.workers)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = self.grid.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown RunConfig fields: {sorted(unknown)}")
        if "grid" in data:
            data["grid"] = SweepGrid.from_dict(data["grid"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def sequence(self) -> PulseSequence:
        if self.sequence_file:
            return PulseSequence.load(self.sequence_file)
        return gate_sequence(self.grid.gate, hm.preset(self.preset))


def point_records(seq: PulseSequence, probe_labels: Sequence[str], gamma_e: float,
                  gamma_n: float) -> list:
    """Records for one grid point; a ``Maximum`` row is added for several probes."""
    rates = lb.DephasingRates(gamma_e, gamma_n)
    probes = select_probes(seq.target_gate, probe_labels)
    fids = probe_fidelities(seq, probes, rates)
    name = seq.target_gate.label
    records = [GateErrorRecord.from_fidelity(name, p.label, gamma_e, gamma_n, f)
               for p, f in zip(probes, fids)]
    if len(records) > 1:
        records.append(maximum_record(records))
    return records


def _point_task(args):
    seq, probes, ge, gn = args
    return point_records(seq, probes, ge, gn)


def run_sweep(config: RunConfig) -> list:
    """Evaluate the gate on every grid point and write the CSV (and summary).

    Returns the records in (gamma_e, gamma_n, probe) order. Raises
    :class:`~kanesim.errors.MissingFixtureError` when no calibrated sequence
    exists for the gate.
    """
    seq = config.sequence()
    grid = config.grid
    tasks = [(seq, grid.probes, ge, gn) for ge, gn in grid.points()]
    if config.workers == 1 or len(tasks) == 1:
        chunks = [_point_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(tasks))) as pool:
            chunks = list(pool.map(_point_task, tasks, chunksize=1))
    records = [r for chunk in chunks for r in chunk]
    if config.output:
        with open(config.output, "w", newline="") as fh:
            records_to_csv(records, fh)
    if config.summary:
        Path(config.summary).write_text(json.dumps(sweep_summary(records, seq), indent=2) + "\n")
    return records


def sweep_summary(records: Sequence[GateErrorRecord], seq: PulseSequence) -> dict:
    """Per-gate maxima and the systematic and typical-rate errors when on the grid."""
    per_point = [r for r in records if r.label == MAXIMUM_LABEL] or list(records)
    worst = max(per_point, key=lambda r: r.error)
    out = {
        "gate": seq.target_gate.label,
        "total_duration": seq.total_duration,
        "n_records": len(records),
        "max_error": worst.error,
        "max_error_at": {"gamma_e": worst.gamma_e, "gamma_n": worst.gamma_n, "state": worst.label},
    }
    for key, (ge, gn) in {"systematic": (0.0, 0.0), "typical": (TYPICAL.gamma_e, TYPICAL.gamma_n)}.items():
        hit = [r for r in per_point if r.gamma_e == ge and r.gamma_n == gn]
        if hit:
            out[f"{key}_error"] = hit[0].error
    return out


# -- free evolution ----------------------------------------------------------------------

FREE_MODELS = ("nucleus", "hyperfine")


@dataclass
class FreeEvolutionResult:
    times: np.ndarray
    bloch: np.ndarray
    model: str

    @property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.bloch, axis=1)

    def to_csv(self, stream=None) -> str:
        lines = ["t,r,x,y,z"]
        for t, b, r in zip(self.times, self.bloch, self.radius):
            lines.append(",".join(f"{v:.12g}" for v in (t, r, *b)))
        text = "\n".join(lines) + "\n"
        if stream is not None:
            stream.write(text)
        return text


def run_free_evolution(t2n: float | None, duration: float, samples: int = 101,
                       t2e: float | None = None, model: str = "nucleus",
                       params: hm.DeviceParams | None = None) -> FreeEvolutionResult:
    """Free precession of ``|down +>`` under nuclear (and optionally electron) dephasing.

    Parameters
    ----------
    t2n, t2e : float or None
        Dephasing times (s); ``None`` disables that channel. ``t2e`` defaults
        to no electron dephasing.
    duration : float
        Total time (s), > 0; ``samples`` evenly spaced points including 0.
    model : {"nucleus", "hyperfine"}
        ``"nucleus"`` keeps only the Zeeman terms, so the electron is a
        spectator and the nuclear Bloch radius is exactly
        ``exp(-4 Gamma_n t)``. ``"hyperfine"`` adds the hyperfine coupling;
        the dressing of ``|down +>`` then changes the decay at the 1e-6
        relative level.

    The Bloch vector is that of the reduced nuclear state in the frame
    rotating at the nuclear precession frequency of the model.
    """
    if not (np.isfinite(duration) and duration > 0):
        raise DomainError("duration must be positive")
    if samples < 2:
        raise DomainError("need at least two samples")
    if model not in FREE_MODELS:
        raise DomainError(f"model must be one of {FREE_MODELS}")
    params = (params or hm.preset("table1")).replace(B_ac=0.0, omega_ac=0.0, phase_ac=0.0)
    if model == "nucleus":
        params = params.replace(A1=0.0)
    rates = lb.DephasingRates.from_t2(t2e, t2n)
    omega = hm.nuclear_transition_frequency(params, params.A1)
    h = hm.to_rotating_frame(hm.static_hamiltonian(params, 1), omega, 0.0, params.constants.hbar)
    times = np.linspace(0.0, duration, int(samples))
    rho0 = sc.make_state("+", 1)
    states = lb.evolve_spectral(rho0, h, rates, times, hbar=params.constants.hbar)
    labels = sc.layout(1)
    bloch = np.array([sc.bloch_vector(sc.partial_trace(r, "n1", labels)) for r in states])
    return FreeEvolutionResult(times, bloch, model)
