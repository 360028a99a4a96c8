"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The verdict lines are printed again in the ``acceptance criteria`` section of
the pytest terminal summary. Long-running criteria carry the ``slow`` marker
but are part of the default run.
"""
import time

import numpy as np
import pytest

from kanesim import fidelity as fd
from kanesim import hamiltonian as hm
from kanesim import lindblad as lb
from kanesim import pulses as pl
from kanesim import spin_core as sc
from kanesim import sweep as sw

from conftest import random_density_matrix, random_hermitian

P = hm.preset("table1")
TYPICAL = lb.typical_rates()

#: Published reference values: (typical error, systematic error, time in microseconds).
PUBLISHED = {
    "z": (3.8e-6, 3.8e-6, 0.02),
    "x": (6.4e-6, 4.9e-6, 6.4),
    "cnot": (8.3e-5, 4.0e-5, 16.0),
    "swap": (1.6e-4, 7.4e-5, 19.2),
    "cz": (9.4e-5, 3.8e-5, 16.1),
}
GATES = tuple(PUBLISHED)


def max_error(seq, rates):
    return fd.gate_error_suite(seq, rates=rates)[-1].error


def test_criterion_01_analytic_dephasing_oracle(acceptance):
    gamma = 0.25
    labels = ["n1"]
    h_lab = -P.constants.g_n * P.constants.mu_n * P.B * sc.SIGMA_Z
    # resonance taken from the 2x2 Hamiltonian itself, so the rotating frame is exact
    omega = float((h_lab[0, 0] - h_lab[1, 1]).real / P.constants.hbar)
    h_rot = hm.to_rotating_frame(h_lab, omega, 0.0, P.constants.hbar)
    rng = np.random.default_rng(1)
    rho0 = random_density_matrix(rng, 2)
    times = np.linspace(0.0, 4.0, 81)
    start = time.perf_counter()
    traj = lb.evolve(lb.EvolutionProblem(rho0, h_rot, lb.DephasingRates(0.0, gamma), (0.0, 4.0),
                                         sample_times=times, labels=labels))
    elapsed = time.perf_counter() - start
    err = max(np.max(np.abs(s - lb.analytic_single_spin(rho0, gamma, t))) for t, s in zip(times, traj.states))
    ok = err <= 1e-8 and elapsed < 1.0
    acceptance(1, ok, f"max elementwise diff {err:.2e} (<= 1e-8), runtime {elapsed:.3f} s (< 1 s)")
    assert ok


def test_criterion_02_decay_law(acceptance):
    res = sw.run_free_evolution(1.0, 4.0, 401)
    expected = np.exp(-4 * 0.25 * res.times)
    rel_x = np.max(np.abs(res.bloch[:, 0] / expected - 1))
    rel_r = np.max(np.abs(res.radius / expected - 1))
    r1 = res.radius[100]
    coupled = sw.run_free_evolution(1.0, 4.0, 401, model="hyperfine")
    rel_coupled = np.max(np.abs(coupled.radius / expected - 1))
    ok = rel_x <= 1e-6 and rel_r <= 1e-6 and round(r1, 6) == 0.367879
    acceptance(2, ok, f"rel dev <X> {rel_x:.1e}, r {rel_r:.1e} (<= 1e-6); r(1 s) = {r1:.6f}; "
                      f"hyperfine-coupled model rel dev {rel_coupled:.1e} (informational)")
    assert ok


@pytest.mark.slow
def test_criterion_03_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    worst, start = 0.0, time.perf_counter()
    for _ in range(50):
        h = random_hermitian(rng, 16, rng.uniform(0.0, 0.2))
        rho0 = random_density_matrix(rng, 16, rank=int(rng.integers(1, 17)))
        rates = lb.DephasingRates(*rng.uniform(0.0, 1e6, 2))
        t = rng.uniform(1e-9, 1e-6)
        traj = lb.evolve(lb.EvolutionProblem(rho0, h, rates, (0.0, t), rtol=1e-12, atol=1e-14))
        worst = max(worst, np.max(np.abs(traj.final - lb.evolve_expm(rho0, h, rates, t))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 120.0
    acceptance(3, ok, f"max elementwise diff {worst:.2e} (<= 1e-8), runtime {elapsed:.0f} s (< 120 s)")
    assert ok


def test_criterion_04_cptp_invariants(acceptance):
    worst = {"trace": 0.0, "herm": 0.0, "mineig": 0.0, "purity_rise": 0.0}
    count = 0
    for gate in GATES:
        seq = pl.gate_sequence(gate)
        for rates in (lb.DephasingRates(), TYPICAL, lb.DephasingRates(1e6, 1e6)):
            for probe in fd.probe_states(seq.target_gate):
                prev_k, prev_p = None, None
                for t, k, rho in pl.sequence_states(probe.state, seq, rates, samples_per_segment=3):
                    count += 1
                    worst["trace"] = max(worst["trace"], abs(np.trace(rho).real - 1))
                    worst["herm"] = max(worst["herm"], np.max(np.abs(rho - rho.conj().T)))
                    worst["mineig"] = min(worst["mineig"], np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
                    p = sc.purity(rho)
                    if k == prev_k:
                        worst["purity_rise"] = max(worst["purity_rise"], p - prev_p)
                    prev_k, prev_p = k, p
    # purity is exactly conserved at zero rates, so rises at the propagation roundoff
    # floor (the same 1e-9 allowed for the trace) are not a violation
    ok = (worst["trace"] < 1e-9 and worst["herm"] < 1e-10 and worst["mineig"] >= -1e-8
          and worst["purity_rise"] <= 1e-9)
    acceptance(4, ok, f"{count} states: |Tr-1| {worst['trace']:.1e}, herm {worst['herm']:.1e}, "
                      f"min eig {worst['mineig']:.1e}, max purity rise in segment {worst['purity_rise']:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_05_frame_invariance(acceptance):
    seq = pl.gate_sequence("x")
    seg = seq.segments[0]
    q = seg.device_params(P)
    rho0 = sc.make_state("0", 1)
    rates = TYPICAL
    start = time.perf_counter()
    traj = lb.evolve(lb.EvolutionProblem(rho0, lb.lab_drive_hamiltonian(q, 1), rates, (0.0, seg.duration),
                                         rtol=1e-12, atol=1e-14))
    elapsed = time.perf_counter() - start
    lab = hm.to_frame_state(traj.final, seg.omega_ac, seg.duration)
    rot = pl.apply_sequence(rho0, seq, rates)
    diff = np.max(np.abs(lab - rot))
    ok = diff <= 1e-7 and elapsed < 600
    acceptance(5, ok, f"X(pi) over {seg.duration * 1e6:.2f} us: max diff {diff:.1e} (<= 1e-7), "
                      f"lab-frame run {elapsed:.0f} s (< 600 s)")
    assert ok


def test_criterion_06_calibration_quality(acceptance):
    parts, ok = [], True
    for gate in GATES:
        seq = pl.gate_sequence(gate)
        err = float(np.max(pl.closed_system_errors(seq)))
        tol = 1e-5 if seq.n_donors == 1 else 1e-3
        ok &= err <= tol
        parts.append(f"{gate} {err:.1e} (stretch {PUBLISHED[gate][1]:.1e})")
    acceptance(6, ok, "max probe error at zero dephasing: " + ", ".join(parts))
    assert ok


def test_criterion_07_typical_rate_reproduction(acceptance):
    parts, ok = [], True
    for gate in GATES:
        seq = pl.gate_sequence(gate)
        sys_err = max_error(seq, lb.DephasingRates())
        typ_err = max_error(seq, TYPICAL)
        ref_typ, ref_sys, _ = PUBLISHED[gate]
        inc, ref_inc = typ_err - sys_err, ref_typ - ref_sys
        typ_ok = ref_typ / 3 <= typ_err <= 3 * ref_typ
        if ref_inc == 0:
            # the printed values agree to two digits, so the increment is below 1e-7
            inc_ok = inc < 3e-7
        else:
            inc_ok = ref_inc / 3 <= inc <= 3 * ref_inc
        ok &= typ_ok and inc_ok
        parts.append(f"{gate} typ {typ_err:.1e}/{ref_typ:.1e} {'ok' if typ_ok else 'off'}, "
                     f"inc {inc:.1e}/{ref_inc:.1e} {'ok' if inc_ok else 'off'}")
    acceptance(7, ok, "; ".join(parts))
    assert ok


def test_criterion_08_high_dephasing_limit(acceptance):
    z = fd.gate_error_suite("z", rates=lb.DephasingRates(0.0, 1e8), probes=["+"], include_maximum=False)[0]
    c = fd.gate_error_suite("cnot", rates=lb.DephasingRates(54e6, 54e6), probes=["00+01"],
                            include_maximum=False)[0]
    ok = abs(z.error - 0.5) <= 0.05 and abs(c.error - 0.5) <= 0.1
    acceptance(8, ok, f"Z on |+> at gamma_n 1e8: {z.error:.3f} (0.5 +- 0.05); "
                      f"CNOT on |00>+|01> at 54e6: {c.error:.3f} (0.5 +- 0.1)")
    assert ok


def test_criterion_09_gate_durations(acceptance):
    parts, ok = [], True
    for gate in GATES:
        dur = pl.gate_sequence(gate).total_duration * 1e6
        ref = PUBLISHED[gate][2]
        rel = dur / ref - 1
        ok &= abs(rel) <= 0.25
        parts.append(f"{gate} {dur:.3f}/{ref} us ({rel:+.0%})")
    acceptance(9, ok, ", ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_10_sweep_determinism(acceptance, tmp_path):
    grid = sw.SweepGrid.default("cnot")
    outputs, times = [], []
    for run in range(2):
        path = tmp_path / f"cnot_{run}.csv"
        start = time.perf_counter()
        sw.run_sweep(sw.RunConfig(grid, output=str(path)))
        times.append(time.perf_counter() - start)
        outputs.append(path.read_bytes())
    rows = outputs[0].count(b"\n") - 1
    ok = outputs[0] == outputs[1] and max(times) < 1800
    acceptance(10, ok, f"{grid.shape[0]}x{grid.shape[1]} CNOT grid, {rows} rows, runs {times[0]:.0f} s and "
                       f"{times[1]:.0f} s (< 1800 s), byte-identical: {outputs[0] == outputs[1]}")
    assert ok
