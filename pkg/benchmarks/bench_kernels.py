"""Compare the compiled DOP853 kernel with the scipy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--duration 2e-8]

Both back ends integrate the same random two-donor problem (constant
Hamiltonian bounded by 0.2 meV, nuclear and electron dephasing) at the
default tolerances. The script prints wall time, steps, the agreement of
the two final states and the speed-up.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kanesim import lindblad as lb
from kanesim._kernels import COMPILED_AVAILABLE


def random_problem(seed: int, duration: float) -> lb.EvolutionProblem:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    h = a + a.conj().T
    h *= 0.2 / np.linalg.norm(h, 2)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    rates = lb.DephasingRates(rng.uniform(0, 1e6), rng.uniform(0, 1e6))
    return lb.EvolutionProblem(np.outer(psi, psi.conj()), h, rates, (0.0, duration))


def bench(problem, backend, repeat):
    best, traj = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = lb.evolve(problem, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--duration", type=float, default=2e-8, help="simulated time in s")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    problem = random_problem(args.seed, args.duration)
    reference = lb.evolve_expm(problem.initial, problem.hamiltonian, problem.rates, args.duration)
    rows = []
    backends = ["python"] + (["compiled"] if COMPILED_AVAILABLE else [])
    for backend in backends:
        seconds, traj = bench(problem, backend, args.repeat)
        err = np.max(np.abs(traj.final - reference))
        rows.append((backend, seconds, traj.nsteps, err))
        print(f"{backend:<9} {seconds:9.3f} s  {traj.nsteps:8d} steps  "
              f"{1e6 * seconds / max(traj.nsteps, 1):8.2f} us/step  max |diff vs expm| {err:.2e}")
    if len(rows) == 2:
        print(f"speed-up of compiled over python: {rows[0][1] / rows[1][1]:.1f}x")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
