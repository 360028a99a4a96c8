import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kanesim import _kernels
from kanesim import lindblad as lb
from kanesim import spin_core as sc
from kanesim.errors import DomainError, IntegrationError

from conftest import random_density_matrix, random_hermitian

BACKENDS = ["python"] + (["compiled"] if _kernels.COMPILED_AVAILABLE else [])


def test_t2_to_gamma():
    assert lb.t2_to_gamma(1.0) == 0.25
    assert lb.typical_rates().gamma_e == pytest.approx(4.1666667, rel=1e-7)
    assert lb.typical_rates().gamma_n == 0.25
    for bad in (0.0, -1.0, np.inf, np.nan):
        with pytest.raises(DomainError):
            lb.t2_to_gamma(bad)


def test_rates_validation():
    with pytest.raises(DomainError):
        lb.DephasingRates(-1.0, 0.0)
    assert lb.DephasingRates.from_t2(None, np.inf) == lb.DephasingRates(0.0, 0.0)


@given(st.integers(0, 2**31 - 1), st.floats(0, 1e6), st.floats(0, 1e6))
def test_weights_reproduce_double_commutator(seed, ge, gn):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, 16)
    rates = lb.DephasingRates(ge, gn)
    w = lb.dephasing_weights(rates, 16)
    assert np.allclose(lb.dissipator(rho, rates), w * rho, atol=1e-9 * max(ge, gn, 1))


@given(st.integers(0, 2**31 - 1))
def test_liouvillian_matches_rhs(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 4, 0.1)
    rho = random_density_matrix(rng, 4)
    rates = lb.DephasingRates(*rng.uniform(0, 1e5, 2))
    direct = -1j / lb.HBAR * (h @ rho - rho @ h) - lb.dissipator(rho, rates)
    via_l = lb.unvec(lb.liouvillian(h, rates) @ lb.vec(rho), 4)
    assert np.allclose(via_l, direct, rtol=1e-10, atol=1e-10 * np.abs(direct).max())


@given(st.integers(0, 2**31 - 1), st.floats(0, 5.0))
def test_dephasing_preserves_populations_and_trace(seed, t):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, 4)
    rates = lb.DephasingRates(0.3, 0.25)
    out = lb.evolve_expm(rho, np.zeros((4, 4)), rates, t)
    assert np.allclose(np.diag(out), np.diag(rho), atol=1e-12)
    assert np.trace(out) == pytest.approx(1.0)
    assert sc.purity(out) <= sc.purity(rho) + 1e-12


def test_analytic_single_spin_matches_expm():
    rho = sc.ket_to_dm(np.array([1, 1]) / np.sqrt(2))
    out = lb.evolve_expm(rho, np.zeros((2, 2)), lb.DephasingRates(0, 0.25), 2.0, labels=["n1"])
    assert np.allclose(out, lb.analytic_single_spin(rho, 0.25, 2.0), atol=1e-14)
    assert out[0, 1] == pytest.approx(0.5 * np.exp(-2.0))


@pytest.mark.parametrize("backend", BACKENDS)
def test_evolve_matches_expm(backend, rng):
    h = random_hermitian(rng, 16, 0.2)
    rho = random_density_matrix(rng, 16, rank=1)
    rates = lb.DephasingRates(3e5, 7e5)
    t = 5e-9
    prob = lb.EvolutionProblem(rho, h, rates, (0.0, t), rtol=1e-11, atol=1e-13,
                               sample_times=np.linspace(0, t, 5))
    traj = lb.evolve(prob, backend=backend)
    assert traj.backend == backend
    for ti, state in zip(traj.times, traj.states):
        assert np.max(np.abs(state - lb.evolve_expm(rho, h, rates, ti))) < 1e-8


def test_backends_agree_on_driven_problem(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    h0 = random_hermitian(rng, 4, 0.05)
    hc = random_hermitian(rng, 4, 0.01)
    hs = random_hermitian(rng, 4, 0.01)
    ham = lb.DrivenHamiltonian(h0, hc, hs, omega=3e10, phase=0.4)
    rho = random_density_matrix(rng, 4)
    prob = lb.EvolutionProblem(rho, ham, lb.DephasingRates(1e6, 1e5), (0.0, 2e-9), rtol=1e-11, atol=1e-13)
    a = lb.evolve(prob, backend="python").final
    b = lb.evolve(prob, backend="compiled").final
    assert np.max(np.abs(a - b)) < 1e-9


def test_callable_hamiltonian_uses_fallback(rng):
    h = random_hermitian(rng, 4, 0.05)
    rho = random_density_matrix(rng, 4)
    prob = lb.EvolutionProblem(rho, lb.constant_callable(h), lb.DephasingRates(), (0.0, 1e-10))
    traj = lb.evolve(prob)
    assert traj.backend == "python"
    assert np.allclose(traj.final, lb.evolve_expm(rho, h, lb.DephasingRates(), 1e-10), atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_budget_raises(backend, rng):
    h = random_hermitian(rng, 4, 0.2)
    rho = random_density_matrix(rng, 4)
    prob = lb.EvolutionProblem(rho, h, lb.DephasingRates(), (0.0, 1e-8), max_steps=5)
    with pytest.raises(IntegrationError) as err:
        lb.evolve(prob, backend=backend)
    assert err.value.t_reached is not None


def test_problem_validation(rng):
    rho = random_density_matrix(rng, 4)
    with pytest.raises(DomainError):
        lb.EvolutionProblem(rho, np.eye(4), t_span=(1.0, 1.0))
    with pytest.raises(DomainError):
        lb.EvolutionProblem(rho, np.eye(4), t_span=(0.0, 1.0), sample_times=[0.5, 0.2])
    with pytest.raises(DomainError):
        lb.EvolutionProblem(np.eye(4), np.eye(4))


def test_unknown_backend(rng):
    prob = lb.EvolutionProblem(random_density_matrix(rng, 2), np.zeros((2, 2)), labels=["n1"])
    with pytest.raises(DomainError):
        lb.evolve(prob, backend="fortran")


def test_evolve_spectral_matches_expm(rng):
    h = random_hermitian(rng, 4, 0.05)
    rho = random_density_matrix(rng, 4)
    rates = lb.DephasingRates(1e5, 3e5)
    times = [0.0, 1e-9, 7e-9]
    for t, state in zip(times, lb.evolve_spectral(rho, h, rates, times)):
        assert np.allclose(state, lb.evolve_expm(rho, h, rates, t), atol=1e-10)


def test_trajectory_csv(rng):
    rho = sc.make_state("+", 1)
    prob = lb.EvolutionProblem(rho, np.zeros((4, 4)), lb.DephasingRates(0, 0.25), (0.0, 1.0),
                               sample_times=[0.0, 0.5, 1.0])
    text = lb.evolve(prob).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "t,x,y,z,r"
    assert len(lines) == 4
    assert float(lines[-1].split(",")[-1]) == pytest.approx(np.exp(-1.0), rel=1e-8)
    buf = io.StringIO()
    lb.evolve(prob).to_csv(buf, include_entries=True)
    assert buf.getvalue().startswith("t,re_0_0,im_0_0")
