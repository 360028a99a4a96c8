import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kanesim import hamiltonian as hm
from kanesim import spin_core as sc
from kanesim.errors import DomainError

P = hm.preset("table1")
HBAR = P.constants.hbar


def analytic_transition_frequency(params, A):
    """Closed-form single-donor nuclear frequency from the 2x2 flip-flop block."""
    c = params.constants
    a = c.mu_B * params.B
    b = c.g_n * c.mu_n * params.B
    e_down_up = -A - np.sqrt((a + b) ** 2 + 4 * A**2)   # dressed |down, 0>
    e_down_down = -a + b + A                             # |down, 1>, exact eigenstate
    return (e_down_up - e_down_down) / c.hbar


def test_table1_values():
    assert P.A == 0.1211e-3
    assert P.A_z == 0.0606e-3
    assert P.A_x == 0.0606e-3
    assert P.B == 2.000
    assert P.B_ac == 0.0025
    assert P.A_U == 0.1197e-3
    assert P.J_U == 0.0423


def test_unknown_preset():
    with pytest.raises(DomainError):
        hm.preset("nope")


@pytest.mark.parametrize("field,value", [("B", 0.0), ("A", -1.0), ("J", np.nan), ("omega_ac", np.inf)])
def test_device_params_validation(field, value):
    with pytest.raises(DomainError):
        P.replace(**{field: value})


def test_params_json_round_trip():
    q = P.replace(J=0.01, omega_ac=-3.0)
    assert hm.DeviceParams.from_json(q.to_json()) == q


@pytest.mark.parametrize("n", [1, 2])
def test_hamiltonians_hermitian(n):
    q = P.replace(J=0.03, omega_ac=-4e8, phase_ac=0.3)
    for t in (0.0, 1.3e-7):
        assert sc.is_hermitian(hm.h_total(q, n, t), tol=1e-15)
    assert sc.is_hermitian(hm.rotating_hamiltonian(q, n), tol=1e-15)


def test_exchange_needs_two_donors():
    with pytest.raises(DomainError):
        hm.h_exchange(P, n_donors=1)


def test_zeeman_sign_convention():
    h = hm.h_zeeman(P, 1, 1).operator
    # electron-down states lie lowest
    down = sc.make_ket("0", 1)
    up_e = np.zeros(4)
    up_e[0] = 1
    assert np.real(down.conj() @ h @ down) < np.real(up_e @ h @ up_e)


@pytest.mark.parametrize("A", [0.0, 0.0606e-3, 0.1197e-3, 0.1211e-3])
def test_transition_frequency_matches_closed_form(A):
    assert hm.nuclear_transition_frequency(P, A) == pytest.approx(analytic_transition_frequency(P, A), rel=1e-10)


def test_frozen_frequencies():
    assert hm.idle_frequency(P) == pytest.approx(-5.85139e8, rel=1e-5)
    assert hm.nuclear_transition_frequency(P, P.A_x) == pytest.approx(-4.01020e8, rel=1e-5)
    assert hm.z_rotation_rate(P) == pytest.approx(1.8412e8, rel=1e-4)
    assert np.pi / hm.z_rotation_rate(P) == pytest.approx(17.06e-9, rel=1e-3)
    assert hm.rabi_frequency(P) == pytest.approx(5.01012e5, rel=1e-5)
    assert hm.flip_flop_strength(P) == pytest.approx(3.3496e-7, rel=1e-4)
    assert hm.flip_flop_strength(P, J=0.0529) == pytest.approx(1.3034e-6, rel=1e-4)


def test_z_rotation_rate_is_frequency_difference():
    expected = analytic_transition_frequency(P, P.A_z) - analytic_transition_frequency(P, P.A)
    assert hm.z_rotation_rate(P) == pytest.approx(expected, rel=1e-9)


def test_resonant_drive_flips_nucleus():
    """A pi pulse at the extracted Rabi frequency transfers |down 0> to |down 1>."""
    from scipy.linalg import expm

    w = hm.nuclear_transition_frequency(P, P.A_x)
    q = P.replace(A1=P.A_x, omega_ac=w, phase_ac=hm.drive_phase_for_axis(P, 0.0))
    h = hm.rotating_hamiltonian(q, 1)
    t = np.pi / hm.rabi_frequency(P)
    psi = expm(-1j * h * t / HBAR) @ sc.make_ket("0", 1)
    assert abs(sc.make_ket("1", 1) @ psi) ** 2 > 0.99999


def test_drive_phase_sets_axis():
    """Quarter-turn about +x from |0> leaves <Y> = -1; a pi/2 shift of phase rotates the axis."""
    from scipy.linalg import expm

    w = hm.nuclear_transition_frequency(P, P.A_x)
    t = 0.5 * np.pi / hm.rabi_frequency(P)
    out = {}
    for axis in (0.0, np.pi / 2):
        q = P.replace(A1=P.A_x, omega_ac=w, phase_ac=hm.drive_phase_for_axis(P, axis))
        psi = expm(-1j * hm.rotating_hamiltonian(q, 1) * t / HBAR) @ sc.make_ket("0", 1)
        red = sc.partial_trace(sc.ket_to_dm(psi), "n1", sc.layout(1))
        out[axis] = sc.bloch_vector(red)
    assert out[0.0][1] == pytest.approx(-1.0, abs=1e-4)
    assert out[np.pi / 2][0] == pytest.approx(1.0, abs=1e-4)


def test_rotating_frame_rejects_mismatched_drive():
    with pytest.raises(DomainError):
        hm.rotating_hamiltonian(P.replace(omega_ac=-1e8), 1, omega=-2e8)


def test_rotating_frame_matches_lab_generator():
    """d/dt of the frame transform reproduces the -hbar omega S / 2 shift."""
    q = P.replace(omega_ac=-4e8, phase_ac=0.7)
    w = q.omega_ac
    t, dt = 3.1e-7, 1e-12
    # U(t)^dag H_lab(t) U(t) is constant in time for the rotating drive
    a = hm.to_rotating_frame(hm.h_total(q, 1, t), w, t, HBAR)
    b = hm.to_rotating_frame(hm.h_total(q, 1, t + dt), w, t + dt, HBAR)
    assert np.allclose(a, b, atol=1e-15)
    assert np.allclose(a, hm.rotating_hamiltonian(q, 1), atol=1e-15)


@given(st.floats(-1e9, 1e9), st.floats(-1e9, 1e9), st.floats(0, 1e-5), st.integers(0, 10**6))
def test_change_frame_round_trip(w1, w2, t, seed):
    from conftest import random_density_matrix

    rho = random_density_matrix(np.random.default_rng(seed), 4)
    back = hm.change_frame(hm.change_frame(rho, w1, w2, t), w2, w1, t)
    assert np.allclose(back, rho, atol=1e-12)
    assert sc.purity(hm.change_frame(rho, w1, w2, t)) == pytest.approx(sc.purity(rho))


def test_effective_hamiltonian_structure():
    h = hm.effective_nuclear_hamiltonian(P, P.A_U, P.A_U, P.J_U, hm.idle_frequency(P))
    assert np.allclose(h, h.conj().T, rtol=0, atol=1e-16)
    # conserves total nuclear Z: no coupling between |00> and the rest
    assert abs(h[0, 1]) < 1e-15 and abs(h[0, 2]) < 1e-15 and abs(h[0, 3]) < 1e-15
    assert h[1, 2] == pytest.approx(h[2, 1].conjugate())
