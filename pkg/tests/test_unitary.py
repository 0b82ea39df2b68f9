import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from nvdnp.hamiltonian import C13, N_NV, NV, P1, ModelParams, build_hamiltonian, canonical_register
from nvdnp.spin import SpinRegister, SpinSpecies, spin_matrices
from nvdnp.unitary import (
    DensityMatrix,
    Eigensystem,
    InitialState,
    evolve_unitary,
    first_envelope_maximum,
    initial_state,
    polarizations,
    smoothed,
    unitary_limit_scan,
)


def _single():
    return SpinRegister((SpinSpecies(P1, 0.5),))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-5.0, 5.0))
def test_rabi_closed_form(omega, delta):
    reg = _single()
    sx, _, sz = spin_matrices(0.5)
    H = omega * sx + delta * sz
    times = np.linspace(0, 3, 301)
    tr = evolve_unitary(initial_state({P1: 0.5}, reg), H, times)
    oe = np.hypot(omega, delta)
    ref = 1 - 2 * (omega / oe) ** 2 * np.sin(np.pi * oe * times) ** 2
    np.testing.assert_allclose(tr["P_S1"], ref, atol=1e-10)


def test_flip_flop_swap(qubit_pair):
    # J (S+I- + S-I+)/2 swaps |+-> and |-+> with period 1/J
    sx, sy, _ = spin_matrices(0.5)
    J = 0.8
    H = J * (np.kron(sx, sx) + np.kron(sy, sy))
    tr = evolve_unitary(initial_state({P1: 0.5, C13: -0.5}, qubit_pair), H, [0.0, 0.5 / J, 1.0 / J])
    np.testing.assert_allclose(tr["P_C"], [-1, 1, -1], atol=1e-10)
    np.testing.assert_allclose(tr["P_S1"], [1, -1, 1], atol=1e-10)


def test_commuting_state_is_stationary():
    reg = canonical_register(drop=(N_NV,))
    p = ModelParams(A_C=np.diag([0, 0, 4.0]), d_nvp1=0.5, nvp1_form="ising",
                    A_N1=np.diag([0, 0, 114.0]))
    H = build_hamiltonian(p, register=reg)
    tr = evolve_unitary(initial_state({NV: 0, P1: 0.5, C13: 0.5}, reg), H, np.linspace(0, 50, 11))
    for v in tr.observables.values():
        np.testing.assert_allclose(v, v[0], atol=1e-10)


def test_propagate_matches_expm(nv_qubit):
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    H = (a + a.conj().T) / 2
    rho = initial_state({NV: 0}, nv_qubit).matrix
    U = expm(-2j * np.pi * H * 0.37)
    np.testing.assert_allclose(Eigensystem(H).propagate(rho, 0.37), U @ rho @ U.conj().T, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 50.0))
def test_time_average_matches_quadrature(seed, T):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = (a + a.conj().T) / 4
    reg = SpinRegister((SpinSpecies(P1, 0.5), SpinSpecies(C13, 0.5)))
    rho = initial_state({P1: 0.5}, reg).matrix
    eig = Eigensystem(H)
    op = np.kron(np.eye(2), 2 * spin_matrices(0.5)[2])
    t = np.linspace(0, T, 40001)
    ser = eig.expectation_series(rho, {"x": op}, t)["x"]
    assert eig.time_average(rho, op, T) == pytest.approx(np.trapezoid(ser, t) / T, abs=1e-6)


def test_infinite_average_limit(qubit_pair):
    sx, sy, sz = spin_matrices(0.5)
    H = 0.3 * np.kron(sz, np.eye(2)) + 0.7 * (np.kron(sx, sx) + np.kron(sy, sy))
    eig = Eigensystem(H)
    rho = initial_state({P1: 0.5, C13: -0.5}, qubit_pair).matrix
    op = np.kron(np.eye(2), 2 * sz)
    assert eig.time_average(rho, op, 1e7) == pytest.approx(eig.time_average(rho, op, None), abs=1e-6)


def test_initial_state_products(nv_qubit):
    rho = initial_state({NV: -1}, nv_qubit)
    assert rho.trace == pytest.approx(1)
    assert rho.purity == pytest.approx(0.5)
    pol = polarizations(rho.validate())
    assert pol.P_S == pytest.approx(-1) and pol.P_C == pytest.approx(0)
    assert np.isnan(pol.P_J)
    with pytest.raises(ValueError):
        InitialState.from_mapping(nv_qubit, {"P1": 0.5})
    with pytest.raises(ValueError):
        initial_state({NV: 0.5}, nv_qubit)


def test_rejects_bad_shapes(nv_qubit):
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(3), nv_qubit)
    with pytest.raises(ValueError):
        evolve_unitary(initial_state({}, nv_qubit), np.eye(4), [0.0])
    with pytest.raises(ValueError):
        evolve_unitary(initial_state({}, nv_qubit), np.triu(np.ones((6, 6))), [0.0])


def test_smoothing_and_envelope():
    t = np.linspace(0, 100, 10001)
    slow = np.sin(2 * np.pi * t / 80.0)
    fast = 0.2 * np.sin(2 * np.pi * 5.0 * t)
    s = smoothed(slow + fast, t, 2.0)
    inner = (t > 2) & (t < 98)
    assert np.abs(s - slow)[inner].max() < 0.02
    assert first_envelope_maximum(slow + fast, t) == pytest.approx(20.0, abs=0.5)


def test_unitary_limit_scan_weak_coupling_vanishes():
    reg = canonical_register(drop=(N_NV,))
    res = unitary_limit_scan([0.0, 4.0], register=reg, half_window=0.15, n_fields=31, n_times=401)
    assert res[0].max_P_C < 1e-12
    assert res[1].max_P_C > 0.01
