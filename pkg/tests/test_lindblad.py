import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from nvdnp.hamiltonian import C13, N_NV, NV, P1, ModelParams, build_hamiltonian, canonical_register
from nvdnp.lindblad import (
    FIG5C_T1,
    CollapseSpec,
    RelaxationTimes,
    SolverError,
    build_liouvillian,
    evolve_lindblad,
    evolve_lindblad_sectors,
    kernel_dimension,
    model_liouvillian,
    projection_sectors,
    pump_operators,
    steady_state,
    t1_operators,
)
from nvdnp.spin import SpinRegister, SpinSpecies
from nvdnp.unitary import DensityMatrix, evolve_unitary, initial_state, polarizations

PAIR = SpinRegister((SpinSpecies(P1, 0.5), SpinSpecies(C13, 0.5)))
NV_QUBIT = SpinRegister((SpinSpecies(NV, 1.0), SpinSpecies(C13, 0.5)))


def _rand_herm(rng, d, scale=0.5):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def _rand_state(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = a @ a.conj().T
    return r / np.trace(r)


def _rk4_oracle(H, cs, rho, t_end, steps):
    """Direct integration of the matrix master equation, independent of vectorization."""
    Cs = [np.asarray(c.todense()) for c in cs]

    def f(r):
        out = -2j * np.pi * (H @ r - r @ H)
        for C in Cs:
            Cd = C.conj().T
            out += C @ r @ Cd - 0.5 * (Cd @ C @ r + r @ Cd @ C)
        return out

    h = t_end / steps
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_rk4_oracle_dim4(seed):
    qubit_pair = PAIR
    rng = np.random.default_rng(seed)
    H = _rand_herm(rng, 4, 0.3)
    cs = [CollapseSpec(0.4, 0.5, -0.5, P1), CollapseSpec(0.1, -0.5, 0.5, C13), CollapseSpec(0.25, 0.5, -0.5, C13)]
    rho0 = _rand_state(rng, 4)
    L = build_liouvillian(H, cs, qubit_pair)
    for method in ("dense", "krylov"):
        tr = evolve_lindblad(DensityMatrix(rho0, qubit_pair), L, [0.0, 2.0], method=method)
        ref = _rk4_oracle(H, [c.operator(qubit_pair) for c in cs], rho0, 2.0, 4000)
        pol = polarizations(DensityMatrix(ref, qubit_pair))
        assert tr["P_S1"][-1] == pytest.approx(pol.P_S1, abs=1e-7)
        assert tr["P_C"][-1] == pytest.approx(pol.P_C, abs=1e-7)


def test_apply_matches_matrix_form(qubit_pair):
    rng = np.random.default_rng(1)
    H = _rand_herm(rng, 4)
    cs = [CollapseSpec(0.3, 0.5, -0.5, P1)]
    L = build_liouvillian(H, cs, qubit_pair)
    rho = _rand_state(rng, 4)
    C = np.asarray(cs[0].operator(qubit_pair).todense())
    ref = -2j * np.pi * (H @ rho - rho @ H) + C @ rho @ C.conj().T - 0.5 * (C.conj().T @ C @ rho + rho @ C.conj().T @ C)
    np.testing.assert_allclose(L.apply(rho), ref, atol=1e-12)
    np.testing.assert_allclose(L.trace_row() @ L.matrix, 0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_collapse_equals_unitary(seed):
    nv_qubit = NV_QUBIT
    rng = np.random.default_rng(seed)
    H = _rand_herm(rng, 6)
    rho0 = DensityMatrix(_rand_state(rng, 6), nv_qubit)
    times = np.linspace(0, 10, 51)
    u = evolve_unitary(rho0, H, times)
    for method in ("dense", "krylov"):
        lz = evolve_lindblad(rho0, build_liouvillian(H, [], nv_qubit), times, method=method)
        for k in u.observables:
            np.testing.assert_allclose(lz[k], u[k], atol=1e-8)


def test_amplitude_damping_closed_form():
    reg = SpinRegister((SpinSpecies(P1, 0.5),))
    g = 0.7
    L = build_liouvillian(np.zeros((2, 2)), [CollapseSpec(g, 0.5, -0.5, P1)], reg)
    times = np.linspace(0, 5, 21)
    tr = evolve_lindblad(initial_state({P1: 0.5}, reg), L, times)
    # population of |+1/2> decays as exp(-g t): P = 2 exp(-g t) - 1
    np.testing.assert_allclose(tr["P_S1"], 2 * np.exp(-g * times) - 1, atol=1e-12)


def test_two_way_t1_relaxes_to_mixed_state():
    reg = SpinRegister((SpinSpecies(NV, 1.0),))
    L = build_liouvillian(np.diag([0.0, 0.0, 0.0]), t1_operators(RelaxationTimes(T1_NV=2.0), reg), reg)
    tr = evolve_lindblad(initial_state({NV: 1}, reg), L, [0.0, 200.0])
    assert abs(tr["P_S"][-1]) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_trace_and_positivity_preserved(seed):
    nv_qubit = NV_QUBIT
    rng = np.random.default_rng(seed)
    H = _rand_herm(rng, 6, 1.0)
    cs = [CollapseSpec(float(rng.uniform(0, 2)), 0.0, -1.0, NV), CollapseSpec(float(rng.uniform(0, 2)), 1.0, 0.0, NV),
          CollapseSpec(float(rng.uniform(0, 2)), -0.5, 0.5, C13)]
    L = build_liouvillian(H, cs, nv_qubit)
    tr = evolve_lindblad(DensityMatrix(_rand_state(rng, 6), nv_qubit), L, np.linspace(0, 20, 41))
    assert tr.diagnostics["max_trace_error"] <= 1e-9
    assert tr.diagnostics["min_eigenvalue"] >= -1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_steady_state_matches_dense_null_space(seed):
    nv_qubit = NV_QUBIT
    rng = np.random.default_rng(seed)
    H = _rand_herm(rng, 6)
    cs = pump_operators(float(rng.uniform(0.05, 1)), nv_qubit) + t1_operators(RelaxationTimes(T1_C=5.0), nv_qubit)
    L = build_liouvillian(H, cs, nv_qubit)
    ss = steady_state(L)
    assert ss.relative_residual <= 1e-9 and ss.kernel_dimension == 1
    ns = null_space(L.dense(), rcond=1e-10)
    assert ns.shape[1] == 1
    ref = ns[:, 0].reshape(6, 6, order="F")
    np.testing.assert_allclose(ss.rho.matrix, ref / np.trace(ref), atol=1e-9)


def test_degenerate_kernel_raises(nv_qubit):
    # no dissipation: every diagonal state is stationary
    L = build_liouvillian(np.diag(np.arange(6.0)), [], nv_qubit)
    assert kernel_dimension(L) > 1
    with pytest.raises(SolverError) as exc:
        steady_state(L)
    assert exc.value.diagnostics["kernel_dimension"] > 1


def test_pump_only_pumps_nv():
    reg = SpinRegister((SpinSpecies(NV, 1.0),))
    L = build_liouvillian(np.zeros((3, 3)), pump_operators(0.5, reg), reg)
    ss = steady_state(L)
    np.testing.assert_allclose(np.diag(ss.rho.matrix).real, [0, 1, 0], atol=1e-12)


def test_operator_counts_and_validation():
    reg = canonical_register()
    ops = t1_operators(FIG5C_T1, reg)
    assert len(ops) == 22
    assert all(c.rate > 0 for c in ops)
    with pytest.raises(ValueError):
        pump_operators(-1)
    with pytest.raises(ValueError):
        CollapseSpec(math.nan, 0, 1, NV)
    with pytest.raises(ValueError):
        RelaxationTimes(T1_NV=0.0)


def test_sector_decomposition_is_exact():
    reg = SpinRegister((SpinSpecies(NV, 1.0), SpinSpecies(N_NV, 1.0), SpinSpecies(C13, 0.5)))
    p = ModelParams(B=51.1)
    H = build_hamiltonian(p, register=reg)
    cs = pump_operators(0.05, reg) + t1_operators(RelaxationTimes(T1_NV=100.0, T1_C=50.0), reg)
    times = np.linspace(0, 30, 16)
    full = evolve_lindblad(initial_state({NV: 0}, reg), build_liouvillian(H, cs, reg), times)
    sec = evolve_lindblad_sectors(H, cs, reg, N_NV, {NV: 0}, times)
    for k in ("P_S", "P_C", "P_J"):
        np.testing.assert_allclose(sec[k], full[k], atol=1e-10)


def test_sector_rejects_mixing():
    reg = SpinRegister((SpinSpecies(NV, 1.0), SpinSpecies(N_NV, 1.0)))
    H = build_hamiltonian(ModelParams(A_N=np.diag([-2.7, -2.7, -2.16])), register=reg)
    with pytest.raises(ValueError):
        projection_sectors(H, reg, N_NV)
    with pytest.raises(ValueError):
        evolve_lindblad_sectors(np.zeros((9, 9)), [CollapseSpec(1.0, 1, 0, N_NV)], reg, N_NV, {}, [0.0])


def test_model_liouvillian_reduced_register_steady_state():
    reg = canonical_register(drop=(N_NV,))
    L = model_liouvillian(ModelParams(B=51.08), 0.02, FIG5C_T1, reg)
    ss = steady_state(L)
    assert ss.relative_residual < 1e-12
    pol = polarizations(ss.rho)
    assert -1 <= pol.P_C <= 1 and ss.rho.min_eigenvalue() > -1e-10


def test_rejects_bad_inputs(nv_qubit):
    L = build_liouvillian(np.zeros((6, 6)), [], nv_qubit)
    rho = initial_state({}, nv_qubit)
    with pytest.raises(ValueError):
        evolve_lindblad(rho, L, [0, 1], method="euler")
    with pytest.raises(ValueError):
        evolve_lindblad(rho, L, [1.0, 0.5])
    with pytest.raises(ValueError):
        evolve_lindblad(initial_state({}, PAIR), L, [0.0])
