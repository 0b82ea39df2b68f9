import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from nvdnp.hamiltonian import ModelParams
from nvdnp.io import read_csv
from nvdnp.spectra import (
    MatchSpec,
    SweepConfig,
    convolve_gaussian,
    field_to_mhz,
    matching_field,
    matching_field_curve,
    p1_orientations,
    polarization_amplitude,
    sign_reversal,
    sweep,
    window_extrema,
    window_integral,
)

GRID = np.linspace(40.0, 60.0, 8001)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(44, 56), min_size=1, max_size=8), st.floats(-3, 3), st.floats(0.02, 0.5))
def test_convolution_linear(centres, scale, w):
    a = np.linspace(-1, 1, len(centres))
    b = np.cos(np.arange(len(centres)))
    lhs = convolve_gaussian(centres, scale * a + b, w, GRID)
    rhs = scale * convolve_gaussian(centres, a, w, GRID) + convolve_gaussian(centres, b, w, GRID)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(st.floats(45, 55), st.floats(0.01, 1.0))
def test_convolution_normalized(b0, w):
    c = convolve_gaussian([b0], [1.0], w, GRID)
    assert np.trapezoid(c, GRID) == pytest.approx(1.0, abs=1e-6)
    assert GRID[np.argmax(c)] == pytest.approx(b0, abs=GRID[1] - GRID[0])


def test_zero_width_deposits_sticks():
    c = convolve_gaussian([50.0, 50.0, 51.3], [1.0, 2.0, -4.0], 0.0, GRID)
    assert c.sum() == pytest.approx(-1.0)
    assert c[np.argmin(np.abs(GRID - 50.0))] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        convolve_gaussian([50.0], [1.0], -0.1, GRID)


def _brute_frequencies(p, mJ1, coflip):
    """Independent level assignment by overlap with product states."""
    half = np.array([[0, 1], [1, 0]]) / 2, np.array([[0, -1j], [1j, 0]]) / 2, np.diag([0.5, -0.5])
    one = (np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]) / np.sqrt(2),
           np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]]) / np.sqrt(2), np.diag([1.0, 0, -1]))
    H = p.gamma_e * p.B * np.kron(half[2], np.eye(3)) - p.gamma_N * p.B * np.kron(np.eye(2), one[2])
    H = H + p.Q_p1 * np.kron(np.eye(2), one[2] @ one[2])
    for i in range(3):
        H = H + p.A_N1[i, i] * np.kron(half[i], one[i])
    e, v = np.linalg.eigh(H)

    def level(ms, mj):
        k = (0 if ms > 0 else 3) + int(1 - mj)
        return e[np.argmax(np.abs(v[k, :]))]

    f_p1 = level(0.5, mJ1 - 1 if coflip else mJ1) - level(-0.5, mJ1)
    D, g = p.D, p.gamma_e
    f_nv = D - g * p.B
    return f_nv - f_p1


@pytest.mark.parametrize("j", [-2, -1, 0, 1, 2])
def test_matching_field_matches_brute_force(j):
    spec = MatchSpec.from_index(j)
    p0 = ModelParams()
    b = matching_field(spec, p0)
    ref = brentq(lambda B: _brute_frequencies(p0.replace(B=B), spec.mJ1, spec.nuclear_coflip), 40, 60)
    assert b == pytest.approx(ref, abs=1e-4)
    assert MatchSpec.from_index(j).j == j


def test_matching_order_and_midpoints():
    b = {j: matching_field(MatchSpec.from_index(j, 0.0, "misaligned")) for j in (-2, -1, 0, 1, 2)}
    assert b[-1] < b[-2] < b[0] < b[2] < b[1]
    assert b[0] == pytest.approx(51.12, abs=0.05)


def test_no_crossing_gives_none():
    assert matching_field(MatchSpec(), bracket=(10.0, 20.0)) is None


def test_angle_curve_monotone():
    curve = matching_field_curve(np.linspace(0, 30, 7))
    b = [x[1] for x in curve]
    assert np.all(np.diff(b) > 0)


def test_orientations():
    assert p1_orientations("parallel") == [(0.0, 0.0)]
    mis = p1_orientations("misaligned")
    assert len(mis) == 3 and all(z == pytest.approx(70.5288, abs=1e-3) for z, _ in mis)


def test_field_to_mhz():
    assert field_to_mhz(0.1) == pytest.approx(2.8025)


def test_window_helpers():
    B = np.linspace(-1, 1, 2001)
    amp = -B * np.exp(-B ** 2 / 0.02)
    assert sign_reversal(B, amp, 0.0, 0.5)
    assert not sign_reversal(B, np.abs(amp), 0.0, 0.5)
    bmax, vmax, bmin, vmin = window_extrema(B, amp, 0.0, 0.5)
    assert bmax == pytest.approx(-0.1, abs=2e-3) and bmin == pytest.approx(0.1, abs=2e-3)
    assert window_integral(B, np.ones_like(B), 0.0, 0.25) == pytest.approx(0.5, abs=1e-9)


def test_far_off_resonance_is_silent():
    p = ModelParams()
    assert abs(polarization_amplitude(46.0, p, T_proj=200.0)) < 1e-3


def test_sweep_weights_are_linear(tmp_path):
    base = dict(B_min=50.9, B_max=51.4, n_points=101, T_proj=200.0, w=0.05)
    par = sweep(SweepConfig(weights=(1.0, 0.0), **base))
    mis = sweep(SweepConfig(weights=(0.0, 1.0), **base))
    both = sweep(SweepConfig(weights=(1.0, 3.0), **base))
    np.testing.assert_allclose(both.sticks, par.sticks + 3 * mis.sticks, atol=1e-12)
    np.testing.assert_allclose(both.curve, convolve_gaussian(both.B, both.sticks, 0.05, both.B), atol=1e-9)
    path = tmp_path / "p.csv"
    both.to_csv(path)
    header, rows = read_csv(path)
    assert header == ["B_mT", "amplitude_sticks", "amplitude_convolved"]
    np.testing.assert_array_equal(np.array(rows)[:, 1], both.sticks)


def test_adaptive_projection_converges():
    pat = sweep(SweepConfig(B_min=50.9, B_max=51.4, n_points=51, w=0.0))
    md = pat.metadata
    assert md["T_proj_converged"] and md["T_proj_us"] >= 50.0
    assert md["relative_changes"][-1] < 0.02


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(B_min=52, B_max=51)
    with pytest.raises(ValueError):
        SweepConfig(weights=(1.0, -1.0))
    with pytest.raises(ValueError):
        SweepConfig(w=-1)
