import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvdnp.illumination import (
    BEAM_RADII,
    BeamProfile,
    CrystalSurface,
    QuadratureError,
    ResponseMaps,
    intensity_profile,
    nv_polarization,
    power_scan,
    profile_integral,
    pump_rate_from_intensity,
    signal_integral,
)

SURF = CrystalSurface()
MAPS = ResponseMaps(np.array([0.0, 0.01, 0.05, 0.5, 2.0]), np.array([0.0, 0.15, 0.3, 0.4, 0.42]))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.1, 5.0))
def test_profile_normalized_to_power(radius, power):
    beam = BeamProfile(radius, power)
    assert profile_integral(beam, SURF, n=4096) == pytest.approx(power, rel=1e-6)


def test_named_beams_normalized():
    for r in BEAM_RADII.values():
        assert profile_integral(BeamProfile(r), SURF, n=4096) == pytest.approx(1.0, abs=1e-6)


def test_intensity_zero_outside_crystal():
    beam = BeamProfile(1.0)
    assert intensity_profile(beam, SURF, -0.1, 1.6) == 0.0
    assert intensity_profile(beam, SURF, 1.6, 1.6) == pytest.approx(beam.peak(SURF))


def test_flat_beam_closed_form():
    # a very wide beam is uniform: s = A * U * f(U) with U = W / A
    W = 2.0
    beam = BeamProfile(1e4, W)
    U = W / SURF.area
    expected = SURF.area * U * float(MAPS.integrand_factor(U))
    assert signal_integral(beam, SURF, MAPS) == pytest.approx(expected, rel=1e-6)


def test_response_maps():
    assert pump_rate_from_intensity(10.0) == pytest.approx(0.069)
    assert nv_polarization(10.0) == pytest.approx(0.4)
    assert MAPS.p_c(5.0) == pytest.approx(0.42)
    assert MAPS.p_c(0.01) == pytest.approx(0.15)
    prepended = ResponseMaps(np.array([0.01, 0.1]), np.array([0.1, 0.2]))
    assert prepended.p_c(0.0) == 0.0
    with pytest.raises(ValueError):
        ResponseMaps(np.array([0.1, 0.05]), np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        pump_rate_from_intensity(-1.0)


def test_signal_zero_power_and_scaling():
    assert signal_integral(BeamProfile(0.3, 0.0), SURF, MAPS) == 0.0
    lin = ResponseMaps(np.array([0.0, 10.0]), np.array([0.0, 0.0]))
    assert signal_integral(BeamProfile(0.3, 1.0), SURF, lin) == 0.0


def test_power_scan_monotone():
    scan = power_scan(np.linspace(0, 3, 7), MAPS)
    for s in scan.signals.values():
        assert np.all(np.diff(s) >= 0)
    assert set(scan.saturation_power) == set(BEAM_RADII)


def test_quadrature_failure_raises():
    with pytest.raises(QuadratureError):
        signal_integral(BeamProfile(0.01, 1.0), CrystalSurface(n=4), MAPS, rtol=1e-12, max_n=16)


def test_geometry_validation():
    with pytest.raises(ValueError):
        CrystalSurface(width=0)
    with pytest.raises(ValueError):
        BeamProfile(-1.0)
    with pytest.raises(ValueError):
        BeamProfile(1.0, -2.0)
