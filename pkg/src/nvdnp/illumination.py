"""Laser-geometry signal model.

The surface signal is ``s(W) = int_A U(r) P_C(R(U(r))) P_NV(U(r)) da`` for a
beam profile ``U`` normalized to total power ``W`` over the crystal face.
Lengths are in mm and powers in W, so intensities in W/mm^2 equal
uW/um^2 numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import erf

KAPPA = 6.9e-3  # MHz per uW/um^2
BEAM_RADII = {"i": 0.3, "ii": 1.2, "iii": 1.8}  # mm, 1/e^2 intensity radius


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrystalSurface:
    width: float = 3.2
    height: float = 3.2
    n: int = 256

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"crystal extents must be positive, got {self.width} x {self.height}")
        if self.n < 2:
            raise ValueError(f"grid resolution must be >= 2, got {self.n}")

    @property
    def area(self) -> float:
        return self.width * self.height

    def grid(self, n: int | None = None):
        """Midpoint-rule nodes and cell area."""
        n = n or self.n
        x = (np.arange(n) + 0.5) * self.width / n
        y = (np.arange(n) + 0.5) * self.height / n
        return x, y, (self.width / n) * (self.height / n)


@dataclass(frozen=True)
class BeamProfile:
    """Gaussian beam ``exp(-2 r^2 / radius^2)`` truncated to the crystal and scaled to ``power``."""

    radius: float
    power: float = 1.0
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"beam radius must be positive, got {self.radius}")
        if self.power < 0:
            raise ValueError(f"beam power must be >= 0, got {self.power}")

    def with_power(self, power: float) -> "BeamProfile":
        return BeamProfile(self.radius, power, self.center)

    def _center(self, surface: CrystalSurface):
        return self.center if self.center is not None else (surface.width / 2, surface.height / 2)

    def truncated_integral(self, surface: CrystalSurface) -> float:
        """Exact integral of the unit-peak Gaussian over the crystal face."""
        cx, cy = self._center(surface)
        s = self.radius / 2.0  # standard deviation of exp(-2 r^2 / w^2)
        k = s * np.sqrt(np.pi / 2.0)

        def one(c, L):
            return k * (erf((L - c) / (np.sqrt(2) * s)) + erf(c / (np.sqrt(2) * s)))

        return float(one(cx, surface.width) * one(cy, surface.height))

    def peak(self, surface: CrystalSurface) -> float:
        return self.power / self.truncated_integral(surface)


def intensity_profile(beam: BeamProfile, surface: CrystalSurface, x, y) -> np.ndarray:
    """Intensity (uW/um^2) at points ``(x, y)`` in mm; broadcasts like numpy."""
    cx, cy = beam._center(surface)
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    inside = (x >= 0) & (x <= surface.width) & (y >= 0) & (y <= surface.height)
    r2 = (x - cx) ** 2 + (y - cy) ** 2
    if beam.power == 0:
        return np.zeros(np.broadcast(x, y).shape)
    return np.where(inside, beam.peak(surface) * np.exp(-2.0 * r2 / beam.radius ** 2), 0.0)


def pump_rate_from_intensity(I, kappa: float = KAPPA):
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise ValueError("intensity must be >= 0")
    return kappa * I


def nv_polarization(I, p_max: float = 0.8, i_sat: float = 10.0):
    """Saturating NV spin polarization ``p_max I / (I + i_sat)``."""
    I = np.asarray(I, dtype=float)
    return p_max * I / (I + i_sat)


@dataclass
class ResponseMaps:
    """Intensity to (pump rate, NV polarization, 13C polarization) maps.

    ``pc_R``/``pc_values`` tabulate the steady-state 13C polarization against
    pump rate (MHz); rates beyond the table hold the last value.
    """

    pc_R: np.ndarray
    pc_values: np.ndarray
    kappa: float = KAPPA
    p_max: float = 0.8
    i_sat: float = 10.0
    _interp: Callable = field(init=False, repr=False)

    def __post_init__(self):
        R = np.asarray(self.pc_R, dtype=float)
        v = np.asarray(self.pc_values, dtype=float)
        if R.ndim != 1 or R.shape != v.shape or len(R) < 2:
            raise ValueError("P_C table needs matching 1-D arrays of length >= 2")
        if np.any(np.diff(R) <= 0):
            raise ValueError("P_C table rates must be strictly increasing")
        if R[0] > 0:
            R, v = np.concatenate([[0.0], R]), np.concatenate([[0.0], v])
        if not 0 < self.p_max <= 1:
            raise ValueError(f"p_max must lie in (0, 1], got {self.p_max}")
        self.pc_R, self.pc_values = R, v
        self._interp = PchipInterpolator(R, v, extrapolate=False)

    @classmethod
    def from_pump_scan(cls, points, **kw) -> "ResponseMaps":
        pts = sorted(points, key=lambda p: p.R)
        return cls(np.array([p.R for p in pts]), np.array([p.P_C for p in pts]), **kw)

    def p_c(self, R):
        R = np.clip(np.asarray(R, dtype=float), 0.0, self.pc_R[-1])
        return self._interp(R)

    def integrand_factor(self, I):
        """``P_C(R(I)) * P_NV(I)``."""
        return self.p_c(pump_rate_from_intensity(I, self.kappa)) * nv_polarization(I, self.p_max, self.i_sat)


def _quadrature(beam, surface, maps, n):
    x, y, da = surface.grid(n)
    I = intensity_profile(beam, surface, x[:, None], y[None, :])
    return float(np.sum(I * maps.integrand_factor(I)) * da)


def signal_integral(beam: BeamProfile, surface: CrystalSurface, maps: ResponseMaps,
                    rtol: float = 1e-3, max_n: int = 4096) -> float:
    """Surface integral of ``U P_C P_NV``.

    The grid doubles until successive values agree to ``rtol`` and the same
    grid integrates the beam itself to its power within ``rtol`` (so an
    unresolved beam cannot pass as a converged zero).
    """
    if beam.power == 0:
        return 0.0
    n = surface.n
    prev = _quadrature(beam, surface, maps, n)
    while n < max_n:
        n *= 2
        cur = _quadrature(beam, surface, maps, n)
        resolved = abs(profile_integral(beam, surface, n) - beam.power) <= rtol * beam.power
        if resolved and abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    raise QuadratureError(f"signal integral not converged to {rtol} at grid {n}x{n}")


def profile_integral(beam: BeamProfile, surface: CrystalSurface, n: int | None = None) -> float:
    x, y, da = surface.grid(n)
    return float(intensity_profile(beam, surface, x[:, None], y[None, :]).sum() * da)


@dataclass
class PowerScan:
    W: np.ndarray
    signals: dict
    saturation_power: dict
    limit_efficiency: dict

    def rows(self):
        keys = list(self.signals)
        for k, w in enumerate(self.W):
            yield [w] + [self.signals[j][k] for j in keys]

    def to_csv(self, path):
        from .io import write_csv

        write_csv(path, ["W_watts", *[f"s_{j}" for j in self.signals]], self.rows())


def power_scan(W_grid: Sequence[float], maps: ResponseMaps, beams: dict | None = None,
               surface: CrystalSurface | None = None, saturation_fraction: float = 0.9) -> PowerScan:
    """``s_j(W)`` for each beam; saturation power is where ``s/W`` reaches the given fraction of its maximum."""
    beams = beams or {j: BeamProfile(r) for j, r in BEAM_RADII.items()}
    surface = surface or CrystalSurface()
    W = np.asarray(W_grid, dtype=float)
    signals, w_sat, eff = {}, {}, {}
    for name, beam in beams.items():
        s = np.array([signal_integral(beam.with_power(w), surface, maps) for w in W])
        signals[name] = s
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(W > 0, s / np.where(W > 0, W, 1.0), 0.0)
        eff[name] = float(e.max())
        hit = np.nonzero(e >= saturation_fraction * e.max())[0]
        w_sat[name] = float(W[hit[0]]) if len(hit) and e.max() > 0 else float("nan")
    return PowerScan(W, signals, w_sat, eff)


def profile_cross_section(beam: BeamProfile, surface: CrystalSurface, n: int = 321):
    """Intensity along the horizontal line through the beam center."""
    _, cy = beam._center(surface)
    x = np.linspace(0.0, surface.width, n)
    return x, intensity_profile(beam, surface, x, np.full_like(x, cy))
