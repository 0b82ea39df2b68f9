"""Field-swept quantities: matching fields, signed polarization patterns, convolution.

Matching fields come from exact eigenvalues of the bare NV (3x3) and
P1 + 14N (6x6) blocks.  The pattern amplitude at a field is the time
average of ``P_C(t)`` under closed evolution, summed over the P1
orientation subsets with their multiplicities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .hamiltonian import (
    MISALIGNED_ZENITH,
    N_NV,
    ModelParams,
    ModelVariant,
    canonical_register,
    hamiltonian_parts,
    nv_block_hamiltonian,
    p1_block_hamiltonian,
)
from .spin import SpinRegister
from .unitary import CANONICAL_STATE, TWO_PI, InitialState, initial_state, observable_operators

SEARCH_BRACKET = (30.0, 120.0)


class P1Subset(str, enum.Enum):
    PARALLEL = "parallel"
    MISALIGNED = "misaligned"


def p1_orientations(subset: P1Subset | str, theta: float = 0.0,
                    azimuths: Sequence[float] = (0.0, 120.0, 240.0)) -> list[tuple[float, float]]:
    """Representative (zenith, azimuth) pairs of the P1 axis for a subset."""
    subset = P1Subset(subset)
    if subset is P1Subset.PARALLEL:
        return [(0.0, 0.0)]
    return [(MISALIGNED_ZENITH, float(a)) for a in azimuths]


@dataclass(frozen=True)
class MatchSpec:
    """One NV / P1 energy-matching condition.

    ``mJ1`` is the 14N projection in the lower (m_S' = -1/2) P1 level.  With
    ``nuclear_coflip`` the upper level carries ``mJ1 - 1``, i.e. the P1
    electron and its nitrogen flip together.
    """

    theta: float = 0.0
    mJ1: int = 0
    p1_subset: str = P1Subset.PARALLEL.value
    nuclear_coflip: bool = False
    p1_azimuth: float = 0.0

    def __post_init__(self):
        if self.mJ1 not in (-1, 0, 1):
            raise ValueError(f"mJ1 must be -1, 0 or +1, got {self.mJ1}")
        if self.nuclear_coflip and self.mJ1 == -1:
            raise ValueError("coflip from mJ1=-1 would leave the nitrogen multiplicity")
        P1Subset(self.p1_subset)

    @property
    def j(self) -> int:
        if not self.nuclear_coflip:
            return -self.mJ1
        return 2 if self.mJ1 == 0 else -2

    @classmethod
    def from_index(cls, j: int, theta: float = 0.0, p1_subset: str = "parallel",
                   p1_azimuth: float = 0.0) -> "MatchSpec":
        table = {0: (0, False), 1: (-1, False), -1: (1, False), 2: (0, True), -2: (1, True)}
        if j not in table:
            raise ValueError(f"matching index j must lie in -2..2, got {j}")
        m, flip = table[j]
        return cls(theta, m, P1Subset(p1_subset).value, flip, p1_azimuth)

    def zenith(self) -> float:
        return 0.0 if P1Subset(self.p1_subset) is P1Subset.PARALLEL else MISALIGNED_ZENITH


def nv_frequency(params: ModelParams) -> float:
    """NV |0> <-> |-1> frequency (MHz) from the two lowest NV levels."""
    e = np.linalg.eigvalsh(nv_block_hamiltonian(params))
    return float(e[1] - e[0])


def p1_frequency(params: ModelParams, mJ1: int, coflip: bool = False) -> float:
    """P1 transition frequency (MHz) between labelled levels of the P1 + 14N block.

    Levels are split into the lower and upper electron triplets; within the
    upper one energy rises with m_J', within the lower one it falls.
    """
    e = np.linalg.eigvalsh(p1_block_hamiltonian(params))
    lower, upper = e[:3], e[3:]
    lower_of = {1: lower[0], 0: lower[1], -1: lower[2]}
    upper_of = {-1: upper[0], 0: upper[1], 1: upper[2]}
    m_up = mJ1 - 1 if coflip else mJ1
    return float(upper_of[m_up] - lower_of[mJ1])


def match_detuning(B: float, spec: MatchSpec, params: ModelParams) -> float:
    p = params.replace(B=float(B), theta=spec.theta, p1_zenith=spec.zenith(), p1_azimuth=spec.p1_azimuth)
    return nv_frequency(p) - p1_frequency(p, spec.mJ1, spec.nuclear_coflip)


def matching_field(spec: MatchSpec, params: ModelParams | None = None,
                   bracket: tuple[float, float] = SEARCH_BRACKET, xtol: float = 1e-6) -> float | None:
    """Field (mT) where the NV and P1 transitions are degenerate, or ``None`` if no root is bracketed."""
    params = params or ModelParams()
    lo, hi = bracket
    g_lo, g_hi = match_detuning(lo, spec, params), match_detuning(hi, spec, params)
    if np.sign(g_lo) == np.sign(g_hi):
        return None
    return float(brentq(match_detuning, lo, hi, args=(spec, params), xtol=xtol, rtol=1e-14))


def matching_table(params: ModelParams | None = None, thetas: Sequence[float] = (0.0,),
                   subset: str = "parallel") -> list[tuple[float, int, float | None]]:
    """(theta, j, B) rows for all five matching conditions of one subset."""
    params = params or ModelParams()
    return [(float(th), j, matching_field(MatchSpec.from_index(j, th, subset), params))
            for th in thetas for j in (-2, -1, 0, 1, 2)]


def matching_field_curve(theta_grid: Sequence[float], params: ModelParams | None = None) -> list[tuple[float, float]]:
    """B_p^(0) versus field angle for the parallel subset."""
    params = params or ModelParams()
    out = []
    for th in theta_grid:
        if not 0.0 <= th <= 90.0:
            raise ValueError(f"theta {th} outside [0, 90] deg")
        b = matching_field(MatchSpec(theta=float(th)), params)
        if b is None:
            raise ValueError(f"no matching field in {SEARCH_BRACKET} mT at theta={th}")
        out.append((float(th), b))
    return out


# -- signed pattern ---------------------------------------------------------

def default_sweep_register() -> SpinRegister:
    """36-dim register with the NV nitrogen frozen out."""
    return canonical_register(drop=(N_NV,))


def _time_average_ladder(energies, m, T_values):
    """Time averages of ``sum_jk m_jk exp(-2 pi i (E_j - E_k) t)`` for several windows."""
    dE = energies[:, None] - energies[None, :]
    out = np.empty(len(T_values))
    for k, T in enumerate(T_values):
        if T is None or np.isinf(T):
            out[k] = np.real(np.sum(m[np.abs(dE) < 1e-9]))
            continue
        x = TWO_PI * dE * T
        small = np.abs(x) < 1e-8
        xs = np.where(small, 1.0, x)
        f = np.where(small, 1.0 - 0.5j * x, (1.0 - np.exp(-1j * xs)) / (1j * xs))
        out[k] = np.real(np.sum(m * f))
    return out


class _FieldEvaluator:
    """Precomputed ``H0``, ``H1``, state and observable for repeated field points."""

    def __init__(self, params: ModelParams, variant, register: SpinRegister, pure_levels):
        self.H0, self.H1 = hamiltonian_parts(params, variant, register)
        pure = {k: v for k, v in pure_levels.items() if k in register}
        self.rho = initial_state(InitialState.from_mapping(register, pure), register).matrix
        self.op = observable_operators(register)["P_C"]

    def ladder(self, B: float, T_values) -> np.ndarray:
        e, v = np.linalg.eigh(self.H0 + B * self.H1)
        vh = v.conj().T
        r = vh @ self.rho @ v
        o = vh @ self.op @ v
        return _time_average_ladder(e, r * o.T, T_values)


def polarization_amplitude(B: float, params: ModelParams | None = None,
                           variant: ModelVariant | str = ModelVariant.NV_CARBON, T_proj: float | None = 200.0,
                           register: SpinRegister | None = None, pure_levels=CANONICAL_STATE) -> float:
    """Mean of ``P_C(t)`` over ``[0, T_proj]`` us at field ``B`` (``T_proj=None``: infinite window)."""
    params = params or ModelParams()
    register = register or default_sweep_register()
    ev = _FieldEvaluator(params, variant, register, pure_levels)
    return float(ev.ladder(float(B), [T_proj])[0])


@dataclass
class SweepConfig:
    B_min: float = 48.5
    B_max: float = 54.0
    n_points: int = 5501
    T_proj: float | None = None
    w: float = 0.1
    weights: tuple[float, float] = (1.0, 3.0)
    T_start: float = 50.0
    max_doublings: int = 10
    tolerance: float = 0.02
    azimuths: tuple[float, ...] = (0.0, 120.0, 240.0)

    def __post_init__(self):
        if not self.B_min < self.B_max:
            raise ValueError(f"B_min ({self.B_min}) must be below B_max ({self.B_max})")
        if self.n_points < 2:
            raise ValueError(f"n_points must be >= 2, got {self.n_points}")
        if self.w < 0:
            raise ValueError(f"convolution width must be >= 0, got {self.w}")
        if len(self.weights) != 2 or min(self.weights) < 0:
            raise ValueError(f"weights must be two non-negative numbers, got {self.weights}")
        if self.T_proj is not None and self.T_proj <= 0:
            raise ValueError(f"T_proj must be positive, got {self.T_proj}")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.B_min, self.B_max, self.n_points)


@dataclass
class LinePattern:
    B: np.ndarray
    sticks: np.ndarray
    curve: np.ndarray
    metadata: dict = field(default_factory=dict)
    subsets: dict = field(default_factory=dict)

    def to_csv(self, path):
        from .io import write_csv, write_json

        write_csv(path, ["B_mT", "amplitude_sticks", "amplitude_convolved"],
                  zip(self.B, self.sticks, self.curve))
        write_json(str(path) + ".json", self.metadata)


def convolve_gaussian(stick_B, stick_amp, w: float, grid) -> np.ndarray:
    """Replace each stick by a unit-area Gaussian of standard deviation ``w`` (mT).

    For ``w == 0`` every stick is deposited on its nearest grid point.
    """
    stick_B = np.asarray(stick_B, dtype=float)
    stick_amp = np.asarray(stick_amp, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if w < 0:
        raise ValueError(f"convolution width must be >= 0, got {w}")
    if w == 0:
        out = np.zeros_like(grid)
        idx = np.abs(grid[:, None] - stick_B[None, :]).argmin(axis=0)
        np.add.at(out, idx, stick_amp)
        return out
    out = np.zeros_like(grid)
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * w)
    # chunk over sticks to bound memory
    for s in range(0, len(stick_B), 2048):
        d = grid[:, None] - stick_B[None, s:s + 2048]
        out += np.exp(-0.5 * (d / w) ** 2) @ stick_amp[s:s + 2048]
    return norm * out


def _subset_ladders(config: SweepConfig, params, variant, register, pure_levels, T_values):
    """Per-subset amplitude ladders, shape (n_T, n_B); misaligned averaged over azimuths."""
    grid = config.grid
    out = {}
    for subset in (P1Subset.PARALLEL, P1Subset.MISALIGNED):
        acc = np.zeros((len(T_values), len(grid)))
        orients = p1_orientations(subset, params.theta, config.azimuths)
        for zen, az in orients:
            ev = _FieldEvaluator(params.replace(p1_zenith=zen, p1_azimuth=az), variant, register, pure_levels)
            for i, b in enumerate(grid):
                acc[:, i] += ev.ladder(b, T_values)
        out[subset.value] = acc / len(orients)
    return out


def sweep(config: SweepConfig | None = None, params: ModelParams | None = None,
          variant: ModelVariant | str = ModelVariant.NV_CARBON, register: SpinRegister | None = None,
          pure_levels=CANONICAL_STATE) -> LinePattern:
    """Signed 13C pattern over a field grid, weighted over P1 subsets and convolved.

    With ``config.T_proj`` unset the window starts at ``T_start`` and is
    doubled until the weighted stick vector changes by less than
    ``tolerance`` (relative 2-norm) between doublings.
    """
    config = config or SweepConfig()
    params = params or ModelParams()
    register = register or default_sweep_register()
    wp, wm = config.weights
    if config.T_proj is not None:
        T_values = [config.T_proj]
    else:
        T_values = [config.T_start * 2 ** k for k in range(config.max_doublings + 1)]
    ladders = _subset_ladders(config, params, variant, register, pure_levels, T_values)
    total = wp * ladders["parallel"] + wm * ladders["misaligned"]

    k_sel, converged, changes = 0, config.T_proj is not None, []
    if config.T_proj is None:
        k_sel = len(T_values) - 1
        for k in range(1, len(T_values)):
            ref = np.linalg.norm(total[k - 1])
            change = np.linalg.norm(total[k] - total[k - 1]) / ref if ref > 0 else 0.0
            changes.append(float(change))
            if change < config.tolerance:
                k_sel, converged = k, True
                break
    grid = config.grid
    sticks = total[k_sel]
    curve = convolve_gaussian(grid, sticks, config.w, grid)
    meta = {
        "variant": ModelVariant(variant).value,
        "theta_deg": params.theta,
        "weights": {"parallel": wp, "misaligned": wm},
        "w_mT": config.w,
        "T_proj_us": T_values[k_sel],
        "T_proj_converged": converged,
        "relative_changes": changes,
        "azimuths_deg": list(config.azimuths),
        "register": list(register.labels),
    }
    return LinePattern(grid, sticks, curve, meta,
                       {k: v[k_sel] for k, v in ladders.items()})


# -- pattern analysis -------------------------------------------------------

def field_to_mhz(dB: float, params: ModelParams | None = None) -> float:
    """Frequency equivalent of a field interval, ``gamma_e * dB``."""
    return float(dB) * (params or ModelParams()).gamma_e


def window_integral(B, amp, center: float, half_width: float) -> float:
    """Trapezoid integral of ``|amp|`` over ``center +- half_width``."""
    B, amp = np.asarray(B), np.asarray(amp)
    m = np.abs(B - center) <= half_width
    if m.sum() < 2:
        return 0.0
    return float(np.trapezoid(np.abs(amp[m]), B[m]))


def window_extrema(B, amp, center: float, half_width: float):
    """``(B_at_max, max, B_at_min, min)`` of ``amp`` within the window."""
    B, amp = np.asarray(B), np.asarray(amp)
    m = np.abs(B - center) <= half_width
    b, a = B[m], amp[m]
    i, j = int(np.argmax(a)), int(np.argmin(a))
    return float(b[i]), float(a[i]), float(b[j]), float(a[j])


def sign_reversal(B, amp, center: float, half_width: float, floor: float = 1e-6) -> bool:
    """True when the dominant (largest ``|amp|``) values on the two sides of ``center`` have opposite signs."""
    B, amp = np.asarray(B), np.asarray(amp)
    left = amp[(B >= center - half_width) & (B < center)]
    right = amp[(B > center) & (B <= center + half_width)]
    if len(left) == 0 or len(right) == 0:
        return False
    a, b = left[np.argmax(np.abs(left))], right[np.argmax(np.abs(right))]
    return bool(abs(a) > floor and abs(b) > floor and np.sign(a) != np.sign(b))
