"""Closed-system propagation by exact diagonalization.

Hamiltonians are in MHz and times in microseconds, so the propagator is
``U(t) = exp(-2 pi i H t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .hamiltonian import C13, N_NV, N_P1, NV, P1, ModelParams, ModelVariant, canonical_register, hamiltonian_parts
from .spin import SpinRegister, is_hermitian, spin_vector

TWO_PI = 2.0 * np.pi

OBSERVABLES = ("P_S", "P_S1", "P_C", "P_J", "P_J1")
# label -> (observable name, normalization)
_OBSERVABLE_SPINS = {
    "P_S": (NV, 1.0),
    "P_S1": (P1, 2.0),
    "P_C": (C13, 2.0),
    "P_J": (N_NV, 1.0),
    "P_J1": (N_P1, 1.0),
}


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    register: SpinRegister

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.register.dim, self.register.dim):
            raise ValueError(f"density matrix shape {m.shape} does not match register dim {self.register.dim}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T)).min())

    def validate(self, tol: float = 1e-10) -> "DensityMatrix":
        if not is_hermitian(self.matrix, rtol=tol):
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace - 1.0) > tol:
            raise ValueError(f"density matrix trace {self.trace} != 1")
        lam = self.min_eigenvalue()
        if lam < -tol:
            raise ValueError(f"density matrix has negative eigenvalue {lam}")
        return self


@dataclass(frozen=True)
class InitialState:
    """Per-spin initial condition: a level ``m`` or ``None`` for maximally mixed."""

    levels: tuple[tuple[str, float | None], ...]

    @classmethod
    def from_mapping(cls, register: SpinRegister, pure: Mapping[str, float] | None = None) -> "InitialState":
        """Pure levels for the spins named in ``pure``; every other member thermal."""
        pure = dict(pure or {})
        unknown = set(pure) - set(register.labels)
        if unknown:
            raise ValueError(f"initial state names spins {sorted(unknown)} absent from register {register.labels}")
        return cls(tuple((lb, pure.get(lb)) for lb in register.labels))

    def as_dict(self) -> dict:
        return dict(self.levels)


def initial_state(spec: InitialState | Mapping[str, float | None], register: SpinRegister) -> DensityMatrix:
    """Product of pure projectors and ``1/d`` identities."""
    if not isinstance(spec, InitialState):
        spec = InitialState.from_mapping(register, {k: v for k, v in spec.items() if v is not None})
    labels = [lb for lb, _ in spec.levels]
    if labels != list(register.labels):
        raise ValueError(f"initial state covers {labels}, register is {list(register.labels)}")
    rho = np.ones((1, 1), dtype=complex)
    for sp, (_, m) in zip(register.spins, spec.levels):
        if m is None:
            factor = np.eye(sp.dim) / sp.dim
        else:
            factor = np.zeros((sp.dim, sp.dim))
            factor[sp.level_index(m), sp.level_index(m)] = 1.0
        rho = np.kron(rho, factor)
    return DensityMatrix(rho.astype(complex), register)


def observable_operators(register: SpinRegister) -> dict[str, np.ndarray]:
    """Polarization operators present on ``register`` (spin-1/2 ones carry the factor 2)."""
    ops = {}
    for name, (label, norm) in _OBSERVABLE_SPINS.items():
        if label in register:
            ops[name] = norm * spin_vector(register.index(label), register)[2]
    return ops


class Polarizations(NamedTuple):
    P_S: float
    P_S1: float
    P_C: float
    P_J: float
    P_J1: float


def polarizations(rho: DensityMatrix) -> Polarizations:
    """Spin polarizations; NaN for species missing from the register."""
    ops = observable_operators(rho.register)
    vals = {name: float(np.real(np.vdot(op.conj().T, rho.matrix))) for name, op in ops.items()}
    return Polarizations(*(vals.get(name, np.nan) for name in OBSERVABLES))


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.observables[name]

    def rows(self):
        names = [n for n in OBSERVABLES]
        nan = np.full(len(self.times), np.nan)
        cols = [self.observables.get(n, nan) for n in names]
        for k, t in enumerate(self.times):
            yield [t] + [c[k] for c in cols]

    def to_csv(self, path):
        from .io import write_csv
        write_csv(path, ["t_us", *OBSERVABLES], self.rows())


class Eigensystem:
    """Cached eigendecomposition of a Hermitian Hamiltonian."""

    def __init__(self, H: np.ndarray, check: bool = True):
        H = np.asarray(H, dtype=complex)
        if check and not is_hermitian(H, rtol=1e-10):
            raise ValueError("Hamiltonian is not Hermitian")
        self.energies, self.vectors = np.linalg.eigh(0.5 * (H + H.conj().T))

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T

    def propagate(self, rho: np.ndarray, t: float) -> np.ndarray:
        ph = np.exp(-1j * TWO_PI * self.energies * t)
        r = self.to_eigenbasis(rho)
        return self.from_eigenbasis(ph[:, None] * r * ph.conj()[None, :])

    def expectation_series(self, rho: np.ndarray, ops: Mapping[str, np.ndarray], times) -> dict[str, np.ndarray]:
        """``Tr(O rho(t))`` on a time grid without forming rho(t)."""
        times = np.asarray(times, dtype=float)
        r = self.to_eigenbasis(rho)
        ph = np.exp(-1j * TWO_PI * np.outer(times, self.energies))
        out = {}
        for name, op in ops.items():
            m = r * self.to_eigenbasis(op).T
            out[name] = np.real(np.einsum("tj,jk,tk->t", ph, m, ph.conj(), optimize=True))
        return out

    def time_average(self, rho: np.ndarray, op: np.ndarray, T: float | None) -> float:
        """Mean of ``Tr(O rho(t))`` over ``[0, T]``; ``T=None`` gives the infinite-time limit."""
        r = self.to_eigenbasis(rho)
        m = r * self.to_eigenbasis(op).T
        return time_average_weights(self.energies, m, T)


def time_average_weights(energies: np.ndarray, m: np.ndarray, T: float | None) -> float:
    dE = energies[:, None] - energies[None, :]
    if T is None:
        # degenerate pairs survive the infinite-time average
        return float(np.real(np.sum(m[np.abs(dE) < 1e-9])))
    x = TWO_PI * dE * T
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    f = np.where(small, 1.0 - 0.5j * x, (1.0 - np.exp(-1j * xs)) / (1j * xs))
    return float(np.real(np.sum(m * f)))


def evolve_unitary(rho0: DensityMatrix, H: np.ndarray, times: Sequence[float]) -> Trajectory:
    """Trajectory of the polarization observables under ``rho(t) = U rho0 U^dagger``.

    Raises ``ValueError`` for a non-Hermitian ``H``.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != rho0.matrix.shape:
        raise ValueError(f"Hamiltonian shape {H.shape} does not match state {rho0.matrix.shape}")
    eig = Eigensystem(H)
    times = np.asarray(times, dtype=float)
    obs = eig.expectation_series(rho0.matrix, observable_operators(rho0.register), times)
    return Trajectory(times, obs)


FIG5A_STATE = {NV: 0.0}
CANONICAL_STATE = {NV: 0.0, N_NV: 0.0}


@dataclass
class CouplingScanResult:
    coupling: float
    max_P_C: float
    max_P_S1: float
    B_at_max: float
    t_at_max: float


def unitary_limit_scan(couplings: Sequence[float], params: ModelParams | None = None, *,
                       register: SpinRegister | None = None, half_window: float = 0.3,
                       n_fields: int = 61, t_max: float = 200.0, n_times: int = 2001,
                       center: float | None = None, a_zx_ratio: float = 0.25,
                       pure_levels: Mapping[str, float] = FIG5A_STATE) -> list[CouplingScanResult]:
    """Extremal |P_C| and |P_S1| near the central matching field versus NV-13C coupling.

    For each axial coupling ``a`` the NV-13C tensor is ``zz = a``,
    ``zx = a_zx_ratio * a``. Fields span ``center +- half_window`` mT and
    times ``[0, t_max]`` us.
    """
    params = params or ModelParams()
    register = register or canonical_register()
    if center is None:
        from .spectra import MatchSpec, matching_field

        center = matching_field(MatchSpec(theta=params.theta), params)
    fields_ = np.linspace(center - half_window, center + half_window, n_fields)
    times = np.linspace(0.0, t_max, n_times)
    rho0 = initial_state(InitialState.from_mapping(register, pure_levels), register).matrix
    ops = observable_operators(register)
    ops = {k: ops[k] for k in ("P_C", "P_S1")}
    results = []
    for a in couplings:
        tensor = np.array([[0.0, 0.0, a_zx_ratio * a], [0.0, 0.0, 0.0], [a_zx_ratio * a, 0.0, a]])
        H0, H1 = hamiltonian_parts(params.replace(A_C=tensor), ModelVariant.NV_CARBON, register)
        best = CouplingScanResult(float(a), 0.0, 0.0, float(center), 0.0)
        for b in fields_:
            series = Eigensystem(H0 + b * H1, check=False).expectation_series(rho0, ops, times)
            pc = np.abs(series["P_C"])
            k = int(np.argmax(pc))
            if pc[k] > best.max_P_C:
                best.max_P_C, best.B_at_max, best.t_at_max = float(pc[k]), float(b), float(times[k])
            best.max_P_S1 = max(best.max_P_S1, float(np.abs(series["P_S1"]).max()))
        results.append(best)
    return results


@dataclass
class TransferResult:
    B: float
    max_abs_P_C: float
    t_transfer: float
    sign: float


def smoothed(series: np.ndarray, times: np.ndarray, window: float) -> np.ndarray:
    """Centered boxcar average over ``window`` us (edges use the available samples)."""
    dt = times[1] - times[0]
    k = max(int(round(window / dt)), 1)
    kern = np.ones(k)
    num = np.convolve(series, kern, mode="same")
    den = np.convolve(np.ones_like(series), kern, mode="same")
    return num / den


def first_envelope_maximum(series: np.ndarray, times: np.ndarray, window: float = 2.0,
                           fraction: float = 0.5) -> float:
    """Time of the first local maximum of the smoothed ``|series|`` above ``fraction`` of its peak."""
    env = np.abs(smoothed(series, times, window))
    k = int(np.nonzero(env >= fraction * env.max())[0][0])
    while k + 1 < len(env) and env[k + 1] >= env[k]:
        k += 1
    return float(times[k])


def transfer_time(params: ModelParams, variant: ModelVariant | str, fields_: Sequence[float], *,
                  register: SpinRegister | None = None, t_max: float = 1000.0, n_times: int = 20001,
                  pure_levels: Mapping[str, float] = CANONICAL_STATE, window: float = 2.0) -> TransferResult:
    """Slow 13C transfer time at the field of largest ``|P_C|``.

    The time is the first maximum of the boxcar-smoothed ``|P_C(t)|`` (fast
    hyperfine wiggles removed) that exceeds half its window maximum.
    """
    register = register or canonical_register(drop=(N_NV,))
    H0, H1 = hamiltonian_parts(params, variant, register)
    pure = {k: v for k, v in pure_levels.items() if k in register}
    rho0 = initial_state(InitialState.from_mapping(register, pure), register).matrix
    op = {"P_C": observable_operators(register)["P_C"]}
    times = np.linspace(0.0, t_max, n_times)
    best = None
    for b in fields_:
        s = Eigensystem(H0 + b * H1, check=False).expectation_series(rho0, op, times)["P_C"]
        m = float(np.abs(s).max())
        if best is None or m > best[1]:
            best = (float(b), m, s)
    b, m, s = best
    k = int(np.argmax(np.abs(s)))
    return TransferResult(b, m, first_envelope_maximum(s, times, window), float(np.sign(s[k])))
