"""Ground-state Hamiltonian of the NV / P1 / 13C / 14N cluster.

Energies are in MHz (frequencies, h = 1), fields in mT, angles in degrees.
Electron Zeeman terms enter as ``+gamma_e B n.S`` so that the NV
``|0> <-> |-1>`` transition frequency falls as ``D - gamma_e B``; nuclear
Zeeman terms enter as ``-gamma B n.I``.

The canonical register order is ``NV, N, P1, N1, C``: NV electron (S=1),
14N at the NV (J=1), P1 electron (S'=1/2), 14N at the P1 (J'=1) and the
13C (I=1/2).  Any member may be dropped; terms that involve a dropped spin
are omitted.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .spin import (
    SpinRegister,
    SpinSpecies,
    axial_tensor,
    coupling_term,
    direction,
    embed,
    rotate_tensor,
    spin_matrices,
    spin_vector,
)

NV, N_NV, P1, N_P1, C13 = "NV", "N", "P1", "N1", "C"
CANONICAL_ORDER = (NV, N_NV, P1, N_P1, C13)

# angle between two distinct <111> axes
MISALIGNED_ZENITH = float(np.degrees(np.arccos(1.0 / 3.0)))


class ModelVariant(str, enum.Enum):
    NV_CARBON = "nv_carbon"
    P1_CARBON = "p1_carbon"


class DipolarForm(str, enum.Enum):
    ISING = "ising"
    FLIPFLOP = "flipflop"
    POINT_DIPOLE = "point_dipole"


def canonical_register(drop=(), gamma_e=28.025, gamma_C=0.01071, gamma_N=0.003077) -> SpinRegister:
    """Five-spin register in canonical order, minus the labels in ``drop``."""
    spins = (
        SpinSpecies(NV, 1.0, gamma_e),
        SpinSpecies(N_NV, 1.0, gamma_N),
        SpinSpecies(P1, 0.5, gamma_e),
        SpinSpecies(N_P1, 1.0, gamma_N),
        SpinSpecies(C13, 0.5, gamma_C),
    )
    unknown = set(drop) - set(CANONICAL_ORDER)
    if unknown:
        raise ValueError(f"cannot drop unknown spins {sorted(unknown)}; valid: {CANONICAL_ORDER}")
    return SpinRegister(tuple(sp for sp in spins if sp.label not in drop))


def nv_carbon_tensor(a_zz: float, a_zx: float | None = None) -> np.ndarray:
    """Axial-plus-pseudosecular NV-13C hyperfine; ``a_zx`` defaults to ``a_zz / 4``."""
    if a_zx is None:
        a_zx = a_zz / 4.0
    return np.array([[0.0, 0.0, a_zx], [0.0, 0.0, 0.0], [a_zx, 0.0, a_zz]])


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Physical constants and couplings of the cluster Hamiltonian."""

    D: float = 2870.0
    gamma_e: float = 28.025
    gamma_C: float = 0.01071
    gamma_N: float = 0.003077
    Q_nv: float = -4.95
    Q_p1: float = -3.97
    A_C: np.ndarray = field(default_factory=lambda: nv_carbon_tensor(4.0))
    A_N: np.ndarray = field(default_factory=lambda: axial_tensor(-2.16, 0.0))
    A_N1: np.ndarray = field(default_factory=lambda: axial_tensor(114.0, 81.3))
    A_C1: np.ndarray = field(default_factory=lambda: np.array(
        [[10.0, 0.0, 4.0], [0.0, 10.0, 0.0], [4.0, 0.0, 14.0]]))
    d_nvp1: float = 0.5
    nvp1_form: str = DipolarForm.POINT_DIPOLE.value
    nvp1_zenith: float = 60.0
    nvp1_azimuth: float = 0.0
    B: float = 51.2
    theta: float = 0.0
    p1_zenith: float = 0.0
    p1_azimuth: float = 0.0
    deltaT: float = 0.0
    dD_dT: float = -0.076

    def __post_init__(self):
        for f in fields(self):
            if f.name.startswith("A_"):
                t = np.array(getattr(self, f.name), dtype=float)
                if t.shape != (3, 3):
                    raise ValueError(f"{f.name} must be 3x3, got shape {t.shape}")
                if not np.allclose(t, t.T, atol=1e-12):
                    raise ValueError(f"{f.name} must be symmetric")
                t.setflags(write=False)
                object.__setattr__(self, f.name, t)
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")
        if not 0.0 <= self.theta <= 90.0:
            raise ValueError(f"theta must lie in [0, 90] deg, got {self.theta}")
        if self.D <= 0:
            raise ValueError(f"D must be > 0, got {self.D}")
        if self.d_nvp1 < 0:
            raise ValueError(f"d_nvp1 must be >= 0, got {self.d_nvp1}")
        DipolarForm(self.nvp1_form)

    @property
    def D_eff(self) -> float:
        return self.D + self.dD_dT * self.deltaT

    @property
    def field_direction(self) -> np.ndarray:
        return np.array([np.sin(np.radians(self.theta)), 0.0, np.cos(np.radians(self.theta))])

    @property
    def p1_axis(self) -> np.ndarray:
        return direction(self.p1_zenith, self.p1_azimuth)

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _zeeman(idx, register, gamma_signed, B, n):
    sx, sy, sz = spin_vector(idx, register)
    return gamma_signed * B * (n[0] * sx + n[1] * sy + n[2] * sz)


def _axis_square(s, axis):
    sx, sy, sz = spin_matrices(s)
    sn = axis[0] * sx + axis[1] * sy + axis[2] * sz
    return sn @ sn


def nv_p1_dipolar(d_nvp1: float, form: str | DipolarForm, register: SpinRegister,
                  zenith: float = 90.0, azimuth: float = 0.0) -> np.ndarray:
    """NV-P1 electron-electron coupling.

    ``ising``: ``d Sz S'z``; ``flipflop``: ``d (Sz S'z - (S+ S'- + S- S'+)/4)``;
    ``point_dipole``: ``d (S.S' - 3 (S.r)(S'.r))`` with the inter-defect unit
    vector ``r`` at (``zenith``, ``azimuth``) in the NV frame.
    """
    form = DipolarForm(form)
    i, j = register.index(NV), register.index(P1)
    sa = spin_matrices(1.0)
    sb = spin_matrices(0.5)
    if form is DipolarForm.ISING:
        tensor = np.diag([0.0, 0.0, d_nvp1])
    elif form is DipolarForm.FLIPFLOP:
        # S+S'- + S-S'+ = 2 (SxS'x + SyS'y)
        tensor = np.diag([-0.5 * d_nvp1, -0.5 * d_nvp1, d_nvp1])
    else:
        r = direction(zenith, azimuth)
        tensor = d_nvp1 * (np.eye(3) - 3.0 * np.outer(r, r))
    return coupling_term(sa, i, tensor, sb, j, register)


def hamiltonian_parts(params: ModelParams, variant: ModelVariant | str = ModelVariant.NV_CARBON,
                      register: SpinRegister | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Split the Hamiltonian as ``H(B) = H0 + B * H1`` (field direction fixed).

    Field sweeps rebuild only the scalar combination, not the Kronecker sums.
    """
    variant = ModelVariant(variant)
    if register is None:
        register = canonical_register()
    labels = set(register.labels)
    for sp in register.spins:
        if sp.label not in CANONICAL_ORDER:
            raise ValueError(f"unknown spin label {sp.label!r}; expected one of {CANONICAL_ORDER}")
    if NV not in labels:
        raise ValueError("register must contain the NV electron spin")
    if variant is ModelVariant.P1_CARBON and C13 in labels and P1 not in labels:
        raise ValueError("P1-coupled carbon variant needs the P1 electron in the register")

    p = params
    n = p.field_direction
    dim = register.dim
    H0 = np.zeros((dim, dim), dtype=complex)
    H1 = np.zeros((dim, dim), dtype=complex)

    inv = register.index(NV)
    H0 += p.D_eff * embed(_axis_square(1.0, (0.0, 0.0, 1.0)), inv, register)
    H1 += _zeeman(inv, register, p.gamma_e, 1.0, n)
    if P1 in labels:
        H1 += _zeeman(register.index(P1), register, p.gamma_e, 1.0, n)
    if C13 in labels:
        H1 += _zeeman(register.index(C13), register, -p.gamma_C, 1.0, n)
    if N_NV in labels:
        k = register.index(N_NV)
        H1 += _zeeman(k, register, -p.gamma_N, 1.0, n)
        H0 += p.Q_nv * embed(_axis_square(1.0, (0.0, 0.0, 1.0)), k, register)
    if N_P1 in labels:
        k = register.index(N_P1)
        H1 += _zeeman(k, register, -p.gamma_N, 1.0, n)
        H0 += p.Q_p1 * embed(_axis_square(1.0, p.p1_axis), k, register)

    s1, s12 = spin_matrices(1.0), spin_matrices(0.5)
    if C13 in labels:
        ic = register.index(C13)
        if variant is ModelVariant.NV_CARBON:
            H0 += coupling_term(s1, inv, p.A_C, s12, ic, register)
        else:
            H0 += coupling_term(s12, register.index(P1), p.A_C1, s12, ic, register)
    if N_NV in labels:
        H0 += coupling_term(s1, inv, p.A_N, s1, register.index(N_NV), register)
    if P1 in labels and N_P1 in labels:
        a_n1 = rotate_tensor(p.A_N1, p.p1_zenith, p.p1_azimuth)
        H0 += coupling_term(s12, register.index(P1), a_n1, s1, register.index(N_P1), register)
    if P1 in labels and p.d_nvp1 != 0.0:
        H0 += nv_p1_dipolar(p.d_nvp1, p.nvp1_form, register, p.nvp1_zenith, p.nvp1_azimuth)
    return 0.5 * (H0 + H0.conj().T), 0.5 * (H1 + H1.conj().T)


def build_hamiltonian(params: ModelParams, variant: ModelVariant | str = ModelVariant.NV_CARBON,
                      register: SpinRegister | None = None) -> np.ndarray:
    """Assemble the cluster Hamiltonian (MHz) on ``register``.

    Raises ``ValueError`` when the register cannot host the requested variant.
    """
    H0, H1 = hamiltonian_parts(params, variant, register)
    return H0 + params.B * H1


def nv_block_hamiltonian(params: ModelParams) -> np.ndarray:
    """Bare 3x3 NV electron Hamiltonian (crystal field + Zeeman)."""
    sx, sy, sz = spin_matrices(1.0)
    n = params.field_direction
    return params.D_eff * sz @ sz + params.gamma_e * params.B * (n[0] * sx + n[2] * sz)


def p1_block_hamiltonian(params: ModelParams) -> np.ndarray:
    """Bare 6x6 P1 electron + 14N Hamiltonian in the (S', J') product basis."""
    reg = canonical_register(drop=(NV, N_NV, C13))
    n = params.field_direction
    H = _zeeman(0, reg, params.gamma_e, params.B, n)
    H += _zeeman(1, reg, -params.gamma_N, params.B, n)
    H += params.Q_p1 * embed(_axis_square(1.0, params.p1_axis), 1, reg)
    a_n1 = rotate_tensor(params.A_N1, params.p1_zenith, params.p1_azimuth)
    H += coupling_term(spin_matrices(0.5), 0, a_n1, spin_matrices(1.0), 1, reg)
    return 0.5 * (H + H.conj().T)
