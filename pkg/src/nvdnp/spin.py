"""Spin operators, composite registers and 3x3 tensor helpers.

All operators are dense ``complex128`` numpy arrays. Single-spin bases are
ordered by descending projection, ``|+s>, |s-1>, ..., |-s>``, and composite
spaces use the Kronecker order of the register.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import prod
from typing import Sequence

import numpy as np

SUPPORTED_SPINS = (0.5, 1.0)


@dataclass(frozen=True)
class SpinSpecies:
    """One member of a spin register.

    ``gamma`` is in MHz/mT and only carried as metadata; the Zeeman sign
    convention is applied by :mod:`nvdnp.hamiltonian`.
    """

    label: str
    s: float
    gamma: float = 0.0

    def __post_init__(self):
        if float(self.s) not in SUPPORTED_SPINS:
            raise ValueError(f"unsupported spin s={self.s!r} for {self.label!r}; use 1/2 or 1")
        object.__setattr__(self, "s", float(self.s))

    @property
    def dim(self) -> int:
        return int(round(2 * self.s + 1))

    @property
    def levels(self) -> tuple[float, ...]:
        """Projections m in basis order."""
        return tuple(self.s - k for k in range(self.dim))

    def level_index(self, m: float) -> int:
        for k, mk in enumerate(self.levels):
            if abs(mk - m) < 1e-9:
                return k
        raise ValueError(f"level m={m} outside multiplicity of {self.label!r} (s={self.s})")


@dataclass(frozen=True)
class SpinRegister:
    spins: tuple[SpinSpecies, ...]

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))
        labels = [sp.label for sp in self.spins]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate spin labels in register: {labels}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(sp.dim for sp in self.spins)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sp.label for sp in self.spins)

    def __len__(self):
        return len(self.spins)

    def __contains__(self, label):
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"spin {label!r} not in register {self.labels}") from None

    def without(self, *labels: str) -> "SpinRegister":
        for lb in labels:
            self.index(lb)
        return SpinRegister(tuple(sp for sp in self.spins if sp.label not in labels))


@lru_cache(maxsize=None)
def _spin_matrices(s: float):
    dim = int(round(2 * s + 1))
    m = s - np.arange(dim)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)); row index k-1 holds m+1
    plus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        plus[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    minus = plus.conj().T
    sx = 0.5 * (plus + minus)
    sy = -0.5j * (plus - minus)
    sz = np.diag(m).astype(complex)
    for a in (sx, sy, sz):
        a.setflags(write=False)
    return sx, sy, sz


def spin_matrices(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Sx, Sy, Sz)`` for spin ``s`` in units of hbar.

    Raises
    ------
    ValueError
        If ``s`` is not 1/2 or 1.
    """
    s = float(s)
    if s not in SUPPORTED_SPINS:
        raise ValueError(f"unsupported spin s={s!r}; use 1/2 or 1")
    return tuple(a.copy() for a in _spin_matrices(s))


def raising(s: float) -> np.ndarray:
    sx, sy, _ = spin_matrices(s)
    return sx + 1j * sy


def lowering(s: float) -> np.ndarray:
    sx, sy, _ = spin_matrices(s)
    return sx - 1j * sy


def embed(op: np.ndarray, index: int, register: SpinRegister) -> np.ndarray:
    """Lift a single-spin operator to the full register: 1 x ... x op x ... x 1."""
    op = np.asarray(op, dtype=complex)
    if not 0 <= index < len(register):
        raise IndexError(f"spin index {index} out of range for register of {len(register)} spins")
    d = register.dims[index]
    if op.shape != (d, d):
        raise ValueError(
            f"operator shape {op.shape} does not match spin {register.labels[index]!r} (dim {d})"
        )
    left = prod(register.dims[:index])
    right = prod(register.dims[index + 1:])
    out = np.kron(np.eye(left), op) if left > 1 else op
    if right > 1:
        out = np.kron(out, np.eye(right))
    return np.array(out, dtype=complex)


def spin_vector(index: int, register: SpinRegister) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embedded ``(Sx, Sy, Sz)`` of register member ``index``."""
    s = register.spins[index].s
    return tuple(embed(a, index, register) for a in _spin_matrices(s))


def coupling_term(ops_a: Sequence[np.ndarray], index_a: int, tensor, ops_b: Sequence[np.ndarray],
                  index_b: int, register: SpinRegister) -> np.ndarray:
    """Bilinear coupling ``sum_ab T[a, b] A_a B_b`` between two register sites.

    ``ops_a`` and ``ops_b`` are the single-spin (x, y, z) triples.
    """
    if index_a == index_b:
        raise ValueError(f"coupling requires two distinct sites, got index {index_a} twice")
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (3, 3):
        raise ValueError(f"coupling tensor must be 3x3, got {tensor.shape}")
    ea = [embed(a, index_a, register) for a in ops_a]
    eb = [embed(b, index_b, register) for b in ops_b]
    out = np.zeros((register.dim, register.dim), dtype=complex)
    for i in range(3):
        for j in range(3):
            if tensor[i, j] != 0.0:
                out += tensor[i, j] * (ea[i] @ eb[j])
    return out


def rotation_matrix(zenith: float, azimuth: float) -> np.ndarray:
    """Rotation taking the z axis to the direction (zenith, azimuth), in degrees.

    ``R = Rz(azimuth) @ Ry(zenith)``.
    """
    t, p = np.radians(zenith), np.radians(azimuth)
    ry = np.array([[np.cos(t), 0.0, np.sin(t)], [0.0, 1.0, 0.0], [-np.sin(t), 0.0, np.cos(t)]])
    rz = np.array([[np.cos(p), -np.sin(p), 0.0], [np.sin(p), np.cos(p), 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry


def rotate_tensor(tensor, zenith: float, azimuth: float = 0.0) -> np.ndarray:
    r = rotation_matrix(zenith, azimuth)
    return r @ np.asarray(tensor, dtype=float) @ r.T


def direction(zenith: float, azimuth: float = 0.0) -> np.ndarray:
    """Unit vector at the given polar angles (degrees)."""
    return rotation_matrix(zenith, azimuth)[:, 2]


def axial_tensor(parallel: float, perpendicular: float) -> np.ndarray:
    return np.diag([perpendicular, perpendicular, parallel]).astype(float)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(op: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.abs(op).max(), 1.0)
    return bool(np.abs(op - op.conj().T).max() <= rtol * scale)
