"""Lindblad master equation on vectorized density matrices.

Vectorization is column stacking, ``vec(A X B) = (B^T kron A) vec(X)``, so

    L = -2 pi i (1 kron H - H^T kron 1)
        + sum_k [ conj(c_k) kron c_k - 1/2 1 kron c_k^+ c_k - 1/2 (c_k^+ c_k)^T kron 1 ]

with ``H`` in MHz and collapse rates in 1/us (rates are not multiplied by
2 pi).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hamiltonian import C13, N_NV, N_P1, NV, P1, ModelParams, ModelVariant, canonical_register, build_hamiltonian
from .spin import SpinRegister, is_hermitian
from .unitary import TWO_PI, DensityMatrix, Trajectory, observable_operators


class SolverError(RuntimeError):
    """Numerical failure with a diagnostics payload."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class CollapseSpec:
    """``sqrt(rate) |to_level><from_level|`` acting on one register member."""

    rate: float
    from_level: float
    to_level: float
    spin: str

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValueError(f"collapse rate must be finite and >= 0, got {self.rate}")

    def operator(self, register: SpinRegister) -> sp.csr_matrix:
        k = register.index(self.spin)
        sp_ = register.spins[k]
        local = sp.coo_matrix(([math.sqrt(self.rate)], ([sp_.level_index(self.to_level)],
                                                         [sp_.level_index(self.from_level)])),
                              shape=(sp_.dim, sp_.dim))
        left = int(np.prod(register.dims[:k], dtype=int))
        right = int(np.prod(register.dims[k + 1:], dtype=int))
        return sp.kron(sp.kron(sp.identity(left), local), sp.identity(right), format="csr").astype(complex)


@dataclass(frozen=True)
class RelaxationTimes:
    """Spin-lattice relaxation times in microseconds (``math.inf`` disables a channel)."""

    T1_NV: float = math.inf
    T1_P1: float = math.inf
    T1_C: float = math.inf
    T1_N: float = math.inf
    T1_N1: float = math.inf

    def __post_init__(self):
        for name, v in self.as_dict().items():
            if not v > 0:
                raise ValueError(f"{name} must be > 0 us, got {v}")

    def as_dict(self) -> dict:
        return {"T1_NV": self.T1_NV, "T1_P1": self.T1_P1, "T1_C": self.T1_C, "T1_N": self.T1_N, "T1_N1": self.T1_N1}

    def by_spin(self) -> dict:
        return {NV: self.T1_NV, P1: self.T1_P1, C13: self.T1_C, N_NV: self.T1_N, N_P1: self.T1_N1}


# 13C 10 s, NV 1 ms, P1 100 us, both nitrogens 100 ms
FIG5C_T1 = RelaxationTimes(T1_NV=1e3, T1_P1=100.0, T1_C=1e7, T1_N=1e5, T1_N1=1e5)


def pump_operators(R: float, register: SpinRegister | None = None) -> list[CollapseSpec]:
    """Optical repumping of the NV into ``|0>`` from ``|+1>`` and ``|-1>`` at rate ``R`` (MHz)."""
    if R < 0:
        raise ValueError(f"pump rate must be >= 0, got {R}")
    if register is not None and NV not in register:
        raise ValueError("pumping needs the NV in the register")
    return [CollapseSpec(R, 1.0, 0.0, NV), CollapseSpec(R, -1.0, 0.0, NV)]


def t1_operators(times: RelaxationTimes, register: SpinRegister | None = None) -> list[CollapseSpec]:
    """Two-way transfers at ``1/T1`` between every ordered level pair of each spin.

    Channels with infinite ``T1`` and spins absent from ``register`` are omitted.
    """
    register = register or canonical_register()
    out = []
    t1 = times.by_spin()
    for spin in register.spins:
        T = t1.get(spin.label, math.inf)
        if math.isinf(T):
            continue
        for m in spin.levels:
            for n in spin.levels:
                if m != n:
                    out.append(CollapseSpec(1.0 / T, n, m, spin.label))
    return out


def _vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def _unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


class Liouvillian:
    """Sparse superoperator acting on column-stacked density matrices."""

    def __init__(self, matrix: sp.spmatrix, register: SpinRegister):
        self.matrix = sp.csr_matrix(matrix)
        self.register = register
        self.dim = register.dim
        if self.matrix.shape != (self.dim ** 2, self.dim ** 2):
            raise ValueError(f"Liouvillian shape {self.matrix.shape} does not match register dim {self.dim}")

    def __matmul__(self, v):
        return self.matrix @ v

    def norm(self) -> float:
        return float(spla.norm(self.matrix, 1))

    def trace_row(self) -> np.ndarray:
        return _vec(np.eye(self.dim)).real

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return _unvec(self.matrix @ _vec(rho), self.dim)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_liouvillian(H: np.ndarray, collapses: Sequence[CollapseSpec], register: SpinRegister,
                      tol: float = 1e-14) -> Liouvillian:
    """Assemble the GKSL generator for Hamiltonian ``H`` (MHz) and ``collapses``.

    Raises ``ValueError`` if ``H`` is not Hermitian or mismatches the register.
    """
    H = np.asarray(H, dtype=complex)
    dim = register.dim
    if H.shape != (dim, dim):
        raise ValueError(f"Hamiltonian shape {H.shape} does not match register dim {dim}")
    if not is_hermitian(H, rtol=1e-10):
        raise ValueError("Hamiltonian is not Hermitian")
    Hs = sp.csr_matrix(np.where(np.abs(H) > tol * max(np.abs(H).max(), 1.0), H, 0.0))
    eye = sp.identity(dim, dtype=complex, format="csr")
    L = -1j * TWO_PI * (sp.kron(eye, Hs) - sp.kron(Hs.T, eye))
    for spec in collapses:
        if spec.rate == 0.0:
            continue
        c = spec.operator(register)
        cdc = (c.conj().T @ c).tocsr()
        L = L + sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    return Liouvillian(L.tocsr(), register)


def model_liouvillian(params: ModelParams, R: float, times: RelaxationTimes = FIG5C_T1,
                      register: SpinRegister | None = None,
                      variant: ModelVariant | str = ModelVariant.NV_CARBON) -> Liouvillian:
    register = register or canonical_register()
    H = build_hamiltonian(params, variant, register)
    return build_liouvillian(H, pump_operators(R, register) + t1_operators(times, register), register)


# -- time evolution ---------------------------------------------------------

def _state_checks(rho: np.ndarray):
    herm = 0.5 * (rho + rho.conj().T)
    return float(np.real(np.trace(rho))), float(np.linalg.eigvalsh(herm).min())


def _trace_preserving_expm(Ld: np.ndarray, dt: float, trace_row: np.ndarray, defects: list) -> np.ndarray:
    """``expm(L dt)`` with its roundoff trace defect removed by a rank-one correction.

    Scaling and squaring loses about ``eps * ||L dt||`` of the exact
    conservation ``tr . exp(L dt) = tr``; over many steps that drift passes
    1e-9 for this stiff generator, so the defect is projected out.
    """
    P = sla.expm(Ld * dt)
    err = trace_row - trace_row @ P
    defects.append(float(np.abs(err).max()))
    u = trace_row / trace_row.sum()
    return P + np.outer(u, err)


def evolve_lindblad(rho0: DensityMatrix, L: Liouvillian, times: Sequence[float], *,
                    method: str = "auto", dense_limit: int = 36, tol_trace: float = 1e-9,
                    tol_positive: float = 1e-8, check: bool = True) -> Trajectory:
    """Observables of ``rho(t) = exp(L t) rho0`` on ``times`` (us, non-decreasing, starting >= 0).

    ``method="dense"`` exponentiates the full superoperator once per distinct
    step (registers up to ``dense_limit``); ``"krylov"`` applies the sparse
    exponential action.  ``SolverError`` is raised if trace or positivity
    drift past tolerance.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-D grid")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-decreasing and start at t >= 0")
    if rho0.register.dim != L.dim:
        raise ValueError("state and Liouvillian act on different registers")
    if method == "auto":
        method = "dense" if L.dim <= dense_limit else "krylov"
    if method not in ("dense", "krylov"):
        raise ValueError(f"unknown propagation method {method!r}")

    ops = observable_operators(rho0.register)
    obs = {name: np.empty(len(times)) for name in ops}
    traces = np.empty(len(times))
    min_eigs = np.empty(len(times))
    v = _vec(rho0.matrix).astype(complex)
    t_prev = 0.0
    cache: dict = {}
    Ld = L.dense() if method == "dense" else None
    trace_row = L.trace_row()
    defects: list = []
    gen_defect = float(np.abs(trace_row @ L.matrix).max())
    if gen_defect > 1e-12 * max(L.norm(), 1.0):
        raise SolverError("generator does not conserve the trace", generator_trace_defect=gen_defect)
    for k, t in enumerate(times):
        dt = t - t_prev
        if dt > 0:
            if method == "dense":
                key = round(dt, 12)
                if key not in cache:
                    cache[key] = _trace_preserving_expm(Ld, dt, trace_row, defects)
                v = cache[key] @ v
            else:
                v = spla.expm_multiply(L.matrix * dt, v)
        t_prev = t
        rho = _unvec(v, L.dim)
        rho = 0.5 * (rho + rho.conj().T)
        for name, op in ops.items():
            obs[name][k] = float(np.real(np.vdot(op.conj().T, rho)))
        traces[k], min_eigs[k] = _state_checks(rho)
        if check and (abs(traces[k] - 1.0) > tol_trace or min_eigs[k] < -tol_positive):
            raise SolverError(f"propagation lost trace or positivity at t={t} us",
                              t=float(t), trace=float(traces[k]), min_eigenvalue=float(min_eigs[k]),
                              method=method)
    diag = {"method": method, "max_trace_error": float(np.max(np.abs(traces - 1.0))),
            "propagator_trace_defect": max(defects, default=0.0), "generator_trace_defect": gen_defect,
            "min_eigenvalue": float(min_eigs.min()), "trace": traces, "min_eig": min_eigs}
    return Trajectory(times, obs, diag)


# -- stationary state -------------------------------------------------------

@dataclass
class SteadyState:
    rho: DensityMatrix
    residual: float
    relative_residual: float
    kernel_dimension: int | None
    seconds: float
    diagnostics: dict = field(default_factory=dict)


def spectral_norm(A) -> float:
    """Largest singular value of a sparse matrix."""
    if A.shape[0] <= 1500:
        return float(sla.svdvals(A.toarray())[0])
    return float(spla.svds(A, k=1, return_singular_vectors=False, tol=1e-6)[0])


def kernel_dimension(L: Liouvillian, tol: float = 1e-13) -> int:
    """Number of singular values of the dense ``L`` below ``tol * ||L||_2`` (small registers only)."""
    s = sla.svdvals(L.dense())
    return int(np.sum(s <= tol * s[0]))


def steady_state(L: Liouvillian, *, check_kernel: bool | None = None, kernel_limit: int = 36,
                 kernel_tol: float = 1e-13, refine: int = 3, tol_residual: float = 1e-9,
                 tol_positive: float = 1e-8) -> SteadyState:
    """Stationary state from the bordered system where one diagonal row of ``L`` is replaced by ``Tr``.

    The kernel dimension is checked by dense SVD for registers up to
    ``kernel_limit`` states.  Larger registers rely on the bordered solve,
    which becomes singular (and raises) when the kernel is degenerate.
    Raises ``SolverError`` naming the kernel dimension or failed residual.
    """
    t0 = time.perf_counter()
    dim = L.dim
    if check_kernel is None:
        check_kernel = dim <= kernel_limit
    kdim = None
    if check_kernel:
        kdim = kernel_dimension(L, kernel_tol)
        if kdim != 1:
            raise SolverError(f"Liouvillian kernel has dimension {kdim}; stationary state is not unique",
                              kernel_dimension=kdim)
    n = dim * dim
    trace_row = L.trace_row()
    # replace the row of rho_00 with the trace functional
    A = L.matrix.tolil(copy=True)
    A[0, :] = trace_row
    A = A.tocsc()
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0
    try:
        with np.errstate(all="raise"):
            lu = spla.splu(A)
    except (RuntimeError, FloatingPointError) as exc:
        raise SolverError(f"bordered steady-state system is singular ({exc}); kernel is degenerate",
                          kernel_dimension=kdim) from exc
    x = lu.solve(b)
    for _ in range(refine):
        x = x + lu.solve(b - A @ x)
    rho = _unvec(x, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.real(np.trace(rho))
    vec = _vec(rho)
    residual = float(np.linalg.norm(L.matrix @ vec))
    norm = spectral_norm(L.matrix)
    rel = residual / norm
    trace, lam = _state_checks(rho)
    diag = {"trace": trace, "min_eigenvalue": lam, "norm_2": norm}
    if not np.all(np.isfinite(vec)) or rel > tol_residual:
        raise SolverError(f"steady-state residual {rel:.3e} exceeds {tol_residual:.1e} relative",
                          kernel_dimension=kdim, residual=residual, relative_residual=rel)
    if lam < -tol_positive:
        raise SolverError(f"steady state has negative eigenvalue {lam:.3e}", kernel_dimension=kdim,
                          min_eigenvalue=lam)
    return SteadyState(DensityMatrix(rho, L.register), residual, rel, kdim, time.perf_counter() - t0, diag)


@dataclass
class PumpScanPoint:
    R: float
    P_C: float
    P_S1: float
    P_S: float
    residual: float
    seconds: float


def pump_rate_scan(R_values: Sequence[float], params: ModelParams | None = None,
                   times: RelaxationTimes = FIG5C_T1, register: SpinRegister | None = None,
                   variant: ModelVariant | str = ModelVariant.NV_CARBON) -> list[PumpScanPoint]:
    """Steady-state polarizations versus NV pumping rate ``R`` (MHz) at ``params.B``."""
    params = params or ModelParams()
    register = register or canonical_register(drop=(N_NV,))
    H = build_hamiltonian(params, variant, register)
    t1 = t1_operators(times, register)
    out = []
    for R in R_values:
        L = build_liouvillian(H, pump_operators(R, register) + t1, register)
        ss = steady_state(L)
        pol = _pols(ss.rho)
        out.append(PumpScanPoint(float(R), pol["P_C"], pol["P_S1"], pol["P_S"], ss.relative_residual, ss.seconds))
    return out


def _pols(rho: DensityMatrix) -> dict:
    ops = observable_operators(rho.register)
    return {name: float(np.real(np.vdot(op.conj().T, rho.matrix))) for name, op in ops.items()}


def write_pump_scan(path, points: Sequence[PumpScanPoint]):
    from .io import write_csv

    write_csv(path, ["R_MHz", "P_C", "P_S1", "P_S", "residual"],
              ([p.R, p.P_C, p.P_S1, p.P_S, p.residual] for p in points))


# -- conserved nuclear projections ------------------------------------------

def projection_sectors(H: np.ndarray, register: SpinRegister, label: str, tol: float = 1e-12):
    """Split ``H`` into blocks of fixed ``m`` for spin ``label``.

    Valid when ``H`` has no matrix elements between different projections of
    that spin (axial hyperfine, field along its quantization axis).  Returns
    ``(sub_register, [(m, H_m), ...])``; raises ``ValueError`` otherwise.
    """
    k = register.index(label)
    idx = np.arange(register.dim).reshape(register.dims)
    sub = register.without(label)
    blocks = []
    for n, m in enumerate(register.spins[k].levels):
        sel = np.take(idx, n, axis=k).reshape(-1)
        rest = np.setdiff1d(np.arange(register.dim), sel)
        leak = np.abs(H[np.ix_(sel, rest)]).max() if len(rest) else 0.0
        if leak > tol * max(np.abs(H).max(), 1.0):
            raise ValueError(f"Hamiltonian mixes projections of {label!r} (element {leak:.3e})")
        blocks.append((m, H[np.ix_(sel, sel)]))
    return sub, blocks


def evolve_lindblad_sectors(H: np.ndarray, collapses: Sequence[CollapseSpec], register: SpinRegister,
                            label: str, pure_levels: dict, times: Sequence[float], **kw) -> Trajectory:
    """Lindblad evolution with a conserved, never-relaxed spin ``label`` handled sector by sector.

    The spin's initial state is the level in ``pure_levels`` or, if absent,
    maximally mixed; observables are the projection-weighted sum of the
    sector trajectories.  Exact whenever :func:`projection_sectors` applies
    and no collapse acts on ``label``.
    """
    from .unitary import InitialState, initial_state

    if any(c.spin == label and c.rate > 0 for c in collapses):
        raise ValueError(f"collapse operators act on {label!r}; its projection is not conserved")
    sub, blocks = projection_sectors(np.asarray(H, dtype=complex), register, label)
    others = [c for c in collapses if c.rate > 0]
    rho0 = initial_state(InitialState.from_mapping(sub, {k: v for k, v in pure_levels.items() if k != label}), sub)
    target = pure_levels.get(label)
    weights = [(m, Hm, 1.0 if target is None or abs(m - target) < 1e-9 else 0.0) for m, Hm in blocks]
    if target is None:
        weights = [(m, Hm, 1.0 / len(blocks)) for m, Hm, _ in weights]
    acc, diag = None, {"sectors": []}
    for m, Hm, w in weights:
        if w == 0.0:
            continue
        tr = evolve_lindblad(rho0, build_liouvillian(Hm, others, sub), times, **kw)
        diag["sectors"].append({"m": m, "weight": w, "max_trace_error": tr.diagnostics["max_trace_error"],
                                "min_eigenvalue": tr.diagnostics["min_eigenvalue"]})
        part = {k: w * v for k, v in tr.observables.items()}
        acc = part if acc is None else {k: acc[k] + part[k] for k in acc}
    from .unitary import _OBSERVABLE_SPINS

    for name, (lb, norm) in _OBSERVABLE_SPINS.items():
        if lb == label:
            acc[name] = np.full(len(times), norm * sum(w * m for m, _, w in weights))
    return Trajectory(np.asarray(times, dtype=float), acc, diag)
