"""Command-line entry point ``sim``.

    sim run <config.toml>          run one study, write CSVs plus manifest.json
    sim reproduce <figure> [--out] regenerate a figure's data and checks
    sim validate <config.toml>     check a configuration without running it

Exit codes: 0 on success, 1 when reproduce checks fail, 2 for invalid
configuration, 3 for solver or quadrature failures.

``SIM_THREADS`` caps BLAS/OpenMP threads; it only takes effect when this
module is imported before numpy.
"""

from __future__ import annotations

import os

if os.environ.get("SIM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SIM_THREADS"])

import argparse
import hashlib
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, expand_grid, load_config
from .hamiltonian import build_hamiltonian, canonical_register
from .illumination import BEAM_RADII, BeamProfile, CrystalSurface, QuadratureError, ResponseMaps, power_scan
from .io import write_csv, write_json
from .lindblad import (
    RelaxationTimes,
    SolverError,
    evolve_lindblad,
    model_liouvillian,
    pump_rate_scan,
    steady_state,
    write_pump_scan,
)
from .spectra import MatchSpec, SweepConfig, matching_field, sweep
from .unitary import OBSERVABLES, InitialState, evolve_unitary, initial_state, polarizations, unitary_limit_scan

log = logging.getLogger("nvdnp")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _relaxation(block) -> RelaxationTimes:
    return RelaxationTimes(**block.get("T1", {}))


# -- study runners: each returns (artifact paths, diagnostics) ---------------

def _run_evolve(cfg: RunConfig, out: Path):
    b = cfg.block
    reg = canonical_register(drop=tuple(cfg.drop))
    params = cfg.model_params()
    times = np.asarray(expand_grid(b["times"]))
    pure = {k: v for k, v in b.get("initial", {}).items() if k in reg}
    rho0 = initial_state(InitialState.from_mapping(reg, pure), reg)
    if b.get("engine", "unitary") == "unitary":
        tr = evolve_unitary(rho0, build_hamiltonian(params, cfg.variant, reg), times)
    else:
        L = model_liouvillian(params, float(b.get("R", 0.0)), _relaxation(b), reg, cfg.variant)
        tr = evolve_lindblad(rho0, L, times)
    path = out / "trajectory.csv"
    tr.to_csv(path)
    return [path], dict(tr.diagnostics)


def _run_steady(cfg: RunConfig, out: Path):
    b = cfg.block
    reg = canonical_register(drop=tuple(cfg.drop))
    L = model_liouvillian(cfg.model_params(), float(b["R"]), _relaxation(b), reg, cfg.variant)
    ss = steady_state(L)
    pol = polarizations(ss.rho)
    path = out / "steady_state.csv"
    write_csv(path, [*OBSERVABLES, "residual"], [[*pol, ss.residual]])
    return [path], {"residual": ss.residual, "relative_residual": ss.relative_residual,
                    "kernel_dimension": ss.kernel_dimension, "solve_s": ss.seconds}


def _run_sweep(cfg: RunConfig, out: Path):
    b = {k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg.block.items()}
    pattern = sweep(SweepConfig(**b), cfg.model_params(), cfg.variant,
                    register=canonical_register(drop=tuple(cfg.drop)))
    path = out / "pattern.csv"
    pattern.to_csv(path)
    return [path, Path(str(path) + ".json")], dict(pattern.metadata)


def _run_matchfield(cfg: RunConfig, out: Path):
    b = cfg.block
    thetas = expand_grid(b["theta"]) if not isinstance(b["theta"], (int, float)) else [float(b["theta"])]
    subset = b.get("subset", "parallel")
    params = cfg.model_params()
    rows = []
    for th in thetas:
        for j in b.get("j", [-2, -1, 0, 1, 2]):
            B = matching_field(MatchSpec.from_index(j, th, subset), params)
            rows.append([th, j, B if B is not None else float("nan")])
    path = out / "matching_fields.csv"
    write_csv(path, ["theta_deg", "j", "B_mT"], rows)
    return [path], {"missing": sum(1 for r in rows if np.isnan(r[2]))}


def _pumpscan(cfg: RunConfig, block: dict):
    reg = canonical_register(drop=tuple(cfg.drop))
    return pump_rate_scan(expand_grid(block["R"]), cfg.model_params(), _relaxation(block), reg, cfg.variant)


def _run_pumpscan(cfg: RunConfig, out: Path):
    pts = _pumpscan(cfg, cfg.block)
    path = out / "pump_scan.csv"
    write_pump_scan(path, pts)
    return [path], {"residuals": [p.residual for p in pts], "max_solve_s": max(p.seconds for p in pts)}


def _run_couplingscan(cfg: RunConfig, out: Path):
    b = dict(cfg.block)
    couplings = expand_grid(b.pop("couplings"))
    res = unitary_limit_scan(couplings, cfg.model_params(), register=canonical_register(drop=tuple(cfg.drop)), **b)
    path = out / "coupling_scan.csv"
    write_csv(path, ["A_C_MHz", "max_abs_P_C", "max_abs_P_S1", "B_at_max_mT", "t_at_max_us"],
              ([r.coupling, r.max_P_C, r.max_P_S1, r.B_at_max, r.t_at_max] for r in res))
    return [path], {}


def _run_illum(cfg: RunConfig, out: Path):
    b = cfg.block
    arts, diag = [], {}
    if "pc_table" in b:
        R, pc = b["pc_table"]["R"], b["pc_table"]["P_C"]
    else:
        pts = _pumpscan(cfg, b["pumpscan"])
        p = out / "pump_scan.csv"
        write_pump_scan(p, pts)
        arts.append(p)
        R, pc = [q.R for q in pts], [q.P_C for q in pts]
        diag["residuals"] = [q.residual for q in pts]
    order = np.argsort(R)
    maps = ResponseMaps(np.asarray(R, float)[order], np.asarray(pc, float)[order], **b.get("maps", {}))
    radii = {**BEAM_RADII, **b.get("radii", {})}
    scan = power_scan(expand_grid(b["W"]), maps, {j: BeamProfile(r) for j, r in radii.items()},
                      CrystalSurface(**b.get("surface", {})))
    path = out / "signal.csv"
    scan.to_csv(path)
    arts.append(path)
    diag.update(saturation_power=scan.saturation_power, limit_efficiency=scan.limit_efficiency)
    return arts, diag


RUNNERS = {
    "evolve": _run_evolve,
    "steady": _run_steady,
    "sweep": _run_sweep,
    "matchfield": _run_matchfield,
    "pumpscan": _run_pumpscan,
    "couplingscan": _run_couplingscan,
    "illum": _run_illum,
}


def write_manifest(out: Path, resolved: dict, artifacts, seconds: float, diagnostics: dict) -> Path:
    manifest = {
        "version": _version(),
        "config": resolved,
        "artifacts": [{"path": Path(a).name, "sha256": sha256(a)} for a in artifacts],
        "wall_clock_s": seconds,
        "diagnostics": diagnostics,
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def run_config(cfg: RunConfig, out: Path | None = None) -> Path:
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    arts, diag = RUNNERS[cfg.study](cfg, out)
    return write_manifest(out, cfg.resolved(), arts, time.perf_counter() - t0, diag)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    path = run_config(cfg, args.out)
    print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    cfg.model_params()
    print(f"{args.config}: ok (study {cfg.study})")
    return 0


def _cmd_reproduce(args) -> int:
    from .figures import FIGURES, reproduce

    if args.figure not in FIGURES:
        raise ConfigError([f"unknown figure {args.figure!r}; valid ids: {', '.join(FIGURES)}"])
    out = Path(args.out or Path("out") / args.figure)
    t0 = time.perf_counter()
    rep = reproduce(args.figure, out)
    for c in rep.checks:
        print(c.line())
    data = [a for a in rep.artifacts if not str(a).endswith("_report.json")]
    write_manifest(out, {"figure": args.figure}, rep.artifacts, time.perf_counter() - t0, rep.metrics)
    print(f"wrote {len(data)} data files to {out}")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sim", description="NV-P1-13C polarization transfer simulations")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a study from a TOML/JSON configuration")
    p.add_argument("config")
    p.add_argument("--out", help="override the configured output directory")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("reproduce", help="regenerate the data behind a figure")
    p.add_argument("figure")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_reproduce)
    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SolverError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
