"""Declarative run configuration (TOML, or JSON with the same layout).

Top level::

    study = "sweep"          # evolve | steady | sweep | matchfield | pumpscan | couplingscan | illum
    variant = "nv_carbon"    # or "p1_carbon"
    drop = ["N"]             # register members frozen out
    output = "out/sweep"

    [params]                 # any ModelParams field; tensors as 3x3 lists
    B = 51.2

    [sweep]                  # block named after the study
    n_points = 2201

Unknown keys anywhere are rejected; every problem is reported at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .hamiltonian import CANONICAL_ORDER, DipolarForm, ModelParams, ModelVariant

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

STUDIES = ("evolve", "steady", "sweep", "matchfield", "pumpscan", "couplingscan", "illum")
INF = math.inf


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


def _num(errors, where, v, lo=None, hi=None, lo_open=False, allow_inf=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}: expected a number, got {v!r}")
        return
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        errors.append(f"{where}: must be finite, got {v!r}")
        return
    if lo is not None and (v < lo or (lo_open and v == lo)):
        errors.append(f"{where}: must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        errors.append(f"{where}: must be <= {hi}, got {v}")


def _int(errors, where, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{where}: expected an integer, got {v!r}")
    elif lo is not None and v < lo:
        errors.append(f"{where}: must be >= {lo}, got {v}")


def _nums(errors, where, v, **kw):
    if not isinstance(v, list) or not v:
        errors.append(f"{where}: expected a non-empty list of numbers")
        return
    for k, x in enumerate(v):
        _num(errors, f"{where}[{k}]", x, **kw)


def _keys(errors, where, block, allowed):
    if not isinstance(block, dict):
        errors.append(f"{where}: expected a table")
        return False
    for k in block:
        if k not in allowed:
            errors.append(f"{where}: unknown key {k!r} (allowed: {', '.join(sorted(allowed))})")
    return True


def _grid(errors, where, v):
    """``{start, stop, num}`` table or explicit list."""
    if isinstance(v, list):
        _nums(errors, where, v)
        return
    if _keys(errors, where, v, {"start", "stop", "num"}):
        for k in ("start", "stop", "num"):
            if k not in v:
                errors.append(f"{where}: missing {k!r}")
        if "num" in v:
            _int(errors, f"{where}.num", v["num"], lo=1)
        for k in ("start", "stop"):
            if k in v:
                _num(errors, f"{where}.{k}", v[k])


def expand_grid(v) -> list[float]:
    if isinstance(v, list):
        return [float(x) for x in v]
    n = int(v["num"])
    if n == 1:
        return [float(v["start"])]
    step = (float(v["stop"]) - float(v["start"])) / (n - 1)
    return [float(v["start"]) + k * step for k in range(n)]


_T1_KEYS = {"T1_NV", "T1_P1", "T1_C", "T1_N", "T1_N1"}


def _t1(errors, where, v):
    if _keys(errors, where, v, _T1_KEYS):
        for k, x in v.items():
            if k in _T1_KEYS:
                _num(errors, f"{where}.{k}", x, lo=0, lo_open=True, allow_inf=True)


def _levels(errors, where, v):
    if _keys(errors, where, v, set(CANONICAL_ORDER)):
        for k, x in v.items():
            _num(errors, f"{where}.{k}", x, lo=-1, hi=1)


def _check_evolve(errors, b):
    _keys(errors, "evolve", b, {"times", "initial", "engine", "R", "T1"})
    if "times" not in b:
        errors.append("evolve: missing 'times'")
    else:
        _grid(errors, "evolve.times", b["times"])
    if "initial" in b:
        _levels(errors, "evolve.initial", b["initial"])
    if b.get("engine", "unitary") not in ("unitary", "lindblad"):
        errors.append(f"evolve.engine: must be 'unitary' or 'lindblad', got {b.get('engine')!r}")
    if "R" in b:
        _num(errors, "evolve.R", b["R"], lo=0)
    if "T1" in b:
        _t1(errors, "evolve.T1", b["T1"])


def _check_steady(errors, b):
    _keys(errors, "steady", b, {"R", "T1"})
    if "R" not in b:
        errors.append("steady: missing 'R'")
    else:
        _num(errors, "steady.R", b["R"], lo=0)
    if "T1" in b:
        _t1(errors, "steady.T1", b["T1"])


def _check_sweep(errors, b):
    allowed = {"B_min", "B_max", "n_points", "T_proj", "w", "weights", "T_start", "max_doublings",
               "tolerance", "azimuths"}
    _keys(errors, "sweep", b, allowed)
    for k in ("B_min", "B_max"):
        if k in b:
            _num(errors, f"sweep.{k}", b[k], lo=0)
    if "B_min" in b and "B_max" in b and all(isinstance(b[k], (int, float)) for k in ("B_min", "B_max")):
        if not b["B_min"] < b["B_max"]:
            errors.append("sweep: B_min must be below B_max")
    if "n_points" in b:
        _int(errors, "sweep.n_points", b["n_points"], lo=2)
    if "max_doublings" in b:
        _int(errors, "sweep.max_doublings", b["max_doublings"], lo=0)
    for k in ("T_proj", "T_start", "tolerance"):
        if k in b:
            _num(errors, f"sweep.{k}", b[k], lo=0, lo_open=True)
    if "w" in b:
        _num(errors, "sweep.w", b["w"], lo=0)
    if "weights" in b:
        _nums(errors, "sweep.weights", b["weights"], lo=0)
        if isinstance(b["weights"], list) and len(b["weights"]) != 2:
            errors.append("sweep.weights: expected [parallel, misaligned]")
    if "azimuths" in b:
        _nums(errors, "sweep.azimuths", b["azimuths"])


def _check_matchfield(errors, b):
    _keys(errors, "matchfield", b, {"theta", "subset", "j"})
    if "theta" not in b:
        errors.append("matchfield: missing 'theta'")
    else:
        _grid(errors, "matchfield.theta", b["theta"])
        if isinstance(b["theta"], (list, dict)):
            try:
                th = expand_grid(b["theta"])
                if any(not 0 <= x <= 90 for x in th):
                    errors.append("matchfield.theta: angles must lie in [0, 90] deg")
            except (KeyError, TypeError, ValueError):
                pass
    if b.get("subset", "parallel") not in ("parallel", "misaligned"):
        errors.append(f"matchfield.subset: must be 'parallel' or 'misaligned', got {b.get('subset')!r}")
    if "j" in b:
        if not isinstance(b["j"], list) or any(x not in (-2, -1, 0, 1, 2) for x in b["j"]):
            errors.append("matchfield.j: expected a list drawn from -2..2")


def _check_pumpscan(errors, b):
    _keys(errors, "pumpscan", b, {"R", "T1"})
    if "R" not in b:
        errors.append("pumpscan: missing 'R'")
    else:
        _nums(errors, "pumpscan.R", b["R"], lo=0)
    if "T1" in b:
        _t1(errors, "pumpscan.T1", b["T1"])


def _check_couplingscan(errors, b):
    _keys(errors, "couplingscan", b, {"couplings", "half_window", "n_fields", "t_max", "n_times", "a_zx_ratio"})
    if "couplings" not in b:
        errors.append("couplingscan: missing 'couplings'")
    else:
        _nums(errors, "couplingscan.couplings", b["couplings"], lo=0)
    for k in ("half_window", "t_max"):
        if k in b:
            _num(errors, f"couplingscan.{k}", b[k], lo=0, lo_open=True)
    for k in ("n_fields", "n_times"):
        if k in b:
            _int(errors, f"couplingscan.{k}", b[k], lo=1)
    if "a_zx_ratio" in b:
        _num(errors, "couplingscan.a_zx_ratio", b["a_zx_ratio"])


def _check_illum(errors, b):
    _keys(errors, "illum", b, {"W", "radii", "surface", "maps", "pc_table", "pumpscan"})
    if "W" not in b:
        errors.append("illum: missing 'W'")
    else:
        _nums(errors, "illum.W", b["W"], lo=0)
    if "radii" in b and _keys(errors, "illum.radii", b["radii"], {"i", "ii", "iii"}):
        for k, v in b["radii"].items():
            _num(errors, f"illum.radii.{k}", v, lo=0, lo_open=True)
    if "surface" in b and _keys(errors, "illum.surface", b["surface"], {"width", "height", "n"}):
        for k in ("width", "height"):
            if k in b["surface"]:
                _num(errors, f"illum.surface.{k}", b["surface"][k], lo=0, lo_open=True)
        if "n" in b["surface"]:
            _int(errors, "illum.surface.n", b["surface"]["n"], lo=2)
    if "maps" in b and _keys(errors, "illum.maps", b["maps"], {"kappa", "p_max", "i_sat"}):
        m = b["maps"]
        if "kappa" in m:
            _num(errors, "illum.maps.kappa", m["kappa"], lo=0, lo_open=True)
        if "p_max" in m:
            _num(errors, "illum.maps.p_max", m["p_max"], lo=0, hi=1, lo_open=True)
        if "i_sat" in m:
            _num(errors, "illum.maps.i_sat", m["i_sat"], lo=0, lo_open=True)
    if "pc_table" in b and _keys(errors, "illum.pc_table", b["pc_table"], {"R", "P_C"}):
        t = b["pc_table"]
        for k in ("R", "P_C"):
            if k not in t:
                errors.append(f"illum.pc_table: missing {k!r}")
            else:
                _nums(errors, f"illum.pc_table.{k}", t[k], lo=None if k == "P_C" else 0)
        if isinstance(t.get("R"), list) and isinstance(t.get("P_C"), list) and len(t["R"]) != len(t["P_C"]):
            errors.append("illum.pc_table: R and P_C lengths differ")
    if "pumpscan" in b:
        _check_pumpscan(errors, b["pumpscan"])
    if "pc_table" not in b and "pumpscan" not in b:
        errors.append("illum: needs either 'pc_table' or a 'pumpscan' block for P_C(R)")


_STUDY_CHECKS = {
    "evolve": _check_evolve,
    "steady": _check_steady,
    "sweep": _check_sweep,
    "matchfield": _check_matchfield,
    "pumpscan": _check_pumpscan,
    "couplingscan": _check_couplingscan,
    "illum": _check_illum,
}

_PARAM_FIELDS = {f.name for f in fields(ModelParams)}


def _check_params(errors, p):
    if not _keys(errors, "params", p, _PARAM_FIELDS):
        return
    for k, v in p.items():
        if k not in _PARAM_FIELDS:
            continue
        if k.startswith("A_"):
            ok = isinstance(v, list) and len(v) == 3 and all(isinstance(r, list) and len(r) == 3 for r in v)
            if not ok:
                errors.append(f"params.{k}: expected a 3x3 nested list")
                continue
            for i, r in enumerate(v):
                for j, x in enumerate(r):
                    _num(errors, f"params.{k}[{i}][{j}]", x)
        elif k == "nvp1_form":
            if v not in [f.value for f in DipolarForm]:
                errors.append(f"params.nvp1_form: must be one of {[f.value for f in DipolarForm]}, got {v!r}")
        else:
            _num(errors, f"params.{k}", v)
    if errors:
        return
    try:
        ModelParams(**p)
    except (ValueError, TypeError) as exc:
        errors.append(f"params: {exc}")


@dataclass
class RunConfig:
    study: str
    variant: str = ModelVariant.NV_CARBON.value
    drop: list = field(default_factory=list)
    output: str = "out"
    params: dict = field(default_factory=dict)
    block: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        errors: list[str] = []
        if not isinstance(data, dict):
            raise ConfigError(["configuration must be a table"])
        study = data.get("study")
        allowed = {"study", "variant", "drop", "output", "params"} | set(STUDIES)
        for k in data:
            if k not in allowed:
                errors.append(f"unknown top-level key {k!r}")
        if study is None or study == "":
            errors.append(f"missing required field 'study' (one of {', '.join(STUDIES)})")
        elif study not in STUDIES:
            errors.append(f"study: unknown study {study!r} (one of {', '.join(STUDIES)})")
        for s in STUDIES:
            if s in data and s != study:
                errors.append(f"block [{s}] given but study is {study!r}")
        variant = data.get("variant", ModelVariant.NV_CARBON.value)
        if variant not in [v.value for v in ModelVariant]:
            errors.append(f"variant: must be one of {[v.value for v in ModelVariant]}, got {variant!r}")
        drop = data.get("drop", [])
        if not isinstance(drop, list) or any(d not in CANONICAL_ORDER for d in drop):
            errors.append(f"drop: expected a list drawn from {list(CANONICAL_ORDER)}, got {drop!r}")
        elif "NV" in drop:
            errors.append("drop: the NV electron cannot be removed")
        elif variant == ModelVariant.P1_CARBON.value and "P1" in drop:
            errors.append("drop: the P1-coupled carbon variant needs the P1 electron")
        output = data.get("output", "out")
        if not isinstance(output, str) or not output:
            errors.append("output: expected a non-empty path string")
        params = data.get("params", {})
        _check_params(errors, params)
        block = data.get(study, {}) if study in STUDIES else {}
        if study in STUDIES:
            _STUDY_CHECKS[study](errors, block)
        if errors:
            raise ConfigError(errors)
        return cls(study, variant, list(drop), output, dict(params), dict(block))

    def to_dict(self) -> dict:
        out = {"study": self.study, "variant": self.variant, "drop": list(self.drop), "output": self.output}
        if self.params:
            out["params"] = self.params
        if self.block:
            out[self.study] = self.block
        return out

    def model_params(self) -> ModelParams:
        return ModelParams(**self.params)

    def resolved(self) -> dict:
        """The configuration with all model defaults expanded."""
        d = self.to_dict()
        d["params"] = self.model_params().to_dict()
        return d


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from exc
    return RunConfig.from_dict(data)


def dumps_toml(cfg: RunConfig) -> str:
    import tomli_w

    return tomli_w.dumps(cfg.to_dict())
