import json
import subprocess
import sys

import pytest

from nvdnp import cli
from nvdnp.io import read_csv
from nvdnp.lindblad import SolverError

SMALL = 'drop = ["N", "N1"]\n'

CONFIGS = {
    "evolve": '[evolve]\ntimes = {start = 0, stop = 20, num = 5}\ninitial = {NV = 0}\n',
    "evolve_l": '[evolve]\ntimes = [0.0, 5.0, 10.0]\nengine = "lindblad"\nR = 0.05\nT1 = {T1_NV = 1000.0}\n',
    "steady": '[steady]\nR = 0.05\nT1 = {T1_NV = 1000.0, T1_C = 1e5}\n',
    "sweep": '[sweep]\nB_min = 51.0\nB_max = 51.3\nn_points = 7\nT_proj = 100.0\n',
    "matchfield": '[matchfield]\ntheta = [0.0, 20.0]\n',
    "pumpscan": '[pumpscan]\nR = [0.01, 0.1]\nT1 = {T1_NV = 1000.0}\n',
    "couplingscan": '[couplingscan]\ncouplings = [1.0, 4.0]\nn_fields = 3\nn_times = 21\n',
    "illum": '[illum]\nW = [0.5, 1.0]\npc_table = {R = [0.0, 0.1], P_C = [0.0, 0.3]}\nsurface = {n = 64}\n',
}


def _write(tmp_path, name, body):
    study = name.split("_")[0]
    out = tmp_path / f"out_{name}"
    path = tmp_path / f"{name}.toml"
    path.write_text(f'study = "{study}"\noutput = "{out}"\n{SMALL}{body}')
    return path, out


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_run_every_study(tmp_path, name):
    path, out = _write(tmp_path, name, CONFIGS[name])
    assert cli.main(["validate", str(path)]) == 0
    assert cli.main(["run", str(path)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["artifacts"] and manifest["config"]["study"] == name.split("_")[0]
    for art in manifest["artifacts"]:
        assert len(art["sha256"]) == 64 and (out / art["path"]).exists()
    assert "params" in manifest["config"] and manifest["config"]["params"]["D"] == 2870.0


def test_reruns_are_byte_identical(tmp_path):
    path, out = _write(tmp_path, "couplingscan", CONFIGS["couplingscan"])
    cli.main(["run", str(path)])
    first = (out / "coupling_scan.csv").read_bytes()
    h1 = json.loads((out / "manifest.json").read_text())["artifacts"]
    cli.main(["run", str(path)])
    assert (out / "coupling_scan.csv").read_bytes() == first
    assert json.loads((out / "manifest.json").read_text())["artifacts"] == h1
    header, rows = read_csv(out / "coupling_scan.csv")
    assert header[0] == "A_C_MHz" and len(rows) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('study = "steady"\nwho = 1\n[steady]\nR = -2\n')
    assert cli.main(["validate", str(bad)]) == 2
    assert cli.main(["run", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "who" in err and "steady.R" in err
    assert cli.main(["validate", str(tmp_path / "none.toml")]) == 2
    assert cli.main(["reproduce", "fig99", "--out", str(tmp_path)]) == 2


def test_solver_failure_exit_3(tmp_path, monkeypatch, capsys):
    path, _ = _write(tmp_path, "steady", CONFIGS["steady"])

    def boom(cfg, out):
        raise SolverError("kernel is degenerate", kernel_dimension=2)

    monkeypatch.setitem(cli.RUNNERS, "steady", boom)
    assert cli.main(["run", str(path)]) == 3
    assert "kernel" in capsys.readouterr().err


def test_reproduce_writes_report(tmp_path):
    code = cli.main(["reproduce", "fig4b", "--out", str(tmp_path / "f")])
    assert code == 0
    assert (tmp_path / "f" / "fig4b_report.json").exists()
    assert (tmp_path / "f" / "manifest.json").exists()


def test_console_entry_point(tmp_path):
    path, out = _write(tmp_path, "matchfield", CONFIGS["matchfield"])
    r = subprocess.run([sys.executable, "-m", "nvdnp.cli", "run", str(path)], capture_output=True, text=True,
                       env={"SIM_THREADS": "1", "PATH": ""})
    assert r.returncode == 0, r.stderr
    assert (out / "matching_fields.csv").exists()
