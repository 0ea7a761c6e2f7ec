"""Command-line surface: exit codes, JSON shape, CSV contracts.

Commands run in-process through main(argv) so coverage and debugging
work; the console entry point is the same function.
"""

import json
import math

import numpy as np
import pytest

from freqkam.cli import main

CUBE_ROOT = """\
[system]
omega = ["xi1", "xi2^3"]
omega_bar = [1.0, 1.618033988749895]
p = "-y2"

[domain]
parameter_box = [[-1.0, 1.0], [-1.0, 1.0]]

[run]
epsilon = 1e-3
xi0 = [0.0, 0.0]
gamma = 0.05
"""

MOLLIFIER = """\
[system]
omega = ["guard(xi1 = 0; 0; sign(xi1) * exp(0 - 1 / abs(xi1)))"]
omega_bar = [1.0]
p = "-y1"

[domain]
parameter_box = [[-1.5, 1.5]]

[run]
epsilon = 1e-4
xi0 = [0.0]
gamma = 0.5
tau = 1.2
"""

EDGE_EXIT = """\
[system]
omega = ["xi1", "xi2"]
omega_bar = [1.0, 1.618033988749895]
p = "y2"

[domain]
parameter_box = [[-1.0, 1.0], [0.0, 1.0]]

[run]
epsilon = 1e-3
target_frequency = [1.0, 1.618033988749895]
gamma = 0.05
"""


@pytest.fixture
def cube_cfg(tmp_path):
    path = tmp_path / "cube.toml"
    path.write_text(CUBE_ROOT)
    return str(path)


@pytest.fixture
def mollifier_cfg(tmp_path):
    path = tmp_path / "mollifier.toml"
    path.write_text(MOLLIFIER)
    return str(path)


class TestRunCommand:
    def test_cube_root_run(self, cube_cfg, capsys):
        code = main(["run", cube_cfg])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        np.testing.assert_allclose(doc["result"]["xi_star"], [0.0, 0.1],
                                   rtol=0, atol=1e-9)
        assert doc["result"]["converged"]
        assert len(doc["run_id"]) == 64

    def test_epsilon_override(self, cube_cfg, capsys):
        code = main(["run", cube_cfg, "--epsilon", "1e-4"])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        assert abs(doc["result"]["xi_star"][1] - 1e-4 ** (1 / 3)) < 1e-9

    def test_no_solution_is_verdict_not_crash(self, tmp_path, capsys):
        path = tmp_path / "edge.toml"
        path.write_text(EDGE_EXIT)
        code = main(["run", str(path)])
        doc = json.loads(capsys.readouterr().out)
        assert code == 1
        assert doc["outcome"]["error"] == "NoSolutionInBox"

    def test_out_directory_layout(self, cube_cfg, tmp_path, capsys):
        out = tmp_path / "runs"
        code = main(["run", cube_cfg, "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        run_dirs = list(out.iterdir())
        assert len(run_dirs) == 1
        names = {p.name for p in run_dirs[0].iterdir()}
        assert {"report.json", "steps.csv"} <= names

    def test_missing_config_file(self, capsys):
        assert main(["run", "/no/such/file.toml"]) == 2

    def test_malformed_config(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[system]\nomega = 3\n")
        assert main(["run", str(path)]) == 2
        assert "config error" in capsys.readouterr().err


class TestVerifyCommand:
    def test_mollifier_hypotheses_hold(self, mollifier_cfg, capsys):
        code = main(["verify", mollifier_cfg])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        conds = doc["conditions"]
        assert conds["h1"]["verdict"] == "holds"
        assert conds["h2"]["verdict"] == "holds"
        assert conds["h3"]["verdict"] == "convergent"

    def test_degenerate_frequency_fails_verify(self, tmp_path, capsys):
        path = tmp_path / "frozen.toml"
        path.write_text("""\
[system]
omega = ["0", "0"]
omega_bar = [1.0, 1.618033988749895]
p = "-y2"

[domain]
parameter_box = [[-1.0, 1.0], [-1.0, 1.0]]

[run]
epsilon = 1e-3
xi0 = [0.0, 0.0]
gamma = 0.05
""")
        code = main(["verify", str(path)])
        doc = json.loads(capsys.readouterr().out)
        assert code == 1
        assert doc["conditions"]["h2"]["verdict"] == "undefined"
        assert doc["conditions"]["h3"]["verdict"] == "divergent"


class TestPhiCommand:
    def test_mollifier_integral_column(self, mollifier_cfg, capsys):
        code = main(["phi", mollifier_cfg])
        out = capsys.readouterr().out
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "delta,phi,integral_estimate"
        estimates = [float(parts[2]) for parts in
                     (line.split(",") for line in lines[1:]) if parts[2]]
        assert estimates
        assert abs(estimates[-1] - 1 / math.log(2)) < 1e-4

    def test_phi_out_files(self, mollifier_cfg, tmp_path, capsys):
        out = tmp_path / "phi"
        code = main(["phi", mollifier_cfg, "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        assert (out / "phi.csv").exists()
        summary = json.loads((out / "phi.json").read_text())
        assert summary["integral"]["convergent"]


class TestSweepCommand:
    def test_grid_sweep_solves_everything(self, cube_cfg, capsys):
        code = main(["sweep", cube_cfg, "--grid", "3", "--margin", "0.05"])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        assert doc["targets"] == 9
        assert doc["solved"] == 9
        assert doc["failed"] == 0


class TestCorpusCommand:
    def test_single_entry(self, capsys):
        code = main(["corpus", "--id", "cubic-root"])
        cap = capsys.readouterr()
        doc = json.loads(cap.out)
        assert code == 0
        assert len(doc["entries"]) == 1
        assert doc["entries"][0]["entry"] == "cubic-root"
        assert doc["entries"][0]["ok"]

    def test_unknown_entry_id(self, capsys):
        assert main(["corpus", "--id", "no-such-entry"]) == 2

    def test_deterministic_single_entry_byte_identical(self, capsys):
        main(["corpus", "--id", "mollifier-flat", "--deterministic"])
        first = capsys.readouterr().out
        main(["corpus", "--id", "mollifier-flat", "--deterministic"])
        second = capsys.readouterr().out
        assert first == second
