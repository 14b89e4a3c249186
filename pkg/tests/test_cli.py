import subprocess
import sys

from fastice.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from fastice.driver import dump_config
from fastice.momentum import SolverConfig

from test_driver import small


def write(tmp_path, cfg):
    path = tmp_path / "cfg.ini"
    path.write_text(dump_config(cfg))
    return str(path)


def test_run_and_validate(tmp_path, capsys):
    path = write(tmp_path, small())
    assert main(["validate", "--config", path]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: 6 x 6 cells")
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "diagnostics.csv").exists()


def test_builtin_scenario_zero_duration(tmp_path):
    out = tmp_path / "s"
    assert main(["scenario", "stability", "--resolution", "16000", "--duration", "0",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "fields_000000.csv").exists()


def test_configuration_error_exit(tmp_path, capsys):
    assert main(["scenario", "refinement", "--resolution", "7000", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "none.ini")]) == EXIT_CONFIG


def test_solver_failure_exit(tmp_path, capsys):
    path = write(tmp_path, small(solver=SolverConfig(max_iters=1)))
    assert main(["run", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "step 1" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fastice", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "scenario" in out.stdout
