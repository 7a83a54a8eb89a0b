import subprocess
import sys

import pytest

from rklmc.cli import EXIT_CHECK, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main

SMALL_CONVERGENCE = """
[run]
experiment = convergence
M = 20
[model]
name = gmm2
d = 3
[grid]
T = 0.5
h_ref = 2^-7
hs = 2^-5, 2^-4, 2^-3
"""


def test_check_order_preset(capsys):
    assert main(["check-order", "--preset", "rklmc-2g"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "kappa1 = 1.5" in out and "admissible" in out


def test_check_order_inline_and_file(tmp_path, capsys):
    assert main(["check-order", "alpha=2/3", "beta=1/3", "a11=1/2", "a21=1/2", "a22=0", "b1=1/2", "b2=2"]) == EXIT_OK
    path = tmp_path / "c.txt"
    path.write_text("alpha=0\nbeta=0\na11=0\na21=0\na22=0\nb1=0\nb2=0\n")
    assert main(["check-order", str(path)]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "r1 = -0.5" in out and "NOT admissible" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["check-order"],
        ["check-order", "--preset", "rk4"],
        ["check-order", "alpha=1"],
        ["check-order", "--preset", "rklmc-2g", "alpha=1"],
        ["stepsize-bound", "--preset", "rklmc-2g", "--mu", "0"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_stepsize_bound(capsys):
    assert main(["stepsize-bound", "--preset", "rklmc-3g-b"]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(1 / 32)


def test_selftest_passes_and_detects_perturbation(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert main(["selftest", "--perturb", "1e-3"]) == EXIT_CHECK
    assert "FAIL order-conditions" in capsys.readouterr().out


@pytest.mark.parametrize("model", ["quadratic", "gmm2", "gmm8", "blr"])
def test_gradcheck(model, capsys):
    assert main(["gradcheck", "--model", model, "--d", "4", "--probes", "5"]) == EXIT_OK


def test_run_writes_outputs_and_is_reproducible(tmp_path, capsys):
    cfg = tmp_path / "conv.ini"
    cfg.write_text(SMALL_CONVERGENCE)
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "slope lmc" in out
    for name in ("convergence.csv", "plot_convergence.py", "convergence_config.ini"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "convergence.csv").read_bytes() == (tmp_path / "b" / "convergence.csv").read_bytes()


def test_run_config_errors(tmp_path):
    assert main(["run", str(tmp_path / "missing.ini")]) == EXIT_USAGE
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nexperiment = nonsense\n")
    assert main(["run", str(bad)]) == EXIT_USAGE


def test_run_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "eight.ini"
    # h = 5 multiplies the distance to the nearest mode by about -6 per step
    cfg.write_text("[run]\nexperiment = eight_mode\nM = 4\n[grid]\nT = 100\nhs = 5\n[schemes]\nschemes = lmc\n")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path)]) == EXIT_DIVERGED
    assert "diverged" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rklmc", "check-order", "--preset", "rklmc-3g-a"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "admissible" in proc.stdout
