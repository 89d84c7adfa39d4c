import pytest

from platoon_dmpc import cli
from platoon_dmpc.export import read_summary


def test_run_writes_files_and_refuses_overwrite(tmp_path, capsys):
    cfg = tmp_path / "short.yaml"
    cfg.write_text("preset: reference\nt_end: 3.0\n")
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "MPE" in printed and "AVE" in printed
    assert {p.name for p in out.iterdir()} == {"run.csv", "modes.csv", "summary.txt"}
    assert read_summary(out / "summary.txt")["seed"] == "7"
    assert cli.main(["run", "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(cfg), "--seed", "7", "--out", str(out), "--force"]) == 0


def test_sweep_of_one_matches_run(tmp_path):
    cfg = tmp_path / "short.yaml"
    cfg.write_text("preset: reference\nt_end: 2.0\n")
    assert cli.main(["sweep", "--config", str(cfg), "--seeds", "1", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["run", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "r")]) == 0
    for name in ("run.csv", "modes.csv", "summary.txt"):
        assert (tmp_path / "s" / "seed-001" / name).read_bytes() == (tmp_path / "r" / name).read_bytes()
    assert "median_MPE" in (tmp_path / "s" / "sweep_summary.txt").read_text()


@pytest.mark.parametrize("argv", [
    [],
    ["run"],
    ["run", "--config", "does-not-exist.yaml"],
    ["sweep", "--config", "reference", "--seeds", "0"],
    ["verify", "--suite", "everything"],
    ["config", "--preset", "nope"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    assert "usage error" in capsys.readouterr().err


def test_simulation_failure_exits_1(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    # a negative definite observer gain blows the estimates up within a second
    cfg.write_text("preset: reference\nt_end: 5.0\n"
                   "observer: {P: [[-1000, 0, 0], [0, -1000, 0], [0, 0, -1000]]}\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "t=" in capsys.readouterr().err


def test_invariant_default_and_file(tmp_path, capsys):
    assert cli.main(["invariant"]) == 0
    assert "0.275, 0.2, 0.4, 0.125" in capsys.readouterr().out
    mu = tmp_path / "mu.txt"
    mu.write_text("-1, 1\n2, -2\n")
    assert cli.main(["invariant", "--mu", str(mu)]) == 0
    assert "0.666666666667" in capsys.readouterr().out


@pytest.mark.parametrize("text, fragment", [
    ("-1 1\n2 x\n", "cell (2,2)"),
    ("-1 1 0\n2 -2\n", "row 1"),
    ("[[-1, 2], [1, -1]]", "row 1 sums"),
    ("-1 nan\n1 -1\n", "not finite"),
])
def test_malformed_matrices(tmp_path, capsys, text, fragment):
    mu = tmp_path / "mu.txt"
    mu.write_text(text)
    assert cli.main(["invariant", "--mu", str(mu)]) == 2
    assert fragment in capsys.readouterr().err


def test_care(tmp_path, capsys):
    assert cli.main(["care"]) == 0
    assert "residual" in capsys.readouterr().out
    q = tmp_path / "q.txt"
    q.write_text("1 0\n0 1\n")
    assert cli.main(["care", "--q", str(q)]) == 2
    q.write_text("-1 0 0\n0 1 0\n0 0 1\n")
    assert cli.main(["care", "--q", str(q)]) == 1


def test_config_prints_settings(capsys):
    assert cli.main(["config", "--preset", "reference"]) == 0
    out = capsys.readouterr().out
    for fragment in ("dt: 0.1", "d0: 20.0", "horizon: 10", "beta: 0.6", "input_bounds: [-3.0, 3.0]"):
        assert fragment in out


@pytest.mark.parametrize("suite, fragment", [
    ("markov", "pi mu = 0"),
    ("riccati", "default P"),
    ("observer", "consensus manifold"),
])
def test_verify_suites(suite, fragment, capsys):
    assert cli.main(["verify", "--suite", suite]) == 0
    out = capsys.readouterr().out
    assert fragment in out and "FAIL" not in out
