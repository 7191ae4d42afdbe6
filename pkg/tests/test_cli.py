"""Command line interface: exit codes, files written, pipelines."""

import json

import pytest

from ptmnet.cli import main
from ptmnet.lopro import bundled_source


@pytest.fixture
def exists_lp(tmp_path):
    path = tmp_path / "exists.lp"
    path.write_text(bundled_source("exists"))
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


# --- compile / build / run pipeline ------------------------------------------------

def test_compile_build_run_pipeline(tmp_path, exists_lp, capsys):
    hl = tmp_path / "exists.hlptm"
    net = tmp_path / "exists.net"
    assert run_cli("compile", exists_lp, "-o", hl) == 0
    assert json.loads(hl.read_text())["format"] == "hlptm v1"
    assert run_cli("build", "-m", hl, "-o", net) == 0
    capsys.readouterr()

    assert run_cli("run", "-n", net, "--input", "001101") == 0
    assert capsys.readouterr().out.strip() == "1"
    assert run_cli("run", "-n", net, "--input", "000000") == 0
    assert capsys.readouterr().out.strip() == "0"


def test_compile_lower_produces_buildable_genes(tmp_path, exists_lp, capsys):
    low = tmp_path / "exists4.ptm"
    net = tmp_path / "exists4.net"
    assert run_cli("compile", exists_lp, "--lower", "--const", "n=4", "-o", low) == 0
    assert low.read_text().startswith("ptm v1")
    assert run_cli("build", "-m", low, "-o", net) == 0
    capsys.readouterr()
    assert run_cli("run", "-n", net, "--input", "0100") == 0
    assert capsys.readouterr().out.strip() == "1"
    assert run_cli("run", "-n", net, "--input", "0000") == 0
    assert capsys.readouterr().out.strip() == "0"


def test_compile_to_stdout(exists_lp, capsys):
    assert run_cli("compile", exists_lp, "--const", "n=2") == 0
    out = capsys.readouterr().out
    assert json.loads(out)["format"] == "hlptm v1"


def test_run_reports_expected_input_width(tmp_path, exists_lp, capsys):
    hl = tmp_path / "m.hlptm"
    net = tmp_path / "m.net"
    run_cli("compile", exists_lp, "-o", hl)
    run_cli("build", "-m", hl, "-o", net)
    capsys.readouterr()
    assert run_cli("run", "-n", net, "--input", "01") == 1
    err = capsys.readouterr().err
    assert "6" in err and "(6,)" in err and "got 2" in err


# --- inspect / export ---------------------------------------------------------------

def test_inspect_prints_the_build_report(tmp_path, exists_lp, capsys):
    hl = tmp_path / "m.hlptm"
    net = tmp_path / "m.net"
    run_cli("compile", exists_lp, "-o", hl)
    run_cli("build", "-m", hl, "-o", net)
    capsys.readouterr()
    assert run_cli("inspect", "-n", net) == 0
    out = capsys.readouterr().out
    for field in ("flavor", "nodes", "links", "depth", "stopped by"):
        assert field in out


def test_inspect_a_machine_without_building_a_file(tmp_path, exists_lp, capsys):
    hl = tmp_path / "m.hlptm"
    run_cli("compile", exists_lp, "-o", hl)
    capsys.readouterr()
    assert run_cli("inspect", "-m", hl) == 0
    assert "hlptm" in capsys.readouterr().out


def test_export_dot(tmp_path, exists_lp, capsys):
    hl = tmp_path / "m.hlptm"
    net = tmp_path / "m.net"
    dot = tmp_path / "m.dot"
    run_cli("compile", exists_lp, "--const", "n=2", "-o", hl)
    run_cli("build", "-m", hl, "-o", net)
    assert run_cli("export", "-n", net, "--dot", "-o", dot) == 0
    text = dot.read_text()
    assert text.startswith("digraph")
    assert "->" in text


# --- limits ---------------------------------------------------------------------------

def test_limit_flags_stop_or_fail_the_build(tmp_path, exists_lp, capsys):
    hl = tmp_path / "m.hlptm"
    net = tmp_path / "m.net"
    run_cli("compile", exists_lp, "-o", hl)
    capsys.readouterr()
    assert run_cli("build", "-m", hl, "-o", net, "--max-nodes", "3") == 0
    assert "stopped by max_nodes" in capsys.readouterr().out
    assert run_cli("build", "-m", hl, "-o", net, "--max-nodes", "3", "--fatal") == 1
    assert "max_nodes" in capsys.readouterr().err


# --- evolve -----------------------------------------------------------------------------

def test_evolve_writes_genotype_history_and_figure(tmp_path, capsys):
    out = tmp_path / "runA"
    code = run_cli(
        "evolve", "--task", "exists", "--n", "2", "--pop", "20",
        "--gens", "6", "--seed", "7", "-o", out,
    )
    assert code == 0
    assert (out / "best.ptm").read_text().startswith("ptm v1")
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "generation,best,mean,best_hash"
    assert len(history) == 7
    assert (out / "fitness.png").stat().st_size > 1000

    again = tmp_path / "runB"
    run_cli(
        "evolve", "--task", "exists", "--n", "2", "--pop", "20",
        "--gens", "6", "--seed", "7", "-o", again,
    )
    assert (again / "history.csv").read_text() == "\n".join(history) + "\n"


def test_evolve_accepts_a_seed_genotype(tmp_path, exists_lp, capsys):
    low = tmp_path / "seed.ptm"
    run_cli("compile", exists_lp, "--lower", "--const", "n=2", "-o", low)
    out = tmp_path / "run"
    code = run_cli(
        "evolve", "--task", "exists", "--n", "2", "--pop", "20", "--gens", "3",
        "--seed", "1", "--seed-genotype", low, "-o", out,
    )
    assert code == 0
    first = (out / "history.csv").read_text().splitlines()[1]
    assert first.split(",")[1] == "1.000000"


def test_evolved_best_round_trips_through_build(tmp_path, capsys):
    out = tmp_path / "run"
    run_cli(
        "evolve", "--task", "exists", "--n", "2", "--pop", "20",
        "--gens", "4", "--seed", "7", "-o", out,
    )
    net = tmp_path / "best.net"
    assert run_cli("build", "-m", out / "best.ptm", "-o", net) == 0
    capsys.readouterr()
    assert run_cli("run", "-n", net, "--input", "10") == 0
    assert capsys.readouterr().out.strip() in ("0", "1")


# --- error paths ----------------------------------------------------------------------

def test_missing_file_is_a_user_error(capsys):
    assert run_cli("run", "-n", "/nonexistent.net", "--input", "0") == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_is_a_user_error(capsys):
    assert run_cli("frobnicate") == 1


def test_unknown_task_name_is_a_user_error(tmp_path, capsys):
    assert run_cli("evolve", "--task", "sorting", "--n", "2",
                   "-o", tmp_path / "x") == 1
    assert "sorting" in capsys.readouterr().err


def test_bad_const_override_is_a_user_error(tmp_path, exists_lp, capsys):
    assert run_cli("compile", exists_lp, "--const", "nonsense") == 1
    assert run_cli("compile", exists_lp, "--const", "m=3") == 1
    err = capsys.readouterr().err
    assert "unknown constant override" in err


def test_malformed_source_is_a_user_error(tmp_path, capsys):
    bad = tmp_path / "bad.lp"
    bad.write_text("machine {\n  tape idx end 2\n}\n")
    assert run_cli("compile", bad) == 1
    assert "bad.lp:" in capsys.readouterr().err
