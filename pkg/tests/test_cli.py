import csv
import math

import pytest

from kirchhoff_nf.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERDICT,
    ConfigError,
    SimulationConfig,
    main,
)


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


# --- configuration --------------------------------------------------------------------

def test_config_parsing_forms():
    text = """
    # comment line
    dimension = 2
    radius 2.5          # whitespace separated
    system=fg
    s_list = 0.5, 1, 2
    init_mode = 1,0
    init_re = 0.01
    init_im = -0.02
    """
    cfg = SimulationConfig.from_text(text, ["steps=7"])
    assert (cfg.dimension, cfg.radius, cfg.system, cfg.steps) == (2, 2.5, "fg", 7)
    assert cfg.s_list == [0.5, 1.0, 2.0]
    assert cfg.initial == {(1, 0): complex(0.01, -0.02)}
    pair = cfg.initial_pair()
    assert pair.first[(1, 0)] == complex(0.01, -0.02)


@pytest.mark.parametrize("text, overrides", [
    ("colour = red", []),
    ("steps = many", []),
    ("init_re = 0.1", []),
    ("init_mode = 1\ninit_re = 0.1", []),
    ("init_mode = 1\ninit_mode = 2", []),
    ("dimension = 4", []),
    ("system = heat", []),
    ("", ["dt=0"]),
    ("", ["dt=1", "steps=2000000"]),
    ("", ["s_list=-1"]),
    ("", ["record_every=0"]),
    ("", ["steps"]),
    ("init_mode = 1,0\ninit_re = 0\ninit_im = 0", []),
])
def test_config_errors(text, overrides):
    with pytest.raises(ConfigError):
        SimulationConfig.from_text(text, overrides)


def test_initial_mode_outside_radius():
    cfg = SimulationConfig.from_text("radius = 2\ninit_mode = 3\ninit_re = 1\ninit_im = 0")
    with pytest.raises(ConfigError):
        cfg.lattice()


def test_missing_config_file_is_exit_2(tmp_path):
    assert main(["simulate", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_unknown_subcommand_is_exit_2():
    assert main(["integrate"]) == EXIT_CONFIG
    assert main(["simulate", "--set", "colour=red"]) == EXIT_CONFIG
    assert main(["verify", "--only", "12"]) == EXIT_CONFIG


# --- simulate -----------------------------------------------------------------------------

def test_zero_data_gives_zero_columns(tmp_path):
    out = tmp_path / "zero.csv"
    code = main(["simulate", "--set", "amplitude=0", "--set", "steps=20", "--set", f"out={out}"])
    assert code == EXIT_OK
    header, *rows = read_csv(out)
    assert header == ["t", "norm_s0.5", "norm_s1", "H", "z6_s0.5", "z6_s1", "z_ge8"]
    assert len(rows) == 21
    for row in rows:
        assert all(float(x) == 0.0 for x in row[1:])


def test_simulate_is_bitwise_deterministic(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        assert main(["simulate", "--set", "steps=50", "--set", "seed=3", "--set", f"out={path}"]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_simulate_z6_half_column(tmp_path):
    out = tmp_path / "run.csv"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"steps = 40\nrecord_every = 10\namplitude = 0.02\nout = {out}\n")
    assert main(["simulate", str(cfg)]) == EXIT_OK
    header, *rows = read_csv(out)
    col = header.index("z6_s0.5")
    assert len(rows) == 5
    assert max(abs(float(r[col])) for r in rows) <= 1e-13


@pytest.mark.parametrize("system", ["physical", "etapsi", "fg"])
def test_simulate_other_systems(system, tmp_path):
    out = tmp_path / f"{system}.csv"
    args = ["simulate", "--set", f"system={system}", "--set", "steps=10", "--set", f"out={out}"]
    assert main(args) == EXIT_OK
    _, *rows = read_csv(out)
    assert len(rows) == 11
    assert all(math.isfinite(float(x)) for x in rows[-1])


def test_normalized_outside_ball_is_config_error():
    assert main(["simulate", "--set", "amplitude=0.5"]) == EXIT_CONFIG


def test_shell_command(tmp_path):
    out = tmp_path / "shell.csv"
    assert main(["shell", "--set", "amplitude=0.05", "--set", "steps=100", "--set", f"out={out}"]) == EXIT_OK
    header, *rows = read_csv(out)
    assert header[:4] == ["t", "S_sqrt1", "ReB_sqrt1", "ImB_sqrt1"]
    assert len(rows) == 101


def test_conjugacy_command(tmp_path):
    out = tmp_path / "conj.csv"
    args = ["conjugacy", "--set", "radius=2", "--set", "steps=20", "--set", "dt=0.01",
            "--set", "record_every=10", "--set", f"out={out}"]
    assert main(args) == EXIT_OK
    header, *rows = read_csv(out)
    assert header == ["t", "discrepancy"] and len(rows) == 3


# --- verification and tables ----------------------------------------------------------------

def test_verify_sensitivity_control(capsys):
    assert main(["verify", "--only", "3"]) == EXIT_OK
    assert main(["verify", "--only", "3", "--corrupt-table", "A11,1,1,1"]) == EXIT_VERDICT
    assert "FAIL" in capsys.readouterr().out


def test_corrupt_table_format_is_exit_2():
    assert main(["verify", "--corrupt-table", "Z11,1,1,1"]) == EXIT_CONFIG
    assert main(["verify", "--corrupt-table", "A11,1,1"]) == EXIT_CONFIG


def test_divisor_scan_d2(tmp_path):
    out = tmp_path / "div.csv"
    assert main(["divisor-scan", "--set", "dimension=2", "--set", "radius=10", "--set", f"out={out}"]) == EXIT_OK
    header, *rows = read_csv(out)
    assert header[:6] == ["j0", "j1", "l0", "l1", "k0", "k1"]
    assert len(rows) > 0


def test_coeff_dump_exact_in_d1(tmp_path):
    out = tmp_path / "coeffs.csv"
    assert main(["coeff-dump", "--set", "radius=2", "--set", f"out={out}"]) == EXIT_OK
    header, *rows = read_csv(out)
    assert header == ["kind", "j_sq", "l_sq", "k_sq", "value"]
    a11 = {(r[1], r[2], r[3]): r[4] for r in rows if r[0] == "A11"}
    assert a11[("1", "1", "1")] == "1/256"
