import os
from pathlib import Path

import numpy as np
import pytest

from pathclosure.cli import main, run_command
from pathclosure.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# pathclosure ")
    header = lines[1].split(",")
    rows = [l.split(",") for l in lines[2:]]
    return header, rows


def test_parse_basic():
    cfg = parse_config("[harmonic]\nkappa = 1.0  # comment\n\n[grid]\nlower = -4\nupper = 4\nspacing = 1e-2\n")
    assert cfg.get("harmonic", "kappa") == 1.0
    assert cfg.get("grid", "spacing") == (0.01,)
    assert cfg.get("harmonic", "u0") == 1.0  # default filled in


def test_parse_lists_and_words():
    cfg = parse_config("[model]\nname = oscillator\n[grid]\nlower = -2, -2\nupper = 2 2\npoints = 21, 21\n")
    assert cfg.get("model", "name") == "oscillator"
    assert cfg.get("grid", "upper") == (2.0, 2.0) and cfg.get("grid", "points") == (21, 21)


def test_range_error_names_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("[model]\n\nbeta = -1\n")
    assert exc.value.errors == ["line 3: beta = -1 must be positive"]


def test_all_errors_reported():
    text = "\n".join([
        "[model]",
        "beta = -1",         # range
        "kappa = abc",       # type
        "colour = red",      # unknown key
        "[nowhere]",         # unknown section
        "[grid]",
        "points = 10",       # below minimum
        "points = 20",       # duplicate
        "[harmonic]",
        "t_restart = 6",     # cross-check against default horizon 5
    ])
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    lines = sorted(int(e.split(":")[0].split()[1]) for e in exc.value.errors)
    assert lines == [2, 3, 4, 5, 7, 8, 10]


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'speed'"):
        parse_config("[steady]\nspeed = 3\n")


def test_key_outside_section():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("kappa = 1\n")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_presets_parse(name):
    load_config(CONFIGS / name)


def test_fig2_preset(tmp_path):
    code, files = run_command("harmonic", load_config(CONFIGS / "fig2.cfg"), str(tmp_path))
    assert code == 0
    names = {os.path.basename(f) for f in files}
    assert {"fig2a.csv", "fig2b.csv"} <= names
    header, rows = _read_csv(tmp_path / "fig2a.csv")
    assert header == ["t", "u_original", "u_restarted"]
    table = {round(float(r[0]), 6): r for r in rows}
    assert abs(float(table[1.5][1]) - 0.425096034942280) < 1e-9
    assert abs(float(table[3.0][1]) - 0.0993279274194332) < 1e-9
    assert abs(float(table[3.0][2]) - 0.180706638923649) < 1e-9
    header, _ = _read_csv(tmp_path / "fig2b.csv")
    assert header == ["T", "uT", "psi"]


def test_byte_identical(tmp_path):
    cfg = load_config(CONFIGS / "fig2.cfg")
    run_command("harmonic", cfg, str(tmp_path / "a"), 7)
    run_command("harmonic", cfg, str(tmp_path / "b"), 7)
    for f in ("fig2a.csv", "fig2b.csv", "fig3.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_montecarlo_geometry_deterministic(tmp_path):
    text = ("[model]\nname = oscillator\n[provider]\nkind = montecarlo\ncount = 2000\n"
            "[grid]\nlower = -1, -1\nupper = 1, 1\npoints = 16, 16\n")
    cfg = parse_config(text)
    run_command("geometry", cfg, str(tmp_path / "a"), 3)
    run_command("geometry", cfg, str(tmp_path / "b"), 3)
    run_command("geometry", cfg, str(tmp_path / "c"), 4)
    a, b, c = ((tmp_path / d / "geometry.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_steady_two_seeds(tmp_path):
    cfg = load_config(CONFIGS / "harmonic.cfg")
    for seed in (1, 2):
        code, _ = run_command("steady", cfg, str(tmp_path / str(seed)), seed)
        assert code == 0
    psi = [np.array([float(r[-1]) for r in _read_csv(tmp_path / str(s) / "steady.csv")[1]]) for s in (1, 2)]
    h = 0.01
    assert h * np.sum(np.abs(psi[0] - psi[1])) < 1e-8


def test_identities_oscillator(tmp_path):
    code, _ = run_command("identities", load_config(CONFIGS / "osc.cfg"), str(tmp_path))
    assert code == 0
    _, rows = _read_csv(tmp_path / "identities.csv")
    assert rows and all(r[-1] == "true" for r in rows)
    _, rows = _read_csv(tmp_path / "decomposition.csv")
    assert all(r[-1] == "true" for r in rows)


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[model]\nbeta = -1\n")
    assert main(["harmonic", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["harmonic", str(tmp_path / "missing.cfg")]) == 1
    osc = tmp_path / "osc.cfg"
    osc.write_text("[model]\nname = oscillator\n[weaknoise]\nguess = 0.1, 0.1\nlam0 = 1, 0\n")
    assert main(["weaknoise", str(osc), "--out", str(tmp_path)]) == 2
    slow = tmp_path / "slow.cfg"
    slow.write_text("[grid]\nlower = -4\nupper = 4\nspacing = 0.05\n[steady]\nn_sub = 5\nmax_iter = 2\nspectrum = 0\n")
    assert main(["steady", str(slow), "--out", str(tmp_path / "s")]) == 2
    assert (tmp_path / "s" / "steady_summary.csv").exists()  # report still written
    ok = tmp_path / "ok.cfg"
    ok.write_text("[extremal]\nn_nodes = 200\n")
    assert main(["extremal", str(ok), "--out", str(tmp_path / "e")]) == 0


def test_invalid_subcommand_input(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("[model]\nname = harmonic\n")
    assert main(["identities", str(cfg), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["nonsense", str(cfg)])
