import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bnkinetic import cli
from bnkinetic.config import PRESETS, SCHEMA, defaults, load_config, parse_config
from bnkinetic.criteria import be_mass_energy
from bnkinetic.errors import ConfigError
from bnkinetic.grid_state import Distribution, VelocityGrid, moment, read_snapshot, write_snapshot

DATA = Path(__file__).parent / "data"

SMALL = """
[grid]
N = 8
V = 4.0
[initial]
amplitude = 0.3
[scheme]
sphere_order = 2
segments = 2
[diagnostics]
hyperplane_directions = 4
hyperplane_offsets = 3
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _report(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        k, v = line.split("=", 1)
        out[k] = v
    return out


# ---- parsing


def test_empty_config_is_defaults_and_echo_round_trips():
    cfg = parse_config("")
    assert cfg.values == defaults()
    echo = cfg.echo()
    for sec, keys in SCHEMA.items():
        assert f"[{sec}]" in echo
        for key, spec in keys.items():
            assert f"# {spec.doc}" in echo
    assert parse_config(echo).values == cfg.values


def test_hard_sphere_preset_golden():
    cfg = parse_config("preset = hard_sphere\n")
    assert cfg.echo() == (DATA / "hard_sphere.effective").read_text(encoding="utf-8")
    p = cfg.kernel_params()
    assert (p.d, p.gamma, p.c_phi, p.b_infinity) == (3, 1.0, 1.0, 1.0)
    assert p.l_b == pytest.approx(4 * math.pi)


def test_every_preset_parses_and_round_trips():
    for name in PRESETS:
        cfg = parse_config(f"preset = {name}\n")
        assert parse_config(cfg.echo()).values == cfg.values


def test_gamma_contract_error():
    with pytest.raises(ConfigError) as exc:
        parse_config("[kernel]\n\ngamma = 1.5\n")
    assert "gamma ∈ [0,1]" in str(exc.value)
    assert exc.value.line == 3
    assert str(exc.value).startswith("line 3:")


@pytest.mark.parametrize("text,line,fragment", [
    ("[grid]\nNN = 8\n", 2, "unknown key"),
    ("[grids]\n", 1, "unknown section"),
    ("speed = 3\n", 1, "unknown top-level key"),
    ("preset = warp\n", 1, "unknown preset"),
    ("[grid]\nN = eight\n", 2, "type mismatch"),
    ("[grid]\nN = 7\n", 2, "N even"),
    ("[grid]\nno equals sign\n", 2, "expected key = value"),
    ("[grid\n", 1, "malformed section"),
    ("[kernel]\nangular_table = 0.5:1, x:2\n", None, ""),
])
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises((ConfigError, ValueError)) as exc:
        parse_config(text)
    if line is not None:
        assert exc.value.line == line
        assert fragment in str(exc.value)


def test_comments_presets_and_tables():
    cfg = parse_config("preset = desk_gaussian  # desk run\n[kernel]\nangular_table = -1:1, 0:2, 1:1\n")
    assert cfg.preset == "desk_gaussian" and cfg["grid"]["N"] == 16
    p = cfg.kernel_params()
    assert float(p.angular(0.0)) == 2.0
    assert float(p.angular(0.5)) == pytest.approx(1.5)


def test_load_config(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL))
    assert cfg["grid"]["N"] == 8 and cfg["scheme"]["segments"] == 2


# ---- simulate


def test_simulate_zero_data_rows(tmp_path):
    code = cli.main(["simulate", "--config", _write(tmp_path, SMALL + "[initial]\nshape = zero\n"),
                     "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_OK
    lines = (tmp_path / "o" / "timeseries.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.CSV_COLUMNS)
    assert len(lines) > 2
    for row in lines[1:]:
        vals = row.split(",")
        assert len(vals) == len(cli.CSV_COLUMNS)
        assert all(v == "0" for v in vals[1:])


def test_simulate_small_gaussian(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["simulate", "--config", _write(tmp_path, SMALL + "[io]\nsnapshot_every = 1\n"), "--out", str(out)])
    assert code == cli.EXIT_OK
    rep = _report(out / "invariants.txt")
    assert rep["weak_ok"] == "true" and rep["blowup"] == "false"
    assert rep["entropy_monotone"] == "true"
    assert rep["segments_run"] == "2"
    assert rep["criterion_t_M"] == "not reached"
    steps = int(rep["steps"])
    # every step plus the initial state
    assert len(list(out.glob("snapshot_*.bnkf"))) == steps + 1
    final, head = read_snapshot(out / "final.bnkf")
    assert head.N == 8 and head.gamma == 1.0
    rows = (out / "timeseries.csv").read_text().splitlines()
    assert len(rows) == steps + 2
    assert float(rows[-1].split(",")[1]) == pytest.approx(moment(final), rel=1e-14)
    assert (out / "config.effective").read_text() == load_config(str(tmp_path / "run.cfg")).echo()


def test_simulate_blowup_exit_code(tmp_path):
    text = SMALL + "[initial]\namplitude = 2.0\n[scheme]\nceiling_factor = 1.000001\n"
    out = tmp_path / "o"
    code = cli.main(["simulate", "--config", _write(tmp_path, text), "--out", str(out)])
    assert code == cli.EXIT_BLOWUP
    rep = _report(out / "invariants.txt")
    assert rep["blowup"] == "true"
    assert float(rep["T_max"]) > 0


def test_simulate_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for k in ("a", "b"):
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / k)]) == cli.EXIT_OK
    for name in ("timeseries.csv", "invariants.txt", "config.effective", "final.bnkf"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rerun_from_effective_config(tmp_path):
    cli.main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", str(tmp_path / "a" / "config.effective"), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()


# ---- criteria


def test_criteria_zero_snapshot_errors(tmp_path, capsys):
    snap = tmp_path / "z.bnkf"
    write_snapshot(snap, Distribution.zeros(VelocityGrid(3, 6, 2.0)), 1.0, 1.0)
    assert cli.main(["criteria", str(snap), "--out", str(tmp_path / "o")]) == cli.EXIT_ERROR
    assert "zero mass" in capsys.readouterr().err


def test_criteria_bose_einstein_round_trip(tmp_path):
    beta, mu = 1.0, -1.0
    g = VelocityGrid(3, 48, 10.0)
    x = 0.5 * beta * (g.radius2 - mu)
    f = Distribution(g, 1.0 / np.expm1(x))
    snap = tmp_path / "be.bnkf"
    write_snapshot(snap, f, 1.0, 1.0)
    assert cli.main(["criteria", str(snap), "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    rep = _report(tmp_path / "o" / "criteria.txt")
    # the profile has poles at |v| = i, so the midpoint rule converges like exp(-2 pi / h)
    m0, m2 = be_mass_energy(beta, mu)
    assert float(rep["M0"]) == pytest.approx(m0, rel=1e-6)
    assert float(rep["fit_beta"]) == pytest.approx(beta, rel=1e-5)
    assert float(rep["fit_mu"]) == pytest.approx(mu, rel=1e-5)
    assert rep["fit_m0"] == "0" and rep["subcritical"] == "true"
    prof = (tmp_path / "o" / "criteria_profile.csv").read_text().splitlines()
    assert prof[0] == "radius,f" and len(prof) == g.size + 1


def test_criteria_compliant_preset_sections(tmp_path):
    cfg = parse_config("preset = compliant\n")
    f = cli.initial_data(cfg)
    snap = tmp_path / "c.bnkf"
    write_snapshot(snap, f, 1.0, 1.0)
    cfg_path = _write(tmp_path, "preset = compliant\n")
    assert cli.main(["criteria", str(snap), "--config", cfg_path, "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    rep = _report(tmp_path / "o" / "criteria.txt")
    assert rep["criterion_condition_ii"] == "true"
    for key in ("criterion_R0", "criterion_Gamma0", "criterion_Q_tilde0", "criterion_Q0_bound", "criterion_C_Q",
                "T_c", "subcritical_coefficient"):
        assert key in rep


def test_malformed_snapshot(tmp_path):
    bad = tmp_path / "bad.bnkf"
    bad.write_bytes(b"NOTBNKF" + b"\0" * 64)
    assert cli.main(["snapshot-info", str(bad)]) == cli.EXIT_ERROR
    assert cli.main(["criteria", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_ERROR


def test_snapshot_info(tmp_path, capsys):
    g = VelocityGrid(3, 6, 2.0)
    f = Distribution(g, np.full(g.size, 0.25))
    write_snapshot(tmp_path / "s.bnkf", f, 0.5, 2.0)
    assert cli.main(["snapshot-info", str(tmp_path / "s.bnkf")]) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "N=6" in text and "gamma=0.5" in text and f"M0={moment(f)!r}" in text


# ---- suites


def test_povzner_minimal(tmp_path):
    text = "[suites]\npovzner_samples = 50\n"
    assert cli.main(["povzner", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    rep = _report(tmp_path / "o" / "povzner.txt")
    assert rep["passed"] == "true" and rep["seed"] == "7"
    for tag in ("i", "ii", "iii"):
        assert rep[f"{tag}_sign_violations"] == "0"
    assert "seed = 7" in (tmp_path / "o" / "config.effective").read_text()


def test_appendix_defaults(tmp_path):
    text = "[suites]\nappendix_samples = 16\n"
    assert cli.main(["appendix", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    rep = _report(tmp_path / "o" / "appendix.txt")
    for key in ("integration_coarse", "integration_fine", "potential_coarse", "potential_fine", "delta_sup"):
        assert math.isfinite(float(rep[key]))
    assert rep["passed"] == "true"


def test_xcheck_small_ladder(tmp_path):
    text = "[suites]\nxcheck_ladder = 8,12,16\nxcheck_points = 4\n[scheme]\nsphere_order = 4\n"
    assert cli.main(["xcheck", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "xcheck.csv").read_text().splitlines()
    assert rows[0] == "N,h,rel_gap" and len(rows) == 4
    assert [int(r.split(",")[0]) for r in rows[1:]] == [8, 12, 16]


def test_carleman_ladder_decreases():
    from bnkinetic.kernel_geometry import KernelParams

    rows = cli.carleman_ladder(KernelParams(), (12, 16, 24), 6.0, 0.05, cli.xcheck_points(3, 4), order=6)
    gaps = [r[2] for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


# ---- command line surface


def test_usage_errors(tmp_path, capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--config", _write(tmp_path, "[kernel]\ngamma = 1.5\n")]) == cli.EXIT_USAGE
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_ERROR


def test_threads_fallback(monkeypatch):
    import numba

    monkeypatch.setenv("BNK_THREADS", "1")
    assert cli._set_threads(None) == 1
    assert numba.get_num_threads() == 1
    assert cli._set_threads(10_000) == numba.config.NUMBA_NUM_THREADS


def test_console_entry_point(tmp_path):
    env = dict(os.environ, BNK_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "bnkinetic.cli", "snapshot-info", str(tmp_path / "none.bnkf")],
                         capture_output=True, text=True, env=env)
    assert res.returncode == cli.EXIT_ERROR
    assert "error" in res.stderr
