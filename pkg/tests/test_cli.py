import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from scarkit.cli import (
    ExperimentConfig,
    _resolve_threads,
    main,
    parse_config,
    serialize_config,
)
from scarkit.errors import SpecParseError

SQRT2_FREQ = """\
generators = one:1, sqrt2:1.414213562373095048801688724209698078570
omega_1 = 1 0
omega_2 = 0 1
"""

BASE_CFG = """\
spec = sqrt2.freq
E = 1/2 1/2
z0 = from-witness
hbar_start = 0.2
hbar_ratio = 0.5
hbar_count = 5
seed = 0
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "sqrt2.freq").write_text(SQRT2_FREQ)
    (tmp_path / "run.cfg").write_text(BASE_CFG)
    return tmp_path


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# scarkit 0.1.0 config=")
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    rows = [ln.split(",") for ln in body[1:]]
    return header, rows


# ---------------------------------------------------------------------------
# config parsing


def test_parse_config_round_trip():
    cfg = parse_config(BASE_CFG)
    assert cfg.spec == "sqrt2.freq"
    assert cfg.E == (0.5, 0.5)
    assert cfg.z0 is None
    assert cfg.hbars == (0.2, 0.1, 0.05, 0.025, 0.0125)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_parse_config_explicit_z0():
    text = BASE_CFG.replace("z0 = from-witness", "z0 = 1.0 0.5 / 0.0 -0.25")
    cfg = parse_config(text)
    assert cfg.z0 == ((1.0, 0.5), (0.0, -0.25))
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.mark.parametrize(
    "mangle",
    [
        lambda t: t + "seed = 1\n",  # duplicate key
        lambda t: t + "frobnicate = 3\n",  # unknown key
        lambda t: t.replace("E = 1/2 1/2\n", ""),  # missing required
        lambda t: t.replace("hbar_ratio = 0.5", "hbar_ratio = 1.5"),
        lambda t: t.replace("hbar_count = 5", "hbar_count = 2"),
        lambda t: t.replace("E = 1/2 1/2", "E = 1/0 1/2"),
        lambda t: t.replace("z0 = from-witness", "z0 = 1.0 / 0.0 0.0"),
        lambda t: t + "just some words\n",
    ],
)
def test_parse_config_rejects(mangle):
    with pytest.raises(SpecParseError):
        parse_config(mangle(BASE_CFG))


def test_parse_config_reports_line_numbers():
    with pytest.raises(SpecParseError) as err:
        parse_config(BASE_CFG + "# fine\nwhat\n")
    assert err.value.line == len(BASE_CFG.splitlines()) + 2


def test_resolve_threads_precedence(monkeypatch):
    monkeypatch.delenv("SCARKIT_THREADS", raising=False)
    assert _resolve_threads(None, 4) == 4
    monkeypatch.setenv("SCARKIT_THREADS", "2")
    assert _resolve_threads(None, 4) == 2
    assert _resolve_threads(8, 4) == 8


def test_hbars_schedule_is_geometric():
    cfg = ExperimentConfig(
        spec="s", E=(1.0,), hbar_start=0.4, hbar_ratio=0.25, hbar_count=3
    )
    assert cfg.hbars == pytest.approx((0.4, 0.1, 0.025))


# ---------------------------------------------------------------------------
# analyze / levels


def test_analyze_table(workdir, capsys):
    assert main(["analyze", str(workdir / "sqrt2.freq")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "d_omega = 2"
    assert "T = 6.2831853071795862" in out[1]
    assert "conductor = 0" in out[1]
    assert f"T = {2 * math.pi / math.sqrt(2):.17g}" in out[2]


def test_analyze_resonant_pair(tmp_path, capsys):
    path = tmp_path / "r.freq"
    path.write_text("generators = one:1\nomega_1 = 2\nomega_2 = 3\n")
    assert main(["analyze", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "d_omega = 1"
    assert "k = 2 3" in out[1]
    assert "conductor = 2" in out[1]
    assert "zero_point = 5" in out[1]


def test_analyze_bad_rational_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.freq"
    path.write_text("generators = one:1\nomega_1 = 1/0\n")
    assert main(["analyze", str(path)]) == 2
    assert "1/0" in capsys.readouterr().err


def test_analyze_missing_file_exits_2(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "nope.freq")]) == 2
    assert "nope.freq" in capsys.readouterr().err


def test_levels_stdout(workdir, capsys):
    rc = main(
        ["levels", str(workdir / "sqrt2.freq"),
         "--hbar", "0.5", "--lo", "1.9", "--hi", "2.2"]
    )
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# scarkit 0.1.0 config=")
    assert lines[1] == "k1,k2,lambda,multiplicity,lambda_1,lambda_2"
    ks = {tuple(ln.split(",")[:2]) for ln in lines[2:]}
    assert ks == {("0", "2"), ("3", "0")}


def test_levels_to_file(workdir):
    out = workdir / "levels.csv"
    rc = main(
        ["levels", str(workdir / "sqrt2.freq"),
         "--hbar", "0.5", "--lo", "1.9", "--hi", "2.2", "--out", str(out)]
    )
    assert rc == 0
    header, rows = read_csv(out)
    assert header[:2] == ["k1", "k2"]
    assert len(rows) == 2


# ---------------------------------------------------------------------------
# sweep


def test_sweep_writes_outputs(workdir):
    rc = main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "o")])
    assert rc == 0
    header, rows = read_csv(workdir / "o" / "rows.csv")
    assert header == [
        "hbar", "observable", "value_re", "value_im",
        "reference_re", "reference_im", "residual",
    ]
    names = {r[1] for r in rows}
    assert "c_hbar" in names and "gap:x1^2" in names
    hbars = {float(r[0]) for r in rows}
    assert hbars == {0.2, 0.1, 0.05, 0.025, 0.0125}

    sheader, srows = read_csv(workdir / "o" / "slopes.csv")
    assert sheader == ["observable", "slope"]
    assert {r[0] for r in srows} == names

    theader, trows = read_csv(workdir / "o" / "targets.csv")
    assert theader == [
        "hbar", "N_1", "lambda_1", "window_ok_1",
        "N_2", "lambda_2", "window_ok_2", "lambda_total",
    ]
    assert len(trows) == 5
    for row in trows:
        assert row[3] == "1" and row[6] == "1"

    summary = (workdir / "o" / "summary.txt").read_text()
    assert summary.startswith("# scarkit 0.1.0 config=")
    assert "slope c_hbar" in summary and "FAIL" not in summary


def test_sweep_reruns_byte_identical(workdir):
    main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "a")])
    main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "b"),
          "--threads", "3"])
    for name in ("rows.csv", "slopes.csv", "targets.csv", "summary.txt"):
        assert (workdir / "a" / name).read_bytes() == (
            workdir / "b" / name
        ).read_bytes()


def test_sweep_env_threads(workdir, monkeypatch):
    monkeypatch.setenv("SCARKIT_THREADS", "2")
    main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "e")])
    baseline = workdir / "a.cfg"  # same config, env unset
    monkeypatch.delenv("SCARKIT_THREADS")
    main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "f")])
    assert (workdir / "e" / "rows.csv").read_bytes() == (
        workdir / "f" / "rows.csv"
    ).read_bytes()
    assert not baseline.exists()


def test_sweep_bad_env_threads(workdir, monkeypatch, capsys):
    monkeypatch.setenv("SCARKIT_THREADS", "many")
    rc = main(["sweep", str(workdir / "run.cfg"), "--out", str(workdir / "g")])
    assert rc == 2
    assert "SCARKIT_THREADS" in capsys.readouterr().err


def test_sweep_infeasible_energy_exits_3(workdir, capsys):
    cfg = workdir / "bad.cfg"
    cfg.write_text(BASE_CFG.replace("E = 1/2 1/2", "E = 0.7 0.7"))
    rc = main(["sweep", str(cfg), "--out", str(workdir / "h")])
    assert rc == 3
    assert "simplex" in capsys.readouterr().err
    assert not (workdir / "h").exists()


def test_sweep_custom_symbols(workdir):
    cfg = workdir / "sym.cfg"
    cfg.write_text(BASE_CFG + "symbols = x1^2; H1\n")
    rc = main(["sweep", str(cfg), "--out", str(workdir / "s")])
    assert rc == 0
    _, rows = read_csv(workdir / "s" / "rows.csv")
    gaps = {r[1] for r in rows if r[1].startswith("gap:")}
    assert gaps == {"gap:x1^2", "gap:H1"}
    summary = (workdir / "s" / "summary.txt").read_text()
    assert "slope gap:x1^2" in summary and "band" in summary


# ---------------------------------------------------------------------------
# husimi / dump


def test_husimi_ring_shape(workdir):
    rc = main(
        ["husimi", str(workdir / "run.cfg"), "--mode", "1",
         "--grid", "41", "--out", str(workdir / "hu")]
    )
    assert rc == 0
    header, rows = read_csv(workdir / "hu" / "husimi_mode1.csv")
    assert header == ["x1", "xi1", "value"]
    pts = [(float(x), float(xi), float(v)) for x, xi, v in rows]
    x_best, xi_best, v_best = max(pts, key=lambda p: p[2])
    # at hbar = 0.2 the state holds mode-1 level N = 2; the density rides
    # the ring of radius sqrt(2 hbar N), flat in angle
    r_best = math.hypot(x_best, xi_best)
    assert abs(r_best - math.sqrt(2 * 0.2 * 2)) < 0.15
    center = min(pts, key=lambda p: math.hypot(p[0], p[1]))
    assert center[2] < 0.05 * v_best
    by_cell = {(round(x, 9), round(xi, 9)): v for x, xi, v in pts}
    swapped = by_cell[(round(xi_best, 9), round(x_best, 9))]
    assert swapped == pytest.approx(v_best, rel=1e-6)


def test_husimi_mode_out_of_range(workdir, capsys):
    rc = main(
        ["husimi", str(workdir / "run.cfg"), "--mode", "5",
         "--out", str(workdir / "hm")]
    )
    assert rc == 2
    assert "mode" in capsys.readouterr().err


def test_husimi_from_dumped_state(workdir):
    rc = main(["dump", str(workdir / "run.cfg"), "--out", str(workdir / "d")])
    assert rc == 0
    state_file = workdir / "d" / "state.csv"
    assert state_file.exists()
    rc = main(
        ["husimi", str(workdir / "run.cfg"), "--mode", "2", "--grid", "21",
         "--state", str(state_file), "--out", str(workdir / "d2")]
    )
    assert rc == 0
    _, rows = read_csv(workdir / "d2" / "husimi_mode2.csv")
    assert len(rows) == 21 * 21
    assert max(float(r[2]) for r in rows) > 0


def test_husimi_empty_state_file(workdir, capsys):
    empty = workdir / "empty.csv"
    empty.write_text("")
    rc = main(
        ["husimi", str(workdir / "run.cfg"), "--mode", "1",
         "--state", str(empty), "--out", str(workdir / "he")]
    )
    assert rc == 2
    assert "state file" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# entry point


def test_console_script_runs(workdir):
    proc = subprocess.run(
        [sys.executable, "-m", "scarkit.cli", "analyze", str(workdir / "sqrt2.freq")],
        capture_output=True,
        text=True,
        env={**os.environ},
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("d_omega = 2")
