import subprocess
import sys
from pathlib import Path

import pytest

from powertalk.cli import main

GOLDEN = Path(__file__).parent / "golden"
ROOT = Path(__file__).parent.parent


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


BER_SWEEP = """kind: ber
base: paper_fig7
trials: 20000
seed: 3
axes:
  gamma: [0.0, 0.004, 0.01]
  t_pt: {linspace: [0.003, 0.01, 2]}
"""

MU_SWEEP = """kind: mu
base: paper_mu
trials: 2
seed: 1
axes:
  lambda: [0.0, 0.0003]
  M: [2, 4]
"""


def test_ber_sweep_header_and_rows(tmp_path):
    spec = write(tmp_path, "b.yaml", BER_SWEEP)
    out = tmp_path / "b.csv"
    assert main(["ber-sweep", "--config", str(spec), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] + "\n" == (GOLDEN / "ber_header.csv").read_text()
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 6
    keys = [(float(r[0]), float(r[1])) for r in rows]
    assert keys == sorted(keys)
    zero = [r for r in rows if float(r[0]) == 0.0]
    assert all(float(r[4]) == 0.5 for r in zero)
    assert all(abs(float(r[5]) - 0.5) < 0.02 for r in zero)


def test_ber_sweep_worker_count_invariant(tmp_path):
    spec = write(tmp_path, "b.yaml", BER_SWEEP)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["ber-sweep", "--config", str(spec), "--out", str(a), "--workers", "1"]) == 0
    assert main(["ber-sweep", "--config", str(spec), "--out", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_mu_sweep_header_and_zero_rate(tmp_path):
    spec = write(tmp_path, "m.yaml", MU_SWEEP)
    out = tmp_path / "m.csv"
    assert main(["mu-sweep", "--config", str(spec), "--out", str(out), "--workers", "2"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] + "\n" == (GOLDEN / "mu_header.csv").read_text()
    rows = [l.split(",") for l in lines[1:]]
    for r in rows:
        if float(r[0]) == 0.0:
            assert float(r[3]) == 8952 * 0.0025 and float(r[2]) == float(r[3])


def test_trials_and_seed_override(tmp_path):
    spec = write(tmp_path, "b.yaml", BER_SWEEP)
    out = tmp_path / "b.csv"
    assert main(["ber-sweep", "--config", str(spec), "--out", str(out), "--trials", "100", "--seed", "4"]) == 0
    assert out.read_text().splitlines()[1].endswith(",100")


def test_run_writes_outputs(tmp_path, capsys):
    assert main(["run", "--config", "paper_fig5", "--out", str(tmp_path)]) == 0
    assert "handshake_completed: True" in capsys.readouterr().out
    assert (tmp_path / "events.log").read_text().startswith("0\tstart")
    assert (tmp_path / "trace.csv").read_text().startswith("time,v_bus,i_0,")
    assert "completion_time: 22.38" in (tmp_path / "metrics.txt").read_text()


def test_run_seed_override(tmp_path):
    assert main(["run", "--config", "paper_fig5", "--seed", "9", "--out", str(tmp_path)]) == 0
    assert "seed=9" in (tmp_path / "events.log").read_text().splitlines()[0]


def test_malformed_config_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "bad.yaml", "name: x\nseed: 1\nduration: 10\ngrid:\n  r_load: 1.5\n  unitz: []\n")
    assert main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "grid.unitz" in err and "line 6" in err


def test_bad_sweep_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "s.yaml", BER_SWEEP.replace("gamma:", "gama:"))
    assert main(["ber-sweep", "--config", str(bad)]) == 2
    assert "axes.gama" in capsys.readouterr().err
    bad = write(tmp_path, "s2.yaml", BER_SWEEP.replace("[0.0, 0.004, 0.01]", "[0.0, -1.0]"))
    assert main(["ber-sweep", "--config", str(bad)]) == 2
    assert main(["mu-sweep", "--config", str(write(tmp_path, "s3.yaml", BER_SWEEP))]) == 2


def test_validate(tmp_path, capsys):
    assert main(["validate", "--config", "paper_fig6"]) == 0
    assert main(["validate", "--config", str(ROOT / "sweeps" / "ber_grid.yaml")]) == 0
    out = capsys.readouterr().out
    assert "ok: scenario paper_fig6" in out and "ok: ber sweep" in out
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_invariant_violation_exit_1(tmp_path, monkeypatch):
    import powertalk.sim.engine as engine

    monkeypatch.setattr(engine, "kcl_residual", lambda st, load: 1.0)
    assert main(["run", "--config", "paper_fig7", "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "powertalk", "validate", "--config", "paper_fig5"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("ok:")
