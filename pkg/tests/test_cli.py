import numpy as np
import pytest

from qdsdc import cli, sweep
from qdsdc.writers import read_pgm

FAST = "[grid]\ndt = 0.25 ps\ndtau = 0.25 ps\n[sweep]\nn_voltages = 3\n"


@pytest.fixture
def fast_cfg(tmp_path):
    p = tmp_path / "fast.cfg"
    p.write_text(FAST)
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_writes_spectrum(tmp_path, fast_cfg, capsys):
    assert run("simulate", "--config", fast_cfg, "--out", tmp_path) == 0
    text = (tmp_path / "spectrum.tsv").read_text()
    assert text.startswith("# qdsdc spectrum\n")
    assert "# scenario\tfig5a" in text
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert len(rows) == 1801
    assert "strongest bin" in capsys.readouterr().out


def test_sweep_outputs_independent_of_workers(tmp_path, fast_cfg):
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert run("sweep", "--config", fast_cfg, "--out", out,
                   "--workers", w) == 0
        outs.append(out)
    for name in ("map.tsv", "map.meta.txt", "tracks.tsv", "heatmap.pgm"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert read_pgm(outs[0] / "heatmap.pgm").shape == (1801, 3)


def test_mask_notches_zeroes_laser_bands(tmp_path, fast_cfg):
    assert run("sweep", "--config", fast_cfg, "--out", tmp_path,
               "--mask-notches") == 0
    lines = (tmp_path / "map.tsv").read_text().splitlines()
    energies = np.array(next(ln for ln in lines
                             if ln.startswith("# energy_meV")).split("\t")[1:],
                        dtype=float)
    data = np.loadtxt(tmp_path / "map.tsv", comments="#")
    near = np.abs(energies - 1341.17) <= 0.4
    assert not np.any(data[near])
    assert "1340.77\t1341.57" in (tmp_path / "map.meta.txt").read_text()


def test_config_hash_depends_on_scenario(tmp_path, fast_cfg):
    hashes = set()
    for name in ("fig5a", "fig5b"):
        out = tmp_path / name
        assert run("simulate", "--config", fast_cfg, "--out", out,
                   "--scenario", name) == 0
        head = (out / "spectrum.tsv").read_text().splitlines()[2]
        hashes.add(head)
    assert len(hashes) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[pulses]\nsigma = -5 ps\n")
    assert run("simulate", "--config", bad, "--out", tmp_path) == 2
    assert "line 2" in capsys.readouterr().err
    assert run("simulate", "--config", tmp_path / "missing.cfg") == 2
    assert run("sweep", "--scenario", "custom", "--out", tmp_path) == 2
    assert run("sweep", "--workers", 0) == 2
    bias = tmp_path / "bias.cfg"
    bias.write_text("[device]\nbias = 3 V\n")
    assert run("simulate", "--config", bias, "--out", tmp_path) == 2


def test_custom_scenario_uses_config_voltages(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(FAST + "v_start = 0.3 V\nv_stop = 0.5 V\n"
                   "[pulses]\ncontrol_energy = 1342.0 meV\n")
    assert run("sweep", "--config", cfg, "--out", tmp_path,
               "--scenario", "custom") == 0
    text = (tmp_path / "map.tsv").read_text()
    assert "# voltage_V\t0.3\t0.4\t0.5" in text
    assert "control_energy = 1342.0 meV" in \
        (tmp_path / "map.meta.txt").read_text()


def test_failed_columns_exit_3(tmp_path, fast_cfg, monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("synthetic failure")

    monkeypatch.setattr(sweep, "simulate_spectrum", boom)
    assert run("sweep", "--config", fast_cfg, "--out", tmp_path) == 3
    meta = (tmp_path / "map.meta.txt").read_text()
    assert "partial map: 3 of 3 columns failed" in meta


def test_runtime_error_exit_3(tmp_path, fast_cfg, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(cli, "simulate_spectrum", boom)
    assert run("simulate", "--config", fast_cfg, "--out", tmp_path) == 3


def test_oracle_report_and_failure_exit(capsys):
    args = ("oracle", "--dt", 0.1, "--horizon", 10, "--substeps", 4)
    assert run(*args, "--tolerance", 1.0) == 0
    out = capsys.readouterr().out
    assert "max Frobenius deviation" in out
    assert run(*args, "--tolerance", 1e-30) == 1


def test_validate_quick_passes(capsys):
    assert run("validate", "--quick") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.strip().endswith("checks passed")


def test_validate_exit_1_on_failure(monkeypatch, capsys):
    from qdsdc.validation import CheckResult
    monkeypatch.setattr(cli, "run_all", lambda quick, workers: [
        CheckResult("ok", True, ""), CheckResult("broken", False, "x")])
    assert run("validate") == 1
    assert "FAIL  broken" in capsys.readouterr().out
