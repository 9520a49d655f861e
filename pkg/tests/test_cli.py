import json

import numpy as np
import pytest
import yaml

from fermi_switch import __version__, cli
from fermi_switch.cli import RunConfig, config_from_mapping, load_config, main, run
from fermi_switch.errors import ConfigNotFoundError, ConfigParseError, ConfigValidationError

MINIMAL = {"omega": 1.0, "d_A": 0.02, "d_B": 0.02, "x_A": 0.0, "x_B": 0.15}
FAST = dict(MINIMAL, mode_count=8, samples=7)


def _write(tmp_path, mapping, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping))
    return path


def _table(path):
    return np.loadtxt(path, comments="#", ndmin=2)


def test_minimal_config_gets_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    assert (cfg.mode_count, cfg.k_max, cfg.n_max) == (64, 20.0, 2)
    assert cfg.experiment == "trace" and cfg.initial_state == "switch"
    assert cfg.to_mapping()["mode_count"] == 64


@pytest.mark.parametrize("key,value", [("d_A", "abc"), ("omega", -1), ("mode_count", 63),
                                       ("samples", 0), ("experiment", "magic"),
                                       ("n_max", 1.5), ("fit_window", [0.3, 0.2]),
                                       ("grids", [[64, 20]]), ("margin", 1.0),
                                       ("bogus", 1)])
def test_validation_names_key(tmp_path, key, value):
    with pytest.raises(ConfigValidationError) as info:
        load_config(_write(tmp_path, dict(MINIMAL, **{key: value})))
    assert info.value.key == key
    assert key in str(info.value)


def test_missing_required_key(tmp_path):
    data = dict(MINIMAL)
    del data["x_B"]
    with pytest.raises(ConfigValidationError, match="x_B"):
        load_config(_write(tmp_path, data))


def test_error_categories(tmp_path):
    with pytest.raises(ConfigNotFoundError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("omega: [1, 2\n")
    with pytest.raises(ConfigParseError):
        load_config(bad)
    with pytest.raises(ConfigValidationError):
        config_from_mapping(["not", "a", "mapping"])


def test_trace_run(tmp_path):
    cfg = config_from_mapping(FAST)
    status, summary = run(cfg, tmp_path / "out", emit_plot=True)
    assert status == 0 and summary["status"] == "pass"
    data = _table(tmp_path / "out" / "trace.dat")
    assert data.shape == (7, 3)
    assert abs(data[0, 1] - 0.5) <= 1e-12 and abs(data[0, 2] - 0.5) <= 1e-12
    text = (tmp_path / "out" / "trace.dat").read_text()
    assert text.startswith(f"# fermi-switch {__version__}\n")
    assert "# columns: t p_eA p_eB" in text
    for key in RunConfig.__dataclass_fields__:
        assert f"# {key}: " in text
    assert (tmp_path / "out" / "trace.gp").read_text().startswith(f"# fermi-switch {__version__}")
    loaded = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert loaded["invariants"]["initial_probabilities"]["pass"] is True


def test_rows_have_17_significant_digits(tmp_path):
    run(config_from_mapping(FAST), tmp_path)
    rows = [l for l in (tmp_path / "trace.dat").read_text().splitlines() if not l.startswith("#")]
    value = rows[3].split()[1]
    assert float(value) == float(f"{float(value):.17g}")
    assert len(value.replace("0.", "").lstrip("0")) >= 15


def test_config_echo_round_trip(tmp_path):
    cfg = config_from_mapping(dict(FAST, fit_window=[0.15, 0.3], grids=[[8, 20.0, 1]]))
    _, summary = run(cfg, tmp_path)
    echoed = json.loads((tmp_path / "summary.json").read_text())["config"]
    assert config_from_mapping(echoed) == cfg
    assert load_config(_write(tmp_path, echoed, "echo.yaml")) == cfg


def test_reruns_are_identical(tmp_path):
    cfg = config_from_mapping(dict(FAST, experiment="causality"))
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("causality.dat", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_commutator_check(tmp_path):
    cfg = config_from_mapping(dict(MINIMAL, experiment="commutator_check", depth=4))
    status, summary = run(cfg, tmp_path)
    assert status == 0 and summary["status"] == "pass"
    for seed in ("sx", "sy"):
        assert all(e["support"] == ["A"] for e in summary["results"]["seeds"][seed])
    assert _table(tmp_path / "commutator_check.dat").shape == (5, 5)


def test_theory_curves(tmp_path):
    cfg = config_from_mapping(dict(MINIMAL, experiment="theory_curves"))
    status, _ = run(cfg, tmp_path)
    data = _table(tmp_path / "theory_curves.dat")
    before = data[:, 0] < 0.15
    assert status == 0
    assert np.all(data[before, 2] == 0) and np.all(data[~before & (data[:, 0] > 0.15), 2] > 0)


@pytest.mark.parametrize("experiment", ["slope_fit", "convergence"])
def test_other_experiments(tmp_path, experiment):
    cfg = config_from_mapping(dict(FAST, experiment=experiment, samples=31,
                                   grids=[[8, 20.0, 1], [16, 20.0, 1]]))
    status, summary = run(cfg, tmp_path)
    assert status == 0
    assert (tmp_path / f"{experiment}.dat").exists()


def test_invariant_violation_exit_code(tmp_path):
    cfg = config_from_mapping(dict(FAST, experiment="causality", pre_cone_tolerance=1e-300))
    status, summary = run(cfg, tmp_path)
    assert status == 3 and summary["status"] == "fail"
    assert summary["invariants"]["pre_cone"]["pass"] is False


def test_partial_outputs_removed(tmp_path, monkeypatch):
    def boom(*args):
        raise RuntimeError("disk full")
    monkeypatch.setattr(cli, "_plot_script", boom)
    with pytest.raises(RuntimeError):
        run(config_from_mapping(FAST), tmp_path, emit_plot=True)
    assert list(tmp_path.iterdir()) == []


def test_main_run_and_validate(tmp_path, capsys, monkeypatch):
    path = _write(tmp_path, FAST)
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env_out"))
    assert main(["run", str(path), "--threads", "1"]) == 0
    assert (tmp_path / "env_out" / "trace.dat").exists()
    assert main(["run", str(path), "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "summary.json").exists()
    assert main(["validate", str(path)]) == 0
    assert "mode_count: 8" in capsys.readouterr().out


def test_main_error_codes(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2
    bad = _write(tmp_path, dict(MINIMAL, d_A="abc"))
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "d_A" in capsys.readouterr().err
    big = _write(tmp_path, dict(MINIMAL, mode_count=2000, n_max=3), "big.yaml")
    assert main(["run", str(big), "--out", str(tmp_path / "o")]) == 4


def test_sweep(tmp_path):
    path = _write(tmp_path, dict(FAST, experiment="theory_curves"))
    assert main(["sweep", str(path), "--out", str(tmp_path / "sw"),
                 "--vary", "d_B=0.0,0.02", "--vary", "x_B=0.1,0.2"]) == 0
    index = json.loads((tmp_path / "sw" / "sweep.json").read_text())
    assert [r["name"] for r in index["runs"]] == ["d_B=0.0,x_B=0.1", "d_B=0.0,x_B=0.2",
                                                  "d_B=0.02,x_B=0.1", "d_B=0.02,x_B=0.2"]
    zero = _table(tmp_path / "sw" / "d_B=0.0,x_B=0.1" / "theory_curves.dat")
    assert np.all(zero[:, 2] == 0)
    assert main(["sweep", str(path), "--vary", "d_B"]) == 2
    assert main(["sweep", str(path), "--out", str(tmp_path / "x"), "--vary", "omega=-1"]) == 2
