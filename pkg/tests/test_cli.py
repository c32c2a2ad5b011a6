import hashlib
import json
from pathlib import Path

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcool import cli
from mvcool.config import ExperimentConfig, load_config, parse_config
from mvcool.errors import ConfigError
from mvcool.tables import Table, read_table, write_table

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


def _run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data), encoding="utf-8")
    return p


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_example_configs_run(path, tmp_path, capsys):
    code, out, err = _run(["run", path, "--out", tmp_path], capsys)
    assert code == 0, err
    assert (tmp_path / "config.resolved.yaml").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["run"] == load_config(path).kind
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest


def test_same_seed_gives_identical_files(tmp_path, capsys):
    cfg = CONFIGS[[p.stem for p in CONFIGS].index("cool_noisy")]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(["run", cfg, "--out", a], capsys)[0] == 0
    assert _run(["run", cfg, "--out", b, "--threads", "2"], capsys)[0] == 0
    for name in ("series.csv", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override_changes_noisy_result(tmp_path, capsys):
    cfg = CONFIGS[[p.stem for p in CONFIGS].index("bsb_fit")]
    _run(["run", cfg, "--out", tmp_path / "a"], capsys)
    _run(["run", cfg, "--out", tmp_path / "b", "--seed", "99"], capsys)
    assert (tmp_path / "a" / "curve.csv").read_bytes() != (tmp_path / "b" / "curve.csv").read_bytes()


def test_echo_config_round_trips(tmp_path, capsys):
    src = _write(tmp_path, {"kind": "optimize", "initial": {"nbar": 12}})
    code, echoed, _ = _run(["run", src, "--echo-config", "--out", tmp_path / "o1"], capsys)
    assert code == 0
    data = yaml.safe_load(echoed)
    assert data["trap"]["eta"] == 0.05 and data["noise"]["heating_rate"] == 10.0
    again = _write(tmp_path, data, "echo.yaml")
    _run(["run", src, "--out", tmp_path / "o1"], capsys)
    _run(["run", again, "--out", tmp_path / "o1b"], capsys)
    assert (tmp_path / "o1" / "result.json").read_bytes() == (tmp_path / "o1b" / "result.json").read_bytes()


def test_unknown_key_is_config_error(tmp_path, capsys):
    src = _write(tmp_path, {"kind": "optimize", "noise": {"heatng_rate": 5}})
    code, _, err = _run(["run", src], capsys)
    assert code == 2
    assert err.startswith("mvcool: error=config code=2 message=") and "heatng_rate" in err
    assert err.count("\n") == 1


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = _run(["run", tmp_path / "nope.yaml"], capsys)
    assert code == 4
    assert "error=io code=4" in err


def test_truncation_is_numerical_error(tmp_path, capsys):
    src = _write(tmp_path, {"kind": "cool-quantum", "mode": "fock", "dim": 8, "initial": {"nbar": 34},
                            "output": {"dir": str(tmp_path / "o")}})
    code, _, err = _run(["run", src], capsys)
    assert code == 3
    assert "error=numerical code=3" in err and "TruncationTooSmall" in err


def test_bad_thread_env(tmp_path, capsys, monkeypatch):
    src = _write(tmp_path, {"kind": "optimize", "output": {"dir": str(tmp_path / "o")}})
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert _run(["run", src], capsys)[0] == 2


def test_short_explicit_schedule_rejected(tmp_path, capsys):
    src = _write(tmp_path, {"kind": "cool-quantum", "rounds": 3, "schedule": [{"epsilon": 0.1, "alpha": 0.5}],
                            "output": {"dir": str(tmp_path / "o")}})
    assert _run(["run", src], capsys)[0] == 2


@pytest.mark.parametrize("kind", ["fig2", "fig3", "figS1"])
def test_figure_tables(kind, tmp_path, capsys):
    code, out, err = _run(["figures", kind, "--out", tmp_path], capsys)
    assert code == 0, err
    files = [Path(line) for line in out.split()]
    assert files
    for f in files:
        raw = f.read_bytes()
        assert b"\r" not in raw
        table = read_table(f)
        assert len(table.units) == len(table.columns)
        assert table.rows


def test_fig3_reference_column(tmp_path, capsys):
    _run(["figures", "fig3", "--out", tmp_path], capsys)
    t = read_table(tmp_path / "fig3_nbar34.csv")
    ref = [float(r[3]) for r in t.rows]
    assert ref[1] / ref[0] == pytest.approx(0.6321, abs=1e-4)


def test_config_defaults():
    cfg = parse_config({"kind": "cool-noisy"})
    assert cfg.trap.omega == pytest.approx(2 * 3.141592653589793 * 1.7e6)
    assert cfg.noise.build().mains == ()
    assert cfg.radial.build().nbars == (0.0, 0.0)
    assert parse_config({"kind": "cool-noisy", "noise": {"enabled": False}}).noise.build().heating_rate == 0.0


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config({"kind": "optimize", "initial": {"nbar": -1}})
    with pytest.raises(ConfigError):
        parse_config({"kind": "teleport"})
    with pytest.raises(ConfigError):
        parse_config({"kind": "cool-quantum", "schedule": []})


@given(st.floats(0, 100), st.integers(0, 20), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_resolved_yaml_round_trip(nbar, rounds, seed):
    cfg = parse_config({"kind": "cool-quantum", "initial": {"nbar": nbar}, "rounds": rounds, "seed": seed})
    assert ExperimentConfig.model_validate(yaml.safe_load(cfg.resolved_yaml())) == cfg


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
@settings(max_examples=25, deadline=None)
def test_table_floats_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("t") / "t.csv"
    t = Table([f"c{i}" for i in range(len(values))], ["u"] * len(values))
    t.add(*values)
    write_table(path, t)
    back = read_table(path)
    assert [float(v) for v in back.rows[0]] == values


def test_table_width_checked():
    t = Table(["a", "b"], ["x", "y"])
    with pytest.raises(ValueError):
        t.add(1)
