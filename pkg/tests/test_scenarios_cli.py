import filecmp
import os

import pytest

from fracslice.cli import EXIT_CONFIG, EXIT_OK, main
from fracslice.scenarios import (
    ConfigError,
    ScenarioConfig,
    emit_plots,
    load_config,
    run_scenario,
)

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
SMALL_PRODUCT = dict(kind="theorem6", samples=3, steps=30, depth_x=8, depth_y=8,
                     bound_samples=10, box_depths=(2, 10))
SMALL_CUBE = dict(kind="corollary2", samples=2, steps=30, ifs_depth=5)


def test_shipped_configs_load():
    for name in sorted(os.listdir(CONFIGS)):
        if name != "square.ini":  # an IFS file, not a scenario
            load_config(os.path.join(CONFIGS, name))


def test_config_fractions_and_roundtrip(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[scenario]\nkind = theorem6\nseed = 3\n[product]\na = 1/4\nb = 1/3\n"
                    "box_depth_max = 12\n")
    c = load_config(path)
    assert c.a == 0.25 and c.b == 1 / 3 and c.box_depths == (2, 12)
    c.write(tmp_path / "back.ini")
    assert load_config(tmp_path / "back.ini") == c


@pytest.mark.parametrize("text", [
    "[scenario]\nkind = theorem6\ncolour = red\n",
    "[scenario]\nkind = nope\n",
    "[product]\na = 0.4\nb = 0.3\n",
    "[density]\nguard = ten\n",
    "[sampling]\nsamples = 0\n",
])
def test_bad_configs_rejected(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_small_dimension_rejected_for_corollaries():
    with pytest.raises(ConfigError):
        run_scenario(ScenarioConfig(kind="corollary2", ifs_dim=2, ifs_ratio=1 / 3,
                                    ifs_rotation_order=1, samples=1))


def test_product_scenario_is_deterministic(tmp_path):
    a = run_scenario(ScenarioConfig(**SMALL_PRODUCT)).write(tmp_path / "a")
    b = run_scenario(ScenarioConfig(**SMALL_PRODUCT)).write(tmp_path / "b")
    for name in ("samples.csv", "summary.csv", "traces.csv", "bounds.csv", "boxdim.csv",
                 "config.ini"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_cube_scenario_summary():
    rec = run_scenario(ScenarioConfig(**SMALL_CUBE))
    assert rec.summary["group_size"] == 4
    assert rec.summary["sim_dim"] > 2
    assert len(rec.rows) == 2 and len(rec.tables["traces"]) == 60


def test_emit_plots(tmp_path):
    rec = run_scenario(ScenarioConfig(**SMALL_PRODUCT)).write(tmp_path / "r")
    first = emit_plots(rec)
    assert sorted(os.path.basename(p) for p in first) == ["boxdim.gp", "traces.gp"]
    text = open(first[0]).read()
    assert "traces.csv" in text or "boxdim.csv" in text
    before = [open(p).read() for p in first]
    assert [open(p).read() for p in emit_plots(rec)] == before
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path)


def _ini(tmp_path, **values):
    c = ScenarioConfig(**values)
    path = tmp_path / "run.ini"
    c.write(path)
    return str(path)


@pytest.mark.parametrize("command", ["ifs", "project", "density", "orbit", "slice"])
def test_cli_single_commands_product(tmp_path, command):
    cfg = _ini(tmp_path, **SMALL_PRODUCT)
    assert main([command, "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_OK


@pytest.mark.parametrize("command", ["density", "orbit", "slice"])
def test_cli_single_commands_ifs(tmp_path, command):
    cfg = _ini(tmp_path, **SMALL_CUBE)
    assert main([command, "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_OK


def test_cli_scenario_and_plot(tmp_path, capsys):
    cfg = _ini(tmp_path, **SMALL_PRODUCT)
    out = tmp_path / "out"
    assert main(["scenario", "theorem6", "--config", cfg, "--out", str(out), "--seed", "5"]) == EXIT_OK
    assert "seed 5" in capsys.readouterr().out
    assert main(["plot", str(out / "theorem6")]) == EXIT_OK
    assert (out / "theorem6" / "traces.gp").exists()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nkind = theorem6\nbogus = 1\n")
    assert main(["ifs", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["ifs", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["plot", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_cli_selftest_subset(tmp_path, capsys):
    code = main(["selftest", "--only", "1", "2", "--no-determinism", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "[PASS] criterion  1" in out and "[PASS] criterion  2" in out
    assert (tmp_path / "run1" / "acceptance.csv").exists()
