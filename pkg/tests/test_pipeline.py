import json

import pytest

from cyclab.errors import ConfigError
from cyclab.pipeline import (
    CSV_HEADER,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_STAGE_ERROR,
    EXIT_VERDICT,
    ExperimentConfig,
    preset_config,
    run_pipeline,
)


def test_empty_pipeline_is_header_only(tmp_path):
    cfg = ExperimentConfig(csv_path=str(tmp_path / "r.csv"), json_path=str(tmp_path / "r.json"))
    out = run_pipeline(cfg)
    assert out.exit_code == EXIT_OK
    assert (tmp_path / "r.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    summary = json.loads((tmp_path / "r.json").read_text())
    assert summary["config"] == cfg.to_dict() and summary["stages"] == []


def test_bergman_preset_flat_curve():
    out = run_pipeline(preset_config("bergman"), write=False)
    assert out.exit_code == EXIT_OK
    rows = [r.split(",") for r in out.csv_text.splitlines()[1:]]
    res = [float(v) for _, _, m, v in rows if m == "residual"]
    assert len(res) == 31
    assert max(res[5:]) - min(res[5:]) <= 0.01 * max(res)


def test_stirling_preset_table():
    out = run_pipeline(preset_config("stirling"), write=False)
    assert out.exit_code == EXIT_OK
    ks = {r.split(",")[1] for r in out.csv_text.splitlines()[1:]}
    assert ks == {str(k) for k in range(61)}


def test_failed_verdict_exits_2():
    cfg = ExperimentConfig.from_dict({
        "generator": {"kind": "circle", "params": {"n": 64}},
        "stages": [{"op": "density", "target": "conj_z", "degrees": "0:3",
                    "expect": {"equals": 0.5, "abs_tol": 1e-3}}],
    })
    out = run_pipeline(cfg, write=False)
    assert out.exit_code == EXIT_VERDICT and out.summary["status"] == "verdict-failed"


def test_stage_config_error_exits_3():
    cfg = ExperimentConfig.from_dict({"stages": [{"op": "density"}]})
    assert run_pipeline(cfg, write=False).exit_code == EXIT_CONFIG


def test_stage_crash_keeps_partial_report():
    cfg = ExperimentConfig.from_dict({
        "generator": {"kind": "segment", "params": {"n": 5}},
        "stages": [{"op": "density", "target": "conj_z", "degrees": "0:1"},
                   {"op": "density", "target": "conj_z", "p": 2, "degrees": "x:y"}],
    })
    out = run_pipeline(cfg, write=False)
    assert out.exit_code in (EXIT_STAGE_ERROR, EXIT_CONFIG)
    assert len(out.csv_text.splitlines()) > 1


@pytest.mark.parametrize("bad", [
    [],
    {"stages": [{"op": "nonsense"}]},
    {"generator": {"params": {}}},
    {"seed": "abc"},
    {"extra": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_config("nope")


def test_config_load_resolves_relative_outputs(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"outputs": {"csv": "o.csv", "json": "o.json"}}))
    cfg = ExperimentConfig.load(tmp_path / "c.json")
    assert cfg.csv_path == str(tmp_path / "o.csv")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
