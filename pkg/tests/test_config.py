import pytest

from src.main.config import ConfigError, ExperimentConfig, load_config, parse_override


def test_defaults_validate():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.kind == "solve"
    assert cfg.model_name == "lq"
    assert cfg.sim_config(cfg.horizon).n_steps == 10


def test_unknown_top_level_key_is_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_unknown_model_is_a_config_error():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"name": "no_such_model"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"name": "lq", "params": {"nope": 1.0}}})


def test_seed_flag_beats_override(write_config):
    path = write_config({"seed": 3})
    cfg = load_config(path, overrides=["seed=5", "sim.dt=0.05"], seed=7)
    assert cfg.seed == 7
    assert cfg.section("sim")["dt"] == 0.05
    assert load_config(path, overrides=["seed=5"]).seed == 5
    assert load_config(path).seed == 3


def test_yaml_config_files(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("kind: blowup-scan\nmodel:\n  name: blowup_nonmonotone\nscan:\n  horizons: [0.5, 1.0]\n",
                    encoding="utf-8")
    cfg = load_config(path)
    assert cfg.kind == "blowup-scan"
    assert cfg.section("scan")["horizons"] == [0.5, 1.0]


def test_unreadable_configs(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(listing)


@pytest.mark.parametrize("data", [
    {"kind": "oracle-compare", "model": {"name": "torus_monotone"}},
    {"kind": "transform-check", "transform": {"beta": 0.0}},
    {"kind": "transform-check", "model": {"name": "lq", "params": {"beta_cn": 0.2}},
     "transform": {"concatenate_theta": False}},
    {"kind": "dpp-audit", "dpp": {"s": 0.75}},
    {"solver": {"horizon": 0.52}},
    {"picard": {"damping": 1.5}},
    {"sim": {"n_particles": 0}},
])
def test_inconsistent_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_report_view_drops_run_location_and_threads():
    cfg = ExperimentConfig.from_dict({"workers": 4, "output_dir": "somewhere"})
    view = cfg.report_view()
    assert "workers" not in view and "output_dir" not in view
    assert view["model"]["name"] == "lq"
    assert cfg.workers == 4


def test_parse_override():
    assert parse_override("sim.dt=0.02") == {"sim": {"dt": 0.02}}
    assert parse_override("scan.horizons=[0.5, 1]") == {"scan": {"horizons": [0.5, 1]}}
    assert parse_override("model.name=torus_monotone") == {"model": {"name": "torus_monotone"}}
    for bad in ("no_equals_sign", "=3", "sim..dt=1"):
        with pytest.raises(ConfigError):
            parse_override(bad)
