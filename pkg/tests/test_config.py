import math

import pytest

from soundzones.config import ConfigError, ExperimentConfig, config_from_dict, load_config


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    c = load_config(p)
    assert c == ExperimentConfig()
    assert c.iterations == 5000 and c.monte_carlo_runs == 100
    assert c.step_size == 2.5 and c.perturbation_variance == 0.0707
    assert c.run_frequencies == (1000.0,)
    assert len(c.sweep_frequencies) == 40
    assert c.sweep_frequencies[0] == 100.0 and c.sweep_frequencies[-1] == 4000.0


def test_zero_iterations_names_field():
    with pytest.raises(ConfigError, match="iterations"):
        config_from_dict({"iterations": 0})


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="step_szie"):
        config_from_dict({"step_szie": 1.0})


@pytest.mark.parametrize("raw, field", [
    ({"algorithm": "lms"}, "algorithm"),
    ({"step_size": -1}, "step_size"),
    ({"step_size": "fast"}, "step_size"),
    ({"snr_db": "loud"}, "snr_db"),
    ({"perturbation_variance": -0.1}, "perturbation_variance"),
    ({"atf_backend": "file"}, "atf_file"),
    ({"geometry": {"n_speaker": 4}}, "geometry"),
    ({"system": [{"ring": {"mic_counts": [32]}}]}, r"system\[0\]"),
    ({"monte_carlo_runs": 1.5}, "monte_carlo_runs"),
])
def test_bad_values_name_field(raw, field):
    with pytest.raises(ConfigError, match=field):
        config_from_dict(raw)


def test_snr_inf_and_auto_step(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("snr_db: inf\nstep_size: auto\nfrequencies: [500, 1000]\nsystem: system2\n")
    c = load_config(p)
    assert math.isinf(c.snr_db)
    assert c.step_size == "auto"
    assert c.run_frequencies == (500.0, 1000.0)
    assert c.systems == ["system2"]


def test_digest_ignores_output_dir_only():
    a = ExperimentConfig()
    assert a.digest() == a.replace(output_dir="elsewhere").digest()
    assert a.digest() != a.replace(seed=1).digest()


def test_top_level_must_be_mapping(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_exponent_notation_is_a_number(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("step_size: 1.0e-1\nperturbation_variance: 7.07e-2\n")
    c = load_config(p)
    assert c.step_size == 0.1 and c.perturbation_variance == 0.0707
