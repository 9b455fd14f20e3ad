"""
Tests for the experiments.cli module.
"""

import json

import pytest

from schauder_lab.experiments.cli import EXIT_CONFIG_ERROR, main, parse_arguments
from schauder_lab.experiments.runner import RunResult


@pytest.fixture
def mock_run(mocker):
    return mocker.patch("schauder_lab.experiments.cli.run", return_value=RunResult(status=0))


def test_parse_arguments():
    args = parse_arguments(["exponent", "--exact", "-s", "3", "-n", "500"])
    assert args.experiment == "exponent"
    assert args.exact
    assert args.seed == 3
    assert args.paths == 500
    assert args.config is None


def test_exact_is_only_offered_for_the_exponent():
    with pytest.raises(SystemExit):
        parse_arguments(["mild", "--exact"])


def test_unknown_experiment():
    with pytest.raises(SystemExit):
        parse_arguments(["heat"])


def test_default_configuration_is_used(mock_run):
    assert main(["optimality"]) == 0
    config = mock_run.call_args.args[0]
    assert config.experiment == "optimality"


def test_overrides_are_applied(mock_run, tmp_path):
    assert main(["exponent", "--exact", "-s", "9", "-n", "50", "-o", str(tmp_path)]) == 0
    config = mock_run.call_args.args[0]
    assert config.seed == 9
    assert config.paths == 50
    assert config.p == 2.0
    assert config.get_value("exact") is True
    assert config.output_dir == str(tmp_path)


def test_run_status_is_returned(mocker):
    mocker.patch("schauder_lab.experiments.cli.run", return_value=RunResult(status=1))
    assert main(["optimality"]) == 1


def test_invalid_override_is_a_config_error(mock_run):
    assert main(["isometry", "-n", "0"]) == EXIT_CONFIG_ERROR
    mock_run.assert_not_called()


def test_invalid_file_is_a_config_error(mock_run, write_config):
    path = write_config({"experiment": "mild", "seed": -1})
    assert main(["mild", "-c", str(path)]) == EXIT_CONFIG_ERROR
    broken = write_config({}, name="broken.json")
    broken.write_text('{"experiment": ')
    assert main(["mild", "-c", str(broken)]) == EXIT_CONFIG_ERROR
    mock_run.assert_not_called()


def test_missing_file_is_a_config_error(mock_run, tmp_path):
    assert main(["mild", "-c", str(tmp_path / "absent.json")]) == EXIT_CONFIG_ERROR


def test_experiment_must_match_the_file(mock_run, write_config):
    path = write_config({"experiment": "isometry"})
    assert main(["mild", "-c", str(path)]) == EXIT_CONFIG_ERROR
    mock_run.assert_not_called()


def test_log_file(mock_run, tmp_path):
    log_file = tmp_path / "run.log"
    main(["optimality", "--log-file", str(log_file)])
    assert log_file.exists()


def test_json_config_round_trip(mock_run, write_config):
    path = write_config({"experiment": "mild", "seed": 4, "parameters": {"t": 0.25}})
    assert main(["mild", "-c", str(path)]) == 0
    assert json.loads(json.dumps(mock_run.call_args.args[0].to_dict()))["seed"] == 4
