import configparser
from unittest.mock import patch

import pytest

from attribution_leakage.recorder import RUNLOG_SUFFIX, RunLog
from attribution_leakage.tracing import trace_command


def only_runlog(folder, command):
    (path,) = folder.glob(f"{command}.*{RUNLOG_SUFFIX}")
    guid = path.name[len(command) + 1 : -len(RUNLOG_SUFFIX)]
    return RunLog(command, guid=guid)


def statuses(runlog):
    return [e["data"]["status"] for e in runlog.events() if "status" in e["data"]]


@pytest.mark.unit
class TestTraceCommand:
    def test_records_start_and_success(self, tmp_path):
        @trace_command("evaluate")
        def command(value):
            return value * 2

        with patch.dict("os.environ", {"RUNLOG_DIR": str(tmp_path)}):
            assert command(21) == 42
            runlog = only_runlog(tmp_path, "evaluate")
            events = runlog.events()

        assert statuses(runlog) == ["Started", "Success"]
        assert events[0]["data"]["config"] == {}
        assert events[-1]["data"]["elapsed_seconds"] >= 0.0

    def test_records_config_sections(self, tmp_path):
        parser = configparser.ConfigParser()
        parser.read_dict({"explain": {"method": "shap-kl", "num_samples": "16"}})

        @trace_command("explain")
        def command(config):
            return None

        with patch.dict("os.environ", {"RUNLOG_DIR": str(tmp_path)}):
            command(parser)
            started = only_runlog(tmp_path, "explain").events()[0]["data"]

        assert started["config"] == {"explain": {"method": "shap-kl", "num_samples": "16"}}

    def test_records_error_and_reraises(self, tmp_path):
        @trace_command("train")
        def command():
            raise RuntimeError("diverged")

        with patch.dict("os.environ", {"RUNLOG_DIR": str(tmp_path)}):
            with pytest.raises(RuntimeError, match="diverged"):
                command()
            runlog = only_runlog(tmp_path, "train")

        assert statuses(runlog) == ["Started", "Error: diverged"]

    def test_one_file_per_run(self, tmp_path):
        @trace_command("gen-data")
        def command():
            return None

        with patch.dict("os.environ", {"RUNLOG_DIR": str(tmp_path)}):
            command()
            command()

        assert len(list(tmp_path.glob(f"gen-data.*{RUNLOG_SUFFIX}"))) == 2

    def test_keeps_function_metadata(self):
        @trace_command("explain")
        def command_with_doc():
            """Docstring survives."""

        assert command_with_doc.__name__ == "command_with_doc"
        assert command_with_doc.__doc__ == "Docstring survives."
