import json
import os
import threading
import uuid
from datetime import datetime, timezone
from typing import Any, Optional

RUNLOG_SUFFIX = ".runlog.jsonl"

STARTED = "Started"
SUCCESS = "Success"


def get_runlog_dir() -> str:
    return os.environ.get("RUNLOG_DIR", "runlogs")


class RunLog:
    """Timestamped JSONL events for one command run.

    This is the only place wall-clock time is written; every data artifact
    a command produces stays free of it.
    """

    def __init__(self, command: str, guid: Optional[str] = None) -> None:
        self.command = command
        self.guid = guid or str(uuid.uuid4())
        self._lock = threading.Lock()
        runlog_dir = get_runlog_dir()
        if runlog_dir:
            os.makedirs(runlog_dir, exist_ok=True)
        self.path = os.path.join(runlog_dir, f"{command}.{self.guid}{RUNLOG_SUFFIX}")

    def record(self, **fields: Any) -> None:
        line = json.dumps(
            {"timestamp": datetime.now(timezone.utc).isoformat(), "data": fields},
            default=str,
        )
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")

    def started(self, config: Optional[dict[str, dict[str, str]]] = None) -> None:
        self.record(command=self.command, status=STARTED, config=config or {})

    def finished(self, status: str, elapsed_seconds: float) -> None:
        self.record(
            command=self.command,
            status=status,
            elapsed_seconds=round(elapsed_seconds, 3),
        )

    def events(self) -> list[dict[str, Any]]:
        if not os.path.isfile(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def __repr__(self) -> str:
        return f"<RunLog {self.command} guid={self.guid}>"

