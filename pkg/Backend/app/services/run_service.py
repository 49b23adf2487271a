import datetime
import logging
import uuid
from pathlib import Path
from typing import Any, Optional

import orjson

from app.core.config import AnalysisConfig
from app.core.exceptions import ElastishapeException
from app.models.run_record import RunRecord, RunStatus
from app.schemas.run_record import RunRecordOut
from app.services.ensemble_io import write_json

logger = logging.getLogger(__name__)

RUN_RECORD_FILE = "run.json"
CONFIG_FILE = "config.json"


def run_id(command: str, digest: str, parameters: dict[str, Any]) -> uuid.UUID:
    """Name-based id: the same command, configuration and parameters give the same id."""
    canonical = orjson.dumps(parameters, default=str, option=orjson.OPT_SORT_KEYS).decode()
    return uuid.uuid5(uuid.NAMESPACE_URL, f"elastishape:{command}:{digest}:{canonical}")


class RunService:
    """Tracks one command run and writes its run.json record.

    Used as a context manager: the record moves from pending to running on
    entry and to completed or failed on exit, and exceptions propagate.
    """

    def __init__(self, command: str, config: AnalysisConfig, out_dir: Optional[Path] = None, parameters: Optional[dict[str, Any]] = None):
        self.config = config
        self.out_dir = Path(out_dir or config.output_dir)
        parameters = dict(parameters or {})
        digest = config.digest()
        self.record = RunRecord(command=command, parameters=parameters, config_digest=digest, id=run_id(command, digest, parameters))

    def __enter__(self) -> "RunService":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.record.status = RunStatus.RUNNING
        self.record.started_at = datetime.datetime.now(datetime.timezone.utc)
        self.config.dump(self.output(CONFIG_FILE))
        logger.info(f"Run {self.record.id} ({self.record.command}) writing to '{self.out_dir}'")
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None:
            self.record.status = RunStatus.COMPLETED
        else:
            self.record.status = RunStatus.FAILED
            self.record.error = exc.detail if isinstance(exc, ElastishapeException) else repr(exc)
            self.record.failing_ids.extend(self._failing_ids(exc))
        self.record.completed_at = datetime.datetime.now(datetime.timezone.utc)
        self.record.duration_s = (self.record.completed_at - self.record.started_at).total_seconds()
        self.record.outputs = sorted(set(self.record.outputs))
        write_json(self.out_dir / RUN_RECORD_FILE, RunRecordOut.model_validate(self.record))
        logger.info(f"Run {self.record.id} {self.record.status.value} in {self.record.duration_s:.2f}s")
        return False

    @staticmethod
    def _failing_ids(exc: BaseException) -> list[str]:
        if getattr(exc, "failing_ids", None):
            return list(exc.failing_ids)
        if getattr(exc, "shape_id", None):
            return [exc.shape_id]
        return []

    @property
    def digest(self) -> str:
        return self.record.config_digest

    def output(self, name: str) -> Path:
        """Path for an output file, registered in the run record."""
        self.record.outputs.append(name)
        return self.out_dir / name

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.record.warnings.append(message)
