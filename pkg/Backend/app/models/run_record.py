import datetime
import enum
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional


class RunStatus(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class RunRecord:
    # Generic fields for any command run
    command: str
    parameters: dict[str, Any] = field(default_factory=dict)
    config_digest: str = ""
    status: RunStatus = RunStatus.PENDING
    id: uuid.UUID = field(default_factory=uuid.uuid4)

    # Timestamps and performance tracking; the only non-deterministic output.
    started_at: Optional[datetime.datetime] = None
    completed_at: Optional[datetime.datetime] = None
    duration_s: Optional[float] = None

    # Output files, failing shape ids and non-convergence notes.
    outputs: list[str] = field(default_factory=list)
    failing_ids: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    error: Optional[str] = None
