import uuid
from datetime import datetime
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict

from app.models.run_record import RunStatus


# Shared properties
class RunRecordBase(BaseModel):
    command: str
    parameters: dict[str, Any] = {}
    config_digest: str = ""


# Properties written to run.json
class RunRecordOut(RunRecordBase):
    id: uuid.UUID
    status: RunStatus
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    duration_s: Optional[float] = None
    outputs: list[str] = []
    failing_ids: list[str] = []
    warnings: list[str] = []
    error: Optional[str] = None

    model_config = ConfigDict(from_attributes=True)
