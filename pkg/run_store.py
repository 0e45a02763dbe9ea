import logging
import os
import uuid
from datetime import datetime, timedelta
from typing import Any, Dict, List, Optional

import redis
from dotenv import load_dotenv
from pydantic import BaseModel, Field

from experiment_runner import RunSummary

load_dotenv()

logger = logging.getLogger(__name__)


class RunRecord(BaseModel):
    run_id: str
    workflow: str
    probe: Optional[str] = None
    status: str = "pending"
    config: Dict[str, Any] = {}
    summary: Optional[RunSummary] = None
    error: Optional[str] = None
    created_at: datetime = Field(default_factory=datetime.now)
    last_updated: datetime = Field(default_factory=datetime.now)


class RunStore:
    """Run records in Redis when REDIS_URL is set, in process memory otherwise"""

    def __init__(self, redis_url: Optional[str] = None):
        redis_url = redis_url if redis_url is not None else os.getenv("REDIS_URL")
        self.redis_client: Optional[redis.Redis] = None
        self._memory_store: Dict[str, RunRecord] = {}
        self.record_timeout = timedelta(hours=24)

        if redis_url:
            try:
                client = redis.from_url(redis_url, decode_responses=True)
                client.ping()
                self.redis_client = client
                logger.info("🗄️ Run store backed by Redis")
            except (redis.ConnectionError, redis.TimeoutError) as e:
                logger.warning(f"⚠️ Redis unavailable ({e}); keeping runs in memory")
                self.redis_client = None

    def create_run(self, workflow: str, config: Dict[str, Any], probe: Optional[str] = None) -> RunRecord:
        """Register a pending run and return its record"""
        record = RunRecord(run_id=str(uuid.uuid4()), workflow=workflow, probe=probe, config=config)
        self._save(record)
        return record

    def get_run(self, run_id: str) -> Optional[RunRecord]:
        if self.redis_client:
            data = self.redis_client.get(f"run:{run_id}")
            if data and isinstance(data, str):
                return RunRecord.model_validate_json(data)
            return None
        return self._memory_store.get(run_id)

    def update_run(self, record: RunRecord) -> bool:
        record.last_updated = datetime.now()
        return self._save(record)

    def complete_run(self, run_id: str, summary: RunSummary) -> bool:
        record = self.get_run(run_id)
        if not record:
            return False
        record.summary = summary
        record.status = summary.status
        return self.update_run(record)

    def fail_run(self, run_id: str, error: str) -> bool:
        record = self.get_run(run_id)
        if not record:
            return False
        record.status = "error"
        record.error = error
        return self.update_run(record)

    def delete_run(self, run_id: str) -> bool:
        if self.redis_client:
            return bool(self.redis_client.delete(f"run:{run_id}"))
        return self._memory_store.pop(run_id, None) is not None

    def list_runs(self) -> List[str]:
        if self.redis_client:
            return [key.split(":", 1)[1] for key in self.redis_client.scan_iter("run:*")]
        return list(self._memory_store)

    def cleanup_expired_runs(self) -> int:
        """Drop stale in-memory records; Redis expires them itself"""
        if self.redis_client:
            return 0
        now = datetime.now()
        expired = [run_id for run_id, record in self._memory_store.items() if now - record.last_updated > self.record_timeout]
        for run_id in expired:
            del self._memory_store[run_id]
        return len(expired)

    def _save(self, record: RunRecord) -> bool:
        if self.redis_client:
            return bool(self.redis_client.setex(
                f"run:{record.run_id}",
                int(self.record_timeout.total_seconds()),
                record.model_dump_json(),
            ))
        self._memory_store[record.run_id] = record
        return True
