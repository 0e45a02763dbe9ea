import asyncio
import json
import logging
import os
from contextlib import asynccontextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Set

import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from cli import configure_logging
from experiment_runner import probe_names, run_workflow
from mild_solver import SolverDivergenceError
from run_config import RUN_PROFILES, ConfigError, RunConfigPanel, to_flat_lines
from run_store import RunRecord, RunStore
from spectral_core import FieldValidationError

load_dotenv()

ENVIRONMENT = os.getenv("ENVIRONMENT", "production")
HOST = os.getenv("HOST", "0.0.0.0")
PORT = int(os.getenv("PORT", "8000"))
OUTPUT_ROOT = os.getenv("QG_OUTPUT_DIR", "runs")

configure_logging()
logger = logging.getLogger(__name__)
logger.info(f"🚀 Starting QG verification service in {ENVIRONMENT} mode on {HOST}:{PORT}")

run_store = RunStore()

# strong references keep unawaited runs alive until they finish
_background_tasks: Set[asyncio.Task] = set()


@asynccontextmanager
async def lifespan(app: FastAPI):
    dropped = run_store.cleanup_expired_runs()
    if dropped:
        logger.info(f"🧹 Dropped {dropped} expired runs")
    yield


app = FastAPI(
    title="Dissipative QG verification service",
    description="Run mild-solution experiments and estimate probes over HTTP",
    version="1.0.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

WORKFLOWS = ("simulate", "picard", "probe", "verify", "calibrate-mu0")


class RunRequest(BaseModel):
    workflow: str
    probe: Optional[str] = None
    profile: Optional[str] = None
    settings: Dict[str, Any] = {}
    wait: bool = True


def _record_json(record: RunRecord) -> Dict[str, Any]:
    # non-finite floats become null
    return json.loads(record.model_dump_json())


def _execute(record: RunRecord, config) -> None:
    try:
        summary = run_workflow(config, record.workflow, probe_name=record.probe)
        run_store.complete_run(record.run_id, summary)
    except SolverDivergenceError as e:
        run_store.fail_run(record.run_id, f"numerical failure in {e.stage} at step {e.step}")
        raise
    except Exception as e:
        logger.error(f"❌ Run {record.run_id} failed: {e}")
        run_store.fail_run(record.run_id, str(e) or type(e).__name__)
        raise


async def _execute_in_background(record: RunRecord, config) -> None:
    try:
        await asyncio.to_thread(_execute, record, config)
    except Exception:
        # already recorded on the run
        pass


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}


@app.get("/probes")
async def list_probes():
    return {"probes": probe_names()}


@app.get("/config/defaults")
async def config_defaults(profile: str = "default"):
    try:
        config = RunConfigPanel(profile).resolve()
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    settings = dict(line.split(" = ", 1) for line in to_flat_lines(config))
    return {"profile": profile, "profiles": sorted(RUN_PROFILES), "settings": settings}


@app.post("/runs")
async def create_run(request: RunRequest):
    if request.workflow not in WORKFLOWS:
        raise HTTPException(status_code=422, detail=f"unknown workflow {request.workflow!r}")
    if request.workflow == "probe" and request.probe not in probe_names():
        raise HTTPException(status_code=422, detail=f"unknown probe {request.probe!r}")

    try:
        panel = RunConfigPanel(request.profile)
        panel.batch_adjust(request.settings)
        config = panel.resolve()
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))

    record = run_store.create_run(request.workflow, config.model_dump(), probe=request.probe)
    config = config.model_copy(update={"output": config.output.model_copy(update={"dir": str(Path(OUTPUT_ROOT) / record.run_id)})})
    record.status = "running"
    run_store.update_run(record)

    if not request.wait:
        task = asyncio.create_task(_execute_in_background(record, config))
        _background_tasks.add(task)
        task.add_done_callback(_background_tasks.discard)
        return _record_json(record)

    try:
        await asyncio.to_thread(_execute, record, config)
    except SolverDivergenceError as e:
        raise HTTPException(status_code=500, detail=f"numerical failure in {e.stage} at step {e.step}")
    except (FieldValidationError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"run {record.run_id} failed: {e}")
    return _record_json(run_store.get_run(record.run_id))


@app.get("/runs")
async def list_runs():
    runs = []
    for run_id in run_store.list_runs():
        record = run_store.get_run(run_id)
        if record:
            runs.append({"run_id": record.run_id, "workflow": record.workflow, "status": record.status})
    return {"runs": runs}


@app.get("/runs/{run_id}")
async def get_run(run_id: str):
    record = run_store.get_run(run_id)
    if not record:
        raise HTTPException(status_code=404, detail="Run not found")
    return _record_json(record)


@app.delete("/runs/{run_id}")
async def delete_run(run_id: str):
    if not run_store.delete_run(run_id):
        raise HTTPException(status_code=404, detail="Run not found")
    return {"deleted": run_id}


if __name__ == "__main__":
    uvicorn.run("main:app", host=HOST, port=PORT, reload=(ENVIRONMENT == "development"))
