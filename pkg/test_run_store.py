#!/usr/bin/env python3
"""
Test the in-memory run store
"""

import math
from datetime import datetime, timedelta

from experiment_runner import RunSummary
from models import ProbeReport
from run_store import RunRecord, RunStore


def make_store() -> RunStore:
    return RunStore(redis_url="")


def test_run_lifecycle():
    store = make_store()
    record = store.create_run("probe", {"grid": {"n": 16}}, probe="gronwall")
    assert store.get_run(record.run_id).status == "pending"
    assert store.list_runs() == [record.run_id]

    summary = RunSummary(workflow="probe", reports=[ProbeReport(name="gronwall", measured=0.5)])
    assert store.complete_run(record.run_id, summary)
    stored = store.get_run(record.run_id)
    assert stored.status == "ok"
    assert stored.summary.reports[0].name == "gronwall"

    assert store.delete_run(record.run_id)
    assert store.get_run(record.run_id) is None
    assert not store.delete_run(record.run_id)


def test_failed_run_keeps_the_error():
    store = make_store()
    record = store.create_run("simulate", {})
    assert store.fail_run(record.run_id, "numerical failure in etd at step 3")
    stored = store.get_run(record.run_id)
    assert stored.status == "error"
    assert "step 3" in stored.error
    assert not store.fail_run("missing", "boom")
    assert not store.complete_run("missing", RunSummary(workflow="simulate"))


def test_expired_runs_are_dropped():
    store = make_store()
    fresh = store.create_run("simulate", {})
    stale = store.create_run("simulate", {})
    stale.last_updated = datetime.now() - timedelta(hours=25)
    assert store.cleanup_expired_runs() == 1
    assert store.list_runs() == [fresh.run_id]


def test_non_finite_values_serialize_as_null():
    record = RunRecord(run_id="r", workflow="probe", summary=RunSummary(workflow="probe", values={"rate": math.inf}))
    assert '"rate":null' in record.model_dump_json()
