"""Context stamping and the two log styles."""

from __future__ import annotations

import json
import logging

from pythonjsonlogger import jsonlogger

from logging_setup import JSON_FIELDS, ContextFilter, HumanFormatter, set_iwp_id, set_run_id


def _record(msg="iwp_detected", kv=None):
    record = logging.LogRecord("utils.iwp", logging.INFO, __file__, 1, msg, None, None)
    if kv is not None:
        record.kv = kv
    return record


def test_run_and_iwp_ids_lead_the_kv_tail():
    set_run_id("run-1")
    set_iwp_id("iwp-0")
    try:
        record = _record(kv={"gap_m": 2.0000001, "pair": (0, 1)})
        ContextFilter("planner").filter(record)
        line = HumanFormatter().format(record)
    finally:
        set_run_id(None)
        set_iwp_id(None)
    assert " INFO planner utils.iwp: iwp_detected | " in line
    assert line.endswith("run_id=run-1 iwp_id=iwp-0 gap_m=2 pair=(0,1)")

def test_record_without_context_has_no_tail():
    set_run_id(None)
    set_iwp_id(None)
    record = _record(msg="run_started")
    ContextFilter("planner").filter(record)
    assert HumanFormatter().format(record).endswith("utils.iwp: run_started")

def test_json_style_carries_context_and_payload():
    set_run_id("run-2")
    set_iwp_id(None)
    try:
        record = _record(kv={"cost": 101.5})
        ContextFilter("planner").filter(record)
        doc = json.loads(jsonlogger.JsonFormatter(JSON_FIELDS).format(record))
    finally:
        set_run_id(None)
    assert doc["message"] == "iwp_detected"
    assert doc["service"] == "planner"
    assert doc["run_id"] == "run-2"
    assert doc["iwp_id"] is None
    assert doc["kv"] == {"cost": 101.5}
