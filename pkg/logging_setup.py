"""
Process-wide logging for the planner CLI and HTTP service.

Records carry ``run_id`` (one planning run) and ``iwp_id`` (the passage being
detected or scheduled) from context variables, plus any ``extra={"kv": {...}}``
payload.

    LOG_STYLE=human  -> one line per record, kv payload appended (default)
    LOG_STYLE=json   -> newline-delimited JSON
    LOG_LEVEL=INFO|DEBUG|...
    SERVICE_NAME=formation-planner
"""

from __future__ import annotations

import contextvars
import logging
import os
from typing import Any, Mapping

from pythonjsonlogger import jsonlogger

run_id_var: contextvars.ContextVar[str | None] = contextvars.ContextVar("run_id", default=None)
iwp_id_var: contextvars.ContextVar[str | None] = contextvars.ContextVar("iwp_id", default=None)

JSON_FIELDS = "%(asctime)s %(levelname)s %(service)s %(name)s %(message)s %(run_id)s %(iwp_id)s %(kv)s"


def set_run_id(rid: str | None) -> None:
    run_id_var.set(rid)

def set_iwp_id(iid: str | None) -> None:
    iwp_id_var.set(iid)


def _value(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (tuple, list)):
        return "(" + ",".join(_value(x) for x in v) + ")"
    return str(v)


class ContextFilter(logging.Filter):
    """Stamps service, run and IWP ids on each record."""

    def __init__(self, service: str):
        super().__init__()
        self.service = service

    def filter(self, record: logging.LogRecord) -> bool:  # noqa: A003
        record.service = self.service
        record.run_id = run_id_var.get()
        record.iwp_id = iwp_id_var.get()
        if not hasattr(record, "kv"):
            record.kv = None
        return True


class HumanFormatter(logging.Formatter):
    default_msec_format = "%s.%03d"

    def format(self, record: logging.LogRecord) -> str:
        line = (f"{self.formatTime(record)} {record.levelname} {getattr(record, 'service', '-')} "
                f"{record.name}: {record.getMessage()}")
        tail = [(k, getattr(record, k, None)) for k in ("run_id", "iwp_id")]
        tail = [(k, v) for k, v in tail if v]
        kv = getattr(record, "kv", None)
        if isinstance(kv, Mapping):
            tail.extend(kv.items())
        if tail:
            line += " | " + " ".join(f"{k}={_value(v)}" for k, v in tail)
        return line


def init_logging() -> None:
    root = logging.getLogger()
    if getattr(root, "_initialized_by_app", False):
        return

    style = os.getenv("LOG_STYLE", "human").lower()
    handler = logging.StreamHandler()
    handler.setFormatter(jsonlogger.JsonFormatter(JSON_FIELDS) if style == "json" else HumanFormatter())
    handler.addFilter(ContextFilter(os.getenv("SERVICE_NAME", "formation-planner")))

    root.handlers.clear()
    root.setLevel(os.getenv("LOG_LEVEL", "INFO").upper())
    root.addHandler(handler)
    root._initialized_by_app = True  # type: ignore[attr-defined]
