"""Structured audit log: one text record per control-plane decision."""

from __future__ import annotations

import json
from pathlib import Path

FORMAT_TEXT = "text"
FORMAT_JSON = "json-lines"
FORMATS = (FORMAT_TEXT, FORMAT_JSON)


class EventLog:
    """Appends one record per event to ``events.log`` in the state dir.
    A None path disables persistence but keeps the in-memory tail that
    tests and the CLI inspect."""

    def __init__(self, path: str | Path | None, fmt: str = FORMAT_TEXT):
        if fmt not in FORMATS:
            raise ValueError(f"log format must be one of {FORMATS}")
        self.path = Path(path) if path is not None else None
        self.fmt = fmt
        self.records: list[dict] = []

    def emit(self, event: str, **fields) -> dict:
        record = {"event": event, **fields}
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(self.format_record(record) + "\n")
        return record

    def format_record(self, record: dict) -> str:
        if self.fmt == FORMAT_JSON:
            return json.dumps(record, sort_keys=True)
        parts = [str(record["event"])]
        for key, value in record.items():
            if key == "event":
                continue
            parts.append(f"{key}={value}")
        return " ".join(parts)

    def errors(self) -> list[dict]:
        return [r for r in self.records if r["event"].startswith("error")]
