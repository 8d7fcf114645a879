from __future__ import annotations

import json
import os
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


@dataclass(frozen=True)
class RunRecord:
    command: str
    verdict: str            # "OK" | "INFEASIBLE" | "VIOLATION" | "TRUNCATED" | "INPUT_ERROR"
    reason: str
    gamma: Optional[float] = None
    margin: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)
    timestamp_utc: str = field(default_factory=_now_iso)


class RunLogger:
    """
    Logs:
      1) run events (append-only JSONL)
      2) one record per CLI command in SQLite (queryable for result tables)
    """

    def __init__(self, db_path: str, event_log_path: str) -> None:
        self.db_path = db_path
        self.event_log_path = event_log_path
        _ensure_parent(db_path)
        _ensure_parent(event_log_path)
        self._init_db()

    def _init_db(self) -> None:
        con = sqlite3.connect(self.db_path)
        cur = con.cursor()
        cur.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            timestamp_utc TEXT NOT NULL,
            command TEXT NOT NULL,
            verdict TEXT NOT NULL,
            reason TEXT NOT NULL,
            gamma REAL,
            margin REAL,
            details_json TEXT NOT NULL
        )
        """)
        con.commit()
        con.close()

    def log_event(self, event: Dict[str, Any]) -> None:
        record = {"timestamp_utc": _now_iso(), **event}
        with open(self.event_log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, default=float) + "\n")

    def log_run(self, rec: RunRecord) -> None:
        self.log_event({"type": "run", "command": rec.command, "verdict": rec.verdict, "reason": rec.reason,
                        "gamma": rec.gamma, "margin": rec.margin, "details": rec.details})
        con = sqlite3.connect(self.db_path)
        cur = con.cursor()
        cur.execute(
            """
            INSERT INTO runs (timestamp_utc, command, verdict, reason, gamma, margin, details_json)
            VALUES (?, ?, ?, ?, ?, ?, ?)
            """,
            (
                rec.timestamp_utc,
                rec.command,
                rec.verdict,
                rec.reason,
                rec.gamma,
                rec.margin,
                json.dumps(rec.details, default=float),
            ),
        )
        con.commit()
        con.close()

    def recent_runs(self, limit: int = 20) -> List[Dict[str, Any]]:
        con = sqlite3.connect(self.db_path)
        con.row_factory = sqlite3.Row
        rows = con.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,)).fetchall()
        con.close()
        return [dict(r) for r in rows]
