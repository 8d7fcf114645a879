# experiments/test_logging.py
import json

from server.audit_logger import RunLogger, RunRecord


def test_runs_land_in_jsonl_and_sqlite(tmp_path):
    runlog = RunLogger(db_path=str(tmp_path / "db" / "runs.sqlite"), event_log_path=str(tmp_path / "runs.jsonl"))

    runlog.log_event({"type": "note", "text": "start"})
    runlog.log_run(RunRecord("synth", "OK", "CERTIFIED", gamma=19.0, margin=1e-3, details={"path": "c.json"}))
    runlog.log_run(RunRecord("verify", "INFEASIBLE", "TRIPLE_VIOLATED", gamma=19.0, details={"worst_triple": [0, 0, 1]}))

    lines = [json.loads(l) for l in (tmp_path / "runs.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [l["type"] for l in lines] == ["note", "run", "run"]
    assert lines[2]["details"]["worst_triple"] == [0, 0, 1]

    rows = runlog.recent_runs()
    assert [r["command"] for r in rows] == ["verify", "synth"]
    assert rows[1]["margin"] == 1e-3
    assert json.loads(rows[0]["details_json"]) == {"worst_triple": [0, 0, 1]}


def test_logger_reopens_existing_database(tmp_path):
    db, log = str(tmp_path / "runs.sqlite"), str(tmp_path / "runs.jsonl")
    RunLogger(db, log).log_run(RunRecord("dpcheck", "OK", "DP_CHECKED"))
    again = RunLogger(db, log)
    again.log_run(RunRecord("dpcheck", "VIOLATION", "DP_VIOLATED"))
    assert len(again.recent_runs(limit=10)) == 2
    assert len(again.recent_runs(limit=1)) == 1
