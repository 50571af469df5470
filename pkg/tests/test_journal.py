from __future__ import annotations

from steplab.journal import Journal


def test_put_get_and_reload(tmp_path):
    path = tmp_path / "j.jsonl"
    journal = Journal(path)
    journal.put("k1", {"x": 1})
    journal.put("k1", {"x": 999})  # idempotent: first write wins
    journal.put("k2", [1, 2, 3])
    reloaded = Journal(path)
    assert reloaded.get("k1") == {"x": 1}
    assert reloaded.get("k2") == [1, 2, 3]
    assert "k1" in reloaded and len(reloaded) == 2


def test_torn_trailing_line_ignored(tmp_path):
    path = tmp_path / "j.jsonl"
    journal = Journal(path)
    journal.put("k1", {"x": 1})
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"key": "k2", "value"')  # simulated crash mid-write
    reloaded = Journal(path)
    assert reloaded.get("k1") == {"x": 1}
    assert reloaded.get("k2") is None
    reloaded.put("k2", {"y": 2})
    assert Journal(path).get("k2") == {"y": 2}


def test_get_or_compute_skips_compute_on_hit(tmp_path):
    journal = Journal(tmp_path / "j.jsonl")
    calls = {"n": 0}

    def compute():
        calls["n"] += 1
        return {"v": 7}

    assert journal.get_or_compute("k", compute) == {"v": 7}
    assert journal.get_or_compute("k", compute) == {"v": 7}
    assert calls["n"] == 1
