import json

from deepforge.resume import StageWriter, write_sorted
from deepforge.storage import read_records


def key_fn(row):
    return row["name"]


def test_rows_sorted_by_key_on_finalize(tmp_path):
    path = tmp_path / "out.jsonl"
    writer = StageWriter(path, key_fn)
    writer.append({"name": "charlie", "v": 3})
    writer.append({"name": "alpha", "v": 1})
    writer.append({"name": "bravo", "v": 2})
    assert writer.finalize() == 3
    assert [r["name"] for r in read_records(path)] == ["alpha", "bravo", "charlie"]
    assert not writer.partial_path.exists()


def test_crash_before_finalize_resumes_from_partial(tmp_path):
    path = tmp_path / "out.jsonl"
    writer = StageWriter(path, key_fn)
    writer.append({"name": "alpha", "v": 1})
    writer.append({"name": "bravo", "v": 2})
    # No finalize: only the partial sidecar exists.
    assert writer.partial_path.exists()
    assert not path.exists()

    resumed = StageWriter(path, key_fn)
    assert resumed.done_keys() == {"alpha", "bravo"}
    resumed.append({"name": "charlie", "v": 3})
    resumed.finalize()
    assert [r["name"] for r in read_records(path)] == ["alpha", "bravo", "charlie"]


def test_resumed_final_bytes_match_uninterrupted(tmp_path):
    rows = [{"name": f"item-{i:02d}", "v": i} for i in range(6)]

    clean_path = tmp_path / "clean.jsonl"
    clean = StageWriter(clean_path, key_fn)
    for row in rows:
        clean.append(row)
    clean.finalize()

    resumed_path = tmp_path / "resumed.jsonl"
    first = StageWriter(resumed_path, key_fn)
    for row in rows[:3]:
        first.append(row)
    # crash: no finalize
    second = StageWriter(resumed_path, key_fn)
    for row in rows:
        if key_fn(row) not in second.done_keys():
            second.append(row)
    second.finalize()

    assert resumed_path.read_bytes() == clean_path.read_bytes()


def test_rewriting_same_key_keeps_latest(tmp_path):
    path = tmp_path / "out.jsonl"
    writer = StageWriter(path, key_fn)
    writer.append({"name": "alpha", "v": 1})
    writer.append({"name": "alpha", "v": 2})
    writer.finalize()
    rows = read_records(path)
    assert rows == [{"name": "alpha", "v": 2}]


def test_finalize_is_idempotent(tmp_path):
    path = tmp_path / "out.jsonl"
    writer = StageWriter(path, key_fn)
    writer.append({"name": "alpha", "v": 1})
    writer.finalize()
    first = path.read_bytes()
    again = StageWriter(path, key_fn)
    again.finalize()
    assert path.read_bytes() == first


def test_write_sorted_deterministic(tmp_path):
    path_a, path_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    rows = [{"name": "b"}, {"name": "a"}]
    write_sorted(path_a, rows, key_fn=key_fn)
    write_sorted(path_b, list(reversed(rows)), key_fn=key_fn)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_concurrent_appends_are_consistent(tmp_path):
    import threading

    path = tmp_path / "out.jsonl"
    writer = StageWriter(path, key_fn)

    def worker(base):
        for i in range(50):
            writer.append({"name": f"row-{base:02d}-{i:03d}", "v": i})

    threads = [threading.Thread(target=worker, args=(b,)) for b in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert writer.finalize() == 300
    rows = read_records(path)
    names = [r["name"] for r in rows]
    assert names == sorted(names)
    assert len(set(names)) == 300
