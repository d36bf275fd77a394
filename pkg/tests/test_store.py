import json
import threading

import pytest

from schoolpulse.store import CorruptSnapshot, DocumentStore


class TestDocumentStore:
    def test_json_round_trip(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.save_json("a/b.json", {"x": [1, 2.5, "s"], "y": None})
        assert store.load_json("a/b.json") == {"x": [1, 2.5, "s"], "y": None}

    def test_truncated_file_raises_and_preserves_nothing_else(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.save_json("doc.json", {"v": 1})
        raw = (tmp_path / "doc.json").read_bytes()
        (tmp_path / "doc.json").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(CorruptSnapshot):
            store.load_json("doc.json")

    def test_checksum_mismatch(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.save_json("doc.json", {"v": 1})
        doc = json.loads((tmp_path / "doc.json").read_text())
        doc["body"]["v"] = 2  # tamper without updating the checksum
        (tmp_path / "doc.json").write_text(json.dumps(doc))
        with pytest.raises(CorruptSnapshot):
            store.load_json("doc.json")

    def test_atomic_replace_keeps_old_on_crash(self, tmp_path, monkeypatch):
        store = DocumentStore(tmp_path)
        store.save_json("doc.json", {"v": 1})

        import os
        real_replace = os.replace

        def boom(src, dst):
            raise OSError("simulated crash before rename")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            store.save_json("doc.json", {"v": 2})
        monkeypatch.setattr(os, "replace", real_replace)
        assert store.load_json("doc.json") == {"v": 1}
        assert not list(tmp_path.glob("*.tmp"))

    def test_concurrent_read_sees_old_or_new_never_mixed(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.save_json("doc.json", {"gen": 0, "payload": "a" * 500})
        seen = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                seen.append(store.load_json("doc.json")["gen"])

        t = threading.Thread(target=reader)
        t.start()
        for gen in range(1, 40):
            store.save_json("doc.json", {"gen": gen, "payload": "a" * 500})
        stop.set()
        t.join()
        assert set(seen) <= set(range(40))  # every read was a complete snapshot

    def test_name_escape_rejected(self, tmp_path):
        store = DocumentStore(tmp_path / "root")
        with pytest.raises(ValueError):
            store.save_json("../outside.json", {})

    def test_bytes_round_trip_and_list(self, tmp_path):
        store = DocumentStore(tmp_path)
        store.save_bytes("central/x.jsonl", b"line\n")
        assert store.load_bytes("central/x.jsonl") == b"line\n"
        assert store.list("central") == ["central/x.jsonl"]
