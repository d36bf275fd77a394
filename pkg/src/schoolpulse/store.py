"""File-backed document store with atomic replace and checksummed snapshots.

Every JSON document is wrapped as {"sha256": <hex of body bytes>, "body": ...}
and written to a temp file in the same directory before an atomic rename, so
readers only ever see a complete old or new snapshot. A checksum mismatch or
truncated file raises CorruptSnapshot and leaves whatever is on disk alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Optional


class CorruptSnapshot(Exception):
    pass


class DocumentStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        path = (self.root / name).resolve()
        if self.root.resolve() not in path.parents and path != self.root.resolve():
            raise ValueError(f"document name escapes the store root: {name}")
        return path

    def _write_atomic(self, path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def save_json(self, name: str, body: Any) -> None:
        body_bytes = json.dumps(body, sort_keys=True).encode("utf-8")
        doc = {
            "sha256": hashlib.sha256(body_bytes).hexdigest(),
            "body": json.loads(body_bytes),
        }
        self._write_atomic(self._path(name), json.dumps(doc, sort_keys=True).encode("utf-8"))

    def load_json(self, name: str) -> Any:
        path = self._path(name)
        try:
            doc = json.loads(path.read_bytes().decode("utf-8"))
            body_bytes = json.dumps(doc["body"], sort_keys=True).encode("utf-8")
            if hashlib.sha256(body_bytes).hexdigest() != doc["sha256"]:
                raise CorruptSnapshot(f"checksum mismatch in {name}")
        except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
            raise CorruptSnapshot(f"unreadable snapshot {name}: {exc}") from exc
        return doc["body"]

    def save_bytes(self, name: str, data: bytes) -> None:
        self._write_atomic(self._path(name), data)

    def load_bytes(self, name: str) -> bytes:
        return self._path(name).read_bytes()

    def exists(self, name: str) -> bool:
        return self._path(name).exists()

    def list(self, subdir: str = "") -> list[str]:
        base = self._path(subdir) if subdir else self.root
        if not base.exists():
            return []
        return sorted(
            str(p.relative_to(self.root)) for p in base.rglob("*") if p.is_file()
        )

    def load_json_optional(self, name: str) -> Optional[Any]:
        return self.load_json(name) if self.exists(name) else None
