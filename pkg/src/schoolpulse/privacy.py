"""Ingestion, de-identification, and the school-local vs central storage split.

Raw student identifiers never leave the school: the central store sees only
deterministic keyed-hash tokens, while the token -> identity mapping lives in
a re-identification table that must be encrypted (AEAD) before it touches
disk. Both the pseudonymization MAC key and the table encryption key are
derived from one 32-byte deployment secret.

Ingest file formats (External Interfaces):

* CSV schema v1, header required::

      student_id,record_type,subject,year,term,score,event_kind,event_date,
      activity_name,activity_category,activity_hours,sen_type,narrative,
      elective_id,rating,target_subject,target_grade

  One ``record_type`` per row, unused columns empty. Record types:
  ``score``, ``behavior``, ``activity``, ``iep`` (date in ``event_date``),
  ``elective`` (always an enrollment; negatives are never ingested),
  ``target`` and ``cohort`` (cohort year carried in the ``year`` column).

* JSONL: one object per line mirroring ``StudentRecord`` fields plus a raw
  ``student_id`` in place of ``token``.

* Local table file: binary, magic ``DMPL`` + version u8 + 12-byte nonce +
  AES-GCM ciphertext.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import hmac
import io
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .records import (
    Activity,
    ActivityCategory,
    BehaviorEvent,
    BehaviorKind,
    ElectiveInteraction,
    IepEntry,
    SchoolId,
    StudentId,
    StudentRecord,
    TermScore,
    merge_records,
    record_from_dict,
    record_to_dict,
)

CSV_HEADER = [
    "student_id", "record_type", "subject", "year", "term", "score",
    "event_kind", "event_date", "activity_name", "activity_category",
    "activity_hours", "sen_type", "narrative", "elective_id", "rating",
    "target_subject", "target_grade",
]

FORMAT_VERSION = 1

TABLE_MAGIC = b"DMPL"
TABLE_VERSION = 1
_NONCE_LEN = 12


class UnsupportedFormat(Exception):
    pass


class EmptyFile(Exception):
    pass


class CollisionDetected(Exception):
    """Two distinct raw ids hashed to one token; the batch is aborted."""


class DecryptionFailed(Exception):
    """Wrong key or tampered ciphertext; authentication failed."""


class IngestFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"


@dataclass(frozen=True)
class PseudonymKey:
    """32-byte deployment secret. Never written to the central store."""

    key_bytes: bytes

    def __post_init__(self) -> None:
        if len(self.key_bytes) != 32:
            raise ValueError(f"pseudonym key must be exactly 32 bytes, got {len(self.key_bytes)}")

    @classmethod
    def generate(cls) -> "PseudonymKey":
        return cls(os.urandom(32))

    @classmethod
    def from_hex(cls, hex_str: str) -> "PseudonymKey":
        return cls(bytes.fromhex(hex_str))

    def mac_key(self) -> bytes:
        return hmac.new(self.key_bytes, b"schoolpulse/pseudonym/v1", hashlib.sha256).digest()

    def table_key(self) -> bytes:
        return hmac.new(self.key_bytes, b"schoolpulse/table-enc/v1", hashlib.sha256).digest()


# A parsed row is either a full JSONL student object or one CSV fragment.
Fragment = Union[TermScore, BehaviorEvent, Activity, IepEntry, ElectiveInteraction]


@dataclass(frozen=True)
class RawRow:
    line: int
    student_id: str
    kind: str  # score|behavior|activity|iep|elective|target|cohort|full
    value: object


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass
class IngestBatch:
    school: SchoolId
    records: list[RawRow]
    rejects: list[Reject] = field(default_factory=list)
    source_format_version: int = FORMAT_VERSION


@dataclass
class ReidentificationTable:
    """token -> StudentId, school-local only, injective by construction."""

    entries: dict[str, StudentId] = field(default_factory=dict)

    def lookup(self, token: str) -> StudentId:
        return self.entries[token]


def pseudonymize(student_id: StudentId, key: PseudonymKey) -> str:
    """Deterministic keyed hash of (school, raw_id) -> 64 lowercase hex chars.

    HMAC-SHA256 over the length-framed pair, so no raw_id byte ever appears
    verbatim in the output and (school="ab", id="c") cannot collide with
    (school="a", id="bc").
    """
    school_b = student_id.school.encode("utf-8")
    raw_b = student_id.raw_id.encode("utf-8")
    msg = len(school_b).to_bytes(4, "big") + school_b + raw_b
    return hmac.new(key.mac_key(), msg, hashlib.sha256).hexdigest()


def _opt(row: dict[str, str], col: str) -> str:
    return (row.get(col) or "").strip()


def _parse_csv_row(line: int, row: dict[str, str]) -> RawRow:
    student_id = _opt(row, "student_id")
    if not student_id:
        raise ValueError("missing student_id")
    kind = _opt(row, "record_type")
    if kind == "score":
        return RawRow(line, student_id, "score", TermScore(
            subject=_opt(row, "subject"),
            year=int(_opt(row, "year")),
            term=int(_opt(row, "term")),
            score=float(_opt(row, "score")),
        ))
    if kind == "behavior":
        detail = row.get("narrative") or None  # e.g. award names
        return RawRow(line, student_id, "behavior", BehaviorEvent(
            kind=BehaviorKind(_opt(row, "event_kind")),
            date=dt.date.fromisoformat(_opt(row, "event_date")),
            detail=detail,
        ))
    if kind == "activity":
        return RawRow(line, student_id, "activity", Activity(
            name=_opt(row, "activity_name"),
            category=ActivityCategory(_opt(row, "activity_category")),
            hours=float(_opt(row, "activity_hours")),
        ))
    if kind == "iep":
        return RawRow(line, student_id, "iep", IepEntry(
            sen_type=_opt(row, "sen_type"),
            narrative=row.get("narrative") or "",
            date=dt.date.fromisoformat(_opt(row, "event_date")),
        ))
    if kind == "elective":
        rating = _opt(row, "rating")
        return RawRow(line, student_id, "elective", ElectiveInteraction(
            elective_id=_opt(row, "elective_id"),
            school="",  # filled with the batch school at split time
            enrolled=True,
            rating=float(rating) if rating else None,
        ))
    if kind == "target":
        return RawRow(line, student_id, "target",
                      (_opt(row, "target_subject"), int(_opt(row, "target_grade"))))
    if kind == "cohort":
        return RawRow(line, student_id, "cohort", int(_opt(row, "year")))
    raise ValueError(f"unknown record_type {kind!r}")


def parse_batch(content: bytes, fmt: IngestFormat, school: SchoolId) -> IngestBatch:
    """Parse an ingest file; total over its input.

    Well-formed rows become :class:`RawRow` entries, malformed rows land in
    ``rejects`` with their 1-based line number. Only a zero-byte file or an
    unknown format aborts.
    """
    if not isinstance(fmt, IngestFormat):
        raise UnsupportedFormat(f"unsupported ingest format: {fmt!r}")
    if len(content) == 0:
        raise EmptyFile("ingest file is empty")
    try:
        text = content.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UnsupportedFormat(f"ingest file is not valid UTF-8: {exc}") from exc

    batch = IngestBatch(school=school, records=[])
    if fmt is IngestFormat.CSV:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise EmptyFile("CSV has no header row")
        if [c.strip() for c in reader.fieldnames] != CSV_HEADER:
            raise UnsupportedFormat(
                f"CSV header does not match schema v{FORMAT_VERSION}: {reader.fieldnames}"
            )
        for i, row in enumerate(reader, start=2):  # line 1 is the header
            try:
                batch.records.append(_parse_csv_row(i, row))
            except (ValueError, KeyError) as exc:
                batch.rejects.append(Reject(line=i, reason=str(exc)))
    else:
        for i, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                student_id = obj.pop("student_id")
                if not student_id:
                    raise ValueError("missing student_id")
                obj.setdefault("cohort_year", 0)
                obj["token"] = "0" * 64  # placeholder, replaced at split time
                obj["school"] = school
                record = record_from_dict(obj)
                batch.records.append(RawRow(i, student_id, "full", record))
            except (ValueError, KeyError, TypeError) as exc:
                batch.rejects.append(Reject(line=i, reason=str(exc)))
    return batch


def _assemble(token: str, school: SchoolId, rows: list[RawRow]) -> StudentRecord:
    scores: list[TermScore] = []
    behavior: list[BehaviorEvent] = []
    activities: list[Activity] = []
    iep: list[IepEntry] = []
    electives: list[ElectiveInteraction] = []
    targets: dict[str, int] = {}
    cohort_year = 0
    full: list[StudentRecord] = []
    for row in rows:
        if row.kind == "score":
            scores.append(row.value)  # type: ignore[arg-type]
        elif row.kind == "behavior":
            behavior.append(row.value)  # type: ignore[arg-type]
        elif row.kind == "activity":
            activities.append(row.value)  # type: ignore[arg-type]
        elif row.kind == "iep":
            iep.append(row.value)  # type: ignore[arg-type]
        elif row.kind == "elective":
            e: ElectiveInteraction = row.value  # type: ignore[assignment]
            electives.append(ElectiveInteraction(e.elective_id, school, e.enrolled, e.rating))
        elif row.kind == "target":
            subject, grade = row.value  # type: ignore[misc]
            targets[subject] = grade
        elif row.kind == "cohort":
            cohort_year = row.value  # type: ignore[assignment]
        elif row.kind == "full":
            r: StudentRecord = row.value  # type: ignore[assignment]
            full.append(StudentRecord(
                token=token, school=school, cohort_year=r.cohort_year,
                scores=r.scores, behavior=r.behavior, activities=r.activities,
                iep=r.iep, electives=r.electives, target_grades=r.target_grades,
            ))
    record = StudentRecord(
        token=token, school=school, cohort_year=cohort_year,
        scores=tuple(dict.fromkeys(scores)),
        behavior=tuple(dict.fromkeys(behavior)),
        activities=tuple(dict.fromkeys(activities)),
        iep=tuple(dict.fromkeys(iep)),
        electives=tuple(dict.fromkeys(electives)),
        target_grades=targets,
    )
    for extra in full:
        if record.cohort_year == 0:
            record = StudentRecord(
                token=token, school=school, cohort_year=extra.cohort_year,
                scores=record.scores, behavior=record.behavior,
                activities=record.activities, iep=record.iep,
                electives=record.electives, target_grades=record.target_grades,
            )
        record = merge_records(record, extra)
    return record


def split_stores(
    batch: IngestBatch, key: PseudonymKey
) -> tuple[list[StudentRecord], ReidentificationTable]:
    """Split a parsed batch into central (token-only) records and the local table.

    Central records carry tokens only; the table maps each token back to the
    school-issued id. Two distinct raw ids mapping to one token abort the
    batch: silent aliasing of two students is worse than a visible failure.
    """
    by_student: dict[str, list[RawRow]] = {}
    for row in batch.records:
        by_student.setdefault(row.student_id, []).append(row)

    table = ReidentificationTable()
    central: list[StudentRecord] = []
    for raw_id in sorted(by_student):
        sid = StudentId(school=batch.school, raw_id=raw_id)
        token = pseudonymize(sid, key)
        if token in table.entries and table.entries[token] != sid:
            raise CollisionDetected(
                f"token collision between two distinct raw ids in school {batch.school}"
            )
        table.entries[token] = sid
        central.append(_assemble(token, batch.school, by_student[raw_id]))
    return central, table


def encrypt_table(table: ReidentificationTable, key: PseudonymKey) -> bytes:
    """Serialize and AEAD-encrypt the re-identification table for persistence."""
    payload = json.dumps(
        {token: {"school": sid.school, "raw_id": sid.raw_id} for token, sid in sorted(table.entries.items())},
        sort_keys=True,
    ).encode("utf-8")
    nonce = os.urandom(_NONCE_LEN)
    ct = AESGCM(key.table_key()).encrypt(nonce, payload, TABLE_MAGIC)
    return TABLE_MAGIC + bytes([TABLE_VERSION]) + nonce + ct


def decrypt_table(blob: bytes, key: PseudonymKey) -> ReidentificationTable:
    """Inverse of :func:`encrypt_table`; wrong key fails authentication."""
    if len(blob) < len(TABLE_MAGIC) + 1 + _NONCE_LEN or not blob.startswith(TABLE_MAGIC):
        raise DecryptionFailed("not a local table file (bad magic)")
    version = blob[len(TABLE_MAGIC)]
    if version != TABLE_VERSION:
        raise DecryptionFailed(f"unsupported local table version {version}")
    off = len(TABLE_MAGIC) + 1
    nonce = blob[off:off + _NONCE_LEN]
    ct = blob[off + _NONCE_LEN:]
    try:
        payload = AESGCM(key.table_key()).decrypt(nonce, ct, TABLE_MAGIC)
    except InvalidTag as exc:
        raise DecryptionFailed("authentication failed: wrong key or corrupted table") from exc
    data = json.loads(payload.decode("utf-8"))
    table = ReidentificationTable()
    for token, sid in data.items():
        table.entries[token] = StudentId(school=sid["school"], raw_id=sid["raw_id"])
    return table


def central_records_to_jsonl(records: list[StudentRecord]) -> bytes:
    """Wire/persistence format of the central store: one record per line."""
    lines = [json.dumps(record_to_dict(r), sort_keys=True) for r in records]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def central_records_from_jsonl(blob: bytes) -> list[StudentRecord]:
    out = []
    for line in blob.decode("utf-8").splitlines():
        if line.strip():
            out.append(record_from_dict(json.loads(line)))
    return out
