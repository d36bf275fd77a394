"""Canonical domain model for school data.

Every other module consumes these types. All of them are plain frozen
dataclasses: safe to share between threads, never mutated after construction.
Pseudonym tokens are ordinary strings (64 lowercase hex chars) minted only by
:mod:`schoolpulse.privacy`.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

SchoolId = str

TOKEN_RE = re.compile(r"^[0-9a-f]{64}$")

# Grade bands for public exams: 0 (unclassified) through 7 (top band).
GRADE_BAND_MIN = 0
GRADE_BAND_MAX = 7


class TokenMismatch(Exception):
    """Raised when merging records that belong to different students."""


class BehaviorKind(str, Enum):
    ATTENDANCE = "attendance"
    ABSENCE = "absence"
    PUNISHMENT = "punishment"
    AWARD = "award"
    HOMEWORK_SUBMITTED = "homework_submitted"
    HOMEWORK_MISSED = "homework_missed"


class ActivityCategory(str, Enum):
    ACADEMIC = "academic"
    SPORTS = "sports"
    ARTS = "arts"
    LEADERSHIP = "leadership"
    SERVICE = "service"
    TECHNOLOGY = "technology"
    OTHER = "other"


@dataclass(frozen=True)
class StudentId:
    """School-issued identifier. Never serialized into the central store."""

    school: SchoolId
    raw_id: str


@dataclass(frozen=True)
class TermScore:
    subject: str
    year: int
    term: int  # 1-based within the academic year
    score: float  # 0..100, schools with other scales pre-scale at export


@dataclass(frozen=True)
class BehaviorEvent:
    kind: BehaviorKind
    date: dt.date
    detail: Optional[str] = None


@dataclass(frozen=True)
class Activity:
    name: str
    category: ActivityCategory
    hours: float


@dataclass(frozen=True)
class IepEntry:
    sen_type: str  # open label set, e.g. "dyslexia", "adhd"
    narrative: str
    date: dt.date


@dataclass(frozen=True)
class ElectiveInteraction:
    elective_id: str
    school: SchoolId
    enrolled: bool
    rating: Optional[float] = None  # in [0, 1] when present


@dataclass(frozen=True)
class StudentRecord:
    """Pseudonymized aggregate of everything known about one student."""

    token: str
    school: SchoolId
    cohort_year: int
    scores: tuple[TermScore, ...] = ()
    behavior: tuple[BehaviorEvent, ...] = ()
    activities: tuple[Activity, ...] = ()
    iep: tuple[IepEntry, ...] = ()
    electives: tuple[ElectiveInteraction, ...] = ()
    target_grades: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    """One broken invariant: which field, which rule, human-readable message."""

    field: str
    rule: str
    message: str


def validate_record(record: StudentRecord) -> list[Violation]:
    """Check every type invariant; returns an empty list iff all hold.

    Violations are data, not errors: callers decide whether to reject,
    log, or surface them to an operator.
    """
    out: list[Violation] = []

    def bad(fld: str, rule: str, msg: str) -> None:
        out.append(Violation(field=fld, rule=rule, message=msg))

    if not TOKEN_RE.match(record.token):
        bad("token", "token_format", f"token must be 64 lowercase hex chars, got {record.token!r}")
    if not record.school:
        bad("school", "non_empty", "school id must be non-empty")

    seen_terms: set[tuple[str, int, int]] = set()
    for i, s in enumerate(record.scores):
        if not (0.0 <= s.score <= 100.0):
            bad(f"scores[{i}].score", "score_range", f"TermScore.score out of [0,100]: {s.score}")
        if s.term < 1:
            bad(f"scores[{i}].term", "term_positive", f"term must be 1-based, got {s.term}")
        key = (s.subject, s.year, s.term)
        if key in seen_terms:
            bad(f"scores[{i}]", "term_unique", f"duplicate (subject, year, term): {key}")
        seen_terms.add(key)

    for i, b in enumerate(record.behavior):
        if not isinstance(b.kind, BehaviorKind):
            bad(f"behavior[{i}].kind", "kind_enum", f"unknown behavior kind: {b.kind!r}")
        if not isinstance(b.date, dt.date):
            bad(f"behavior[{i}].date", "date_valid", f"invalid date: {b.date!r}")

    for i, a in enumerate(record.activities):
        if a.hours < 0:
            bad(f"activities[{i}].hours", "hours_nonneg", f"activity hours must be >= 0, got {a.hours}")
        if not isinstance(a.category, ActivityCategory):
            bad(f"activities[{i}].category", "category_enum", f"unknown category: {a.category!r}")

    for i, e in enumerate(record.iep):
        if not e.sen_type:
            bad(f"iep[{i}].sen_type", "non_empty", "sen_type must be non-empty")

    for i, e in enumerate(record.electives):
        if e.rating is not None and not (0.0 <= e.rating <= 1.0):
            bad(f"electives[{i}].rating", "rating_range", f"ElectiveInteraction.rating out of [0,1]: {e.rating}")

    for subject, grade in record.target_grades.items():
        if not (GRADE_BAND_MIN <= grade <= GRADE_BAND_MAX):
            bad(f"target_grades[{subject}]", "grade_band", f"target grade out of 0..7: {grade}")

    return out


def _union(a: tuple, b: tuple) -> tuple:
    """Order-preserving union with identical tuples removed."""
    seen = set()
    out = []
    for item in (*a, *b):
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


def merge_records(a: StudentRecord, b: StudentRecord) -> StudentRecord:
    """Merge two partial records of the same student (incremental ingestion).

    List fields become the deduplicated union; ``target_grades`` from ``b``
    override ``a`` on key collision. Idempotent, commutative and associative
    on the set interpretation of the list fields.
    """
    if a.token != b.token:
        raise TokenMismatch(f"cannot merge records of different students: {a.token[:8]}… vs {b.token[:8]}…")
    if a.school != b.school:
        raise TokenMismatch(f"cannot merge records across schools: {a.school} vs {b.school}")
    return StudentRecord(
        token=a.token,
        school=a.school,
        cohort_year=a.cohort_year,
        scores=_union(a.scores, b.scores),
        behavior=_union(a.behavior, b.behavior),
        activities=_union(a.activities, b.activities),
        iep=_union(a.iep, b.iep),
        electives=_union(a.electives, b.electives),
        target_grades={**a.target_grades, **b.target_grades},
    )


def record_to_dict(record: StudentRecord) -> dict[str, Any]:
    """JSON-ready dict; dates as ISO strings, enums as their string values."""
    return {
        "token": record.token,
        "school": record.school,
        "cohort_year": record.cohort_year,
        "scores": [
            {"subject": s.subject, "year": s.year, "term": s.term, "score": s.score}
            for s in record.scores
        ],
        "behavior": [
            {"kind": b.kind.value, "date": b.date.isoformat(), "detail": b.detail}
            for b in record.behavior
        ],
        "activities": [
            {"name": a.name, "category": a.category.value, "hours": a.hours}
            for a in record.activities
        ],
        "iep": [
            {"sen_type": e.sen_type, "narrative": e.narrative, "date": e.date.isoformat()}
            for e in record.iep
        ],
        "electives": [
            {
                "elective_id": e.elective_id,
                "school": e.school,
                "enrolled": e.enrolled,
                "rating": e.rating,
            }
            for e in record.electives
        ],
        "target_grades": dict(record.target_grades),
    }


def record_from_dict(data: dict[str, Any]) -> StudentRecord:
    return StudentRecord(
        token=data["token"],
        school=data["school"],
        cohort_year=int(data["cohort_year"]),
        scores=tuple(
            TermScore(s["subject"], int(s["year"]), int(s["term"]), float(s["score"]))
            for s in data.get("scores", [])
        ),
        behavior=tuple(
            BehaviorEvent(
                BehaviorKind(b["kind"]), dt.date.fromisoformat(b["date"]), b.get("detail")
            )
            for b in data.get("behavior", [])
        ),
        activities=tuple(
            Activity(a["name"], ActivityCategory(a["category"]), float(a["hours"]))
            for a in data.get("activities", [])
        ),
        iep=tuple(
            IepEntry(e["sen_type"], e["narrative"], dt.date.fromisoformat(e["date"]))
            for e in data.get("iep", [])
        ),
        electives=tuple(
            ElectiveInteraction(
                e["elective_id"],
                e["school"],
                bool(e["enrolled"]),
                None if e.get("rating") is None else float(e["rating"]),
            )
            for e in data.get("electives", [])
        ),
        target_grades={k: int(v) for k, v in data.get("target_grades", {}).items()},
    )
