"""Transparent additive talent scoring across the seven activity categories.

No learned classifier: every score is a sum of auditable evidence
contributions (awards, activity hours, top-decile subject scores, leadership
roles), so the ranked lists can be explained line by line. Award names map
to categories through a small regex table; unmapped awards land in "other".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .features import EXAM_TERM
from .records import ActivityCategory, BehaviorKind, StudentRecord

CATEGORIES = [c.value for c in ActivityCategory]


class UnknownCategory(Exception):
    pass


def categories() -> list[str]:
    """The seven talent categories, fixed order."""
    return list(CATEGORIES)


@dataclass(frozen=True)
class TalentWeights:
    award: float = 3.0
    hours_per_10: float = 1.0
    top_decile: float = 5.0  # credited to "academic", once per subject
    leadership_role: float = 4.0  # credited to "leadership", once

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"weight {name} must be >= 0, got {value}")

    def scaled(self, c: float) -> "TalentWeights":
        return TalentWeights(self.award * c, self.hours_per_10 * c,
                             self.top_decile * c, self.leadership_role * c)

    @classmethod
    def from_json(cls, text: str) -> "TalentWeights":
        doc = json.loads(text)
        unknown = set(doc) - {"award", "hours_per_10", "top_decile", "leadership_role"}
        if unknown:
            raise ValueError(f"unknown talent weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class Evidence:
    category: str
    kind: str  # award | activity_hours | top_decile | leadership_role
    detail: str
    contribution: float


@dataclass(frozen=True)
class TalentScorecard:
    token: str
    scores: dict[str, float]
    evidence: tuple[Evidence, ...]

    def to_dict(self) -> dict:
        return {
            "token": self.token,
            "scores": self.scores,
            "evidence": [e.__dict__ for e in self.evidence],
        }


class AwardCategorizer:
    """First matching regex wins; unmapped awards go to 'other'."""

    def __init__(self, patterns: Sequence[tuple[str, str]]):
        self._rules = [(re.compile(p, re.IGNORECASE), c) for p, c in patterns]
        for _, c in patterns:
            if c not in CATEGORIES:
                raise UnknownCategory(f"unknown category in award mapping: {c}")

    def categorize(self, award_name: str) -> str:
        for pattern, category in self._rules:
            if pattern.search(award_name):
                return category
        return ActivityCategory.OTHER.value

    @classmethod
    def default(cls) -> "AwardCategorizer":
        raw = resources.files("schoolpulse.data").joinpath("award_categories.json").read_text()
        return cls([(r["pattern"], r["category"]) for r in json.loads(raw)])


def cohort_top_decile_cutoffs(records: Sequence[StudentRecord]) -> dict[str, float]:
    """90th percentile of per-student subject means across the cohort."""
    means: dict[str, list[float]] = {}
    for r in records:
        by_subject: dict[str, list[float]] = {}
        for s in r.scores:
            if s.term != EXAM_TERM:
                by_subject.setdefault(s.subject, []).append(s.score)
        for subject, vals in by_subject.items():
            means.setdefault(subject, []).append(float(np.mean(vals)))
    return {subject: float(np.percentile(vals, 90)) for subject, vals in means.items()}


def score_student(
    record: StudentRecord,
    weights: TalentWeights,
    cutoffs: dict[str, float],
    categorizer: Optional[AwardCategorizer] = None,
) -> TalentScorecard:
    """Linear accumulation of evidence into per-category scores."""
    categorizer = categorizer or AwardCategorizer.default()
    scores = {c: 0.0 for c in CATEGORIES}
    evidence: list[Evidence] = []

    def add(category: str, kind: str, detail: str, contribution: float) -> None:
        if contribution == 0.0:
            return
        scores[category] += contribution
        evidence.append(Evidence(category, kind, detail, contribution))

    for event in record.behavior:
        if event.kind is BehaviorKind.AWARD:
            name = event.detail or ""
            add(categorizer.categorize(name), "award", name, weights.award)

    for activity in record.activities:
        add(activity.category.value, "activity_hours", activity.name,
            weights.hours_per_10 * activity.hours / 10.0)

    by_subject: dict[str, list[float]] = {}
    for s in record.scores:
        if s.term != EXAM_TERM:
            by_subject.setdefault(s.subject, []).append(s.score)
    for subject in sorted(by_subject):
        cutoff = cutoffs.get(subject)
        if cutoff is not None and float(np.mean(by_subject[subject])) >= cutoff:
            add(ActivityCategory.ACADEMIC.value, "top_decile", subject, weights.top_decile)

    if any(a.category is ActivityCategory.LEADERSHIP for a in record.activities):
        add(ActivityCategory.LEADERSHIP.value, "leadership_role", "leadership activity",
            weights.leadership_role)

    return TalentScorecard(token=record.token, scores=scores, evidence=tuple(evidence))


def rank_category(
    scorecards: Sequence[TalentScorecard],
    category: str,
    k: int,
    min_score: float = 5.0,
) -> list[TalentScorecard]:
    """Top-k by score desc (token-asc tiebreak) after the min_score filter."""
    if category not in CATEGORIES:
        raise UnknownCategory(f"unknown talent category: {category}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if min_score < 0:
        raise ValueError("min_score must be >= 0")
    qualified = [sc for sc in scorecards if sc.scores[category] >= min_score]
    qualified.sort(key=lambda sc: (-sc.scores[category], sc.token))
    return qualified[:k]
