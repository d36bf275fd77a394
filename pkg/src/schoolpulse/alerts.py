"""Traffic-light early-warning alerts with teacher-configurable thresholds.

Classification is pure and snapshot-based: every alert records the config
snapshot that produced it and can be re-derived exactly from (metric,
config). Feed generation is deterministic, including its timestamp, which
is the latest term boundary present in the roster data rather than wall
clock: the feed says "as of this boundary", and identical inputs yield
byte-identical feeds.
"""

from __future__ import annotations

import datetime as dt
import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .features import (
    LinearModel,
    LogisticModel,
    NoHistory,
    extract_features,
    predict_behavior_risk,
    predict_exam_grade,
    predict_score,
    term_end_date,
)
from .records import StudentRecord


class InvalidConfig(Exception):
    pass


class AlertColor(str, Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"


SEVERITY = {AlertColor.RED: 2, AlertColor.YELLOW: 1, AlertColor.GREEN: 0}


@dataclass(frozen=True)
class AlertConfig:
    """Thresholds for one teacher scope; subject overrides beat the default.

    In-school cutoffs act on delta = predicted next score minus the mean of
    the last two actual scores; exam deviations act on predicted minus
    target grade band; behavior cutoffs act on the predicted risk.
    """

    teacher_id: str = "default"
    subject: Optional[str] = None
    inschool_red_cutoff: float = -10.0
    inschool_yellow_cutoff: float = -3.0
    exam_yellow_deviation: int = -1
    exam_red_deviation: int = -2
    behavior_red: float = 0.7
    behavior_yellow: float = 0.4

    def check(self) -> None:
        """Raise InvalidConfig naming the violated ordering constraint."""
        if not self.inschool_red_cutoff < self.inschool_yellow_cutoff <= 0:
            raise InvalidConfig(
                "ordering violated: inschool_red_cutoff < inschool_yellow_cutoff <= 0 "
                f"(got {self.inschool_red_cutoff}, {self.inschool_yellow_cutoff})"
            )
        if not self.exam_red_deviation <= self.exam_yellow_deviation < 0:
            raise InvalidConfig(
                "ordering violated: exam_red_deviation <= exam_yellow_deviation < 0 "
                f"(got {self.exam_red_deviation}, {self.exam_yellow_deviation})"
            )
        if not 0 < self.behavior_yellow < self.behavior_red <= 1:
            raise InvalidConfig(
                "ordering violated: 0 < behavior_yellow < behavior_red <= 1 "
                f"(got {self.behavior_yellow}, {self.behavior_red})"
            )


def classify_inschool(delta: float, cfg: AlertConfig) -> AlertColor:
    """Red: significant decline; Yellow: slight decline; Green: stable or up."""
    cfg.check()
    if delta <= cfg.inschool_red_cutoff:
        return AlertColor.RED
    if delta <= cfg.inschool_yellow_cutoff:
        return AlertColor.YELLOW
    return AlertColor.GREEN


def classify_exam(predicted_grade: int, target_grade: int, cfg: AlertConfig) -> AlertColor:
    """Green: prediction meets the target (deviation above the yellow cutoff);
    Yellow: slight shortfall; Red: significant shortfall."""
    cfg.check()
    deviation = predicted_grade - target_grade
    if deviation <= cfg.exam_red_deviation:
        return AlertColor.RED
    if deviation <= cfg.exam_yellow_deviation:
        return AlertColor.YELLOW
    return AlertColor.GREEN


def classify_behavior(risk: float, cfg: AlertConfig) -> AlertColor:
    """Red: crisis needing immediate action; Yellow: watch; Green: normal."""
    cfg.check()
    if risk >= cfg.behavior_red:
        return AlertColor.RED
    if risk >= cfg.behavior_yellow:
        return AlertColor.YELLOW
    return AlertColor.GREEN


@dataclass(frozen=True)
class Alert:
    token: str
    dimension: str  # "inschool:<subject>" | "exam:<subject>" | "behavior"
    color: AlertColor
    metric: float
    config_snapshot: int
    generated_at: str  # ISO-8601 UTC

    def to_dict(self) -> dict:
        return {
            "token": self.token,
            "dimension": self.dimension,
            "color": self.color.value,
            "metric": self.metric,
            "config_snapshot": self.config_snapshot,
            "generated_at": self.generated_at,
        }


@dataclass
class AlertFeed:
    alerts: list[Alert]
    warnings: list[str] = field(default_factory=list)

    def to_jsonl(self) -> bytes:
        lines = [json.dumps(a.to_dict(), sort_keys=True) for a in self.alerts]
        return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


class ConfigStore:
    """Teacher-scoped threshold configs with monotone snapshot ids.

    Old alerts keep the snapshot id they were generated under; updates are
    validated before they replace anything.
    """

    def __init__(self) -> None:
        self._configs: dict[tuple[str, Optional[str]], AlertConfig] = {}
        self._snapshot = 0
        self._lock = threading.Lock()

    @property
    def snapshot(self) -> int:
        return self._snapshot

    def update_config(self, cfg: AlertConfig) -> int:
        cfg.check()
        with self._lock:  # updates are serialized; snapshot ids never repeat
            self._snapshot += 1
            self._configs[(cfg.teacher_id, cfg.subject)] = cfg
            return self._snapshot

    def lookup(self, teacher_id: str, subject: Optional[str] = None) -> AlertConfig:
        """Subject override wins over the teacher default, which wins over
        the platform defaults."""
        if subject is not None and (teacher_id, subject) in self._configs:
            return self._configs[(teacher_id, subject)]
        if (teacher_id, None) in self._configs:
            cfg = self._configs[(teacher_id, None)]
            return replace(cfg, subject=subject) if subject is not None else cfg
        return AlertConfig(teacher_id=teacher_id, subject=subject)

    def to_dict(self) -> dict:
        return {
            "snapshot": self._snapshot,
            "configs": [cfg.__dict__ for cfg in self._configs.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConfigStore":
        store = cls()
        store._snapshot = data.get("snapshot", 0)
        for raw in data.get("configs", []):
            cfg = AlertConfig(**raw)
            store._configs[(cfg.teacher_id, cfg.subject)] = cfg
        return store


@dataclass
class ModelSet:
    """Trained models the feed builder draws from; None means untrained."""

    inschool: dict[str, LinearModel] = field(default_factory=dict)
    exam: dict[str, LinearModel] = field(default_factory=dict)
    behavior: Optional[LogisticModel] = None
    exam_bins: tuple[float, ...] = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)


def latest_term(record: StudentRecord) -> Optional[tuple[int, int]]:
    from .features import EXAM_TERM

    terms = [(s.year, s.term) for s in record.scores if s.term != EXAM_TERM]
    return max(terms) if terms else None


def _sort_key(alert: Alert) -> tuple:
    # Worst first: higher severity, then the dimension's badness order
    # (lower delta/deviation is worse; higher risk is worse), then token.
    badness = -alert.metric if alert.dimension == "behavior" else alert.metric
    return (-SEVERITY[alert.color], badness, alert.token)


def build_alert_feed(
    roster: list[StudentRecord],
    models: ModelSet,
    store: ConfigStore,
    teacher_id: str = "default",
) -> AlertFeed:
    """One alert per (student, dimension) with data, worst first.

    Dimensions without a trained model are skipped with a warning entry
    rather than failing the whole feed.
    """
    if not roster:
        raise ValueError("roster must be non-empty")
    alerts: list[Alert] = []
    warnings: list[str] = []
    snapshot = store.snapshot

    boundaries = [latest_term(r) for r in roster]
    known = [b for b in boundaries if b is not None]
    if not known:
        return AlertFeed(alerts=[], warnings=["no scored terms in roster"])
    feed_boundary = max(known)
    generated_at = (
        dt.datetime.combine(term_end_date(*feed_boundary), dt.time(0, 0), dt.timezone.utc)
        .isoformat()
        .replace("+00:00", "Z")
    )

    if not models.inschool:
        warnings.append("no trained in-school model; dimension skipped")
    if not models.exam:
        warnings.append("no trained exam model; dimension skipped")
    if models.behavior is None:
        warnings.append("no trained behavior model; dimension skipped")

    for record, boundary in zip(roster, boundaries):
        if boundary is None:
            continue
        for subject, model in sorted(models.inschool.items()):
            try:
                f = extract_features(record, subject, boundary)
            except NoHistory:
                continue
            if f.values[8] == 1.0:  # no score history in this subject
                continue
            delta = predict_score(model, f) - f.values[0]
            cfg = store.lookup(teacher_id, subject)
            alerts.append(Alert(record.token, f"inschool:{subject}", classify_inschool(delta, cfg),
                                delta, snapshot, generated_at))
        for subject, model in sorted(models.exam.items()):
            target = record.target_grades.get(subject)
            if target is None:
                continue
            try:
                f = extract_features(record, subject, boundary)
            except NoHistory:
                continue
            cfg = store.lookup(teacher_id, subject)
            grade = predict_exam_grade(model, f, list(models.exam_bins))
            alerts.append(Alert(record.token, f"exam:{subject}", classify_exam(grade, target, cfg),
                                float(grade - target), snapshot, generated_at))
        if models.behavior is not None:
            try:
                f = extract_features(record, None, boundary)
            except NoHistory:
                continue
            risk = predict_behavior_risk(models.behavior, f)
            cfg = store.lookup(teacher_id)
            alerts.append(Alert(record.token, "behavior", classify_behavior(risk, cfg),
                                risk, snapshot, generated_at))

    alerts.sort(key=_sort_key)
    return AlertFeed(alerts=alerts, warnings=warnings)
