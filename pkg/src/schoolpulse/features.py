"""Feature extraction and model training for score, exam, and behavior prediction.

Models are ridge and logistic regression fit from scratch: exactly testable
against closed forms and gradient oracles, deterministic for identical input
bytes. Features are standardized with training-set statistics; the stored
model weights are reported in original feature units (the standardization is
folded back in), so ``predict = dot(weights, features) + intercept``.

Feature schema (one vector per student/subject/term boundary):

    [0] last2_mean        mean of the last <=2 available term scores
    [1] last_score        most recent term score
    [2] attendance_rate   attendance/(attendance+absence), trailing year
    [3] homework_rate     submitted/(submitted+missed), trailing year
    [4] punishment_count  trailing year
    [5] award_count       trailing year
    [6] activity_count    all activities on record
    [7] activity_hours    total hours on record
    [8..11] missingness indicators for slots 0..3 (1.0 = slot was imputed)

Slots 0..3 are NaN when the student has no qualifying history; they are
imputed with the training-population mean at fit/predict time. Term ``9``
is reserved for public-exam outcomes and never feeds the history features.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .records import BehaviorKind, StudentRecord, TermScore

SCHEMA_VERSION = "v1"
EXAM_TERM = 9  # reserved term index carrying public-exam outcomes

BASE_FEATURES = [
    "last2_mean", "last_score", "attendance_rate", "homework_rate",
    "punishment_count", "award_count", "activity_count", "activity_hours",
]
IMPUTABLE = [0, 1, 2, 3]
FEATURE_NAMES = BASE_FEATURES + [f"{BASE_FEATURES[i]}_missing" for i in IMPUTABLE]
N_FEATURES = len(FEATURE_NAMES)

GD_LEARNING_RATE = 0.1
GD_TOLERANCE = 1e-6
GD_MAX_ITERATIONS = 10_000


class NoHistory(Exception):
    """Student has zero terms of any data; caller must exclude them."""


class SingularSystem(Exception):
    pass


class SingleClass(Exception):
    pass


class SchemaMismatch(Exception):
    pass


class InvalidBins(Exception):
    pass


class UnknownTerm(Exception):
    pass


class EmptyHoldout(Exception):
    pass


def schema_id_for(subject: Optional[str]) -> str:
    return f"perf-{SCHEMA_VERSION}:{subject if subject is not None else '*'}"


def term_end_date(year: int, term: int) -> dt.date:
    """Calendar boundary of a term: terms cover 4-month blocks of the year."""
    return dt.date(year, min(12, 4 * term), 28)


def term_months(term: int) -> range:
    return range(4 * (term - 1) + 1, min(12, 4 * term) + 1)


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-order feature values; NaN marks not-yet-imputed slots."""

    values: tuple[float, ...]
    schema_id: str


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature mean/std from training rows; std 0 flags a constant column."""

    means: tuple[float, ...]
    stds: tuple[float, ...]

    @classmethod
    def fit(cls, X: np.ndarray) -> "StandardizationStats":
        means = np.nanmean(X, axis=0)
        means = np.where(np.isnan(means), 0.0, means)  # all-missing column
        filled = np.where(np.isnan(X), means, X)
        stds = filled.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        return cls(means=tuple(float(m) for m in means), stds=tuple(float(s) for s in stds))

    def impute(self, X: np.ndarray) -> np.ndarray:
        means = np.asarray(self.means)
        return np.where(np.isnan(X), means, X)

    def scales(self) -> np.ndarray:
        """Divisors for standardization; constant columns pass through unscaled."""
        stds = np.asarray(self.stds)
        return np.where(stds > 0, stds, 1.0)


@dataclass(frozen=True)
class LinearModel:
    weights: tuple[float, ...]  # original feature units
    intercept: float
    lam: float
    stats: StandardizationStats
    schema_id: str


@dataclass(frozen=True)
class LogisticModel:
    weights: tuple[float, ...]
    intercept: float
    lam: float
    stats: StandardizationStats
    schema_id: str
    iterations: int
    final_grad_norm: float


def extract_features(
    record: StudentRecord, subject: Optional[str], as_of: tuple[int, int]
) -> FeatureVector:
    """Features for one student at a term boundary.

    ``subject=None`` pools score history across subjects (used by the
    behavior model): per-term scores become the mean over subjects for that
    term. Scores and events strictly after ``as_of`` never leak in.
    """
    year, term = as_of
    if term < 1:
        raise ValueError(f"as_of term must be 1-based, got {term}")
    boundary = term_end_date(year, term)
    window_start = boundary - dt.timedelta(days=365)

    usable = [s for s in record.scores if s.term != EXAM_TERM and (s.year, s.term) <= as_of]
    if subject is not None:
        history = sorted((s for s in usable if s.subject == subject), key=lambda s: (s.year, s.term))
        ordered = [s.score for s in history]
    else:
        by_term: dict[tuple[int, int], list[float]] = {}
        for s in usable:
            by_term.setdefault((s.year, s.term), []).append(s.score)
        ordered = [float(np.mean(v)) for _, v in sorted(by_term.items())]

    events = [b for b in record.behavior if b.date <= boundary]
    if not usable and not events:
        raise NoHistory("student has no score or behavior history at this boundary")

    def rate(pos_kind: BehaviorKind, neg_kind: BehaviorKind) -> float:
        pos = sum(1 for b in events if b.kind is pos_kind and b.date > window_start)
        neg = sum(1 for b in events if b.kind is neg_kind and b.date > window_start)
        return pos / (pos + neg) if pos + neg else math.nan

    def count(kind: BehaviorKind) -> float:
        return float(sum(1 for b in events if b.kind is kind and b.date > window_start))

    last2_mean = float(np.mean(ordered[-2:])) if ordered else math.nan
    last_score = ordered[-1] if ordered else math.nan
    attendance = rate(BehaviorKind.ATTENDANCE, BehaviorKind.ABSENCE)
    homework = rate(BehaviorKind.HOMEWORK_SUBMITTED, BehaviorKind.HOMEWORK_MISSED)

    base = [
        last2_mean,
        last_score,
        attendance,
        homework,
        count(BehaviorKind.PUNISHMENT),
        count(BehaviorKind.AWARD),
        float(len(record.activities)),
        float(sum(a.hours for a in record.activities)),
    ]
    indicators = [1.0 if math.isnan(base[i]) else 0.0 for i in IMPUTABLE]
    return FeatureVector(values=tuple(base + indicators), schema_id=schema_id_for(subject))


def _design_matrix(rows: Sequence[FeatureVector], schema_id: str) -> np.ndarray:
    width = len(rows[0].values)
    for f in rows:
        if f.schema_id != schema_id or len(f.values) != width:
            raise SchemaMismatch(f"expected schema {schema_id}/{width}, got {f.schema_id}/{len(f.values)}")
    return np.array([f.values for f in rows], dtype=float)


def fit_ridge(rows: Sequence[tuple[FeatureVector, float]], lam: float) -> LinearModel:
    """Exact ridge solve on standardized features, intercept unpenalized.

    The normal equations ``(Xs'Xs + lam*I) w = Xs'(y - ybar)`` are solved on
    the standardized, centered design; the returned weights are folded back
    into original units. ``lam=0`` on a rank-deficient centered design raises
    ``SingularSystem``.
    """
    if len(rows) < 2:
        raise ValueError("fit_ridge needs at least 2 rows")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    schema_id = rows[0][0].schema_id
    X = _design_matrix([f for f, _ in rows], schema_id)
    y = np.array([t for _, t in rows], dtype=float)
    if np.any(y < 0) or np.any(y > 100):
        raise ValueError("targets must lie in [0,100]")

    stats = StandardizationStats.fit(X)
    scales = stats.scales()
    Xs = (stats.impute(X) - np.asarray(stats.means)) / scales
    y_mean = float(y.mean())
    yc = y - y_mean

    if lam == 0 and np.linalg.matrix_rank(Xs) < Xs.shape[1]:
        raise SingularSystem("centered design matrix is rank-deficient with lam=0")
    A = Xs.T @ Xs + lam * np.eye(Xs.shape[1])
    w_std = np.linalg.solve(A, Xs.T @ yc)

    w = w_std / scales
    intercept = y_mean - float(w @ np.asarray(stats.means))
    return LinearModel(
        weights=tuple(float(v) for v in w),
        intercept=intercept,
        lam=float(lam),
        stats=stats,
        schema_id=schema_id,
    )


def logistic_loss_and_grad(
    Xs: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean negative log-likelihood with L2 penalty on the weights only.

    loss = mean(BCE) + lam/(2n) * ||w||^2 -- the same minimizer as the
    summed form, with steps that stay well-scaled for lr 0.1.
    """
    n = Xs.shape[0]
    z = Xs @ w + b
    # log(1 + e^z) computed stably for both signs of z
    log1pexp = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(z)))
    loss = float(np.mean(log1pexp - y * z) + lam / (2 * n) * (w @ w))
    p = 1.0 / (1.0 + np.exp(-z))
    grad_w = Xs.T @ (p - y) / n + (lam / n) * w
    grad_b = float(np.mean(p - y))
    return loss, grad_w, grad_b


def fit_logistic(rows: Sequence[tuple[FeatureVector, int]], lam: float) -> LogisticModel:
    """Full-batch gradient descent: zero init, base lr 0.1 kept per parameter
    block (weights, intercept), halving the offending block's step whenever a
    step would increase the loss, stopping at gradient inf-norm < 1e-6 or
    10,000 accepted iterations. Per-block steps keep the intercept moving
    when a huge penalty pins the weight block. Deterministic."""
    if len(rows) < 4:
        raise ValueError("fit_logistic needs at least 4 rows")
    labels = {label for _, label in rows}
    if labels <= {0} or labels <= {1}:
        raise SingleClass("training rows contain a single class")
    if not labels <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {labels}")

    schema_id = rows[0][0].schema_id
    X = _design_matrix([f for f, _ in rows], schema_id)
    y = np.array([label for _, label in rows], dtype=float)
    stats = StandardizationStats.fit(X)
    scales = stats.scales()
    Xs = (stats.impute(X) - np.asarray(stats.means)) / scales

    w = np.zeros(Xs.shape[1])
    b = 0.0
    lr_w = lr_b = GD_LEARNING_RATE
    loss, grad_w, grad_b = logistic_loss_and_grad(Xs, y, w, b, lam)
    iterations = 0
    grad_norm = max(float(np.max(np.abs(grad_w))), abs(grad_b))
    while grad_norm >= GD_TOLERANCE and iterations < GD_MAX_ITERATIONS and max(lr_w, lr_b) > 1e-15:
        w_new = w - lr_w * grad_w
        b_new = b - lr_b * grad_b
        loss_new, grad_w_new, grad_b_new = logistic_loss_and_grad(Xs, y, w_new, b_new, lam)
        if loss_new > loss:
            loss_w_only, _, _ = logistic_loss_and_grad(Xs, y, w_new, b, lam)
            if loss_w_only > loss:
                lr_w *= 0.5
            else:
                lr_b *= 0.5
            continue
        w, b, loss, grad_w, grad_b = w_new, b_new, loss_new, grad_w_new, grad_b_new
        iterations += 1
        grad_norm = max(float(np.max(np.abs(grad_w))), abs(grad_b))

    w_orig = w / scales
    intercept = b - float(w_orig @ np.asarray(stats.means))
    return LogisticModel(
        weights=tuple(float(v) for v in w_orig),
        intercept=intercept,
        lam=float(lam),
        stats=stats,
        schema_id=schema_id,
        iterations=iterations,
        final_grad_norm=grad_norm,
    )


def _prepare(model, f: FeatureVector) -> np.ndarray:
    if f.schema_id != model.schema_id or len(f.values) != len(model.weights):
        raise SchemaMismatch(f"feature schema {f.schema_id} does not match model {model.schema_id}")
    x = np.asarray(f.values, dtype=float)
    return model.stats.impute(x)


def predict_score(model: LinearModel, f: FeatureVector) -> float:
    """Linear prediction clamped to the score scale [0, 100]."""
    x = _prepare(model, f)
    raw = float(np.asarray(model.weights) @ x + model.intercept)
    return min(100.0, max(0.0, raw))


def predict_exam_grade(model: LinearModel, f: FeatureVector, bins: Sequence[float]) -> int:
    """Grade band 0..7 = number of cut scores <= the predicted score."""
    if len(bins) != 7 or any(b2 <= b1 for b1, b2 in zip(bins, bins[1:])):
        raise InvalidBins(f"bins must be 7 strictly increasing cut scores, got {bins}")
    if bins[0] <= 0 or bins[-1] >= 100:
        raise InvalidBins("cut scores must lie strictly inside (0, 100)")
    predicted = predict_score(model, f)
    return int(sum(1 for cut in bins if cut <= predicted))


def predict_behavior_risk(model: LogisticModel, f: FeatureVector) -> float:
    x = _prepare(model, f)
    z = float(np.asarray(model.weights) @ x + model.intercept)
    return 1.0 / (1.0 + math.exp(-z))


@dataclass(frozen=True)
class RiskLabelRule:
    """Training labels: 1 iff absences >= absence_threshold or punishments
    >= discipline_threshold within the labeled term."""

    absence_threshold: int = 5
    discipline_threshold: int = 2

    def __post_init__(self) -> None:
        if self.absence_threshold < 0 or self.discipline_threshold < 0:
            raise ValueError("thresholds must be nonnegative")


def label_risk(record: StudentRecord, rule: RiskLabelRule, term: tuple[int, int]) -> int:
    year, term_idx = term
    months = term_months(term_idx)
    in_term = [b for b in record.behavior if b.date.year == year and b.date.month in months]
    has_scores = any(s.year == year and s.term == term_idx for s in record.scores)
    if not has_scores and not in_term:
        raise UnknownTerm(f"term {term} not present in the record's history")
    absences = sum(1 for b in in_term if b.kind is BehaviorKind.ABSENCE)
    punishments = sum(1 for b in in_term if b.kind is BehaviorKind.PUNISHMENT)
    return int(absences >= rule.absence_threshold or punishments >= rule.discipline_threshold)


def evaluate(model, rows: Sequence[tuple[FeatureVector, float]]) -> dict:
    """Holdout metrics: {rmse, mae} for ridge models, {accuracy, auc} for
    logistic models."""
    if isinstance(model, LogisticModel):
        return evaluate_classification(model, rows)
    return evaluate_regression(model, rows)


def evaluate_regression(model: LinearModel, rows: Sequence[tuple[FeatureVector, float]]) -> dict:
    if not rows:
        raise EmptyHoldout("holdout is empty")
    errors = np.array([predict_score(model, f) - t for f, t in rows])
    return {"rmse": float(np.sqrt(np.mean(errors**2))), "mae": float(np.mean(np.abs(errors)))}


def evaluate_classification(model: LogisticModel, rows: Sequence[tuple[FeatureVector, int]]) -> dict:
    if not rows:
        raise EmptyHoldout("holdout is empty")
    scores = np.array([predict_behavior_risk(model, f) for f, _ in rows])
    y = np.array([label for _, label in rows])
    accuracy = float(np.mean((scores >= 0.5).astype(int) == y))
    return {"accuracy": accuracy, "auc": auc_rank(scores, y)}


def auc_rank(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with tied scores counted half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return math.nan
    wins = 0.0
    for p in pos:
        wins += float(np.sum(p > neg)) + 0.5 * float(np.sum(p == neg))
    return wins / (len(pos) * len(neg))


def model_to_json(model) -> str:
    """Canonical model serialization; Python float repr round-trips exactly."""
    doc = {
        "schema_id": model.schema_id,
        "weights": list(model.weights),
        "intercept": model.intercept,
        "lambda": model.lam,
        "stats": {"means": list(model.stats.means), "stds": list(model.stats.stds)},
        "kind": "logistic" if isinstance(model, LogisticModel) else "ridge",
    }
    if isinstance(model, LogisticModel):
        doc["training"] = {"iterations": model.iterations, "final_grad_norm": model.final_grad_norm}
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str):
    doc = json.loads(text)
    stats = StandardizationStats(means=tuple(doc["stats"]["means"]), stds=tuple(doc["stats"]["stds"]))
    common = dict(
        weights=tuple(doc["weights"]),
        intercept=doc["intercept"],
        lam=doc["lambda"],
        stats=stats,
        schema_id=doc["schema_id"],
    )
    if doc["kind"] == "logistic":
        return LogisticModel(
            **common,
            iterations=doc["training"]["iterations"],
            final_grad_norm=doc["training"]["final_grad_norm"],
        )
    return LinearModel(**common)
