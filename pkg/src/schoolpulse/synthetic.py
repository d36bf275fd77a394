"""Seeded synthetic school data standing in for real records.

Students are drawn from a latent ability + behavior-propensity model:
scores follow ability plus a per-student trend and noise, absences and
punishments rise as propensity falls, and elective enrollments come from
four block-structured interest groups so that a personalized recommender
has measurable lift over global popularity. IEP narratives are templated
from a phrase bank aligned with the shipped POS lexicon. Generation is a
pure function of (spec, seed): identical bytes every run.

Electives: 24 ids. el-00..el-15 are shared across schools (four interest
blocks of four); el-16..el-23 are partitioned two per school as exclusives,
so cross-school recommendations have something to recommend.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .privacy import CSV_HEADER

SUBJECTS = [
    "math", "english", "science", "history",
    "geography", "music", "art", "physical_education",
]

SEN_TYPES = ["dyslexia", "adhd", "autism", "hearing impairment", "dyscalculia", "speech difficulty"]

NARRATIVE_TEMPLATES = [
    "Severe reading anxiety during quiet lessons.",
    "Needs extra reading support and frequent breaks.",
    "Shows mild progress with visual schedule.",
    "Struggles with loud classroom noise; prefers quiet seating.",
    "Responds well to weekly speech therapy sessions.",
    "Benefits from small group instruction and clear routine.",
    "Frequent attention difficulty during math lessons.",
    "Requires individual homework plan with short tasks.",
    "Avoids social group tasks; needs calm classroom routine.",
    "Mild spelling difficulty; uses visual word aid.",
    "Severe math anxiety when reading word problems.",
    "Improves slowly with extra time and teacher support.",
    "Needs front seat and visual instructions.",
    "Weekly therapy improves speech sounds and social skills.",
    "Anxious behavior during loud group sessions.",
    "Uses hearing aid; misses spoken instructions rarely.",
]

AWARD_BANK = [
    ("math olympiad medal", "academic"),
    ("science fair prize", "academic"),
    ("swimming gala win", "sports"),
    ("football cup", "sports"),
    ("choir solo award", "arts"),
    ("drama festival prize", "arts"),
    ("student council leader", "leadership"),
    ("community service award", "service"),
    ("robotics challenge", "technology"),
    ("perfect attendance", "other"),
]

ACTIVITY_BANK = [
    ("chess club", "academic"),
    ("debate team", "academic"),
    ("basketball team", "sports"),
    ("swim squad", "sports"),
    ("school choir", "arts"),
    ("drama society", "arts"),
    ("student council", "leadership"),
    ("house captaincy", "leadership"),
    ("volunteering circle", "service"),
    ("charity drive", "service"),
    ("coding club", "technology"),
    ("robotics lab", "technology"),
    ("gardening", "other"),
]

N_ELECTIVES = 24
N_SHARED = 16
EXCLUSIVES_PER_SCHOOL = 2
N_BLOCKS = 4
BLOCK_SIZE = N_SHARED // N_BLOCKS

TERMS = [(2021, 1), (2021, 2), (2022, 1), (2022, 2), (2023, 1), (2023, 2)]
EXAM_YEAR = 2023

ATTENDANCE_DAYS_PER_TERM = 12
HOMEWORK_PER_TERM = 8


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    schools: int = 4
    students_per_school: int = 125
    subjects: int = 8
    terms: int = 6
    electives: int = 24
    seed: int = 0


def elective_ids(spec: SyntheticDatasetSpec) -> list[str]:
    return [f"el-{i:02d}" for i in range(spec.electives)]


def school_catalog(spec: SyntheticDatasetSpec, school_index: int) -> list[str]:
    ids = elective_ids(spec)
    shared = ids[:N_SHARED]
    start = N_SHARED + school_index * EXCLUSIVES_PER_SCHOOL
    exclusives = ids[start:start + EXCLUSIVES_PER_SCHOOL]
    return shared + exclusives


def _csv_row(**cols) -> str:
    values = {c: "" for c in CSV_HEADER}
    values.update(cols)
    return ",".join(str(values[c]) for c in CSV_HEADER)


def _term_event_date(rng, year: int, term: int) -> str:
    month = int(rng.integers(4 * (term - 1) + 1, min(12, 4 * term) + 1))
    day = int(rng.integers(1, 29))
    return f"{year:04d}-{month:02d}-{day:02d}"


def generate_school_csv(spec: SyntheticDatasetSpec, school_index: int) -> bytes:
    """All rows for one school, CSV schema v1, deterministic per (spec, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 100 + school_index]))
    subjects = SUBJECTS[: spec.subjects]
    terms = TERMS[: spec.terms]
    catalog = school_catalog(spec, school_index)
    shared = elective_ids(spec)[:N_SHARED]
    exclusives = catalog[N_SHARED:]

    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")

    for s in range(spec.students_per_school):
        sid = f"STU{school_index}{s:04d}"
        ability = float(rng.normal(68.0, 11.0))
        ability_z = (ability - 68.0) / 11.0
        propensity = float(0.6 * ability_z + 0.8 * rng.normal())
        # ~8% of students decline steeply; the rest drift gently. Steep
        # decliners are what the early-warning red band exists for.
        steep = rng.random() < 0.10
        trend = float(rng.normal(-6.5, 2.0)) if steep else float(rng.normal(0.0, 1.2))
        affinity = rng.normal(0.0, 6.0, size=len(subjects))
        block = int(rng.integers(N_BLOCKS))

        # 60% start in 2021 (full history + exam), the rest join in 2022.
        full_history = bool(rng.random() < 0.6)
        cohort_year = 2021 if full_history else 2022
        student_terms = [t for t in terms if t[0] >= cohort_year]
        out.write(_csv_row(student_id=sid, record_type="cohort", year=cohort_year) + "\n")

        for ti, (year, term) in enumerate(student_terms):
            for j, subject in enumerate(subjects):
                score = ability + affinity[j] + trend * ti + float(rng.normal(0, 4.0))
                score = min(100.0, max(0.0, score))
                out.write(_csv_row(student_id=sid, record_type="score", subject=subject,
                                   year=year, term=term, score=f"{score:.2f}") + "\n")

            absences = min(8, int(rng.poisson(max(0.15, 1.4 - 0.9 * propensity))))
            for _ in range(ATTENDANCE_DAYS_PER_TERM - absences):
                out.write(_csv_row(student_id=sid, record_type="behavior", event_kind="attendance",
                                   event_date=_term_event_date(rng, year, term)) + "\n")
            for _ in range(absences):
                out.write(_csv_row(student_id=sid, record_type="behavior", event_kind="absence",
                                   event_date=_term_event_date(rng, year, term)) + "\n")

            missed = int(rng.binomial(HOMEWORK_PER_TERM, 1 / (1 + np.exp(1.8 + 0.9 * propensity))))
            for _ in range(HOMEWORK_PER_TERM - missed):
                out.write(_csv_row(student_id=sid, record_type="behavior",
                                   event_kind="homework_submitted",
                                   event_date=_term_event_date(rng, year, term)) + "\n")
            for _ in range(missed):
                out.write(_csv_row(student_id=sid, record_type="behavior",
                                   event_kind="homework_missed",
                                   event_date=_term_event_date(rng, year, term)) + "\n")

            punishments = int(rng.poisson(0.12 + 0.5 * max(0.0, -propensity)))
            for _ in range(min(3, punishments)):
                out.write(_csv_row(student_id=sid, record_type="behavior", event_kind="punishment",
                                   event_date=_term_event_date(rng, year, term)) + "\n")
            award_rate = 0.08 + 0.25 * max(0.0, propensity) + 0.15 * max(0.0, ability_z)
            for _ in range(min(3, int(rng.poisson(award_rate)))):
                name, _category = AWARD_BANK[int(rng.integers(len(AWARD_BANK)))]
                # behavior detail (the award name) rides in the narrative column
                out.write(_csv_row(student_id=sid, record_type="behavior", event_kind="award",
                                   event_date=_term_event_date(rng, year, term),
                                   narrative=name) + "\n")

        # Activities: 0..3, weighted toward the student's interest block.
        n_acts = int(rng.integers(0, 4))
        for _ in range(n_acts):
            name, category = ACTIVITY_BANK[int(rng.integers(len(ACTIVITY_BANK)))]
            hours = float(min(120.0, max(2.0, rng.exponential(25.0))))
            out.write(_csv_row(student_id=sid, record_type="activity", activity_name=name,
                               activity_category=category, activity_hours=f"{hours:.1f}") + "\n")

        # IEP entries for ~12% of students; SEN type loosely tied to block so
        # the SEN x activity heatmap has visible structure.
        if rng.random() < 0.12:
            sen = SEN_TYPES[int(rng.integers(len(SEN_TYPES)))]
            for _ in range(int(rng.integers(1, 3))):
                narrative = NARRATIVE_TEMPLATES[int(rng.integers(len(NARRATIVE_TEMPLATES)))]
                out.write(_csv_row(student_id=sid, record_type="iep", sen_type=sen,
                                   narrative='"' + narrative + '"',
                                   event_date=_term_event_date(rng, *student_terms[0])) + "\n")

        # Electives: 4..7 enrollment draws, 85% from the interest block's
        # shared items, 5% any shared item, 10% an own-school exclusive.
        block_items = shared[BLOCK_SIZE * block:BLOCK_SIZE * (block + 1)]
        chosen: set[str] = set()
        for _ in range(int(rng.integers(4, 8))):
            u = rng.random()
            if u < 0.85:
                pool = block_items
            elif u < 0.9:
                pool = shared
            else:
                pool = exclusives
            item = pool[int(rng.integers(len(pool)))]
            if item in chosen:
                continue
            chosen.add(item)
            rating = f"{min(1.0, max(0.0, rng.normal(0.75, 0.15))):.2f}" if rng.random() < 0.5 else ""
            out.write(_csv_row(student_id=sid, record_type="elective", elective_id=item,
                               rating=rating) + "\n")

        # Teacher-entered target grades for 2..4 subjects.
        n_targets = int(rng.integers(2, 5))
        target_subjects = list(rng.choice(len(subjects), size=n_targets, replace=False))
        for j in sorted(target_subjects):
            band = int(min(7, max(1, round(2.5 + 2.2 * ability_z + rng.normal(0, 0.7)))))
            out.write(_csv_row(student_id=sid, record_type="target", target_subject=subjects[j],
                               target_grade=band) + "\n")

        # Public-exam outcomes for the full-history cohort, reserved term 9.
        if full_history:
            for j, subject in enumerate(subjects):
                score = ability + affinity[j] + trend * len(student_terms) + float(rng.normal(0, 5.0))
                score = min(100.0, max(0.0, score))
                out.write(_csv_row(student_id=sid, record_type="score", subject=subject,
                                   year=EXAM_YEAR, term=9, score=f"{score:.2f}") + "\n")

    return out.getvalue().encode("utf-8")


def generate_synthetic(spec: SyntheticDatasetSpec, out_dir: Path) -> list[Path]:
    """Write one CSV per school plus a manifest; returns the file paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for school_index in range(spec.schools):
        path = out_dir / f"school-{school_index}.csv"
        path.write_bytes(generate_school_csv(spec, school_index))
        paths.append(path)
    manifest = out_dir / "manifest.json"
    import json

    manifest.write_text(json.dumps({
        "schools": [f"sch-{i}" for i in range(spec.schools)],
        "files": [p.name for p in paths],
        "seed": spec.seed,
        "spec": spec.__dict__,
    }, indent=2, sort_keys=True))
    paths.append(manifest)
    return paths
