import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schoolpulse.alerts import (
    Alert,
    AlertColor,
    AlertConfig,
    AlertFeed,
    ConfigStore,
    InvalidConfig,
    ModelSet,
    SEVERITY,
    build_alert_feed,
    classify_behavior,
    classify_exam,
    classify_inschool,
)
from schoolpulse.features import fit_logistic, fit_ridge, FeatureVector
from schoolpulse.records import StudentRecord, TermScore


# Independently coded three-branch oracles (kept deliberately dumb).

def oracle_inschool(delta, red, yellow):
    if delta <= red:
        return "red"
    elif red < delta <= yellow:
        return "yellow"
    else:
        return "green"


def oracle_exam(dev, red, yellow):
    if dev <= red:
        return "red"
    elif red < dev <= yellow:
        return "yellow"
    else:
        return "green"


def oracle_behavior(risk, red, yellow):
    if risk >= red:
        return "red"
    elif yellow <= risk < red:
        return "yellow"
    else:
        return "green"


class TestClassifyInschool:
    def test_significant_decline_red(self):
        assert classify_inschool(-12.0, AlertConfig()) is AlertColor.RED

    def test_slight_decline_yellow(self):
        assert classify_inschool(-5.0, AlertConfig()) is AlertColor.YELLOW

    def test_stable_or_improving_green(self):
        assert classify_inschool(2.0, AlertConfig()) is AlertColor.GREEN

    def test_boundary_red_cutoff_inclusive(self):
        assert classify_inschool(-10.0, AlertConfig()) is AlertColor.RED


class TestClassifyExam:
    def test_meets_target_green(self):
        assert classify_exam(4, 4, AlertConfig()) is AlertColor.GREEN

    def test_slight_deviation_yellow(self):
        assert classify_exam(3, 4, AlertConfig()) is AlertColor.YELLOW

    def test_significant_deviation_red(self):
        assert classify_exam(1, 4, AlertConfig()) is AlertColor.RED


class TestClassifyBehavior:
    def test_high_risk_red(self):
        assert classify_behavior(0.9, AlertConfig()) is AlertColor.RED

    def test_mid_risk_yellow(self):
        assert classify_behavior(0.5, AlertConfig()) is AlertColor.YELLOW

    def test_zero_risk_green(self):
        assert classify_behavior(0.0, AlertConfig()) is AlertColor.GREEN


def random_config(rng):
    red_cut = -rng.uniform(3, 20)
    yellow_cut = rng.uniform(red_cut + 0.01, 0.0)
    yellow_dev = -rng.integers(1, 4)
    red_dev = yellow_dev - rng.integers(0, 4)
    b_yellow = rng.uniform(0.05, 0.6)
    b_red = rng.uniform(b_yellow + 0.01, 1.0)
    return AlertConfig(
        inschool_red_cutoff=red_cut,
        inschool_yellow_cutoff=yellow_cut,
        exam_yellow_deviation=int(yellow_dev),
        exam_red_deviation=int(red_dev),
        behavior_red=b_red,
        behavior_yellow=b_yellow,
    )


def test_oracle_equivalence_grids():
    rng = np.random.default_rng(99)
    deltas = np.arange(-20, 20 + 0.25, 0.25)
    for _ in range(50):
        cfg = random_config(rng)
        for d in deltas:
            assert classify_inschool(float(d), cfg).value == oracle_inschool(
                d, cfg.inschool_red_cutoff, cfg.inschool_yellow_cutoff
            )
        for dev in range(-8, 9):
            assert classify_exam(dev, 0, cfg).value == oracle_exam(
                dev, cfg.exam_red_deviation, cfg.exam_yellow_deviation
            )
        for risk in np.arange(0, 1.0001, 0.01):
            assert classify_behavior(float(risk), cfg).value == oracle_behavior(
                risk, cfg.behavior_red, cfg.behavior_yellow
            )


@settings(max_examples=200)
@given(
    d1=st.floats(-30, 30, allow_nan=False),
    d2=st.floats(-30, 30, allow_nan=False),
)
def test_monotone_severity_inschool(d1, d2):
    cfg = AlertConfig()
    lo, hi = min(d1, d2), max(d1, d2)
    assert SEVERITY[classify_inschool(lo, cfg)] >= SEVERITY[classify_inschool(hi, cfg)]


@settings(max_examples=200)
@given(r1=st.floats(0, 1), r2=st.floats(0, 1))
def test_monotone_severity_behavior(r1, r2):
    cfg = AlertConfig()
    lo, hi = min(r1, r2), max(r1, r2)
    assert SEVERITY[classify_behavior(hi, cfg)] >= SEVERITY[classify_behavior(lo, cfg)]


class TestConfigStore:
    def test_invalid_ordering_rejected(self):
        store = ConfigStore()
        with pytest.raises(InvalidConfig):
            store.update_config(AlertConfig(inschool_red_cutoff=-3, inschool_yellow_cutoff=-10))

    def test_defaults_accepted(self):
        store = ConfigStore()
        assert store.update_config(AlertConfig()) == 1

    def test_subject_override_preferred(self):
        store = ConfigStore()
        store.update_config(AlertConfig(teacher_id="t1", inschool_red_cutoff=-15.0))
        store.update_config(AlertConfig(teacher_id="t1", subject="math", inschool_red_cutoff=-6.0))
        assert store.lookup("t1", "math").inschool_red_cutoff == -6.0
        assert store.lookup("t1", "english").inschool_red_cutoff == -15.0

    def test_snapshot_ids_monotone(self):
        store = ConfigStore()
        ids = [store.update_config(AlertConfig()) for _ in range(3)]
        assert ids == [1, 2, 3]

    def test_round_trip(self):
        store = ConfigStore()
        store.update_config(AlertConfig(teacher_id="t1", behavior_red=0.9))
        restored = ConfigStore.from_dict(store.to_dict())
        assert restored.lookup("t1").behavior_red == 0.9
        assert restored.snapshot == store.snapshot


def fv(values, schema):
    return FeatureVector(values=tuple(values), schema_id=schema)


def student(token_char, scores):
    return StudentRecord(
        token=token_char * 64,
        school="sch-1",
        cohort_year=2020,
        scores=tuple(scores),
    )


class TestBuildAlertFeed:
    def make_roster(self):
        # Three students with different trajectories in one subject.
        return [
            student("a", [TermScore("math", 2023, 1, 80.0), TermScore("math", 2023, 2, 80.0)]),
            student("b", [TermScore("math", 2023, 1, 60.0), TermScore("math", 2023, 2, 60.0)]),
            student("c", [TermScore("math", 2023, 1, 40.0), TermScore("math", 2023, 2, 40.0)]),
        ]

    def make_models(self):
        # In-school model: predicted next = last2_mean - 8 (slight decline for all).
        schema = "perf-v1:math"
        rows = [
            (fv([x, x, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0], schema), max(0.0, x - 8))
            for x in [30, 50, 70, 90]
        ]
        model = fit_ridge(rows, lam=1e-6)
        return ModelSet(inschool={"math": model})

    def test_feed_sorted_worst_first(self):
        store = ConfigStore()
        store.update_config(AlertConfig())
        feed = build_alert_feed(self.make_roster(), self.make_models(), store)
        assert len(feed.alerts) == 3
        severities = [SEVERITY[a.color] for a in feed.alerts]
        assert severities == sorted(severities, reverse=True)
        assert any("exam" in w for w in feed.warnings)
        assert any("behavior" in w for w in feed.warnings)

    def test_red_ties_broken_by_metric(self):
        store = ConfigStore()
        alerts = [
            Alert("a" * 64, "inschool:math", AlertColor.RED, -11.0, 0, "t"),
            Alert("b" * 64, "inschool:math", AlertColor.RED, -15.0, 0, "t"),
        ]
        from schoolpulse.alerts import _sort_key
        assert sorted(alerts, key=_sort_key)[0].metric == -15.0

    def test_feed_deterministic(self):
        store = ConfigStore()
        roster, models = self.make_roster(), self.make_models()
        f1 = build_alert_feed(roster, models, store)
        f2 = build_alert_feed(roster, models, store)
        assert f1.to_jsonl() == f2.to_jsonl()

    def test_alerts_rederivable(self):
        store = ConfigStore()
        feed = build_alert_feed(self.make_roster(), self.make_models(), store)
        cfg = store.lookup("default", "math")
        for alert in feed.alerts:
            assert classify_inschool(alert.metric, cfg) is alert.color

    def test_behavior_dimension_with_model(self):
        import datetime as dt
        from schoolpulse.records import BehaviorEvent, BehaviorKind

        roster = self.make_roster()
        roster[0] = StudentRecord(
            token=roster[0].token, school="sch-1", cohort_year=2020,
            scores=roster[0].scores,
            behavior=(BehaviorEvent(BehaviorKind.ABSENCE, dt.date(2023, 5, 5)),),
        )
        schema = "perf-v1:*"
        rows = [
            (fv([50, 50, r, 1, p, 0, 0, 0, 0, 0, 0, 0], schema), int(r < 0.8))
            for r, p in [(1.0, 0), (0.9, 0), (0.5, 1), (0.3, 2), (0.7, 1), (0.95, 0)]
        ]
        behavior_model = fit_logistic(rows, lam=0.1)
        models = ModelSet(inschool=self.make_models().inschool, behavior=behavior_model)
        store = ConfigStore()
        feed = build_alert_feed(roster, models, store)
        assert any(a.dimension == "behavior" for a in feed.alerts)


def test_shared_schema_matches_alert_config_invariants():
    # The dashboard validates threshold forms with schema/alert_config_constraints.json;
    # this pins that file to AlertConfig.check so the two sides cannot drift.
    import json
    import operator
    from pathlib import Path

    schema = json.loads(
        (Path(__file__).parent.parent / "schema" / "alert_config_constraints.json").read_text()
    )
    ops = {"<": operator.lt, "<=": operator.le}

    def schema_valid(cfg: AlertConfig) -> bool:
        values = cfg.__dict__
        for rule in schema["orderings"]:
            lhs = values[rule["lhs"]] if isinstance(rule["lhs"], str) else rule["lhs"]
            rhs = values[rule["rhs"]] if isinstance(rule["rhs"], str) else rule["rhs"]
            if not ops[rule["op"]](lhs, rhs):
                return False
        return True

    rng = np.random.default_rng(4)
    agreements = 0
    for _ in range(500):
        cfg = AlertConfig(
            inschool_red_cutoff=float(rng.uniform(-20, 3)),
            inschool_yellow_cutoff=float(rng.uniform(-15, 3)),
            exam_yellow_deviation=int(rng.integers(-4, 2)),
            exam_red_deviation=int(rng.integers(-6, 2)),
            behavior_red=float(rng.uniform(-0.2, 1.3)),
            behavior_yellow=float(rng.uniform(-0.2, 1.2)),
        )
        try:
            cfg.check()
            ok = True
        except InvalidConfig:
            ok = False
        assert ok == schema_valid(cfg)
        agreements += 1
    assert agreements == 500
