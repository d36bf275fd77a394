"""Platform orchestration: ties ingestion, training, alerts, analytics, and
the federation simulation to the document store.

The central store never holds a raw student id: records arrive through the
privacy split, and everything downstream is keyed by pseudonym token. The
re-identification tables and the schools' private federation state live in a
separate ``local/`` area that stands in for school-side storage.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import Any, Optional

from . import alerts as alerts_mod
from . import features as feat
from .alerts import AlertConfig, AlertFeed, ConfigStore, ModelSet, build_alert_feed
from .config import PlatformConfig
from .federation import FederationConfig, run_federation
from .federation.node import ItemFactors, SchoolNode, nodes_from_records
from .federation.recommend import Recommendation, enrollment_popularity, recommend_or_cold_start
from .iep import (
    cooccurrence,
    correlate,
    load_default_lexicon,
    load_default_phrase_rules,
    load_default_stopwords,
    wordcloud_counts,
)
from .privacy import (
    IngestFormat,
    PseudonymKey,
    ReidentificationTable,
    central_records_from_jsonl,
    central_records_to_jsonl,
    decrypt_table,
    encrypt_table,
    parse_batch,
    split_stores,
)
from .records import StudentRecord, merge_records
from .store import DocumentStore
from .talent import (
    AwardCategorizer,
    TalentScorecard,
    TalentWeights,
    cohort_top_decile_cutoffs,
    rank_category,
    score_student,
)

log = logging.getLogger("schoolpulse")


class TrainingInProgress(Exception):
    pass


class NotTrained(Exception):
    pass


class UnknownToken(Exception):
    pass


class Platform:
    def __init__(self, config: PlatformConfig):
        config.check()
        self.config = config
        self.store = DocumentStore(config.data_dir)
        self.key = PseudonymKey.from_hex(config.pseudonym_key_hex)
        self.records: dict[str, dict[str, StudentRecord]] = {}
        self.config_store = ConfigStore()
        self.inschool: dict[str, dict[str, feat.LinearModel]] = {}
        self.exam: dict[str, feat.LinearModel] = {}
        self.behavior: Optional[feat.LogisticModel] = None
        self.fed_nodes: dict[str, SchoolNode] = {}
        self.fed_factors: Optional[ItemFactors] = None
        self.fed_history: list[dict[str, Any]] = []
        self.fed_final_metric: Optional[float] = None
        self.fed_runs: dict[str, list[dict[str, Any]]] = {}
        self.train_versions: dict[str, int] = {}
        self._train_lock = threading.Lock()
        self.config_store.update_config(AlertConfig(**{"teacher_id": "default", **config.ews.__dict__}))
        self._load()

    # ---------------------------------------------------------------- load

    def _load(self) -> None:
        for name in self.store.list("central"):
            school = Path(name).stem
            records = central_records_from_jsonl(self.store.load_bytes(name))
            self.records[school] = {r.token: r for r in records}
        for name in self.store.list("models"):
            model = feat.model_from_json(self.store.load_bytes(name).decode("utf-8"))
            parts = Path(name).with_suffix("").parts  # models/<kind>/...
            if parts[1] == "inschool":
                self.inschool.setdefault(parts[2], {})[parts[3]] = model
            elif parts[1] == "exam":
                self.exam[parts[2]] = model
            elif parts[1] == "behavior":
                self.behavior = model
        configs = self.store.load_json_optional("configs.json")
        if configs is not None:
            self.config_store = ConfigStore.from_dict(configs)
        fed = self.store.load_json_optional("federation/state.json")
        if fed is not None:
            self.fed_factors = ItemFactors.from_payload(fed["factors"])
            self.fed_history = fed["history"]
            self.fed_final_metric = fed.get("final_metric")
            self.fed_runs = fed.get("runs", {})
            for school, state in fed.get("nodes", {}).items():
                node_state = self.store.load_json_optional(f"local/{state}")
                if node_state is not None:
                    self.fed_nodes[school] = SchoolNode.from_state_dict(node_state)
        versions = self.store.load_json_optional("train_versions.json")
        if versions is not None:
            self.train_versions = versions

    # -------------------------------------------------------------- ingest

    def ingest(self, content: bytes, school: str, fmt: IngestFormat) -> dict[str, Any]:
        batch = parse_batch(content, fmt, school)
        central, table = split_stores(batch, self.key)

        existing = self.records.setdefault(school, {})
        for record in central:
            if record.token in existing:
                existing[record.token] = merge_records(existing[record.token], record)
            else:
                existing[record.token] = record

        sorted_records = [existing[t] for t in sorted(existing)]
        self.store.save_bytes(f"central/{school}.jsonl", central_records_to_jsonl(sorted_records))

        table_name = f"local/{school}.table"
        if self.store.exists(table_name):
            old = decrypt_table(self.store.load_bytes(table_name), self.key)
            old.entries.update(table.entries)
            table = old
        self.store.save_bytes(table_name, encrypt_table(table, self.key))

        return {
            "school": school,
            "students": len(central),
            "rows": len(batch.records),
            "rejects": [{"line": r.line, "reason": r.reason} for r in batch.rejects],
        }

    def all_records(self) -> list[StudentRecord]:
        return [r for school in sorted(self.records) for _, r in sorted(self.records[school].items())]

    def find_record(self, token: str) -> StudentRecord:
        for school in self.records:
            if token in self.records[school]:
                return self.records[school][token]
        raise UnknownToken(token)

    # ------------------------------------------------------------ training

    def _student_terms(self, record: StudentRecord) -> list[tuple[int, int]]:
        return sorted({(s.year, s.term) for s in record.scores if s.term != feat.EXAM_TERM})

    def _inschool_rows(self, school: str, subject: str):
        rows = []
        for _, record in sorted(self.records.get(school, {}).items()):
            history = sorted(
                ((s.year, s.term), s.score)
                for s in record.scores
                if s.subject == subject and s.term != feat.EXAM_TERM
            )
            for (prev, _), (nxt, target) in zip(history, history[1:]):
                try:
                    f = feat.extract_features(record, subject, prev)
                except feat.NoHistory:
                    continue
                rows.append((f, target))
        return rows

    def _exam_rows(self, subject: str):
        rows = []
        for record in self.all_records():
            exam_scores = [s.score for s in record.scores
                           if s.subject == subject and s.term == feat.EXAM_TERM]
            terms = self._student_terms(record)
            years = {y for y, _ in terms}
            if not exam_scores or len(years) < 3:
                continue
            try:
                f = feat.extract_features(record, subject, terms[-1])
            except feat.NoHistory:
                continue
            rows.append((f, exam_scores[0]))
        return rows

    def _behavior_rows(self):
        rule = feat.RiskLabelRule(
            absence_threshold=self.config.models.absence_threshold,
            discipline_threshold=self.config.models.discipline_threshold,
        )
        rows = []
        for record in self.all_records():
            terms = self._student_terms(record)
            for prev, nxt in zip(terms, terms[1:]):
                try:
                    label = feat.label_risk(record, rule, nxt)
                    f = feat.extract_features(record, None, prev)
                except (feat.UnknownTerm, feat.NoHistory):
                    continue
                rows.append((f, label))
        return rows

    @staticmethod
    def _split_holdout(rows):
        train = [r for i, r in enumerate(rows) if i % 5 != 4]
        holdout = [r for i, r in enumerate(rows) if i % 5 == 4]
        return train, holdout or train

    def train(self, kind: str) -> dict[str, Any]:
        if not self._train_lock.acquire(blocking=False):
            raise TrainingInProgress(kind)
        try:
            if not self.records:
                raise NotTrained("no records ingested")
            if kind == "inschool":
                result = self._train_inschool()
            elif kind == "exam":
                result = self._train_exam()
            elif kind == "behavior":
                result = self._train_behavior()
            else:
                raise ValueError(f"unknown training kind: {kind}")
            self.train_versions[kind] = self.train_versions.get(kind, 0) + 1
            self.store.save_json("train_versions.json", self.train_versions)
            return {"version": self.train_versions[kind], **result}
        finally:
            self._train_lock.release()

    def _subjects(self) -> list[str]:
        return sorted({s.subject for r in self.all_records() for s in r.scores})

    def _train_inschool(self) -> dict[str, Any]:
        lam = self.config.models.ridge_lambda
        trained, metrics = 0, []
        for school in sorted(self.records):
            for subject in self._subjects():
                rows = self._inschool_rows(school, subject)
                if len(rows) < 10:
                    continue
                train, holdout = self._split_holdout(rows)
                model = feat.fit_ridge(train, lam)
                self.inschool.setdefault(school, {})[subject] = model
                self.store.save_bytes(
                    f"models/inschool/{school}/{subject}.json",
                    feat.model_to_json(model).encode("utf-8"),
                )
                metrics.append(feat.evaluate_regression(model, holdout)["rmse"])
                trained += 1
        if not trained:
            raise NotTrained("no (school, subject) slot has enough rows")
        return {"kind": "inschool", "models": trained,
                "mean_rmse": sum(metrics) / len(metrics)}

    def _train_exam(self) -> dict[str, Any]:
        lam = self.config.models.ridge_lambda
        trained, metrics = 0, []
        for subject in self._subjects():
            rows = self._exam_rows(subject)
            if len(rows) < 10:
                continue
            train, holdout = self._split_holdout(rows)
            model = feat.fit_ridge(train, lam)
            self.exam[subject] = model
            self.store.save_bytes(
                f"models/exam/{subject}.json", feat.model_to_json(model).encode("utf-8")
            )
            metrics.append(feat.evaluate_regression(model, holdout)["rmse"])
            trained += 1
        if not trained:
            raise NotTrained("no subject has enough exam rows (needs >=3 years of history)")
        return {"kind": "exam", "models": trained, "mean_rmse": sum(metrics) / len(metrics)}

    def _train_behavior(self) -> dict[str, Any]:
        rows = self._behavior_rows()
        if len(rows) < 20 or len({label for _, label in rows}) < 2:
            raise NotTrained("not enough labeled behavior rows (need both classes)")
        train, holdout = self._split_holdout(rows)
        model = feat.fit_logistic(train, self.config.models.logistic_lambda)
        self.behavior = model
        self.store.save_bytes("models/behavior/model.json", feat.model_to_json(model).encode("utf-8"))
        metrics = feat.evaluate_classification(model, holdout)
        return {"kind": "behavior", "models": 1, **metrics}

    # ---------------------------------------------------------- prediction

    def predictions(self, token: str) -> dict[str, Any]:
        record = self.find_record(token)
        terms = self._student_terms(record)
        if not terms:
            raise NotTrained("student has no scored terms")
        boundary = terms[-1]
        out: dict[str, Any] = {"token": token, "as_of": list(boundary),
                               "scores": {}, "exam_grades": {}, "behavior_risk": None}
        school_models = self.inschool.get(record.school, {})
        for subject, model in sorted(school_models.items()):
            try:
                f = feat.extract_features(record, subject, boundary)
            except feat.NoHistory:
                continue
            out["scores"][subject] = feat.predict_score(model, f)
        bins = list(self.config.models.exam_bins)
        for subject, model in sorted(self.exam.items()):
            try:
                f = feat.extract_features(record, subject, boundary)
            except feat.NoHistory:
                continue
            out["exam_grades"][subject] = feat.predict_exam_grade(model, f, bins)
        if self.behavior is not None:
            try:
                f = feat.extract_features(record, None, boundary)
                out["behavior_risk"] = feat.predict_behavior_risk(self.behavior, f)
            except feat.NoHistory:
                pass
        return out

    # -------------------------------------------------------------- alerts

    def model_set(self, school: str) -> ModelSet:
        return ModelSet(
            inschool=self.inschool.get(school, {}),
            exam=self.exam,
            behavior=self.behavior,
            exam_bins=tuple(self.config.models.exam_bins),
        )

    def alert_feed(self, school: Optional[str] = None, teacher_id: str = "default") -> AlertFeed:
        schools = [school] if school else sorted(self.records)
        all_alerts: list = []
        warnings: list[str] = []
        for sch in schools:
            roster = [r for _, r in sorted(self.records.get(sch, {}).items())]
            if not roster:
                continue
            feed = build_alert_feed(roster, self.model_set(sch), self.config_store, teacher_id)
            all_alerts.extend(feed.alerts)
            for w in feed.warnings:
                tagged = f"{sch}: {w}"
                if tagged not in warnings:
                    warnings.append(tagged)
        all_alerts.sort(key=alerts_mod._sort_key)
        return AlertFeed(alerts=all_alerts, warnings=warnings)

    def student_alerts(self, token: str, teacher_id: str = "default") -> AlertFeed:
        record = self.find_record(token)
        feed = build_alert_feed([record], self.model_set(record.school), self.config_store, teacher_id)
        return feed

    def update_thresholds(self, cfg: AlertConfig) -> int:
        snapshot = self.config_store.update_config(cfg)
        self.store.save_json("configs.json", self.config_store.to_dict())
        return snapshot

    # ----------------------------------------------------------- analytics

    def iep_wordcloud(self, top_n: int = 50) -> list[dict[str, Any]]:
        docs = [e.narrative for r in self.all_records() for e in r.iep if e.narrative]
        entries = wordcloud_counts(
            docs, load_default_lexicon(), load_default_phrase_rules(),
            load_default_stopwords(), top_n,
        )
        return [{"term": e.term, "count": e.count} for e in entries]

    def iep_heatmap(self) -> list[dict[str, Any]]:
        cells = correlate(cooccurrence(self.all_records()))
        return [c.to_dict() for c in cells]

    def talent_weights(self) -> TalentWeights:
        """Deployment override via talent_weights.json in the data dir."""
        if self.store.exists("talent_weights.json"):
            import json as json_mod

            return TalentWeights.from_json(
                json_mod.dumps(self.store.load_json("talent_weights.json"))
            )
        return TalentWeights()

    def talent_scorecards(self) -> list[TalentScorecard]:
        records = self.all_records()
        cutoffs = cohort_top_decile_cutoffs(records)
        categorizer = AwardCategorizer.default()
        weights = self.talent_weights()
        return [score_student(r, weights, cutoffs, categorizer) for r in records]

    def talent_list(self, category: str, k: int, min_score: float) -> list[dict[str, Any]]:
        top = rank_category(self.talent_scorecards(), category, k, min_score)
        return [
            {"token": sc.token, "score": sc.scores[category],
             "evidence": [e.__dict__ for e in sc.evidence if e.category == category]}
            for sc in top
        ]

    # ----------------------------------------------------------- federation

    def run_federation_sim(self) -> dict[str, Any]:
        if not self._train_lock.acquire(blocking=False):
            raise TrainingInProgress("federation")
        try:
            fp = self.config.federation
            records_by_school = {
                school: [r for _, r in sorted(mapping.items())]
                for school, mapping in self.records.items()
            }
            nodes = nodes_from_records(records_by_school, dim=fp.dim, seed=fp.seed)
            if len(nodes) < 2:
                raise NotTrained("federation needs interactions from at least 2 schools")
            cfg = FederationConfig(
                schools=tuple(sorted(nodes)), rounds=fp.rounds, dim=fp.dim,
                epochs=fp.epochs, lr=fp.lr, lam=fp.lam, alpha=fp.alpha, seed=fp.seed,
            )
            result = run_federation(cfg, nodes)
            self.fed_nodes = nodes
            self.fed_factors = result.factors
            self.fed_history = result.history
            self.fed_final_metric = result.final_metric
            node_files = {}
            for school, node in nodes.items():
                self.store.save_json(f"local/{school}.fedstate.json", node.to_state_dict())
                node_files[school] = f"{school}.fedstate.json"
            run_id = f"run-{len(self.fed_runs) + 1:03d}"
            self.fed_runs[run_id] = result.history
            self.store.save_json("federation/state.json", {
                "factors": result.factors.to_payload(),
                "history": result.history,
                "final_metric": result.final_metric,
                "aborted": result.aborted,
                "nodes": node_files,
                "runs": self.fed_runs,
            })
            return {"run_id": run_id, "rounds": len(result.history),
                    "final_metric": result.final_metric,
                    "aborted": result.aborted, "version": result.factors.version}
        finally:
            self._train_lock.release()

    def recommendations(self, token: str, k: int) -> list[Recommendation]:
        if self.fed_factors is None or not self.fed_nodes:
            raise NotTrained("federation has not been run")
        record = self.find_record(token)
        return recommend_or_cold_start(self.fed_nodes, self.fed_factors, token, record.school, k)

    def popularity(self) -> dict[str, float]:
        if not self.fed_nodes:
            raise NotTrained("federation has not been run")
        return enrollment_popularity(self.fed_nodes)
