"""HTTP API over the platform. Token-scoped: no endpoint ever sees or
serializes a raw student id; re-identification is a school-local CLI concern.

Error mapping: 400 for validation failures (with violation descriptors),
404 for unknown tokens, 409 while training or when a trained artifact is
required but absent. All list endpoints accept ``limit``/``offset``.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, File, Form, HTTPException, Query, UploadFile
from pydantic import BaseModel

from .alerts import AlertConfig, InvalidConfig
from .platform import NotTrained, Platform, TrainingInProgress, UnknownToken
from .privacy import EmptyFile, IngestFormat, UnsupportedFormat
from .talent import UnknownCategory


class ThresholdUpdate(BaseModel):
    teacher_id: str = "default"
    subject: Optional[str] = None
    inschool_red_cutoff: float = -10.0
    inschool_yellow_cutoff: float = -3.0
    exam_yellow_deviation: int = -1
    exam_red_deviation: int = -2
    behavior_red: float = 0.7
    behavior_yellow: float = 0.4


def _page(items: list, limit: Optional[int], offset: int) -> list:
    end = None if limit is None else offset + limit
    return items[offset:end]


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="schoolpulse", version="0.1.0")

    @app.exception_handler(UnknownToken)
    async def _unknown_token(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"error": "unknown token"})

    @app.post("/ingest")
    async def ingest(
        file: UploadFile = File(...),
        school: str = Form(...),
        format: str = Form("csv"),
    ):
        try:
            fmt = IngestFormat(format)
        except ValueError:
            raise HTTPException(400, f"unsupported format {format!r}")
        content = await file.read()
        try:
            return platform.ingest(content, school, fmt)
        except (EmptyFile, UnsupportedFormat) as exc:
            raise HTTPException(400, str(exc))

    @app.post("/train")
    def train(kind: str = Query(...)):
        try:
            return platform.train(kind)
        except TrainingInProgress:
            raise HTTPException(409, "training in progress")
        except NotTrained as exc:
            raise HTTPException(409, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))

    @app.get("/students/{token}/predictions")
    def predictions(token: str):
        try:
            return platform.predictions(token)
        except NotTrained as exc:
            raise HTTPException(409, str(exc))

    @app.get("/students/{token}/alerts")
    def student_alerts(token: str, teacher_id: str = "default",
                       limit: Optional[int] = None, offset: int = 0):
        feed = platform.student_alerts(token, teacher_id)
        return {
            "alerts": _page([a.to_dict() for a in feed.alerts], limit, offset),
            "warnings": feed.warnings,
        }

    @app.get("/classes/{class_id}/alerts")
    def class_alerts(class_id: str, teacher_id: str = "default",
                     limit: Optional[int] = None, offset: int = 0):
        if class_id != "all" and class_id not in platform.records:
            raise HTTPException(404, f"unknown class {class_id!r}")
        feed = platform.alert_feed(None if class_id == "all" else class_id, teacher_id)
        return {
            "alerts": _page([a.to_dict() for a in feed.alerts], limit, offset),
            "warnings": feed.warnings,
        }

    @app.put("/config/thresholds")
    def update_thresholds(update: ThresholdUpdate):
        try:
            snapshot = platform.update_thresholds(AlertConfig(**update.model_dump()))
        except InvalidConfig as exc:
            raise HTTPException(400, f"InvalidConfig: {exc}")
        return {"snapshot": snapshot}

    @app.get("/config/thresholds")
    def get_thresholds(teacher_id: str = "default", subject: Optional[str] = None):
        cfg = platform.config_store.lookup(teacher_id, subject)
        return {"snapshot": platform.config_store.snapshot, **cfg.__dict__}

    @app.get("/iep/wordcloud")
    def wordcloud(top_n: int = Query(50, ge=1), limit: Optional[int] = None, offset: int = 0):
        return _page(platform.iep_wordcloud(top_n), limit, offset)

    @app.get("/iep/heatmap")
    def heatmap(limit: Optional[int] = None, offset: int = 0):
        return _page(platform.iep_heatmap(), limit, offset)

    @app.get("/talents/{category}")
    def talents(category: str, k: int = Query(10, ge=1), min_score: float = Query(5.0, ge=0),
                limit: Optional[int] = None, offset: int = 0):
        try:
            return _page(platform.talent_list(category, k, min_score), limit, offset)
        except UnknownCategory as exc:
            raise HTTPException(400, str(exc))

    @app.get("/students/{token}/recommendations")
    def recommendations(token: str, k: int = Query(5, ge=1),
                        limit: Optional[int] = None, offset: int = 0):
        try:
            recs = platform.recommendations(token, k)
        except NotTrained as exc:
            raise HTTPException(409, str(exc))
        return _page([r.to_dict() for r in recs], limit, offset)

    @app.post("/federation/run")
    def federation_run():
        try:
            return platform.run_federation_sim()
        except TrainingInProgress:
            raise HTTPException(409, "training in progress")
        except NotTrained as exc:
            raise HTTPException(409, str(exc))

    @app.get("/federation/{run_id}/history")
    def federation_history(run_id: str, limit: Optional[int] = None, offset: int = 0):
        if run_id not in platform.fed_runs:
            raise HTTPException(404, f"unknown run {run_id!r}")
        return _page(platform.fed_runs[run_id], limit, offset)

    @app.get("/students/{token}/record")
    def student_record(token: str):
        from .records import record_to_dict

        return record_to_dict(platform.find_record(token))

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "schools": sorted(platform.records),
            "students": sum(len(v) for v in platform.records.values()),
            "models": {
                "inschool": sum(len(v) for v in platform.inschool.values()),
                "exam": len(platform.exam),
                "behavior": platform.behavior is not None,
            },
            "federation_trained": platform.fed_factors is not None,
        }

    return app
