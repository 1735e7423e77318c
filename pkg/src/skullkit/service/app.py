"""HTTP service: visual Turing test sessions plus analysis endpoints.

Truth labels never leave the server before a session completes; images are
served only for the item currently at the session cursor.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles

from .. import fid as fid_mod
from .. import memaudit, radiometrics, vtt
from ..slicecore import load_dataset, read_manifest
from .schemas import (AnswerRequest, AnswerResponse, AuditRequest, AuditResponse,
                      FidRequest, FidResponse, MetricsRequest, MetricsResponse,
                      NextItemResponse, QuizCreateRequest, QuizCreateResponse,
                      ReportResponse, SessionCreateRequest, SessionCreateResponse,
                      SliceMetricsRow)


def _absolute_entries(manifest_path: str):
    base = Path(manifest_path).parent
    entries = []
    for entry in read_manifest(manifest_path):
        p = Path(entry.path)
        if not p.is_absolute():
            p = base / p
        entries.append(type(entry)(id=entry.id, path=str(p), provenance=entry.provenance))
    return entries


def create_app(data_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="skullkit", version="0.1.0")
    store = vtt.SessionStore(data_dir)
    app.state.store = store

    # -- quiz lifecycle ----------------------------------------------------

    @app.post("/quiz", response_model=QuizCreateResponse)
    def create_quiz(req: QuizCreateRequest) -> QuizCreateResponse:
        try:
            quiz = store.create_quiz(
                _absolute_entries(req.real_manifest),
                _absolute_entries(req.synthetic_manifest),
                vtt.QuizSpec(n_real=req.n_real, n_synthetic=req.n_synthetic,
                             duplicate_pairs_per_category=req.duplicate_pairs_per_category,
                             seed=req.seed))
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except (vtt.QuizBuildError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        return QuizCreateResponse(quiz_id=quiz.quiz_id, n_items=len(quiz.items))

    @app.post("/session", response_model=SessionCreateResponse)
    def create_session(req: SessionCreateRequest) -> SessionCreateResponse:
        try:
            session = store.start_session(req.quiz_id, req.grader_id)
        except vtt.UnknownQuizError:
            raise HTTPException(404, f"unknown quiz {req.quiz_id}")
        total = len(store.get_quiz(session.quiz_id).items)
        return SessionCreateResponse(session_id=session.session_id,
                                     quiz_id=session.quiz_id,
                                     cursor=session.cursor, total_items=total)

    @app.get("/session/{session_id}/next", response_model=NextItemResponse)
    def next_item(session_id: str) -> NextItemResponse:
        try:
            current = store.next_item(session_id)
            session = store.get_session(session_id)
            total = len(store.get_quiz(session.quiz_id).items)
        except vtt.UnknownSessionError:
            raise HTTPException(404, f"unknown session {session_id}")
        if current is None:
            return NextItemResponse(done=True, answered=total, total=total)
        index, _ = current
        return NextItemResponse(
            done=False, index=index,
            image_url=f"/session/{session_id}/item/{index}/image.png",
            answered=session.cursor, total=total)

    @app.get("/session/{session_id}/item/{index}/image.png")
    def item_image(session_id: str, index: int) -> Response:
        try:
            payload = store.item_png(session_id, index)
        except vtt.UnknownSessionError:
            raise HTTPException(404, f"unknown session {session_id}")
        except vtt.OutOfOrderError as exc:
            raise HTTPException(403, str(exc))
        return Response(content=payload, media_type="image/png")

    @app.post("/session/{session_id}/answer", response_model=AnswerResponse)
    def submit_answer(session_id: str, req: AnswerRequest) -> AnswerResponse:
        try:
            session = store.submit_answer(session_id, req.index, req.label,
                                          req.elapsed_ms)
        except vtt.UnknownSessionError:
            raise HTTPException(404, f"unknown session {session_id}")
        except (vtt.OutOfOrderError, vtt.SessionFinishedError) as exc:
            raise HTTPException(409, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        total = len(store.get_quiz(session.quiz_id).items)
        return AnswerResponse(accepted=True, cursor=session.cursor,
                              done=session.cursor >= total)

    @app.get("/session/{session_id}/report", response_model=ReportResponse)
    def session_report(session_id: str) -> ReportResponse:
        try:
            report = store.report(session_id)
            session = store.get_session(session_id)
        except vtt.UnknownSessionError:
            raise HTTPException(404, f"unknown session {session_id}")
        except vtt.IncompleteSessionError as exc:
            raise HTTPException(409, str(exc))
        return ReportResponse(session_id=session_id, grader_id=session.grader_id,
                              **report.to_dict())

    # -- analysis ----------------------------------------------------------

    @app.post("/analyze/metrics", response_model=MetricsResponse)
    def analyze_metrics(req: MetricsRequest) -> MetricsResponse:
        try:
            dataset = load_dataset(req.manifest)
            spec = radiometrics.ResolutionSpec(mm_per_px=req.mm_per_px)
            rows, skipped = radiometrics.per_slice_metrics(dataset, spec, req.floor_hu)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        dist = radiometrics.MetricDistribution(
            sdr=[m.sdr for _, m in rows],
            thickness_mm=[m.thickness_mm for _, m in rows],
            intensity_hu=[m.intensity_hu for _, m in rows],
            skipped=skipped)
        return MetricsResponse(
            rows=[SliceMetricsRow(id=sid, sdr=m.sdr, thickness_mm=m.thickness_mm,
                                  intensity_hu=m.intensity_hu, rays_used=m.rays_used)
                  for sid, m in rows],
            skipped=skipped, stats=dist.stats())

    @app.post("/analyze/fid", response_model=FidResponse)
    def analyze_fid(req: FidRequest) -> FidResponse:
        try:
            stats_r = fid_mod.feature_stats(fid_mod.load_features(req.real))
            stats_s = fid_mod.feature_stats(fid_mod.load_features(req.synthetic))
            score = fid_mod.fid_breakdown(stats_r, stats_s, req.mode)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return FidResponse(fid=score.total, mean_term=score.mean_term,
                           trace_term=score.trace_term, mode=score.mode.value)

    @app.post("/analyze/memaudit", response_model=AuditResponse)
    def analyze_memaudit(req: AuditRequest) -> AuditResponse:
        try:
            synth = load_dataset(req.synthetic_manifest)
            reals = load_dataset(req.real_manifest)
            mse_records = memaudit.nearest_by_mse(synth, reals, req.k)
            if req.features_synthetic and req.features_real:
                cos_records = memaudit.nearest_by_cosine(
                    fid_mod.load_features(req.features_synthetic),
                    fid_mod.load_features(req.features_real), req.k,
                    synth_ids=[s.id for s in synth], real_ids=[r.id for r in reals])
            else:
                feats_s = fid_mod.random_projection_features(synth)
                feats_r = fid_mod.random_projection_features(reals)
                cos_records = memaudit.nearest_by_cosine(
                    feats_s, feats_r, req.k,
                    synth_ids=[s.id for s in synth], real_ids=[r.id for r in reals])
            report = memaudit.audit_report(mse_records, cos_records,
                                           req.mse_near_threshold)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return AuditResponse(**report.to_dict())

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
