"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class QuizCreateRequest(BaseModel):
    real_manifest: str
    synthetic_manifest: str
    seed: int = 0
    n_real: int = 25
    n_synthetic: int = 25
    duplicate_pairs_per_category: int = 3


class QuizCreateResponse(BaseModel):
    quiz_id: str
    n_items: int


class SessionCreateRequest(BaseModel):
    quiz_id: str
    grader_id: str


class SessionCreateResponse(BaseModel):
    session_id: str
    quiz_id: str
    cursor: int
    total_items: int


class NextItemResponse(BaseModel):
    done: bool
    index: Optional[int] = None
    image_url: Optional[str] = None
    answered: int
    total: int


class AnswerRequest(BaseModel):
    index: int
    label: Literal["real", "synthetic"]
    elapsed_ms: int = Field(gt=0)


class AnswerResponse(BaseModel):
    accepted: bool
    cursor: int
    done: bool


class ReportResponse(BaseModel):
    session_id: str
    grader_id: str
    tp: int
    fp: int
    tn: int
    fn: int
    tpr: float
    fpr: float
    accuracy_percent: float
    switch_rate_percent: float
    switched_groups: int
    duplicate_groups: int
    mean_time_synthetic_s: float
    mean_time_real_s: float
    total_time_s: float


class SliceMetricsRow(BaseModel):
    id: str
    sdr: float
    thickness_mm: float
    intensity_hu: float
    rays_used: int


class MetricsRequest(BaseModel):
    manifest: str
    mm_per_px: float = 0.45
    floor_hu: float = 10.0


class MetricsResponse(BaseModel):
    rows: list[SliceMetricsRow]
    skipped: int
    stats: dict


class FidRequest(BaseModel):
    real: str
    synthetic: str
    mode: Literal["standard", "paper_literal"] = "standard"


class FidResponse(BaseModel):
    fid: float
    mean_term: float
    trace_term: float
    mode: str


class AuditRequest(BaseModel):
    synthetic_manifest: str
    real_manifest: str
    features_synthetic: Optional[str] = None
    features_real: Optional[str] = None
    k: int = 3
    mse_near_threshold: float = Field(gt=0)


class AuditResponse(BaseModel):
    verdict: str
    mse_near_threshold: float
    flagged: list[str]
    records: list[dict]
