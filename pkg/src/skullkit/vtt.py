"""Visual Turing test: quiz assembly, session management, and scoring.

A quiz holds 25 real and 25 synthetic items in seeded random order; three
items per category appear twice (duplicate groups u, v, w for real and
x, y, z for synthetic), so a grader's consistency can be measured as the
fraction of groups whose two presentations got different labels.

Sessions are strictly forward-only: one item at a time, answers append-only,
no revision. Every state change is persisted to an append-only JSON-lines
event log before it is acknowledged; replaying the log reconstructs the
session exactly. The first event embeds the full quiz snapshot, so a log
file alone is enough to score a session.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .slicecore import (DEFAULT_WINDOW, CtSlice, IntensityWindow, ManifestEntry,
                        SliceFormat, load_slice, normalize)

REAL = "real"
SYNTHETIC = "synthetic"
LABELS = (REAL, SYNTHETIC)

_REAL_TAGS = "uvw"
_SYNTH_TAGS = "xyz"


class QuizBuildError(ValueError):
    """Raised when the item pools cannot satisfy the quiz layout."""


class UnknownQuizError(KeyError):
    pass


class UnknownSessionError(KeyError):
    pass


class OutOfOrderError(ValueError):
    """Submission for an index other than the cursor: revision attempts and
    duplicate submissions are both rejected with this error."""


class SessionFinishedError(ValueError):
    pass


class IncompleteSessionError(ValueError):
    pass


@dataclass(frozen=True)
class QuizSpec:
    n_real: int = 25
    n_synthetic: int = 25
    duplicate_pairs_per_category: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        for n in (self.n_real, self.n_synthetic):
            if self.duplicate_pairs_per_category < 0 or 2 * self.duplicate_pairs_per_category > n:
                raise ValueError("duplicate pairs must fit inside each category")


@dataclass(frozen=True)
class QuizItem:
    item_id: str
    image_ref: str
    truth: str
    duplicate_group: str | None = None


@dataclass(frozen=True)
class Quiz:
    quiz_id: str
    items: tuple[QuizItem, ...]
    seed: int

    def to_dict(self) -> dict:
        return {
            "quiz_id": self.quiz_id,
            "seed": self.seed,
            "items": [{"item_id": it.item_id, "image_ref": it.image_ref,
                       "truth": it.truth, "duplicate_group": it.duplicate_group}
                      for it in self.items],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Quiz":
        items = tuple(QuizItem(item_id=i["item_id"], image_ref=i["image_ref"],
                               truth=i["truth"], duplicate_group=i.get("duplicate_group"))
                      for i in payload["items"])
        return cls(quiz_id=payload["quiz_id"], items=items, seed=payload["seed"])


@dataclass(frozen=True)
class Response:
    item_index: int
    label: str
    elapsed_ms: int


@dataclass(frozen=True)
class QuizSession:
    session_id: str
    quiz_id: str
    grader_id: str
    responses: tuple[Response, ...] = ()

    @property
    def cursor(self) -> int:
        return len(self.responses)


@dataclass(frozen=True)
class VttReport:
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

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fpr": self.fpr,
            "accuracy_percent": self.accuracy_percent,
            "switch_rate_percent": self.switch_rate_percent,
            "switched_groups": self.switched_groups,
            "duplicate_groups": self.duplicate_groups,
            "mean_time_synthetic_s": self.mean_time_synthetic_s,
            "mean_time_real_s": self.mean_time_real_s,
            "total_time_s": self.total_time_s,
        }


def _category_tags(count: int, base: str) -> list[str]:
    if count <= len(base):
        return list(base[:count])
    return [f"{base[0]}{i}" for i in range(count)]


def build_quiz(reals: Sequence[ManifestEntry], synths: Sequence[ManifestEntry],
               spec: QuizSpec = QuizSpec()) -> Quiz:
    """Assemble the shuffled 50-item quiz with tagged duplicate pairs.

    The positive class is synthetic: the test asks graders to detect
    generated images.
    """
    rng = np.random.default_rng(spec.seed)
    rows: list[tuple[str, str, str | None]] = []  # (image_ref, truth, group)
    for entries, truth, n, tags in (
            (reals, REAL, spec.n_real, _REAL_TAGS),
            (synths, SYNTHETIC, spec.n_synthetic, _SYNTH_TAGS)):
        pairs = spec.duplicate_pairs_per_category
        distinct = n - pairs
        pool = sorted(entries, key=lambda e: e.id)
        if len(pool) < distinct:
            raise QuizBuildError(
                f"need {distinct} distinct {truth} items, only {len(pool)} available")
        chosen = [pool[i] for i in rng.choice(len(pool), size=distinct, replace=False)]
        duplicated = list(rng.choice(distinct, size=pairs, replace=False))
        group_tags = _category_tags(pairs, tags)
        for j, entry in enumerate(chosen):
            if j in duplicated:
                tag = group_tags[duplicated.index(j)]
                rows.append((entry.path, truth, tag))
                rows.append((entry.path, truth, tag))
            else:
                rows.append((entry.path, truth, None))

    order = rng.permutation(len(rows))
    items = tuple(
        QuizItem(item_id=f"item_{pos:02d}", image_ref=rows[int(k)][0],
                 truth=rows[int(k)][1], duplicate_group=rows[int(k)][2])
        for pos, k in enumerate(order))
    digest = hashlib.sha256(
        json.dumps([(it.image_ref, it.truth, it.duplicate_group) for it in items],
                   sort_keys=True).encode()).hexdigest()[:12]
    return Quiz(quiz_id=f"quiz-{digest}", items=items, seed=spec.seed)


def score_session(session: QuizSession, quiz: Quiz) -> VttReport:
    """Grade a complete session (synthetic is the positive class)."""
    if session.cursor < len(quiz.items):
        raise IncompleteSessionError(
            f"{session.session_id}: {session.cursor}/{len(quiz.items)} answered")
    tp = fp = tn = fn = 0
    times = {REAL: [], SYNTHETIC: []}
    group_answers: dict[str, list[str]] = {}
    for resp, item in zip(session.responses, quiz.items):
        times[item.truth].append(resp.elapsed_ms)
        if item.truth == SYNTHETIC:
            if resp.label == SYNTHETIC:
                tp += 1
            else:
                fn += 1
        else:
            if resp.label == SYNTHETIC:
                fp += 1
            else:
                tn += 1
        if item.duplicate_group is not None:
            group_answers.setdefault(item.duplicate_group, []).append(resp.label)

    n_synth = tp + fn
    n_real = tn + fp
    total = n_synth + n_real
    switched = sum(1 for answers in group_answers.values()
                   if len(set(answers)) > 1)
    groups = len(group_answers)
    return VttReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        tpr=tp / n_synth if n_synth else 0.0,
        fpr=fp / n_real if n_real else 0.0,
        accuracy_percent=(tp + tn) / total * 100.0,
        switch_rate_percent=switched / groups * 100.0 if groups else 0.0,
        switched_groups=switched,
        duplicate_groups=groups,
        mean_time_synthetic_s=float(np.mean(times[SYNTHETIC])) / 1000.0 if times[SYNTHETIC] else 0.0,
        mean_time_real_s=float(np.mean(times[REAL])) / 1000.0 if times[REAL] else 0.0,
        total_time_s=sum(times[REAL] + times[SYNTHETIC]) / 1000.0,
    )


# ---------------------------------------------------------------------------
# Event-sourced session store
# ---------------------------------------------------------------------------

def _append_event(path: Path, event: dict) -> None:
    line = json.dumps(event, sort_keys=True) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line)
        fh.flush()
        os.fsync(fh.fileno())


def replay_session_log(path: str | Path) -> tuple[QuizSession, Quiz]:
    """Rebuild (session, quiz) from an event log; the quiz snapshot is embedded
    in the first event."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty session log")
    started = json.loads(lines[0])
    if started.get("type") != "session_started":
        raise ValueError(f"{path}: first event must be session_started")
    quiz = Quiz.from_dict(started["quiz"])
    responses = []
    for line in lines[1:]:
        event = json.loads(line)
        if event.get("type") != "answer_submitted":
            continue
        responses.append(Response(item_index=event["index"], label=event["label"],
                                  elapsed_ms=event["elapsed_ms"]))
    session = QuizSession(session_id=started["session_id"],
                          quiz_id=started["quiz_id"],
                          grader_id=started["grader_id"],
                          responses=tuple(responses))
    return session, quiz


class SessionStore:
    """Directory-backed quiz and session registry.

    Layout: ``quizzes/<quiz_id>.json`` for quiz snapshots and
    ``sessions/<session_id>.jsonl`` for per-session event logs. Existing
    state is reloaded on construction, so a crashed service resumes where
    it stopped.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "quizzes").mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._quizzes: dict[str, Quiz] = {}
        self._sessions: dict[str, QuizSession] = {}
        self._png_cache: dict[str, bytes] = {}
        self._reload()

    def _reload(self) -> None:
        for quiz_file in sorted((self.root / "quizzes").glob("*.json")):
            quiz = Quiz.from_dict(json.loads(quiz_file.read_text()))
            self._quizzes[quiz.quiz_id] = quiz
        for log_file in sorted((self.root / "sessions").glob("*.jsonl")):
            session, quiz = replay_session_log(log_file)
            self._sessions[session.session_id] = session
            self._quizzes.setdefault(quiz.quiz_id, quiz)
            self._session_locks[session.session_id] = threading.Lock()

    def _session_log_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.jsonl"

    # -- quizzes ---------------------------------------------------------

    def create_quiz(self, reals: Sequence[ManifestEntry],
                    synths: Sequence[ManifestEntry],
                    spec: QuizSpec = QuizSpec()) -> Quiz:
        quiz = build_quiz(reals, synths, spec)
        with self._lock:
            path = self.root / "quizzes" / f"{quiz.quiz_id}.json"
            path.write_text(json.dumps(quiz.to_dict(), sort_keys=True, indent=2))
            self._quizzes[quiz.quiz_id] = quiz
        return quiz

    def get_quiz(self, quiz_id: str) -> Quiz:
        try:
            return self._quizzes[quiz_id]
        except KeyError:
            raise UnknownQuizError(quiz_id) from None

    # -- sessions --------------------------------------------------------

    def start_session(self, quiz_id: str, grader_id: str) -> QuizSession:
        quiz = self.get_quiz(quiz_id)
        grader_slug = re.sub(r"[^A-Za-z0-9_-]", "_", grader_id) or "grader"
        with self._lock:
            session_id = f"sess-{len(self._sessions) + 1:06d}-{grader_slug}"
            session = QuizSession(session_id=session_id, quiz_id=quiz_id,
                                  grader_id=grader_id)
            _append_event(self._session_log_path(session_id), {
                "type": "session_started",
                "session_id": session_id,
                "quiz_id": quiz_id,
                "grader_id": grader_id,
                "ts": time.time(),
                "quiz": quiz.to_dict(),
            })
            self._sessions[session_id] = session
            self._session_locks[session_id] = threading.Lock()
        return session

    def get_session(self, session_id: str) -> QuizSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    def next_item(self, session_id: str) -> tuple[int, QuizItem] | None:
        """Current unanswered item, or None when the session is complete."""
        session = self.get_session(session_id)
        quiz = self.get_quiz(session.quiz_id)
        if session.cursor >= len(quiz.items):
            return None
        return session.cursor, quiz.items[session.cursor]

    def submit_answer(self, session_id: str, item_index: int, label: str,
                      elapsed_ms: int) -> QuizSession:
        """Append one answer; persisted before the in-memory cursor advances."""
        if label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {label!r}")
        if elapsed_ms <= 0:
            raise ValueError("elapsed_ms must be positive")
        lock = self._session_locks.get(session_id)
        if lock is None:
            raise UnknownSessionError(session_id)
        with lock:
            session = self.get_session(session_id)
            quiz = self.get_quiz(session.quiz_id)
            if session.cursor >= len(quiz.items):
                raise SessionFinishedError(session_id)
            if item_index != session.cursor:
                raise OutOfOrderError(
                    f"expected index {session.cursor}, got {item_index}; "
                    "answers cannot be revised or skipped")
            _append_event(self._session_log_path(session_id), {
                "type": "answer_submitted",
                "index": item_index,
                "label": label,
                "elapsed_ms": int(elapsed_ms),
                "received_ts": time.time(),
            })
            updated = replace(session, responses=session.responses + (
                Response(item_index=item_index, label=label, elapsed_ms=int(elapsed_ms)),))
            self._sessions[session_id] = updated
        return updated

    def report(self, session_id: str) -> VttReport:
        session = self.get_session(session_id)
        return score_session(session, self.get_quiz(session.quiz_id))

    # -- images ----------------------------------------------------------

    def item_png(self, session_id: str, item_index: int) -> bytes:
        """PNG payload for the item at the session cursor only."""
        current = self.next_item(session_id)
        if current is None or current[0] != item_index:
            raise OutOfOrderError("images are served only for the current item")
        return self.image_png(current[1].image_ref)

    def image_png(self, image_ref: str) -> bytes:
        cached = self._png_cache.get(image_ref)
        if cached is None:
            fmt = SliceFormat.PGM16 if image_ref.endswith(".pgm") else SliceFormat.NPY_F32
            cached = render_png(load_slice(image_ref, fmt))
            self._png_cache[image_ref] = cached
        return cached


def render_png(slice: CtSlice, window: IntensityWindow = DEFAULT_WINDOW) -> bytes:
    """Render a slice to lossless 8-bit grayscale PNG under a fixed window,
    so every grader sees identical bytes for identical pixels."""
    norm = normalize(slice, window).pixels
    gray = np.round((norm + 1.0) / 2.0 * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()
