"""HTTP labeling service: serves triplet/pair queries, records answers in
append-only per-session logs, exports constraint files, and tabulates
confusion against ground truth when the dataset has labels.

Endpoints (JSON bodies; errors use a uniform ``{"code", "message"}`` envelope):

- ``POST /sessions`` ``{dataset, mode, count, seed}`` -> session status
- ``GET /sessions/{id}`` -> session status
- ``GET /sessions/{id}/next`` -> ``{done: false, query: {...}}`` or ``{done: true}``
- ``POST /sessions/{id}/answers`` ``{queryId, answer, annotatorId?}`` -> ack
- ``GET /sessions/{id}/export`` -> plain-text constraint file
- ``GET /sessions/{id}/confusion`` -> truth-vs-answer count matrix
- ``POST /sessions/{id}/cluster`` ``{k, epsilon?, tau?, lambda?, balance?, seed?}``
  -> clustering of the answers so far, scored when ground truth exists
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from . import data as data_mod
from . import em, metrics, oracle
from .core import CL, DNK, ML, NO, YES, ConstraintSet, Dataset, HyperParams, TripletConstraint

TRIPLET_ANSWERS = (YES, NO, DNK)
PAIR_ANSWERS = (ML, CL)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    dataset: str
    mode: str = "triplet"
    count: int
    seed: int = 0


class AnswerRequest(BaseModel):
    queryId: int
    answer: str
    annotatorId: str | None = None


class ClusterRequest(BaseModel):
    k: int
    epsilon: float = 0.15
    tau: float = 1.0
    lam: float = 2.0**-6
    balance: bool = False
    seed: int = 0


@dataclass
class SessionState:
    """In-memory view of one session, rebuilt by replaying its event log."""

    id: str
    mode: str
    dataset: str
    seed: int
    queries: list[dict]
    answers: dict[int, dict] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.queries)

    @property
    def answered(self) -> int:
        return len(self.answers)

    @property
    def done(self) -> bool:
        return self.answered >= self.total

    def status(self) -> dict:
        distribution: dict[str, int] = {}
        for rec in self.answers.values():
            distribution[rec["answer"]] = distribution.get(rec["answer"], 0) + 1
        return {
            "id": self.id,
            "mode": self.mode,
            "dataset": self.dataset,
            "total": self.total,
            "answered": self.answered,
            "remaining": self.total - self.answered,
            "done": self.done,
            "distribution": distribution,
        }


class SessionStore:
    """Sessions persisted as newline-delimited JSON event logs, one file each."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global = threading.Lock()

    def _lock(self, sid: str) -> threading.Lock:
        with self._global:
            return self._locks.setdefault(sid, threading.Lock())

    def _path(self, sid: str) -> Path:
        return self.root / f"{sid}.ndjson"

    def _append(self, sid: str, event: dict) -> None:
        with self._path(sid).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(self, dataset_ref: str, mode: str, count: int, seed: int, n: int) -> SessionState:
        if mode not in ("triplet", "pair"):
            raise ServiceError(400, "invalid_mode", f"mode must be 'triplet' or 'pair', got {mode!r}")
        if count < 0:
            raise ServiceError(400, "invalid_count", "count must be >= 0")
        size = 3 if mode == "triplet" else 2
        if count > 0 and n < size:
            raise ServiceError(400, "invalid_count", f"dataset too small for {mode} queries")
        rng = np.random.default_rng(seed)
        tuples = oracle.sample_distinct_tuples(np.arange(n), count, size, rng)
        queries = [{"id": i, "indices": [int(v) for v in row]} for i, row in enumerate(tuples)]
        sid = uuid.uuid4().hex[:12]
        state = SessionState(id=sid, mode=mode, dataset=dataset_ref, seed=seed, queries=queries)
        with self._lock(sid):
            self._append(
                sid,
                {
                    "type": "created",
                    "id": sid,
                    "mode": mode,
                    "dataset": dataset_ref,
                    "count": count,
                    "seed": seed,
                    "queries": queries,
                },
            )
            self._cache[sid] = state
        return state

    def _replay(self, sid: str) -> SessionState:
        path = self._path(sid)
        if not path.exists():
            raise ServiceError(404, "not_found", f"unknown session {sid!r}")
        state: SessionState | None = None
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event["type"] == "created":
                state = SessionState(
                    id=event["id"],
                    mode=event["mode"],
                    dataset=event["dataset"],
                    seed=event["seed"],
                    queries=event["queries"],
                )
            elif event["type"] == "answer" and state is not None:
                state.answers[event["queryId"]] = event
        if state is None:
            raise ServiceError(500, "corrupt_log", f"session log {sid!r} has no creation event")
        return state

    def get(self, sid: str) -> SessionState:
        with self._lock(sid):
            if sid not in self._cache:
                self._cache[sid] = self._replay(sid)
            return self._cache[sid]

    def record_answer(self, sid: str, query_id: int, answer: str, annotator: str | None) -> SessionState:
        with self._lock(sid):
            if sid not in self._cache:
                self._cache[sid] = self._replay(sid)
            state = self._cache[sid]
            if not 0 <= query_id < state.total:
                raise ServiceError(404, "unknown_query", f"no query {query_id} in session {sid!r}")
            expected = TRIPLET_ANSWERS if state.mode == "triplet" else PAIR_ANSWERS
            if answer not in expected:
                raise ServiceError(
                    400, "invalid_answer", f"answer must be one of {expected} for a {state.mode} session"
                )
            if query_id in state.answers:
                raise ServiceError(409, "conflict", f"query {query_id} was already answered")
            event = {
                "type": "answer",
                "queryId": query_id,
                "answer": answer,
                "annotatorId": annotator,
                "timestampMs": int(time.time() * 1000),
            }
            self._append(sid, event)
            state.answers[query_id] = event
            return state


def create_app(session_dir, data_root=".", ui_dir=None) -> FastAPI:
    store = SessionStore(session_dir)
    data_root = Path(data_root)
    datasets: dict[str, Dataset] = {}

    app = FastAPI(title="relclust labeling service")

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def load_dataset(ref: str) -> Dataset:
        if ref not in datasets:
            path = Path(ref)
            if not path.is_absolute():
                path = data_root / path
            if not path.exists():
                raise ServiceError(404, "dataset_not_found", f"no dataset at {path}")
            try:
                datasets[ref] = data_mod.load_csv(path)
            except ValueError as exc:
                raise ServiceError(400, "bad_dataset", str(exc)) from exc
        return datasets[ref]

    def load_manifest(ref: str) -> dict:
        path = Path(ref)
        if not path.is_absolute():
            path = data_root / path
        sidecar = path.with_name(path.name + ".manifest.json")
        if sidecar.exists():
            return json.loads(sidecar.read_text(encoding="utf-8"))
        return {}

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions")
    def create_session(body: CreateSessionRequest):
        ds = load_dataset(body.dataset)
        state = store.create(body.dataset, body.mode, body.count, body.seed, n=ds.n)
        return state.status()

    @app.get("/sessions/{sid}")
    def session_status(sid: str):
        return store.get(sid).status()

    @app.get("/sessions/{sid}/next")
    def next_query(sid: str):
        state = store.get(sid)
        pending = next((q for q in state.queries if q["id"] not in state.answers), None)
        if pending is None:
            return {"done": True}
        ds = load_dataset(state.dataset)
        images = load_manifest(state.dataset).get("images", {})
        return {
            "done": False,
            "query": {
                "id": pending["id"],
                "indices": pending["indices"],
                "instances": [ds.instances[i].tolist() for i in pending["indices"]],
                "images": [images.get(str(i)) for i in pending["indices"]],
                "mode": state.mode,
            },
        }

    @app.post("/sessions/{sid}/answers")
    def submit_answer(sid: str, body: AnswerRequest):
        state = store.record_answer(sid, body.queryId, body.answer, body.annotatorId)
        return {"ok": True, "answered": state.answered, "remaining": state.total - state.answered}

    def answered_triplets(state: SessionState) -> list[TripletConstraint]:
        out = []
        for q in state.queries:
            rec = state.answers.get(q["id"])
            if rec is None:
                continue
            a, b, c = q["indices"]
            out.append(TripletConstraint(a, b, c, rec["answer"]))
        return out

    @app.get("/sessions/{sid}/export")
    def export_constraints(sid: str):
        state = store.get(sid)
        if state.mode == "triplet":
            text = oracle.format_constraints(answered_triplets(state))
        else:
            lines = []
            for q in state.queries:
                rec = state.answers.get(q["id"])
                if rec is None:
                    continue
                a, b = q["indices"]
                lines.append(f"{a + 1} {b + 1} {rec['answer']}")
            text = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(text)

    @app.get("/sessions/{sid}/confusion")
    def confusion(sid: str):
        state = store.get(sid)
        ds = load_dataset(state.dataset)
        if ds.labels is None:
            raise ServiceError(409, "unsupported", "the dataset has no ground-truth labels")
        labels = TRIPLET_ANSWERS if state.mode == "triplet" else PAIR_ANSWERS
        matrix = [[0] * len(labels) for _ in labels]
        for q in state.queries:
            rec = state.answers.get(q["id"])
            if rec is None:
                continue
            ids = [int(ds.labels[i]) for i in q["indices"]]
            truth = oracle.label_triplet(*ids) if state.mode == "triplet" else oracle.label_pair(*ids)
            matrix[labels.index(truth)][labels.index(rec["answer"])] += 1
        return {"labels": list(labels), "matrix": matrix}

    @app.post("/sessions/{sid}/cluster")
    def run_clustering(sid: str, body: ClusterRequest):
        state = store.get(sid)
        if state.mode != "triplet":
            raise ServiceError(409, "unsupported", "clustering runs on triplet sessions only")
        ds = data_mod.standardize(load_dataset(state.dataset))
        constraints = ConstraintSet(tuple(answered_triplets(state)), n=ds.n)
        try:
            hyper = HyperParams(
                k=body.k,
                epsilon=body.epsilon,
                tau=body.tau,
                lam=body.lam,
                balance=body.balance,
                seed=body.seed,
            )
        except ValueError as exc:
            raise ServiceError(400, "invalid_settings", str(exc)) from exc
        result = em.fit(ds, constraints, hyper)
        payload: dict = {
            "constraints_used": constraints.m,
            "em_iterations": result.em_iterations,
            "converged": result.converged,
            "fmeasure": None,
            "ari": None,
            "nmi": None,
        }
        if ds.labels is not None:
            payload["fmeasure"] = metrics.pairwise_f_measure(result.assignments, ds.labels)
            payload["ari"] = metrics.ari(result.assignments, ds.labels)
            payload["nmi"] = metrics.nmi(result.assignments, ds.labels)
        return payload

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
