"""HTTP control service: one operator session over a SystemHandle.

All mutations (init jobs, ops, experiments, churn, reset) are serialized on
the single session; a second mutating request while a job runs gets 409.
Status reads stay available during jobs via the last published snapshot. The
event stream is server-sent events with three event kinds: ``log`` (exact
kernel LogRecord text, byte for byte, in kernel order), ``progress``
({phase, done, total}), and ``job`` ({id, status}).
"""

from __future__ import annotations

import json
import math
import queue
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel, Field

from .experiments import (ExperimentConfig, SystemHandle, export_report)
from .protocol import SimConfig
from .workloads import KINDS, DistributionSpec


class DistBody(BaseModel):
    kind: str = "uniform"
    seed: int = 0
    params: dict = Field(default_factory=dict)


class NetworkBody(BaseModel):
    nodes: int
    dist: DistBody = Field(default_factory=DistBody)
    keys: Optional[int] = None
    seed: int = 0


class OpBody(BaseModel):
    op: str
    key: int
    origin: int


class ExperimentBody(BaseModel):
    op: str
    trials: int = 500
    dist: DistBody = Field(default_factory=DistBody)
    origin: Optional[int] = None


class ChurnBody(BaseModel):
    updates: int = 2500
    dist: DistBody = Field(default_factory=DistBody)


class EventHub:
    """Multi-subscriber fan-out; events arrive in generation order."""

    def __init__(self):
        self._lock = threading.Lock()
        self._queues: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q = queue.Queue()
        with self._lock:
            self._queues.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)

    def publish(self, kind: str, data: str) -> None:
        with self._lock:
            targets = list(self._queues)
        for q in targets:
            q.put((kind, data))


class Session:
    """The single operator session: handle + job registry + event hub."""

    def __init__(self):
        self.hub = EventHub()
        self.lock = threading.Lock()
        self.busy_job: Optional[str] = None
        self.jobs: dict[str, dict] = {}
        self.handle = SystemHandle(
            log_sink=lambda line: self.hub.publish("log", line),
            progress=self._on_progress)
        self.snapshot = self.handle.status().to_doc()

    def _on_progress(self, phase: str, done: int, total: int) -> None:
        self.snapshot = self.handle.status().to_doc()
        self.hub.publish("progress", json.dumps(
            {"phase": phase, "done": done, "total": total}))

    def refresh_snapshot(self) -> None:
        self.snapshot = self.handle.status().to_doc()

    def start_job(self, kind: str, fn) -> str:
        with self.lock:
            if self.busy_job is not None:
                raise HTTPException(409, "a job is already running")
            job_id = uuid.uuid4().hex[:12]
            self.busy_job = job_id
            self.jobs[job_id] = {"id": job_id, "kind": kind,
                                 "status": "running", "result": None}
        self.hub.publish("job", json.dumps({"id": job_id, "status": "running",
                                            "kind": kind}))
        thread = threading.Thread(target=self._run_job, args=(job_id, fn),
                                  daemon=True)
        thread.start()
        return job_id

    def _run_job(self, job_id: str, fn) -> None:
        job = self.jobs[job_id]
        try:
            job["result"] = fn()
            job["status"] = "done"
        except Exception as err:  # noqa: BLE001 - reported to the client
            job["status"] = "failed"
            job["error"] = str(err)
        finally:
            self.refresh_snapshot()
            with self.lock:
                self.busy_job = None
        self.hub.publish("job", json.dumps(
            {"id": job_id, "status": job["status"], "kind": job["kind"]}))

    def mutate(self, fn):
        """Run a short mutation now, or 409 while a job owns the handle."""
        with self.lock:
            if self.busy_job is not None:
                raise HTTPException(409, "a job is already running")
        result = fn()
        self.refresh_snapshot()
        return result


def _dist_spec(body: DistBody, hi: int) -> DistributionSpec:
    if body.kind not in KINDS:
        raise HTTPException(400, f"unknown distribution {body.kind!r}")
    params = {k: float(v) for k, v in body.params.items()}
    return DistributionSpec(body.kind, 0, hi, seed=body.seed, params=params)


def _ui_dir() -> Optional[Path]:
    here = Path(__file__).resolve()
    for base in (here.parents[2] / "frontend" / "dist",):
        if (base / "index.html").exists():
            return base
    return None


def create_app(session: Optional[Session] = None) -> FastAPI:
    app = FastAPI(title="nbdtsim control service")
    ses = session or Session()
    app.state.session = ses

    @app.post("/network", status_code=202)
    def init_network(body: NetworkBody):
        if body.nodes < 3:
            raise HTTPException(400, "need at least the three introducers")
        keys = body.keys if body.keys is not None else \
            math.ceil(5.7 * body.nodes)
        if keys < 0:
            raise HTTPException(400, "keys must be non-negative")
        capacity = body.nodes * ses.handle.ks.b
        if keys > capacity:
            raise HTTPException(400, f"{keys} keys exceed capacity {capacity}")
        dist = _dist_spec(body.dist, capacity - 1)

        def job():
            ses.handle.reset()
            ses.handle.seed = body.seed
            ses.handle.init_system(body.nodes, dist=dist, initial_keys=keys)
            return ses.handle.status().to_doc()

        return {"job_id": ses.start_job("init", job)}

    @app.get("/network/status")
    def network_status():
        with ses.lock:
            busy = ses.busy_job is not None
        if not busy:
            ses.refresh_snapshot()
        return ses.snapshot

    @app.post("/network/reset")
    def reset_network():
        ses.mutate(ses.handle.reset)
        return {"ok": True}

    @app.post("/ops")
    def run_op(body: OpBody):
        if body.op not in ("search", "insert", "delete"):
            raise HTTPException(400, f"unknown op {body.op!r}")

        def op():
            try:
                return ses.handle.do_op(body.op, body.key, body.origin)
            except ValueError as err:
                raise HTTPException(400, str(err))

        reply, lines = ses.mutate(op)
        return {"outcome": reply.outcome, "hops": reply.hops,
                "holder": reply.holder, "key": body.key,
                "log_lines": lines}

    @app.post("/experiments", status_code=202)
    def run_experiment(body: ExperimentBody):
        if body.op not in ("search", "insert", "delete"):
            raise HTTPException(400, f"unknown op {body.op!r}")
        if ses.handle.ks.n_nodes < 3:
            raise HTTPException(400, "initialize the network first")
        dist = _dist_spec(body.dist, ses.handle.ks.capacity - 1)
        cfg = ExperimentConfig(body.op, dist, trials=body.trials,
                               origin=body.origin)
        return {"id": ses.start_job(
            "experiment", lambda: ses.handle.run_experiment(cfg).to_doc())}

    @app.post("/churn", status_code=202)
    def run_churn(body: ChurnBody):
        if ses.handle.ks.n_nodes < 3:
            raise HTTPException(400, "initialize the network first")
        dist = _dist_spec(body.dist, ses.handle.ks.capacity - 1)
        return {"id": ses.start_job(
            "churn", lambda: ses.handle.churn_run(body.updates, dist).to_doc())}

    @app.get("/experiments/{job_id}")
    def job_status(job_id: str):
        job = ses.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job id")
        doc = {"id": job_id, "kind": job["kind"], "status": job["status"]}
        if job["status"] == "done":
            doc["result"] = job["result"]
        if job["status"] == "failed":
            doc["error"] = job.get("error", "")
        return doc

    @app.get("/experiments/{job_id}/export")
    def job_export(job_id: str, format: str = "csv"):
        job = ses.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job id")
        if job["status"] != "done":
            raise HTTPException(409, f"job is {job['status']}")
        try:
            text = export_report(job["result"], format)
        except ValueError as err:
            raise HTTPException(400, str(err))
        media = "text/csv" if format == "csv" else "application/json"
        return PlainTextResponse(text, media_type=media)

    @app.get("/load")
    def load_report():
        return ses.handle.load_report().to_doc()

    @app.get("/load/export")
    def load_export(format: str = "csv"):
        try:
            text = export_report(ses.handle.load_report(), format)
        except ValueError as err:
            raise HTTPException(400, str(err))
        media = "text/csv" if format == "csv" else "application/json"
        return PlainTextResponse(text, media_type=media)

    @app.get("/events")
    def events(max_events: int = 0, timeout: float = 0.0):
        """SSE stream; max_events/timeout bound the stream for polling
        clients and tests (0 means unbounded)."""
        q = ses.hub.subscribe()

        def gen():
            # one yield may carry many frames: each yield of a sync generator
            # costs a threadpool round-trip, so the queue is drained greedily
            sent = 0
            try:
                yield "event: hello\ndata: connected\n\n"
                while True:
                    try:
                        kind, data = q.get(timeout=timeout or 1.0)
                    except queue.Empty:
                        if timeout:
                            return
                        yield ": keepalive\n\n"
                        continue
                    frames = [f"event: {kind}\ndata: {data}\n\n"]
                    sent += 1
                    while not max_events or sent < max_events:
                        try:
                            kind, data = q.get_nowait()
                        except queue.Empty:
                            break
                        frames.append(f"event: {kind}\ndata: {data}\n\n")
                        sent += 1
                    yield "".join(frames)
                    if max_events and sent >= max_events:
                        return
            finally:
                ses.hub.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    ui = _ui_dir()

    @app.get("/", response_class=HTMLResponse)
    def index():
        if ui is None:
            return HTMLResponse(
                "<html><body><h1>nbdtsim control service</h1>"
                "<p>No dashboard build found; the JSON API is live.</p>"
                "</body></html>")
        return HTMLResponse((ui / "index.html").read_text())

    if ui is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui)), name="ui")

    return app
