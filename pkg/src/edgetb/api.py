"""Control-plane HTTP service wrapping a running simulation.

A Controller drives the engine on its own thread (real-time or as fast as
possible); the FastAPI app reads snapshots and enqueues commands, never
touching engine state directly. /api/stream pushes every new log record to
connected clients as server-sent events.
"""

from __future__ import annotations

import json
import queue
import threading
import time

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .engine import Engine, log_to_jsonl
from .orchestrator import Infeasible
from .scenario import Scenario


class Controller:
    """Owns the engine thread; the only way in is submit()."""

    def __init__(self, scenario: Scenario, pace: str = "REAL"):
        if pace not in ("REAL", "FAST"):
            raise ValueError(f"pace must be REAL or FAST, got {pace!r}")
        self.engine = Engine(scenario)
        self.pace = pace
        self._cursor = 0
        self._subs: list[queue.SimpleQueue] = []
        self._subs_lock = threading.Lock()
        self._stop = threading.Event()
        self.finished = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self):
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _loop(self):
        eng = self.engine
        start_wall = time.monotonic()
        try:
            while not self._stop.is_set() and eng.now < eng.scenario.duration_ms:
                eng.advance_to(min(eng.now + eng.tick_ms, eng.scenario.duration_ms))
                self._broadcast()
                if self.pace == "REAL":
                    ahead = start_wall + eng.now / 1000.0 - time.monotonic()
                    if ahead > 0:
                        time.sleep(ahead)
            eng.finish()
            self._broadcast()
        finally:
            self.finished.set()
            self._broadcast(end=True)

    def _broadcast(self, end: bool = False):
        eng = self.engine
        with self._subs_lock:
            new = eng.log[self._cursor:]
            self._cursor = len(eng.log)
            for rec in new:
                line = json.dumps(rec, sort_keys=True)
                for q in self._subs:
                    q.put(("log", line))
            if end:
                for q in self._subs:
                    q.put(("end", ""))

    def subscribe(self) -> queue.SimpleQueue:
        """New subscribers first receive every record logged so far, then
        live updates; ordering is preserved."""
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._subs_lock:
            for rec in self.engine.log[:self._cursor]:
                q.put(("log", json.dumps(rec, sort_keys=True)))
            if self.finished.is_set():
                q.put(("end", ""))
            else:
                self._subs.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue):
        with self._subs_lock:
            if q in self._subs:
                self._subs.remove(q)

    def submit(self, fn, timeout: float = 10.0):
        if self.finished.is_set():
            raise RuntimeError("run has finished")
        return self.engine.submit_command(fn).wait(timeout)

    def log_jsonl(self) -> str:
        return log_to_jsonl(self.engine.log)


class PipelineRequest(BaseModel):
    pipeline: str


class PostureRequest(BaseModel):
    level: str = Field(pattern="^(normal|elevated|lockdown)$")
    node: str | None = None


class InjectEvent(BaseModel):
    type: str
    model_config = {"extra": "allow"}


def create_app(controller: Controller) -> FastAPI:
    app = FastAPI(title="edgetb control plane")
    eng = controller.engine

    @app.get("/api/topology")
    def topology():
        snap = eng.snapshot()
        return {"t": snap.get("t", 0), "nodes": snap.get("nodes", []),
                "links": snap.get("links", [])}

    @app.get("/api/queues")
    def queues():
        snap = eng.snapshot()
        return {"t": snap.get("t", 0), "queues": snap.get("queues", [])}

    @app.get("/api/placements")
    def placements():
        snap = eng.snapshot()
        return {"t": snap.get("t", 0), "placements": snap.get("placements", {})}

    @app.get("/api/scenario")
    def scenario():
        sc = eng.scenario
        return {
            "seed": sc.seed,
            "duration_ms": sc.duration_ms,
            "nodes": sc.node_ids(),
            "pipelines": [
                {"id": c.spec.id, "redundant": c.redundant,
                 "autostart": c.autostart,
                 "stages": [s.name for s in c.spec.stages],
                 "deployed": c.spec.id in eng.deployed}
                for c in sc.pipelines
            ],
            "finished": controller.finished.is_set(),
        }

    @app.post("/api/pipelines", status_code=201)
    def request_pipeline(req: PipelineRequest):
        if req.pipeline not in eng.pipeline_cfgs:
            raise HTTPException(404, f"unknown pipeline {req.pipeline!r}")
        if req.pipeline in eng.deployed:
            raise HTTPException(409, f"pipeline {req.pipeline!r} already deployed")
        try:
            assignments = controller.submit(
                lambda e: e._deploy_pipeline(req.pipeline, e.now))
        except Infeasible as exc:
            raise HTTPException(409, f"infeasible: no capacity for stage {exc.stage}")
        except RuntimeError as exc:
            raise HTTPException(409, str(exc))
        return {"pipeline": req.pipeline, "assignments": assignments}

    @app.post("/api/events", status_code=202)
    def inject_event(ev: InjectEvent):
        from .scenario import EVENT_TYPES
        if ev.type not in EVENT_TYPES:
            raise HTTPException(400, f"unknown event type {ev.type!r}")
        payload = ev.model_dump()

        def apply(e):
            payload["at_ms"] = e.now
            e.apply_event(payload, e.now)

        try:
            controller.submit(apply)
        except RuntimeError as exc:
            raise HTTPException(409, str(exc))
        except (KeyError, ValueError) as exc:
            raise HTTPException(400, f"bad event: {exc}")
        return {"applied": ev.type}

    @app.post("/api/posture", status_code=202)
    def set_posture(req: PostureRequest):
        if req.node is not None and req.node not in eng.nodes:
            raise HTTPException(404, f"unknown node {req.node!r}")
        ev = {"type": "posture", "level": req.level}
        if req.node:
            ev["node"] = req.node
        try:
            controller.submit(lambda e: e.apply_event({**ev, "at_ms": e.now}, e.now))
        except RuntimeError as exc:
            raise HTTPException(409, str(exc))
        return {"level": req.level, "node": req.node}

    @app.get("/api/stream")
    def stream():
        def gen():
            q = controller.subscribe()
            try:
                while True:
                    try:
                        kind, line = q.get(timeout=30)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if kind == "end":
                        yield "event: end\ndata: {}\n\n"
                        return
                    yield f"data: {line}\n\n"
            finally:
                controller.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    return app
