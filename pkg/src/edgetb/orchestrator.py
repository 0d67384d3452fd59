"""Lightweight orchestration: heartbeat membership, first-fit-decreasing
pipeline placement, queue-depth-driven rebalancing, and redundant
active-active deployment with hash-partitioned work.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

from .node import Node, StageSpec

HEARTBEAT_PERIOD_MS = 500
HEARTBEAT_MISSES = 3
QUEUE_HI = 100
SAMPLE_WINDOW = 3  # consecutive 1 s samples over QUEUE_HI before acting
SAMPLE_PERIOD_MS = 1000
REBALANCE_COOLDOWN_MS = 5000
HEARTBEAT_TOPIC = "_orch.hb"
COMMAND_TOPIC = "_orch.cmd"
BATTERY_LOW_PCT = 20.0


class Infeasible(Exception):
    def __init__(self, stage: str):
        super().__init__(f"no node can host stage {stage}")
        self.stage = stage


class UnknownTrigger(Exception):
    pass


@dataclass(frozen=True)
class PipelineSpec:
    id: str
    stages: tuple[StageSpec, ...]
    source_topic: str
    sink_topic: str

    def __post_init__(self):
        for a, b in zip(self.stages, self.stages[1:]):
            if a.output_topic != b.input_topic:
                raise ValueError(
                    f"pipeline {self.id}: stage {a.name} output {a.output_topic!r} "
                    f"!= stage {b.name} input {b.input_topic!r}")
        if self.stages:
            if self.stages[0].input_topic != self.source_topic:
                raise ValueError(f"pipeline {self.id}: first stage must read source topic")
            if self.stages[-1].output_topic != self.sink_topic:
                raise ValueError(f"pipeline {self.id}: last stage must write sink topic")


@dataclass
class MembershipView:
    epoch: int
    live: dict[str, int]  # node id -> last heartbeat time

    def live_ids(self) -> list[str]:
        return sorted(self.live)


@dataclass
class Placement:
    assignments: dict[str, str]  # stage-instance id -> node id
    epoch: int


def item_slot(item_id: str, n_slots: int) -> int:
    return zlib.crc32(item_id.encode()) % n_slots


class Membership:
    """Tracks heartbeats; a node is live iff one arrived within K*H of now."""

    def __init__(self, period_ms: int = HEARTBEAT_PERIOD_MS, misses: int = HEARTBEAT_MISSES):
        self.period_ms = period_ms
        self.misses = misses
        self.last_hb: dict[str, int] = {}
        self.epoch = 0
        self._prev_live: frozenset[str] = frozenset()

    def record_heartbeat(self, node_id: str, at: int):
        self.last_hb[node_id] = max(self.last_hb.get(node_id, -1), at)

    def build(self, now: int) -> MembershipView:
        horizon = self.misses * self.period_ms
        live = {n: t for n, t in sorted(self.last_hb.items()) if now - t < horizon}
        live_set = frozenset(live)
        if live_set != self._prev_live:
            self.epoch += 1
            self._prev_live = live_set
        return MembershipView(epoch=self.epoch, live=live)


def allocate(pipeline: PipelineSpec, view: MembershipView,
             nodes: dict[str, Node]) -> Placement:
    """First-fit-decreasing: stages by cpu_demand descending (stable), nodes
    re-ranked by free capacity descending with lexicographic id tiebreak
    before each assignment. Dry run: node state is not mutated."""
    live = [n for n in view.live_ids() if n in nodes and nodes[n].up]
    if not live:
        raise Infeasible(pipeline.stages[0].name if pipeline.stages else "?")
    free = {n: (nodes[n].cpu_free, nodes[n].mem_free) for n in live}
    assignments: dict[str, str] = {}
    ordered = sorted(pipeline.stages, key=lambda s: -s.cpu_demand)
    for stage in ordered:
        ranked = sorted(live, key=lambda n: (-free[n][0], n))
        for n in ranked:
            cpu, mem = free[n]
            if stage.cpu_demand <= cpu + 1e-9 and stage.mem_demand <= mem + 1e-9:
                free[n] = (cpu - stage.cpu_demand, mem - stage.mem_demand)
                assignments[f"{pipeline.id}/{stage.name}"] = n
                break
        else:
            raise Infeasible(stage.name)
    return Placement(assignments=assignments, epoch=view.epoch)


def deploy_redundant(pipeline: PipelineSpec, view: MembershipView,
                     nodes: dict[str, Node]) -> Placement:
    """Every stage instantiated on every live node; consumers split items by
    message-id hash over the live instance set."""
    live = [n for n in view.live_ids() if n in nodes and nodes[n].up]
    if not live:
        raise Infeasible(pipeline.stages[0].name if pipeline.stages else "?")
    for n in live:
        cpu, mem = nodes[n].cpu_free, nodes[n].mem_free
        for stage in pipeline.stages:
            if stage.cpu_demand > cpu + 1e-9 or stage.mem_demand > mem + 1e-9:
                raise Infeasible(stage.name)
            cpu -= stage.cpu_demand
            mem -= stage.mem_demand
    assignments = {}
    for n in live:
        for stage in pipeline.stages:
            assignments[f"{pipeline.id}/{stage.name}@{n}"] = n
    return Placement(assignments=assignments, epoch=view.epoch)


@dataclass
class RebalanceAction:
    kind: str  # scale_out | migrate | saturated
    pipeline: str
    stage: str
    from_node: str | None = None
    to_node: str | None = None


class Rebalancer:
    """Queue-depth trigger: a stage over QUEUE_HI for SAMPLE_WINDOW
    consecutive samples gets a replica (preferred) or a migration; a
    per-stage cooldown prevents flapping."""

    def __init__(self, q_hi: int = QUEUE_HI, window: int = SAMPLE_WINDOW,
                 cooldown_ms: int = REBALANCE_COOLDOWN_MS):
        self.q_hi = q_hi
        self.window = window
        self.cooldown_ms = cooldown_ms
        self._over: dict[str, int] = {}
        self._last_action: dict[str, int] = {}

    def sample(self, depths: dict[str, tuple[str, str, int, StageSpec, list[str]]],
               nodes: dict[str, Node], view: MembershipView, now: int) -> list[RebalanceAction]:
        """depths: stage key -> (pipeline id, stage name, max depth across
        replicas, spec, hosting node ids)."""
        plan: list[RebalanceAction] = []
        live = [n for n in view.live_ids() if n in nodes and nodes[n].up]
        for key in sorted(depths):
            pipeline_id, stage_name, depth, spec, hosts = depths[key]
            if depth > self.q_hi:
                self._over[key] = self._over.get(key, 0) + 1
            else:
                self._over[key] = 0
                continue
            if self._over[key] < self.window:
                continue
            last = self._last_action.get(key)
            if last is not None and now - last < self.cooldown_ms:
                continue
            action = self._plan_one(pipeline_id, stage_name, spec, hosts, live, nodes)
            self._last_action[key] = now
            self._over[key] = 0
            plan.append(action)
        return plan

    def _plan_one(self, pipeline_id, stage_name, spec, hosts, live, nodes) -> RebalanceAction:
        # scale-out: most free capacity first, prefer nodes not already hosting
        candidates = sorted((n for n in live if n not in hosts),
                            key=lambda n: (-nodes[n].cpu_free, n))
        for n in candidates:
            if nodes[n].can_admit(spec):
                return RebalanceAction("scale_out", pipeline_id, stage_name, to_node=n)
        # migrate: strictly more free capacity than the busiest current host
        current = min(hosts, key=lambda n: (nodes[n].cpu_free if n in nodes else 0.0, n))
        current_free = nodes[current].cpu_free if current in nodes else 0.0
        for n in candidates:
            if nodes[n].cpu_free > current_free and nodes[n].can_admit(spec):
                return RebalanceAction("migrate", pipeline_id, stage_name,
                                       from_node=current, to_node=n)
        return RebalanceAction("saturated", pipeline_id, stage_name)


RECOGNIZED_TRIGGERS = {"battery_low", "bandwidth_floor", "threat", "pipeline_request"}


@dataclass
class TriggerAction:
    kind: str  # evict_stages | enable_filter | apply_posture | allocate
    node: str | None = None
    detail: dict = field(default_factory=dict)


def on_trigger(event: dict) -> list[TriggerAction]:
    """Adaptation rule table mapping sensor/network/operator events to
    actions; the run loop carries them out."""
    kind = event.get("trigger")
    if kind == "battery_low":
        return [TriggerAction("evict_stages", node=event["node"])]
    if kind == "bandwidth_floor":
        return [TriggerAction("enable_filter", node=event.get("node"),
                              detail={"link": event["link"], "floor_bps": event["floor_bps"]})]
    if kind == "threat":
        return [TriggerAction("apply_posture", node=event.get("node"),
                              detail={"trigger": "threat"})]
    if kind == "pipeline_request":
        return [TriggerAction("allocate", detail={"pipeline": event["pipeline"]})]
    raise UnknownTrigger(str(kind))
