"""Scenario loading and validation.

Scenarios are JSON documents declaring topology, link schedules, pipelines,
traffic sources, security material, and timed events. Validation checks all
referential and range invariants and reports the path of the offending
field. See scenarios/SCHEMA.md for the documented format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .distrib import QosProfile, Reliability
from .node import NodeSpec, StageSpec
from .orchestrator import PipelineSpec
from .simnet import LinkProfile

EVENT_TYPES = {
    "link_profile", "node_fail", "node_restore", "publish", "request_pipeline",
    "revoke_token", "posture", "threat", "partition", "heal",
}


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass
class SourceSpec:
    topic: str
    node: str
    period_ms: int
    size_bytes: int
    priority: int = 1
    start_ms: int = 0
    end_ms: int | None = None


@dataclass
class GatewaySpec:
    node: str
    input_topic: str
    output_topic: str
    from_codec: str = "bin.v1"
    to_codec: str = "text.v1"


@dataclass
class PipelineConfig:
    spec: PipelineSpec
    redundant: bool = False
    autostart: bool = True


@dataclass
class Scenario:
    seed: int
    duration_ms: int
    nodes: list[NodeSpec]
    links: list[dict]  # {a, b, profile: LinkProfile, schedule: [(at_ms, LinkProfile)]}
    pipelines: list[PipelineConfig]
    sources: list[SourceSpec] = field(default_factory=list)
    subscriptions: list[tuple[str, str]] = field(default_factory=list)  # (topic, node)
    qos: dict[str, QosProfile] = field(default_factory=dict)
    ttl: dict[str, int] = field(default_factory=dict)
    security: dict = field(default_factory=dict)
    gateways: list[GatewaySpec] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)
    waypoints: dict[str, list] = field(default_factory=dict)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]


def _require(cond, path, reason):
    if not cond:
        raise ValidationError(path, reason)


def _profile_from(d: dict, path: str, base: LinkProfile | None = None) -> LinkProfile:
    defaults = base or LinkProfile(1_000_000, 10, 0.0, True)
    try:
        return LinkProfile(
            bandwidth_bps=d.get("bandwidth_bps", defaults.bandwidth_bps),
            latency_ms=d.get("latency_ms", defaults.latency_ms),
            loss_prob=d.get("loss_prob", defaults.loss_prob),
            up=d.get("up", defaults.up),
        )
    except ValueError as exc:
        raise ValidationError(path, str(exc)) from exc


def load_scenario(data: bytes | str | dict) -> Scenario:
    if isinstance(data, (bytes, str)):
        try:
            raw = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc)) from exc
    else:
        raw = data
    _require(isinstance(raw, dict), "/", "scenario must be a JSON object")

    seed = raw.get("seed", 0)
    duration = raw.get("duration_ms", 0)
    _require(isinstance(seed, int), "/seed", "must be an integer")
    _require(isinstance(duration, int) and duration >= 0, "/duration_ms", "must be a non-negative integer")

    nodes = []
    ids = set()
    waypoints = {}
    for i, nd in enumerate(raw.get("nodes", [])):
        path = f"/nodes/{i}"
        _require("id" in nd, path, "missing id")
        _require(nd["id"] not in ids, f"{path}/id", f"duplicate node id {nd['id']!r}")
        ids.add(nd["id"])
        try:
            spec = NodeSpec(
                id=nd["id"],
                cpu_capacity=nd.get("cpu_capacity", 4.0),
                memory_capacity=nd.get("memory_capacity", 1024.0),
                battery_capacity=nd.get("battery_capacity", 1e6),
                location=tuple(nd.get("location", (0.0, 0.0))),
                sensor_config=tuple(nd.get("sensors", ("battery", "location", "network", "threat"))),
            )
        except ValueError as exc:
            raise ValidationError(path, str(exc)) from exc
        nodes.append(spec)
        if "waypoints" in nd:
            wps = [(w[0], tuple(w[1])) for w in nd["waypoints"]]
            _require(all(a[0] < b[0] for a, b in zip(wps, wps[1:])),
                     f"{path}/waypoints", "waypoint times must increase")
            waypoints[nd["id"]] = wps
    _require(len(nodes) >= 1, "/nodes", "at least one node required")

    links = []
    link_pairs = set()
    for i, ld in enumerate(raw.get("links", [])):
        path = f"/links/{i}"
        for end in ("a", "b"):
            _require(end in ld, path, f"missing endpoint {end!r}")
            _require(ld[end] in ids, f"{path}/{end}", f"unknown node {ld[end]!r}")
        pair = tuple(sorted((ld["a"], ld["b"])))
        _require(pair not in link_pairs, path, f"duplicate link {pair}")
        _require(ld["a"] != ld["b"], path, "self-links not allowed")
        link_pairs.add(pair)
        profile = _profile_from(ld, path)
        schedule = []
        last_at = -1
        for j, ch in enumerate(ld.get("schedule", [])):
            cpath = f"{path}/schedule/{j}"
            _require("at_ms" in ch, cpath, "missing at_ms")
            _require(ch["at_ms"] > last_at, cpath, "schedule times must strictly increase")
            last_at = ch["at_ms"]
            schedule.append((ch["at_ms"], _profile_from(ch, cpath, base=profile)))
        links.append({"a": ld["a"], "b": ld["b"], "profile": profile, "schedule": schedule})

    pipelines = []
    pipeline_ids = set()
    for i, pd in enumerate(raw.get("pipelines", [])):
        path = f"/pipelines/{i}"
        _require("id" in pd, path, "missing id")
        _require(pd["id"] not in pipeline_ids, f"{path}/id", "duplicate pipeline id")
        pipeline_ids.add(pd["id"])
        stages = []
        for j, sd in enumerate(pd.get("stages", [])):
            spath = f"{path}/stages/{j}"
            try:
                stages.append(StageSpec(
                    name=sd["name"],
                    cpu_demand=sd["cpu_demand"],
                    mem_demand=sd.get("mem_demand", 1.0),
                    per_item_cost=sd["per_item_cost"],
                    input_topic=sd["input_topic"],
                    output_topic=sd["output_topic"],
                    output_size=sd.get("output_size", 100),
                ))
            except (KeyError, ValueError) as exc:
                raise ValidationError(spath, str(exc)) from exc
        _require(len(stages) >= 1, f"{path}/stages", "pipeline needs at least one stage")
        try:
            spec = PipelineSpec(id=pd["id"], stages=tuple(stages),
                                source_topic=pd["source_topic"], sink_topic=pd["sink_topic"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(path, str(exc)) from exc
        pipelines.append(PipelineConfig(spec=spec, redundant=pd.get("redundant", False),
                                        autostart=pd.get("autostart", True)))

    sources = []
    for i, sd in enumerate(raw.get("sources", [])):
        path = f"/sources/{i}"
        _require(sd.get("node") in ids, f"{path}/node", f"unknown node {sd.get('node')!r}")
        _require(sd.get("period_ms", 0) > 0, f"{path}/period_ms", "must be > 0")
        sources.append(SourceSpec(
            topic=sd["topic"], node=sd["node"], period_ms=sd["period_ms"],
            size_bytes=sd.get("size_bytes", 100), priority=sd.get("priority", 1),
            start_ms=sd.get("start_ms", 0), end_ms=sd.get("end_ms")))

    subscriptions = []
    for i, sub in enumerate(raw.get("subscriptions", [])):
        path = f"/subscriptions/{i}"
        _require(sub.get("node") in ids, f"{path}/node", f"unknown node {sub.get('node')!r}")
        subscriptions.append((sub["topic"], sub["node"]))

    qos = {}
    ttl = {}
    for topic, qd in raw.get("qos", {}).items():
        path = f"/qos/{topic}"
        try:
            qos[topic] = QosProfile(
                reliability=Reliability(qd.get("reliability", "best_effort")),
                history_depth=qd.get("history_depth", 1),
                deadline_ms=qd.get("deadline_ms"),
                bundle_eligible=qd.get("bundle_eligible", False),
            )
        except ValueError as exc:
            raise ValidationError(path, str(exc)) from exc
        if "ttl_ms" in qd:
            _require(qd["ttl_ms"] > 0, f"{path}/ttl_ms", "must be > 0")
            ttl[topic] = qd["ttl_ms"]

    security = raw.get("security", {})
    if security:
        root_ids = set()
        for i, tr in enumerate(security.get("trust_roots", [])):
            path = f"/security/trust_roots/{i}"
            _require("key_id" in tr and "public_key" in tr, path, "needs key_id and public_key")
            root_ids.add(tr["key_id"])
        for i, tok in enumerate(security.get("tokens", [])):
            path = f"/security/tokens/{i}"
            _require(tok.get("issuer") in root_ids, f"{path}/issuer",
                     f"unknown issuer {tok.get('issuer')!r}")
            _require(tok.get("expires_at", 0) > tok.get("issued_at", 0),
                     path, "expires_at must be after issued_at")

    gateways = []
    for i, gd in enumerate(raw.get("gateways", [])):
        path = f"/gateways/{i}"
        _require(gd.get("node") in ids, f"{path}/node", f"unknown node {gd.get('node')!r}")
        gateways.append(GatewaySpec(
            node=gd["node"], input_topic=gd["input_topic"], output_topic=gd["output_topic"],
            from_codec=gd.get("from_codec", "bin.v1"), to_codec=gd.get("to_codec", "text.v1")))

    events = []
    last_at = 0
    for i, ev in enumerate(raw.get("events", [])):
        path = f"/events/{i}"
        _require("at_ms" in ev, path, "missing at_ms")
        _require(ev["at_ms"] >= last_at, path, "events must be sorted by at_ms")
        last_at = ev["at_ms"]
        etype = ev.get("type")
        _require(etype in EVENT_TYPES, f"{path}/type", f"unknown event type {etype!r}")
        if etype in ("node_fail", "node_restore", "threat"):
            _require(ev.get("node") in ids, f"{path}/node", f"unknown node {ev.get('node')!r}")
        if etype == "link_profile":
            for end in ("a", "b"):
                _require(ev.get(end) in ids, f"{path}/{end}", f"unknown node {ev.get(end)!r}")
            _profile_from(ev, path)
        if etype == "publish":
            _require(ev.get("node") in ids, f"{path}/node", f"unknown node {ev.get('node')!r}")
            _require("topic" in ev, path, "missing topic")
        if etype == "request_pipeline":
            _require(ev.get("pipeline") in pipeline_ids, f"{path}/pipeline",
                     f"unknown pipeline {ev.get('pipeline')!r}")
        if etype == "posture":
            _require(ev.get("level") in ("normal", "elevated", "lockdown"),
                     f"{path}/level", "level must be normal|elevated|lockdown")
        if etype == "partition":
            groups = ev.get("groups", [])
            seen = set()
            for g in groups:
                for n in g:
                    _require(n in ids, path, f"unknown node {n!r} in partition group")
                    _require(n not in seen, path, f"node {n!r} in multiple groups")
                    seen.add(n)
        events.append(ev)

    return Scenario(
        seed=seed, duration_ms=duration, nodes=nodes, links=links,
        pipelines=pipelines, sources=sources, subscriptions=subscriptions,
        qos=qos, ttl=ttl, security=security, gateways=gateways,
        options=raw.get("options", {}), events=events, waypoints=waypoints,
    )


def load_scenario_file(path: str) -> Scenario:
    with open(path, "rb") as fh:
        return load_scenario(fh.read())
