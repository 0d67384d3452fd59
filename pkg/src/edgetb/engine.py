"""Deterministic run loop tying together the network, nodes, distribution,
storage, security, and orchestration under a scenario.

One thread owns all domain state. External commands (the control API) enter
through a serialized command queue applied between ticks; the event log is
the single source of truth for everything that happened.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

from . import security as sec
from .distrib import Distributor, QosProfile, Reliability
from .gateway import CodecRegistry
from .node import Item, Node, StageInstance
from .orchestrator import (
    HEARTBEAT_PERIOD_MS,
    Infeasible,
    Membership,
    MembershipView,
    Rebalancer,
    allocate,
    deploy_redundant,
    item_slot,
)
from .scenario import PipelineConfig, Scenario
from .simnet import (
    Delivery,
    Drop,
    LinkProfile,
    LinkSchedule,
    Network,
    ProfileChange,
)
from .store import ANTI_ENTROPY_PERIOD_MS, Replica, anti_entropy_round
from .wire import Message

TICK_MS = 100
HB_TOPIC = "_orch.hb"
REVOKE_TOPIC = sec.REVOCATION_TOPIC
STORE_TOPIC = "_store.sync"
BATTERY_EVICT_COOLDOWN_MS = 10_000


def make_payload(item_id: str, created_at: int, size: int) -> bytes:
    header = f"{item_id}|{created_at}|".encode()
    if len(header) >= size:
        return header
    return header + b"." * (size - len(header))


def parse_payload(payload: bytes) -> tuple[str, int] | None:
    try:
        item_id, created, _ = payload.decode("utf-8", "replace").split("|", 2)
        return item_id, int(created)
    except ValueError:
        return None


@dataclass
class _Source:
    topic: str
    node: str
    period_ms: int
    size_bytes: int
    priority: int
    start_ms: int
    end_ms: int | None
    next_at: int = 0
    counter: int = 0


class Engine:
    def __init__(self, scenario: Scenario, rebalance: bool | None = None):
        self.scenario = scenario
        opts = scenario.options
        self.tick_ms = opts.get("tick_ms", TICK_MS)
        self.hb_period = opts.get("heartbeat_period_ms", HEARTBEAT_PERIOD_MS)
        self.rebalance_enabled = opts.get("rebalance", True) if rebalance is None else rebalance
        self.bandwidth_floor = opts.get("bandwidth_floor_bps")
        self.battery_low_pct = opts.get("battery_low_pct", 20.0)

        self.now = 0
        self.log: list[dict] = []
        self._seq = 0
        self._commands: list = []
        self._cmd_lock = threading.Lock()

        self.net = Network(seed=scenario.seed)
        self.nodes: dict[str, Node] = {}
        for spec in scenario.nodes:
            self.net.add_node(spec.id)
            node = Node(spec)
            if spec.id in scenario.waypoints:
                node.waypoints = scenario.waypoints[spec.id]
            self.nodes[spec.id] = node
        for ld in scenario.links:
            self.net.add_link(ld["a"], ld["b"], ld["profile"])
            for at_ms, profile in ld["schedule"]:
                self.net.apply_schedule(LinkSchedule((ld["a"], ld["b"]), ((at_ms, profile),)))

        self.dist = Distributor(self.net)
        self.dist.set_qos(REVOKE_TOPIC, QosProfile(reliability=Reliability.RELIABLE,
                                                   history_depth=64, bundle_eligible=True))
        self.topic_priority: dict[str, int] = {HB_TOPIC: 0, REVOKE_TOPIC: 0, STORE_TOPIC: 1}
        for topic, qos in scenario.qos.items():
            self.dist.set_qos(topic, qos)
        for node_id in self.nodes:
            self.dist.subscribe(node_id, HB_TOPIC)
            self.dist.subscribe(node_id, REVOKE_TOPIC)
            self.dist.subscribe(node_id, STORE_TOPIC)
        for topic, node_id in scenario.subscriptions:
            self.dist.subscribe(node_id, topic)

        self.replicas = {n: Replica(n) for n in self.nodes}
        self._ae_offset = 0

        # security state
        self.trust_roots: sec.TrustRoots = {}
        self._signing_keys: dict[str, object] = {}
        self.tokens: dict[str, sec.CapabilityToken] = {}  # subject -> token
        self.revocations: dict[str, set[str]] = {n: set() for n in self.nodes}
        self.postures = {n: sec.SecurityPosture(sec.PostureLevel.NORMAL, 0, "init")
                         for n in self.nodes}
        self.critical_topics: set[str] = {HB_TOPIC, REVOKE_TOPIC, STORE_TOPIC}
        self._init_security(scenario.security)

        self.memberships = {n: Membership(period_ms=self.hb_period) for n in self.nodes}
        self.rebalancer = Rebalancer()
        self._last_epoch = 0
        self._battery_evicted_at: dict[str, int] = {}
        self._filtered_links: set = set()

        self.registry = CodecRegistry()
        self.gateways = {gw.input_topic: gw for gw in scenario.gateways}
        for gw in scenario.gateways:
            self.dist.subscribe(gw.node, gw.input_topic)

        # pipelines
        self.pipeline_cfgs: dict[str, PipelineConfig] = {c.spec.id: c for c in scenario.pipelines}
        self.instances: dict[str, tuple[str, StageInstance]] = {}  # instance id -> (node, inst)
        self.placements: dict[str, dict[str, str]] = {}  # pipeline -> instance -> node
        self.deployed: set[str] = set()

        self.sources = [
            _Source(s.topic, s.node, s.period_ms, s.size_bytes, s.priority,
                    s.start_ms, s.end_ms, next_at=s.start_ms)
            for s in scenario.sources
        ]

        self._pending_events = list(scenario.events)
        self._finished = False
        self.snapshot_lock = threading.Lock()
        self._snapshot: dict = {}

        self._log(0, "run_start", seed=scenario.seed, duration_ms=scenario.duration_ms)
        for cfg in scenario.pipelines:
            if cfg.autostart:
                self._deploy_pipeline(cfg.spec.id, 0)

    # --- logging ---

    def _log(self, t: int, type_: str, **fields):
        self._seq += 1
        rec = {"t": t, "seq": self._seq, "type": type_}
        rec.update(fields)
        self.log.append(rec)

    # --- security setup ---

    def _init_security(self, cfg: dict):
        for tr in cfg.get("trust_roots", []):
            self.trust_roots[tr["key_id"]] = sec.public_key_from_b64(tr["public_key"])
            if "private_key" in tr:
                self._signing_keys[tr["key_id"]] = sec.private_key_from_b64(tr["private_key"])
        for td in cfg.get("tokens", []):
            priv = self._signing_keys.get(td["issuer"])
            if priv is None:
                raise ValueError(f"no private key for issuer {td['issuer']!r}")
            token = sec.issue_token(priv, td["issuer"], td["subject"], set(td["rights"]),
                                    td.get("issued_at", 0), td["expires_at"], self.trust_roots)
            self.tokens[td["subject"]] = token
        self.critical_topics |= set(cfg.get("critical_topics", []))

    # --- public control surface (thread-safe) ---

    def submit_command(self, fn):
        """Queue a callable for execution between ticks; returns a handle
        with .wait() -> result."""
        done = threading.Event()
        box = {}

        def runner(engine):
            try:
                box["result"] = fn(engine)
            except Exception as exc:  # surfaced to the API layer
                box["error"] = exc
            done.set()

        with self._cmd_lock:
            self._commands.append(runner)

        class Handle:
            def wait(self, timeout=None):
                if not done.wait(timeout):
                    raise TimeoutError("command not applied")
                if "error" in box:
                    raise box["error"]
                return box.get("result")

        return Handle()

    def snapshot(self) -> dict:
        with self.snapshot_lock:
            return dict(self._snapshot)

    # --- run loop ---

    def run(self) -> list[dict]:
        self.advance_to(self.scenario.duration_ms)
        self.finish()
        return self.log

    def finish(self):
        if not self._finished:
            self._log(self.now, "run_end")
            self._finished = True

    def advance_to(self, until: int):
        t = self.now
        while t < until:
            t = min(t + self.tick_ms, until)
            self._tick(t)

    def _tick(self, t: int):
        self._apply_timed_events(t)
        self._apply_commands()
        self._pump_network(t)
        self._run_sources(t)
        if t > self.now:
            self._step_nodes(t)
        if t % self.hb_period == 0:
            self._heartbeats(t)
        if t % 1000 == 0:
            self._orchestrate(t)
        if t % ANTI_ENTROPY_PERIOD_MS == 0 and t > 0:
            self._anti_entropy(t)
        self.dist.tick(t, live=self._live())
        self.dist.expire_bundles(t)
        self._drain_dist_events()
        self.now = t
        self._publish_snapshot(t)

    def _live(self) -> set[str]:
        return {n for n, node in self.nodes.items() if node.up}

    # --- timed scenario events & commands ---

    def _apply_timed_events(self, t: int):
        while self._pending_events and self._pending_events[0]["at_ms"] <= t:
            ev = self._pending_events.pop(0)
            self.apply_event(ev, ev["at_ms"])

    def apply_event(self, ev: dict, at: int):
        etype = ev["type"]
        if etype == "link_profile":
            profile = LinkProfile(
                bandwidth_bps=ev.get("bandwidth_bps", self.net.link_profile(ev["a"], ev["b"]).bandwidth_bps),
                latency_ms=ev.get("latency_ms", self.net.link_profile(ev["a"], ev["b"]).latency_ms),
                loss_prob=ev.get("loss_prob", self.net.link_profile(ev["a"], ev["b"]).loss_prob),
                up=ev.get("up", True))
            self.net.set_link_profile(ev["a"], ev["b"], profile)
        elif etype == "node_fail":
            self._node_down(ev["node"], at, cause="scenario")
        elif etype == "node_restore":
            node = self.nodes[ev["node"]]
            node.restore()
            if node.up:
                self._log(at, "node_up", node=ev["node"])
        elif etype == "publish":
            payload = make_payload(f"ev:{ev['topic']}:{at}", at, ev.get("size_bytes", 64))
            self._publish(ev["node"], ev["topic"], payload, ev.get("priority", 1), at)
        elif etype == "request_pipeline":
            try:
                self._deploy_pipeline(ev["pipeline"], at)
            except Infeasible as exc:
                self._log(at, "infeasible", pipeline=ev["pipeline"], stage=exc.stage)
        elif etype == "revoke_token":
            self._revoke(ev["node"], ev["subject"], at)
        elif etype == "posture":
            level = sec.PostureLevel(ev["level"])
            targets = [ev["node"]] if ev.get("node") else sorted(self.nodes)
            for n in targets:
                self.postures[n] = sec.apply_posture(self.postures[n], "operator", at,
                                                     operator_level=level)
                self._log(at, "posture", node=n, level=level.value, cause="operator")
        elif etype == "threat":
            node = self.nodes[ev["node"]]
            node.threat = True
            self.postures[ev["node"]] = sec.apply_posture(self.postures[ev["node"]], "threat", at)
            self._log(at, "threat", node=ev["node"])
            self._log(at, "posture", node=ev["node"], level="lockdown", cause="threat")
        elif etype == "partition":
            self.net.partition([set(g) for g in ev["groups"]])
            self._log(at, "partition", groups=[sorted(g) for g in ev["groups"]])
        elif etype == "heal":
            self.net.heal()
            self._log(at, "heal")
        else:
            raise ValueError(f"unknown event type {etype!r}")

    def _apply_commands(self):
        with self._cmd_lock:
            cmds, self._commands = self._commands, []
        for cmd in cmds:
            cmd(self)

    # --- network pump & message dispatch ---

    def _pump_network(self, t: int):
        for ev in self.net.advance(t):
            if isinstance(ev, Delivery):
                if not self.nodes[ev.dst].up:
                    continue
                for dst, msg, env in self.dist.on_delivery(ev.src, ev.dst, ev.frame, ev.t):
                    self._log(ev.t, "frame_delivered", src=ev.src, dst=ev.dst,
                              topic=msg.topic, bytes=len(ev.frame))
                    self._dispatch(dst, msg, ev.t)
            elif isinstance(ev, Drop):
                self._log(ev.t, "frame_drop", src=ev.src, dst=ev.dst,
                          reason=ev.reason.value, bytes=len(ev.frame))
            elif isinstance(ev, ProfileChange):
                a, b = ev.link
                self._log(ev.t, "link_changed", a=a, b=b, up=ev.profile.up,
                          bandwidth_bps=ev.profile.bandwidth_bps,
                          latency_ms=ev.profile.latency_ms,
                          loss_prob=ev.profile.loss_prob)
                if ev.profile.up and not ev.was_up:
                    self.dist.forward_bundles(a, b, max(ev.t, self.net.now_ms))

    def _dispatch(self, node_id: str, msg: Message, t: int):
        if msg.topic == HB_TOPIC:
            self.memberships[node_id].record_heartbeat(msg.origin, t)
            return
        if msg.topic == REVOKE_TOPIC:
            token_id = msg.payload.decode()
            if token_id not in self.revocations[node_id]:
                self.revocations[node_id].add(token_id)
                self._log(t, "revocation_applied", node=node_id, token_id=token_id)
            return
        if msg.topic == STORE_TOPIC:
            return  # observability digest; reconciliation happens in the sync round
        if msg.topic in self.gateways and self.gateways[msg.topic].node == node_id:
            self._gateway_translate(self.gateways[msg.topic], msg, t)
        # stage inputs
        parsed = parse_payload(msg.payload)
        for inst_id in sorted(self.instances):
            host, inst = self.instances[inst_id]
            if host != node_id or inst.stage.input_topic != msg.topic:
                continue
            if parsed is None:
                continue
            item_id, created = parsed
            if not self._accept_item(inst_id, item_id):
                continue
            item = Item(item_id=item_id, src_created_at=created, size=len(msg.payload))
            if self.nodes[node_id].enqueue(inst, item):
                self._log(t, "queue_high_watermark", instance=inst_id,
                          depth=len(inst.queue))
        # scenario subscribers observing a topic
        if (msg.topic, node_id) in set(self.scenario.subscriptions):
            latency = t - (parsed[1] if parsed else msg.created_at)
            self._log(t, "msg_delivered", node=node_id, topic=msg.topic,
                      latency_ms=latency)

    def _accept_item(self, inst_id: str, item_id: str) -> bool:
        """Hash-split items across live replicas of the same stage."""
        stage_key = inst_id.rsplit("@", 1)[0]
        hosts = sorted(
            host for other_id, (host, _inst) in self.instances.items()
            if other_id.rsplit("@", 1)[0] == stage_key and self.nodes[host].up)
        if not hosts:
            return False
        if len(hosts) == 1:
            return True
        my_host = self.instances[inst_id][0]
        return hosts[item_slot(item_id, len(hosts))] == my_host

    def _gateway_translate(self, gw, msg: Message, t: int):
        src_codec = self.registry.get(gw.from_codec)
        encoded = src_codec.encode(Message(msg.topic, msg.priority, msg.payload))
        translated = self.registry.translate(encoded, gw.from_codec, gw.to_codec)
        out_msg, _ = self.registry.get(gw.to_codec).decode_one(translated, 0)
        self._log(t, "gateway_translate", node=gw.node, from_codec=gw.from_codec,
                  to_codec=gw.to_codec, bytes_in=len(encoded), bytes_out=len(translated))
        self._publish(gw.node, gw.output_topic, out_msg.payload, out_msg.priority, t)

    # --- publishing with posture enforcement ---

    def _publish(self, node_id: str, topic: str, payload: bytes, priority: int,
                 t: int, qos: QosProfile | None = None):
        node = self.nodes.get(node_id)
        if node is None or not node.up:
            return
        posture = self.postures[node_id]
        token = self.tokens.get(node_id)
        if token is not None:
            ok, _ = sec.verify_token(token, self.trust_roots,
                                     self.revocations[node_id], t)
            if not ok:
                token = None
        if not sec.posture_allows(posture, topic, self.critical_topics, token):
            self._log(t, "posture_denied", node=node_id, topic=topic)
            return
        msg = Message(topic=topic, priority=priority, payload=payload,
                      origin=node_id, created_at=t)
        ttl = self.scenario.ttl.get(topic)
        # deliveries dispatch after the clock has advanced past their
        # timestamps; reactions transmit at the current clock
        send_at = max(t, self.net.now_ms)
        outcomes = self.dist.publish(node_id, msg, now=send_at, live=self._live(),
                                     qos=qos, ttl_ms=ttl)
        sent = sum(1 for o in outcomes if o.status in ("sent", "local"))
        self._log(t, "send", node=node_id, topic=topic, sent=sent,
                  bundled=sum(1 for o in outcomes if o.status == "bundled"),
                  dropped=sum(1 for o in outcomes if o.status == "dropped"))
        # local deliveries dispatch immediately
        for o in outcomes:
            if o.status == "local":
                self._dispatch(node_id, msg, t)

    # --- sources & node execution ---

    def _run_sources(self, t: int):
        for src in self.sources:
            while src.next_at <= t and (src.end_ms is None or src.next_at < src.end_ms):
                at = max(src.next_at, self.now)
                src.counter += 1
                item_id = f"{src.topic}#{src.node}#{src.counter}"
                payload = make_payload(item_id, at, src.size_bytes)
                self.topic_priority[src.topic] = src.priority
                self._publish(src.node, src.topic, payload, src.priority, t)
                src.next_at += src.period_ms

    def _step_nodes(self, t: int):
        dt = t - self.now
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if not node.up:
                continue
            outputs, went_down = node.step_execute(dt, t)
            for inst, item in outputs:
                topic = inst.stage.output_topic
                payload = make_payload(item.item_id, item.src_created_at, item.size)
                pipeline_id = inst.instance_id.split("/", 1)[0]
                cfg = self.pipeline_cfgs.get(pipeline_id)
                if cfg is not None and topic == cfg.spec.sink_topic:
                    self._log(t, "pipeline_output", pipeline=pipeline_id, node=node_id,
                              item=item.item_id, latency_ms=t - item.src_created_at)
                self._publish(node_id, topic, payload,
                              self.topic_priority.get(topic, 1), t)
            if went_down:
                self._node_down(node_id, t, cause="battery")

    def _node_down(self, node_id: str, t: int, cause: str):
        node = self.nodes[node_id]
        if not node.up and cause == "scenario":
            node.fail()
            return
        node.fail()
        self._log(t, "node_down", node=node_id, cause=cause)
        # stage instances on a dead node are lost with their queues
        for inst_id in sorted(self.instances):
            host, inst = self.instances[inst_id]
            if host == node_id:
                node.remove_stage(inst_id)
                del self.instances[inst_id]
                self.dist.unsubscribe(node_id, inst.stage.input_topic)
                for pid, placement in self.placements.items():
                    placement.pop(inst_id, None)

    # --- heartbeats & orchestration ---

    def _heartbeats(self, t: int):
        for node_id in sorted(self._live()):
            node = self.nodes[node_id]
            payload = json.dumps({
                "battery_pct": round(100.0 * node.battery_j / node.spec.battery_capacity, 3),
                "cpu_free": round(node.cpu_free, 6),
                "mem_free": round(node.mem_free, 6),
            }, sort_keys=True).encode()
            self.memberships[node_id].record_heartbeat(node_id, t)
            self._publish(node_id, HB_TOPIC, payload, 0, t)

    def _orchestrator_host(self) -> str | None:
        live = sorted(self._live())
        return live[0] if live else None

    def _orchestrate(self, t: int):
        host = self._orchestrator_host()
        if host is None:
            return
        view = self.memberships[host].build(t)
        if view.epoch != self._last_epoch:
            self._last_epoch = view.epoch
            self._log(t, "membership", epoch=view.epoch, live=view.live_ids())
            self._handle_membership_change(view, t)
        self._sample_and_rebalance(view, t)
        self._check_triggers(view, t)

    def _handle_membership_change(self, view, t: int):
        live = set(view.live_ids()) & self._live()
        for pid in sorted(self.deployed):
            cfg = self.pipeline_cfgs[pid]
            if cfg.redundant:
                # ensure every live node hosts every stage (active-active)
                for stage in cfg.spec.stages:
                    for node_id in sorted(live):
                        inst_id = f"{pid}/{stage.name}@{node_id}"
                        if inst_id not in self.instances and self.nodes[node_id].can_admit(stage):
                            self._place_instance(pid, stage, node_id, t, kind="redundant_fill")
            else:
                # re-place stages that lost their only live host
                for stage in cfg.spec.stages:
                    alive = [i for i in self.instances
                             if i.rsplit("@", 1)[0] == f"{pid}/{stage.name}"
                             and self.nodes[self.instances[i][0]].up]
                    if alive:
                        continue
                    candidates = sorted(live, key=lambda n: (-self.nodes[n].cpu_free, n))
                    for n in candidates:
                        if self.nodes[n].can_admit(stage):
                            self._place_instance(pid, stage, n, t, kind="replaced")
                            break
                    else:
                        self._log(t, "infeasible", pipeline=pid, stage=stage.name)

    def _place_instance(self, pid: str, stage, node_id: str, t: int, kind: str):
        inst_id = f"{pid}/{stage.name}@{node_id}"
        inst, reason = self.nodes[node_id].admit_stage(stage, inst_id)
        if inst is None:
            self._log(t, "admit_rejected", instance=inst_id, reason=reason.value)
            return None
        self.instances[inst_id] = (node_id, inst)
        self.placements.setdefault(pid, {})[inst_id] = node_id
        self.dist.subscribe(node_id, stage.input_topic)
        self._log(t, kind, pipeline=pid, stage=stage.name, node=node_id)
        return inst

    def _deploy_pipeline(self, pid: str, t: int):
        cfg = self.pipeline_cfgs[pid]
        host = self._orchestrator_host()
        if host is None:
            raise Infeasible("no live nodes")
        view = self.memberships[host].build(t)
        if not view.live:
            # bootstrap: before any heartbeat, all up nodes are candidates
            view = MembershipView(epoch=0, live={n: t for n in sorted(self._live())})
        if cfg.redundant:
            placement = deploy_redundant(cfg.spec, view, self.nodes)
            for inst_id, node_id in sorted(placement.assignments.items()):
                stage_name = inst_id.split("/", 1)[1].rsplit("@", 1)[0]
                stage = next(s for s in cfg.spec.stages if s.name == stage_name)
                self._place_instance(pid, stage, node_id, t, kind="placed")
        else:
            placement = allocate(cfg.spec, view, self.nodes)
            for key, node_id in sorted(placement.assignments.items()):
                stage_name = key.split("/", 1)[1]
                stage = next(s for s in cfg.spec.stages if s.name == stage_name)
                self._place_instance(pid, stage, node_id, t, kind="placed")
        self.deployed.add(pid)
        self._log(t, "placement", pipeline=pid, redundant=cfg.redundant,
                  assignments={i: n for i, n in sorted(self.placements.get(pid, {}).items())})
        return self.placements.get(pid, {})

    def _sample_and_rebalance(self, view, t: int):
        depths: dict[str, tuple] = {}
        for inst_id in sorted(self.instances):
            host, inst = self.instances[inst_id]
            depth = len(inst.queue)
            self._log(t, "queue_sample", instance=inst_id, node=host,
                      stage=inst.stage.name, depth=depth)
            stage_key = inst_id.rsplit("@", 1)[0]
            pid, stage_name = stage_key.split("/", 1)
            prev = depths.get(stage_key)
            hosts = (prev[4] + [host]) if prev else [host]
            depths[stage_key] = (pid, stage_name, max(depth, prev[2] if prev else 0),
                                 inst.stage, hosts)
        if not self.rebalance_enabled:
            return
        for action in self.rebalancer.sample(depths, self.nodes, view, t):
            cfg = self.pipeline_cfgs[action.pipeline]
            stage = next(s for s in cfg.spec.stages if s.name == action.stage)
            if action.kind == "scale_out":
                inst = self._place_instance(action.pipeline, stage, action.to_node, t,
                                            kind="scale_out")
                if inst is None:
                    self._log(t, "saturated", pipeline=action.pipeline, stage=action.stage)
            elif action.kind == "migrate":
                old_id = f"{action.pipeline}/{action.stage}@{action.from_node}"
                dropped = 0
                if old_id in self.instances:
                    _, old_inst = self.instances.pop(old_id)
                    dropped = len(old_inst.queue)
                    self.nodes[action.from_node].remove_stage(old_id)
                    self.dist.unsubscribe(action.from_node, stage.input_topic)
                    self.placements.get(action.pipeline, {}).pop(old_id, None)
                self._place_instance(action.pipeline, stage, action.to_node, t, kind="migration")
                self._log(t, "migration_detail", pipeline=action.pipeline, stage=action.stage,
                          from_node=action.from_node, to_node=action.to_node,
                          dropped_items=dropped)
            else:
                self._log(t, "saturated", pipeline=action.pipeline, stage=action.stage)

    def _check_triggers(self, view, t: int):
        # battery-low eviction
        for node_id in sorted(self._live()):
            node = self.nodes[node_id]
            pct = 100.0 * node.battery_j / node.spec.battery_capacity
            if pct >= self.battery_low_pct or not node.instances:
                continue
            last = self._battery_evicted_at.get(node_id)
            if last is not None and t - last < BATTERY_EVICT_COOLDOWN_MS:
                continue
            self._battery_evicted_at[node_id] = t
            inst = max(node.instances,
                       key=lambda i: (self.topic_priority.get(i.stage.output_topic, 1),
                                      i.instance_id))
            self._log(t, "battery_evict", node=node_id, instance=inst.instance_id,
                      battery_pct=round(pct, 2))
            pid = inst.instance_id.split("/", 1)[0]
            stage = inst.stage
            node.remove_stage(inst.instance_id)
            self.instances.pop(inst.instance_id, None)
            self.dist.unsubscribe(node_id, stage.input_topic)
            self.placements.get(pid, {}).pop(inst.instance_id, None)
            candidates = sorted((n for n in view.live_ids()
                                 if n != node_id and n in self.nodes and self.nodes[n].up),
                                key=lambda n: (-self.nodes[n].cpu_free, n))
            for n in candidates:
                if self.nodes[n].can_admit(stage):
                    self._place_instance(pid, stage, n, t, kind="replaced")
                    break
            else:
                self._log(t, "infeasible", pipeline=pid, stage=stage.name)
        # bandwidth floor -> enable filtering
        if self.bandwidth_floor:
            for key in sorted(self.net.links):
                if key in self._filtered_links:
                    continue
                link = self.net.links[key]
                if not link.profile.up:
                    continue
                est = self.net.measure_bandwidth(key[0], key[1], 2000)
                if 0 < est < self.bandwidth_floor:
                    self._filtered_links.add(key)
                    budget = self.bandwidth_floor // 8
                    self.dist.enable_filter(key[0], key[1], budget)
                    self._log(t, "filter_enabled", a=key[0], b=key[1],
                              budget_bytes_per_s=budget)
        # continuous bandwidth sensor feed
        if t % 1000 == 0:
            for key in sorted(self.net.links):
                est = self.net.measure_bandwidth(key[0], key[1], 1000)
                for node_id in key:
                    peer = key[1] if node_id == key[0] else key[0]
                    if node_id in self.nodes:
                        self.nodes[node_id].bw_readings[peer] = est

    # --- anti-entropy ---

    def _anti_entropy(self, t: int):
        live = sorted(self._live())
        if len(live) < 2:
            return
        self._ae_offset += 1
        for node_id in live:
            others = [n for n in live if n != node_id]
            peer = others[self._ae_offset % len(others)]
            if node_id >= peer:
                continue  # each unordered pair at most once per round
            link_up = self.net.has_link(node_id, peer) and self.net.link_profile(node_id, peer).up
            if not link_up:
                continue
            # digest frame rides the reserved sync topic for observability
            digest = json.dumps(sorted(self.replicas[node_id].digest()), sort_keys=True)
            self._publish(node_id, STORE_TOPIC, digest.encode(), 1, t)
            synced = anti_entropy_round(self.replicas[node_id], self.replicas[peer], True)
            if synced:
                self._log(t, "store_sync", a=node_id, b=peer, keys=synced)

    # --- revocation ---

    def _revoke(self, origin: str, subject: str, t: int):
        token = self.tokens.get(subject)
        if token is None:
            self._log(t, "revoke_unknown_subject", node=origin, subject=subject)
            return
        token_id = token.token_id
        self.revocations[origin].add(token_id)
        self._log(t, "revocation_applied", node=origin, token_id=token_id)
        self._publish(origin, REVOKE_TOPIC, token_id.encode(), 0, t)

    def _drain_dist_events(self):
        for ev in self.dist.drain_events():
            self._log(ev.t, ev.type, **ev.fields)

    # --- snapshots for the control API ---

    def _publish_snapshot(self, t: int):
        nodes = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            nodes.append({
                "id": node_id,
                "status": "up" if node.up else "down",
                "battery_pct": round(100.0 * node.battery_j / node.spec.battery_capacity, 2),
                "cpu_free": round(node.cpu_free, 3),
                "mem_free": round(node.mem_free, 3),
                "posture": self.postures[node_id].level.value,
                "stages": sorted(i.instance_id for i in node.instances),
            })
        links = []
        for key in sorted(self.net.links):
            prof = self.net.links[key].profile
            links.append({
                "a": key[0], "b": key[1], "up": prof.up,
                "bandwidth_bps": prof.bandwidth_bps, "latency_ms": prof.latency_ms,
                "loss_prob": prof.loss_prob,
                "measured_bps": self.net.measure_bandwidth(key[0], key[1], 2000),
            })
        queues = [
            {"instance": inst_id, "node": host, "stage": inst.stage.name,
             "depth": len(inst.queue)}
            for inst_id, (host, inst) in sorted(self.instances.items())
        ]
        placements = {pid: dict(sorted(p.items())) for pid, p in sorted(self.placements.items())}
        snap = {"t": t, "nodes": nodes, "links": links, "queues": queues,
                "placements": placements}
        with self.snapshot_lock:
            self._snapshot = snap


def write_log(log: list[dict], path: str):
    with open(path, "w") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def log_to_jsonl(log: list[dict]) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in log)
