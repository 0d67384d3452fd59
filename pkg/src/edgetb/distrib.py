"""Topic-based brokerless publish/subscribe over the simulated network.

Publishers send directly to each subscriber (single hop, no broker). QoS
profiles add reliability (ack + retransmit), bounded history, deadlines,
and DTN-style store-and-forward bundles for disconnected destinations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import simnet
from .simnet import DropReason, Network, link_key
from .wire import (
    KIND_ACK,
    KIND_DATA,
    Envelope,
    Message,
    decode_envelope,
    encode_envelope,
    encode_frame,
)

RETRANSMIT_CAP_MS = 2000
RETRANSMIT_BACKOFF = 2


class Reliability(str, Enum):
    BEST_EFFORT = "best_effort"
    RELIABLE = "reliable"


@dataclass(frozen=True)
class QosProfile:
    reliability: Reliability = Reliability.BEST_EFFORT
    history_depth: int = 1
    deadline_ms: int | None = None
    bundle_eligible: bool = False

    def __post_init__(self):
        if self.history_depth < 1:
            raise ValueError("history_depth must be >= 1")


@dataclass
class Bundle:
    message: Message
    dst: str
    qos: QosProfile
    ttl_ms: int
    custody: str
    created_at: int
    counter: int

    def expired(self, now: int) -> bool:
        return now - self.created_at > self.ttl_ms


@dataclass
class PublishOutcome:
    dst: str
    status: str  # sent | bundled | dropped | local
    reason: str | None = None


def connect_services(subscriptions: dict[str, set[str]],
                     live: set[str] | None = None) -> dict[str, set[str]]:
    """Direct connection table: topic -> destination set. Every path is one
    hop (publisher -> subscriber); there is no broker node."""
    table = {}
    for topic in sorted(subscriptions):
        dsts = set(subscriptions[topic])
        if live is not None:
            dsts &= live
        table[topic] = dsts
    return table


def filter_for_bandwidth(pending: list[Message], budget_bytes: int,
                         bundle_eligible=lambda m: False,
                         ) -> tuple[list[Message], list[Message], list[Message]]:
    """Select messages in (priority, FIFO) order while cumulative encoded
    size fits the budget; unselected bundle-eligible messages defer, the
    rest drop. Deterministic."""
    if budget_bytes < 0:
        raise ValueError("budget_bytes must be >= 0")
    order = sorted(range(len(pending)), key=lambda i: (pending[i].priority, i))
    send, defer, drop = [], [], []
    remaining = budget_bytes
    selected = set()
    for i in order:
        size = len(encode_frame(pending[i]))
        if size <= remaining:
            remaining -= size
            selected.add(i)
    for i in range(len(pending)):
        if i in selected:
            send.append(pending[i])
        elif bundle_eligible(pending[i]):
            defer.append(pending[i])
        else:
            drop.append(pending[i])
    return send, defer, drop


@dataclass
class _Pending:
    env: Envelope
    msg: Message
    dst: str
    qos: QosProfile
    next_retry: int
    interval: int
    deadline_at: int | None


@dataclass
class DistribEvent:
    t: int
    type: str
    fields: dict


class Distributor:
    """Owns pub/sub state for all nodes; driven by the simulation loop."""

    def __init__(self, net: Network):
        self.net = net
        self.subscriptions: dict[str, set[str]] = {}
        self.topic_qos: dict[str, QosProfile] = {}
        self.default_ttl_ms = 30_000
        self._counters: dict[str, int] = {}
        self.bundles: list[Bundle] = []
        self.pending: dict[tuple[tuple[str, int], str], _Pending] = {}
        self._seen: dict[str, set[tuple[str, int]]] = {}
        self.caches: dict[tuple[str, str], deque] = {}  # (node, topic) -> recent messages
        self.filters: dict[tuple[str, str], int] = {}  # link -> budget bytes/second
        self._filter_used: dict[tuple[tuple[str, str], int], int] = {}
        self.events: list[DistribEvent] = []
        self._ever_subscribed: set[str] = set()

    # --- subscriptions ---

    def subscribe(self, node: str, topic: str):
        self.subscriptions.setdefault(topic, set()).add(node)
        self._ever_subscribed.add(topic)

    def unsubscribe(self, node: str, topic: str):
        self.subscriptions.get(topic, set()).discard(node)

    def set_qos(self, topic: str, qos: QosProfile):
        self.topic_qos[topic] = qos

    def qos_for(self, topic: str) -> QosProfile:
        return self.topic_qos.get(topic, QosProfile())

    def destinations(self, topic: str, publisher: str, live: set[str]) -> list[str]:
        table = connect_services(self.subscriptions, live)
        return sorted(table.get(topic, set()) - {publisher})

    def enable_filter(self, a: str, b: str, budget_bytes_per_s: int):
        self.filters[link_key(a, b)] = budget_bytes_per_s

    # --- publish path ---

    def next_counter(self, node: str) -> int:
        self._counters[node] = self._counters.get(node, 0) + 1
        return self._counters[node]

    def publish(self, src: str, msg: Message, now: int, live: set[str],
                qos: QosProfile | None = None,
                ttl_ms: int | None = None) -> list[PublishOutcome]:
        qos = qos or self.qos_for(msg.topic)
        ttl_ms = ttl_ms if ttl_ms is not None else self.default_ttl_ms
        if msg.topic not in self._ever_subscribed:
            self.events.append(DistribEvent(now, "unknown_topic",
                                            {"topic": msg.topic, "node": src}))
        counter = self.next_counter(src)
        outcomes = []
        for dst in self.destinations(msg.topic, src, live):
            outcomes.append(self._send_one(src, dst, msg, counter, qos, ttl_ms, now))
        # local delivery when the publisher also subscribes
        if src in self.subscriptions.get(msg.topic, set()):
            outcomes.append(PublishOutcome(dst=src, status="local"))
        return outcomes

    def _send_one(self, src: str, dst: str, msg: Message, counter: int,
                  qos: QosProfile, ttl_ms: int, now: int) -> PublishOutcome:
        link_ok = self.net.has_link(src, dst) and self.net.link_profile(src, dst).up
        env = Envelope(origin=src, created_at=msg.created_at, counter=counter,
                       kind=KIND_DATA, reliable=qos.reliability is Reliability.RELIABLE,
                       frame=encode_frame(msg))
        wire = encode_envelope(env)
        if link_ok and not self._budget_allows(src, dst, len(wire), now):
            link_ok = False
            deny_reason = "over_budget"
        else:
            deny_reason = "link_down"
        if not link_ok:
            if qos.bundle_eligible:
                self.bundles.append(Bundle(message=msg, dst=dst, qos=qos, ttl_ms=ttl_ms,
                                           custody=src, created_at=now, counter=counter))
                self.events.append(DistribEvent(now, "bundle_created",
                                                {"topic": msg.topic, "src": src, "dst": dst,
                                                 "ttl_ms": ttl_ms}))
                return PublishOutcome(dst=dst, status="bundled")
            self.events.append(DistribEvent(now, "publish_dropped",
                                            {"topic": msg.topic, "src": src, "dst": dst,
                                             "reason": deny_reason}))
            return PublishOutcome(dst=dst, status="dropped", reason=deny_reason)
        self._charge_budget(src, dst, len(wire), now)
        self.net.transmit(src, dst, wire, at=now)
        if env.reliable:
            self._track_reliable(env, msg, src, dst, qos, now)
        return PublishOutcome(dst=dst, status="sent")

    def _budget_allows(self, src: str, dst: str, size: int, now: int) -> bool:
        key = link_key(src, dst)
        budget = self.filters.get(key)
        if budget is None:
            return True
        used = self._filter_used.get((key, now // 1000), 0)
        return used + size <= budget

    def _charge_budget(self, src: str, dst: str, size: int, now: int):
        key = link_key(src, dst)
        if key in self.filters:
            slot = (key, now // 1000)
            self._filter_used[slot] = self._filter_used.get(slot, 0) + size

    def _track_reliable(self, env: Envelope, msg: Message, src: str, dst: str,
                        qos: QosProfile, now: int):
        latency = self.net.link_profile(src, dst).latency_ms if self.net.has_link(src, dst) else 100
        interval = min(max(2 * latency, 10), RETRANSMIT_CAP_MS)
        deadline = now + qos.deadline_ms if qos.deadline_ms is not None else None
        self.pending[(env.msg_id, dst)] = _Pending(
            env=env, msg=msg, dst=dst, qos=qos,
            next_retry=now + interval, interval=interval, deadline_at=deadline)
        # history_depth bounds retained unacknowledged messages per topic
        per_topic = [k for k, p in self.pending.items()
                     if p.env.origin == src and p.msg.topic == msg.topic]
        excess = len(per_topic) - qos.history_depth
        if excess > 0:
            per_topic.sort(key=lambda k: k[0][1])  # oldest counter first
            for k in per_topic[:excess]:
                old = self.pending.pop(k)
                self.events.append(DistribEvent(now, "history_evicted",
                                                {"topic": old.msg.topic, "dst": old.dst}))

    # --- delivery path ---

    def on_delivery(self, src: str, dst: str, wire: bytes, now: int,
                    ) -> list[tuple[str, Message, Envelope]]:
        """Handle one raw frame delivered by the network; returns messages
        to hand to application subscribers on dst."""
        env = decode_envelope(wire)
        if env.kind == KIND_ACK:
            self.pending.pop((env.msg_id, src), None)
            return []
        from .wire import decode_frame
        msg, _ = decode_frame(env.frame)
        msg.origin = env.origin
        msg.created_at = env.created_at
        if env.reliable:
            ack = Envelope(origin=env.origin, created_at=0, counter=env.counter,
                           kind=KIND_ACK, frame=b"")
            if self.net.has_link(dst, src) and self.net.link_profile(dst, src).up:
                # deliveries are dispatched after the clock has advanced past
                # their timestamps; send the ack at the current clock
                self.net.transmit(dst, src, encode_envelope(ack), at=max(now, self.net.now_ms))
        seen = self._seen.setdefault(dst, set())
        if env.reliable:
            if env.msg_id in seen:
                return []
            seen.add(env.msg_id)
        cache = self.caches.setdefault((dst, msg.topic), deque(
            maxlen=self.qos_for(msg.topic).history_depth))
        cache.append(msg)
        return [(dst, msg, env)]

    # --- timers ---

    def tick(self, now: int, live: set[str]):
        for key in sorted(self.pending, key=lambda k: (k[0][0], k[0][1], k[1])):
            p = self.pending.get(key)
            if p is None or now < p.next_retry:
                continue
            if p.deadline_at is not None and now > p.deadline_at:
                del self.pending[key]
                self.events.append(DistribEvent(now, "deadline_exceeded",
                                                {"topic": p.msg.topic, "dst": p.dst}))
                continue
            src = p.env.origin
            if src in live and self.net.has_link(src, p.dst) and self.net.link_profile(src, p.dst).up:
                self.net.transmit(src, p.dst, encode_envelope(p.env), at=now)
                self.events.append(DistribEvent(now, "retransmit",
                                                {"topic": p.msg.topic, "dst": p.dst}))
            p.interval = min(p.interval * RETRANSMIT_BACKOFF, RETRANSMIT_CAP_MS)
            p.next_retry = now + p.interval

    def expire_bundles(self, now: int):
        kept = []
        for b in self.bundles:
            if b.expired(now):
                self.events.append(DistribEvent(now, "bundle_expired",
                                                {"topic": b.message.topic, "src": b.custody,
                                                 "dst": b.dst}))
            else:
                kept.append(b)
        self.bundles = kept

    def forward_bundles(self, a: str, b: str, now: int) -> int:
        """On a link-up event between a and b, transmit pending bundles held
        on either side for the other, in (priority, created_at) order.
        Expired bundles are deleted first and never transmitted."""
        self.expire_bundles(now)
        ready = [bd for bd in self.bundles
                 if link_key(bd.custody, bd.dst) == link_key(a, b)]
        ready.sort(key=lambda bd: (bd.message.priority, bd.created_at, bd.counter))
        sent = 0
        for bd in ready:
            if not (self.net.has_link(bd.custody, bd.dst)
                    and self.net.link_profile(bd.custody, bd.dst).up):
                continue
            env = Envelope(origin=bd.custody, created_at=bd.message.created_at,
                           counter=bd.counter, kind=KIND_DATA,
                           reliable=bd.qos.reliability is Reliability.RELIABLE,
                           frame=encode_frame(bd.message))
            self.net.transmit(bd.custody, bd.dst, encode_envelope(env), at=now)
            if env.reliable:
                self._track_reliable(env, bd.message, bd.custody, bd.dst, bd.qos, now)
            self.bundles.remove(bd)
            self.events.append(DistribEvent(now, "bundle_forwarded",
                                            {"topic": bd.message.topic, "src": bd.custody,
                                             "dst": bd.dst}))
            sent += 1
        return sent

    def drain_events(self) -> list[DistribEvent]:
        out = self.events
        self.events = []
        return out
