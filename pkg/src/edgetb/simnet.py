"""Deterministic discrete-event network simulator for DDIL links.

Links are point-to-point, full-duplex, FIFO per direction. Time is integer
milliseconds; events execute in (time, seq) order so identical seeds give
identical runs. Loss is drawn per frame from a per-link seeded generator.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum


class SimnetError(Exception):
    pass


class UnknownNode(SimnetError):
    pass


class UnknownLink(SimnetError):
    pass


class OverlappingGroups(SimnetError):
    pass


class DropReason(str, Enum):
    LINK_DOWN = "link_down"
    LOSS = "loss"


@dataclass(frozen=True)
class LinkProfile:
    bandwidth_bps: int
    latency_ms: int
    loss_prob: float
    up: bool = True

    def __post_init__(self):
        if self.bandwidth_bps < 0 or self.latency_ms < 0:
            raise ValueError("bandwidth and latency must be non-negative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError(f"loss_prob must be in [0,1], got {self.loss_prob}")
        if self.bandwidth_bps == 0 and self.up:
            raise ValueError("bandwidth_bps = 0 only permitted when up = false")


@dataclass(frozen=True)
class LinkSchedule:
    link_id: tuple[str, str]
    changes: tuple[tuple[int, LinkProfile], ...]

    def __post_init__(self):
        times = [at for at, _ in self.changes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule changes must be strictly increasing in at_ms")


def link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class Delivery:
    t: int
    src: str
    dst: str
    frame: bytes


@dataclass
class Drop:
    t: int
    src: str
    dst: str
    reason: DropReason
    frame: bytes


@dataclass
class ProfileChange:
    t: int
    link: tuple[str, str]
    profile: LinkProfile
    was_up: bool


@dataclass
class Decision:
    """Outcome of a transmit call: scheduled (with an ETA estimate under the
    current profile/queue) or dropped."""

    scheduled: bool
    eta_ms: int | None = None
    reason: DropReason | None = None


class _Direction:
    __slots__ = ("queue", "busy")

    def __init__(self):
        self.queue: deque[bytes] = deque()
        self.busy = False


class _Link:
    __slots__ = ("key", "profile", "dirs", "delivered", "rng", "free_at")

    def __init__(self, key, profile, seed):
        self.key = key
        self.profile = profile
        self.dirs = {key: _Direction(), (key[1], key[0]): _Direction()}
        self.delivered: list[tuple[int, int]] = []  # (t, bits)
        self.rng = random.Random(f"{seed}/link/{key[0]}/{key[1]}")
        self.free_at = {key: 0, (key[1], key[0]): 0}


def serialization_ms(frame: bytes, bandwidth_bps: int) -> int:
    return math.ceil(len(frame) * 8 * 1000 / bandwidth_bps)


class Network:
    """Single source of simulated time; all state mutates via the event loop."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now_ms = 0
        self._seq = 0
        self._heap: list[tuple[int, int, str, tuple]] = []
        self.nodes: set[str] = set()
        self.links: dict[tuple[str, str], _Link] = {}
        self._saved_profiles: dict[tuple[str, str], LinkProfile] | None = None
        self._results: list = []

    # --- topology ---

    def add_node(self, node_id: str):
        self.nodes.add(node_id)

    def add_link(self, a: str, b: str, profile: LinkProfile):
        if a not in self.nodes or b not in self.nodes:
            raise UnknownNode(f"link endpoints must exist: {a}, {b}")
        self.links[link_key(a, b)] = _Link(link_key(a, b), profile, self.seed)

    def link(self, a: str, b: str) -> _Link:
        try:
            return self.links[link_key(a, b)]
        except KeyError:
            raise UnknownLink(f"no link between {a} and {b}") from None

    def has_link(self, a: str, b: str) -> bool:
        return link_key(a, b) in self.links

    def link_profile(self, a: str, b: str) -> LinkProfile:
        return self.link(a, b).profile

    def set_link_profile(self, a: str, b: str, profile: LinkProfile):
        """Immediate profile change. In-flight frames keep their delivery
        times; queued frames serialize under the new profile."""
        link = self.link(a, b)
        was_up = link.profile.up
        link.profile = profile
        self._results.append(ProfileChange(self.now_ms, link.key, profile, was_up))

    def apply_schedule(self, schedule: LinkSchedule):
        if schedule.link_id[0] not in self.nodes or schedule.link_id[1] not in self.nodes:
            raise UnknownNode(str(schedule.link_id))
        key = link_key(*schedule.link_id)
        if key not in self.links:
            raise UnknownLink(str(schedule.link_id))
        for at_ms, profile in schedule.changes:
            self._push(at_ms, "profile", (key, profile))

    # --- events ---

    def _push(self, t: int, kind: str, data: tuple):
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, data))

    def transmit(self, src: str, dst: str, frame: bytes, at: int | None = None) -> Decision:
        if src not in self.nodes or dst not in self.nodes:
            raise UnknownNode(f"{src} or {dst} not in topology")
        link = self.link(src, dst)
        at = self.now_ms if at is None else at
        if at < self.now_ms:
            raise SimnetError(f"transmit at {at} is in the past (now={self.now_ms})")
        prof = link.profile
        if not prof.up:
            self._results.append(Drop(at, src, dst, DropReason.LINK_DOWN, frame))
            return Decision(scheduled=False, reason=DropReason.LINK_DOWN)
        if prof.loss_prob > 0.0 and link.rng.random() < prof.loss_prob:
            self._results.append(Drop(at, src, dst, DropReason.LOSS, frame))
            return Decision(scheduled=False, reason=DropReason.LOSS)
        self._push(at, "enqueue", (src, dst, frame))
        start = max(at, link.free_at[(src, dst)])
        ser = serialization_ms(frame, prof.bandwidth_bps)
        link.free_at[(src, dst)] = start + ser
        return Decision(scheduled=True, eta_ms=start + ser + prof.latency_ms)

    def advance(self, until: int) -> list:
        """Execute all events with time <= until in (time, seq) order; the
        clock advances to until. Returns deliveries, drops, and profile
        changes that occurred."""
        if until < self.now_ms:
            raise SimnetError(f"cannot advance backwards to {until} (now={self.now_ms})")
        while self._heap and self._heap[0][0] <= until:
            t, _seq, kind, data = heapq.heappop(self._heap)
            self.now_ms = max(self.now_ms, t)
            if kind == "enqueue":
                src, dst, frame = data
                link = self.link(src, dst)
                link.dirs[(src, dst)].queue.append(frame)
                self._service(link, (src, dst), t)
            elif kind == "ser_done":
                src, dst = data
                link = self.link(src, dst)
                link.dirs[(src, dst)].busy = False
                self._service(link, (src, dst), t)
            elif kind == "delivery":
                src, dst, frame = data
                link = self.link(src, dst)
                link.delivered.append((t, len(frame) * 8))
                self._results.append(Delivery(t, src, dst, frame))
            elif kind == "profile":
                key, profile = data
                self.set_link_profile(key[0], key[1], profile)
        self.now_ms = max(self.now_ms, until)
        out = self._results
        self._results = []
        return out

    def _service(self, link: _Link, direction: tuple[str, str], t: int):
        d = link.dirs[direction]
        while d.queue and not d.busy:
            prof = link.profile
            if not prof.up or prof.bandwidth_bps == 0:
                frame = d.queue.popleft()
                self._results.append(Drop(t, direction[0], direction[1], DropReason.LINK_DOWN, frame))
                continue
            frame = d.queue.popleft()
            ser = serialization_ms(frame, prof.bandwidth_bps)
            d.busy = True
            self._push(t + ser, "ser_done", direction)
            # latency of the profile active at serialization start
            self._push(t + ser + prof.latency_ms, "delivery", (direction[0], direction[1], frame))
            link.free_at[direction] = max(link.free_at[direction], t + ser)

    # --- measurement ---

    def measure_bandwidth(self, a: str, b: str, window_ms: int) -> float:
        if window_ms <= 0:
            raise ValueError("window_ms must be > 0")
        link = self.link(a, b)
        lo = self.now_ms - window_ms
        bits = sum(n for t, n in link.delivered if lo < t <= self.now_ms)
        return bits * 1000.0 / window_ms

    def delivered_bits(self, a: str, b: str, t1: int = 0, t2: int | None = None) -> int:
        link = self.link(a, b)
        t2 = self.now_ms if t2 is None else t2
        return sum(n for t, n in link.delivered if t1 <= t <= t2)

    # --- partitions ---

    def partition(self, groups: list[set[str]]):
        seen: set[str] = set()
        for g in groups:
            if g & seen:
                raise OverlappingGroups(f"node(s) {sorted(g & seen)} appear in multiple groups")
            seen |= g
        group_of = {}
        for i, g in enumerate(groups):
            for n in g:
                group_of[n] = i
        # nodes absent from every group form implicit singletons
        next_gid = len(groups)
        for n in sorted(self.nodes - seen):
            group_of[n] = next_gid
            next_gid += 1
        self._saved_profiles = {k: link.profile for k, link in self.links.items()}
        for key in sorted(self.links):
            a, b = key
            if group_of[a] != group_of[b]:
                prof = self.links[key].profile
                if prof.up:
                    self.set_link_profile(a, b, replace(prof, up=False))

    def heal(self):
        if self._saved_profiles is None:
            return
        for key, prof in sorted(self._saved_profiles.items()):
            if self.links[key].profile != prof:
                self.set_link_profile(key[0], key[1], prof)
        self._saved_profiles = None
