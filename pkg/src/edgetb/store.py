"""Multi-master replicated key-value store with version vectors.

Each node owns a Replica. Writes are always local; replicas reconcile via
periodic anti-entropy digest exchange. Conflicting concurrent writes resolve
last-writer-wins with a (wall, writer id) tiebreak, so merge is commutative,
associative, and idempotent.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

VersionVector = dict[str, int]

TOMBSTONE_TTL_MS = 60_000
ANTI_ENTROPY_PERIOD_MS = 2_000


class KeyMismatch(Exception):
    pass


def vv_dominates(a: VersionVector, b: VersionVector) -> bool:
    """True iff a[n] >= b[n] for every n (absent entries are 0)."""
    return all(a.get(n, 0) >= c for n, c in b.items())


def vv_concurrent(a: VersionVector, b: VersionVector) -> bool:
    return not vv_dominates(a, b) and not vv_dominates(b, a)


def vv_max(a: VersionVector, b: VersionVector) -> VersionVector:
    out = dict(a)
    for n, c in b.items():
        if c > out.get(n, 0):
            out[n] = c
    return out


@dataclass
class Entry:
    key: str
    value: bytes | None  # None is a tombstone
    vv: VersionVector
    wall: int
    writer: str

    def same_version(self, other: "Entry") -> bool:
        return self.vv == other.vv and self.wall == other.wall and self.writer == other.writer


def _tiebreak(e: Entry):
    # full (wall, writer) order per the conflict rule; value as a final
    # deterministic fallback so exact ties stay commutative
    return (e.wall, e.writer, b"\x00" if e.value is None else b"\x01" + e.value)


def merge(local: Entry, remote: Entry) -> Entry:
    if local.key != remote.key:
        raise KeyMismatch(f"{local.key!r} vs {remote.key!r}")
    combined = vv_max(local.vv, remote.vv)
    remote_dom = vv_dominates(remote.vv, local.vv)
    local_dom = vv_dominates(local.vv, remote.vv)
    if remote_dom and not local_dom:
        winner = remote
    elif local_dom and not remote_dom:
        winner = local
    else:
        winner = max(local, remote, key=_tiebreak)
    return Entry(key=local.key, value=winner.value, vv=combined, wall=winner.wall, writer=winner.writer)


class Replica:
    def __init__(self, node_id: str, tombstone_ttl_ms: int = TOMBSTONE_TTL_MS):
        self.node_id = node_id
        self.data: dict[str, Entry] = {}
        self.tombstone_ttl_ms = tombstone_ttl_ms

    def put(self, key: str, value: bytes | None, now: int) -> Entry:
        prev = self.data.get(key)
        vv = dict(prev.vv) if prev else {}
        vv[self.node_id] = vv.get(self.node_id, 0) + 1
        entry = Entry(key=key, value=value, vv=vv, wall=now, writer=self.node_id)
        self.data[key] = entry
        return entry

    def delete(self, key: str, now: int) -> Entry:
        return self.put(key, None, now)

    def get(self, key: str) -> bytes | None:
        entry = self.data.get(key)
        if entry is None or entry.value is None:
            return None
        return entry.value

    def apply_remote(self, remote: Entry):
        local = self.data.get(remote.key)
        if local is None:
            self.data[remote.key] = Entry(remote.key, remote.value, dict(remote.vv), remote.wall, remote.writer)
        else:
            self.data[remote.key] = merge(local, remote)

    def digest(self) -> dict[str, VersionVector]:
        return {k: dict(e.vv) for k, e in self.data.items()}

    def entries_missing_from(self, peer_digest: dict[str, VersionVector]) -> list[Entry]:
        """Entries whose vv is not dominated by the peer's digest for that key."""
        out = []
        for key in sorted(self.data):
            entry = self.data[key]
            peer_vv = peer_digest.get(key)
            if peer_vv is None or not vv_dominates(peer_vv, entry.vv):
                out.append(entry)
        return out

    def gc_tombstones(self, now: int):
        for key in [k for k, e in self.data.items()
                    if e.value is None and now - e.wall >= self.tombstone_ttl_ms]:
            del self.data[key]

    def content_hash(self) -> str:
        items = []
        for key in sorted(self.data):
            e = self.data[key]
            items.append({
                "k": key,
                "v": e.value.hex() if e.value is not None else None,
                "vv": sorted(e.vv.items()),
            })
        return hashlib.sha256(json.dumps(items, sort_keys=True).encode()).hexdigest()


def anti_entropy_round(a: Replica, b: Replica, link_up: bool = True) -> int:
    """One pairwise digest exchange; both sides converge on the merged state.

    Returns the number of keys that changed hands. Idempotent: an immediate
    second round syncs zero keys. With the link down the round is skipped.
    """
    if not link_up:
        return 0
    a_digest = a.digest()
    b_digest = b.digest()
    from_a = a.entries_missing_from(b_digest)
    from_b = b.entries_missing_from(a_digest)
    for entry in from_a:
        b.apply_remote(entry)
    for entry in from_b:
        a.apply_remote(entry)
    return len({e.key for e in from_a} | {e.key for e in from_b})
