"""Post-hoc metrics over a JSON-lines event log.

The reducer is pure: same log in, same numbers out. It never touches live
engine state, so metrics can be recomputed from any archived run.
"""

from __future__ import annotations

import json
from collections import defaultdict


def percentile(values: list[int | float], p: float) -> float:
    """Nearest-rank percentile over a non-empty sorted copy."""
    if not values:
        raise ValueError("percentile of empty list")
    ordered = sorted(values)
    if len(ordered) == 1:
        return float(ordered[0])
    rank = p / 100.0 * (len(ordered) - 1)
    lo = int(rank)
    hi = min(lo + 1, len(ordered) - 1)
    frac = rank - lo
    return ordered[lo] + (ordered[hi] - ordered[lo]) * frac


def parse_log(text: str) -> list[dict]:
    records = []
    for i, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {i + 1}: {exc}") from exc
    return records


def reduce_log(records: list[dict]) -> dict:
    links_delivered: dict[str, int] = defaultdict(int)
    links_dropped: dict[str, int] = defaultdict(int)
    drop_reasons: dict[str, int] = defaultdict(int)
    queue_depths: dict[str, list[int]] = defaultdict(list)
    latencies: dict[str, list[int]] = defaultdict(list)
    counts: dict[str, int] = defaultdict(int)
    posture_denied: dict[str, int] = defaultdict(int)
    duration = 0

    for rec in records:
        rtype = rec["type"]
        counts[rtype] += 1
        duration = max(duration, rec.get("t", 0))
        if rtype == "frame_delivered":
            key = "-".join(sorted((rec["src"], rec["dst"])))
            links_delivered[key] += rec.get("bytes", 0)
        elif rtype == "frame_drop":
            key = "-".join(sorted((rec["src"], rec["dst"])))
            links_dropped[key] += rec.get("bytes", 0)
            drop_reasons[rec.get("reason", "unknown")] += 1
        elif rtype == "queue_sample":
            queue_depths[rec["instance"]].append(rec["depth"])
        elif rtype == "pipeline_output":
            latencies[rec["pipeline"]].append(rec["latency_ms"])
        elif rtype == "posture_denied":
            posture_denied[rec["node"]] += 1

    queues = {
        inst: {
            "samples": len(depths),
            "max_depth": max(depths),
            "mean_depth": round(sum(depths) / len(depths), 3),
        }
        for inst, depths in sorted(queue_depths.items())
    }
    pipelines = {
        pid: {
            "outputs": len(vals),
            "latency_p50_ms": round(percentile(vals, 50), 1),
            "latency_p90_ms": round(percentile(vals, 90), 1),
            "latency_p99_ms": round(percentile(vals, 99), 1),
        }
        for pid, vals in sorted(latencies.items())
    }
    return {
        "duration_ms": duration,
        "events": dict(sorted(counts.items())),
        "links": {
            key: {"delivered_bytes": links_delivered.get(key, 0),
                  "dropped_bytes": links_dropped.get(key, 0)}
            for key in sorted(set(links_delivered) | set(links_dropped))
        },
        "drop_reasons": dict(sorted(drop_reasons.items())),
        "queues": queues,
        "pipelines": pipelines,
        "migrations": counts.get("migration", 0),
        "scale_outs": counts.get("scale_out", 0),
        "bundles": {
            "created": counts.get("bundle_created", 0),
            "forwarded": counts.get("bundle_forwarded", 0),
            "expired": counts.get("bundle_expired", 0),
        },
        "posture_denied": dict(sorted(posture_denied.items())),
    }


def metrics_from_file(path: str) -> dict:
    with open(path) as fh:
        return reduce_log(parse_log(fh.read()))
