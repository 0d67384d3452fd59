import json

import pytest

from edgetb.distrib import Reliability
from edgetb.scenario import (
    ParseError,
    ValidationError,
    load_scenario,
)


def minimal():
    return {
        "seed": 7,
        "duration_ms": 1000,
        "nodes": [{"id": "n1"}, {"id": "n2"}],
        "links": [{"a": "n1", "b": "n2", "bandwidth_bps": 100_000, "latency_ms": 20}],
    }


def test_minimal_scenario_loads():
    sc = load_scenario(minimal())
    assert sc.seed == 7 and sc.duration_ms == 1000
    assert sc.node_ids() == ["n1", "n2"]
    assert sc.links[0]["profile"].bandwidth_bps == 100_000


def test_loads_from_json_string_and_bytes():
    text = json.dumps(minimal())
    assert load_scenario(text).seed == 7
    assert load_scenario(text.encode()).seed == 7


def test_bad_json_is_parse_error():
    with pytest.raises(ParseError):
        load_scenario(b"{nope")


def test_duplicate_node_id():
    doc = minimal()
    doc["nodes"].append({"id": "n1"})
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/nodes/2/id"


def test_link_unknown_endpoint():
    doc = minimal()
    doc["links"][0]["b"] = "ghost"
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/links/0/b"


def test_schedule_must_increase():
    doc = minimal()
    doc["links"][0]["schedule"] = [{"at_ms": 500}, {"at_ms": 500}]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/links/0/schedule/1"


def test_event_unknown_node_path():
    doc = minimal()
    doc["events"] = [{"at_ms": 100, "type": "node_fail", "node": "ghost"}]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/events/0/node"


def test_events_must_be_sorted():
    doc = minimal()
    doc["events"] = [
        {"at_ms": 200, "type": "node_fail", "node": "n1"},
        {"at_ms": 100, "type": "node_restore", "node": "n1"},
    ]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/events/1"


def test_unknown_event_type():
    doc = minimal()
    doc["events"] = [{"at_ms": 0, "type": "meteor_strike"}]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/events/0/type"


def test_pipeline_chain_checked():
    doc = minimal()
    doc["pipelines"] = [{
        "id": "p", "source_topic": "in", "sink_topic": "out",
        "stages": [
            {"name": "s1", "cpu_demand": 1, "per_item_cost": 0.5,
             "input_topic": "in", "output_topic": "mid"},
            {"name": "s2", "cpu_demand": 1, "per_item_cost": 0.5,
             "input_topic": "WRONG", "output_topic": "out"},
        ],
    }]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/pipelines/0"


def test_qos_parsed():
    doc = minimal()
    doc["qos"] = {"alerts": {"reliability": "reliable", "history_depth": 8,
                             "deadline_ms": 2000, "bundle_eligible": True,
                             "ttl_ms": 60000}}
    sc = load_scenario(doc)
    q = sc.qos["alerts"]
    assert q.reliability is Reliability.RELIABLE
    assert q.history_depth == 8 and q.bundle_eligible
    assert sc.ttl["alerts"] == 60000


def test_bad_qos_reliability():
    doc = minimal()
    doc["qos"] = {"t": {"reliability": "mostly"}}
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/qos/t"


def test_token_with_unknown_issuer():
    doc = minimal()
    doc["security"] = {
        "trust_roots": [{"key_id": "root", "public_key": "AA=="}],
        "tokens": [{"issuer": "other", "subject": "n1", "rights": ["publish:*"],
                    "expires_at": 10_000}],
    }
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/security/tokens/0/issuer"


def test_partition_groups_checked():
    doc = minimal()
    doc["events"] = [{"at_ms": 0, "type": "partition",
                      "groups": [["n1"], ["n1", "n2"]]}]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert "multiple groups" in exc.value.reason


def test_source_validation():
    doc = minimal()
    doc["sources"] = [{"topic": "t", "node": "n1", "period_ms": 0}]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/sources/0/period_ms"


def test_waypoints_must_increase():
    doc = minimal()
    doc["nodes"][0]["waypoints"] = [[0, [0, 0]], [0, [1, 1]]]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert exc.value.path == "/nodes/0/waypoints"
