import { describe, expect, it } from "vitest";

import { ConsoleModel } from "../src/model.js";
import type { LogRecord, Topology } from "../src/types.js";

function topo(partial?: Partial<Topology>): Topology {
  return {
    t: 5000,
    nodes: [
      { id: "n1", status: "up", battery_pct: 90, cpu_free: 2, mem_free: 512, posture: "normal", stages: [] },
      { id: "n2", status: "up", battery_pct: 80, cpu_free: 4, mem_free: 512, posture: "normal", stages: [] },
    ],
    links: [],
    ...partial,
  };
}

function rec(fields: Partial<LogRecord> & { type: string }): LogRecord {
  return { t: 0, seq: 0, ...fields };
}

describe("ConsoleModel", () => {
  it("threat record flips the posture badge to lockdown", () => {
    const model = new ConsoleModel();
    model.applyTopology(topo());
    expect(model.postureOf("n1")).toBe("normal");
    model.applyRecord(rec({ type: "threat", node: "n1", t: 6000 }));
    expect(model.postureOf("n1")).toBe("lockdown");
    expect(model.postureOf("n2")).toBe("normal");
    expect(model.lockdownActive()).toBe(true);
  });

  it("snapshot posture is authoritative over stale log records", () => {
    const model = new ConsoleModel();
    model.applyRecord(rec({ type: "threat", node: "n1" }));
    const snapshot = topo();
    snapshot.nodes[0]!.posture = "normal"; // operator stood the node down
    model.applyTopology(snapshot);
    expect(model.postureOf("n1")).toBe("normal");
    expect(model.lockdownActive()).toBe(false);
  });

  it("collects noteworthy records as alerts, bounded", () => {
    const model = new ConsoleModel();
    for (let i = 0; i < 60; i++) {
      model.applyRecord(rec({ type: "node_down", node: `n${i}`, cause: "battery", t: i }));
    }
    expect(model.alerts.length).toBe(50);
    expect(model.alerts[0]!.text).toContain("n10");
    expect(model.alerts.at(-1)!.text).toContain("n59");
  });

  it("ignores chatty record types", () => {
    const model = new ConsoleModel();
    model.applyRecord(rec({ type: "frame_delivered", src: "a", dst: "b" }));
    model.applyRecord(rec({ type: "queue_sample", instance: "x", depth: 3 }));
    expect(model.alerts).toEqual([]);
  });

  it("tracks run completion", () => {
    const model = new ConsoleModel();
    expect(model.finished).toBe(false);
    model.applyRecord(rec({ type: "run_end" }));
    expect(model.finished).toBe(true);
  });

  it("reflects node status and queue depth from snapshots", () => {
    const model = new ConsoleModel();
    const snapshot = topo();
    snapshot.nodes[1]!.status = "down";
    model.applyTopology(snapshot);
    model.applyQueues({
      t: 5000,
      queues: [{ instance: "p1/work@n1", node: "n1", stage: "work", depth: 42 }],
    });
    expect(model.nodeStatus("n2")).toBe("down");
    expect(model.nodeStatus("ghost")).toBe("unknown");
    expect(model.queueDepth("p1/work@n1")).toBe(42);
    expect(model.queueDepth("missing")).toBeUndefined();
  });
});
