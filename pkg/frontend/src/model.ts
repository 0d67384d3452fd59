import type {
  LogRecord,
  Placements,
  Posture,
  Queues,
  Topology,
} from "./types.js";

export interface Alert {
  t: number;
  kind: string;
  text: string;
}

const ALERT_LIMIT = 50;

/** Log record types surfaced in the alert feed, with human wording. */
function describe(rec: LogRecord): string | null {
  switch (rec.type) {
    case "node_down":
      return `node ${rec.node} down (${rec.cause})`;
    case "node_up":
      return `node ${rec.node} restored`;
    case "scale_out":
      return `scaled out ${rec.pipeline}/${rec.stage} to ${rec.node}`;
    case "migration":
      return `migrated ${rec.pipeline}/${rec.stage} to ${rec.node}`;
    case "saturated":
      return `no capacity left for ${rec.pipeline}/${rec.stage}`;
    case "battery_evict":
      return `battery low on ${rec.node}: evicted ${rec.instance}`;
    case "posture":
      return `posture on ${rec.node}: ${rec.level} (${rec.cause})`;
    case "threat":
      return `threat detected on ${rec.node}`;
    case "infeasible":
      return `cannot place ${rec.pipeline}/${rec.stage}`;
    case "queue_high_watermark":
      return `queue high-watermark on ${rec.instance}`;
    case "partition":
      return "network partitioned";
    case "heal":
      return "partition healed";
    case "filter_enabled":
      return `bandwidth filter enabled on ${rec.a}-${rec.b}`;
    default:
      return null;
  }
}

/** Last-write-wins view model fed by polled snapshots and the SSE log. */
export class ConsoleModel {
  topology: Topology = { t: 0, nodes: [], links: [] };
  queues: Queues = { t: 0, queues: [] };
  placements: Placements = { t: 0, placements: {} };
  alerts: Alert[] = [];
  finished = false;
  private posturesFromLog = new Map<string, Posture>();

  applyTopology(snapshot: Topology): void {
    this.topology = snapshot;
    // snapshots are authoritative; the log only bridges between polls
    for (const node of snapshot.nodes) {
      this.posturesFromLog.set(node.id, node.posture);
    }
  }

  applyQueues(snapshot: Queues): void {
    this.queues = snapshot;
  }

  applyPlacements(snapshot: Placements): void {
    this.placements = snapshot;
  }

  applyRecord(rec: LogRecord): void {
    if (rec.type === "posture" || rec.type === "threat") {
      const level: Posture = rec.type === "threat" ? "lockdown" : (rec.level as Posture);
      this.posturesFromLog.set(String(rec.node), level);
    }
    if (rec.type === "run_end") {
      this.finished = true;
    }
    const text = describe(rec);
    if (text !== null) {
      this.alerts.push({ t: rec.t, kind: rec.type, text });
      if (this.alerts.length > ALERT_LIMIT) {
        this.alerts.splice(0, this.alerts.length - ALERT_LIMIT);
      }
    }
  }

  /** Posture badge for a node: freshest of snapshot and log. */
  postureOf(nodeId: string): Posture {
    return this.posturesFromLog.get(nodeId) ?? "normal";
  }

  lockdownActive(): boolean {
    return [...this.posturesFromLog.values()].some((p) => p === "lockdown");
  }

  nodeStatus(nodeId: string): "up" | "down" | "unknown" {
    const node = this.topology.nodes.find((n) => n.id === nodeId);
    return node ? node.status : "unknown";
  }

  queueDepth(instance: string): number | undefined {
    return this.queues.queues.find((q) => q.instance === instance)?.depth;
  }
}
