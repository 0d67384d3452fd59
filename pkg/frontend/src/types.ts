export type Posture = "normal" | "elevated" | "lockdown";

export interface NodeView {
  id: string;
  status: "up" | "down";
  battery_pct: number;
  cpu_free: number;
  mem_free: number;
  posture: Posture;
  stages: string[];
}

export interface LinkView {
  a: string;
  b: string;
  up: boolean;
  bandwidth_bps: number;
  latency_ms: number;
  loss_prob: number;
  measured_bps: number;
}

export interface Topology {
  t: number;
  nodes: NodeView[];
  links: LinkView[];
}

export interface QueueRow {
  instance: string;
  node: string;
  stage: string;
  depth: number;
}

export interface Queues {
  t: number;
  queues: QueueRow[];
}

export interface Placements {
  t: number;
  placements: Record<string, Record<string, string>>;
}

export interface PipelineInfo {
  id: string;
  redundant: boolean;
  autostart: boolean;
  stages: string[];
  deployed: boolean;
}

export interface ScenarioInfo {
  seed: number;
  duration_ms: number;
  nodes: string[];
  pipelines: PipelineInfo[];
  finished: boolean;
}

/** One line of the engine's event log, as streamed over SSE. */
export interface LogRecord {
  t: number;
  seq: number;
  type: string;
  [field: string]: unknown;
}

export interface InjectableEvent {
  type: string;
  [field: string]: unknown;
}
