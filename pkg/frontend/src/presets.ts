import type { ApiClient } from "./api.js";
import type { ScenarioInfo } from "./types.js";

export interface Preset {
  label: string;
  disabled: boolean;
  run: (api: ApiClient) => Promise<unknown>;
}

/** Preset-first controls: one button per declared pipeline, plus the
 * common drills. Free-form event injection stays behind the advanced
 * form in the page itself. */
export function buildPresets(scenario: ScenarioInfo): Preset[] {
  const presets: Preset[] = scenario.pipelines.map((p) => ({
    label: p.deployed ? `${p.id} (deployed)` : `deploy ${p.id}`,
    disabled: p.deployed || scenario.finished,
    run: (api) => api.requestPipeline(p.id),
  }));
  const firstNode = scenario.nodes[0];
  if (firstNode !== undefined) {
    presets.push({
      label: `fail ${firstNode}`,
      disabled: scenario.finished,
      run: (api) => api.injectEvent({ type: "node_fail", node: firstNode }),
    });
    presets.push({
      label: `threat on ${firstNode}`,
      disabled: scenario.finished,
      run: (api) => api.injectEvent({ type: "threat", node: firstNode }),
    });
  }
  presets.push({
    label: "stand down (posture normal)",
    disabled: scenario.finished,
    run: (api) => api.setPosture("normal"),
  });
  return presets;
}
