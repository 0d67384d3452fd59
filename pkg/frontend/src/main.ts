import { ApiClient } from "./api.js";
import { ConsoleModel } from "./model.js";
import { buildPresets } from "./presets.js";
import { EventFeed } from "./stream.js";

const POLL_MS = 1000;

const api = new ApiClient();
const model = new ConsoleModel();
const feed = new EventFeed();

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function escapeHtml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function renderTopology(): void {
  const rows = model.topology.nodes
    .map((n) => {
      const posture = model.postureOf(n.id);
      const badge = posture === "normal" ? "" : ` <span class="badge ${posture}">${posture}</span>`;
      return `<tr class="${n.status}">
        <td>${escapeHtml(n.id)}${badge}</td>
        <td>${n.status}</td>
        <td>${n.battery_pct.toFixed(1)}%</td>
        <td>${n.cpu_free.toFixed(1)}</td>
        <td>${n.stages.map(escapeHtml).join("<br>")}</td>
      </tr>`;
    })
    .join("");
  el("nodes").innerHTML = rows;
  const links = model.topology.links
    .map(
      (l) =>
        `<tr class="${l.up ? "up" : "down"}">
          <td>${escapeHtml(l.a)} &harr; ${escapeHtml(l.b)}</td>
          <td>${l.up ? "up" : "down"}</td>
          <td>${(l.bandwidth_bps / 1000).toFixed(0)} kbps</td>
          <td>${(l.measured_bps / 1000).toFixed(1)} kbps</td>
          <td>${l.latency_ms} ms</td>
        </tr>`,
    )
    .join("");
  el("links").innerHTML = links;
  el("clock").textContent = `t = ${(model.topology.t / 1000).toFixed(1)} s${model.finished ? " (finished)" : ""}`;
}

function renderQueues(): void {
  el("queues").innerHTML = model.queues.queues
    .map(
      (q) =>
        `<tr><td>${escapeHtml(q.instance)}</td><td>${escapeHtml(q.node)}</td>
         <td class="${q.depth > 100 ? "hot" : ""}">${q.depth}</td></tr>`,
    )
    .join("");
}

function renderPlacements(): void {
  const parts: string[] = [];
  for (const [pipeline, assignments] of Object.entries(model.placements.placements)) {
    const items = Object.entries(assignments)
      .map(([inst, node]) => `<li>${escapeHtml(inst)} &rarr; ${escapeHtml(node)}</li>`)
      .join("");
    parts.push(`<h3>${escapeHtml(pipeline)}</h3><ul>${items}</ul>`);
  }
  el("placements").innerHTML = parts.join("") || "<p>no pipelines deployed</p>";
}

function renderAlerts(): void {
  el("alerts").innerHTML = model.alerts
    .slice()
    .reverse()
    .map((a) => `<li class="${a.kind}">[${(a.t / 1000).toFixed(1)}s] ${escapeHtml(a.text)}</li>`)
    .join("");
}

async function renderPresets(): Promise<void> {
  const scenario = await api.scenario();
  const container = el("presets");
  container.innerHTML = "";
  for (const preset of buildPresets(scenario)) {
    const button = document.createElement("button");
    button.textContent = preset.label;
    button.disabled = preset.disabled;
    button.onclick = async () => {
      button.disabled = true;
      try {
        await preset.run(api);
      } catch (err) {
        model.applyRecord({ t: model.topology.t, seq: 0, type: "saturated", pipeline: "-", stage: String(err) });
        renderAlerts();
      }
      void renderPresets();
    };
    container.appendChild(button);
  }
}

async function poll(): Promise<void> {
  try {
    const [topology, queues, placements] = await Promise.all([
      api.topology(),
      api.queues(),
      api.placements(),
    ]);
    model.applyTopology(topology);
    model.applyQueues(queues);
    model.applyPlacements(placements);
    renderTopology();
    renderQueues();
    renderPlacements();
  } catch {
    el("clock").textContent = "control plane unreachable";
  }
}

function wireAdvancedForm(): void {
  const form = el("advanced-form") as HTMLFormElement;
  form.onsubmit = async (ev) => {
    ev.preventDefault();
    const field = el("event-json") as HTMLTextAreaElement;
    try {
      await api.injectEvent(JSON.parse(field.value));
      field.value = "";
    } catch (err) {
      alert(String(err));
    }
  };
  el("advanced-toggle").onclick = () => {
    form.classList.toggle("hidden");
  };
}

feed.start({
  onRecord: (rec) => {
    model.applyRecord(rec);
    renderAlerts();
  },
  onEnd: () => {
    model.finished = true;
    renderTopology();
  },
});

wireAdvancedForm();
void renderPresets();
void poll();
setInterval(() => void poll(), POLL_MS);
