/** DOM wiring: boot the store, subscribe to the event stream, render. */

import { ApiClient } from "./api.js";
import {
  computeBarLayout,
  computeLineLayout,
  downloadCanvasPng,
  drawBars,
  drawLine,
} from "./charts.js";
import { openEventStream } from "./sse.js";
import { progressPercent, Store, type Tab, type ViewState } from "./state.js";
import {
  ExperimentsTab,
  hopBoundReference,
  InitializeTab,
  OperationsTab,
} from "./tabs.js";

const POLL_INTERVAL_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function num(id: string): number {
  return Number((el<HTMLInputElement>(id)).value);
}

function renderStatus(state: ViewState): void {
  const s = state.status;
  el("status-nodes").textContent = s ? String(s.node_count) : "-";
  el("status-keys").textContent = s ? String(s.key_count) : "-";
  el("status-range").textContent =
    s && s.key_range[1] >= 0 ? `[${s.key_range[0]}, ${s.key_range[1]}]` : "-";
  el("status-marked").textContent = s ? String(s.marked_count) : "-";
  el("status-messages").textContent = s ? String(s.message_counter) : "-";
}

function renderProgress(state: ViewState): void {
  const pct = progressPercent(state.job);
  const bar = el<HTMLProgressElement>("init-progress");
  const label = el("init-progress-label");
  if (state.job === null) {
    bar.value = 0;
    label.textContent = "";
    return;
  }
  bar.value = pct ?? 0;
  const phase = state.job.phase || state.job.kind;
  label.textContent =
    state.job.status === "running"
      ? `${phase}: ${state.job.done}/${state.job.total}`
      : `${state.job.kind} ${state.job.status}`;
}

function renderLog(state: ViewState): void {
  const pane = el("op-log");
  pane.textContent = state.logLines.join("\n");
  pane.scrollTop = pane.scrollHeight;
  el("op-log-dropped").textContent =
    state.droppedLogLines > 0
      ? `(${state.droppedLogLines} older lines dropped)`
      : "";
}

function renderOpResult(state: ViewState): void {
  const box = el("op-result");
  if (state.lastOp === null) {
    box.textContent = "";
    return;
  }
  const r = state.lastOp;
  box.textContent =
    `key ${r.key}: ${r.outcome} at peer ${r.holder} in ${r.hops} hop(s)`;
}

function renderCharts(state: ViewState): void {
  const hops = el<HTMLCanvasElement>("chart-hops");
  if (state.experiment !== null) {
    const bound =
      state.status !== null ? hopBoundReference(state.status.node_count) : null;
    drawLine(hops, computeLineLayout(
      state.experiment.per_trial_hops, bound, hops.width, hops.height));
    el("experiment-summary").textContent =
      `${state.experiment.op}: mean ${state.experiment.mean_hops.toFixed(2)} ` +
      `hops, max ${state.experiment.max_hops}, ` +
      `p99 ${state.experiment.percentile_hops["p99"]}`;
  }
  const load = el<HTMLCanvasElement>("chart-load");
  if (state.loadReport !== null) {
    const layout = computeBarLayout(
      state.loadReport.counts, load.width, load.height);
    drawBars(load, layout);
    el("load-summary").textContent =
      `${state.loadReport.key_count} keys over ` +
      `${state.loadReport.counts.length} peers ` +
      `(min ${state.loadReport.min}, max ${state.loadReport.max}, ` +
      `mean ${state.loadReport.mean.toFixed(2)})`;
  }
}

function renderError(state: ViewState): void {
  el("error-box").textContent = state.error ?? "";
}

function renderTabs(state: ViewState): void {
  for (const tab of ["initialize", "operations", "experiments", "about"]) {
    el(`tab-${tab}`).classList.toggle("active", state.tab === tab);
    el(`panel-${tab}`).style.display = state.tab === tab ? "block" : "none";
  }
}

function render(state: ViewState): void {
  renderTabs(state);
  renderStatus(state);
  renderProgress(state);
  renderLog(state);
  renderOpResult(state);
  renderCharts(state);
  renderError(state);
}

function boot(): void {
  const api = new ApiClient("");
  const store = new Store();
  const init = new InitializeTab(api, store);
  const ops = new OperationsTab(api, store);
  const experiments = new ExperimentsTab(api, store);

  store.subscribe(render);

  for (const tab of ["initialize", "operations", "experiments", "about"]) {
    el(`tab-${tab}`).addEventListener("click", () =>
      store.dispatch({ type: "tab", tab: tab as Tab }),
    );
  }

  el("init-run").addEventListener("click", () => {
    const keysRaw = el<HTMLInputElement>("init-keys").value.trim();
    void init.submit(
      num("init-nodes"),
      el<HTMLSelectElement>("init-dist").value,
      keysRaw === "" ? null : Number(keysRaw),
      num("init-seed"),
    );
  });
  el("init-reset").addEventListener("click", () => void init.reset());

  el("op-run").addEventListener("click", () => {
    void ops.run(
      el<HTMLSelectElement>("op-kind").value,
      num("op-key"),
      num("op-origin"),
    );
  });

  el("exp-run").addEventListener("click", () => {
    void experiments.run(
      el<HTMLSelectElement>("exp-op").value,
      num("exp-trials"),
      el<HTMLSelectElement>("exp-dist").value,
      num("exp-seed"),
    );
  });
  el("exp-churn").addEventListener("click", () => {
    void experiments.churn(
      num("churn-updates"),
      el<HTMLSelectElement>("exp-dist").value,
      num("exp-seed"),
    );
  });
  el("exp-download-png").addEventListener("click", () =>
    downloadCanvasPng(el<HTMLCanvasElement>("chart-hops"), "hops.png"),
  );
  el("exp-download-csv").addEventListener("click", () => {
    const url = experiments.csvUrl();
    if (url !== null) window.open(url, "_blank");
  });

  openEventStream(
    "",
    (ev) => {
      if (ev.kind === "log") store.dispatch({ type: "log", line: ev.data });
      else if (ev.kind === "progress") {
        const p = JSON.parse(ev.data) as { phase: string; done: number; total: number };
        store.dispatch({ type: "progress", ...p });
      } else if (ev.kind === "job") {
        const j = JSON.parse(ev.data) as {
          id: string; status: "running" | "done" | "failed"; kind: string;
        };
        store.dispatch({ type: "job", ...j });
      }
    },
    (err) => store.dispatch({ type: "error", message: String(err) }),
  );

  void init.refreshStatus();
  setInterval(() => void init.refreshStatus(), POLL_INTERVAL_MS);
}

boot();
