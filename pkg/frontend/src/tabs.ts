/** Tab controllers: all the dashboard behavior, DOM-free and testable.
 *
 * Controllers validate input, call the API, and dispatch results into the
 * store; rendering reads the store. Optimistic updates are forbidden: state
 * changes only when a server response (or streamed event) arrives.
 */

import { ApiClient, ApiError } from "./api.js";
import type { ExperimentResultDoc, LoadReportDoc } from "./api.js";
import { Store } from "./state.js";

/** Reference overlay for hop charts: 2*(ceil(log2 log2 N) + 2). */
export function hopBoundReference(nodes: number): number {
  if (nodes < 4) return 6;
  return 2 * (Math.ceil(Math.log2(Math.log2(nodes))) + 2);
}

async function guard<T>(store: Store, work: () => Promise<T>): Promise<T | null> {
  try {
    store.dispatch({ type: "clear-error" });
    return await work();
  } catch (err) {
    const message =
      err instanceof ApiError
        ? err.status === 409
          ? "run in progress"
          : err.message
        : String(err);
    store.dispatch({ type: "error", message });
    return null;
  }
}

export class InitializeTab {
  constructor(
    private readonly api: ApiClient,
    private readonly store: Store,
  ) {}

  /** Returns a validation error without touching the network, or null. */
  validate(nodes: number): string | null {
    if (!Number.isInteger(nodes) || nodes < 3) {
      return "the overlay needs at least the three introducer peers";
    }
    return null;
  }

  async submit(
    nodes: number,
    dist: string,
    keys: number | null,
    seed: number,
  ): Promise<boolean> {
    const invalid = this.validate(nodes);
    if (invalid !== null) {
      this.store.dispatch({ type: "error", message: invalid });
      return false;
    }
    const started = await guard(this.store, () =>
      this.api.initNetwork({ nodes, dist: { kind: dist, seed }, keys, seed }),
    );
    if (started === null) return false;
    const job = await guard(this.store, () =>
      this.api.waitJob(started.job_id),
    );
    if (job === null) return false;
    if (job.status === "failed") {
      this.store.dispatch({ type: "error", message: job.error ?? "init failed" });
      return false;
    }
    await this.refreshStatus();
    return true;
  }

  async reset(): Promise<void> {
    const ok = await guard(this.store, () => this.api.reset());
    if (ok !== null) {
      this.store.dispatch({ type: "reset" });
      await this.refreshStatus();
    }
  }

  async refreshStatus(): Promise<void> {
    const status = await guard(this.store, () => this.api.status());
    if (status !== null) this.store.dispatch({ type: "status", status });
  }
}

export class OperationsTab {
  constructor(
    private readonly api: ApiClient,
    private readonly store: Store,
  ) {}

  validate(key: number, origin: number): string | null {
    const status = this.store.get().status;
    if (status === null || status.node_count < 3) {
      return "initialize the overlay first";
    }
    if (!Number.isInteger(origin) || origin < 1 || origin > status.node_count) {
      return `origin must be a peer id between 1 and ${status.node_count}`;
    }
    if (!Number.isInteger(key) || key < 0) {
      return "keys are non-negative integers";
    }
    return null;
  }

  async run(op: string, key: number, origin: number): Promise<boolean> {
    const invalid = this.validate(key, origin);
    if (invalid !== null) {
      this.store.dispatch({ type: "error", message: invalid });
      return false;
    }
    const result = await guard(this.store, () => this.api.runOp(op, key, origin));
    if (result === null) return false;
    this.store.dispatch({ type: "op", result });
    await new InitializeTab(this.api, this.store).refreshStatus();
    return true;
  }
}

export class ExperimentsTab {
  constructor(
    private readonly api: ApiClient,
    private readonly store: Store,
  ) {}

  async run(
    op: string,
    trials: number,
    dist: string,
    seed: number,
  ): Promise<boolean> {
    const status = this.store.get().status;
    if (status === null || status.node_count < 3) {
      this.store.dispatch({ type: "error", message: "initialize the overlay first" });
      return false;
    }
    if (!Number.isInteger(trials) || trials < 1) {
      this.store.dispatch({ type: "error", message: "trials must be at least 1" });
      return false;
    }
    const started = await guard(this.store, () =>
      this.api.startExperiment({ op, trials, dist: { kind: dist, seed } }),
    );
    if (started === null) return false;
    const job = await guard(this.store, () => this.api.waitJob(started.id));
    if (job === null) return false;
    if (job.status !== "done") {
      this.store.dispatch({ type: "error", message: job.error ?? "experiment failed" });
      return false;
    }
    this.store.dispatch({
      type: "experiment",
      result: job.result as ExperimentResultDoc,
      jobId: started.id,
    });
    await this.refreshLoad();
    await new InitializeTab(this.api, this.store).refreshStatus();
    return true;
  }

  async churn(updates: number, dist: string, seed: number): Promise<boolean> {
    const started = await guard(this.store, () =>
      this.api.startChurn({ updates, dist: { kind: dist, seed } }),
    );
    if (started === null) return false;
    const job = await guard(this.store, () => this.api.waitJob(started.id));
    if (job === null || job.status !== "done") return false;
    this.store.dispatch({ type: "load", report: job.result as LoadReportDoc });
    await new InitializeTab(this.api, this.store).refreshStatus();
    return true;
  }

  async refreshLoad(): Promise<void> {
    const report = await guard(this.store, () => this.api.load());
    if (report !== null) this.store.dispatch({ type: "load", report });
  }

  csvUrl(): string | null {
    const id = this.store.get().experimentJobId;
    return id === null ? null : this.api.exportUrl(id, "csv");
  }
}
