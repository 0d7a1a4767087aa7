/** Typed client for the nbdtsim control service. Every number the dashboard
 * shows comes from one of these responses; the UI computes nothing itself. */

export interface SystemStatus {
  node_count: number;
  key_count: number;
  key_range: [number, number];
  marked_count: number;
  message_counter: number;
}

export interface OpResult {
  outcome: string;
  hops: number;
  holder: number;
  key: number;
  log_lines: string[];
}

export interface ExperimentResultDoc {
  report: "experiment";
  op: string;
  per_trial_hops: number[];
  mean_hops: number;
  max_hops: number;
  percentile_hops: Record<string, number>;
  message_counts: Record<string, number>;
  wall_time: number;
  histogram: Record<string, number>;
  trials: Array<[number, string, number, number, number, number, string]>;
}

export interface LoadReportDoc {
  report: "load";
  counts: number[];
  levels: number[];
  marked: boolean[];
  min: number;
  max: number;
  mean: number;
  stddev: number;
  key_count: number;
}

export interface JobStatus {
  id: string;
  kind: string;
  status: "running" | "done" | "failed";
  result?: ExperimentResultDoc | LoadReportDoc | SystemStatus;
  error?: string;
}

export interface DistRequest {
  kind: string;
  seed: number;
  params?: Record<string, number>;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(
    readonly base: string = "",
    private readonly fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private url(path: string): string {
    return this.base + path;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => asJson<T>(r));
  }

  status(): Promise<SystemStatus> {
    return this.fetchFn(this.url("/network/status")).then((r) =>
      asJson<SystemStatus>(r),
    );
  }

  initNetwork(req: {
    nodes: number;
    dist?: DistRequest;
    keys?: number | null;
    seed?: number;
  }): Promise<{ job_id: string }> {
    return this.post("/network", req);
  }

  reset(): Promise<{ ok: boolean }> {
    return this.post("/network/reset", {});
  }

  runOp(op: string, key: number, origin: number): Promise<OpResult> {
    return this.post("/ops", { op, key, origin });
  }

  startExperiment(req: {
    op: string;
    trials: number;
    dist: DistRequest;
    origin?: number | null;
  }): Promise<{ id: string }> {
    return this.post("/experiments", req);
  }

  startChurn(req: { updates: number; dist: DistRequest }): Promise<{ id: string }> {
    return this.post("/churn", req);
  }

  job(id: string): Promise<JobStatus> {
    return this.fetchFn(this.url(`/experiments/${id}`)).then((r) =>
      asJson<JobStatus>(r),
    );
  }

  load(): Promise<LoadReportDoc> {
    return this.fetchFn(this.url("/load")).then((r) =>
      asJson<LoadReportDoc>(r),
    );
  }

  exportUrl(jobId: string, format: "csv" | "json"): string {
    return this.url(`/experiments/${jobId}/export?format=${format}`);
  }

  /** Poll a job until it leaves the running state. */
  async waitJob(
    id: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<JobStatus> {
    const interval = opts.intervalMs ?? 150;
    const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
    for (;;) {
      const doc = await this.job(id);
      if (doc.status !== "running") return doc;
      if (Date.now() > deadline) throw new Error(`job ${id} timed out`);
      await new Promise((r) => setTimeout(r, interval));
    }
  }
}
