/** Dashboard view state and its reducer.
 *
 * The reducer is the only place state changes; rendered counts always come
 * from the latest status snapshot delivered by the server (never computed
 * client-side), and the message pane is a bounded ring fed by the event
 * stream in arrival order.
 */

import type {
  ExperimentResultDoc,
  LoadReportDoc,
  OpResult,
  SystemStatus,
} from "./api.js";

/** Log pane capacity; oldest lines fall off first. */
export const LOG_RING_CAPACITY = 500;

export type Tab = "initialize" | "operations" | "experiments" | "about";

export interface JobProgress {
  id: string | null;
  kind: string;
  status: "running" | "done" | "failed";
  phase: string;
  done: number;
  total: number;
  error?: string;
}

export interface ViewState {
  tab: Tab;
  status: SystemStatus | null;
  job: JobProgress | null;
  logLines: string[];
  droppedLogLines: number;
  lastOp: OpResult | null;
  experiment: ExperimentResultDoc | null;
  experimentJobId: string | null;
  loadReport: LoadReportDoc | null;
  error: string | null;
}

export type Action =
  | { type: "tab"; tab: Tab }
  | { type: "status"; status: SystemStatus }
  | { type: "job"; id: string; kind: string; status: JobProgress["status"]; error?: string }
  | { type: "progress"; phase: string; done: number; total: number }
  | { type: "log"; line: string }
  | { type: "op"; result: OpResult }
  | { type: "experiment"; result: ExperimentResultDoc; jobId: string }
  | { type: "load"; report: LoadReportDoc }
  | { type: "error"; message: string }
  | { type: "clear-error" }
  | { type: "reset" };

export function initialState(): ViewState {
  return {
    tab: "initialize",
    status: null,
    job: null,
    logLines: [],
    droppedLogLines: 0,
    lastOp: null,
    experiment: null,
    experimentJobId: null,
    loadReport: null,
    error: null,
  };
}

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.type) {
    case "tab":
      return { ...state, tab: action.tab };
    case "status":
      return { ...state, status: action.status };
    case "job": {
      const prev = state.job;
      const keepCounters = prev !== null && prev.id === action.id;
      return {
        ...state,
        job: {
          id: action.id,
          kind: action.kind,
          status: action.status,
          phase: keepCounters ? prev.phase : "",
          done: keepCounters ? prev.done : 0,
          total: keepCounters ? prev.total : 0,
          error: action.error,
        },
      };
    }
    case "progress": {
      const job = state.job ?? {
        id: null,
        kind: "",
        status: "running" as const,
        phase: "",
        done: 0,
        total: 0,
      };
      return {
        ...state,
        job: { ...job, phase: action.phase, done: action.done, total: action.total },
      };
    }
    case "log": {
      const lines = state.logLines.concat(action.line);
      const overflow = lines.length - LOG_RING_CAPACITY;
      return {
        ...state,
        logLines: overflow > 0 ? lines.slice(overflow) : lines,
        droppedLogLines: state.droppedLogLines + Math.max(overflow, 0),
      };
    }
    case "op":
      return { ...state, lastOp: action.result };
    case "experiment":
      return {
        ...state,
        experiment: action.result,
        experimentJobId: action.jobId,
      };
    case "load":
      return { ...state, loadReport: action.report };
    case "error":
      return { ...state, error: action.message };
    case "clear-error":
      return { ...state, error: null };
    case "reset":
      return { ...initialState(), tab: state.tab, status: state.status };
  }
}

export type Listener = (state: ViewState) => void;

/** Tiny store: dispatch reduces, listeners re-render. */
export class Store {
  private state: ViewState;
  private listeners: Listener[] = [];

  constructor(start: ViewState = initialState()) {
    this.state = start;
  }

  get(): ViewState {
    return this.state;
  }

  dispatch(action: Action): ViewState {
    this.state = reduce(this.state, action);
    for (const l of this.listeners) l(this.state);
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}

/** Percent for the progress bar; null while the total is unknown. */
export function progressPercent(job: JobProgress | null): number | null {
  if (job === null || job.total <= 0) return null;
  return Math.min(100, Math.round((100 * job.done) / job.total));
}
