"""System bootstrap, batched operations, statistics, and report export.

A SystemHandle owns one kernel + peer registry. Initialization creates the
three introducers directly, admits every further peer through the real join
handshake (the kernel's gate keeps joins sequential), then loads distinct
keys drawn from a distribution, inserting each one from a seeded random
origin. Experiments and churn reuse the same message path and aggregate hop
statistics and per-peer load.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import accel, workloads
from .geometry import KeySpace, build_tables, responsible_node
from .kernel import (CLIENT, FaultModel, KeyPayload, Message, MessageType,
                     NetworkState, run_until_quiescent)
from .protocol import (INTRODUCERS, NodeState, OUT_OF_RANGE, SimConfig,
                       SimContext, handle, out_of_range_policy)

OP_TYPES = {"search": MessageType.SEARCH, "insert": MessageType.INSERT,
            "delete": MessageType.DELETE}

ProgressFn = Callable[[str, int, int], None]


class OutOfRangeError(Exception):
    """Auto-extension hit the configured node ceiling before covering a key."""

    def __init__(self, needed: int, added: int, max_nodes: int):
        self.needed = needed
        self.added = added
        self.max_nodes = max_nodes
        super().__init__(
            f"key needs {needed} more peers but only {added} could join "
            f"(max_nodes={max_nodes}); joins are not rolled back")


@dataclass
class SystemStatus:
    node_count: int
    key_count: int
    key_range: tuple[int, int]
    marked_count: int
    message_counter: int

    def to_doc(self) -> dict:
        return {"node_count": self.node_count, "key_count": self.key_count,
                "key_range": list(self.key_range),
                "marked_count": self.marked_count,
                "message_counter": self.message_counter}


@dataclass(frozen=True)
class ExperimentConfig:
    op: str
    dist: workloads.DistributionSpec
    trials: int = 500
    origin: Optional[int] = None  # fixed origin id, or None for random-node

    def __post_init__(self):
        if self.op not in OP_TYPES:
            raise ValueError(f"op must be one of {sorted(OP_TYPES)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class TrialRecord:
    trial: int
    op: str
    key: int
    origin: int
    holder: int
    hops: int
    outcome: str


@dataclass
class ExperimentResult:
    op: str
    records: list[TrialRecord]
    per_trial_hops: list[int]
    mean_hops: float
    max_hops: int
    percentile_hops: dict
    message_counts: dict
    wall_time: float
    histogram: dict

    def to_doc(self) -> dict:
        return {
            "report": "experiment",
            "op": self.op,
            "per_trial_hops": self.per_trial_hops,
            "mean_hops": self.mean_hops,
            "max_hops": self.max_hops,
            "percentile_hops": self.percentile_hops,
            "message_counts": self.message_counts,
            "wall_time": self.wall_time,
            "histogram": self.histogram,
            "trials": [[r.trial, r.op, r.key, r.origin, r.holder, r.hops,
                        r.outcome] for r in self.records],
        }


@dataclass
class LoadReport:
    counts: list[int]
    levels: list[int]
    marked: list[bool]
    min: int
    max: int
    mean: float
    stddev: float

    @property
    def key_count(self) -> int:
        return sum(self.counts)

    def to_doc(self) -> dict:
        return {"report": "load", "counts": self.counts, "levels": self.levels,
                "marked": self.marked, "min": self.min, "max": self.max,
                "mean": self.mean, "stddev": self.stddev,
                "key_count": self.key_count}


class SystemHandle:
    """Single-owner facade over one simulated overlay."""

    def __init__(self, seed: int = 0, config: Optional[SimConfig] = None,
                 w: int = 20, b: int = 0, log_path=None,
                 fault_model: Optional[FaultModel] = None,
                 log_sink=None, progress: Optional[ProgressFn] = None):
        self.seed = seed
        self.config = config or SimConfig()
        self._ks_args = (w, b)
        self._net_args = dict(log_path=log_path, fault_model=fault_model,
                              log_sink=log_sink)
        self.progress = progress
        self._op_token = 0
        self.reset()

    # -- lifecycle -----------------------------------------------------------

    def reset(self) -> None:
        """Drop all peers, buffered traffic, counters, and logs."""
        w, b = self._ks_args
        self.ks = KeySpace(w=w, b=b, n_nodes=0)
        self.ctx = SimContext(self.ks, self.config)
        self.net = NetworkState(**self._net_args)
        self._op_token = 0

    def _dispatch(self, msg: Message):
        node = self.ctx.nodes.get(msg.dst)
        if node is None:
            if msg.type != MessageType.JOIN_REPLY:
                raise LookupError(f"message for unknown peer {msg.dst}")
            node = NodeState(id=msg.dst)
            self.ctx.nodes[msg.dst] = node
        return handle(node, msg, self.ctx)

    def run(self, budget: int = 10_000_000, collect=None):
        return run_until_quiescent(self.net, self._dispatch, budget, collect)

    def bootstrap(self) -> None:
        """Create the three introducer peers directly; they never fail."""
        if self.ctx.nodes:
            raise RuntimeError("system already initialized; reset first")
        for i in INTRODUCERS:
            node = NodeState(id=i, live=True, known_total=len(INTRODUCERS),
                             tables=build_tables(i, len(INTRODUCERS)))
            node.next_node = i + 1 if i < len(INTRODUCERS) else None
            self.ctx.nodes[i] = node
        self.ks.n_nodes = len(INTRODUCERS)

    def join_one(self, introducer: int = 1) -> None:
        """Admit one peer through the join handshake, to quiescence."""
        before = self.ks.n_nodes
        self.net.send_message(Message(CLIENT, introducer, MessageType.JOIN, None))
        self.run()
        if self.ks.n_nodes != before + 1:
            raise RuntimeError("join did not complete")

    # -- status --------------------------------------------------------------

    def status(self) -> SystemStatus:
        key_count = sum(len(nd.store) for nd in self.ctx.nodes.values())
        marked = sum(1 for nd in self.ctx.nodes.values() if nd.marked_deleted)
        return SystemStatus(self.ks.n_nodes, key_count, self.ks.key_range,
                            marked, self.net.counter)

    def load_report(self) -> LoadReport:
        n = self.ks.n_nodes
        counts = [len(self.ctx.nodes[i].store) for i in range(1, n + 1)]
        levels = (accel.level_of_batch(np.arange(1, n + 1)).tolist()
                  if n else [])
        marked = [self.ctx.nodes[i].marked_deleted for i in range(1, n + 1)]
        arr = np.array(counts) if counts else np.zeros(1)
        return LoadReport(counts, levels, marked, int(arr.min()),
                          int(arr.max()), float(arr.mean()),
                          float(arr.std()))

    # -- operations ----------------------------------------------------------

    def _next_token(self) -> int:
        self._op_token += 1
        return self._op_token

    def _require_origin(self, origin: int) -> None:
        node = self.ctx.nodes.get(origin)
        if node is None or not node.live:
            raise ValueError(f"origin {origin} is not a live peer")

    def _cover_key(self, key: int) -> None:
        """Grow the overlay until the key's bucket exists (policy permitting)."""
        decision = out_of_range_policy(key, self.ks, self.config)
        if decision.action != "extend":
            return
        for _ in range(decision.joins_allowed):
            self.join_one()
        if responsible_node(key, self.ks) > self.ks.n_nodes:
            raise OutOfRangeError(decision.joins_needed,
                                  decision.joins_allowed,
                                  self.config.max_nodes)

    def do_op(self, op: str, key: int, origin: int):
        """Inject one client operation at origin and run to quiescence."""
        self._require_origin(origin)
        self._cover_key(key)
        token = self._next_token()
        log_mark = len(self.net.log)
        payload = KeyPayload(key, origin, token)
        self.net.send_message(Message(CLIENT, origin, OP_TYPES[op], payload))
        self.run()
        reply = self.ctx.completed.pop(token)
        lines = self.net.log[log_mark:]
        if reply.outcome != OUT_OF_RANGE and reply.hops != len(lines):
            raise RuntimeError("hop count disagrees with the operation log")
        return reply, lines

    def _inject_batch(self, op: str, keys, origins) -> dict[int, int]:
        """Send a batch of client ops; returns op_token -> trial index."""
        tokens = {}
        mt = OP_TYPES[op]
        for i, (key, origin) in enumerate(zip(keys, origins)):
            token = self._next_token()
            tokens[token] = i
            self.net.send_message(
                Message(CLIENT, int(origin), mt, KeyPayload(int(key), int(origin), token)))
        return tokens

    # -- bulk build ----------------------------------------------------------

    def init_system(self, n_nodes: int, dist: Optional[workloads.DistributionSpec] = None,
                    initial_keys: int = 0, key_origin_seed: Optional[int] = None) -> SystemStatus:
        """Bootstrap introducers, join up to n_nodes peers, load initial keys."""
        if n_nodes < len(INTRODUCERS):
            raise ValueError("the overlay starts from its three introducers")
        capacity = n_nodes * self.ks.b
        if initial_keys > capacity:
            raise ValueError(
                f"{initial_keys} keys exceed capacity {capacity}")
        self.bootstrap()
        todo = n_nodes - len(INTRODUCERS)
        step = max(1, n_nodes // 100)
        done = 0
        while done < todo:
            chunk = min(step, todo - done)
            for _ in range(chunk):
                self.net.send_message(
                    Message(CLIENT, 1, MessageType.JOIN, None))
            self.run()
            done += chunk
            self._emit_progress("join", len(INTRODUCERS) + done, n_nodes)
        if self.ks.n_nodes != n_nodes:
            raise RuntimeError("bulk join fell short")

        if initial_keys:
            if dist is None:
                dist = workloads.DistributionSpec(
                    "uniform", 0, capacity - 1, seed=self.seed)
            keys = workloads.gen_keys(dist, initial_keys)
            seed = self.seed if key_origin_seed is None else key_origin_seed
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, n_nodes, initial_keys]))
            origins = rng.integers(1, n_nodes + 1, size=initial_keys)
            kstep = max(1, initial_keys // 100)
            for lo in range(0, initial_keys, kstep):
                hi = min(lo + kstep, initial_keys)
                tokens = self._inject_batch("insert", keys[lo:hi], origins[lo:hi])
                self.run()
                for token in tokens:
                    if self.ctx.completed.pop(token).outcome != "inserted":
                        raise RuntimeError("initial key load failed")
                self._emit_progress("keys", hi, initial_keys)

        # Peers that came up empty never held a key; they are marked so the
        # live population is exactly the loaded one.
        for nd in self.ctx.nodes.values():
            if not nd.store and nd.id not in INTRODUCERS:
                nd.marked_deleted = True
        return self.status()

    def _emit_progress(self, phase: str, done: int, total: int) -> None:
        if self.progress is not None:
            self.progress(phase, done, total)

    # -- experiments ---------------------------------------------------------

    def run_experiment(self, cfg: ExperimentConfig, chunk: int = 256) -> ExperimentResult:
        """Run cfg.trials operations with keys from cfg.dist; aggregate hops."""
        if self.ks.n_nodes < len(INTRODUCERS):
            raise RuntimeError("initialize the system first")
        t0 = time.perf_counter()
        keys = workloads.sample_keys(cfg.dist, cfg.trials)
        if cfg.origin is not None:
            self._require_origin(cfg.origin)
            origins = np.full(cfg.trials, cfg.origin, dtype=np.int64)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(
                [self.seed, cfg.dist.seed, cfg.trials,
                 int(OP_TYPES[cfg.op])]))
            origins = rng.integers(1, self.ks.n_nodes + 1, size=cfg.trials)
        records: list[TrialRecord] = [None] * cfg.trials
        counts: dict = {}
        for lo in range(0, cfg.trials, chunk):
            hi = min(lo + chunk, cfg.trials)
            for k in keys[lo:hi]:
                self._cover_key(int(k))
            tokens = self._inject_batch(cfg.op, keys[lo:hi], origins[lo:hi])
            report = self.run()
            for t, c in report.by_type.items():
                counts[t] = counts.get(t, 0) + c
            for token, idx in tokens.items():
                r = self.ctx.completed.pop(token)
                i = lo + idx
                records[i] = TrialRecord(i, cfg.op, int(keys[i]),
                                         int(origins[i]), r.holder, r.hops,
                                         r.outcome)
        hops = [r.hops for r in records]
        arr = np.array(hops)
        pct = {"p50": float(np.percentile(arr, 50)),
               "p95": float(np.percentile(arr, 95)),
               "p99": float(np.percentile(arr, 99))}
        hist_counts = np.bincount(arr)
        histogram = {int(h): int(c) for h, c in enumerate(hist_counts) if c}
        message_counts = {MessageType(t).name.lower(): c
                          for t, c in sorted(counts.items())}
        return ExperimentResult(cfg.op, records, hops, float(arr.mean()),
                                int(arr.max()), pct, message_counts,
                                time.perf_counter() - t0, histogram)

    def churn_run(self, updates: int, dist: workloads.DistributionSpec) -> LoadReport:
        """Presence-toggling updates: insert absent keys, delete present ones."""
        if self.ks.n_nodes < len(INTRODUCERS):
            raise RuntimeError("initialize the system first")
        keys = workloads.sample_keys(dist, updates)
        rng = np.random.default_rng(np.random.SeedSequence(
            [self.seed, dist.seed, updates, 97]))
        origins = rng.integers(1, self.ks.n_nodes + 1, size=updates)
        step = max(1, updates // 100)
        for i in range(updates):
            key = int(keys[i])
            holder = responsible_node(key, self.ks)
            if holder > self.ks.n_nodes:
                self._cover_key(key)
            present = key in self.ctx.nodes[holder].store
            op = "delete" if present else "insert"
            self.do_op(op, key, int(origins[i]))
            if (i + 1) % step == 0:
                self._emit_progress("churn", i + 1, updates)
        return self.load_report()


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

EXPERIMENT_CSV_HEADER = "trial,op,key,origin,holder,hops,outcome"
LOAD_CSV_HEADER = "node_id,level,load,marked"


def export_report(obj, fmt: str) -> str:
    """Render a result as csv or json; byte-stable for identical inputs."""
    doc = obj.to_doc() if hasattr(obj, "to_doc") else obj
    if fmt == "json":
        return json.dumps(doc, separators=(",", ":")) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown export format {fmt!r}")
    if doc.get("report") == "load":
        lines = [LOAD_CSV_HEADER]
        for i, (lvl, load, marked) in enumerate(
                zip(doc["levels"], doc["counts"], doc["marked"])):
            lines.append(f"{i + 1},{lvl},{load},{int(marked)}")
        return "\n".join(lines) + "\n"
    if doc.get("report") == "experiment":
        lines = [EXPERIMENT_CSV_HEADER]
        for row in doc["trials"]:
            lines.append(",".join(str(x) for x in row))
        return "\n".join(lines) + "\n"
    raise ValueError("document is neither an experiment nor a load report")
