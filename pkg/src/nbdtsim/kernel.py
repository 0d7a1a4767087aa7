"""Deterministic message-passing kernel.

A single shared FIFO buffer carries typed messages between peers. Sends are
non-blocking and counted; SEARCH/INSERT/DELETE sends between peers append an
operation log record (exact format ``"<Op> message for node <src> to node
<dst>."``). Delivery happens in global send order through run_until_quiescent,
which hands each message to a caller-supplied handler and enqueues whatever
the handler emits, so identical scripts replay identically.

The trace hash is the SHA-256 digest over one canonical record per delivery,
in delivery order: ``repr((src, dst, type, *payload fields)) + "\\n"`` where
the payload fields are the tuple listed in _canon_record. It is stable across
runs and platforms.
"""

from __future__ import annotations

import hashlib
import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Optional

import numpy as np

CLIENT = 0


class MessageType(IntEnum):
    JOIN = 1
    SEARCH = 2
    INSERT = 3
    DELETE = 4
    JOIN_REPLY = 5
    OP_REPLY = 6


_JOIN = int(MessageType.JOIN)
_JOIN_REPLY = int(MessageType.JOIN_REPLY)

# index by message type; None marks types that never log
_LOG_NAMES = (None, None, "Search", "Insert", "Delete", None, None)


@dataclass(slots=True)
class KeyPayload:
    """Payload of SEARCH/INSERT/DELETE messages.

    phase counts the relay points of the holder's relay path already reached
    (0 for a fresh client message); hops counts peer-to-peer forwards so far.
    """

    key: int
    origin: int
    op_token: int
    phase: int = 0
    hops: int = 0


@dataclass(slots=True)
class JoinPayload:
    """Tables handed to a joiner (JOIN_REPLY) or carried by a construction
    notice (JOIN with a payload): spine index, collection heads, parent,
    previous collection sibling, and the new total peer count."""

    lsi: tuple[int, ...]
    ci: tuple[int, ...]
    parent: Optional[int]
    sibling: Optional[int]
    total_nodes: int


@dataclass(slots=True)
class ReplyPayload:
    op_token: int
    key: int
    outcome: str
    hops: int
    holder: int


@dataclass(slots=True)
class Message:
    src: int
    dst: int
    type: MessageType
    payload: object = None


@dataclass(slots=True)
class Broadcast:
    """Handler directive: send template to every id in [lo, hi]."""

    template: Message
    lo: int
    hi: int


@dataclass
class FaultModel:
    """Optional unreliability: seeded drop probability and bounded delivery
    delay (in accepted-message ranks). Disabled by default; with it enabled,
    dropped sends are never accepted (not counted)."""

    drop_prob: float = 0.0
    delay_max: int = 0
    seed: int = 0

    @property
    def active(self) -> bool:
        return self.drop_prob > 0.0 or self.delay_max > 0


@dataclass
class RunReport:
    deliveries: int = 0
    by_type: dict = field(default_factory=dict)
    trace_hash: str = ""
    livelock: Optional[str] = None


def _canon_record(msg: Message) -> str:
    p = msg.payload
    t = int(msg.type)
    if type(p) is KeyPayload:
        rec = (msg.src, msg.dst, t, p.key, p.origin, p.op_token, p.phase,
               p.hops)
    elif type(p) is ReplyPayload:
        rec = (msg.src, msg.dst, t, p.op_token, p.key, p.outcome, p.hops,
               p.holder)
    elif type(p) is JoinPayload:
        rec = (msg.src, msg.dst, t, p.total_nodes) + tuple(p.lsi)
    else:
        rec = (msg.src, msg.dst, t)
    return repr(rec)


class NetworkState:
    """Shared buffer, delivery counter, operation log, and the join gate.

    The gate admits one client join at a time: while a join is in flight,
    further client JOIN requests queue outside the buffer and are accepted
    (counted) only after the previous JOIN_REPLY delivers.
    """

    def __init__(self, log_path=None, fault_model: Optional[FaultModel] = None,
                 log_sink: Optional[Callable[[str], None]] = None):
        self.counter = 0
        self.delivered = 0
        self.dropped = 0
        self.log: list[str] = []
        self.log_sink = log_sink
        self._log_path = log_path
        self._log_fh = open(log_path, "w", encoding="ascii") if log_path else None
        self.fault_model = fault_model if fault_model and fault_model.active else None
        self._rng = (np.random.default_rng(fault_model.seed)
                     if self.fault_model else None)
        self._fifo: deque[Message] = deque()
        self._heap: list[tuple[int, int, Message]] = []
        self._accept_seq = 0
        self.gate: deque[Message] = deque()
        self.join_in_flight = False
        self._hasher = hashlib.sha256()
        self._trace_buf: list[str] = []

    # -- send side ----------------------------------------------------------

    def send_message(self, msg: Message) -> None:
        """Non-blocking accept: append to the buffer, count, maybe log."""
        if msg.dst < 1:
            raise ValueError("messages are addressed to peers (dst >= 1)")
        if (msg.type == _JOIN and msg.src == CLIENT and msg.payload is None
                and self.join_in_flight):
            self.gate.append(msg)
            return
        self._accept(msg)

    def _accept(self, msg: Message) -> None:
        t = int(msg.type)
        if t == _JOIN and msg.src == CLIENT and msg.payload is None:
            self.join_in_flight = True
        if self.fault_model is not None:
            if self._rng.random() < self.fault_model.drop_prob:
                self.dropped += 1
                return
            delay = (int(self._rng.integers(0, self.fault_model.delay_max + 1))
                     if self.fault_model.delay_max else 0)
            heapq.heappush(self._heap, (self._accept_seq + delay,
                                        self._accept_seq, msg))
        else:
            self._fifo.append(msg)
        self._accept_seq += 1
        self.counter += 1
        name = _LOG_NAMES[t]
        if name is not None and msg.src != CLIENT:
            line = "%s message for node %d to node %d." % (name, msg.src, msg.dst)
            self.log.append(line)
            if self._log_fh is not None:
                self._log_fh.write(line + "\n")
            if self.log_sink is not None:
                self.log_sink(line)

    def broadcast(self, template: Message, lo: int, hi: int) -> None:
        """Send a copy of template to every id in [lo, hi]."""
        for i in range(lo, hi + 1):
            self.send_message(Message(template.src, i, template.type,
                                      template.payload))

    # -- receive side --------------------------------------------------------

    def buffered(self) -> int:
        return len(self._heap) + len(self._fifo)

    def _ordered(self) -> list[Message]:
        if self._heap:
            return [m for _, _, m in sorted(self._heap)] + list(self._fifo)
        return list(self._fifo)

    def msg_for_node(self, node_id: int) -> Optional[int]:
        """Buffer position of the oldest pending message for a peer, if any."""
        if node_id < 1:
            raise ValueError("peer ids start at 1")
        for i, m in enumerate(self._ordered()):
            if m.dst == node_id:
                return i
        return None

    def recv_message(self, node_id: int) -> Message:
        """Remove and return the oldest message addressed to a peer.

        Calling without a pending message is a driver bug and fails hard.
        """
        pos = self.msg_for_node(node_id)
        if pos is None:
            raise LookupError(f"no pending message for peer {node_id}")
        if self._heap:
            ordered = sorted(self._heap)
            key = ordered[pos][:2]
            self._heap = [e for e in ordered if e[:2] != key]
            heapq.heapify(self._heap)
            msg = ordered[pos][2]
        else:
            msg = self._fifo[pos]
            del self._fifo[pos]
        self._note_delivery(msg)
        return msg

    def pop_next(self) -> Message:
        """Remove and return the globally oldest buffered message."""
        msg = heapq.heappop(self._heap)[2] if self._heap else self._fifo.popleft()
        self._note_delivery(msg)
        return msg

    def peek_next(self) -> Message:
        return sorted(self._heap)[0][2] if self._heap else self._fifo[0]

    def _note_delivery(self, msg: Message) -> None:
        self.delivered += 1
        self._trace_buf.append(_canon_record(msg))
        if int(msg.type) == _JOIN_REPLY:
            self.join_in_flight = False
            if self.gate:
                self._accept(self.gate.popleft())

    # -- bookkeeping ---------------------------------------------------------

    @property
    def conserved(self) -> bool:
        """counter == deliveries + still-buffered, at any observation point.

        Dropped messages (fault model only) never enter the counter.
        """
        return self.counter == self.delivered + self.buffered()

    def _flush_trace(self) -> None:
        if self._trace_buf:
            self._hasher.update(("\n".join(self._trace_buf) + "\n").encode("ascii"))
            self._trace_buf.clear()

    def trace_hash(self) -> str:
        self._flush_trace()
        return self._hasher.hexdigest()

    def reset(self) -> None:
        self.counter = self.delivered = self.dropped = 0
        self._accept_seq = 0
        self._fifo.clear()
        self._heap.clear()
        self.gate.clear()
        self.join_in_flight = False
        self.log.clear()
        self._hasher = hashlib.sha256()
        self._trace_buf.clear()
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = open(self._log_path, "w", encoding="ascii")

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None


def run_until_quiescent(net: NetworkState,
                        handler: Callable[[Message], Iterable],
                        budget: int = 10_000_000,
                        collect: Optional[list] = None) -> RunReport:
    """Deliver buffered messages oldest-first until empty or budget is hit.

    Each delivery invokes handler(msg); emitted Messages (or Broadcast
    directives) are accepted back into the buffer. When collect is a list,
    one (src, dst, type, op_token) record per delivery is appended to it.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    report = RunReport()
    by_type = report.by_type
    fifo = net._fifo
    heap = net._heap
    gate = net.gate
    trace_buf = net._trace_buf
    fast = net.fault_model is None
    deliveries = 0
    while (fifo or heap) and deliveries < budget:
        if fast:
            msg = fifo.popleft()
        else:
            msg = heapq.heappop(heap)[2] if heap else fifo.popleft()
        deliveries += 1
        trace_buf.append(_canon_record(msg))
        if len(trace_buf) >= 65536:
            net._flush_trace()
        t = int(msg.type)
        by_type[t] = by_type.get(t, 0) + 1
        if collect is not None:
            p = msg.payload
            tok = p.op_token if type(p) in (KeyPayload, ReplyPayload) else None
            collect.append((msg.src, msg.dst, t, tok))
        for out in handler(msg):
            if type(out) is Broadcast:
                net.broadcast(out.template, out.lo, out.hi)
            else:
                net.send_message(out)
        if t == _JOIN_REPLY:
            net.join_in_flight = False
            if gate:
                net._accept(gate.popleft())
    net.delivered += deliveries
    report.deliveries = deliveries
    report.by_type = {MessageType(k): v for k, v in by_type.items()}
    if net.buffered():
        head = net.peek_next()
        report.livelock = (f"budget exhausted; oldest undelivered: "
                           f"{_canon_record(head)}")
    report.trace_hash = net.trace_hash()
    return report
