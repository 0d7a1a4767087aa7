"""Peer behavior as message-driven state machines.

Joins relay introducer -> deepest left-spine node -> current tail, which
assigns the next dense id, hands the joiner its tables in a JOIN_REPLY, and
keeps the spine's tail pointer fresh (a notice message, or a broadcast when
the joiner opens a new level). Key operations hop along the relay path of the
responsible peer and answer the origin with an OP_REPLY.

Handlers are pure transition functions (state, message) -> emissions; the
kernel invokes them one at a time and peers share nothing but messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import geometry
from .geometry import (KeySpace, RoutingFault, RoutingTables, build_tables,
                       collection_span, nesting_chain, parent_of,
                       responsible_node, route_step, spine_ids)
from .kernel import (CLIENT, Broadcast, JoinPayload, KeyPayload, Message,
                     MessageType, ReplyPayload)

INTRODUCERS = (1, 2, 3)

FOUND = "found"
NOT_FOUND = "not_found"
INSERTED = "inserted"
DUPLICATE = "duplicate"
DELETED = "deleted"
OUT_OF_RANGE = "out_of_range"


class ProtocolError(Exception):
    """A peer received a message it cannot interpret."""


@dataclass(slots=True)
class NodeState:
    """One peer: key store, routing tables, lifecycle flags.

    next_node is the append chain (only the current tail has none);
    marked_deleted peers stay in the topology and keep routing but hold no
    keys.
    """

    id: int
    store: set = field(default_factory=set)
    tables: Optional[RoutingTables] = None
    marked_deleted: bool = False
    live: bool = False
    next_node: Optional[int] = None
    sibling: Optional[int] = None
    known_total: int = 0

    def key_span(self, b: int) -> tuple[int, int]:
        return (self.id - 1) * b, self.id * b - 1


@dataclass
class SimConfig:
    auto_extend: bool = True
    max_nodes: int = 200_000
    reorg_threshold: float = 0.5


class SimContext:
    """Authoritative simulation state shared with handlers read-only.

    Holds the peer registry, the key space (whose n_nodes is the ground-truth
    peer count), and the driver mailbox where OP_REPLY outcomes surface.
    """

    def __init__(self, ks: KeySpace, config: Optional[SimConfig] = None):
        self.ks = ks
        self.config = config or SimConfig()
        self.nodes: dict[int, NodeState] = {}
        self.completed: dict[int, ReplyPayload] = {}

    @property
    def n(self) -> int:
        return self.ks.n_nodes

    def live_nodes(self) -> Iterable[NodeState]:
        return (nd for nd in self.nodes.values() if nd.live)


_JOIN = int(MessageType.JOIN)
_JOIN_REPLY = int(MessageType.JOIN_REPLY)
_OP_REPLY = int(MessageType.OP_REPLY)
_SEARCH = int(MessageType.SEARCH)
_INSERT = int(MessageType.INSERT)
_DELETE = int(MessageType.DELETE)


def handle(node: NodeState, msg: Message, ctx: SimContext) -> list:
    """Dispatch one delivered message; returns emissions for the kernel."""
    t = int(msg.type)
    if _SEARCH <= t <= _DELETE:
        return forward_op(node, msg, ctx)
    if t == _JOIN:
        if msg.payload is None:
            return forward_join(node, msg, ctx)
        return _apply_notice(node, msg.payload)
    if t == _JOIN_REPLY:
        return _adopt_tables(node, msg.payload, ctx)
    if t == _OP_REPLY:
        ctx.completed[msg.payload.op_token] = msg.payload
        return []
    raise ProtocolError(f"peer {node.id}: unknown message type {t!r}")


# ---------------------------------------------------------------------------
# join handshake
# ---------------------------------------------------------------------------

def forward_join(node: NodeState, msg: Message, ctx: SimContext) -> list:
    """Relay a join request one stage, or admit the joiner at the tail."""
    if not node.live:
        raise ProtocolError(f"join relayed to non-live peer {node.id}")
    if node.next_node is None:
        return _admit_joiner(node, ctx)
    deepest = node.tables.lsi[-1]
    if node.id == deepest:
        if node.tables.last_node is None:
            raise ProtocolError(f"spine peer {node.id} lost its tail pointer")
        return [Message(node.id, node.tables.last_node, MessageType.JOIN, None)]
    return [Message(node.id, deepest, MessageType.JOIN, None)]


def _admit_joiner(tail: NodeState, ctx: SimContext) -> list:
    new_id = tail.id + 1
    if new_id != ctx.n + 1:
        raise RoutingFault(
            f"tail {tail.id} out of step with network size {ctx.n}")
    tail.next_node = new_id
    lsi = tuple(spine_ids(new_id))
    opens_level = new_id == lsi[-1]
    coll_lo, _ = collection_span(new_id)
    payload = JoinPayload(
        lsi=lsi,
        ci=tuple(geometry.collection_heads(new_id, new_id)) if opens_level else (),
        parent=parent_of(new_id),
        sibling=new_id - 1 if new_id - 1 >= coll_lo else None,
        total_nodes=new_id,
    )
    out = [Message(tail.id, new_id, MessageType.JOIN_REPLY, payload)]
    notice = JoinPayload(lsi=lsi, ci=(), parent=None, sibling=None,
                         total_nodes=new_id)
    if opens_level:
        # New level head: every existing peer must learn the new spine id.
        out.append(Broadcast(Message(tail.id, 0, MessageType.JOIN, notice),
                             1, tail.id))
    else:
        deepest = tail.tables.lsi[-1]
        if deepest == tail.id:
            tail.tables.last_node = new_id
            tail.known_total = new_id
        else:
            out.append(Message(tail.id, deepest, MessageType.JOIN, notice))
    return out


def _apply_notice(node: NodeState, payload: JoinPayload) -> list:
    node.tables = build_tables(node.id, payload.total_nodes)
    node.known_total = payload.total_nodes
    return []


def _adopt_tables(node: NodeState, payload: JoinPayload, ctx: SimContext) -> list:
    """A joiner becomes live with the tables the tail computed for it."""
    if node.live:
        raise ProtocolError(f"peer {node.id} adopted tables twice")
    node.tables = RoutingTables(
        lsi=list(payload.lsi),
        ci=list(payload.ci),
        parent=payload.parent,
        nested=nesting_chain(node.id, payload.total_nodes),
        last_node=payload.total_nodes if node.id == payload.lsi[-1] else None,
    )
    node.sibling = payload.sibling
    node.known_total = payload.total_nodes
    node.live = True
    if payload.total_nodes != ctx.n + 1:
        raise RoutingFault("join reply out of step with network size")
    ctx.ks.n_nodes = payload.total_nodes
    return []


# ---------------------------------------------------------------------------
# key operations
# ---------------------------------------------------------------------------

def forward_op(node: NodeState, msg: Message, ctx: SimContext) -> list:
    """Resolve locally when responsible, otherwise forward one hop."""
    p = msg.payload
    ks = ctx.ks
    n = ks.n_nodes
    holder = p.key // ks.b + 1
    if holder > n:
        reply = ReplyPayload(p.op_token, p.key, OUT_OF_RANGE, p.hops, node.id)
        return [Message(node.id, p.origin, MessageType.OP_REPLY, reply)]
    if holder == node.id:
        outcome = local_op(node, msg.type, p.key, ks)
        reply = ReplyPayload(p.op_token, p.key, outcome, p.hops, node.id)
        return [Message(node.id, p.origin, MessageType.OP_REPLY, reply)]
    nxt, phase = route_step(node.id, holder, p.phase, n)
    fwd = KeyPayload(p.key, p.origin, p.op_token, phase, p.hops + 1)
    return [Message(node.id, nxt, msg.type, fwd)]


def local_op(node: NodeState, op: MessageType, key: int, ks: KeySpace) -> str:
    """Apply one key operation to the peer's own bucket."""
    lo, hi = node.key_span(ks.b)
    if not lo <= key <= hi:
        raise RoutingFault(
            f"key {key} routed to peer {node.id} owning [{lo},{hi}]")
    if op == MessageType.SEARCH:
        return FOUND if key in node.store else NOT_FOUND
    if op == MessageType.INSERT:
        if key in node.store:
            return DUPLICATE
        node.store.add(key)
        node.marked_deleted = False
        return INSERTED
    if op == MessageType.DELETE:
        if key not in node.store:
            return NOT_FOUND
        node.store.discard(key)
        if not node.store and node.id not in INTRODUCERS:
            node.marked_deleted = True
        return DELETED
    raise ProtocolError(f"not a key operation: {op!r}")


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RangeDecision:
    """What to do with a key whose bucket lies past the current frontier."""

    action: str  # "route" | "extend" | "reject"
    joins_needed: int = 0
    joins_allowed: int = 0


def out_of_range_policy(key: int, ks: KeySpace, config: SimConfig) -> RangeDecision:
    """Decide between growing the overlay and refusing the key.

    Extension happens one join at a time (each O(1) messages); joins are never
    rolled back, so a refusal after partial extension leaves the new peers in
    place and the caller reports how far it got.
    """
    holder = responsible_node(key, ks)
    if holder <= ks.n_nodes:
        return RangeDecision("route")
    needed = holder - ks.n_nodes
    if not config.auto_extend:
        return RangeDecision("reject", joins_needed=needed)
    allowed = min(needed, max(config.max_nodes - ks.n_nodes, 0))
    return RangeDecision("extend", joins_needed=needed, joins_allowed=allowed)


@dataclass(frozen=True)
class ReorgAdvisory:
    marked: int
    total: int
    threshold: float


def reorg_watch(nodes: Iterable[NodeState], threshold: float) -> Optional[ReorgAdvisory]:
    """Advisory-only watch for excess marked-deleted peers.

    Emits an event when the marked fraction reaches the threshold; no
    structural rebuild is performed.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    peers = [nd for nd in nodes if nd.live]
    if not peers:
        return None
    marked = sum(1 for nd in peers if nd.marked_deleted)
    if marked / len(peers) >= threshold:
        return ReorgAdvisory(marked, len(peers), threshold)
    return None
