"""Arithmetic of the nested balanced tree overlay.

The overlay arranges peers 1..N into levels whose widths square at every
step (1, 2, 4, 16, 256, ...), so the tree height is doubly logarithmic in N.
Peers sharing a father form a *collection*; inside every collection the same
level structure is applied recursively to the member ranks until no more
than two members share a nested ancestor. Ids are assigned densely in join
order, so the last level (and the last collection on it) may be partial.

Everything in this module is a pure function of node labels and the current
peer count; nothing here touches simulation state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache


class RoutingFault(Exception):
    """Raised when routing state references peers that cannot exist."""


# ---------------------------------------------------------------------------
# Level geometry
# ---------------------------------------------------------------------------

def level_width(level: int) -> int:
    """Number of peer slots on a level: 1, 2, 4, 16, 256, ..."""
    if level < 0:
        raise ValueError("level must be >= 0")
    if level == 0:
        return 1
    w = 2
    for _ in range(level - 1):
        w = w * w
    return w


def level_start(level: int) -> int:
    """Smallest id on a level (the left-spine id): 1, 2, 4, 8, 24, 280, ..."""
    if level < 0:
        raise ValueError("level must be >= 0")
    start = 1
    for l in range(level):
        start += level_width(l)
    return start


def level_of(node_id: int) -> int:
    """The unique level whose id range contains node_id."""
    if node_id < 1:
        raise ValueError("node ids start at 1")
    l = 0
    while level_start(l + 1) <= node_id:
        l += 1
    return l


def parent_of(node_id: int) -> int:
    """Father of a node; each level-l node owns a contiguous block of children.

    Level 1 hangs under the root; from level 2 on, a level-(l-1) node has
    exactly level_width(l-1) children.
    """
    if node_id < 2:
        raise ValueError("the root has no parent")
    l = level_of(node_id)
    if l == 1:
        return 1
    k = node_id - level_start(l)
    return level_start(l - 1) + k // level_width(l - 1)


def children_span(node_id: int) -> tuple[int, int]:
    """Untruncated (first, last) ids of a node's children block."""
    l = level_of(node_id)
    if l == 0:
        return 2, 3
    width = level_width(l)
    lo = level_start(l + 1) + (node_id - level_start(l)) * width
    return lo, lo + width - 1


def collection_span(node_id: int) -> tuple[int, int]:
    """Untruncated id bounds of the collection (same-father group) of a node."""
    if node_id == 1:
        return 1, 1
    return children_span(parent_of(node_id))


def collection_of(node_id: int, n: int) -> list[int]:
    """Existing members of node_id's collection under peer count n, ascending."""
    lo, hi = collection_span(node_id)
    return list(range(lo, min(hi, n) + 1))


def spine_ids(n: int) -> list[int]:
    """Left-spine ids of all levels that exist under peer count n."""
    ids = []
    l = 0
    while True:
        s = level_start(l)
        if s > n:
            break
        ids.append(s)
        l += 1
    return ids


def collection_heads(spine_id: int, n: int) -> list[int]:
    """First member of every existing collection on a spine node's level."""
    l = level_of(spine_id)
    if spine_id != level_start(l):
        raise ValueError("collection heads exist only on left-spine nodes")
    if l == 0:
        return [1]
    group = 2 if l == 1 else level_width(l - 1)
    start, end = level_start(l), level_start(l + 1) - 1
    return [h for h in range(start, min(end, n) + 1, group)]


def max_levels(n: int) -> int:
    """Upper bound on the number of levels: ceil(log2 log2 n) + 2 for n >= 4."""
    if n < 4:
        return 3
    return math.ceil(math.log2(math.log2(n))) + 2


def hop_bound(n: int) -> int:
    """Worst-case routing hops tolerated for a network of n peers."""
    return 2 * max_levels(n)


# ---------------------------------------------------------------------------
# Key space
# ---------------------------------------------------------------------------

def default_bucket_width(w: int) -> int:
    """Keys per peer for a w-bit universe: max(1, round(ln 2^w))."""
    return max(1, round(w * math.log(2)))


@dataclass
class KeySpace:
    """Key universe bookkeeping: w-bit keys, b consecutive keys per peer.

    Peer i owns exactly [(i-1)*b, i*b - 1]; with n_nodes peers the usable
    range is [0, n_nodes*b - 1] (capacity keys).
    """

    w: int = 20
    b: int = 0
    n_nodes: int = 0

    def __post_init__(self):
        if self.b <= 0:
            self.b = default_bucket_width(self.w)

    @property
    def universe(self) -> int:
        return 1 << self.w

    @property
    def capacity(self) -> int:
        return self.n_nodes * self.b

    @property
    def key_range(self) -> tuple[int, int]:
        return 0, self.capacity - 1

    def bucket_span(self, node_id: int) -> tuple[int, int]:
        return (node_id - 1) * self.b, node_id * self.b - 1


def responsible_node(key: int, ks: KeySpace) -> int:
    """Peer whose bucket contains the key; may exceed the current peer count
    (keys past the frontier belong to peers that have not joined yet)."""
    if key < 0:
        raise ValueError("keys are non-negative")
    return key // ks.b + 1


# ---------------------------------------------------------------------------
# Nested structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NestedView:
    """Nested tree imposed on one collection (or nested sub-collection).

    Members are the contiguous ids [lo, hi]; labels 1..size are member ranks
    plus one, so the outer level arithmetic applies to labels unchanged.
    """

    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def label(self, node_id: int) -> int:
        if not self.lo <= node_id <= self.hi:
            raise ValueError(f"{node_id} outside member span [{self.lo},{self.hi}]")
        return node_id - self.lo + 1

    def id_of(self, label: int) -> int:
        return self.lo + label - 1

    def level_of(self, node_id: int) -> int:
        return level_of(self.label(node_id))

    def spine(self) -> list[int]:
        return [self.id_of(lb) for lb in spine_ids(self.size)]

    def levels(self) -> list[list[int]]:
        """Members grouped by nested level (truncated at the member count)."""
        out = []
        for s in spine_ids(self.size):
            e = min(s + level_width(level_of(s)) - 1, self.size)
            out.append([self.id_of(lb) for lb in range(s, e + 1)])
        return out

    def sub_collection(self, node_id: int) -> "NestedView":
        """The nested collection (same nested father) containing node_id."""
        lb = self.label(node_id)
        if lb == 1:
            return NestedView(node_id, node_id)
        lo, hi = collection_span(lb)
        return NestedView(self.id_of(lo), self.id_of(min(hi, self.size)))

    def collection_heads_of(self, spine_member: int) -> list[int]:
        """First members of nested collections on spine_member's nested level."""
        return [self.id_of(h)
                for h in collection_heads(self.label(spine_member), self.size)]


def nested_geometry(members: list[int]) -> NestedView:
    """Nested view over an explicit, contiguous, ascending member list."""
    if not members:
        raise ValueError("a collection has at least one member")
    if members != list(range(members[0], members[-1] + 1)):
        raise ValueError("collections are contiguous id ranges")
    return NestedView(members[0], members[-1])


# ---------------------------------------------------------------------------
# Routing tables
# ---------------------------------------------------------------------------

@dataclass
class RoutingTables:
    """Per-peer overlay tables.

    lsi: ids of every existing left-spine node (one per level).
    ci: first member of each collection on this node's level; populated only
        when the node is itself on the left spine.
    nested: NestedView per nesting depth that contains this node, outermost
        first, ending at the first view with <= 2 members.
    last_node: maintained only by the deepest left-spine node.
    """

    lsi: list[int] = field(default_factory=list)
    ci: list[int] = field(default_factory=list)
    parent: int | None = None
    nested: list[NestedView] = field(default_factory=list)
    last_node: int | None = None


def nesting_chain(node_id: int, n: int) -> list[NestedView]:
    """Enclosing nested views of a node, outer collection inward."""
    if node_id == 1:
        return []
    views = []
    view = NestedView(*_clip(collection_span(node_id), n))
    while True:
        views.append(view)
        if view.size <= 2 or view.lo == node_id:
            break
        sub = view.sub_collection(node_id)
        if sub.size <= 1 and sub.lo == node_id:
            break
        view = sub
    return views


def _clip(span: tuple[int, int], n: int) -> tuple[int, int]:
    lo, hi = span
    return lo, min(hi, n)


def build_tables(node_id: int, n: int) -> RoutingTables:
    """Materialize the full routing tables of one peer under peer count n."""
    if not 1 <= node_id <= n:
        raise ValueError("node id out of range")
    lsi = spine_ids(n)
    on_spine = node_id in lsi
    tables = RoutingTables(
        lsi=lsi,
        ci=collection_heads(node_id, n) if on_spine else [],
        parent=parent_of(node_id) if node_id >= 2 else None,
        nested=nesting_chain(node_id, n),
    )
    if on_spine and node_id == lsi[-1]:
        tables.last_node = n
    return tables


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def relay_path(target: int, n: int) -> tuple[int, ...]:
    """Relay points a fresh message visits on its way to target, in order.

    The sequence starts at the left-spine node of the target's level, moves
    to the representative (first member) of the target's collection, then
    alternates nested-spine / nested-representative hops one nesting depth at
    a time until the target's nested collection has at most two members, at
    which point the target is addressed directly. Consecutive duplicates
    collapse, so the sequence is strictly increasing and ends at the target.
    """
    if not 1 <= target <= n:
        raise RoutingFault(f"target {target} outside live range 1..{n}")
    seq = [level_start(level_of(target))]
    if seq[0] == target:
        return tuple(seq)

    def push(x):
        if seq[-1] != x:
            seq.append(x)

    lo, hi = _clip(collection_span(target), n)
    push(lo)
    view = NestedView(lo, hi)
    while seq[-1] != target:
        sub = view.sub_collection(target)
        if sub.size <= 2:
            push(target)
            break
        ns = view.id_of(level_start(view.level_of(target)))
        push(ns)
        if ns == target:
            break
        push(sub.lo)
        view = sub
    return tuple(seq)


def next_hop(current: int, target: int, visited: int, n: int) -> int:
    """One forwarding step toward target.

    visited is the message's progress marker: how many relay points of the
    target's relay path were already reached (0 for a fresh message). A node
    that is not itself on the relay path always forwards to the spine node of
    the target's level, exactly like a fresh origin.
    """
    node, _ = route_step(current, target, visited, n)
    return node


def route_step(current: int, target: int, visited: int, n: int) -> tuple[int, int]:
    """next_hop plus the advanced progress marker to stamp on the message."""
    if current == target:
        raise RoutingFault("routing a message already at its target")
    if current > n or target > n:
        raise RoutingFault(f"peer beyond live range 1..{n}")
    seq = relay_path(target, n)
    lo = max(visited - 1, 0)
    for i in range(lo, len(seq)):
        if seq[i] == current:
            return seq[i + 1], i + 2
    if visited > 0:
        raise RoutingFault(
            f"peer {current} holds a message marked past it (marker {visited})")
    return seq[0], 1


def hop_path(origin: int, target: int, n: int) -> list[int]:
    """Full node sequence a fresh message traverses, origin excluded."""
    if origin == target:
        return []
    path = []
    cur, marker = origin, 0
    while cur != target:
        cur, marker = route_step(cur, target, marker, n)
        path.append(cur)
        if len(path) > hop_bound(n) + 4:
            raise RoutingFault(f"runaway route {origin}->{target} at n={n}")
    return path
