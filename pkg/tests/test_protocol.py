"""Node state machines: joins, op routing, store lifecycle, policies."""

import random

import pytest

import oracles
from nbdtsim.experiments import OutOfRangeError, SystemHandle
from nbdtsim.geometry import (KeySpace, hop_bound, level_start,
                              responsible_node, spine_ids)
from nbdtsim.kernel import (CLIENT, KeyPayload, Message, MessageType,
                            NetworkState, run_until_quiescent)
from nbdtsim.protocol import (DELETED, DUPLICATE, FOUND, INSERTED, INTRODUCERS,
                              NOT_FOUND, NodeState, ProtocolError, SimConfig,
                              handle, local_op, out_of_range_policy,
                              reorg_watch)
from nbdtsim.workloads import DistributionSpec


def make_system(n, seed=0, keys=0, **kw):
    h = SystemHandle(seed=seed, **kw)
    dist = None
    if keys:
        dist = DistributionSpec("uniform", 0, n * h.ks.b - 1, seed=seed)
    h.init_system(n, dist=dist, initial_keys=keys)
    return h


class TestHandle:
    def test_local_search_replies_once(self):
        h = make_system(8)
        node = h.ctx.nodes[5]
        node.store.add(4 * 14 + 3)
        msg = Message(CLIENT, 5, MessageType.SEARCH,
                      KeyPayload(4 * 14 + 3, 5, 77))
        out = handle(node, msg, h.ctx)
        assert len(out) == 1
        reply = out[0]
        assert reply.type == MessageType.OP_REPLY and reply.dst == 5
        assert reply.payload.outcome == FOUND and reply.payload.hops == 0

    def test_marked_node_answers_not_found(self):
        h = make_system(8)
        node = h.ctx.nodes[6]
        assert node.marked_deleted  # empty at init completion
        r, _ = h.do_op("search", 5 * 14 + 1, 6)
        assert r.outcome == NOT_FOUND

    def test_unknown_type_is_protocol_error(self):
        h = make_system(4)
        bogus = Message(1, 2, 99, None)
        with pytest.raises(ProtocolError):
            handle(h.ctx.nodes[2], bogus, h.ctx)

    def test_search_resolved_locally_two_deliveries(self):
        h = make_system(4)
        before = h.net.delivered
        h.do_op("search", 0, 1)  # key 0 lives at node 1
        assert h.net.delivered - before == 2  # the search plus its reply


class TestJoin:
    def test_join_into_three_introducers(self):
        h = SystemHandle()
        h.bootstrap()
        h.join_one()
        assert h.ks.n_nodes == 4
        assert h.ctx.nodes[4].live

    def test_join_into_seven_becomes_spine_head(self):
        h = make_system(7)
        h.join_one()
        node = h.ctx.nodes[8]
        assert node.tables.lsi == [1, 2, 4, 8]
        assert node.tables.ci == [8]
        assert node.tables.last_node == 8

    def test_join_reply_carries_tables(self):
        h = make_system(10)
        h.join_one()
        node = h.ctx.nodes[11]
        assert node.live
        assert node.tables.lsi == spine_ids(11)
        assert node.tables.parent == 4  # 11 sits in collection {8..11}
        assert node.sibling == 10

    def test_sibling_none_when_opening_collection(self):
        h = make_system(11)
        h.join_one()  # 12 opens collection {12..15}
        assert h.ctx.nodes[12].sibling is None

    def test_join_budget_small_scales(self):
        for n in (10, 100):
            h = make_system(n)
            before = h.net.counter
            h.join_one()
            assert h.net.counter - before <= 5

    def test_boundary_join_broadcasts_spine(self):
        h = make_system(23)
        before = h.net.counter
        h.join_one()
        # 4 relay/reply messages plus one notice per existing peer
        assert h.net.counter - before == 4 + 23
        for node in h.ctx.nodes.values():
            assert node.tables.lsi == [1, 2, 4, 8, 24]

    def test_sequential_gate_orders_concurrent_joins(self):
        h = SystemHandle()
        h.bootstrap()
        for _ in range(10):
            h.net.send_message(Message(CLIENT, 1, MessageType.JOIN, None))
        h.run()
        assert h.ks.n_nodes == 13
        assert all(h.ctx.nodes[i].live for i in range(4, 14))

    def test_tail_chain_after_growth(self):
        h = make_system(40)
        for i in range(1, 40):
            assert h.ctx.nodes[i].next_node == i + 1
        assert h.ctx.nodes[40].next_node is None


class TestForwardOp:
    def test_walk_from_node5(self):
        h = make_system(23)
        r, lines = h.do_op("search", 13 * 14 + 2, 5)
        assert r.hops == 3 and r.holder == 14
        assert lines == ["Search message for node 5 to node 8.",
                         "Search message for node 8 to node 12.",
                         "Search message for node 12 to node 14."]

    def test_own_range_zero_hops(self):
        h = make_system(23)
        r, lines = h.do_op("search", 6 * 14 + 1, 7)
        assert r.hops == 0 and lines == []

    def test_duplicate_insert_leaves_store(self):
        h = make_system(8)
        key = 3 * 14
        h.do_op("insert", key, 1)
        snapshot = set(h.ctx.nodes[4].store)
        r, _ = h.do_op("insert", key, 2)
        assert r.outcome == DUPLICATE
        assert h.ctx.nodes[4].store == snapshot

    def test_search_correctness_against_global_scan(self):
        rng = random.Random(5)
        for n in (8, 31, 64):
            h = make_system(n, seed=n, keys=(n * 14) // 3)
            everything = set().union(*(nd.store for nd in h.ctx.nodes.values()))
            for _ in range(150):
                key = rng.randrange(0, n * 14)
                origin = rng.randint(1, n)
                r, _ = h.do_op("search", key, origin)
                assert (r.outcome == FOUND) == (key in everything)
                assert r.holder == responsible_node(key, h.ks)
                assert r.hops <= hop_bound(n)

    def test_range_preservation_after_op_soup(self):
        h = make_system(16, keys=60)
        rng = random.Random(2)
        for _ in range(300):
            op = rng.choice(("insert", "delete", "search"))
            h.do_op(op, rng.randrange(0, 16 * 14), rng.randint(1, 16))
        seen = {}
        for nd in h.ctx.nodes.values():
            lo, hi = nd.key_span(h.ks.b)
            for key in nd.store:
                assert lo <= key <= hi
                assert key not in seen
                seen[key] = nd.id


class TestLifecycle:
    def test_delete_last_key_marks(self):
        h = make_system(8)
        key = 5 * 14 + 7
        h.do_op("insert", key, 1)
        node = h.ctx.nodes[6]
        node.marked_deleted = False
        r, _ = h.do_op("delete", key, 2)
        assert r.outcome == DELETED
        assert node.marked_deleted and not node.store

    def test_insert_revives_marked_node(self):
        h = make_system(8)
        node = h.ctx.nodes[7]
        assert node.marked_deleted
        r, _ = h.do_op("insert", 6 * 14 + 2, 3)
        assert r.outcome == INSERTED
        assert not node.marked_deleted

    def test_introducers_never_marked(self):
        h = make_system(8)
        key = 14 + 3  # node 2's bucket
        h.do_op("insert", key, 1)
        h.do_op("delete", key, 1)
        assert not h.ctx.nodes[2].marked_deleted

    def test_delete_absent_not_found(self):
        h = make_system(8)
        r, _ = h.do_op("delete", 2 * 14 + 1, 1)
        assert r.outcome == NOT_FOUND

    def test_insert_then_search_roundtrip(self):
        h = make_system(8)
        h.do_op("insert", 50, 3)
        r, _ = h.do_op("search", 50, 8)
        assert r.outcome == FOUND

    def test_local_op_out_of_bucket_hard_failure(self):
        from nbdtsim.geometry import RoutingFault
        node = NodeState(id=3, live=True)
        with pytest.raises(RoutingFault):
            local_op(node, MessageType.SEARCH, 0, KeySpace(w=20))


class TestOutOfRange:
    def test_auto_extend_one_join(self):
        h = make_system(8)
        key = 8 * 14  # first key past the frontier
        r, _ = h.do_op("insert", key, 1)
        assert r.outcome == INSERTED
        assert h.ks.n_nodes == 9 and r.holder == 9

    def test_policy_off_replies_out_of_range(self):
        h = make_system(8, config=SimConfig(auto_extend=False))
        r, _ = h.do_op("insert", 8 * 14, 1)
        assert r.outcome == "out_of_range"
        assert h.ks.n_nodes == 8

    def test_extension_cap_reports_partial(self):
        h = make_system(8, config=SimConfig(max_nodes=9))
        key = 10 * 14 + 3  # needs three more peers
        with pytest.raises(OutOfRangeError) as err:
            h.do_op("insert", key, 1)
        assert err.value.needed == 3 and err.value.added == 1
        assert h.ks.n_nodes == 9  # partial extension stays

    def test_policy_decision_values(self):
        ks = KeySpace(b=10, n_nodes=5)
        cfg = SimConfig()
        assert out_of_range_policy(30, ks, cfg).action == "route"
        d = out_of_range_policy(72, ks, cfg)
        assert d.action == "extend" and d.joins_needed == 3
        off = out_of_range_policy(72, ks, SimConfig(auto_extend=False))
        assert off.action == "reject"


class TestReorgWatch:
    def _nodes(self, n, marked):
        out = []
        for i in range(1, n + 1):
            nd = NodeState(id=i, live=True)
            nd.marked_deleted = i <= marked
            out.append(nd)
        return out

    def test_no_marked_no_event(self):
        assert reorg_watch(self._nodes(100, 0), 0.05) is None

    def test_event_past_threshold(self):
        ev = reorg_watch(self._nodes(1000, 51), 0.05)
        assert ev is not None and ev.marked == 51

    def test_threshold_one_requires_all(self):
        assert reorg_watch(self._nodes(10, 9), 1.0) is None
        assert reorg_watch(self._nodes(10, 10), 1.0) is not None

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            reorg_watch(self._nodes(4, 0), 0.0)


class TestJoinPathMatchesOracle:
    def test_grown_network_routes_like_oracle(self):
        # grow via the protocol, then check table-driven reachability
        h = make_system(29)
        dist = oracles.bfs_distances(29)
        for origin in (1, 5, 9, 27):
            for target in range(1, 30):
                if origin == target:
                    continue
                r, lines = h.do_op("search", (target - 1) * 14, origin)
                assert r.holder == target
                assert r.hops == dist[origin, target]
