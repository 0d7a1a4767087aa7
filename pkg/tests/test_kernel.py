"""Buffer semantics, logging, determinism, and the event loop."""

import random

import pytest

from nbdtsim.kernel import (CLIENT, Broadcast, FaultModel, JoinPayload,
                            KeyPayload, Message, MessageType, NetworkState,
                            run_until_quiescent)


def key_msg(src, dst, mtype, key=0, origin=None, token=0):
    return Message(src, dst, mtype,
                   KeyPayload(key, src if origin is None else origin, token))


class TestSend:
    def test_search_log_line_exact(self):
        net = NetworkState()
        net.send_message(key_msg(3, 45, MessageType.SEARCH))
        assert net.log == ["Search message for node 3 to node 45."]

    def test_insert_delete_log_names(self):
        net = NetworkState()
        net.send_message(key_msg(2, 7, MessageType.INSERT))
        net.send_message(key_msg(7, 2, MessageType.DELETE))
        assert net.log == ["Insert message for node 2 to node 7.",
                           "Delete message for node 7 to node 2."]

    def test_replies_and_joins_not_logged(self):
        net = NetworkState()
        net.send_message(Message(4, 9, MessageType.JOIN_REPLY,
                                 JoinPayload((1,), (), None, None, 9)))
        net.send_message(Message(1, 2, MessageType.JOIN, None))
        assert net.log == []
        assert net.counter == 2

    def test_client_sends_counted_not_logged(self):
        net = NetworkState()
        net.send_message(key_msg(CLIENT, 5, MessageType.SEARCH))
        assert net.counter == 1 and net.log == []

    def test_counter_counts_every_send(self):
        net = NetworkState()
        for i in range(5):
            net.send_message(key_msg(1, 2 + i, MessageType.SEARCH))
        assert net.counter == 5

    def test_log_mirrors_to_file(self, tmp_path):
        path = tmp_path / "ops.log"
        net = NetworkState(log_path=str(path))
        net.send_message(key_msg(3, 45, MessageType.SEARCH))
        net.send_message(key_msg(1, 9, MessageType.INSERT))
        net.close()
        assert path.read_text() == ("Search message for node 3 to node 45.\n"
                                    "Insert message for node 1 to node 9.\n")

    def test_log_lines_parse_back(self):
        net = NetworkState()
        rng = random.Random(3)
        sent = []
        for _ in range(200):
            t = rng.choice(list(MessageType))
            src, dst = rng.randint(1, 50), rng.randint(1, 50)
            payload = (KeyPayload(1, src, 0) if t in
                       (MessageType.SEARCH, MessageType.INSERT,
                        MessageType.DELETE) else None)
            net.send_message(Message(src, dst, t, payload))
            if payload is not None:
                sent.append((t.name.capitalize(), src, dst))
        assert len(net.log) == len(sent)
        for line, (op, src, dst) in zip(net.log, sent):
            words = line.split()
            assert (words[0], int(words[4]), int(words[7][:-1])) == (op, src, dst)

    def test_rejects_client_destination(self):
        net = NetworkState()
        with pytest.raises(ValueError):
            net.send_message(key_msg(1, 0, MessageType.SEARCH))


class TestBufferAccess:
    def test_msg_for_node_empty(self):
        assert NetworkState().msg_for_node(4) is None

    def test_msg_for_node_oldest_first(self):
        net = NetworkState()
        a = key_msg(1, 2, MessageType.SEARCH, key=10)
        b = key_msg(1, 5, MessageType.SEARCH, key=11)
        c = key_msg(1, 2, MessageType.SEARCH, key=12)
        for m in (a, b, c):
            net.send_message(m)
        assert net.msg_for_node(2) == 0
        assert net.msg_for_node(5) == 1
        assert net.msg_for_node(9) is None

    def test_recv_removes_and_preserves_order(self):
        net = NetworkState()
        msgs = [key_msg(1, 2, MessageType.SEARCH, key=10),
                key_msg(1, 5, MessageType.SEARCH, key=11),
                key_msg(1, 2, MessageType.SEARCH, key=12)]
        for m in msgs:
            net.send_message(m)
        got = net.recv_message(2)
        assert got.payload.key == 10
        assert [m.payload.key for m in net._ordered()] == [11, 12]
        assert net.recv_message(2).payload.key == 12
        assert net.buffered() == 1

    def test_recv_without_pending_is_hard_failure(self):
        with pytest.raises(LookupError):
            NetworkState().recv_message(3)

    def test_fifo_per_destination(self):
        net = NetworkState()
        rng = random.Random(11)
        sends = {}
        for i in range(500):
            dst = rng.randint(1, 8)
            net.send_message(key_msg(1, dst, MessageType.SEARCH, key=i))
            sends.setdefault(dst, []).append(i)
        seen = {}
        while net.buffered():
            m = net.pop_next()
            seen.setdefault(m.dst, []).append(m.payload.key)
        assert seen == sends


class TestBroadcast:
    def test_counter_increases_by_range(self):
        net = NetworkState()
        net.broadcast(Message(1, 0, MessageType.JOIN,
                              JoinPayload((1,), (), None, None, 3)), 1, 3)
        assert net.counter == 3

    def test_single_id_range_equals_send(self):
        a, b = NetworkState(), NetworkState()
        payload = JoinPayload((1, 2), (), None, None, 5)
        a.broadcast(Message(9, 0, MessageType.JOIN, payload), 5, 5)
        b.send_message(Message(9, 5, MessageType.JOIN, payload))
        assert a.counter == b.counter == 1
        assert a.peek_next().dst == b.peek_next().dst == 5

    def test_membership_via_msg_for_node(self):
        net = NetworkState()
        net.broadcast(Message(9, 0, MessageType.JOIN,
                              JoinPayload((1,), (), None, None, 8)), 1, 7)
        assert net.msg_for_node(6) is not None
        assert net.msg_for_node(8) is None


class TestRunLoop:
    def test_empty_buffer(self):
        net = NetworkState()
        report = run_until_quiescent(net, lambda m: [])
        assert report.deliveries == 0
        assert report.trace_hash == NetworkState().trace_hash()

    def test_conservation_at_checkpoints(self):
        net = NetworkState()

        def chatter(msg):
            if msg.payload.key > 0:
                return [key_msg(msg.dst, 1 + msg.payload.key % 7,
                                MessageType.SEARCH, key=msg.payload.key - 1)]
            return []

        for i in range(10):
            net.send_message(key_msg(1, 2, MessageType.SEARCH, key=i))
            assert net.conserved
        run_until_quiescent(net, chatter)
        assert net.conserved and net.buffered() == 0

    def test_budget_livelock_names_oldest(self):
        net = NetworkState()

        def ping(msg):
            return [key_msg(msg.dst, msg.src or 1, MessageType.SEARCH,
                            key=msg.payload.key + 1)]

        net.send_message(key_msg(1, 2, MessageType.SEARCH, key=0))
        report = run_until_quiescent(net, ping, budget=5)
        assert report.deliveries == 5
        assert report.livelock is not None
        assert "oldest undelivered" in report.livelock
        assert net.conserved

    def test_identical_scripts_identical_hashes(self):
        def run_script(seed):
            net = NetworkState()
            rng = random.Random(seed)

            def handler(msg):
                if msg.payload.key % 3 == 0 and msg.payload.key:
                    return [key_msg(msg.dst, 1 + msg.payload.key % 5,
                                    MessageType.INSERT,
                                    key=msg.payload.key - 3)]
                return []

            for _ in range(50):
                net.send_message(key_msg(rng.randint(1, 9), rng.randint(1, 9),
                                         MessageType.SEARCH,
                                         key=rng.randint(0, 30)))
            report = run_until_quiescent(net, handler)
            return report.trace_hash, list(net.log)

        h1, log1 = run_script(42)
        h2, log2 = run_script(42)
        h3, _ = run_script(43)
        assert h1 == h2 and log1 == log2
        assert h1 != h3

    def test_broadcast_directive_from_handler(self):
        net = NetworkState()
        notice = JoinPayload((1, 2), (), None, None, 4)

        def handler(msg):
            if msg.type == MessageType.SEARCH:
                return [Broadcast(Message(msg.dst, 0, MessageType.JOIN,
                                          notice), 1, 3)]
            return []

        net.send_message(key_msg(1, 2, MessageType.SEARCH))
        report = run_until_quiescent(net, handler)
        assert report.deliveries == 4
        assert net.counter == 4


class TestJoinGate:
    def test_second_join_held_until_reply(self):
        net = NetworkState()
        net.send_message(Message(CLIENT, 1, MessageType.JOIN, None))
        net.send_message(Message(CLIENT, 1, MessageType.JOIN, None))
        assert net.buffered() == 1 and len(net.gate) == 1
        assert net.counter == 1

        first = net.pop_next()
        assert first.type == MessageType.JOIN
        # an admission reply releases the gate
        net.send_message(Message(1, 2, MessageType.JOIN_REPLY,
                                 JoinPayload((1,), (), 1, None, 2)))
        net.pop_next()
        assert net.buffered() == 1 and not net.gate
        assert net.counter == 3

    def test_node_to_node_join_bypasses_gate(self):
        net = NetworkState()
        net.send_message(Message(CLIENT, 1, MessageType.JOIN, None))
        net.send_message(Message(1, 4, MessageType.JOIN, None))
        assert net.buffered() == 2 and not net.gate


class TestFaultModel:
    def test_default_off_is_pure_fifo(self):
        net = NetworkState(fault_model=FaultModel())
        assert net.fault_model is None

    def test_drops_are_counted_separately(self):
        net = NetworkState(fault_model=FaultModel(drop_prob=0.5, seed=1))
        for i in range(200):
            net.send_message(key_msg(1, 2, MessageType.SEARCH, key=i))
        assert net.dropped > 0
        assert net.counter + net.dropped == 200
        assert net.conserved

    def test_seeded_faults_replay(self):
        def run(seed):
            net = NetworkState(fault_model=FaultModel(drop_prob=0.3,
                                                      delay_max=4, seed=seed))
            for i in range(100):
                net.send_message(key_msg(1, 1 + i % 5, MessageType.SEARCH,
                                         key=i))
            return run_until_quiescent(net, lambda m: []).trace_hash

        assert run(9) == run(9)
        assert run(9) != run(10)

    def test_delay_reorders_globally_not_per_pair(self):
        net = NetworkState(fault_model=FaultModel(delay_max=3, seed=2))
        for i in range(50):
            net.send_message(key_msg(1, 2, MessageType.SEARCH, key=i))
        keys = []
        while net.buffered():
            keys.append(net.pop_next().payload.key)
        assert sorted(keys) == list(range(50))


class TestReset:
    def test_reset_clears_everything(self):
        net = NetworkState()
        net.send_message(key_msg(3, 45, MessageType.SEARCH))
        net.pop_next()
        baseline = net.trace_hash()
        net.reset()
        assert net.counter == 0 and net.delivered == 0
        assert net.buffered() == 0 and net.log == []
        assert net.trace_hash() == NetworkState().trace_hash()
        net.send_message(key_msg(3, 45, MessageType.SEARCH))
        net.pop_next()
        assert net.trace_hash() == baseline
