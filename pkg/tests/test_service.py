"""Control service endpoints, job lifecycle, and the event stream."""

import json
import socket
import threading
import time

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient

from nbdtsim.service import Session, create_app


@pytest.fixture()
def client():
    with TestClient(create_app(Session())) as c:
        yield c


@pytest.fixture()
def live_client():
    """The service on a real TCP port, for streaming tests."""
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(create_app(Session()),
                                           host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    with httpx.Client(base_url=base, timeout=60.0) as c:
        for _ in range(200):
            try:
                c.get("/network/status")
                break
            except httpx.TransportError:
                time.sleep(0.05)
        yield c
    server.should_exit = True
    thread.join(timeout=5)


def wait_job(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/experiments/{job_id}").json()
        if doc["status"] != "running":
            return doc
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


def init_network(client, nodes=23, keys=0, seed=0):
    r = client.post("/network", json={"nodes": nodes, "keys": keys,
                                      "seed": seed})
    assert r.status_code == 202
    doc = wait_job(client, r.json()["job_id"])
    assert doc["status"] == "done"
    return doc


class TestNetwork:
    def test_bootstrap_status(self, client):
        init_network(client, nodes=3)
        doc = client.get("/network/status").json()
        assert doc["node_count"] == 3 and doc["key_count"] == 0

    def test_init_with_keys(self, client):
        init_network(client, nodes=50, keys=120)
        doc = client.get("/network/status").json()
        assert doc["node_count"] == 50 and doc["key_count"] == 120
        assert doc["key_range"] == [0, 50 * 14 - 1]

    def test_reset(self, client):
        init_network(client, nodes=10)
        assert client.post("/network/reset").status_code == 200
        assert client.get("/network/status").json()["node_count"] == 0

    def test_validation_400(self, client):
        assert client.post("/network", json={"nodes": 2}).status_code == 400
        assert client.post("/network",
                           json={"nodes": "many"}).status_code == 422

    def test_second_init_while_running_409(self, client):
        r = client.post("/network", json={"nodes": 800, "keys": 2000})
        assert r.status_code == 202
        second = client.post("/network", json={"nodes": 5})
        assert second.status_code == 409
        wait_job(client, r.json()["job_id"])


class TestOps:
    def test_own_range_zero_hops(self, client):
        init_network(client)
        r = client.post("/ops", json={"op": "insert", "key": 4 * 14 + 1,
                                      "origin": 5})
        assert r.status_code == 200
        r = client.post("/ops", json={"op": "search", "key": 4 * 14 + 1,
                                      "origin": 5})
        assert r.json()["hops"] == 0 and r.json()["outcome"] == "found"

    def test_walk_log_lines(self, client):
        init_network(client)
        r = client.post("/ops", json={"op": "search", "key": 13 * 14,
                                      "origin": 5}).json()
        assert r["hops"] == 3
        assert r["log_lines"] == [
            "Search message for node 5 to node 8.",
            "Search message for node 8 to node 12.",
            "Search message for node 12 to node 14."]

    def test_bad_origin_400(self, client):
        init_network(client)
        r = client.post("/ops", json={"op": "search", "key": 0,
                                      "origin": 99})
        assert r.status_code == 400


class TestExperiments:
    def test_experiment_roundtrip(self, client):
        init_network(client, nodes=30, keys=100)
        r = client.post("/experiments", json={
            "op": "search", "trials": 40, "dist": {"kind": "uniform",
                                                   "seed": 5}})
        assert r.status_code == 202
        doc = wait_job(client, r.json()["id"])
        result = doc["result"]
        assert len(result["per_trial_hops"]) == 40
        assert result["max_hops"] >= result["mean_hops"]

    def test_unknown_job_404(self, client):
        assert client.get("/experiments/nope").status_code == 404

    def test_export_parity_with_library(self, client):
        from nbdtsim.experiments import export_report
        init_network(client, nodes=20, keys=50)
        r = client.post("/experiments", json={"op": "search", "trials": 6,
                                              "dist": {"kind": "uniform"}})
        job_id = r.json()["id"]
        doc = wait_job(client, job_id)
        served = client.get(f"/experiments/{job_id}/export",
                            params={"format": "csv"}).text
        assert served == export_report(doc["result"], "csv")

    def test_churn_then_load(self, client):
        init_network(client, nodes=20, keys=60)
        r = client.post("/churn", json={"updates": 30,
                                        "dist": {"kind": "uniform",
                                                 "seed": 2}})
        assert r.status_code == 202
        doc = wait_job(client, r.json()["id"])
        assert doc["status"] == "done"
        load = client.get("/load").json()
        assert sum(load["counts"]) == \
            client.get("/network/status").json()["key_count"]

    def test_experiment_before_init_400(self, client):
        r = client.post("/experiments", json={"op": "search", "trials": 5,
                                              "dist": {"kind": "uniform"}})
        assert r.status_code == 400


class TestEventStream:
    def _read_events(self, live_client, params, trigger):
        events = []
        with live_client.stream("GET", "/events", params=params) as stream:
            worker = threading.Thread(target=trigger, daemon=True)
            worker.start()
            kind = None
            for line in stream.iter_lines():
                if line.startswith("event: "):
                    kind = line[7:]
                elif line.startswith("data: ") and kind:
                    events.append((kind, line[6:]))
                    kind = None
            worker.join(timeout=10)
        return events

    def test_log_lines_verbatim_in_order(self, live_client):
        init_network(live_client)

        def trigger():
            time.sleep(0.2)  # let the stream subscribe first
            live_client.post("/ops", json={"op": "search", "key": 13 * 14,
                                           "origin": 5})

        events = self._read_events(
            live_client, {"max_events": 3, "timeout": 10}, trigger)
        logs = [d for k, d in events if k == "log"]
        assert logs == [
            "Search message for node 5 to node 8.",
            "Search message for node 8 to node 12.",
            "Search message for node 12 to node 14."]

    def test_progress_events_during_init(self, live_client):
        def trigger():
            time.sleep(0.2)
            live_client.post("/network", json={"nodes": 300, "keys": 0})

        events = self._read_events(
            live_client, {"max_events": 5, "timeout": 20}, trigger)
        kinds = [k for k, _ in events]
        assert "job" in kinds and "progress" in kinds
        progress = [json.loads(d) for k, d in events if k == "progress"]
        assert progress and progress[0]["phase"] == "join"

    def test_kernel_line_streamed_from_origin_3(self, live_client):
        init_network(live_client, nodes=64)

        def trigger():
            time.sleep(0.2)
            live_client.post("/ops", json={"op": "search", "key": 44 * 14,
                                           "origin": 3})

        events = self._read_events(
            live_client, {"max_events": 1, "timeout": 10}, trigger)
        logs = [d for k, d in events if k == "log"]
        assert logs[0].startswith("Search message for node 3 to node ")
