from urllib.parse import quote, urlsplit

import pytest
from fastapi.testclient import TestClient

from src.core.model import KeyMetadata, OwnershipPolicy
from src.servers.node_server import build_http_node, create_app
from src.sim.cluster import SimConfig, build_cluster, seed_metadata

PEERS = {"node-1": "http://node-1", "node-2": "http://node-2", "node-3": "http://node-3"}


def hosted(*nodes):
    return KeyMetadata(total_access_count=0, hosts=set(nodes), host_accesses={}, last_accessed_date=0)


class AppRouter:
    """Stands in for a requests.Session, delivering each call to the in-process app it names"""

    def __init__(self, apps):
        self.clients = {PEERS[node]: TestClient(app) for node, app in apps.items()}

    def request(self, method, url, timeout=None, data=None, **kwargs):
        parts = urlsplit(url)
        if data is not None:
            kwargs["content"] = data
        target = parts.path + (f"?{parts.query}" if parts.query else "")
        return self.clients[f"{parts.scheme}://{parts.netloc}"].request(method, target, **kwargs)

    def close(self):
        pass


class TestNodeApi:
    """Test cases for one node's HTTP interface"""

    def setup_method(self):
        self.cluster = build_cluster(SimConfig(node_count=3), OwnershipPolicy(coefficient=0.33))
        self.clients = {
            node: TestClient(create_app(service, self.cluster.daemon if service.is_serializer else None))
            for node, service in self.cluster.services.items()
        }

    def test_health(self):
        """Test the role is reported"""
        assert self.clients["node-1"].get("/health").json() == {"node": "node-1", "role": "serializer"}
        assert self.clients["node-2"].get("/health").json()["role"] == "replica"

    def test_put_then_get(self):
        """Test a created key is served locally by its creator"""
        response = self.clients["node-2"].put("/kv/k", content=b"hello")
        assert response.status_code == 200
        assert response.json() == {"success": True, "path": "created"}

        response = self.clients["node-2"].get("/kv/k")
        assert response.status_code == 200
        assert response.content == b"hello"
        assert response.headers["X-Served-By"] == "node-2"
        assert response.headers["X-Remote"] == "false"

    def test_remote_read_headers(self):
        """Test a non-host names the owner that served it"""
        self.clients["node-3"].put("/kv/k", content=b"v")
        response = self.clients["node-1"].get("/kv/k")
        assert response.headers["X-Served-By"] == "node-3"
        assert response.headers["X-Remote"] == "true"

    def test_missing_key(self):
        """Test a key without metadata"""
        assert self.clients["node-1"].get("/kv/missing").status_code == 404

    def test_divergence(self):
        """Test an owner missing the value surfaces as a gateway error"""
        self.cluster.metadata.put("k", hosted("node-3"))
        assert self.clients["node-1"].get("/kv/k").status_code == 502

    def test_failed_write(self):
        """Test a rejected write reports success=false"""
        small = build_cluster(SimConfig(node_count=3, max_value_bytes=2), OwnershipPolicy(coefficient=0.33))
        client = TestClient(create_app(small.services["node-1"]))
        response = client.put("/kv/k", content=b"too large")
        assert response.status_code == 502
        assert response.json()["success"] is False

    def test_metadata_endpoints(self, example_metadata_json):
        """Test reading and installing canonical metadata"""
        client = self.clients["node-1"]
        assert client.get("/meta/k").status_code == 404
        seed_metadata(self.cluster, "k", KeyMetadata.from_dict(example_metadata_json), b"v")
        assert client.get("/meta/k").json() == example_metadata_json

        response = client.put("/meta/other", json=example_metadata_json)
        assert response.status_code == 200
        assert self.cluster.metadata.get("other").hosts == {"node-1", "node-3"}

    def test_malformed_metadata(self, example_metadata_json):
        """Test broken conservation is refused"""
        response = self.clients["node-1"].put("/meta/k", json={**example_metadata_json, "totalAccessCount": 1})
        assert response.status_code == 422
        assert self.cluster.metadata.get("k") is None

    def test_internal_kv(self):
        """Test the raw data-layer endpoints"""
        client = self.clients["node-2"]
        assert client.get("/internal/kv/k").status_code == 404
        assert client.put("/internal/kv/k", content=b"v").json() == {"stored": True}
        assert client.get("/internal/kv/k").content == b"v"
        assert client.delete("/internal/kv/k").json() == {"existed": True}
        assert client.delete("/internal/kv/k").json() == {"existed": False}

    def test_internal_put_capacity(self):
        """Test a value over the node's limit"""
        small = build_cluster(SimConfig(node_count=3, max_value_bytes=2), OwnershipPolicy(coefficient=0.33))
        client = TestClient(create_app(small.services["node-2"]))
        assert client.put("/internal/kv/k", content=b"too large").status_code == 413

    def test_relay(self):
        """Test the serializer applies a relayed write to every owner"""
        seed_metadata(self.cluster, "k", hosted("node-2", "node-3"), b"v0")
        response = self.clients["node-1"].post("/internal/relay/k", params={"origin": "node-2"}, content=b"v1")
        assert response.json() == {"success": True, "path": "serializer-direct", "latencyMillis": 200}
        assert self.cluster.backends["node-3"].get("k") == b"v1"
        assert self.cluster.serializer.last_arrival("k").origin == "node-2"

    def test_relay_to_replica_refused(self):
        """Test only the serializer accepts relayed writes"""
        seed_metadata(self.cluster, "k", hosted("node-3"), b"v0")
        response = self.clients["node-2"].post("/internal/relay/k", params={"origin": "node-3"}, content=b"v1")
        assert response.json()["success"] is False

    def test_internal_metadata(self):
        """Test create, access, hosts and delete on the metadata layer"""
        client = self.clients["node-1"]
        body = {"initialHost": "node-2", "atMillis": 10}
        assert client.post("/internal/meta/k/create", json=body).status_code == 201
        assert client.post("/internal/meta/k/create", json=body).status_code == 409

        access = {"accessor": "node-3", "atMillis": 20}
        assert client.post("/internal/meta/k/access", json=access).json() == {"recorded": True}
        assert client.post("/internal/meta/missing/access", json=access).json() == {"recorded": False}

        assert client.put("/internal/meta/k/hosts", json={"hosts": []}).status_code == 400
        assert client.put("/internal/meta/missing/hosts", json={"hosts": ["node-1"]}).status_code == 404
        assert client.put("/internal/meta/k/hosts", json={"hosts": ["node-3"]}).json() == {"hosts": ["node-3"]}

        meta = self.cluster.metadata.get("k")
        assert meta.hosts == {"node-3"}
        assert meta.host_accesses == {"node-3": 1}

        assert client.delete("/internal/meta/k").json() == {"deleted": True}
        assert self.cluster.metadata.get("k") is None

    def test_scan(self):
        """Test scanning all or selected keys"""
        for key in ("a", "b"):
            self.cluster.store("node-1", key, b"v")
        client = self.clients["node-1"]
        assert sorted(e["key"] for e in client.get("/internal/meta").json()["entries"]) == ["a", "b"]
        entries = client.get("/internal/meta", params={"key": ["b"]}).json()["entries"]
        assert [e["key"] for e in entries] == ["b"]

    def test_daemon_pass(self):
        """Test triggering a pass on the daemon's node"""
        self.cluster.store("node-3", "k", b"v")
        self.cluster.fetch("node-2", "k")
        response = self.clients["node-1"].post("/internal/daemon/pass")
        assert response.status_code == 200
        data = response.json()
        assert data["perKey"]["k"]["finalHosts"] == ["node-2"]
        assert data["report"]["replications"] == 1

    def test_daemon_pass_without_daemon(self):
        """Test nodes without a daemon refuse the trigger"""
        assert self.clients["node-2"].post("/internal/daemon/pass").status_code == 404


class TestSplitDeployment:
    """Three HTTP nodes talking over the peer protocol"""

    def setup_method(self):
        policy = OwnershipPolicy(coefficient=0.33, daemon_interval_millis=3_600_000)
        self.apps = {
            node: build_http_node(node, PEERS, "node-1", policy, with_daemon=node == "node-1") for node in PEERS
        }
        router = AppRouter(self.apps)
        for app in self.apps.values():
            app.state.service.transport.client.session = router
        self.clients = {node: TestClient(app) for node, app in self.apps.items()}

    def teardown_method(self):
        for app in self.apps.values():
            if app.state.daemon is not None:
                app.state.daemon.stop()
            app.state.service.recorder.close()

    def flush(self):
        for app in self.apps.values():
            app.state.service.recorder.flush()

    def test_repartition_over_http(self):
        """Test a key read from node-2 migrates there and later writes follow it"""
        assert self.clients["node-3"].put("/kv/k", content=b"v1").json()["path"] == "created"
        assert self.clients["node-1"].get("/meta/k").json()["hosts"] == ["node-3"]

        for _ in range(3):
            response = self.clients["node-2"].get("/kv/k")
            assert response.content == b"v1"
            assert response.headers["X-Served-By"] == "node-3"
        self.flush()
        assert self.clients["node-1"].get("/meta/k").json()["hostAccesses"] == {"node-2": 3}

        plan = self.clients["node-1"].post("/internal/daemon/pass").json()
        assert plan["perKey"]["k"] == {"newHosts": ["node-2"], "obsoleteHosts": ["node-3"], "finalHosts": ["node-2"]}

        response = self.clients["node-2"].get("/kv/k")
        assert response.headers["X-Remote"] == "false"
        assert self.clients["node-3"].get("/internal/kv/k").status_code == 404

        response = self.clients["node-3"].put("/kv/k", content=b"v2")
        assert response.json() == {"success": True, "path": "serializer-relayed"}
        assert self.clients["node-2"].get("/kv/k").content == b"v2"

    def test_peer_health(self):
        """Test every peer answers its health check"""
        status = self.apps["node-2"].state.service.transport.client.check_all_peers()
        assert {node: entry["status"] for node, entry in status.items()} == dict.fromkeys(PEERS, "online")
        assert status["node-1"]["role"] == "serializer"

    @pytest.mark.parametrize("node", ["node-2", "node-3"])
    def test_replicas_share_metadata(self, node):
        """Test a key created on any node is visible through the serializer's metadata"""
        self.clients[node].put("/kv/shared", content=b"v")
        assert self.clients["node-1"].get("/meta/shared").json()["hosts"] == [node]

    @pytest.mark.parametrize("key", ["a?b", "tag#1", "100%", "dir/file", "sp ace"])
    def test_reserved_characters_in_keys(self, key):
        """Test keys with URL-reserved characters survive every peer hop"""
        path = f"/kv/{quote(key, safe='')}"
        assert self.clients["node-3"].put(path, content=b"v1").json() == {"success": True, "path": "created"}
        assert self.clients["node-1"].get(f"/meta/{quote(key, safe='')}").json()["hosts"] == ["node-3"]

        response = self.clients["node-2"].get(path)
        assert response.status_code == 200
        assert response.content == b"v1"
        assert response.headers["X-Served-By"] == "node-3"

        assert self.clients["node-2"].put(path, content=b"v2").json() == {"success": True, "path": "serializer-relayed"}
        self.flush()
        assert self.clients["node-1"].get(f"/meta/{quote(key, safe='')}").json()["hostAccesses"] == {"node-2": 1}

        plan = self.clients["node-1"].post("/internal/daemon/pass").json()
        assert plan["perKey"][key]["finalHosts"] == ["node-2"]
        assert self.clients["node-2"].get(path).content == b"v2"
        assert self.clients["node-3"].get(f"/internal/kv/{quote(key, safe='')}").status_code == 404
