from unittest.mock import MagicMock, patch

import pytest
import requests

from src.client.peer_client import HttpTransport, PeerClient, RemoteMetadataStore
from src.core.errors import InvalidHostsError, MetadataExistsError, TransportError, UnknownKeyError, UnknownNodeError
from src.service.node_service import StorePath
from src.store.metadata_store import AccessEvent

PEERS = {"node-1": "http://localhost:8001/", "node-2": "http://localhost:8002"}


def reply(status_code=200, json_data=None, content=b""):
    response = MagicMock()
    response.status_code = status_code
    response.json.return_value = json_data if json_data is not None else {}
    response.content = content
    response.text = str(json_data)
    return response


@pytest.fixture
def client():
    peer_client = PeerClient(PEERS, timeout=2.0)
    peer_client.session = MagicMock()
    return peer_client


class TestPeerClient:
    """Test cases for PeerClient"""

    def test_strips_trailing_slash(self, client):
        """Test peer URLs are normalized"""
        client.session.request.return_value = reply(json_data={"node": "node-1"})
        client.call("node-1", "GET", "/health")
        client.session.request.assert_called_once_with("GET", "http://localhost:8001/health", timeout=2.0)

    def test_unknown_node(self, client):
        """Test calling a node that is not a peer"""
        with pytest.raises(UnknownNodeError):
            client.call("node-9", "GET", "/health")

    def test_connection_failure(self, client):
        """Test connection errors become TransportError"""
        client.session.request.side_effect = requests.ConnectionError("refused")
        with pytest.raises(TransportError, match="Failed to reach node-2"):
            client.call("node-2", "GET", "/health")

    def test_unexpected_status(self, client):
        """Test an unexpected status code becomes TransportError"""
        client.session.request.return_value = reply(500, {"detail": "boom"})
        with pytest.raises(TransportError, match="returned 500"):
            client.call("node-2", "GET", "/health")

    def test_check_all_peers(self, client):
        """Test online and offline peers are both reported"""
        client.session.request.side_effect = [reply(json_data={"node": "node-1", "role": "serializer"}), requests.Timeout("slow")]
        status = client.check_all_peers()
        assert status["node-1"] == {"status": "online", "node": "node-1", "role": "serializer"}
        assert status["node-2"]["status"] == "offline"


class TestHttpTransport:
    """Test cases for HttpTransport"""

    def setup_method(self):
        self.peer_client = PeerClient(PEERS)
        self.peer_client.session = MagicMock()

    def transport(self, topology, inject_latency=False):
        return HttpTransport(self.peer_client, topology, inject_latency=inject_latency)

    def test_get_found(self, topology):
        """Test a remote read returns the value and charges the hop"""
        self.peer_client.session.request.return_value = reply(content=b"value")
        payload, latency = self.transport(topology).get("node-1", "node-2", "k")
        assert payload == b"value"
        assert latency == 100

    def test_get_missing(self, topology):
        """Test 404 means the node does not store the key"""
        self.peer_client.session.request.return_value = reply(404)
        payload, _ = self.transport(topology).get("node-1", "node-2", "k")
        assert payload is None

    def test_delete(self, topology):
        """Test delete reports whether the key existed"""
        self.peer_client.session.request.return_value = reply(json_data={"existed": True})
        payload, _ = self.transport(topology).delete("node-1", "node-2", "k")
        assert payload is True

    def test_relay_store(self, topology):
        """Test the serializer's answer is decoded with its own latency"""
        self.peer_client.session.request.return_value = reply(
            json_data={"success": True, "path": "serializer-direct", "latencyMillis": 100}
        )
        result, hop = self.transport(topology).relay_store("node-2", "node-1", "k", b"v")
        assert hop == 100
        assert result.success
        assert result.path is StorePath.SERIALIZER_DIRECT
        assert result.latency_millis == 100
        _, kwargs = self.peer_client.session.request.call_args
        assert kwargs["params"] == {"origin": "node-2"}
        assert kwargs["data"] == b"v"

    def test_injected_latency_sleeps(self, topology):
        """Test injected latency is slept for remote hops only"""
        self.peer_client.session.request.return_value = reply(json_data={"stored": True})
        with patch("src.client.peer_client.time.sleep") as sleep:
            self.transport(topology, inject_latency=True).put("node-1", "node-2", "k", b"v")
        sleep.assert_called_once_with(0.1)


class TestRemoteMetadataStore:
    """Test cases for RemoteMetadataStore"""

    def setup_method(self):
        self.peer_client = PeerClient(PEERS)
        self.peer_client.session = MagicMock()
        self.store = RemoteMetadataStore(self.peer_client, "node-1")

    def test_get(self, example_metadata, example_metadata_json):
        """Test metadata is parsed from its canonical form"""
        self.peer_client.session.request.return_value = reply(json_data=example_metadata_json)
        assert self.store.get("k") == example_metadata

    def test_get_missing(self):
        """Test 404 is an absent key"""
        self.peer_client.session.request.return_value = reply(404)
        assert self.store.get("k") is None

    def test_create_conflict(self):
        """Test 409 is a lost creation race"""
        self.peer_client.session.request.return_value = reply(409)
        with pytest.raises(MetadataExistsError):
            self.store.create("k", "node-2", 10)

    def test_record_access(self):
        """Test access events are posted with wire names"""
        self.peer_client.session.request.return_value = reply(json_data={"recorded": True})
        assert self.store.record_access(AccessEvent("k", "node-2", 10)) is True
        _, kwargs = self.peer_client.session.request.call_args
        assert kwargs["json"] == {"accessor": "node-2", "atMillis": 10}

    @pytest.mark.parametrize("status, error", [(400, InvalidHostsError), (404, UnknownKeyError)])
    def test_set_hosts_errors(self, status, error):
        """Test rejected host updates map back to their errors"""
        self.peer_client.session.request.return_value = reply(status, {"detail": "rejected"})
        with pytest.raises(error):
            self.store.set_hosts("k", {"node-1"})

    def test_scan(self, example_metadata, example_metadata_json):
        """Test scan entries are decoded"""
        self.peer_client.session.request.return_value = reply(
            json_data={"entries": [{"key": "k", "metadata": example_metadata_json}]}
        )
        assert self.store.scan(["k"]) == [("k", example_metadata)]

    def test_scan_no_keys(self):
        """Test an empty key list needs no round trip"""
        assert self.store.scan([]) == []
        self.peer_client.session.request.assert_not_called()

    def test_keys_are_percent_encoded(self, example_metadata_json):
        """Test reserved characters in a key cannot leak into the query or fragment"""
        self.peer_client.session.request.return_value = reply(json_data=example_metadata_json)
        self.store.get("a?b#c%d/e")
        args, _ = self.peer_client.session.request.call_args
        assert args == ("GET", "http://localhost:8001/meta/a%3Fb%23c%25d%2Fe")
