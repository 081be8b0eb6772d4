import logging
import time
from typing import Any, Dict, Iterable, List, Optional, Tuple
from urllib.parse import quote

import requests

from ..core.errors import InvalidHostsError, MetadataExistsError, TransportError, UnknownKeyError, UnknownNodeError
from ..core.model import ClusterTopology, KeyMetadata, NodeId
from ..service.node_service import StoreResult
from ..service.transport import Transport, TransportReply
from ..store.kv_backend import StoredValue
from ..store.metadata_store import AccessEvent, MetadataStore

logger = logging.getLogger(__name__)

OCTET_STREAM = {"Content-Type": "application/octet-stream"}


def key_path(prefix: str, key: str, suffix: str = "") -> str:
    """URL path naming a key; reserved characters in the key are percent-encoded"""
    return f"{prefix}/{quote(key, safe='')}{suffix}"


class PeerClient:
    """Client for the internal HTTP endpoints of other nodes"""

    def __init__(self, peers: Dict[NodeId, str], timeout: float = 5.0):
        self.peers = {node: url.rstrip("/") for node, url in peers.items()}
        self.timeout = timeout
        self.session = requests.Session()

    def call(self, node: NodeId, method: str, path: str, expected: Tuple[int, ...] = (200,), **kwargs) -> requests.Response:
        """Issue one request; raises TransportError on connection failure or an unexpected status"""
        if node not in self.peers:
            raise UnknownNodeError(node)
        url = f"{self.peers[node]}{path}"
        try:
            response = self.session.request(method, url, timeout=self.timeout, **kwargs)
        except requests.RequestException as e:
            raise TransportError(f"Failed to reach {node} at {url}: {e}") from e
        if response.status_code not in expected:
            raise TransportError(f"{node} returned {response.status_code} for {method} {path}: {response.text}")
        return response

    def health(self, node: NodeId) -> Dict[str, Any]:
        return self.call(node, "GET", "/health").json()

    def check_all_peers(self) -> Dict[NodeId, Dict[str, Any]]:
        """Call every peer's /health"""
        results = {}
        for node in self.peers:
            try:
                results[node] = {"status": "online", **self.health(node)}
            except TransportError as e:
                results[node] = {"status": "offline", "error": str(e)}
        return results

    def close(self):
        self.session.close()


class HttpTransport(Transport):
    """Node-to-node transport over HTTP; charges topology latency per hop.

    With inject_latency the charge is also slept, reproducing the remote
    penalty on a single machine.
    """

    def __init__(self, client: PeerClient, topology: ClusterTopology, inject_latency: bool = False):
        self.client = client
        self.topology = topology
        self.inject_latency = inject_latency

    def _charge(self, source: NodeId, target: NodeId) -> int:
        millis = self.topology.latency(source, target)
        if self.inject_latency and millis:
            time.sleep(millis / 1000)
        return millis

    def get(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        charged = self._charge(source, target)
        response = self.client.call(target, "GET", key_path("/internal/kv", key), expected=(200, 404))
        if response.status_code == 404:
            return TransportReply(None, charged)
        return TransportReply(response.content, charged)

    def put(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        charged = self._charge(source, target)
        self.client.call(target, "PUT", key_path("/internal/kv", key), data=value, headers=OCTET_STREAM)
        return TransportReply(None, charged)

    def delete(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        charged = self._charge(source, target)
        response = self.client.call(target, "DELETE", key_path("/internal/kv", key))
        return TransportReply(bool(response.json().get("existed")), charged)

    def relay_store(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        charged = self._charge(source, target)
        response = self.client.call(
            target, "POST", key_path("/internal/relay", key), params={"origin": source}, data=value, headers=OCTET_STREAM
        )
        data = response.json()
        return TransportReply(StoreResult.from_dict(data, latency_millis=data.get("latencyMillis", 0)), charged)

    def close(self):
        self.client.close()


class RemoteMetadataStore(MetadataStore):
    """The metadata layer as seen from a node that does not host it"""

    def __init__(self, client: PeerClient, metadata_node: NodeId):
        self.client = client
        self.metadata_node = metadata_node

    def _call(self, method: str, path: str, expected: Tuple[int, ...] = (200,), **kwargs) -> requests.Response:
        return self.client.call(self.metadata_node, method, path, expected=expected, **kwargs)

    def get(self, key: str) -> Optional[KeyMetadata]:
        response = self._call("GET", key_path("/meta", key), expected=(200, 404))
        if response.status_code == 404:
            return None
        return KeyMetadata.from_dict(response.json())

    def create(self, key: str, initial_host: NodeId, at_millis: int) -> None:
        response = self._call(
            "POST",
            key_path("/internal/meta", key, "/create"),
            expected=(201, 409),
            json={"initialHost": initial_host, "atMillis": at_millis},
        )
        if response.status_code == 409:
            raise MetadataExistsError(f"metadata for {key} already exists")

    def record_access(self, event: AccessEvent) -> bool:
        response = self._call(
            "POST",
            key_path("/internal/meta", event.key, "/access"),
            json={"accessor": event.accessor, "atMillis": event.at_millis},
        )
        return bool(response.json().get("recorded"))

    def set_hosts(self, key: str, new_hosts: Iterable[NodeId]) -> None:
        response = self._call(
            "PUT",
            key_path("/internal/meta", key, "/hosts"),
            expected=(200, 400, 404),
            json={"hosts": sorted(new_hosts)},
        )
        if response.status_code == 400:
            raise InvalidHostsError(response.json().get("detail", "hosts rejected"))
        if response.status_code == 404:
            raise UnknownKeyError(key)

    def delete(self, key: str) -> None:
        self._call("DELETE", key_path("/internal/meta", key))

    def put(self, key: str, meta: KeyMetadata) -> None:
        self._call("PUT", key_path("/meta", key), json=meta.to_dict())

    def scan(self, keys: Optional[Iterable[str]] = None) -> List[Tuple[str, KeyMetadata]]:
        params = None
        if keys is not None:
            params = {"key": list(keys)}
            if not params["key"]:
                return []
        entries = self._call("GET", "/internal/meta", params=params).json()["entries"]
        return [(entry["key"], KeyMetadata.from_dict(entry["metadata"])) for entry in entries]
