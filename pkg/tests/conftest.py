import pytest

from src.core.model import ClusterTopology, KeyMetadata, OwnershipPolicy
from src.sim.cluster import SimConfig, build_cluster
from src.store.kv_backend import InMemoryBackend
from src.store.metadata_store import InMemoryMetadataStore

EXAMPLE_LAST_ACCESS = 1480725771235


# Test data fixtures
@pytest.fixture
def example_metadata():
    """Usage record with 17 accesses split 9/3/5, replicated on node-1 and node-3"""
    return KeyMetadata(
        total_access_count=17,
        hosts={"node-1", "node-3"},
        host_accesses={"node-1": 9, "node-2": 3, "node-3": 5},
        last_accessed_date=EXAMPLE_LAST_ACCESS,
    )


@pytest.fixture
def example_metadata_json():
    """The same record in canonical wire form"""
    return {
        "totalAccessCount": 17,
        "hosts": ["node-1", "node-3"],
        "hostAccesses": {"node-1": 9, "node-2": 3, "node-3": 5},
        "lastAccessedDate": EXAMPLE_LAST_ACCESS,
    }


@pytest.fixture
def third_policy():
    """H = 1/3, the largest coefficient a 3-node cluster allows"""
    return OwnershipPolicy(coefficient=1 / 3)


@pytest.fixture
def topology():
    """3 nodes, 100ms between distinct nodes, node-1 serializes writes"""
    return ClusterTopology.uniform(["node-1", "node-2", "node-3"], "node-1", 100)


@pytest.fixture
def backend():
    return InMemoryBackend()


@pytest.fixture
def metadata():
    return InMemoryMetadataStore()


@pytest.fixture
def sim_config():
    return SimConfig(node_count=3, remote_latency_millis=100)


@pytest.fixture
def cluster(sim_config):
    """Three-node virtual-clock cluster with the daemon built but disabled"""
    return build_cluster(sim_config, OwnershipPolicy(coefficient=0.33))
