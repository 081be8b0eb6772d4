import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic.alias_generators import to_camel

from .errors import InvalidTopologyError, MetadataFormatError, PolicyViolationError, UnknownNodeError

NodeId = str

DEFAULT_EXPIRY_MILLIS = 24 * 60 * 60 * 1000
DEFAULT_DAEMON_INTERVAL_MILLIS = 1000

# Tolerance for the sum-to-one property of ownership fractions only.
# Eligibility compares f - H >= 0 exactly.
FRACTION_SUM_TOLERANCE = 1e-9


class KeyMetadataDocument(BaseModel):
    """Canonical wire form of key metadata"""

    model_config = ConfigDict(extra="forbid", strict=True)

    totalAccessCount: int = Field(ge=0)
    hosts: List[str] = Field(min_length=1)
    hostAccesses: Dict[str, int]
    lastAccessedDate: int = Field(ge=0)

    @model_validator(mode="after")
    def check_counts(self) -> "KeyMetadataDocument":
        if any(not node for node in self.hosts):
            raise ValueError("host ids must be non-empty")
        if any(count < 0 for count in self.hostAccesses.values()):
            raise ValueError("hostAccesses counts must be non-negative")
        if sum(self.hostAccesses.values()) != self.totalAccessCount:
            raise ValueError("totalAccessCount must equal the sum of hostAccesses")
        return self


@dataclass
class KeyMetadata:
    """Per-key usage record kept by the metadata layer"""

    total_access_count: int = 0
    hosts: Set[NodeId] = field(default_factory=set)
    host_accesses: Dict[NodeId, int] = field(default_factory=dict)
    last_accessed_date: int = 0

    def copy(self) -> "KeyMetadata":
        return KeyMetadata(
            total_access_count=self.total_access_count,
            hosts=set(self.hosts),
            host_accesses=dict(self.host_accesses),
            last_accessed_date=self.last_accessed_date,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Canonical dictionary with the wire field names, in wire order"""
        return {
            "totalAccessCount": self.total_access_count,
            "hosts": sorted(self.hosts),
            "hostAccesses": {node: self.host_accesses[node] for node in sorted(self.host_accesses)},
            "lastAccessedDate": self.last_accessed_date,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_document(cls, document: KeyMetadataDocument) -> "KeyMetadata":
        return cls(
            total_access_count=document.totalAccessCount,
            hosts=set(document.hosts),
            host_accesses=dict(document.hostAccesses),
            last_accessed_date=document.lastAccessedDate,
        )

    @classmethod
    def from_dict(cls, data: Any) -> "KeyMetadata":
        """Parse canonical metadata, rejecting unknown fields and bad counts"""
        try:
            document = KeyMetadataDocument.model_validate(data)
        except ValidationError as e:
            raise MetadataFormatError(_first_error(e)) from e
        return cls.from_document(document)

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> "KeyMetadata":
        try:
            data = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise MetadataFormatError(f"invalid JSON: {e}") from e
        return cls.from_dict(data)


def _first_error(error: ValidationError) -> str:
    details = error.errors()[0]
    location = ".".join(str(part) for part in details.get("loc", ())) or "metadata"
    return f"{location}: {details.get('msg', 'invalid value')}"


class OwnershipPolicy(BaseModel):
    """Ownership coefficient H plus the daemon's timing parameters"""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, frozen=True)

    coefficient: float = Field(default=0.33, gt=0, le=1)
    expiry_millis: int = Field(default=DEFAULT_EXPIRY_MILLIS, gt=0)
    daemon_interval_millis: int = Field(default=DEFAULT_DAEMON_INTERVAL_MILLIS, gt=0)


@dataclass
class ClusterTopology:
    """Node ids, the master propagator, and one-way latencies between nodes"""

    nodes: List[NodeId]
    master_propagator: NodeId
    latency_millis: Dict[Tuple[NodeId, NodeId], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.nodes:
            raise InvalidTopologyError("topology needs at least one node")
        if any(not node for node in self.nodes):
            raise InvalidTopologyError("node ids must be non-empty")
        if len(set(self.nodes)) != len(self.nodes):
            raise InvalidTopologyError("node ids must be unique")
        if self.master_propagator not in self.nodes:
            raise InvalidTopologyError(f"master propagator {self.master_propagator} is not a cluster node")
        for (source, target), millis in self.latency_millis.items():
            if source not in self.nodes or target not in self.nodes:
                raise InvalidTopologyError(f"latency entry ({source}, {target}) names an unknown node")
            if millis < 0:
                raise InvalidTopologyError(f"latency ({source}, {target}) is negative")
            if source == target and millis != 0:
                raise InvalidTopologyError(f"latency from {source} to itself must be 0")

    @classmethod
    def uniform(cls, nodes: Iterable[NodeId], master_propagator: NodeId, remote_latency_millis: int) -> "ClusterTopology":
        """Topology with 0 on the diagonal and the same latency everywhere else"""
        nodes = list(nodes)
        latency = {
            (source, target): 0 if source == target else remote_latency_millis
            for source in nodes
            for target in nodes
        }
        return cls(nodes=nodes, master_propagator=master_propagator, latency_millis=latency)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def __contains__(self, node: object) -> bool:
        return node in self.nodes

    def latency(self, source: NodeId, target: NodeId) -> int:
        """One-way latency in ms; missing off-diagonal entries count as 0"""
        if source not in self.nodes:
            raise UnknownNodeError(source)
        if target not in self.nodes:
            raise UnknownNodeError(target)
        if source == target:
            return 0
        return self.latency_millis.get((source, target), 0)

    def closest(self, source: NodeId, candidates: Iterable[NodeId]) -> NodeId:
        """Candidate with minimum latency from source, ties broken by node id"""
        return min(candidates, key=lambda node: (self.latency(source, node), node))


@dataclass(frozen=True)
class PolicyCheck:
    """Outcome of validate_policy"""

    ok: bool
    violation: Optional[str] = None
    constraint: Optional[str] = None

    def raise_for_violation(self):
        if not self.ok:
            raise PolicyViolationError(self.violation, self.constraint)


def ownership_fraction(meta: KeyMetadata, node: NodeId) -> float:
    """Share of the key's accesses that came from node (0 when unaccessed)"""
    if meta.total_access_count <= 0:
        return 0.0
    return meta.host_accesses.get(node, 0) / meta.total_access_count


def eligible_owners(meta: KeyMetadata, policy: OwnershipPolicy) -> Set[NodeId]:
    """Nodes whose ownership fraction meets the coefficient"""
    owners = set()
    for node in meta.host_accesses:
        if ownership_fraction(meta, node) - policy.coefficient >= 0:
            owners.add(node)
    return owners


def validate_policy(policy: OwnershipPolicy, topology: ClusterTopology) -> PolicyCheck:
    return check_policy(policy, topology.size)


def check_policy(policy: OwnershipPolicy, node_count: int) -> PolicyCheck:
    """Validate the policy against a cluster of node_count nodes"""
    if node_count < 1:
        return PolicyCheck(False, "cluster must have at least one node", "n >= 1")
    if not policy.coefficient > 0:
        return PolicyCheck(False, f"H must be positive, got {policy.coefficient}", "H > 0")
    if policy.coefficient - 1 / node_count > 0:
        return PolicyCheck(
            False,
            f"H exceeds 1/n: H={policy.coefficient} > 1/{node_count} "
            f"(H - 1/n <= 0 avoids host starvation of key ownership)",
            "H <= 1/n",
        )
    if policy.expiry_millis <= 0:
        return PolicyCheck(False, "expiry must be a positive number of milliseconds", "expiryMillis > 0")
    if policy.daemon_interval_millis <= 0:
        return PolicyCheck(False, "daemon interval must be a positive number of milliseconds", "daemonIntervalMillis > 0")
    return PolicyCheck(True)
