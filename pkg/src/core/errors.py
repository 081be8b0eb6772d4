from typing import Optional


class RedynisError(Exception):
    """Base class for every error raised by the repartitioning system"""


class PolicyViolationError(RedynisError, ValueError):
    """An ownership policy breaks one of its constraints"""

    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


class InvalidTopologyError(RedynisError, ValueError):
    """Cluster topology is malformed"""


class UnknownNodeError(RedynisError, KeyError):
    """A node id is not part of the topology"""

    def __str__(self) -> str:
        return f"Unknown node: {self.args[0]}"


class CapacityExceededError(RedynisError):
    """Backend refused a write because a configured bound was exceeded"""


class MetadataExistsError(RedynisError):
    """meta_create lost a first-writer-wins race"""


class UnknownKeyError(RedynisError, KeyError):
    """Metadata mutation on a key that has no metadata"""

    def __str__(self) -> str:
        return f"Unknown key: {self.args[0]}"


class InvalidHostsError(RedynisError, ValueError):
    """A host set would leave a key without replicas"""


class DataDivergenceError(RedynisError):
    """Metadata names an owner whose store does not hold the key"""


class TransportError(RedynisError):
    """A call to a peer node failed"""


class MetadataFormatError(RedynisError, ValueError):
    """Serialized key metadata could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class UnknownScenarioError(RedynisError, ValueError):
    """Scenario name is not one of local, remote, optimized"""


class WorkloadMismatchError(RedynisError, ValueError):
    """Reports being compared were produced from different workloads"""
