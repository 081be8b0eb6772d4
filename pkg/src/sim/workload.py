"""
YCSB-style request generation: uniform, 90/10 hot-set skew, or true Zipf.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..core.model import NodeId

logger = logging.getLogger(__name__)

READ = "read"
WRITE = "write"


class WorkloadConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    total_requests: int = Field(default=100_000, ge=1, alias="totalRequests")
    read_percent: int = Field(default=100, ge=50, le=100, alias="readPercent")
    distribution: Literal["uniform", "skewed", "zipfian"] = "skewed"
    key_count: int = Field(default=10_000, ge=1, alias="keyCount")
    hot_fraction: float = Field(default=0.10, gt=0, lt=1, alias="hotFraction")
    hot_access_fraction: float = Field(default=0.90, gt=0, lt=1, alias="hotAccessFraction")
    zipf_exponent: float = Field(default=0.99, gt=0, alias="zipfExponent")
    origin_nodes: List[str] = Field(default_factory=list, alias="originNodes")
    value_size_bytes: int = Field(default=100, ge=0, alias="valueSizeBytes")
    seed: int = 0

    @property
    def read_count(self) -> int:
        return self.total_requests * self.read_percent // 100

    @property
    def hot_key_count(self) -> int:
        return min(self.key_count, math.ceil(self.hot_fraction * self.key_count))

    def summary(self) -> Dict[str, object]:
        """Fields that identify the workload, independent of seed and origins"""
        data = self.model_dump(by_alias=True, exclude={"seed", "origin_nodes"})
        if self.distribution != "zipfian":
            data.pop("zipfExponent")
        if self.distribution != "skewed":
            data.pop("hotFraction")
            data.pop("hotAccessFraction")
        return data


@dataclass(frozen=True)
class Request:
    origin: NodeId
    kind: str
    key: str
    value: Optional[bytes] = None

    @property
    def is_read(self) -> bool:
        return self.kind == READ

    def to_dict(self) -> Dict[str, str]:
        return {"origin": self.origin, "kind": self.kind, "key": self.key}


def key_name(index: int) -> str:
    return f"key-{index}"


def key_names(count: int) -> List[str]:
    return [key_name(index) for index in range(count)]


def make_value(key: str, tag: str, size: int) -> bytes:
    """Deterministic payload of exactly size bytes"""
    stem = f"{key}:{tag}:".encode()
    if size <= len(stem):
        return stem[:size]
    return stem + b"x" * (size - len(stem))


def preload_values(config: WorkloadConfig, keys: Optional[Sequence[str]] = None) -> List[bytes]:
    """Initial value of each key, by default every key of the generated key space"""
    keys = key_names(config.key_count) if keys is None else keys
    return [make_value(key, "v0", config.value_size_bytes) for key in keys]


def _sample_keys(config: WorkloadConfig, rng: np.random.Generator) -> np.ndarray:
    size = config.total_requests
    if config.distribution == "uniform":
        return rng.integers(0, config.key_count, size=size)

    if config.distribution == "zipfian":
        ranks = np.arange(1, config.key_count + 1, dtype=float)
        weights = ranks ** -config.zipf_exponent
        return rng.choice(config.key_count, size=size, p=weights / weights.sum())

    hot = config.hot_key_count
    cold = config.key_count - hot
    pick_hot = rng.random(size) < config.hot_access_fraction
    hot_keys = rng.integers(0, hot, size=size)
    if cold == 0:
        return hot_keys
    cold_keys = hot + rng.integers(0, cold, size=size)
    return np.where(pick_hot, hot_keys, cold_keys)


def generate(config: WorkloadConfig) -> List[Request]:
    """Deterministic request sequence for config; origins issue requests round-robin"""
    if not config.origin_nodes:
        raise ValueError("workload needs at least one origin node")

    rng = np.random.default_rng(config.seed)
    kinds = np.zeros(config.total_requests, dtype=bool)
    kinds[: config.read_count] = True
    is_read = rng.permutation(kinds)
    key_indexes = _sample_keys(config, rng)

    origins = config.origin_nodes
    requests = []
    for index in range(config.total_requests):
        key = key_name(int(key_indexes[index]))
        origin = origins[index % len(origins)]
        if is_read[index]:
            requests.append(Request(origin, READ, key))
        else:
            requests.append(Request(origin, WRITE, key, make_value(key, f"w{index}", config.value_size_bytes)))
    logger.debug(f"Generated {len(requests)} requests ({config.read_count} reads, {config.distribution})")
    return requests


def empirical_distribution(requests: Iterable[Request]) -> Dict[str, int]:
    """Exact per-key request histogram"""
    return dict(Counter(request.key for request in requests))


def hot_set_mass(requests: List[Request], config: WorkloadConfig) -> float:
    """Share of requests that landed on the hot keys"""
    if not requests:
        return 0.0
    hot = set(key_names(config.hot_key_count))
    return sum(1 for request in requests if request.key in hot) / len(requests)


class TraceLine(BaseModel):
    model_config = ConfigDict(extra="forbid")

    origin: str = Field(min_length=1)
    kind: Literal["read", "write"]
    key: str = Field(min_length=1)


def write_trace(requests: Iterable[Request], path: Union[str, Path]) -> int:
    """Export requests as JSON lines; returns how many were written"""
    count = 0
    with open(path, "w") as f:
        for request in requests:
            f.write(json.dumps(request.to_dict()) + "\n")
            count += 1
    return count


def read_trace(path: Union[str, Path], value_size_bytes: int = 100) -> List[Request]:
    """Load a JSON-lines trace; write values are regenerated from position"""
    requests = []
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ValueError(f"trace line {line_number}: not valid UTF-8: {e.reason}") from e
            if not line.strip():
                continue
            try:
                entry = TraceLine.model_validate_json(line)
            except ValidationError as e:
                raise ValueError(f"trace line {line_number}: {e.errors()[0]['msg']}") from e
            value = None
            if entry.kind == WRITE:
                value = make_value(entry.key, f"w{len(requests)}", value_size_bytes)
            requests.append(Request(entry.origin, entry.kind, entry.key, value))
    return requests
