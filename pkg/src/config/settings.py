import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..bench.runner import BenchSettings
from ..core.model import OwnershipPolicy, check_policy
from ..sim.cluster import Scenario, SimConfig
from ..sim.workload import WorkloadConfig

SEED_ENV = "REDYNIS_SEED"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class CliConfig(BaseModel):
    """Merged configuration for one CLI run"""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    sim: SimConfig = Field(default_factory=SimConfig)
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig)
    policy: Optional[OwnershipPolicy] = None
    bench: BenchSettings = Field(default_factory=BenchSettings)
    scenarios: List[Scenario] = Field(default_factory=lambda: list(Scenario))
    report_path: Optional[str] = Field(default=None, alias="report")
    trace_path: Optional[str] = Field(default=None, alias="trace")

    @model_validator(mode="after")
    def check_policy_fits_cluster(self) -> "CliConfig":
        check_policy(self.effective_policy(), self.sim.node_count).raise_for_violation()
        return self

    def effective_policy(self) -> OwnershipPolicy:
        """Configured policy, or the default coefficient capped at 1/n"""
        if self.policy is not None:
            return self.policy
        default = OwnershipPolicy()
        return default.model_copy(update={"coefficient": min(default.coefficient, 1 / self.sim.node_count)})

    def to_dict(self) -> Dict[str, Any]:
        """Effective configuration as embedded in reports"""
        data = self.model_dump(by_alias=True, mode="json")
        data["policy"] = self.effective_policy().model_dump(by_alias=True)
        return data

    def merge(self, overrides: Dict[str, Dict[str, Any]]) -> "CliConfig":
        """Apply overrides per section and re-validate everything"""
        data = self.model_dump(by_alias=True, mode="json", exclude_none=True)
        for section, values in overrides.items():
            if isinstance(values, dict):
                data.setdefault(section, {})
                data[section] = {**(data[section] or {}), **values}
            else:
                data[section] = values
        return CliConfig.model_validate(data)

    def save_to_file(self, file_path: Union[str, Path]):
        """Save configuration to JSON file"""
        with open(file_path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_from_file(cls, file_path: Union[str, Path]) -> "CliConfig":
        """Load configuration from a JSON or YAML file"""
        return cls.model_validate(read_config_file(file_path))


def read_config_file(file_path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a JSON or YAML mapping; syntax errors become ValueError"""
    path = Path(file_path)
    with open(path, "r") as f:
        try:
            if path.suffix in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ValueError(f"{path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: configuration must be a mapping")
    return data


def file_sets_seed(config_path: Optional[Union[str, Path]]) -> bool:
    if not config_path:
        return False
    data = read_config_file(config_path)
    return any("seed" in (data.get(section) or {}) for section in ("sim", "workload"))


def env_seed() -> Optional[int]:
    """Seed from REDYNIS_SEED, if set"""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def configure_logging(level: str = "WARNING"):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING), format=LOG_FORMAT, force=True)
