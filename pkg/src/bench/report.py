import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic.alias_generators import to_camel
from scipy import stats

from ..core.errors import WorkloadMismatchError

CONFIDENCE = 0.99
RATIO_CAP = 1e6


class BenchReport(BaseModel):
    """Throughput and latency of one scenario over several iterations"""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True)

    scenario: str
    workload: Dict[str, Any]
    iterations: int
    throughput_ops_per_sec: float
    ci99_low: float
    ci99_high: float
    iteration_throughputs: List[float]
    mean_latency_millis: float
    p50: float
    p99: float
    local_hit_rate: float
    converged_hit_rate: float
    converged_throughput_ops_per_sec: float
    hit_rate_by_phase: List[float]
    failures: int = 0
    daemon_passes: int = 0
    service_cost_millis: int = 0
    config: Dict[str, Any] = Field(default_factory=dict)
    generated_at: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True)


def throughput_interval(samples: Sequence[float], confidence: float = CONFIDENCE) -> "tuple[float, float, float]":
    """Mean and two-sided Student-t interval over per-iteration throughputs"""
    values = np.asarray(samples, dtype=float)
    mean = float(values.mean())
    if len(values) < 2 or not np.all(np.isfinite(values)):
        return mean, mean, mean
    spread = float(values.std(ddof=1))
    if spread == 0.0:
        return mean, mean, mean
    half_width = float(stats.t.ppf((1 + confidence) / 2, len(values) - 1)) * spread / math.sqrt(len(values))
    return mean, mean - half_width, mean + half_width


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Comparison:
    left: str
    right: str
    ratio: float
    capped: bool
    verdict: str

    def to_dict(self) -> Dict[str, Any]:
        return {"left": self.left, "right": self.right, "ratio": self.ratio, "capped": self.capped, "verdict": self.verdict}


def _ratio(numerator: float, denominator: float) -> "tuple[float, bool]":
    if numerator == denominator:
        return 1.0, False
    if denominator <= 0 or math.isinf(numerator):
        return RATIO_CAP, True
    ratio = numerator / denominator
    if ratio > RATIO_CAP:
        return RATIO_CAP, True
    return ratio, False


def compare_report(reports: Sequence[BenchReport]) -> List[Comparison]:
    """Pairwise throughput ratios and ordering verdicts"""
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    workload = reports[0].workload
    for report in reports[1:]:
        if report.workload != workload:
            raise WorkloadMismatchError(
                f"{report.scenario} ran a different workload than {reports[0].scenario}"
            )

    comparisons = []
    for i, left in enumerate(reports):
        for right in reports[i + 1:]:
            ratio, capped = _ratio(left.throughput_ops_per_sec, right.throughput_ops_per_sec)
            if ratio > 1:
                verdict = f"{left.scenario} ≻ {right.scenario}"
            elif ratio < 1:
                verdict = f"{left.scenario} ≺ {right.scenario}"
            else:
                verdict = f"{left.scenario} ≈ {right.scenario}"
            comparisons.append(Comparison(left.scenario, right.scenario, ratio, capped, verdict))
    return comparisons


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.2f}"


def format_table(reports: Sequence[BenchReport], comparisons: Optional[Sequence[Comparison]] = None) -> str:
    """Aligned-column text table for stdout"""
    header = ["scenario", "ops/s", "ci99 low", "ci99 high", "mean ms", "p50 ms", "p99 ms", "local hit", "conv hit", "fails"]
    rows = [
        [
            report.scenario,
            _fmt(report.throughput_ops_per_sec),
            _fmt(report.ci99_low),
            _fmt(report.ci99_high),
            _fmt(report.mean_latency_millis),
            _fmt(report.p50),
            _fmt(report.p99),
            f"{report.local_hit_rate:.3f}",
            f"{report.converged_hit_rate:.3f}",
            str(report.failures),
        ]
        for report in reports
    ]
    widths = [max(len(row[col]) for row in [header] + rows) for col in range(len(header))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in [header] + rows]
    if reports:
        lines.append(f"service cost per request: {reports[0].service_cost_millis}ms (all scenarios)")
    for comparison in comparisons or []:
        flag = " (capped)" if comparison.capped else ""
        lines.append(f"{comparison.verdict}: x{_fmt(comparison.ratio)}{flag}")
    return "\n".join(lines)


def write_report(
    path: Union[str, Path],
    reports: Sequence[BenchReport],
    comparisons: Sequence[Comparison],
    config: Dict[str, Any],
):
    document = {
        "config": config,
        "reports": [report.to_dict() for report in reports],
        "comparison": [comparison.to_dict() for comparison in comparisons],
        "generatedAt": now_iso(),
    }
    with open(path, "w") as f:
        json.dump(document, f, indent=2)
