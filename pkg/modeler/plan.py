"""Turn a metric mapping into a monitoring plan and service request bodies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from loguru import logger

from modeler.catalog import FailureModeCatalog
from modeler.errors import EmptyMapping
from modeler.mapping import MetricMapping

SPIKE = "spike"
SUSTAINED_HIGH = "sustained_high"
SPIKE_OR_SUSTAINED = "spike_or_sustained"

# behavior class -> request presets (one univariate request each)
PRESETS: dict[str, dict[str, Any]] = {
    SPIKE: {
        "algorithm_type": "ReconstructAD",
        "anomaly_estimator": "DNN_AutoEncoder",
        "labeling_method": "pvalue_threshold",
        "labeling_threshold": 0.01,
    },
    SUSTAINED_HIGH: {
        "algorithm_type": "PredAD",
        "anomaly_estimator": "WindowedLinear",
        "labeling_method": "std_multiple",
        "labeling_threshold": 3.0,
    },
}
KINDS = {SPIKE: (SPIKE,), SUSTAINED_HIGH: (SUSTAINED_HIGH,), SPIKE_OR_SUSTAINED: (SPIKE, SUSTAINED_HIGH)}


def classify_behavior(text: str) -> str:
    lowered = " ".join(text.lower().split())
    spike = "spike" in lowered
    sustained = "sustained high" in lowered or ("sustained" in lowered and "high" in lowered)
    if spike and sustained:
        return SPIKE_OR_SUSTAINED
    if spike:
        return SPIKE
    if sustained:
        return SUSTAINED_HIGH
    logger.warning(f"unrecognised behavior {text!r}, monitoring for spikes and sustained highs")
    return SPIKE_OR_SUSTAINED


@dataclass(frozen=True)
class PlanEntry:
    component: str
    concept: str
    column: str
    behavior: str
    behavior_class: str

    def to_dict(self) -> dict[str, str]:
        return {
            "component": self.component,
            "concept": self.concept,
            "column": self.column,
            "behavior": self.behavior,
            "behavior_class": self.behavior_class,
        }


@dataclass(frozen=True)
class PlannedRequest:
    endpoint: str
    body: dict[str, Any]
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"endpoint": self.endpoint, "reason": self.reason, "body": self.body}


@dataclass(frozen=True)
class MonitoringPlan:
    entries: list[PlanEntry]
    requests: list[PlannedRequest] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "requests": [r.to_dict() for r in self.requests],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def compile_plan(mapping: MetricMapping, catalog: FailureModeCatalog,
                 data_file: str | Mapping[str, Any], time_column: str,
                 time_format: str | None = None, instance_size: str | None = None) -> MonitoringPlan:
    """One entry per mapped column, with its univariate requests.

    A component with two or more mapped columns also gets one multivariate
    request over all of them.
    """
    if not mapping.pairs:
        raise EmptyMapping("no concept matched any dataset column")
    refs = {ref.concept.name: ref for ref in catalog.concepts()}
    base: dict[str, Any] = {"data_file": data_file, "time_column": time_column}
    if time_format:
        base["time_format"] = time_format
    if instance_size:
        base["instance_size"] = instance_size

    entries: list[PlanEntry] = []
    requests: list[PlannedRequest] = []
    by_component: dict[str, list[str]] = {}
    for pair in mapping.pairs:
        ref = refs[pair.concept]
        cls = classify_behavior(ref.concept.behavior)
        entries.append(PlanEntry(ref.component, pair.concept, pair.column, ref.concept.behavior, cls))
        for kind in KINDS[cls]:
            body = {**base, "target_columns": [pair.column], **PRESETS[kind]}
            requests.append(PlannedRequest("univariate", body, f"{kind} on {pair.column} ({pair.concept})"))
        columns = by_component.setdefault(ref.component, [])
        if pair.column not in columns:
            columns.append(pair.column)

    for component, columns in by_component.items():
        if len(columns) >= 2:
            body = {**base, "target_columns": sorted(columns), **PRESETS[SPIKE]}
            requests.append(PlannedRequest("multivariate", body, f"joint behavior of {component} metrics"))
    logger.info(f"plan: {len(entries)} monitored columns, {len(requests)} requests")
    return MonitoringPlan(entries=entries, requests=requests)
