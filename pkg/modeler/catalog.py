"""Failure-mode catalog: components, their failure modes, and the metrics to watch.

File format (JSON)::

    {
      "domain": "cloud infrastructure",
      "components": [
        {"name": "Server", "subcomponents": ["CPU", ...],
         "failure_modes": [
           {"name": "Power supply failure",
            "metrics": [{"name": "Power Usage", "behavior": "Sudden spikes or ..."}]}]}],
      "errors": [{"stage": "step3_metrics", "subject": "...", "message": "...", "raw": "..."}]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from modeler.errors import InvalidCatalog


@dataclass(frozen=True)
class MetricConcept:
    name: str
    behavior: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "behavior": self.behavior}


@dataclass(frozen=True)
class FailureMode:
    name: str
    metrics: tuple[MetricConcept, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.name.strip():
            raise InvalidCatalog("failure mode name must not be empty")
        seen: set[str] = set()
        for metric in self.metrics:
            if not metric.name.strip():
                raise InvalidCatalog(f"{self.name}: metric name must not be empty")
            key = metric.name.strip().lower()
            if key in seen:
                raise InvalidCatalog(f"{self.name}: metric {metric.name!r} listed twice")
            seen.add(key)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "metrics": [m.to_dict() for m in self.metrics]}


@dataclass(frozen=True)
class Component:
    name: str
    subcomponents: tuple[str, ...] = ()
    failure_modes: tuple[FailureMode, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "subcomponents", tuple(self.subcomponents))
        object.__setattr__(self, "failure_modes", tuple(self.failure_modes))
        if not self.name.strip():
            raise InvalidCatalog("component name must not be empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "subcomponents": list(self.subcomponents),
            "failure_modes": [f.to_dict() for f in self.failure_modes],
        }


@dataclass(frozen=True)
class StageError:
    """A prompt-chain stage whose response could not be used; ``raw`` keeps the text."""

    stage: str
    subject: str
    message: str
    raw: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"stage": self.stage, "subject": self.subject, "message": self.message, "raw": self.raw}


@dataclass(frozen=True)
class ConceptRef:
    component: str
    failure_mode: str
    concept: MetricConcept


@dataclass(frozen=True)
class FailureModeCatalog:
    domain: str
    components: tuple[Component, ...] = ()
    errors: tuple[StageError, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "errors", tuple(self.errors))

    def concepts(self) -> list[ConceptRef]:
        """Distinct metric concepts (case-insensitive), first occurrence wins."""
        out: list[ConceptRef] = []
        seen: set[str] = set()
        for component in self.components:
            for mode in component.failure_modes:
                for metric in mode.metrics:
                    key = metric.name.strip().lower()
                    if key not in seen:
                        seen.add(key)
                        out.append(ConceptRef(component.name, mode.name, metric))
        return out

    def component(self, name: str) -> Component:
        for component in self.components:
            if component.name == name:
                return component
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "components": [c.to_dict() for c in self.components],
            "errors": [e.to_dict() for e in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> FailureModeCatalog:
        if "components" not in d:
            raise InvalidCatalog("missing required catalog fields: components")
        try:
            components = [
                Component(
                    name=c["name"],
                    subcomponents=tuple(c.get("subcomponents") or ()),
                    failure_modes=tuple(
                        FailureMode(
                            name=f["name"],
                            metrics=tuple(MetricConcept(m["name"], m.get("behavior", ""))
                                          for m in f.get("metrics") or ()),
                        )
                        for f in c.get("failure_modes") or ()
                    ),
                )
                for c in d["components"]
            ]
            errors = [StageError(e["stage"], e.get("subject", ""), e.get("message", ""), e.get("raw", ""))
                      for e in d.get("errors") or ()]
        except (KeyError, TypeError) as e:
            raise InvalidCatalog(f"malformed catalog: {e}") from None
        return cls(domain=d.get("domain", ""), components=tuple(components), errors=tuple(errors))


def load_catalog(path: Path) -> FailureModeCatalog:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidCatalog(f"cannot read catalog {path}: {e}") from None
    return FailureModeCatalog.from_dict(data)


def save_catalog(catalog: FailureModeCatalog, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(catalog.to_json(), encoding="utf-8")
