"""Three-stage prompt chain: components -> failure modes -> metrics and behaviors.

Prompts live in ``modeler/prompts/<stage>.txt`` as jinja2 templates. Each
response is read as a bullet list. A stage-1 response without bullets
aborts the chain; a bad later stage is recorded as a StageError and the
rest of the catalog is still built.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from loguru import logger

from modeler.catalog import Component, FailureMode, FailureModeCatalog, MetricConcept, StageError
from modeler.errors import ClientUnavailable, InvalidCatalog, UnparseableResponse
from modeler.llm import TextGenClient

PROMPTS_DIR = Path(__file__).parent / "prompts"

STEP1 = "step1_components"
STEP2 = "step2_failure_modes"
STEP3 = "step3_metrics"
STEP4 = "step4_mapping"

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.+?)\s*$")
_EMPHASIS = re.compile(r"(\*\*|__|`)")

_env = Environment(
    loader=FileSystemLoader(str(PROMPTS_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


def render_prompt(stage: str, **context: object) -> str:
    return _env.get_template(f"{stage}.txt").render(**context)


def bullets(text: str) -> list[str]:
    """Bullet or numbered list items of *text*, markdown emphasis removed."""
    items = []
    for line in text.splitlines():
        m = _BULLET.match(line)
        if m:
            item = _EMPHASIS.sub("", m.group(1)).strip()
            if item:
                items.append(item)
    return items


def split_item(item: str) -> tuple[str, str]:
    """``"Name: rest"`` -> ("Name", "rest"); no colon -> (item, "")."""
    name, sep, rest = item.partition(":")
    if not sep:
        return item.strip(), ""
    return name.strip(), rest.strip()


def _dedupe(names: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for name in names:
        key = name.lower()
        if name and key not in seen:
            seen.add(key)
            out.append(name)
    return out


@dataclass
class _Chain:
    client: TextGenClient
    domain: str

    def ask(self, stage: str, subject: str, **context: object) -> str:
        prompt = render_prompt(stage, domain=self.domain, **context)
        return self.client.complete(stage, subject, prompt)


def _components(chain: _Chain) -> list[tuple[str, list[str]]]:
    raw = chain.ask(STEP1, chain.domain)
    out: list[tuple[str, list[str]]] = []
    seen: set[str] = set()
    for item in bullets(raw):
        name, rest = split_item(item)
        if name and name.lower() not in seen:
            seen.add(name.lower())
            out.append((name, _dedupe([s.strip() for s in rest.split(",") if s.strip()])))
    if not out:
        raise UnparseableResponse(STEP1, raw)
    return out


def _failure_modes(chain: _Chain, component: str, subcomponents: list[str],
                   errors: list[StageError]) -> list[str]:
    raw = chain.ask(STEP2, component, component=component, subcomponents=subcomponents)
    names = _dedupe([split_item(item)[0] for item in bullets(raw)])
    if not names:
        errors.append(StageError(STEP2, component, "no list items in response", raw))
        logger.warning(f"{STEP2} for {component}: unparseable response")
    return names


def _metrics(chain: _Chain, component: str, failure_mode: str,
             errors: list[StageError]) -> list[MetricConcept]:
    subject = f"{component}/{failure_mode}"
    raw = chain.ask(STEP3, subject, component=component, failure_mode=failure_mode)
    metrics: list[MetricConcept] = []
    seen: set[str] = set()
    for item in bullets(raw):
        name, behavior = split_item(item)
        if name and behavior and name.lower() not in seen:
            seen.add(name.lower())
            metrics.append(MetricConcept(name, behavior))
    if not metrics:
        errors.append(StageError(STEP3, subject, "no '<metric>: <behavior>' items in response", raw))
        logger.warning(f"{STEP3} for {subject}: unparseable response")
    return metrics


def generate_catalog(client: TextGenClient, domain: str) -> FailureModeCatalog:
    """Run the chain against *client* and assemble the catalog.

    Raises UnparseableResponse when stage 1 yields no components, and
    ClientUnavailable when the client cannot answer stage 1.
    """
    chain = _Chain(client, domain)
    errors: list[StageError] = []
    components: list[Component] = []
    for name, subcomponents in _components(chain):
        modes: list[FailureMode] = []
        try:
            mode_names = _failure_modes(chain, name, subcomponents, errors)
        except ClientUnavailable as e:
            errors.append(StageError(STEP2, name, e.message))
            mode_names = []
        for mode in mode_names:
            try:
                metrics = _metrics(chain, name, mode, errors)
            except ClientUnavailable as e:
                errors.append(StageError(STEP3, f"{name}/{mode}", e.message))
                metrics = []
            try:
                modes.append(FailureMode(mode, tuple(metrics)))
            except InvalidCatalog as e:
                errors.append(StageError(STEP3, f"{name}/{mode}", e.message))
        components.append(Component(name, tuple(subcomponents), tuple(modes)))
    catalog = FailureModeCatalog(domain, tuple(components), tuple(errors))
    logger.info(f"catalog for {domain!r}: {len(components)} components, "
                f"{len(catalog.concepts())} metric concepts, {len(errors)} stage errors")
    return catalog


def propose_mapping(client: TextGenClient, domain: str, concepts: Sequence[str],
                    columns: Sequence[str]) -> list[tuple[str, str]]:
    """Stage 4: (concept, column) pairs the model proposes, restricted to known names."""
    raw = client.complete(STEP4, domain, render_prompt(STEP4, domain=domain, concepts=list(concepts),
                                                      columns=list(columns)))
    known_concepts = {c.lower(): c for c in concepts}
    known_columns = set(columns)
    pairs: list[tuple[str, str]] = []
    for item in bullets(raw):
        name, rest = split_item(item)
        concept = known_concepts.get(name.lower())
        if concept is None:
            continue
        for column in (c.strip() for c in rest.split(",")):
            if column in known_columns and (concept, column) not in pairs:
                pairs.append((concept, column))
    if not pairs and not bullets(raw):
        raise UnparseableResponse(STEP4, raw)
    return pairs
