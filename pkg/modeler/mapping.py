"""Deterministic matching of catalog metric concepts to dataset columns.

Names are lowercased and split on anything that is not a letter or digit.
Column prefixes (``ibm_is_instance_``, ``sysdig_``) and unit/direction words
are dropped, plurals are folded and synonyms mapped to one canonical token.
The score is the Jaccard similarity of the two token sets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from loguru import logger

from modeler.catalog import FailureModeCatalog
from modeler.chain import propose_mapping
from modeler.errors import ModelerError
from modeler.llm import TextGenClient

ACCEPT_SCORE = 0.5

PREFIX_TOKENS = frozenset({"ibm", "is", "instance", "sysdig"})
STOPWORDS = frozenset({"average", "avg", "percentage", "percent", "pct", "total", "in", "out", "read",
                       "write", "the", "of", "per", "and", "rate"})
SYNONYMS = {
    "processor": "cpu",
    "net": "network",
    "utilization": "usage",
    "utilisation": "usage",
    "util": "usage",
    "mem": "memory",
    "volume": "disk",
    "storage": "disk",
    "byte": "usage",
    "traffic": "usage",
    "throughput": "usage",
    "conn": "connection",
    "db": "database",
    "err": "error",
}

_SPLIT = re.compile(r"[^a-z0-9]+")


def _singular(token: str) -> str:
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def tokens(name: str, strip_prefix: bool = False) -> frozenset[str]:
    parts = [p for p in _SPLIT.split(name.lower()) if p]
    if strip_prefix:
        while parts and parts[0] in PREFIX_TOKENS:
            parts.pop(0)
    out = set()
    for part in parts:
        if part in STOPWORDS:
            continue
        part = _singular(part)
        out.add(SYNONYMS.get(part, part))
    return frozenset(out)


def match_score(concept: str, column: str) -> float:
    a, b = tokens(concept), tokens(column, strip_prefix=True)
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class MappedPair:
    concept: str
    column: str
    score: float

    def to_dict(self) -> dict[str, Any]:
        return {"concept": self.concept, "column": self.column, "score": round(self.score, 6)}


@dataclass(frozen=True)
class CrossCheck:
    """Stage-4 pairs compared with the deterministic mapping."""

    confirmed: list[tuple[str, str]] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    missing: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {k: [list(p) for p in getattr(self, k)] for k in ("confirmed", "rejected", "missing")}


@dataclass(frozen=True)
class MetricMapping:
    pairs: list[MappedPair]
    unmapped: list[str]
    cross_check: CrossCheck | None = None

    def columns_for(self, concept: str) -> list[str]:
        return [p.column for p in self.pairs if p.concept == concept]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"pairs": [p.to_dict() for p in self.pairs], "unmapped": list(self.unmapped)}
        if self.cross_check is not None:
            out["cross_check"] = self.cross_check.to_dict()
        return out


def map_metrics(catalog: FailureModeCatalog, columns: Sequence[str],
                client: TextGenClient | None = None) -> MetricMapping:
    """Assign every column to at most one concept.

    A column goes to the concept with the highest score; equal scores go to
    the concept listed first in the catalog. Pairs below ACCEPT_SCORE are
    dropped. A concept keeps every column it wins, and columns that tie on a
    concept come out with the lexicographically smaller one first. Pairs come
    out in concept order. With a *client*, the stage-4 prompt's pairs are cross-checked
    against this result without changing it.
    """
    if not columns:
        raise ModelerError("map_metrics needs at least one column")
    concepts = [ref.concept.name for ref in catalog.concepts()]
    best: dict[str, tuple[int, float]] = {}
    for column in sorted(set(columns)):
        for i, concept in enumerate(concepts):
            score = match_score(concept, column)
            if score >= ACCEPT_SCORE and (column not in best or score > best[column][1]):
                best[column] = (i, score)

    pairs = [
        MappedPair(concepts[i], column, score)
        for column, (i, score) in sorted(best.items(), key=lambda kv: (kv[1][0], kv[0]))
    ]
    mapped = {p.concept for p in pairs}
    unmapped = [c for c in concepts if c not in mapped]
    logger.info(f"mapped {len(pairs)} columns to {len(mapped)} concepts, {len(unmapped)} concepts unmapped")

    check = None
    if client is not None:
        proposed = propose_mapping(client, catalog.domain, concepts, list(columns))
        ours = [(p.concept, p.column) for p in pairs]
        check = CrossCheck(
            confirmed=[p for p in proposed if p in ours],
            rejected=[p for p in proposed if p not in ours],
            missing=[p for p in ours if p not in proposed],
        )
        if check.rejected:
            logger.warning(f"{len(check.rejected)} model-proposed pairs rejected by the lexical matcher")
    return MetricMapping(pairs=pairs, unmapped=unmapped, cross_check=check)
