from __future__ import annotations

import json
from pathlib import Path

import pytest

from modeler.catalog import FailureModeCatalog, load_catalog, save_catalog
from modeler.chain import STEP1, STEP2, bullets, generate_catalog, split_item
from modeler.errors import ClientUnavailable, EmptyMapping, InvalidCatalog, UnparseableResponse
from modeler.llm import ReplayClient
from modeler.mapping import map_metrics, match_score, tokens
from modeler.plan import SPIKE, SPIKE_OR_SUSTAINED, SUSTAINED_HIGH, classify_behavior, compile_plan
from service.schema import validate_request

FIXTURES = Path(__file__).resolve().parent.parent / "modeler" / "fixtures"
DOMAIN = "cloud infrastructure"


@pytest.fixture
def catalog() -> FailureModeCatalog:
    return generate_catalog(ReplayClient.from_file(FIXTURES / "cloud_infrastructure.json"), DOMAIN)


@pytest.fixture
def columns() -> list[str]:
    header = (FIXTURES / "cloud_columns.csv").read_text().splitlines()[0].split(",")
    return [c for c in header if c != "timestamp"]


def test_bullets_and_items() -> None:
    text = "Intro line\n\n- **Server**: CPU, memory\n* Database\n2. Network: routers\nnot a bullet\n"
    assert bullets(text) == ["Server: CPU, memory", "Database", "Network: routers"]
    assert split_item("CPU Usage: sudden spikes") == ("CPU Usage", "sudden spikes")
    assert split_item("Database") == ("Database", "")


def test_replayed_chain_builds_the_catalog(catalog) -> None:
    assert [c.name for c in catalog.components] == ["Server", "Database", "Network"]
    assert catalog.component("Server").subcomponents == ("power supply", "CPU", "memory", "disk")
    assert catalog.errors == ()
    names = [ref.concept.name for ref in catalog.concepts()]
    assert names == ["Power Usage", "CPU Usage", "Disk Usage", "Database Connections",
                     "Database Queries", "Network Traffic", "Network Errors"]


def test_catalog_file_round_trip(catalog, tmp_path) -> None:
    save_catalog(catalog, tmp_path / "catalog.json")
    assert load_catalog(tmp_path / "catalog.json") == catalog


def test_stage_failures_are_recorded_not_fatal() -> None:
    client = ReplayClient({
        f"{STEP1}:{DOMAIN}": "- Server: CPU\n- Network: routers\n",
        f"{STEP2}:Server": "I cannot help with that.",
    })
    catalog = generate_catalog(client, DOMAIN)
    assert [c.name for c in catalog.components] == ["Server", "Network"]
    assert all(not c.failure_modes for c in catalog.components)
    assert [(e.stage, e.subject) for e in catalog.errors] == [(STEP2, "Server"), (STEP2, "Network")]
    assert catalog.errors[0].raw == "I cannot help with that."


def test_unparseable_first_stage_aborts() -> None:
    with pytest.raises(UnparseableResponse):
        generate_catalog(ReplayClient({f"{STEP1}:{DOMAIN}": "no list here"}), DOMAIN)
    with pytest.raises(ClientUnavailable):
        generate_catalog(ReplayClient({}), DOMAIN)


def test_malformed_catalog_file(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"components": [{"failure_modes": []}]}))
    with pytest.raises(InvalidCatalog):
        load_catalog(path)
    with pytest.raises(InvalidCatalog):
        FailureModeCatalog.from_dict({"domain": "x"})


def test_tokens_fold_prefixes_units_and_synonyms() -> None:
    assert tokens("ibm_is_instance_volume_read_bytes", strip_prefix=True) == {"disk", "usage"}
    assert tokens("Database Queries") == {"database", "query"}
    assert match_score("CPU Usage", "ibm_is_instance_average_cpu_usage_percentage") == 1.0
    assert match_score("Power Usage", "ibm_is_instance_cpu_usage_percentage") == pytest.approx(1 / 3)


def test_mapping_of_the_cloud_columns(catalog, columns) -> None:
    mapping = map_metrics(catalog, columns)
    assert mapping.columns_for("CPU Usage") == ["ibm_is_instance_average_cpu_usage_percentage",
                                                "ibm_is_instance_cpu_usage_percentage"]
    assert mapping.columns_for("Disk Usage") == ["ibm_is_instance_volume_read_bytes",
                                                 "ibm_is_instance_volume_write_bytes"]
    assert mapping.columns_for("Network Errors") == ["ibm_is_instance_network_in_errors",
                                                     "ibm_is_instance_network_out_errors"]
    assert len(mapping.pairs) == 8
    assert "ibm_is_instance_memory_usage_percentage" not in [p.column for p in mapping.pairs]
    assert mapping.unmapped == ["Power Usage", "Database Connections", "Database Queries"]
    assert mapping.cross_check is None


def test_each_column_goes_to_one_concept(catalog, columns) -> None:
    mapping = map_metrics(catalog, columns + ["net_usage", "usage"])
    mapped = [p.column for p in mapping.pairs]
    assert len(mapped) == len(set(mapped))
    assert mapping.columns_for("Network Traffic")[-1] == "net_usage"
    # "usage" scores 0.5 against four concepts; the first listed wins
    assert mapping.columns_for("Power Usage") == ["usage"]


def test_cross_check_agrees_with_replayed_mapping(catalog, columns) -> None:
    client = ReplayClient.from_file(FIXTURES / "cloud_infrastructure.json")
    mapping = map_metrics(catalog, columns, client)
    assert len(mapping.cross_check.confirmed) == 8
    assert client.calls[-1] == f"step4_mapping:{DOMAIN}"
    assert mapping.cross_check.rejected == []
    assert mapping.cross_check.missing == []


@pytest.mark.parametrize("text, expected", [
    ("Sudden spikes in power draw", SPIKE),
    ("Sustained high latency", SUSTAINED_HIGH),
    ("Sudden spikes or sustained high CPU usage", SPIKE_OR_SUSTAINED),
    ("Gradual drop to zero", SPIKE_OR_SUSTAINED),
])
def test_classify_behavior(text: str, expected: str) -> None:
    assert classify_behavior(text) == expected


def test_plan_requests_are_valid(catalog, columns) -> None:
    plan = compile_plan(map_metrics(catalog, columns), catalog, {"path": "/data/host.csv"}, "timestamp",
                        instance_size="S")
    assert len(plan.entries) == 8
    assert all(e.behavior_class == SPIKE_OR_SUSTAINED for e in plan.entries)
    endpoints = [r.endpoint for r in plan.requests]
    assert endpoints.count("univariate") == 16
    assert endpoints.count("multivariate") == 2
    for request in plan.requests:
        req = validate_request(request.endpoint, request.body, allow_local_paths=True)
        assert req.instance_size == "S"
    server = next(r for r in plan.requests if r.reason == "joint behavior of Server metrics")
    assert server.body["target_columns"] == sorted([
        "ibm_is_instance_average_cpu_usage_percentage", "ibm_is_instance_cpu_usage_percentage",
        "ibm_is_instance_volume_read_bytes", "ibm_is_instance_volume_write_bytes",
    ])


def test_plan_needs_a_mapped_column(catalog) -> None:
    mapping = map_metrics(catalog, ["foo", "bar"])
    assert mapping.pairs == []
    with pytest.raises(EmptyMapping):
        compile_plan(mapping, catalog, {"path": "/data/x.csv"}, "timestamp")
