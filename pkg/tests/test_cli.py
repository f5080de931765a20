from __future__ import annotations

import json
import time
from pathlib import Path

import pandas as pd
import pytest

from cli.main import main
from service import store as st
from service.config import ServiceConfig
from service.manager import JobManager

START_MS = 1_704_067_200_000
SPIKE_MS = START_MS + 120 * 60_000
FIXTURES = Path(__file__).resolve().parent.parent / "modeler" / "fixtures"


def _exit_code(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


@pytest.fixture
def spike_file(tmp_path, spike_csv) -> Path:
    path = tmp_path / "cpu.csv"
    path.write_text(spike_csv)
    return path


def _detect(data: Path, out: Path, *extra: str) -> list[str]:
    return ["detect", "--data-file", str(data), "--time-column", "timestamp", "--target-columns", "cpu",
            "--anomaly-estimator", "Covariance", "--labeling-threshold", "0.001", "--output-dir", str(out),
            *extra]


def test_detect_writes_results(spike_file, tmp_path, capsys) -> None:
    out = tmp_path / "out"
    main(_detect(spike_file, out))
    result = pd.read_csv(out / "result.csv")
    assert list(result.columns) == ["timestamp", "raw", "p_value", "label"]
    assert len(result) == 200
    assert result.loc[result["label"] == -1, "timestamp"].tolist() == [SPIKE_MS]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["anomaly_count"] == 1
    assert (out / "model.json").is_file()
    assert "Detection summary" in capsys.readouterr().out


def test_detect_stream_scores_recent_rows(spike_file, tmp_path, spike_csv) -> None:
    lines = spike_csv.splitlines()
    recent = tmp_path / "recent.csv"
    recent.write_text("\n".join(lines[:1] + lines[-20:]) + "\n")
    out = tmp_path / "out"
    main(_detect(spike_file, out, "--prediction-type", "stream", "--recent-data", str(recent),
                 "--observation-window", "5"))
    assert len((out / "result.csv").read_text().splitlines()) == 1 + 5


def test_detect_multivariate_with_plot_data(tmp_path, multi_csv) -> None:
    data = tmp_path / "host.csv"
    data.write_text(multi_csv)
    out, plot = tmp_path / "out", tmp_path / "plot.csv"
    main(["detect", "--endpoint", "multivariate", "--data-file", str(data), "--time-column", "timestamp",
          "--target-columns", "cpu,mem,disk", "--anomaly-estimator", "Covariance",
          "--labeling-threshold", "0.001", "--output-dir", str(out), "--plot-data", str(plot)])
    rows = pd.read_csv(plot)
    assert list(rows.columns) == ["timestamp", "series", "value", "label"]
    assert len(rows) == 3 * 300
    assert sorted(rows["series"].unique()) == ["cpu", "disk", "mem"]
    records = {r["timestamp"]: r for r in json.loads((out / "attribution.json").read_text())}
    assert records[SPIKE_MS]["contributions"][0]["column"] == "mem"


def test_seed_flag_reaches_algorithm_config(spike_file, tmp_path) -> None:
    runs = []
    for name in ("a", "b"):
        main(["detect", "--data-file", str(spike_file), "--time-column", "timestamp", "--target-columns", "cpu",
              "--anomaly-estimator", "IsolationForest", "--seed", "5", "--output-dir", str(tmp_path / name)])
        runs.append((tmp_path / name / "result.csv").read_bytes())
    assert runs[0] == runs[1]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["seed"] == 5


def test_cli_and_service_give_identical_results(spike_file, spike_csv, tmp_path) -> None:
    out = tmp_path / "cli"
    main(_detect(spike_file, out))

    manager = JobManager(ServiceConfig(store_dir=tmp_path / "jobs", workers=1))
    manager.start()
    try:
        job = manager.submit("univariate", {
            "data_file": spike_csv, "time_column": "timestamp", "target_columns": ["cpu"],
            "anomaly_estimator": "Covariance", "labeling_threshold": 0.001,
        })
        deadline = time.monotonic() + 60
        while not manager.get(job.id).terminal and time.monotonic() < deadline:
            time.sleep(0.05)
        assert manager.get(job.id).state == st.SUCCEEDED
        assert manager.result(job.id) == (out / "result.csv").read_bytes()
    finally:
        manager.shutdown()


def test_invalid_requests_exit_1(spike_file, tmp_path) -> None:
    assert _exit_code(["detect", "--data-file", str(spike_file), "--target-columns", "cpu",
                       "--output-dir", str(tmp_path)]) == 1
    assert _exit_code(_detect(spike_file, tmp_path, "--label-column", "cpu")) == 1
    assert _exit_code(_detect(tmp_path / "missing.csv", tmp_path)) == 1
    assert _exit_code(["detect", "--instance-size", "XL", "--data-file", str(spike_file)]) == 1
    assert _exit_code(["frobnicate"]) == 1


def test_bad_config_file_exits_1(spike_file, tmp_path) -> None:
    config = tmp_path / "service.json"
    config.write_text(json.dumps({"colour": "red"}))
    assert _exit_code(_detect(spike_file, tmp_path, "--config", str(config))) == 1


def test_runtime_failures_exit_2(spike_file, tmp_path) -> None:
    config = tmp_path / "service.json"
    config.write_text(json.dumps({"instance_sizes": {"S": {"max_rows": 50}}}))
    assert _exit_code(_detect(spike_file, tmp_path / "out", "--instance-size", "S",
                              "--config", str(config))) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("timestamp,foo,bar\n")
    assert _exit_code(["plan", "--data-file", str(empty), "--time-column", "timestamp",
                       "--output-dir", str(tmp_path / "plan")]) == 2


def test_benchmark_synthetic(tmp_path, capsys) -> None:
    output = tmp_path / "bench.csv"
    main(["benchmark", "--synthetic", "--synthetic-assets", "2", "--data-root", str(tmp_path / "data"),
          "--estimators", "Covariance,NearestNeighbor", "--evaluation-metrics", "f1,recall",
          "--output", str(output)])
    lines = output.read_text().splitlines()
    assert lines[0].startswith("estimator,dataset,f1")
    assert [line.split(",")[:2] for line in lines[1:]] == [["Covariance", "synthetic"],
                                                          ["NearestNeighbor", "synthetic"]]
    assert output.with_suffix(".txt").is_file()
    assert "Benchmark results" in capsys.readouterr().out


@pytest.mark.slow
def test_benchmark_all_estimators(tmp_path) -> None:
    output = tmp_path / "bench.csv"
    main(["benchmark", "--synthetic", "--synthetic-assets", "1", "--data-root", str(tmp_path / "data"),
          "--estimators", "all", "--output", str(output)])
    assert len(output.read_text().splitlines()) == 1 + 8


def test_benchmark_flag_errors(tmp_path) -> None:
    assert _exit_code(["benchmark", "--data-root", str(tmp_path), "--estimators", "RandomForest"]) == 1
    write = ["benchmark", "--synthetic", "--synthetic-assets", "1", "--data-root", str(tmp_path)]
    main(write + ["--estimators", "Covariance", "--output", str(tmp_path / "b.csv")])
    (tmp_path / "synthetic" / "asset-1" / "test.csv").unlink()
    assert _exit_code(["benchmark", "--data-root", str(tmp_path), "--estimators", "Covariance",
                       "--output", str(tmp_path / "b.csv")]) == 2


def test_plan_then_validate(tmp_path) -> None:
    data = tmp_path / "host.csv"
    data.write_text((FIXTURES / "cloud_columns.csv").read_text())
    out = tmp_path / "plan"
    main(["plan", "--data-file", str(data), "--time-column", "timestamp", "--output-dir", str(out)])
    for name in ("catalog.json", "mapping.json", "plan.json"):
        assert (out / name).is_file()
    requests = sorted((out / "requests").glob("*.json"))
    assert len(requests) == 18
    assert requests[0].name == "001-univariate.json"
    main(["validate", *map(str, requests)])


def test_validate_reports_bad_requests(tmp_path) -> None:
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"data_file": {"path": "/data/x.csv"}, "time_column": "ts",
                                "target_columns": ["cpu"]}))
    assert _exit_code(["validate", str(good)]) == 1
    main(["validate", "--endpoint", "univariate", str(good)])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"endpoint": "univariate", "body": {"time_column": "ts"}}))
    assert _exit_code(["validate", str(good), str(bad), "--endpoint", "univariate"]) == 1
