#!/usr/bin/env python3
"""adservice: local detection, benchmarking, monitoring plans and the HTTP service.

Exit codes: 0 success, 1 invalid flags or request, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, NoReturn, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from detectors.config import ESTIMATORS
from detectors.errors import InvalidDetectorConfig
from evaluation.benchmark import (
    METRICS,
    BenchmarkSpec,
    format_benchmark,
    rows_to_csv,
    run_benchmark,
)
from evaluation.errors import BenchmarkError, MissingAssetFiles
from evaluation.synthetic import write_mini_dataset
from modeler.catalog import FailureModeCatalog, load_catalog
from modeler.chain import generate_catalog
from modeler.errors import EmptyMapping
from modeler.llm import HttpChatClient, ReplayClient, TextGenClient
from modeler.mapping import MetricMapping, map_metrics
from modeler.plan import compile_plan
from scoring.series import ScoreSeries
from service.config import ServiceConfig, load_config
from service.errors import ValidationFailed
from service.pipeline import read_input, run_detection
from service.schema import ENDPOINTS, UNIVARIATE, validate_request
from service.server import serve
from tsdata.csvio import format_times, parse_csv
from tsdata.frame import ColumnRoles
from utils.display import print_table
from utils.errors import AnomalyServiceError
from utils.log import setup_logging

EXIT_INVALID = 1
EXIT_RUNTIME = 2

REPLAY_FIXTURE = Path(__file__).resolve().parent.parent / "modeler" / "fixtures" / "cloud_infrastructure.json"
DEFAULT_DOMAIN = "cloud infrastructure"


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input (exit 1), not runtime failures."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fail(code: int, message: str) -> NoReturn:
    logger.error(message)
    sys.exit(code)


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _json_arg(text: str) -> Any:
    """JSON text, or ``@path`` to read it from a file."""
    if text.startswith("@"):
        try:
            text = Path(text[1:]).expanduser().read_text(encoding="utf-8")
        except OSError as e:
            raise argparse.ArgumentTypeError(f"cannot read {text[1:]}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"not valid JSON: {e}") from None


def _read_text(path: str, flag: str) -> str:
    p = Path(path).expanduser()
    if not p.is_file():
        _fail(EXIT_INVALID, f"{flag}: no such file: {p}")
    return p.read_text(encoding="utf-8")


# ========== detect ==========

# flag dest -> request argument; every flag defaults to None and is only sent when given
_REQUEST_FLAGS = (
    "time_column", "time_format", "target_columns", "label_column", "feature_columns",
    "prediction_type", "algorithm_config", "algorithm_type", "anomaly_estimator",
    "lookback_window", "observation_window", "labeling_method", "labeling_threshold",
    "train_val_test_column", "evaluation_metrics", "evaluation_time", "instance_size",
    "unsupervised_fs", "train_test_split", "train_cv_split",
)


def build_payload(args: argparse.Namespace) -> dict[str, Any]:
    """Request body for *args*: data files inlined, ``--seed`` folded into algorithm_config."""
    payload: dict[str, Any] = {"data_file": _read_text(args.data_file, "--data-file")}
    if args.recent_data is not None:
        payload["recent_data"] = _read_text(args.recent_data, "--recent-data")
    for name in _REQUEST_FLAGS:
        value = getattr(args, name)
        if value is not None:
            payload[name] = value
    if args.seed is not None:
        cfg = payload.get("algorithm_config") or {}
        if not isinstance(cfg, dict):
            _fail(EXIT_INVALID, "--algorithm-config must be a JSON object")
        payload["algorithm_config"] = {**cfg, "seed": args.seed}
    return payload


def plot_rows(series: ScoreSeries, data: bytes, roles: ColumnRoles) -> pd.DataFrame:
    """Long-form (timestamp, series, value, label) rows for every target column."""
    frame = parse_csv(data, ColumnRoles(roles.time_column, roles.target_columns, roles.time_format))
    values = pd.DataFrame(dict(frame.columns), index=pd.Index(frame.timestamps, name="ms"))
    values = values.loc[series.timestamps]
    long = values.reset_index().melt(id_vars="ms", var_name="series", value_name="value")
    long["label"] = np.tile(series.label.astype(int), values.shape[1])
    long.insert(0, "timestamp", format_times(long.pop("ms").to_numpy(), roles.time_format))
    return long


def top_anomalies(series: ScoreSeries, time_format: str, limit: int) -> list[list[Any]]:
    rows = series.anomaly_rows
    order = rows[np.argsort(series.p_value[rows], kind="stable")][:limit]
    stamps = format_times(series.timestamps[order], time_format)
    return [
        [stamp, float(series.raw[r]), float(series.p_value[r]), series.top_attribution(int(r)) or "-"]
        for stamp, r in zip(stamps, order)
    ]


def cmd_detect(args: argparse.Namespace, config: ServiceConfig) -> None:
    payload = build_payload(args)
    req = validate_request(args.endpoint, payload)
    size = config.size(req.instance_size)
    data = read_input(req.data_ref, size, config)
    recent = read_input(req.recent_data, size, config) if req.recent_data is not None else None
    outcome = run_detection(req, data, size, recent)

    out_dir = Path(args.output_dir).expanduser()
    paths = outcome.write(out_dir)
    s = outcome.summary
    print_table(
        ["endpoint", "estimator", "rows", "scored", "anomalies"],
        [[req.endpoint, s.get("estimator", "-"), s["rows"], s["scored_rows"], s["anomaly_count"]]],
        title="Detection summary",
    )
    print_table(["timestamp", "raw", "p_value", "top attribution"],
                top_anomalies(outcome.series, req.roles.time_format, args.top),
                title=f"Most significant anomalies (top {args.top})", precision=6)
    if s.get("evaluation"):
        print_table(list(s["evaluation"]), [list(s["evaluation"].values())], title="Evaluation on the test split")

    if args.plot_data:
        source = recent if req.prediction_type == "stream" and recent is not None else data
        plot = plot_rows(outcome.series, source, req.roles)
        Path(args.plot_data).expanduser().parent.mkdir(parents=True, exist_ok=True)
        plot.to_csv(Path(args.plot_data).expanduser(), index=False, lineterminator="\n")
        logger.info(f"plot data: {args.plot_data} ({len(plot)} rows)")
    logger.success(f"results written to {paths['result']}")


# ========== benchmark ==========

def cmd_benchmark(args: argparse.Namespace, config: ServiceConfig) -> None:
    root = Path(args.data_root).expanduser()
    if args.synthetic:
        write_mini_dataset(root, assets=args.synthetic_assets, seed=42 if args.seed is None else args.seed)
    estimators = ESTIMATORS if args.estimators == "all" else tuple(_csv_list(args.estimators))
    spec = BenchmarkSpec(
        root=root,
        estimators=estimators,
        datasets=tuple(_csv_list(args.datasets)) if args.datasets else None,
        evaluation_metrics=tuple(_csv_list(args.evaluation_metrics)),
        evaluation_time=args.evaluation_time,
        seed=42 if args.seed is None else args.seed,
        lookback_window=args.lookback_window,
        jobs=args.jobs,
    )
    rows = run_benchmark(spec)
    output = Path(args.output).expanduser()
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(rows_to_csv(rows), encoding="utf-8")
    table = format_benchmark(rows, spec.evaluation_metrics, with_published=not args.no_published)
    output.with_suffix(".txt").write_text(table, encoding="utf-8")
    print("\n" + table)
    logger.success(f"benchmark table written to {output}")


# ========== plan ==========

def _plan_client(args: argparse.Namespace) -> TextGenClient:
    if args.llm:
        return HttpChatClient.from_env()
    return ReplayClient.from_file(Path(args.replay).expanduser())


def _dataset_columns(path: Path, time_column: str) -> list[str]:
    if not path.is_file():
        _fail(EXIT_INVALID, f"--data-file: no such file: {path}")
    header = [str(c).strip() for c in pd.read_csv(path, nrows=0).columns]
    if time_column not in header:
        _fail(EXIT_INVALID, f"--time-column {time_column!r} not in {path.name} header")
    return [c for c in header if c != time_column]


def _print_mapping(mapping: MetricMapping) -> None:
    print_table(["concept", "column", "score"], [[p.concept, p.column, p.score] for p in mapping.pairs],
                title="Mapped metrics")
    if mapping.unmapped:
        print("\nUnmapped concepts: " + ", ".join(mapping.unmapped))


def cmd_plan(args: argparse.Namespace, config: ServiceConfig) -> None:
    out_dir = Path(args.output_dir).expanduser()
    out_dir.mkdir(parents=True, exist_ok=True)
    data_file = Path(args.data_file).expanduser().resolve()
    columns = _dataset_columns(data_file, args.time_column)

    client: TextGenClient | None = None
    if args.catalog:
        catalog: FailureModeCatalog = load_catalog(Path(args.catalog).expanduser())
    else:
        client = _plan_client(args)
        catalog = generate_catalog(client, args.domain)
        for err in catalog.errors:
            logger.warning(f"{err.stage} {err.subject}: {err.message}")
    (out_dir / "catalog.json").write_text(catalog.to_json(), encoding="utf-8")

    if args.cross_check and client is None:
        client = _plan_client(args)
    mapping = map_metrics(catalog, columns, client if args.cross_check else None)
    (out_dir / "mapping.json").write_text(json.dumps(mapping.to_dict(), indent=2) + "\n", encoding="utf-8")
    _print_mapping(mapping)

    plan = compile_plan(mapping, catalog, {"path": str(data_file)}, args.time_column,
                        time_format=args.time_format, instance_size=args.instance_size)
    (out_dir / "plan.json").write_text(plan.to_json(), encoding="utf-8")
    requests_dir = out_dir / "requests"
    requests_dir.mkdir(exist_ok=True)
    for i, request in enumerate(plan.requests, start=1):
        path = requests_dir / f"{i:03d}-{request.endpoint}.json"
        path.write_text(json.dumps(request.to_dict(), indent=2) + "\n", encoding="utf-8")
    print_table(["component", "concept", "column", "behavior"],
                [[e.component, e.concept, e.column, e.behavior_class] for e in plan.entries],
                title="Monitoring plan")
    logger.success(f"{len(plan.requests)} requests written to {requests_dir}")


# ========== validate ==========

def load_request_file(path: Path, endpoint: str | None) -> tuple[str, dict[str, Any]]:
    """Accept a plan request file ``{"endpoint", "body"}`` or a bare body with --endpoint."""
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationFailed([f"{path}: {e}"]) from None
    if isinstance(doc, dict) and "body" in doc:
        return endpoint or str(doc.get("endpoint", "")), doc["body"]
    if endpoint is None:
        raise ValidationFailed([f"{path}: bare request body needs --endpoint"])
    return endpoint, doc


def cmd_validate(args: argparse.Namespace, config: ServiceConfig) -> None:
    failures = 0
    for name in args.requests:
        path = Path(name).expanduser()
        try:
            endpoint, body = load_request_file(path, args.endpoint)
            validate_request(endpoint, body, allow_local_paths=True)
        except ValidationFailed as e:
            failures += 1
            logger.error(f"{path}: invalid")
            for violation in e.violations:
                logger.error(f"  {violation}")
        else:
            logger.success(f"{path}: valid for {endpoint}")
    if failures:
        _fail(EXIT_INVALID, f"{failures} of {len(args.requests)} requests invalid")


def cmd_serve(args: argparse.Namespace, config: ServiceConfig) -> None:
    if args.host:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    serve(config)


# ========== CLI ==========

def _add_request_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("request arguments")
    g.add_argument("--data-file", required=True, metavar="CSV", help="input time series (CSV with header)")
    g.add_argument("--time-column", metavar="NAME")
    g.add_argument("--time-format", metavar="FMT", help="strftime format, epoch_ms or epoch_s")
    g.add_argument("--target-columns", type=_csv_list, metavar="A,B", help="comma-separated target columns")
    g.add_argument("--label-column", metavar="NAME")
    g.add_argument("--feature-columns", type=_csv_list, metavar="A,B")
    g.add_argument("--prediction-type", choices=("batch", "stream"))
    g.add_argument("--recent-data", metavar="CSV", help="recent rows to score (stream)")
    g.add_argument("--algorithm-config", type=_json_arg, metavar="JSON", help="JSON object or @file")
    g.add_argument("--algorithm-type", choices=("ReconstructAD", "PredAD", "RelationshipAD"))
    g.add_argument("--anomaly-estimator", metavar="NAME", help=f"one of {', '.join(ESTIMATORS)}")
    g.add_argument("--lookback-window", type=int, metavar="N")
    g.add_argument("--observation-window", type=int, metavar="N")
    g.add_argument("--labeling-method", choices=("pvalue_threshold", "contamination_quantile", "std_multiple"))
    g.add_argument("--labeling-threshold", type=float, metavar="X")
    g.add_argument("--train-val-test-column", metavar="NAME")
    g.add_argument("--evaluation-metrics", type=_csv_list, metavar="f1,precision")
    g.add_argument("--evaluation-time", type=float, metavar="SEC")
    g.add_argument("--instance-size", choices=("S", "M", "L"))
    g.add_argument("--unsupervised-fs", action="store_const", const=True, default=None,
                   help="drop near-constant and near-duplicate columns before fitting")
    g.add_argument("--train-test-split", type=float, metavar="FRAC")
    g.add_argument("--train-cv-split", type=int, metavar="K")


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("--seed", type=int, default=None, help="fix all randomness (default 42)")
    common.add_argument("--config", metavar="JSON", default=None,
                        help="service config file; overrides ADS_* environment values")

    parser = _Parser(
        prog="adservice",
        description="Time-series anomaly detection: local runs, benchmarks, monitoring plans and the job service",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  adservice detect --data-file cpu.csv --time-column timestamp --target-columns cpu
  adservice detect --endpoint multivariate --data-file host.csv --time-column ts \\
      --target-columns cpu,mem,disk --anomaly-estimator IsolationForest --plot-data plot.csv
  adservice benchmark --synthetic --data-root /tmp/bench --estimators all
  adservice plan --data-file host.csv --time-column timestamp --output-dir plan/
  adservice validate plan/requests/*.json
  adservice serve --config service.json
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", parents=[common], help="run one detection locally")
    p.add_argument("--endpoint", choices=ENDPOINTS, default=UNIVARIATE)
    _add_request_flags(p)
    p.add_argument("--output-dir", default="adservice-out", metavar="DIR",
                   help="where result.csv, summary.json and model.json go (default: adservice-out)")
    p.add_argument("--plot-data", metavar="CSV", help="also write (timestamp, series, value, label) rows")
    p.add_argument("--top", type=int, default=10, metavar="N", help="anomalies listed in the summary")

    p = sub.add_parser("benchmark", parents=[common], help="evaluate estimators on a dataset root")
    p.add_argument("--data-root", required=True, metavar="DIR", help="<root>/<dataset>/<asset>/{train,test,labels}.csv")
    p.add_argument("--synthetic", action="store_true", help="generate the synthetic mini dataset under --data-root first")
    p.add_argument("--synthetic-assets", type=int, default=3, metavar="N")
    p.add_argument("--estimators", default="all", metavar="A,B", help="comma-separated names or 'all'")
    p.add_argument("--datasets", default=None, metavar="A,B")
    p.add_argument("--evaluation-metrics", default="f1", metavar="f1,precision",
                   help=f"subset of {', '.join(METRICS)}")
    p.add_argument("--evaluation-time", type=float, default=3600.0, metavar="SEC", help="per-asset budget")
    p.add_argument("--lookback-window", type=int, default=10, metavar="N")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="assets evaluated in parallel")
    p.add_argument("--output", default="benchmark.csv", metavar="CSV")
    p.add_argument("--no-published", action="store_true", help="omit the published comparison lines")

    p = sub.add_parser("plan", parents=[common], help="build a monitoring plan from a failure-mode catalog")
    p.add_argument("--data-file", required=True, metavar="CSV", help="dataset whose header is mapped")
    p.add_argument("--time-column", required=True, metavar="NAME")
    p.add_argument("--time-format", default=None, metavar="FMT")
    p.add_argument("--instance-size", choices=("S", "M", "L"), default=None)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--catalog", metavar="JSON", help="existing catalog file")
    src.add_argument("--replay", default=str(REPLAY_FIXTURE), metavar="JSON",
                     help="recorded prompt-chain responses (default: bundled cloud fixture)")
    src.add_argument("--llm", action="store_true", help="query the ADS_LLM_ENDPOINT model")
    p.add_argument("--domain", default=DEFAULT_DOMAIN)
    p.add_argument("--cross-check", action="store_true", help="compare with the model's own mapping")
    p.add_argument("--output-dir", default="plan", metavar="DIR")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP job service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)

    p = sub.add_parser("validate", parents=[common], help="check request files against the endpoint matrix")
    p.add_argument("requests", nargs="+", metavar="JSON")
    p.add_argument("--endpoint", choices=ENDPOINTS, default=None, help="endpoint for bare request bodies")

    return parser.parse_args(argv)


COMMANDS = {
    "detect": cmd_detect,
    "benchmark": cmd_benchmark,
    "plan": cmd_plan,
    "serve": cmd_serve,
    "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> None:
    args = parse_args(argv)
    setup_logging(verbose=args.verbose)
    try:
        config = load_config(Path(args.config).expanduser() if args.config else None)
        COMMANDS[args.command](args, config)
    except ValidationFailed as e:
        logger.error("invalid request:")
        for violation in e.violations:
            logger.error(f"  {violation}")
        sys.exit(EXIT_INVALID)
    except InvalidDetectorConfig as e:
        _fail(EXIT_INVALID, e.message)
    except MissingAssetFiles as e:
        logger.error(f"{len(e.missing)} benchmark files missing:")
        for path in e.missing:
            logger.error(f"  {path}")
        sys.exit(EXIT_RUNTIME)
    except BenchmarkError as e:
        _fail(EXIT_INVALID, e.message)
    except EmptyMapping as e:
        _fail(EXIT_RUNTIME, f"{e.message}; see the unmapped concepts above")
    except AnomalyServiceError as e:
        _fail(EXIT_RUNTIME, f"{e.code}: {e.message}")


if __name__ == "__main__":
    main()
