from __future__ import annotations

import numpy as np
import pytest

from tsdata.csvio import EPOCH_S, parse_csv, parse_numeric_csv, serialize_csv
from tsdata.errors import (
    DuplicateColumn,
    DuplicateTimestamp,
    EmptyFitRange,
    InvalidFrame,
    InvalidLabel,
    MissingColumn,
    NonNumericValue,
    SeriesTooShort,
    TimeParseError,
    UnknownSplitValue,
)
from tsdata.frame import ColumnRoles, MetricFrame, WindowSpec
from tsdata.transforms import (
    apply_norm,
    inverse_normalize,
    make_windows,
    split_by_column,
    unsupervised_feature_select,
    zscore_normalize,
)

START_MS = 1_704_067_200_000


def roles(*targets: str) -> ColumnRoles:
    return ColumnRoles("timestamp", targets)


def test_parse_csv_sorts_rows_by_time() -> None:
    text = ("timestamp,cpu\n"
            "2024-01-01 00:02:00,3\n"
            "2024-01-01 00:00:00,1\n"
            "2024-01-01 00:01:00,2\n")
    frame = parse_csv(text, roles("cpu"))
    assert frame.timestamps.tolist() == [START_MS, START_MS + 60_000, START_MS + 120_000]
    assert frame.column("cpu").tolist() == [1.0, 2.0, 3.0]


def test_parse_csv_reads_epoch_seconds() -> None:
    text = "t,v\n1704067200,1.5\n1704067260.5,2.5\n"
    frame = parse_csv(text, ColumnRoles("t", ("v",), EPOCH_S))
    assert frame.timestamps.tolist() == [START_MS, START_MS + 60_500]


def test_missing_target_column_is_named() -> None:
    with pytest.raises(MissingColumn) as exc:
        parse_csv("timestamp,cpu\n2024-01-01 00:00:00,1\n", roles("mem"))
    assert exc.value.name == "mem"


def test_bad_time_reports_row() -> None:
    text = "timestamp,cpu\n2024-01-01 00:00:00,1\nyesterday,2\n"
    with pytest.raises(TimeParseError) as exc:
        parse_csv(text, roles("cpu"))
    assert exc.value.row == 1


def test_duplicate_timestamp_rejected() -> None:
    text = "timestamp,cpu\n2024-01-01 00:00:00,1\n2024-01-01 00:00:00,2\n"
    with pytest.raises(DuplicateTimestamp):
        parse_csv(text, roles("cpu"))


def test_duplicate_header_rejected() -> None:
    with pytest.raises(DuplicateColumn):
        parse_csv("timestamp,cpu,cpu\n2024-01-01 00:00:00,1,2\n", roles("cpu"))


@pytest.mark.parametrize("cell", ["", "abc", "inf", "nan"])
def test_non_numeric_cell_reports_row_and_column(cell: str) -> None:
    text = f"timestamp,cpu\n2024-01-01 00:00:00,1\n2024-01-01 00:01:00,{cell}\n"
    with pytest.raises(NonNumericValue) as exc:
        parse_csv(text, roles("cpu"))
    assert exc.value.row == 1
    assert exc.value.column == "cpu"


def test_labels_must_be_plus_or_minus_one() -> None:
    text = "timestamp,cpu,y\n2024-01-01 00:00:00,1,1\n2024-01-01 00:01:00,2,0\n"
    with pytest.raises(InvalidLabel) as exc:
        parse_csv(text, ColumnRoles("timestamp", ("cpu",), label_column="y"))
    assert exc.value.row == 1


def test_serialize_then_parse_gives_equal_frame(make_frame) -> None:
    rng = np.random.default_rng(0)
    frame = make_frame(rng.standard_normal((25, 3)), ["a", "b", "c"],
                       labels=np.where(rng.random(25) < 0.2, -1, 1), label_column="y")
    text = serialize_csv(frame, time_column="ts")
    back = parse_csv(text, ColumnRoles("ts", ("a", "b", "c"), "epoch_ms", label_column="y"))
    assert back.equals(frame)


def test_numeric_csv_without_time_uses_row_positions() -> None:
    frame = parse_numeric_csv("a,b\n1,2\n3,4\n5,6\n")
    assert frame.timestamps.tolist() == [0, 1, 2]
    assert frame.names == ["a", "b"]


def test_frame_rejects_non_increasing_timestamps() -> None:
    with pytest.raises(InvalidFrame):
        MetricFrame(timestamps=np.array([2, 1]), columns={"a": np.array([0.0, 1.0])})


def test_zscore_uses_fit_rows_only(make_frame) -> None:
    values = np.array([0.0, 2.0, 100.0, 200.0])
    frame = make_frame(values, ["x"])
    normed, stats = zscore_normalize(frame, fit_rows=slice(0, 2))
    assert stats.mean["x"] == 1.0
    assert stats.std["x"] == 1.0
    assert normed.column("x").tolist() == [-1.0, 1.0, 99.0, 199.0]
    assert inverse_normalize(normed, stats).column("x").tolist() == values.tolist()


def test_zscore_constant_column_is_floored(make_frame) -> None:
    normed, stats = zscore_normalize(make_frame(np.full(5, 3.0), ["flat"]))
    assert stats.std["flat"] == 0.0
    assert np.all(normed.column("flat") == 0.0)


def test_zscore_empty_fit_range(make_frame) -> None:
    with pytest.raises(EmptyFitRange):
        zscore_normalize(make_frame(np.arange(4.0)), fit_rows=slice(0, 0))


def test_apply_norm_reuses_captured_stats(make_frame) -> None:
    train = make_frame(np.array([1.0, 3.0]), ["x"])
    _, stats = zscore_normalize(train)
    other = apply_norm(make_frame(np.array([2.0, 5.0]), ["x"]), stats)
    assert other.column("x").tolist() == [0.0, 3.0]


def test_windows_cover_every_row_after_lookback(make_frame) -> None:
    values = np.arange(20.0).reshape(10, 2)
    windows = make_windows(make_frame(values), WindowSpec(lookback_window=3))
    assert len(windows) == 7
    assert windows.target_rows.tolist() == list(range(3, 10))
    np.testing.assert_array_equal(windows.inputs[0], values[0:3])
    np.testing.assert_array_equal(windows.targets[0], values[3])
    assert windows.flat().shape == (7, 6)


def test_windows_need_more_rows_than_lookback(make_frame) -> None:
    with pytest.raises(SeriesTooShort):
        make_windows(make_frame(np.arange(3.0)), WindowSpec(lookback_window=3))


def test_feature_selection_drops_constant_and_correlated(make_frame) -> None:
    rng = np.random.default_rng(1)
    a = rng.standard_normal(100)
    b = 2.0 * a + 1e-4 * rng.standard_normal(100)
    c = rng.standard_normal(100)
    frame = make_frame(np.column_stack([a, np.full(100, 7.0), b, c]), ["a", "flat", "b", "c"])
    selection = unsupervised_feature_select(frame)
    assert selection.retained == ["a", "c"]
    assert selection.dropped["flat"] == "constant"
    assert selection.dropped["b"].startswith("correlated with a")
    again = unsupervised_feature_select(frame.select(selection.retained))
    assert again.retained == ["a", "c"]
    assert not again.dropped


def test_split_by_column_keeps_order(make_frame) -> None:
    splits = np.array(["train", "val", "train", "test", "VAL"], dtype=object)
    frame = make_frame(np.arange(5.0), ["x"], splits=splits, split_column="s")
    train, val, test = split_by_column(frame)
    assert train.column("x").tolist() == [0.0, 2.0]
    assert val.column("x").tolist() == [1.0, 4.0]
    assert test.column("x").tolist() == [3.0]


def test_unknown_split_value(make_frame) -> None:
    frame = make_frame(np.arange(3.0), ["x"], splits=np.array(["train", "holdout", "test"], dtype=object))
    with pytest.raises(UnknownSplitValue) as exc:
        split_by_column(frame)
    assert exc.value.row == 1
