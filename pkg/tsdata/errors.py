from __future__ import annotations

from utils.errors import AnomalyServiceError


class DataError(AnomalyServiceError):
    code = "data_error"


class MissingColumn(DataError):
    code = "missing_column"

    def __init__(self, name: str) -> None:
        super().__init__(f"column not found: {name}", column=name)
        self.name = name


class DuplicateColumn(DataError):
    code = "duplicate_column"

    def __init__(self, name: str) -> None:
        super().__init__(f"column appears more than once: {name}", column=name)


class TimeParseError(DataError):
    code = "time_parse_error"

    def __init__(self, row: int, value: str = "", fmt: str = "") -> None:
        super().__init__(f"row {row}: cannot parse time {value!r} with format {fmt!r}",
                         row=row, value=value, format=fmt)
        self.row = row


class DuplicateTimestamp(DataError):
    code = "duplicate_timestamp"

    def __init__(self, row: int) -> None:
        super().__init__(f"row {row}: duplicate timestamp", row=row)
        self.row = row


class NonNumericValue(DataError):
    code = "non_numeric_value"

    def __init__(self, row: int, column: str, value: str = "") -> None:
        super().__init__(f"row {row}, column {column}: not a finite number: {value!r}",
                         row=row, column=column, value=value)
        self.row = row
        self.column = column


class InvalidLabel(DataError):
    code = "invalid_label"

    def __init__(self, row: int, value: str) -> None:
        super().__init__(f"row {row}: label must be 1, +1 or -1, got {value!r}", row=row, value=value)
        self.row = row


class InvalidFrame(DataError):
    code = "invalid_frame"


class EmptyFitRange(DataError):
    code = "empty_fit_range"


class SeriesTooShort(DataError):
    code = "series_too_short"

    def __init__(self, length: int, required: int) -> None:
        super().__init__(f"series of length {length} needs more than {required} rows",
                         length=length, required=required)


class UnknownSplitValue(DataError):
    code = "unknown_split_value"

    def __init__(self, row: int, value: str) -> None:
        super().__init__(f"row {row}: split value must be train, val or test, got {value!r}",
                         row=row, value=value)
        self.row = row


class AllColumnsDropped(DataError):
    code = "all_columns_dropped"
