"""Per-option daily quote histories: CSV ingest, validation and windowing."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import pathlib
from dataclasses import dataclass, fields
from typing import Iterable, TextIO

__all__ = [
    "COLUMNS",
    "DataError",
    "DailyRecord",
    "OptionHistory",
    "Window",
    "parse_history",
    "read_history",
    "to_csv",
    "window_at",
]

COLUMNS = (
    "date",
    "opt_bid",
    "opt_ask",
    "opt_last",
    "impl_vol",
    "stock_bid",
    "stock_ask",
    "stock_last",
)


class DataError(ValueError):
    """Input data is malformed or violates a quote invariant."""


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    opt_bid: float
    opt_ask: float
    opt_last: float
    impl_vol: float
    stock_bid: float
    stock_ask: float
    stock_last: float

    def validate(self) -> None:
        for f in fields(self)[1:]:
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise DataError(f"{self.date}: {f.name} must be positive and finite, got {v!r}")
        if not self.opt_bid < self.opt_ask:
            raise DataError(
                f"{self.date}: crossed or zero-width option quote "
                f"(opt_bid={self.opt_bid!r}, opt_ask={self.opt_ask!r})"
            )
        if not self.stock_bid < self.stock_ask:
            raise DataError(
                f"{self.date}: crossed or zero-width stock quote "
                f"(stock_bid={self.stock_bid!r}, stock_ask={self.stock_ask!r})"
            )


@dataclass(frozen=True)
class OptionHistory:
    option_id: str
    records: tuple[DailyRecord, ...]

    def __post_init__(self):
        if len(self.records) < 3:
            raise DataError(
                f"{self.option_id}: need at least 3 days of quotes, got {len(self.records)}"
            )
        for prev, cur in zip(self.records, self.records[1:]):
            if not cur.date > prev.date:
                raise DataError(f"{self.option_id}: dates not strictly increasing at {cur.date}")

    def __len__(self) -> int:
        return len(self.records)

    def index_of(self, date: dt.date) -> int:
        for k, rec in enumerate(self.records):
            if rec.date == date:
                return k
        raise KeyError(f"{self.option_id}: no record for {date}")


@dataclass(frozen=True)
class Window:
    """Three consecutive trading days mapped to ``t = -2tau, -tau, 0``."""

    day_minus2: DailyRecord
    day_minus1: DailyRecord
    day_0: DailyRecord


def parse_history(source: TextIO | str, option_id: str = "option") -> OptionHistory:
    """Parse and validate one option's CSV history.

    ``source`` is a text stream or the CSV text itself.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{option_id}: empty input") from None
    if tuple(h.strip() for h in header) != COLUMNS:
        raise DataError(f"{option_id}: line 1: expected header {','.join(COLUMNS)}")

    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(COLUMNS):
            raise DataError(f"{option_id}: line {line}: expected {len(COLUMNS)} fields, got {len(row)}")
        try:
            date = dt.date.fromisoformat(row[0].strip())
            nums = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise DataError(f"{option_id}: line {line}: {exc}") from None
        rec = DailyRecord(date, *nums)
        rec.validate()
        records.append(rec)
    return OptionHistory(option_id, tuple(records))


def read_history(path) -> OptionHistory:
    """Read a history file; the option id is the file stem."""
    path = pathlib.Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_history(fh, option_id=path.stem)


def to_csv(history: OptionHistory) -> str:
    """Serialize back to the input format; ``repr`` keeps floats round-trippable."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in history.records:
        w.writerow([r.date.isoformat()] + [repr(getattr(r, c)) for c in COLUMNS[1:]])
    return out.getvalue()


def window_at(history: OptionHistory, index: int) -> Window:
    if not 2 <= index < len(history):
        raise IndexError(
            f"{history.option_id}: window index {index} outside [2, {len(history) - 1}]"
        )
    r = history.records
    return Window(r[index - 2], r[index - 1], r[index])


def windows(history: OptionHistory) -> Iterable[tuple[int, Window]]:
    for k in range(2, len(history)):
        yield k, window_at(history, k)
