"""CSV log ingestion.

The published log schema has six boolean engagement columns (any one of
them positive makes the row's preference label positive), one boolean
sensitive-attribute column, plus two toolkit columns: ``traffic``
(``default`` or ``random``) and ``date`` (ISO-8601 day).  Booleans are
encoded as ASCII ``0``/``1``; files are UTF-8, comma-delimited, with a
header whose column order does not matter.

Files that ship one traffic source per file may omit the ``traffic``
column and declare the source per file instead.  Ingestion is a single
streaming pass, so file size is bounded only by disk; partial tallies
from parallel passes can be merged afterwards.
"""

from __future__ import annotations

import csv
import datetime as dt
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from .errors import (
    ConfigError,
    InsufficientRandomTrafficError,
    ParseError,
    SchemaError,
)
from .records import (
    SIGNAL_FIELDS,
    Engagement,
    GroupTally,
    TrafficRecord,
    TrafficSource,
    tally,
)

__all__ = [
    "DatasetSchema",
    "DEFAULT_SCHEMA",
    "RejectedRow",
    "read_logs",
    "write_logs",
    "partition_daily",
]


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of a log file.

    ``group_of`` maps raw attribute cells to 1-based group indices; the
    default maps the boolean young-adult attribute to groups 1 (young
    adult) and 2 (other).  Exactly six signal columns and one attribute
    column are expected.
    """

    signal_columns: tuple[str, ...] = SIGNAL_FIELDS
    attribute_column: str = "young_adult"
    group_of: Mapping[str, int] = MappingProxyType({"1": 1, "0": 2})
    traffic_column: str = "traffic"
    date_column: str = "date"

    def __post_init__(self) -> None:
        if len(self.signal_columns) != 6 or len(set(self.signal_columns)) != 6:
            raise ConfigError("exactly six distinct signal columns are required")
        groups = set(self.group_of.values())
        if not groups or groups != set(range(1, len(groups) + 1)):
            raise ConfigError("attribute mapping must cover group indices 1..K")
        object.__setattr__(self, "group_of", MappingProxyType(dict(self.group_of)))

    @property
    def k(self) -> int:
        return max(self.group_of.values())

    @classmethod
    def grouped(cls, k: int) -> "DatasetSchema":
        """Schema variant with an integer ``group`` column carrying 1..k directly."""
        if k < 1:
            raise ConfigError(f"group count must be >= 1, got {k}")
        return cls(
            attribute_column="group",
            group_of={str(g): g for g in range(1, k + 1)},
        )

    def raw_attribute(self, group: int) -> str:
        for raw, g in self.group_of.items():
            if g == group:
                return raw
        raise ConfigError(f"group {group} has no attribute encoding")


DEFAULT_SCHEMA = DatasetSchema()


@dataclass(frozen=True)
class RejectedRow:
    """One malformed row: its 1-based file line and why it was rejected."""

    line: int
    reason: str


def _parse_bit(cell: str, column: str, line: int) -> bool:
    if cell == "0":
        return False
    if cell == "1":
        return True
    raise ParseError(f"line {line}, column {column!r}: expected 0 or 1, got {cell!r}", line=line)


def read_logs(
    path: str | Path,
    schema: DatasetSchema = DEFAULT_SCHEMA,
    *,
    traffic: TrafficSource | None = None,
    date: dt.date | None = None,
    rejects: list[RejectedRow] | None = None,
) -> Iterator[TrafficRecord]:
    """Stream records from a CSV log file.

    ``traffic``/``date`` act as per-file values when the corresponding
    column is absent (a column present in the file wins).  Without an
    override, a missing traffic or date column is a configuration error.
    Malformed rows raise :class:`ParseError` unless a ``rejects`` list is
    supplied, in which case they are recorded there (with line numbers)
    and skipped.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            return
        known = set(schema.signal_columns) | {
            schema.attribute_column,
            schema.traffic_column,
            schema.date_column,
        }
        unknown = [name for name in header if name not in known]
        if unknown:
            raise SchemaError(f"unknown column(s) {unknown} in {path.name}")
        if len(set(header)) != len(header):
            raise SchemaError(f"duplicate columns in {path.name}")
        index = {name: i for i, name in enumerate(header)}
        missing = [c for c in (*schema.signal_columns, schema.attribute_column) if c not in index]
        if missing:
            raise SchemaError(f"missing column(s) {missing} in {path.name}")
        has_traffic = schema.traffic_column in index
        if not has_traffic and traffic is None:
            raise ConfigError(
                f"{path.name} has no {schema.traffic_column!r} column and no per-file "
                "traffic source was given"
            )
        has_date = schema.date_column in index
        if not has_date and date is None:
            raise ConfigError(
                f"{path.name} has no {schema.date_column!r} column and no per-file "
                "date was given"
            )
        signal_idx = [index[c] for c in schema.signal_columns]
        attr_idx = index[schema.attribute_column]
        width = len(header)
        for line, row in enumerate(reader, start=2):
            try:
                if len(row) != width:
                    raise ParseError(
                        f"line {line}: expected {width} cells, got {len(row)}", line=line
                    )
                signals = Engagement(
                    **{
                        name: _parse_bit(row[i], name, line)
                        for name, i in zip(SIGNAL_FIELDS, signal_idx)
                    }
                )
                attr_cell = row[attr_idx]
                group = schema.group_of.get(attr_cell)
                if group is None:
                    raise ParseError(
                        f"line {line}, column {schema.attribute_column!r}: "
                        f"unmapped attribute value {attr_cell!r}",
                        line=line,
                    )
                if has_traffic:
                    cell = row[index[schema.traffic_column]]
                    try:
                        source = TrafficSource(cell)
                    except ValueError:
                        raise ParseError(
                            f"line {line}, column {schema.traffic_column!r}: "
                            f"expected 'default' or 'random', got {cell!r}",
                            line=line,
                        ) from None
                else:
                    source = traffic
                if has_date:
                    cell = row[index[schema.date_column]]
                    try:
                        row_date = dt.date.fromisoformat(cell)
                    except ValueError:
                        raise ParseError(
                            f"line {line}, column {schema.date_column!r}: "
                            f"expected an ISO date, got {cell!r}",
                            line=line,
                        ) from None
                else:
                    row_date = date
            except ParseError as exc:
                if rejects is None:
                    raise
                rejects.append(RejectedRow(line=line, reason=str(exc)))
                continue
            yield TrafficRecord(
                source=source,
                label=signals.label(),
                group=group,
                signals=signals,
                date=row_date,
            )


def write_logs(
    path: str | Path,
    records: Iterable[TrafficRecord],
    schema: DatasetSchema = DEFAULT_SCHEMA,
) -> int:
    """Write records as a CSV log in the given schema; returns the row count.

    Records without raw signals get a single long-view signal when their
    label is positive, so labels survive a round trip.  The date column
    is omitted when the first record carries no date (then all records
    must agree).
    """
    path = Path(path)
    rows = iter(records)
    written = 0
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        first = next(rows, None)
        with_dates = first is not None and first.date is not None
        header = [*schema.signal_columns, schema.attribute_column, schema.traffic_column]
        if with_dates:
            header.append(schema.date_column)
        writer.writerow(header)

        def emit(record: TrafficRecord) -> None:
            nonlocal written
            signals = record.signals or Engagement(long_view=bool(record.label))
            if (record.date is not None) != with_dates:
                raise ConfigError("either all records carry dates or none do")
            cells = [str(int(getattr(signals, name))) for name in SIGNAL_FIELDS]
            cells.append(schema.raw_attribute(record.group))
            cells.append(record.source.value)
            if with_dates:
                cells.append(record.date.isoformat())
            writer.writerow(cells)
            written += 1

        if first is not None:
            emit(first)
            for record in rows:
                emit(record)
    return written


def partition_daily(
    records: Iterable[TrafficRecord],
    k: int,
    *,
    random_policy: str = "shared",
) -> dict[dt.date, GroupTally]:
    """Group a stream by calendar day for monitoring.

    Returns one tally per day whose default side holds that day's
    default traffic.  Under the ``shared`` policy (the usual setup, where
    one randomized sample spans the monitoring window) every day gets the
    whole stream's randomized traffic; under ``per-day`` each day must
    contain its own randomized rows.
    """
    if random_policy not in ("shared", "per-day"):
        raise ConfigError(f"random policy must be 'shared' or 'per-day', got {random_policy!r}")
    by_day: dict[dt.date, list[TrafficRecord]] = {}
    shared_random: list[TrafficRecord] = []
    for record in records:
        if record.date is None:
            raise SchemaError("daily partitioning requires every record to carry a date")
        if record.source is TrafficSource.RANDOM and random_policy == "shared":
            shared_random.append(record)
        else:
            by_day.setdefault(record.date, []).append(record)
    if random_policy == "shared":
        shared_tally = tally(shared_random, k)
        out: dict[dt.date, GroupTally] = {}
        for day in sorted(by_day):
            day_tally = tally(by_day[day], k).with_random_side(shared_tally)
            out[day] = day_tally
        return out
    out = {}
    for day in sorted(by_day):
        day_tally = tally(by_day[day], k)
        if day_tally.n_rand == 0:
            raise InsufficientRandomTrafficError(
                f"{day.isoformat()} has no randomized traffic under the per-day policy"
            )
        out[day] = day_tally
    return out
