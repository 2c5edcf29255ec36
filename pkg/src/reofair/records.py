"""Row-level domain model and per-group traffic tallies.

A row is one logged user-item interaction: which traffic produced it
(default recommendations or the randomized probe), whether the user
engaged with the item (the positive-preference label), and the row's
sensitive-group index.  A :class:`GroupTally` holds the sufficient
statistics for every estimator in this package: per-group positive
counts and row totals, kept separately for the two traffic sources.
"""

from __future__ import annotations

import datetime as dt
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, SchemaError

__all__ = [
    "SIGNAL_FIELDS",
    "TrafficSource",
    "Engagement",
    "TrafficRecord",
    "RecordArrays",
    "GroupTally",
    "tally",
    "tally_from_arrays",
    "split_arrays",
]

SIGNAL_FIELDS = ("like_video", "share", "follow", "finish", "download", "long_view")


class TrafficSource(Enum):
    """Which serving path produced a logged row."""

    DEFAULT = "default"
    RANDOM = "random"


@dataclass(frozen=True)
class Engagement:
    """Raw engagement signals for one row; the preference label is their OR."""

    like_video: bool = False
    share: bool = False
    follow: bool = False
    finish: bool = False
    download: bool = False
    long_view: bool = False

    def label(self) -> bool:
        return any(getattr(self, name) for name in SIGNAL_FIELDS)


@dataclass(frozen=True)
class TrafficRecord:
    """One user-item interaction row.

    ``group`` is a 1-based sensitive-group index; the group count K is
    declared where rows are aggregated, not on the row itself, so that
    empty groups stay detectable.  When raw ``signals`` are attached the
    label must equal their logical OR.
    """

    source: TrafficSource
    label: bool
    group: int
    signals: Engagement | None = None
    date: dt.date | None = None

    def __post_init__(self) -> None:
        if self.group < 1:
            raise SchemaError(f"group index must be >= 1, got {self.group}")
        if self.signals is not None and self.signals.label() != bool(self.label):
            raise SchemaError("label must equal the OR of the engagement signals")


@dataclass(frozen=True, eq=False)
class RecordArrays:
    """Columnar view of a single-source record collection.

    Bulk operations (partition tests, bootstrap, boosted resampling) work
    on these arrays instead of per-row objects.  ``y`` holds labels,
    ``s`` holds 1-based group indices.
    """

    y: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=bool)
        s = np.asarray(self.s, dtype=np.int64)
        if y.shape != s.shape or y.ndim != 1:
            raise ConfigError("y and s must be 1-d arrays of equal length")
        if s.size and s.min() < 1:
            raise SchemaError("group indices must be >= 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_records(cls, records: Iterable[TrafficRecord]) -> "RecordArrays":
        rows = list(records)
        return cls(
            y=np.fromiter((r.label for r in rows), dtype=bool, count=len(rows)),
            s=np.fromiter((r.group for r in rows), dtype=np.int64, count=len(rows)),
        )

    def __len__(self) -> int:
        return int(self.y.size)

    def take(self, indices: np.ndarray) -> "RecordArrays":
        return RecordArrays(self.y[indices], self.s[indices])

    def positive_counts(self, k: int) -> np.ndarray:
        """Count positive-label rows per group, as a length-``k`` int array."""
        if self.s.size and self.s.max() > k:
            bad = int(np.flatnonzero(self.s > k)[0])
            raise SchemaError(
                f"row {bad}: group {int(self.s[bad])} outside 1..{k}", line=bad
            )
        return np.bincount(self.s[self.y], minlength=k + 1)[1:].astype(np.int64)

    def group_counts(self, k: int) -> np.ndarray:
        """Count all rows per group, as a length-``k`` int array."""
        if self.s.size and self.s.max() > k:
            bad = int(np.flatnonzero(self.s > k)[0])
            raise SchemaError(
                f"row {bad}: group {int(self.s[bad])} outside 1..{k}", line=bad
            )
        return np.bincount(self.s, minlength=k + 1)[1:].astype(np.int64)


def _as_int_tuple(values: Sequence[int], k: int, name: str) -> tuple[int, ...]:
    out = tuple(int(v) for v in values)
    if len(out) != k:
        raise ConfigError(f"{name} must have length {k}, got {len(out)}")
    if any(v < 0 for v in out):
        raise ConfigError(f"{name} entries must be non-negative")
    return out


@dataclass(frozen=True)
class GroupTally:
    """Per-group counts over default and randomized traffic.

    ``pos_rand[g]``/``pos_rec[g]`` count positive-label rows from group
    ``g+1`` in randomized and default traffic; ``n_rand``/``n_rec`` are
    the total row counts.  ``shown``/``total`` are optional exposure
    counters (default-traffic rows per group / all rows per group) used
    by the label-free statistical-parity metric.

    Merging is a field-wise sum, so tallies from disjoint partitions of
    a stream can be aggregated in any order.
    """

    k: int
    n_rand: int
    n_rec: int
    pos_rand: tuple[int, ...]
    pos_rec: tuple[int, ...]
    shown: tuple[int, ...] | None = None
    total: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"group count must be >= 1, got {self.k}")
        if self.n_rand < 0 or self.n_rec < 0:
            raise ConfigError("traffic sizes must be non-negative")
        object.__setattr__(self, "pos_rand", _as_int_tuple(self.pos_rand, self.k, "pos_rand"))
        object.__setattr__(self, "pos_rec", _as_int_tuple(self.pos_rec, self.k, "pos_rec"))
        if sum(self.pos_rand) > self.n_rand or max(self.pos_rand, default=0) > self.n_rand:
            raise ConfigError("pos_rand counts exceed n_rand")
        if sum(self.pos_rec) > self.n_rec or max(self.pos_rec, default=0) > self.n_rec:
            raise ConfigError("pos_rec counts exceed n_rec")
        for name in ("shown", "total"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _as_int_tuple(value, self.k, name))

    @classmethod
    def zeros(cls, k: int) -> "GroupTally":
        zero = (0,) * k
        return cls(k=k, n_rand=0, n_rec=0, pos_rand=zero, pos_rec=zero, shown=zero, total=zero)

    def merge(self, other: "GroupTally") -> "GroupTally":
        if self.k != other.k:
            raise ConfigError(f"cannot merge tallies with K={self.k} and K={other.k}")

        def _sum(a: tuple[int, ...] | None, b: tuple[int, ...] | None):
            if a is None and b is None:
                return None
            if a is None or b is None:
                raise ConfigError("cannot merge an exposure-tracking tally with a non-tracking one")
            return tuple(x + y for x, y in zip(a, b))

        return GroupTally(
            k=self.k,
            n_rand=self.n_rand + other.n_rand,
            n_rec=self.n_rec + other.n_rec,
            pos_rand=_sum(self.pos_rand, other.pos_rand),
            pos_rec=_sum(self.pos_rec, other.pos_rec),
            shown=_sum(self.shown, other.shown),
            total=_sum(self.total, other.total),
        )

    def __add__(self, other: "GroupTally") -> "GroupTally":
        return self.merge(other)

    def with_random_side(self, random_tally: "GroupTally") -> "GroupTally":
        """Return this tally's default side combined with another tally's randomized side."""
        if self.k != random_tally.k:
            raise ConfigError("group counts differ between tallies")
        return GroupTally(
            k=self.k,
            n_rand=random_tally.n_rand,
            n_rec=self.n_rec,
            pos_rand=random_tally.pos_rand,
            pos_rec=self.pos_rec,
        )


def tally(records: Iterable[TrafficRecord], k: int) -> GroupTally:
    """Aggregate a record stream into a :class:`GroupTally` in one pass.

    Counts are accumulated row by row, so arbitrarily large streams can
    be tallied without buffering.  Every row's group index must fall in
    ``1..k``; offenders are reported with their 0-based position in the
    stream.
    """
    if k < 1:
        raise ConfigError(f"group count must be >= 1, got {k}")
    pos_rand = [0] * k
    pos_rec = [0] * k
    shown = [0] * k
    total = [0] * k
    n_rand = 0
    n_rec = 0
    for index, record in enumerate(records):
        g = record.group
        if g > k:
            raise SchemaError(f"row {index}: group {g} outside 1..{k}", line=index)
        total[g - 1] += 1
        if record.source is TrafficSource.DEFAULT:
            n_rec += 1
            shown[g - 1] += 1
            if record.label:
                pos_rec[g - 1] += 1
        else:
            n_rand += 1
            if record.label:
                pos_rand[g - 1] += 1
    return GroupTally(
        k=k,
        n_rand=n_rand,
        n_rec=n_rec,
        pos_rand=tuple(pos_rand),
        pos_rec=tuple(pos_rec),
        shown=tuple(shown),
        total=tuple(total),
    )


def tally_from_arrays(
    k: int,
    default: RecordArrays | None = None,
    random: RecordArrays | None = None,
) -> GroupTally:
    """Build a :class:`GroupTally` from columnar single-source collections."""
    if k < 1:
        raise ConfigError(f"group count must be >= 1, got {k}")
    zero = np.zeros(k, dtype=np.int64)
    pos_rec = default.positive_counts(k) if default is not None else zero
    pos_rand = random.positive_counts(k) if random is not None else zero
    shown = default.group_counts(k) if default is not None else zero
    total = shown + (random.group_counts(k) if random is not None else zero)
    return GroupTally(
        k=k,
        n_rand=len(random) if random is not None else 0,
        n_rec=len(default) if default is not None else 0,
        pos_rand=tuple(pos_rand),
        pos_rec=tuple(pos_rec),
        shown=tuple(shown),
        total=tuple(total),
    )


def split_arrays(records: Iterable[TrafficRecord]) -> tuple[RecordArrays, RecordArrays]:
    """Split a mixed record stream into (default, randomized) columnar collections."""
    y_rec: list[bool] = []
    s_rec: list[int] = []
    y_rand: list[bool] = []
    s_rand: list[int] = []
    for record in records:
        if record.source is TrafficSource.DEFAULT:
            y_rec.append(record.label)
            s_rec.append(record.group)
        else:
            y_rand.append(record.label)
            s_rand.append(record.group)
    return (
        RecordArrays(np.array(y_rec, dtype=bool), np.array(s_rec, dtype=np.int64)),
        RecordArrays(np.array(y_rand, dtype=bool), np.array(s_rand, dtype=np.int64)),
    )
