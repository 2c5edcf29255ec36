"""Point estimators for group-fairness metrics on recommendation logs.

The quantity of interest per group is the ranking-based true positive
rate ``U_g = P(recommended | preferred, group g)``.  It is not directly
measurable because preference labels are missing outside the recommended
subset, but it factors into two measurable rates:

* ``P_g``: share of randomized-traffic rows that are positive and in
  group ``g`` (probes the unconditioned preference distribution), and
* ``Q_g``: the same share among default-traffic rows,

so that ``U_g = Q_g / P_g`` up to one scale factor common to all groups.
Fairness is summarized by the relative utilities ``dU_g = U_g/mean(U) - 1``
and the penalty ``std(U)/mean(U)`` (coefficient of variation), both of
which are invariant under that common rescaling.

The standard deviation uses the population convention (divisor K) by
default; pass ``std_divisor="K-1"`` for the sample convention.  A CV of
1/9 for two groups marks the point where the worse group retains 80% of
the better group's utility.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    ConfigError,
    DegenerateGroupError,
    DegenerateGroupWarning,
    DegenerateUtilitiesError,
    InsufficientDataError,
    MalformedSessionError,
    UnsupportedInputError,
)
from .records import GroupTally, TrafficRecord, TrafficSource

if TYPE_CHECKING:  # pragma: no cover
    from .inference import VariancePropagation

__all__ = [
    "Provenance",
    "UtilityVector",
    "FairnessReport",
    "estimate_pq",
    "estimate_utilities",
    "relative_utilities",
    "reo_penalty",
    "point_report",
    "rsp_metrics",
    "user_side_precision",
    "PENALTY_ERRATUM_NOTE",
]

# The divisor-K convention makes the two-group pair (0.5, 1.0) score exactly
# 1/3.  A sometimes-quoted 2/3 for that same pair matches neither the
# divisor-K nor the divisor-(K-1) convention (the latter gives ~0.4714) and
# is treated as an erratum; reports carry this note so downstream readers
# can reconcile the figures.
PENALTY_ERRATUM_NOTE = (
    "penalty convention: population std (divisor K); utilities (0.5, 1.0) give "
    "1/3, and a sometimes-quoted 2/3 for that pair matches no std/mean "
    "convention and is treated as an erratum"
)


def divisor_count(k: int, std_divisor: str) -> int:
    """Resolve the std convention flag to a numeric divisor."""
    if std_divisor == "K":
        return k
    if std_divisor == "K-1":
        if k < 2:
            raise ConfigError("the K-1 std convention requires at least two groups")
        return k - 1
    raise ConfigError(f"std divisor must be 'K' or 'K-1', got {std_divisor!r}")


class Provenance(Enum):
    ESTIMATED = "estimated"
    GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class UtilityVector:
    """Per-group utilities, known up to a common positive scale."""

    values: tuple[float, ...]
    provenance: Provenance = Provenance.ESTIMATED

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ConfigError("utility vector must have at least one group")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ConfigError("utilities must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def _utility_array(utilities: "UtilityVector | Sequence[float] | np.ndarray") -> np.ndarray:
    if isinstance(utilities, UtilityVector):
        return utilities.as_array()
    arr = np.asarray(utilities, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError("utilities must form a non-empty 1-d vector")
    return arr


@dataclass(frozen=True)
class FairnessReport:
    """Point estimates, and optionally uncertainty, for one traffic snapshot.

    ``delta_u`` sums to zero by construction; ``delta_reo`` is the
    coefficient of variation of the utilities and is non-negative.  The
    standard-error and interval fields are ``None`` for point-only
    reports, and the penalty interval alone may be ``None`` when the
    point estimate sits on the zero boundary where its variance formula
    is undefined (see ``notes``).
    """

    k: int
    utilities: tuple[float, ...]
    delta_u: tuple[float, ...]
    delta_reo: float
    n_rec: int
    n_rand: int
    method: str = "point"
    metric: str = "reo"
    std_divisor: str = "K"
    confidence: float | None = None
    se_delta_u: tuple[float, ...] | None = None
    ci_delta_u: tuple[tuple[float, float], ...] | None = None
    se_delta_reo: float | None = None
    ci_delta_reo: tuple[float, float] | None = None
    propagation: "VariancePropagation | None" = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.utilities) != self.k or len(self.delta_u) != self.k:
            raise ConfigError("metric vectors must have length k")
        if abs(sum(self.delta_u)) > 1e-12 * self.k:
            raise ConfigError("relative utilities must sum to zero")
        if not self.delta_reo >= 0:
            raise ConfigError("the fairness penalty must be non-negative")
        # Percentile-style intervals (BCa) may legitimately sit asymmetric
        # around the point estimate, so bracketing is only enforced for
        # symmetric constructions.
        if self.method in ("delta", "bootstrap"):
            if self.ci_delta_reo is not None:
                low, high = self.ci_delta_reo
                if not low <= self.delta_reo <= high:
                    raise ConfigError("penalty interval must bracket the estimate")
            if self.ci_delta_u is not None:
                for value, (low, high) in zip(self.delta_u, self.ci_delta_u):
                    if not low <= value <= high:
                        raise ConfigError("relative-utility intervals must bracket the estimates")


def estimate_pq(tally: GroupTally) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the per-group positive rates ``(P, Q)`` from a tally.

    Both are plain sample means, hence unbiased for the underlying rates.
    A zero ``P`` entry is legal here but leaves the corresponding group
    utility undefined downstream; it triggers a
    :class:`DegenerateGroupWarning` so the condition is visible before
    utilities are requested.
    """
    if tally.n_rand <= 0:
        raise InsufficientDataError("randomized traffic is empty; rates are undefined")
    if tally.n_rec <= 0:
        raise InsufficientDataError("default traffic is empty; rates are undefined")
    p_hat = np.asarray(tally.pos_rand, dtype=np.float64) / tally.n_rand
    q_hat = np.asarray(tally.pos_rec, dtype=np.float64) / tally.n_rec
    zero = np.flatnonzero(p_hat == 0.0)
    if zero.size:
        warnings.warn(
            DegenerateGroupWarning(
                f"group {int(zero[0]) + 1} has no randomized-traffic positives; "
                "its utility is undefined"
            ),
            stacklevel=2,
        )
    return p_hat, q_hat


def estimate_utilities(p_hat: np.ndarray, q_hat: np.ndarray) -> UtilityVector:
    """Form group utilities ``Q/P``, equal to the true utilities up to scale."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    q_hat = np.asarray(q_hat, dtype=np.float64)
    if p_hat.shape != q_hat.shape:
        raise ConfigError("P and Q estimates must have matching length")
    zero = np.flatnonzero(p_hat <= 0.0)
    if zero.size:
        g = int(zero[0]) + 1
        raise DegenerateGroupError(
            f"group {g} has zero randomized-traffic positive rate; its utility is "
            "undefined (collect more randomized traffic)",
            group=g,
        )
    return UtilityVector(values=tuple(float(v) for v in q_hat / p_hat))


def relative_utilities(utilities: "UtilityVector | Sequence[float] | np.ndarray") -> np.ndarray:
    """Deviation of each group's utility from the mean, as a fraction of the mean.

    Sums to zero and is invariant under a common positive rescaling of
    the utilities.
    """
    u = _utility_array(utilities)
    mean = u.mean()
    if not mean > 0:
        raise DegenerateUtilitiesError("mean utility is zero; relative utilities are undefined")
    return u / mean - 1.0


def reo_penalty(
    utilities: "UtilityVector | Sequence[float] | np.ndarray",
    std_divisor: str = "K",
) -> float:
    """Coefficient of variation of the group utilities.

    Zero iff all utilities are equal; scale-invariant.  The divisor in
    the standard deviation defaults to the population convention K.
    """
    du = relative_utilities(utilities)
    d = divisor_count(du.size, std_divisor)
    return float(np.sqrt(np.sum(du * du) / d))


def _point_metrics(
    pos_rec: np.ndarray,
    n_rec: int,
    pos_rand: np.ndarray,
    n_rand: int,
    divisor: int,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Counts -> (utilities, relative utilities, penalty); shared fast path."""
    p_hat = np.asarray(pos_rand, dtype=np.float64) / n_rand
    q_hat = np.asarray(pos_rec, dtype=np.float64) / n_rec
    zero = np.flatnonzero(p_hat == 0.0)
    if zero.size:
        g = int(zero[0]) + 1
        raise DegenerateGroupError(
            f"group {g} has zero randomized-traffic positive rate", group=g
        )
    u = q_hat / p_hat
    mean = u.mean()
    if not mean > 0:
        raise DegenerateUtilitiesError("all group utilities are zero")
    du = u / mean - 1.0
    return u, du, float(np.sqrt(np.sum(du * du) / divisor))


def point_report(tally: GroupTally, std_divisor: str = "K") -> FairnessReport:
    """Point estimates only: utilities, relative utilities, and the penalty."""
    if tally.n_rand <= 0 or tally.n_rec <= 0:
        raise InsufficientDataError("both traffic sides must be non-empty")
    divisor = divisor_count(tally.k, std_divisor)
    u, du, penalty = _point_metrics(
        np.asarray(tally.pos_rec), tally.n_rec, np.asarray(tally.pos_rand), tally.n_rand, divisor
    )
    return FairnessReport(
        k=tally.k,
        utilities=tuple(float(v) for v in u),
        delta_u=tuple(float(v) for v in du),
        delta_reo=penalty,
        n_rec=tally.n_rec,
        n_rand=tally.n_rand,
        std_divisor=std_divisor,
    )


def rsp_metrics(tally: GroupTally, std_divisor: str = "K") -> FairnessReport:
    """Statistical-parity variant: exposure rates instead of true positive rates.

    Uses the exposure counters ``shown/total`` (default-traffic rows per
    group over all rows per group), so it needs neither labels nor
    randomized traffic.  The same relative-utility and penalty formulas
    apply to the exposure-rate utilities.
    """
    if tally.shown is None or tally.total is None:
        raise UnsupportedInputError(
            "tally has no exposure counters; exposure-rate metrics are unavailable"
        )
    total = np.asarray(tally.total, dtype=np.float64)
    zero = np.flatnonzero(total == 0.0)
    if zero.size:
        raise InsufficientDataError(f"group {int(zero[0]) + 1} has no rows; exposure rate undefined")
    u = np.asarray(tally.shown, dtype=np.float64) / total
    du = relative_utilities(u)
    divisor = divisor_count(tally.k, std_divisor)
    penalty = float(np.sqrt(np.sum(du * du) / divisor))
    return FairnessReport(
        k=tally.k,
        utilities=tuple(float(v) for v in u),
        delta_u=tuple(float(v) for v in du),
        delta_reo=penalty,
        n_rec=tally.n_rec,
        n_rand=tally.n_rand,
        metric="rsp",
        std_divisor=std_divisor,
    )


def user_side_precision(
    requests: Iterable[Sequence[TrafficRecord]],
    n_show: int,
    k: int,
) -> UtilityVector:
    """Per-group precision at the fixed slate size, from default traffic only.

    Each request must contribute exactly ``n_show`` default-traffic rows;
    the group index is the requesting user's attribute.  Groups that
    appear in no request get utility 0.
    """
    if n_show < 1:
        raise ConfigError(f"slate size must be >= 1, got {n_show}")
    if k < 1:
        raise ConfigError(f"group count must be >= 1, got {k}")
    positives = [0] * k
    totals = [0] * k
    for index, request in enumerate(requests):
        rows = [r for r in request if r.source is TrafficSource.DEFAULT]
        if len(rows) != n_show:
            raise MalformedSessionError(
                f"request {index} has {len(rows)} default-traffic rows, expected {n_show}"
            )
        for record in rows:
            if record.group > k:
                raise ConfigError(f"request {index}: group {record.group} outside 1..{k}")
            totals[record.group - 1] += 1
            if record.label:
                positives[record.group - 1] += 1
    values = tuple(
        (positives[g] / totals[g]) if totals[g] else 0.0 for g in range(k)
    )
    return UtilityVector(values=values)
