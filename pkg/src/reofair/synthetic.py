"""Synthetic traffic with known ground truth.

A :class:`SimulationConfig` fixes, per group, the joint probability of a
positive-label row in the candidate population (``p``, what randomized
traffic sees) and among recommended rows (``q``, what default traffic
sees), plus how the remaining probability mass is split across groups
for negative-label rows.  Traffic of size ``n`` is then one multinomial
draw per source over the ``2K`` categories, which makes the true group
utilities ``q_g / p_g`` and the true penalty computable in closed form.

The module also provides weighted resampling of default traffic (to
emulate score-boosting strategies; randomized traffic is never
reweighted) and a constructor for pairs of datasets that agree on every
recommended row yet have different fairness, demonstrating that the
metric is unidentifiable without probing unrecommended pairs.
"""

from __future__ import annotations

import datetime as dt
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateGroupError, DegenerateUtilitiesError
from .metrics import Provenance, UtilityVector, _point_metrics, divisor_count, reo_penalty
from .records import (
    Engagement,
    GroupTally,
    RecordArrays,
    TrafficRecord,
    TrafficSource,
)

__all__ = [
    "SimulationConfig",
    "study_setting",
    "sample_counts",
    "sample_tally",
    "sample_records",
    "sample_mixed_records",
    "ground_truth_utilities",
    "ground_truth_penalty",
    "MseRow",
    "MseStudy",
    "mse_study",
    "boosted_sample",
    "boosted_stream",
    "LabeledPopulation",
    "IdentifiabilityPair",
    "identifiability_pair",
    "records_from_arrays",
    "IDENTIFIABILITY_ERRATUM_NOTE",
]

_PROB_TOL = 1e-12

IDENTIFIABILITY_ERRATUM_NOTE = (
    "unfair-completion penalty closed form: alpha*sqrt(K-1)/(1+(1+alpha)*(K-1)) "
    "under the divisor-K convention; a variant carrying an extra factor of K is "
    "inconsistent with std/mean and is treated as an erratum"
)


@dataclass(frozen=True)
class SimulationConfig:
    """Ground-truth proportions and sampling knobs for synthetic traffic.

    ``p[g]`` is the probability that a random candidate pair is positive
    and in group ``g+1``; ``q[g]`` is the same among recommended pairs.
    The complements ``1 - sum(p)`` and ``1 - sum(q)`` are split across
    groups by ``p_split``/``q_split`` (negative-label rows still carry a
    group).  ``p_act`` is the per-request probability of diverting a row
    to the randomized probe when emitting mixed streams.  Boosting
    weights, when present, apply to default traffic only.
    """

    k: int
    p: tuple[float, ...]
    q: tuple[float, ...]
    p_split: tuple[float, ...] | None = None
    q_split: tuple[float, ...] | None = None
    traffic_size: int = 150_000
    replications: int = 50
    seed: int = 0
    boost_weights: Mapping[int, float] | None = None
    p_act: float = 1e-3

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"group count must be >= 1, got {self.k}")
        for name in ("p", "q"):
            vec = tuple(float(v) for v in getattr(self, name))
            if len(vec) != self.k:
                raise ConfigError(f"{name} must have length {self.k}")
            if any(v < 0 for v in vec):
                raise ConfigError(f"{name} entries must be non-negative")
            if sum(vec) > 1.0 + _PROB_TOL:
                raise ConfigError(f"{name} entries sum to more than 1")
            object.__setattr__(self, name, vec)
        for name in ("p_split", "q_split"):
            split = getattr(self, name)
            if split is None:
                split = (0.25, 0.75) if self.k == 2 else tuple([1.0 / self.k] * self.k)
            split = tuple(float(v) for v in split)
            if len(split) != self.k:
                raise ConfigError(f"{name} must have length {self.k}")
            if any(v < 0 for v in split):
                raise ConfigError(f"{name} entries must be non-negative")
            if abs(sum(split) - 1.0) > _PROB_TOL:
                raise ConfigError(f"{name} must sum to 1")
            object.__setattr__(self, name, split)
        if self.traffic_size < 1:
            raise ConfigError("traffic size must be >= 1")
        if self.replications < 1:
            raise ConfigError("replication count must be >= 1")
        if not 0.0 < self.p_act < 1.0:
            raise ConfigError("activation probability must lie in (0, 1)")
        if self.boost_weights is not None:
            weights = {int(g): float(w) for g, w in self.boost_weights.items()}
            if any(w <= 0 for w in weights.values()):
                raise ConfigError("boosting weights must be positive")
            object.__setattr__(self, "boost_weights", weights)

    def probability_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Full length-2K category vectors: positives by group, then negatives by group."""
        p = np.asarray(self.p)
        q = np.asarray(self.q)
        p_full = np.concatenate([p, (1.0 - p.sum()) * np.asarray(self.p_split)])
        q_full = np.concatenate([q, (1.0 - q.sum()) * np.asarray(self.q_split)])
        for name, vec in (("p", p_full), ("q", q_full)):
            if abs(vec.sum() - 1.0) > _PROB_TOL:
                raise ConfigError(f"{name} categories do not sum to 1")
        return p_full, q_full


def study_setting(index: int, **overrides) -> SimulationConfig:
    """The three two-group study settings with shrinking positive shares."""
    settings = {
        1: ((0.01, 0.05), (0.1, 0.25)),
        2: ((0.001, 0.005), (0.01, 0.025)),
        3: ((0.0001, 0.0005), (0.001, 0.0025)),
    }
    if index not in settings:
        raise ConfigError(f"study setting must be 1, 2 or 3, got {index}")
    p, q = settings[index]
    return SimulationConfig(k=2, p=p, q=q, **overrides)


def ground_truth_utilities(config: SimulationConfig) -> UtilityVector:
    """True group utilities ``q_g / p_g`` implied by the configured proportions."""
    if any(v <= 0 for v in config.p):
        raise ConfigError("ground-truth utilities require every p entry to be positive")
    return UtilityVector(
        values=tuple(qg / pg for qg, pg in zip(config.q, config.p)),
        provenance=Provenance.GROUND_TRUTH,
    )


def ground_truth_penalty(config: SimulationConfig, std_divisor: str = "K") -> float:
    return reo_penalty(ground_truth_utilities(config), std_divisor)


def _rng_for(config: SimulationConfig, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(config.seed)


def sample_tally(
    config: SimulationConfig,
    n_rec: int,
    n_rand: int,
    rng: np.random.Generator | None = None,
) -> GroupTally:
    """Draw one multinomial per traffic source and return the tally."""
    if n_rec < 1 or n_rand < 1:
        raise ConfigError("traffic sizes must be >= 1")
    rng = _rng_for(config, rng)
    p_full, q_full = config.probability_vectors()
    rand_counts = rng.multinomial(n_rand, p_full)
    rec_counts = rng.multinomial(n_rec, q_full)
    k = config.k
    return GroupTally(
        k=k,
        n_rand=n_rand,
        n_rec=n_rec,
        pos_rand=tuple(int(c) for c in rand_counts[:k]),
        pos_rec=tuple(int(c) for c in rec_counts[:k]),
        shown=tuple(int(rec_counts[g] + rec_counts[k + g]) for g in range(k)),
        total=tuple(
            int(rec_counts[g] + rec_counts[k + g] + rand_counts[g] + rand_counts[k + g])
            for g in range(k)
        ),
    )


def sample_counts(
    config: SimulationConfig,
    n: int,
    rng: np.random.Generator | None = None,
) -> GroupTally:
    """Equal-size draw for both sources; the common study setup."""
    return sample_tally(config, n_rec=n, n_rand=n, rng=rng)


def _draw_rows(
    rng: np.random.Generator, n: int, category_probs: np.ndarray, k: int
) -> RecordArrays:
    counts = rng.multinomial(n, category_probs)
    categories = np.repeat(np.arange(2 * k), counts)
    return RecordArrays(y=categories < k, s=(categories % k) + 1)


def sample_records(
    config: SimulationConfig,
    n_rec: int,
    n_rand: int,
    rng: np.random.Generator | None = None,
) -> tuple[RecordArrays, RecordArrays]:
    """Row-level draw: (default rows, randomized rows) as columnar arrays.

    Either side may be 0 when only one source is needed.
    """
    if n_rec < 0 or n_rand < 0:
        raise ConfigError("traffic sizes must be >= 0")
    rng = _rng_for(config, rng)
    p_full, q_full = config.probability_vectors()
    default = _draw_rows(rng, n_rec, q_full, config.k)
    randomized = _draw_rows(rng, n_rand, p_full, config.k)
    return default, randomized


def sample_mixed_records(
    config: SimulationConfig,
    n: int,
    rng: np.random.Generator | None = None,
) -> tuple[RecordArrays, RecordArrays]:
    """Emulate per-request probe activation over ``n`` incoming rows.

    Each row is diverted to the randomized probe with probability
    ``p_act`` (and then drawn from the population distribution); the rest
    are served by the default strategy (recommended-row distribution).
    Returns (default rows, randomized rows).
    """
    if n < 1:
        raise ConfigError("traffic size must be >= 1")
    rng = _rng_for(config, rng)
    n_rand = int(rng.binomial(n, config.p_act))
    return sample_records(config, n - n_rand, n_rand, rng)


def records_from_arrays(
    arrays: RecordArrays,
    source: TrafficSource,
    date: dt.date | None = None,
) -> list[TrafficRecord]:
    """Materialize columnar rows as records (labels become a single long-view signal)."""
    return [
        TrafficRecord(
            source=source,
            label=bool(y),
            group=int(s),
            signals=Engagement(long_view=bool(y)),
            date=date,
        )
        for y, s in zip(arrays.y, arrays.s)
    ]


@dataclass(frozen=True)
class MseRow:
    n: int
    mse: float
    mse_se: float
    failures: float


@dataclass(frozen=True)
class MseStudy:
    """Mean squared error of the penalty estimator across traffic sizes."""

    ground_truth: float
    rows: tuple[MseRow, ...]
    slope: float

    def as_table(self) -> list[dict]:
        return [
            {"n": r.n, "mse": r.mse, "mse_se": r.mse_se, "failures": r.failures}
            for r in self.rows
        ]


def mse_study(
    config: SimulationConfig,
    sizes: Sequence[int],
    reps: int | None = None,
    *,
    std_divisor: str = "K",
) -> MseStudy:
    """Estimate ``MSE(n) = E[(penalty(n) - penalty)^2]`` over seeded replicates.

    Replicates draw from per-index child generators, so the study is
    reproducible and order-independent.  Replicates in which some group
    has no randomized positives cannot be evaluated; they are counted in
    the ``failures`` fraction and excluded from the average.  The slope
    of ``log10(mse)`` against ``log10(n)`` is fitted by least squares;
    sampling error alone decays like ``1/n``.
    """
    if not sizes:
        raise ConfigError("at least one traffic size is required")
    reps = config.replications if reps is None else reps
    if reps < 2:
        raise ConfigError("at least two replicates are required")
    truth = ground_truth_penalty(config, std_divisor)
    divisor = divisor_count(config.k, std_divisor)
    p_full, q_full = config.probability_vectors()
    k = config.k
    children = np.random.SeedSequence(config.seed).spawn(len(sizes) * reps)
    rows: list[MseRow] = []
    for size_index, n in enumerate(sizes):
        if n < 1:
            raise ConfigError("traffic sizes must be >= 1")
        squared_errors: list[float] = []
        failures = 0
        for rep in range(reps):
            rng = np.random.default_rng(children[size_index * reps + rep])
            pos_rand = rng.multinomial(n, p_full)[:k]
            pos_rec = rng.multinomial(n, q_full)[:k]
            try:
                _, _, penalty = _point_metrics(pos_rec, n, pos_rand, n, divisor)
            except (DegenerateGroupError, DegenerateUtilitiesError):
                failures += 1
                continue
            squared_errors.append((penalty - truth) ** 2)
        if squared_errors:
            errs = np.asarray(squared_errors)
            mse = float(errs.mean())
            mse_se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0
        else:
            mse = float("nan")
            mse_se = float("nan")
        rows.append(MseRow(n=int(n), mse=mse, mse_se=mse_se, failures=failures / reps))
    usable = [(r.n, r.mse) for r in rows if r.mse > 0 and math.isfinite(r.mse)]
    if len(usable) >= 2:
        log_n = np.log10([n for n, _ in usable])
        log_mse = np.log10([m for _, m in usable])
        slope = float(np.polyfit(log_n, log_mse, 1)[0])
    else:
        slope = float("nan")
    return MseStudy(ground_truth=truth, rows=tuple(rows), slope=slope)


def _weight_per_row(s: np.ndarray, weights: Mapping[int, float]) -> np.ndarray:
    table = np.zeros(int(s.max()) + 1 if s.size else 1, dtype=np.float64)
    for group, weight in weights.items():
        if weight <= 0:
            raise ConfigError(f"boosting weight for group {group} must be positive")
        if 0 <= group < table.size:
            table[group] = weight
    observed = np.unique(s)
    missing = [int(g) for g in observed if g >= table.size or table[g] == 0.0]
    if missing:
        raise ConfigError(f"no boosting weight defined for group(s) {missing}")
    return table[s]


def _boost_indices(
    s: np.ndarray,
    weights: Mapping[int, float],
    size: int | None,
    replace: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    n = s.size
    if n == 0:
        raise ConfigError("cannot resample an empty collection")
    row_weights = _weight_per_row(s, weights)
    if replace:
        m = n if size is None else int(size)
        if m < 1:
            raise ConfigError("sample size must be >= 1")
        return rng.choice(n, size=m, replace=True, p=row_weights / row_weights.sum())
    m = n // 2 if size is None else int(size)
    if not 1 <= m <= n:
        raise ConfigError(f"sample size must lie in 1..{n} without replacement")
    # Gumbel top-m keys give exact weighted sampling without replacement.
    keys = np.log(row_weights) + rng.gumbel(size=n)
    return np.sort(np.argpartition(-keys, m - 1)[:m])


def boosted_sample(
    arrays: RecordArrays,
    weights: Mapping[int, float],
    *,
    size: int | None = None,
    replace: bool = False,
    rng: np.random.Generator | None = None,
) -> RecordArrays:
    """Weighted resample of default-traffic rows; inclusion odds scale with the weight.

    Without replacement (the default, matching a downsample of a finite
    log) at most the input size can be drawn and ``size`` defaults to
    half of it; with replacement any size can be synthesized and each
    draw lands on group ``g`` with probability proportional to
    ``weights[g]`` times the group's share.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    return arrays.take(_boost_indices(arrays.s, weights, size, replace, rng))


def boosted_stream(
    records: Iterable[TrafficRecord],
    weights: Mapping[int, float],
    *,
    size: int | None = None,
    replace: bool = False,
    rng: np.random.Generator | None = None,
) -> list[TrafficRecord]:
    """Apply :func:`boosted_sample` to the default rows of a mixed stream.

    Randomized-traffic rows pass through unweighted (the probe ignores
    boosting by construction).  Returns the resampled default rows
    followed by the untouched randomized rows.
    """
    rows = list(records)
    default_rows = [r for r in rows if r.source is TrafficSource.DEFAULT]
    random_rows = [r for r in rows if r.source is not TrafficSource.DEFAULT]
    if not default_rows:
        return random_rows
    rng = rng if rng is not None else np.random.default_rng(0)
    s = np.fromiter((r.group for r in default_rows), dtype=np.int64, count=len(default_rows))
    indices = _boost_indices(s, weights, size, replace, rng)
    return [default_rows[i] for i in indices] + random_rows


@dataclass(frozen=True, eq=False)
class LabeledPopulation:
    """A fully enumerated set of user-item pairs with known recommendation bits.

    ``r`` marks recommended pairs, ``y`` preference labels, ``s`` group
    indices.  ``group_tally`` encodes the population for the estimators:
    the whole population stands in for randomized traffic and the
    recommended subset for default traffic.
    """

    r: np.ndarray
    y: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=bool)
        y = np.asarray(self.y, dtype=bool)
        s = np.asarray(self.s, dtype=np.int64)
        if not (r.shape == y.shape == s.shape) or r.ndim != 1:
            raise ConfigError("r, y, s must be 1-d arrays of equal length")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)

    def __len__(self) -> int:
        return int(self.r.size)

    def recommended_rows(self) -> np.ndarray:
        """(y, s) pairs of the recommended subset, in row order."""
        return np.stack([self.y[self.r], self.s[self.r]], axis=1)

    def group_tally(self, k: int) -> GroupTally:
        rec = RecordArrays(self.y[self.r], self.s[self.r])
        everything = RecordArrays(self.y, self.s)
        pos_rec = rec.positive_counts(k)
        pos_rand = everything.positive_counts(k)
        return GroupTally(
            k=k,
            n_rand=len(everything),
            n_rec=len(rec),
            pos_rand=tuple(pos_rand),
            pos_rec=tuple(pos_rec),
            shown=tuple(rec.group_counts(k)),
            total=tuple(everything.group_counts(k)),
        )


@dataclass(frozen=True)
class IdentifiabilityPair:
    """Two populations that agree on every recommended row but differ in fairness."""

    fair: LabeledPopulation
    unfair: LabeledPopulation
    anchor_group: int
    alpha: float
    fair_penalty: float
    unfair_penalty: float
    unfair_utilities: tuple[float, ...]


def identifiability_pair(
    recommended: Sequence[tuple[int, int]],
    m0: int,
    k: int,
) -> IdentifiabilityPair:
    """Construct a perfectly fair and an unfair completion of a recommended subset.

    ``recommended`` lists the recommended rows as ``(label, group)``
    pairs and must be nontrivial: it must contain at least one pair with
    a positive preference label, since otherwise every completion is
    unconditionally fair.  The ``m0`` unrecommended rows are all given to
    the first group with recommended positives (the anchor): with label 0
    every utility is 1 (penalty 0), with label 1 the anchor keeps only
    ``1/(1+alpha)`` of its utility, where ``alpha = m0 / anchor positives``,
    and the penalty under the divisor-K convention is
    ``alpha * sqrt(K-1) / (1 + (1+alpha) * (K-1))``.
    """
    if k < 2:
        raise ConfigError("the construction needs at least two groups")
    if m0 < 1:
        raise ConfigError("m0 must be >= 1; the unrecommended side must be non-empty")
    if not recommended:
        raise DataError(
            "recommended subset is trivial: it must contain at least one pair "
            "with a positive preference label"
        )
    y = np.array([bool(label) for label, _ in recommended], dtype=bool)
    s = np.array([int(group) for _, group in recommended], dtype=np.int64)
    if s.min() < 1 or s.max() > k:
        raise ConfigError(f"group indices must lie in 1..{k}")
    positives = np.bincount(s[y], minlength=k + 1)[1:]
    if positives.sum() == 0:
        raise DataError(
            "recommended subset is trivial: it must contain at least one pair "
            "with a positive preference label"
        )
    anchor = int(np.flatnonzero(positives > 0)[0]) + 1
    alpha = m0 / float(positives[anchor - 1])
    r_full = np.concatenate([np.ones(len(recommended), dtype=bool), np.zeros(m0, dtype=bool)])
    s_full = np.concatenate([s, np.full(m0, anchor, dtype=np.int64)])
    fair = LabeledPopulation(r=r_full, y=np.concatenate([y, np.zeros(m0, dtype=bool)]), s=s_full)
    unfair = LabeledPopulation(r=r_full, y=np.concatenate([y, np.ones(m0, dtype=bool)]), s=s_full)
    denominator = 1.0 + (1.0 + alpha) * (k - 1)
    unfair_penalty = alpha * math.sqrt(k - 1) / denominator
    unfair_utilities = tuple(
        1.0 / (1.0 + alpha) if g == anchor else 1.0 for g in range(1, k + 1)
    )
    return IdentifiabilityPair(
        fair=fair,
        unfair=unfair,
        anchor_group=anchor,
        alpha=alpha,
        fair_penalty=0.0,
        unfair_penalty=unfair_penalty,
        unfair_utilities=unfair_utilities,
    )
