"""Standard errors, confidence intervals, and A/B significance tests.

Three interval constructions are offered:

* **Delta method** (one pass): the per-group positive rates are sample
  means, hence asymptotically normal; their variance is propagated
  through the utility ratio, the relative-utility map, and the penalty
  gradient.  The propagation uses a diagonal rate-variance matrix
  ``Gamma``, the Jacobian ``G`` of the relative-utility map, and the
  penalty gradient ``H``, giving ``Sigma = G' Gamma G`` for the relative
  utilities and ``Xi = H' Sigma H`` for the penalty.
* **Partition** (Welch): the datasets are split into disjoint equal-size
  folds, the penalty is computed per fold, and the two arms' fold means
  are compared with Welch's t interval.
* **Bootstrap**: rows are resampled with replacement, independently per
  dataset; the standard variant reads the standard error off the
  replicate spread, while the BCa variant corrects the percentile
  interval for bias and skewness with a jackknife acceleration.

All resampling is seeded and replicate results are combined in replicate
order, so parallel and serial runs produce bit-identical reports.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats as sps

from .errors import (
    BoundaryVarianceError,
    ConfigError,
    DegenerateGroupError,
    DegenerateUtilitiesError,
    FoldDegenerateError,
    InsufficientDataError,
    ReofairError,
    UnstableBootstrapError,
)
from .metrics import FairnessReport, _point_metrics, divisor_count
from .records import GroupTally, RecordArrays, TrafficRecord

__all__ = [
    "TestMethod",
    "VariancePropagation",
    "ABTestReport",
    "BootstrapBias",
    "delta_method_report",
    "ab_delta_test",
    "ab_partition_test",
    "ab_bootstrap_test",
    "bootstrap_report",
    "bootstrap_bias",
    "welch_df",
]

# Fraction of bootstrap replicates that may be discarded as degenerate
# before the whole run is rejected as unstable.
MAX_DISCARD_FRACTION = 0.10


class TestMethod(Enum):
    DELTA = "delta"
    PARTITION = "partition"
    BOOTSTRAP = "bootstrap"
    BCA_BOOTSTRAP = "bca"


@dataclass(frozen=True, eq=False)
class VariancePropagation:
    """Intermediate matrices of the delta-method propagation.

    ``gamma`` is the diagonal covariance of the (scaled) group utilities,
    ``jacobian`` the matrix ``G`` of the relative-utility map (its rows
    sum to zero because the relative utilities sum to a constant),
    ``gradient`` the penalty gradient ``H`` (``None`` at the zero-penalty
    boundary), ``sigma`` the covariance of the relative utilities, and
    ``xi`` the penalty variance.
    """

    gamma: np.ndarray
    jacobian: np.ndarray
    gradient: np.ndarray | None
    sigma: np.ndarray
    xi: float | None


@dataclass(frozen=True)
class ABTestReport:
    """Treatment-minus-control differences with uncertainty.

    ``d_reo`` is the penalty difference.  Per-group difference fields are
    filled by the delta and bootstrap methods; the partition method
    compares fold means of the penalty only.  A quantity is significant
    when its interval excludes zero.
    """

    method: TestMethod
    k: int
    confidence: float
    d_reo: float
    se_d_reo: float | None
    ci_d_reo: tuple[float, float] | None
    significant_d_reo: bool | None
    d_u: tuple[float, ...] | None = None
    se_d_u: tuple[float, ...] | None = None
    ci_d_u: tuple[tuple[float, float], ...] | None = None
    significant_d_u: tuple[bool, ...] | None = None
    std_divisor: str = "K"
    shared_n_rand: int | None = None
    welch_df: int | None = None
    bootstrap_size: int | None = None
    bootstrap_discarded: int | None = None
    control_report: FairnessReport | None = None
    treatment_report: FairnessReport | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.se_d_reo is not None and self.se_d_reo < 0:
            raise ConfigError("standard errors must be non-negative")
        if self.method is not TestMethod.BCA_BOOTSTRAP and self.ci_d_reo is not None:
            low, high = self.ci_d_reo
            if not low <= self.d_reo <= high:
                raise ConfigError("interval must bracket the estimate")


@dataclass(frozen=True)
class BootstrapBias:
    """Relative bias estimates ``(mean of replicates - point) / point``."""

    delta_reo: float
    delta_u: tuple[float, ...]
    b: int
    discarded: int


def _check_confidence(confidence: float) -> float:
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {confidence}")
    return confidence


def _z_quantile(confidence: float) -> float:
    return float(sps.norm.ppf(0.5 + confidence / 2.0))


def _significant(low: float, high: float) -> bool:
    return low > 0.0 or high < 0.0


def _propagate(
    u: np.ndarray,
    du: np.ndarray,
    penalty: float,
    p_hat: np.ndarray,
    q_hat: np.ndarray,
    n_rec: int,
    n_rand: int,
    divisor: int,
) -> VariancePropagation:
    k = u.size
    boundary = np.flatnonzero((q_hat <= 0.0) | (q_hat >= 1.0))
    if boundary.size:
        g = int(boundary[0]) + 1
        raise BoundaryVarianceError(
            f"group {g} default-traffic rate is {q_hat[g - 1]:g}; the variance "
            "formula is undefined on the boundary",
            group=g,
        )
    gamma_diag = u * u * ((1.0 - q_hat) / q_hat / n_rec + (1.0 - p_hat) / p_hat / n_rand)
    total = u.sum()
    jacobian = k * (np.eye(k) * total - np.tile(u, (k, 1))) / (total * total)
    sigma = jacobian.T @ (gamma_diag[:, None] * jacobian)
    if penalty > 0.0:
        gradient = du / (divisor * penalty)
        xi = float(gradient @ sigma @ gradient)
    else:
        gradient = None
        xi = None
    return VariancePropagation(
        gamma=np.diag(gamma_diag),
        jacobian=jacobian,
        gradient=gradient,
        sigma=sigma,
        xi=xi,
    )


def delta_method_report(
    tally: GroupTally,
    confidence: float = 0.95,
    *,
    std_divisor: str = "K",
) -> FairnessReport:
    """One-pass point estimates with delta-method standard errors.

    Requires every group to have randomized-traffic positives and every
    default-traffic rate strictly inside (0, 1).  When the penalty point
    estimate is exactly zero its gradient is undefined, so the report
    carries relative-utility intervals but marks the penalty interval
    unavailable (see ``notes``).
    """
    _check_confidence(confidence)
    if tally.n_rand <= 0 or tally.n_rec <= 0:
        raise InsufficientDataError("both traffic sides must be non-empty")
    divisor = divisor_count(tally.k, std_divisor)
    pos_rec = np.asarray(tally.pos_rec, dtype=np.int64)
    pos_rand = np.asarray(tally.pos_rand, dtype=np.int64)
    u, du, penalty = _point_metrics(pos_rec, tally.n_rec, pos_rand, tally.n_rand, divisor)
    p_hat = pos_rand / float(tally.n_rand)
    q_hat = pos_rec / float(tally.n_rec)
    propagation = _propagate(u, du, penalty, p_hat, q_hat, tally.n_rec, tally.n_rand, divisor)
    z = _z_quantile(confidence)
    se_du = np.sqrt(np.clip(np.diag(propagation.sigma), 0.0, None))
    ci_du = tuple(
        (float(est - z * se), float(est + z * se)) for est, se in zip(du, se_du)
    )
    notes: tuple[str, ...] = ()
    if propagation.xi is None:
        se_reo = None
        ci_reo = None
        notes = ("penalty-interval-unavailable: point estimate at the zero boundary",)
    else:
        se_reo = float(math.sqrt(max(propagation.xi, 0.0)))
        ci_reo = (float(penalty - z * se_reo), float(penalty + z * se_reo))
    return FairnessReport(
        k=tally.k,
        utilities=tuple(float(v) for v in u),
        delta_u=tuple(float(v) for v in du),
        delta_reo=penalty,
        n_rec=tally.n_rec,
        n_rand=tally.n_rand,
        method="delta",
        std_divisor=std_divisor,
        confidence=confidence,
        se_delta_u=tuple(float(v) for v in se_du),
        ci_delta_u=ci_du,
        se_delta_reo=se_reo,
        ci_delta_reo=ci_reo,
        propagation=propagation,
        notes=notes,
    )


@contextmanager
def _arm_scope(arm: str):
    try:
        yield
    except ReofairError as exc:
        exc.args = (f"{arm} arm: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def ab_delta_test(
    control: GroupTally,
    treatment: GroupTally,
    shared_random: GroupTally | None = None,
    confidence: float = 0.95,
    *,
    std_divisor: str = "K",
) -> ABTestReport:
    """Delta-method significance test of treatment-minus-control differences.

    When ``shared_random`` is given, both arms' utilities are computed
    against that common randomized-traffic tally (the production setup)
    and the arms are treated as independent, which is accurate in the
    large-randomized-sample limit; the shared size is reported so callers
    can judge that approximation.  Without it, each arm must carry its
    own randomized counts.
    """
    _check_confidence(confidence)
    if control.k != treatment.k:
        raise ConfigError("arms declare different group counts")
    notes: list[str] = []
    if shared_random is not None:
        control_tally = control.with_random_side(shared_random)
        treatment_tally = treatment.with_random_side(shared_random)
        shared_n = shared_random.n_rand
        notes.append(
            f"arms share randomized traffic (n_rand={shared_n}); "
            "cross-arm correlation is ignored"
        )
    else:
        control_tally, treatment_tally = control, treatment
        shared_n = None
        notes.append("arms use independent randomized traffic")
    with _arm_scope("control"):
        report_c = delta_method_report(control_tally, confidence, std_divisor=std_divisor)
    with _arm_scope("treatment"):
        report_t = delta_method_report(treatment_tally, confidence, std_divisor=std_divisor)
    z = _z_quantile(confidence)
    d_u = tuple(t - c for t, c in zip(report_t.delta_u, report_c.delta_u))
    se_d_u = tuple(
        math.hypot(st, sc) for st, sc in zip(report_t.se_delta_u, report_c.se_delta_u)
    )
    ci_d_u = tuple((d - z * se, d + z * se) for d, se in zip(d_u, se_d_u))
    sig_d_u = tuple(_significant(low, high) for low, high in ci_d_u)
    d_reo = report_t.delta_reo - report_c.delta_reo
    if report_t.se_delta_reo is None or report_c.se_delta_reo is None:
        at_boundary = [
            name
            for name, rep in (("control", report_c), ("treatment", report_t))
            if rep.se_delta_reo is None
        ]
        se_d_reo = None
        ci_d_reo = None
        sig_d_reo = None
        notes.append(
            "penalty-difference interval unavailable: "
            + ", ".join(at_boundary)
            + " arm penalty at the zero boundary"
        )
    else:
        se_d_reo = math.hypot(report_t.se_delta_reo, report_c.se_delta_reo)
        ci_d_reo = (d_reo - z * se_d_reo, d_reo + z * se_d_reo)
        sig_d_reo = _significant(*ci_d_reo)
    return ABTestReport(
        method=TestMethod.DELTA,
        k=control.k,
        confidence=confidence,
        d_reo=float(d_reo),
        se_d_reo=se_d_reo,
        ci_d_reo=ci_d_reo,
        significant_d_reo=sig_d_reo,
        d_u=d_u,
        se_d_u=se_d_u,
        ci_d_u=ci_d_u,
        significant_d_u=sig_d_u,
        std_divisor=std_divisor,
        shared_n_rand=shared_n,
        control_report=report_c,
        treatment_report=report_t,
        notes=tuple(notes),
    )


def _as_arrays(records: "RecordArrays | Iterable[TrafficRecord]", role: str) -> RecordArrays:
    arrays = records if isinstance(records, RecordArrays) else RecordArrays.from_records(records)
    if len(arrays) == 0:
        raise InsufficientDataError(f"{role} collection is empty")
    return arrays


def _fold_counts(
    arrays: RecordArrays, folds: int, k: int, rng: np.random.Generator, role: str
) -> tuple[list[np.ndarray], int]:
    """Assign rows to equal-size folds; the remainder is dropped from the tail."""
    n = len(arrays)
    size = n // folds
    if size < 1:
        raise ConfigError(f"{role}: {n} rows cannot fill {folds} folds")
    kept = size * folds
    perm = rng.permutation(kept)
    y = arrays.y[:kept][perm].reshape(folds, size)
    s = arrays.s[:kept][perm].reshape(folds, size)
    if kept and s.max() > k:
        raise ConfigError(f"{role}: group index exceeds declared K={k}")
    counts = [
        np.bincount(s[j][y[j]], minlength=k + 1)[1:].astype(np.int64) for j in range(folds)
    ]
    return counts, size


def welch_df(var_t: float, m_t: int, var_c: float, m_c: int) -> int:
    """Floor of the Welch-Satterthwaite degrees of freedom for two fold means.

    With equal variances and fold counts this simplifies to ``2(M - 1)``.
    Zero variance on both sides degenerates to the pooled ``M_T + M_C - 2``.
    """
    se2 = var_t / m_t + var_c / m_c
    denom = var_t**2 / (m_t**2 * (m_t - 1)) + var_c**2 / (m_c**2 * (m_c - 1))
    if denom <= 0.0:
        return m_t + m_c - 2
    # The epsilon keeps rounding noise from pushing an exact integer ratio
    # (e.g. equal variances and fold counts) below its floor.
    return int(math.floor(se2 * se2 / denom + 1e-9))


def _fold_penalties(
    rec_counts: list[np.ndarray],
    rec_size: int,
    rand_counts: list[np.ndarray],
    rand_size: int,
    divisor: int,
    arm: str,
) -> np.ndarray:
    values = np.empty(len(rec_counts), dtype=np.float64)
    for j, (pos_rec, pos_rand) in enumerate(zip(rec_counts, rand_counts)):
        try:
            values[j] = _point_metrics(pos_rec, rec_size, pos_rand, rand_size, divisor)[2]
        except (DegenerateGroupError, DegenerateUtilitiesError) as exc:
            raise FoldDegenerateError(
                f"{arm} arm, fold {j}: {exc}", arm=arm, fold=j
            ) from exc
    return values


def ab_partition_test(
    control_records: "RecordArrays | Iterable[TrafficRecord]",
    treatment_records: "RecordArrays | Iterable[TrafficRecord]",
    random_records: "RecordArrays | Iterable[TrafficRecord]",
    k: int,
    m_control: int = 10,
    m_treatment: int = 10,
    confidence: float = 0.95,
    *,
    seed: int = 0,
    std_divisor: str = "K",
) -> ABTestReport:
    """Partition-based Welch test of the penalty difference.

    Each arm's default traffic and the shared randomized traffic are
    split into that arm's number of disjoint equal-size folds (remainder
    rows are dropped from the tail before the seeded shuffle), the
    penalty is computed per paired fold, and the fold means are compared
    with Welch's t interval using the floor of the Welch-Satterthwaite
    degrees of freedom.
    """
    _check_confidence(confidence)
    if m_control < 2 or m_treatment < 2:
        raise ConfigError("both arms need at least two folds")
    divisor = divisor_count(k, std_divisor)
    control = _as_arrays(control_records, "control")
    treatment = _as_arrays(treatment_records, "treatment")
    randomized = _as_arrays(random_records, "randomized")
    seeds = np.random.SeedSequence(seed).spawn(4)
    rng_c, rng_t, rng_rc, rng_rt = (np.random.default_rng(s) for s in seeds)
    rec_c, size_c = _fold_counts(control, m_control, k, rng_c, "control")
    rec_t, size_t = _fold_counts(treatment, m_treatment, k, rng_t, "treatment")
    rand_c, rand_size_c = _fold_counts(randomized, m_control, k, rng_rc, "randomized/control")
    rand_t, rand_size_t = _fold_counts(randomized, m_treatment, k, rng_rt, "randomized/treatment")
    v_c = _fold_penalties(rec_c, size_c, rand_c, rand_size_c, divisor, "control")
    v_t = _fold_penalties(rec_t, size_t, rand_t, rand_size_t, divisor, "treatment")
    mu_c, mu_t = float(v_c.mean()), float(v_t.mean())
    var_c = float(v_c.var(ddof=1))
    var_t = float(v_t.var(ddof=1))
    d_reo = mu_t - mu_c
    se2 = var_t / m_treatment + var_c / m_control
    df = welch_df(var_t, m_treatment, var_c, m_control)
    se = math.sqrt(se2)
    if se > 0.0:
        t_quant = float(sps.t.ppf(0.5 + confidence / 2.0, df))
        ci = (d_reo - t_quant * se, d_reo + t_quant * se)
    else:
        ci = (d_reo, d_reo)
    return ABTestReport(
        method=TestMethod.PARTITION,
        k=k,
        confidence=confidence,
        d_reo=d_reo,
        se_d_reo=se,
        ci_d_reo=ci,
        significant_d_reo=_significant(*ci),
        std_divisor=std_divisor,
        shared_n_rand=len(randomized),
        welch_df=df,
        notes=(
            f"fold penalties: control mean={mu_c!r}, treatment mean={mu_t!r}",
        ),
    )


def _resample_probs(pos: np.ndarray, n: int) -> np.ndarray:
    probs = np.empty(pos.size + 1, dtype=np.float64)
    probs[:-1] = pos / float(n)
    probs[-1] = max(0.0, 1.0 - float(probs[:-1].sum()))
    return probs


def _bootstrap_replicates(
    datasets: list[tuple[np.ndarray, int]],
    stat,
    b: int,
    seed: int,
    threads: int | None,
) -> tuple[np.ndarray, int]:
    """Evaluate ``stat`` on ``b`` seeded resamples; returns (kept values, discards).

    Replicate ``j`` draws from its own child generator, so any execution
    order (serial or pooled) yields the same values; results are combined
    in replicate order.
    """
    if b < 2:
        raise ConfigError(f"bootstrap size must be >= 2, got {b}")
    k = datasets[0][0].size
    probs = [(_resample_probs(pos, n), n) for pos, n in datasets]
    children = np.random.SeedSequence(seed).spawn(b)

    def one(j: int):
        rng = np.random.default_rng(children[j])
        resampled = [
            (rng.multinomial(n, p)[:k].astype(np.int64), n) for p, n in probs
        ]
        try:
            return stat(resampled)
        except (DegenerateGroupError, DegenerateUtilitiesError):
            return None

    workers = threads or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(b)))
    else:
        results = [one(j) for j in range(b)]
    kept = [r for r in results if r is not None]
    discarded = b - len(kept)
    if discarded > MAX_DISCARD_FRACTION * b:
        raise UnstableBootstrapError(
            f"{discarded} of {b} bootstrap replicates were degenerate; "
            "the data are too sparse for resampling",
            discarded=discarded,
            total=b,
        )
    return np.asarray(kept, dtype=np.float64), discarded


def _jackknife_acceleration(
    datasets: list[tuple[np.ndarray, int]], stat, dim: int
) -> np.ndarray:
    """Jackknife acceleration, exact over rows but evaluated per row class.

    Removing any negative row of a dataset changes the counts the same
    way, as does removing any positive row of a given group, so the
    n leave-one-out values collapse onto at most K+1 distinct classes
    per dataset and can be weighted by class size.
    """
    num = np.zeros(dim)
    den = np.zeros(dim)
    for index, (pos, n) in enumerate(datasets):
        classes: list[tuple[np.ndarray, int, int]] = []  # (modified pos, weight, dn)
        for g in range(pos.size):
            if pos[g] > 0:
                reduced = pos.copy()
                reduced[g] -= 1
                classes.append((reduced, int(pos[g]), 1))
        negatives = n - int(pos.sum())
        if negatives > 0:
            classes.append((pos.copy(), negatives, 1))
        values = np.empty((len(classes), dim))
        weights = np.empty(len(classes))
        for row, (reduced, weight, _) in enumerate(classes):
            loo = [
                (reduced, n - 1) if d == index else (other_pos, other_n)
                for d, (other_pos, other_n) in enumerate(datasets)
            ]
            try:
                values[row] = stat(loo)
            except (DegenerateGroupError, DegenerateUtilitiesError) as exc:
                raise UnstableBootstrapError(
                    f"jackknife leave-one-out is degenerate: {exc}"
                ) from exc
            weights[row] = weight
        theta_dot = (weights[:, None] * values).sum(axis=0) / n
        influence = (n - 1) * (theta_dot - values)
        num += (weights[:, None] * influence**3).sum(axis=0) / n**3
        den += (weights[:, None] * influence**2).sum(axis=0) / n**2
    accel = np.zeros(dim)
    nonzero = den > 0
    accel[nonzero] = num[nonzero] / (6.0 * den[nonzero] ** 1.5)
    return accel


def _bca_intervals(
    theta_star: np.ndarray,
    theta_hat: np.ndarray,
    accel: np.ndarray,
    confidence: float,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    b = theta_star.shape[0]
    alpha = 1.0 - confidence
    z_lo = float(sps.norm.ppf(alpha / 2.0))
    z_hi = float(sps.norm.ppf(1.0 - alpha / 2.0))
    lows = np.empty(theta_hat.size)
    highs = np.empty(theta_hat.size)
    notes: list[str] = []
    for i in range(theta_hat.size):
        column = theta_star[:, i]
        if column.max() == column.min():
            lows[i] = highs[i] = column[0]
            continue
        p0 = float((column < theta_hat[i]).sum()) / b
        clipped = min(max(p0, 0.5 / b), 1.0 - 0.5 / b)
        if clipped != p0:
            notes.append(f"bca bias correction clipped for component {i}")
        z0 = float(sps.norm.ppf(clipped))
        a = float(accel[i])
        adjusted = []
        for z in (z_lo, z_hi):
            denom = 1.0 - a * (z0 + z)
            if denom <= 0.0:
                notes.append(f"bca acceleration clamped for component {i}")
                denom = 1.0
            adjusted.append(float(sps.norm.cdf(z0 + (z0 + z) / denom)))
        lows[i] = float(np.quantile(column, adjusted[0]))
        highs[i] = float(np.quantile(column, adjusted[1]))
    return lows, highs, notes


def _ab_stat_factory(divisor: int):
    def stat(counts: list[tuple[np.ndarray, int]]) -> np.ndarray:
        (pos_c, n_c), (pos_t, n_t), (pos_r, n_r) = counts
        _, du_c, pen_c = _point_metrics(pos_c, n_c, pos_r, n_r, divisor)
        _, du_t, pen_t = _point_metrics(pos_t, n_t, pos_r, n_r, divisor)
        return np.concatenate([du_t - du_c, [pen_t - pen_c]])

    return stat


def _arm_stat_factory(divisor: int):
    def stat(counts: list[tuple[np.ndarray, int]]) -> np.ndarray:
        (pos_rec, n_rec), (pos_rand, n_rand) = counts
        _, du, penalty = _point_metrics(pos_rec, n_rec, pos_rand, n_rand, divisor)
        return np.concatenate([du, [penalty]])

    return stat


def ab_bootstrap_test(
    control_records: "RecordArrays | Iterable[TrafficRecord]",
    treatment_records: "RecordArrays | Iterable[TrafficRecord]",
    random_records: "RecordArrays | Iterable[TrafficRecord]",
    k: int,
    b: int = 100,
    confidence: float = 0.95,
    *,
    variant: str = "standard",
    seed: int = 0,
    std_divisor: str = "K",
    threads: int | None = None,
) -> ABTestReport:
    """Bootstrap significance test of treatment-minus-control differences.

    Each replicate resamples the three datasets (control default,
    treatment default, shared randomized) independently with replacement
    at the row level and recomputes the differences.  ``standard`` reads
    the standard error off the replicate spread and centers a normal
    interval on the point estimate; ``bca`` returns the bias-corrected
    accelerated percentile interval.  Degenerate replicates are discarded
    and counted; more than 10% discards aborts the run.
    """
    _check_confidence(confidence)
    if variant not in ("standard", "bca"):
        raise ConfigError(f"bootstrap variant must be 'standard' or 'bca', got {variant!r}")
    divisor = divisor_count(k, std_divisor)
    control = _as_arrays(control_records, "control")
    treatment = _as_arrays(treatment_records, "treatment")
    randomized = _as_arrays(random_records, "randomized")
    datasets = [
        (control.positive_counts(k), len(control)),
        (treatment.positive_counts(k), len(treatment)),
        (randomized.positive_counts(k), len(randomized)),
    ]
    stat = _ab_stat_factory(divisor)
    point = stat(datasets)
    theta_star, discarded = _bootstrap_replicates(datasets, stat, b, seed, threads)
    notes: list[str] = []
    if discarded:
        notes.append(f"{discarded} of {b} bootstrap replicates discarded as degenerate")
    if variant == "standard":
        se = theta_star.std(axis=0, ddof=1)
        z = _z_quantile(confidence)
        lows = point - z * se
        highs = point + z * se
        method = TestMethod.BOOTSTRAP
        se_vec: np.ndarray | None = se
    else:
        accel = _jackknife_acceleration(datasets, stat, point.size)
        lows, highs, bca_notes = _bca_intervals(theta_star, point, accel, confidence)
        notes.extend(bca_notes)
        method = TestMethod.BCA_BOOTSTRAP
        se_vec = theta_star.std(axis=0, ddof=1)
    return ABTestReport(
        method=method,
        k=k,
        confidence=confidence,
        d_reo=float(point[-1]),
        se_d_reo=float(se_vec[-1]),
        ci_d_reo=(float(lows[-1]), float(highs[-1])),
        significant_d_reo=_significant(float(lows[-1]), float(highs[-1])),
        d_u=tuple(float(v) for v in point[:-1]),
        se_d_u=tuple(float(v) for v in se_vec[:-1]),
        ci_d_u=tuple((float(lo), float(hi)) for lo, hi in zip(lows[:-1], highs[:-1])),
        significant_d_u=tuple(
            _significant(float(lo), float(hi)) for lo, hi in zip(lows[:-1], highs[:-1])
        ),
        std_divisor=std_divisor,
        shared_n_rand=len(randomized),
        bootstrap_size=b,
        bootstrap_discarded=discarded,
        notes=tuple(notes),
    )


def bootstrap_report(
    default_records: "RecordArrays | Iterable[TrafficRecord]",
    random_records: "RecordArrays | Iterable[TrafficRecord]",
    k: int,
    b: int = 100,
    confidence: float = 0.95,
    *,
    variant: str = "standard",
    seed: int = 0,
    std_divisor: str = "K",
    threads: int | None = None,
) -> FairnessReport:
    """Single-snapshot fairness report with bootstrap uncertainty."""
    _check_confidence(confidence)
    if variant not in ("standard", "bca"):
        raise ConfigError(f"bootstrap variant must be 'standard' or 'bca', got {variant!r}")
    divisor = divisor_count(k, std_divisor)
    default = _as_arrays(default_records, "default")
    randomized = _as_arrays(random_records, "randomized")
    datasets = [
        (default.positive_counts(k), len(default)),
        (randomized.positive_counts(k), len(randomized)),
    ]
    stat = _arm_stat_factory(divisor)
    u, du, penalty = _point_metrics(
        datasets[0][0], datasets[0][1], datasets[1][0], datasets[1][1], divisor
    )
    point = np.concatenate([du, [penalty]])
    theta_star, discarded = _bootstrap_replicates(datasets, stat, b, seed, threads)
    notes: list[str] = []
    if discarded:
        notes.append(f"{discarded} of {b} bootstrap replicates discarded as degenerate")
    se = theta_star.std(axis=0, ddof=1)
    if variant == "standard":
        z = _z_quantile(confidence)
        lows = point - z * se
        highs = point + z * se
        method = "bootstrap"
    else:
        accel = _jackknife_acceleration(datasets, stat, point.size)
        lows, highs, bca_notes = _bca_intervals(theta_star, point, accel, confidence)
        notes.extend(bca_notes)
        method = "bca"
    return FairnessReport(
        k=k,
        utilities=tuple(float(v) for v in u),
        delta_u=tuple(float(v) for v in du),
        delta_reo=float(penalty),
        n_rec=len(default),
        n_rand=len(randomized),
        method=method,
        std_divisor=std_divisor,
        confidence=confidence,
        se_delta_u=tuple(float(v) for v in se[:-1]),
        ci_delta_u=tuple((float(lo), float(hi)) for lo, hi in zip(lows[:-1], highs[:-1])),
        se_delta_reo=float(se[-1]),
        ci_delta_reo=(float(lows[-1]), float(highs[-1])),
        notes=tuple(notes),
    )


def bootstrap_bias(
    default_records: "RecordArrays | Iterable[TrafficRecord]",
    random_records: "RecordArrays | Iterable[TrafficRecord]",
    k: int,
    b: int = 100,
    *,
    seed: int = 0,
    std_divisor: str = "K",
    threads: int | None = None,
) -> BootstrapBias:
    """Relative bias of the fairness estimators, read off bootstrap replicates.

    For each metric this is ``(mean of replicate values - point) / point``;
    a metric whose point estimate and replicate mean are both exactly zero
    reports zero bias.
    """
    divisor = divisor_count(k, std_divisor)
    default = _as_arrays(default_records, "default")
    randomized = _as_arrays(random_records, "randomized")
    datasets = [
        (default.positive_counts(k), len(default)),
        (randomized.positive_counts(k), len(randomized)),
    ]
    stat = _arm_stat_factory(divisor)
    point = stat(datasets)
    theta_star, discarded = _bootstrap_replicates(datasets, stat, b, seed, threads)
    means = theta_star.mean(axis=0)

    def relative(mean: float, value: float) -> float:
        if value == 0.0:
            return 0.0 if mean == value else math.inf * math.copysign(1.0, mean)
        return (mean - value) / value

    return BootstrapBias(
        delta_reo=relative(float(means[-1]), float(point[-1])),
        delta_u=tuple(relative(float(m), float(v)) for m, v in zip(means[:-1], point[:-1])),
        b=b,
        discarded=discarded,
    )
