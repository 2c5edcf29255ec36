"""Command-line interface.

One binary with subcommands for estimation (``estimate``), daily
monitoring (``monitor``), A/B testing (``abtest``), synthetic log
generation (``simulate``), the sampling-error study (``mse-study``),
traffic planning (``plan``), and the unidentifiability demonstration
(``demo-identifiability``).  Reports are emitted as JSON or CSV and are
byte-identical for identical inputs, flags, and seed.

Exit codes: 0 on success, 1 on data errors, 2 on configuration errors.
The ``REOFAIR_THREADS`` environment variable sets the default worker
count for bootstrap replicates (results do not depend on it).
"""

from __future__ import annotations

import datetime as dt
import functools
import os
import sys
from itertools import chain
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConfigError, ReofairError
from .ingest import (
    DEFAULT_SCHEMA,
    DatasetSchema,
    RejectedRow,
    partition_daily,
    read_logs,
    write_logs,
)
from .inference import (
    ab_bootstrap_test,
    ab_delta_test,
    ab_partition_test,
    bootstrap_report,
    delta_method_report,
)
from .metrics import PENALTY_ERRATUM_NOTE, point_report
from .planner import PlanRequest, plan_sizes
from .records import RecordArrays, TrafficSource, tally
from .reporting import (
    ABTEST_FIELDS,
    FAIRNESS_FIELDS,
    abtest_block,
    abtest_rows,
    fairness_block,
    fairness_rows,
    make_envelope,
    render_csv,
    render_json,
)
from .synthetic import (
    IDENTIFIABILITY_ERRATUM_NOTE,
    SimulationConfig,
    boosted_stream,
    identifiability_pair,
    mse_study,
    records_from_arrays,
    sample_records,
    study_setting,
)

EIGHTY_PERCENT_THRESHOLD = 1.0 / 9.0


def _guard(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except ReofairError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _threads() -> int:
    raw = os.environ.get("REOFAIR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"REOFAIR_THREADS must be an integer, got {raw!r}") from None


def _schema_for(k: int) -> DatasetSchema:
    return DEFAULT_SCHEMA if k == 2 else DatasetSchema.grouped(k)


def _iter_role(path, schema, role: TrafficSource, rejects, counters):
    """Stream records of one role from a file; off-role rows are counted and skipped."""
    for record in read_logs(path, schema, traffic=role, rejects=rejects):
        if record.source is not role:
            counters["off_role"] = counters.get("off_role", 0) + 1
            continue
        yield record


def _collect_role(path, schema, role, rejects, counters) -> RecordArrays:
    return RecordArrays.from_records(_iter_role(path, schema, role, rejects, counters))


def _ingest_notes(rejects: list[RejectedRow], counters: dict) -> list[str]:
    notes = []
    if rejects:
        notes.append(f"{len(rejects)} malformed row(s) rejected")
        for reject in rejects:
            click.echo(f"reject: line {reject.line}: {reject.reason}", err=True)
    if counters.get("off_role"):
        notes.append(
            f"{counters['off_role']} row(s) ignored because their traffic column "
            "disagrees with the file's role"
        )
    return notes


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _parse_floats(text: str, name: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"{name} must be a comma-separated list of numbers, got {text!r}")


def _parse_ints(text: str, name: str) -> tuple[int, ...]:
    try:
        return tuple(int(float(part)) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {text!r}")


def _parse_weights(text: str) -> dict[int, float]:
    weights = {}
    try:
        for part in text.split(","):
            group, weight = part.split(":")
            weights[int(group)] = float(weight)
    except ValueError:
        raise ConfigError(f"boost weights must look like '1:1,2:1.25', got {text!r}")
    return weights


def _simulation_config(setting, k, p, q, p_split, q_split, seed) -> SimulationConfig:
    if setting is not None:
        if p is not None or q is not None:
            raise ConfigError("--setting and --p/--q are mutually exclusive")
        return study_setting(setting, seed=seed)
    if p is None or q is None:
        raise ConfigError("either --setting or both --p and --q are required")
    return SimulationConfig(
        k=k,
        p=_parse_floats(p, "--p"),
        q=_parse_floats(q, "--q"),
        p_split=_parse_floats(p_split, "--p-split") if p_split else None,
        q_split=_parse_floats(q_split, "--q-split") if q_split else None,
        seed=seed,
    )


out_option = click.option("--out", type=click.Path(dir_okay=False), help="Write the report here instead of stdout.")
format_option = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
divisor_option = click.option("--std-divisor", type=click.Choice(["K", "K-1"]), default="K", show_default=True)
confidence_option = click.option("--confidence", type=float, default=0.95, show_default=True)
seed_option = click.option("--seed", type=int, default=0, show_default=True)
k_option = click.option("--k", type=int, default=2, show_default=True, help="Declared group count.")


@click.group()
@click.version_option(__version__)
def main():
    """Group-fairness estimation for recommendation logs with randomized-traffic probes."""


@main.command()
@click.option("--default-log", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--random-log", required=True, type=click.Path(exists=True, dir_okay=False))
@k_option
@confidence_option
@click.option("--method", type=click.Choice(["delta", "bootstrap", "bca"]), default="delta", show_default=True)
@click.option("--bootstrap-size", type=int, default=100, show_default=True)
@seed_option
@divisor_option
@click.option("--verbose", is_flag=True, help="Include variance-propagation diagnostics.")
@out_option
@format_option
@_guard
def estimate(default_log, random_log, k, confidence, method, bootstrap_size, seed, std_divisor, verbose, out, fmt):
    """Estimate fairness metrics from one default log and one randomized log."""
    schema = _schema_for(k)
    rejects: list[RejectedRow] = []
    counters: dict[str, int] = {}
    if method == "delta":
        stream = chain(
            _iter_role(default_log, schema, TrafficSource.DEFAULT, rejects, counters),
            _iter_role(random_log, schema, TrafficSource.RANDOM, rejects, counters),
        )
        report = delta_method_report(tally(stream, k), confidence, std_divisor=std_divisor)
    else:
        defaults = _collect_role(default_log, schema, TrafficSource.DEFAULT, rejects, counters)
        randoms = _collect_role(random_log, schema, TrafficSource.RANDOM, rejects, counters)
        report = bootstrap_report(
            defaults,
            randoms,
            k,
            b=bootstrap_size,
            confidence=confidence,
            variant="standard" if method == "bootstrap" else "bca",
            seed=seed,
            std_divisor=std_divisor,
            threads=_threads(),
        )
    notes = [PENALTY_ERRATUM_NOTE] + _ingest_notes(rejects, counters)
    envelope = make_envelope(
        "estimate",
        {
            "default_log": default_log,
            "random_log": random_log,
            "k": k,
            "confidence": confidence,
            "method": method,
            "bootstrap_size": bootstrap_size,
            "std_divisor": std_divisor,
        },
        seed,
        {"report": fairness_block(report, verbose)},
        notes,
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        _emit(render_csv(fairness_rows(report), FAIRNESS_FIELDS), out)


@main.command()
@click.option("--default-log", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--random-log", required=True, type=click.Path(exists=True, dir_okay=False))
@k_option
@confidence_option
@click.option("--threshold", type=float, default=EIGHTY_PERCENT_THRESHOLD, show_default="1/9",
              help="Penalty level flagged in the daily rows (1/9 is the two-group 80% rule).")
@click.option("--random-policy", type=click.Choice(["shared", "per-day"]), default="shared", show_default=True)
@divisor_option
@out_option
@format_option
@_guard
def monitor(default_log, random_log, k, confidence, threshold, random_policy, std_divisor, out, fmt):
    """Daily fairness penalties with confidence intervals and a threshold flag."""
    schema = _schema_for(k)
    rejects: list[RejectedRow] = []
    counters: dict[str, int] = {}
    stream = chain(
        _iter_role(default_log, schema, TrafficSource.DEFAULT, rejects, counters),
        _iter_role(random_log, schema, TrafficSource.RANDOM, rejects, counters),
    )
    days = partition_daily(stream, k, random_policy=random_policy)
    rows = []
    for day, day_tally in days.items():
        report = delta_method_report(day_tally, confidence, std_divisor=std_divisor)
        low, high = report.ci_delta_reo if report.ci_delta_reo else (None, None)
        rows.append(
            {
                "date": day.isoformat(),
                "n_rec": report.n_rec,
                "n_rand": report.n_rand,
                "delta_reo": report.delta_reo,
                "se": report.se_delta_reo,
                "ci_low": low,
                "ci_high": high,
                "threshold": threshold,
                "exceeds_threshold": report.delta_reo > threshold,
            }
        )
    notes = [PENALTY_ERRATUM_NOTE] + _ingest_notes(rejects, counters)
    envelope = make_envelope(
        "monitor",
        {
            "default_log": default_log,
            "random_log": random_log,
            "k": k,
            "confidence": confidence,
            "threshold": threshold,
            "random_policy": random_policy,
            "std_divisor": std_divisor,
        },
        None,
        {"days": rows},
        notes,
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        fieldnames = [
            "date", "n_rec", "n_rand", "delta_reo", "se", "ci_low", "ci_high",
            "threshold", "exceeds_threshold",
        ]
        _emit(render_csv(rows, fieldnames), out)


@main.command()
@click.option("--control-log", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--treatment-log", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--random-log", required=True, type=click.Path(exists=True, dir_okay=False))
@k_option
@confidence_option
@click.option("--method", type=click.Choice(["delta", "partition", "bootstrap", "bca"]), default="delta", show_default=True)
@click.option("--folds", type=int, default=10, show_default=True, help="Folds per arm for the partition method.")
@click.option("--bootstrap-size", type=int, default=100, show_default=True)
@seed_option
@divisor_option
@click.option("--verbose", is_flag=True)
@out_option
@format_option
@_guard
def abtest(control_log, treatment_log, random_log, k, confidence, method, folds, bootstrap_size, seed, std_divisor, verbose, out, fmt):
    """Test treatment-minus-control fairness differences against shared randomized traffic."""
    schema = _schema_for(k)
    rejects: list[RejectedRow] = []
    counters: dict[str, int] = {}
    if method == "delta":
        control = tally(_iter_role(control_log, schema, TrafficSource.DEFAULT, rejects, counters), k)
        treatment = tally(_iter_role(treatment_log, schema, TrafficSource.DEFAULT, rejects, counters), k)
        shared = tally(_iter_role(random_log, schema, TrafficSource.RANDOM, rejects, counters), k)
        report = ab_delta_test(control, treatment, shared, confidence, std_divisor=std_divisor)
    else:
        control = _collect_role(control_log, schema, TrafficSource.DEFAULT, rejects, counters)
        treatment = _collect_role(treatment_log, schema, TrafficSource.DEFAULT, rejects, counters)
        randoms = _collect_role(random_log, schema, TrafficSource.RANDOM, rejects, counters)
        if method == "partition":
            report = ab_partition_test(
                control, treatment, randoms, k,
                m_control=folds, m_treatment=folds,
                confidence=confidence, seed=seed, std_divisor=std_divisor,
            )
        else:
            report = ab_bootstrap_test(
                control, treatment, randoms, k,
                b=bootstrap_size, confidence=confidence,
                variant="standard" if method == "bootstrap" else "bca",
                seed=seed, std_divisor=std_divisor, threads=_threads(),
            )
    notes = _ingest_notes(rejects, counters)
    envelope = make_envelope(
        "abtest",
        {
            "control_log": control_log,
            "treatment_log": treatment_log,
            "random_log": random_log,
            "k": k,
            "confidence": confidence,
            "method": method,
            "folds": folds,
            "bootstrap_size": bootstrap_size,
            "std_divisor": std_divisor,
        },
        seed,
        {"report": abtest_block(report, verbose)},
        notes,
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        _emit(render_csv(abtest_rows(report), ABTEST_FIELDS), out)


@main.command()
@click.option("--setting", type=click.IntRange(1, 3), default=None, help="Built-in two-group study setting.")
@k_option
@click.option("--p", default=None, help="Comma-separated positive shares in the candidate population.")
@click.option("--q", default=None, help="Comma-separated positive shares among recommended rows.")
@click.option("--p-split", default=None, help="Group split of the negative mass in randomized traffic.")
@click.option("--q-split", default=None, help="Group split of the negative mass in default traffic.")
@click.option("--n-default", type=int, default=150_000, show_default=True)
@click.option("--n-random", type=int, default=150_000, show_default=True)
@click.option("--days", type=int, default=1, show_default=True)
@click.option("--start-date", default="2024-01-01", show_default=True)
@click.option("--boost", default=None, help="Weighted resampling of default rows, e.g. '1:1,2:1.25'.")
@click.option("--boost-size", type=int, default=None, help="Rows kept per day when boosting (default: half).")
@click.option("--boost-replace", is_flag=True, help="Boost by sampling with replacement.")
@seed_option
@click.option("--out-default", required=True, type=click.Path(dir_okay=False))
@click.option("--out-random", required=True, type=click.Path(dir_okay=False))
@out_option
@_guard
def simulate(setting, k, p, q, p_split, q_split, n_default, n_random, days, start_date, boost, boost_size, boost_replace, seed, out_default, out_random, out):
    """Generate synthetic logs in the ingest schema, optionally boosted."""
    if days < 1 or n_default < 1 or n_random < 1:
        raise ConfigError("--days, --n-default and --n-random must be >= 1")
    config = _simulation_config(setting, k, p, q, p_split, q_split, seed)
    try:
        first_day = dt.date.fromisoformat(start_date)
    except ValueError:
        raise ConfigError(f"--start-date must be an ISO date, got {start_date!r}")
    weights = _parse_weights(boost) if boost else None
    schema = _schema_for(config.k)
    children = np.random.SeedSequence(seed).spawn(2 * days + 1)
    rand_arrays = sample_records(
        config, 0, n_random, np.random.default_rng(children[0])
    )[1]
    random_records = records_from_arrays(rand_arrays, TrafficSource.RANDOM, first_day)
    default_records = []
    for day in range(days):
        rng = np.random.default_rng(children[1 + 2 * day])
        day_arrays = sample_records(config, n_default, 0, rng)[0]
        day_records = records_from_arrays(
            day_arrays, TrafficSource.DEFAULT, first_day + dt.timedelta(days=day)
        )
        if weights is not None:
            day_records = boosted_stream(
                day_records,
                weights,
                size=boost_size,
                replace=boost_replace,
                rng=np.random.default_rng(children[2 + 2 * day]),
            )
        default_records.extend(day_records)
    n_written_default = write_logs(out_default, default_records, schema)
    n_written_random = write_logs(out_random, random_records, schema)
    envelope = make_envelope(
        "simulate",
        {
            "setting": setting,
            "k": config.k,
            "p": list(config.p),
            "q": list(config.q),
            "p_split": list(config.p_split),
            "q_split": list(config.q_split),
            "n_default": n_default,
            "n_random": n_random,
            "days": days,
            "start_date": start_date,
            "boost": boost,
            "boost_size": boost_size,
            "boost_replace": boost_replace,
        },
        seed,
        {
            "files": [
                {"path": out_default, "rows": n_written_default, "traffic": "default"},
                {"path": out_random, "rows": n_written_random, "traffic": "random"},
            ]
        },
    )
    _emit(render_json(envelope), out)


@main.command(name="mse-study")
@click.option("--setting", type=click.IntRange(1, 3), default=None)
@k_option
@click.option("--p", default=None)
@click.option("--q", default=None)
@click.option("--p-split", default=None)
@click.option("--q-split", default=None)
@click.option("--sizes", default="1000,10000,100000,1000000", show_default=True)
@click.option("--reps", type=int, default=50, show_default=True)
@seed_option
@divisor_option
@out_option
@format_option
@_guard
def mse_study_command(setting, k, p, q, p_split, q_split, sizes, reps, seed, std_divisor, out, fmt):
    """Sampling error of the penalty estimator as a function of traffic size."""
    config = _simulation_config(setting, k, p, q, p_split, q_split, seed)
    size_list = _parse_ints(sizes, "--sizes")
    study = mse_study(config, size_list, reps, std_divisor=std_divisor)
    rows = study.as_table()
    envelope = make_envelope(
        "mse-study",
        {
            "setting": setting,
            "k": config.k,
            "p": list(config.p),
            "q": list(config.q),
            "sizes": list(size_list),
            "reps": reps,
            "std_divisor": std_divisor,
        },
        seed,
        {"ground_truth": study.ground_truth, "slope": study.slope, "rows": rows},
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        _emit(render_csv(rows, ["n", "mse", "mse_se", "failures"]), out)


@main.command()
@click.option("--k", type=int, required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--pilot-p", default=None)
@click.option("--pilot-q", default=None)
@click.option("--pilot-u", default=None)
@click.option("--guarantee", type=click.Choice(["uniform", "penalty-only"]), default="uniform", show_default=True)
@click.option("--per-group", is_flag=True, help="Also report per-group single-rate sizes (needs pilots).")
@out_option
@format_option
@_guard
def plan(k, epsilon, delta, pilot_p, pilot_q, pilot_u, guarantee, per_group, out, fmt):
    """Traffic sizes needed to estimate the metrics within epsilon at confidence 1-delta."""
    request = PlanRequest(
        k=k,
        epsilon=epsilon,
        delta=delta,
        pilot_p=_parse_floats(pilot_p, "--pilot-p") if pilot_p else None,
        pilot_q=_parse_floats(pilot_q, "--pilot-q") if pilot_q else None,
        pilot_u=_parse_floats(pilot_u, "--pilot-u") if pilot_u else None,
    )
    traffic_plan = plan_sizes(request, guarantee=guarantee, per_group=per_group)
    plan_dict = {
        "n": traffic_plan.n,
        "n_rec": traffic_plan.n_rec,
        "n_rand": traffic_plan.n_rand,
        "guarantee": traffic_plan.guarantee,
        "conservative": traffic_plan.conservative,
        "per_group_rec": list(traffic_plan.per_group_rec) if traffic_plan.per_group_rec else None,
        "per_group_rand": list(traffic_plan.per_group_rand) if traffic_plan.per_group_rand else None,
    }
    envelope = make_envelope(
        "plan",
        {
            "k": k,
            "epsilon": epsilon,
            "delta": delta,
            "pilot_p": pilot_p,
            "pilot_q": pilot_q,
            "pilot_u": pilot_u,
            "guarantee": guarantee,
            "per_group": per_group,
        },
        None,
        {"plan": plan_dict},
        ["conservative defaults used (no pilots)"] if traffic_plan.conservative else [],
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        row = {key: plan_dict[key] for key in ("n", "n_rec", "n_rand", "guarantee", "conservative")}
        _emit(render_csv([row], ["n", "n_rec", "n_rand", "guarantee", "conservative"]), out)


@main.command(name="demo-identifiability")
@k_option
@click.option("--m0", type=int, default=100, show_default=True, help="Size of the unrecommended side.")
@click.option("--positives", default="100,100", show_default=True,
              help="Per-group positive-label counts in the recommended subset.")
@click.option("--negatives", default=None, help="Per-group negative-label counts (default: zeros).")
@divisor_option
@out_option
@format_option
@_guard
def demo_identifiability(k, m0, positives, negatives, std_divisor, out, fmt):
    """Two datasets that agree on every recommended row yet disagree on fairness."""
    pos = _parse_ints(positives, "--positives")
    neg = _parse_ints(negatives, "--negatives") if negatives else (0,) * k
    if len(pos) != k or len(neg) != k:
        raise ConfigError(f"--positives/--negatives must list {k} counts")
    recommended = []
    for group in range(1, k + 1):
        recommended.extend([(1, group)] * pos[group - 1])
        recommended.extend([(0, group)] * neg[group - 1])
    pair = identifiability_pair(recommended, m0, k)
    fair_report = point_report(pair.fair.group_tally(k), std_divisor)
    unfair_report = point_report(pair.unfair.group_tally(k), std_divisor)
    payload = {
        "construction": {
            "anchor_group": pair.anchor_group,
            "alpha": pair.alpha,
            "m0": m0,
            "recommended_rows": len(recommended),
        },
        "fair": {
            "penalty_predicted": pair.fair_penalty,
            "penalty_computed": fair_report.delta_reo,
            "delta_u_computed": list(fair_report.delta_u),
        },
        "unfair": {
            "penalty_predicted": pair.unfair_penalty,
            "penalty_computed": unfair_report.delta_reo,
            "utilities_predicted": list(pair.unfair_utilities),
            "delta_u_computed": list(unfair_report.delta_u),
        },
    }
    envelope = make_envelope(
        "demo-identifiability",
        {
            "k": k,
            "m0": m0,
            "positives": list(pos),
            "negatives": list(neg),
            "std_divisor": std_divisor,
        },
        None,
        payload,
        [PENALTY_ERRATUM_NOTE, IDENTIFIABILITY_ERRATUM_NOTE],
    )
    if fmt == "json":
        _emit(render_json(envelope), out)
    else:
        row = {
            "anchor_group": pair.anchor_group,
            "alpha": pair.alpha,
            "fair_penalty": fair_report.delta_reo,
            "unfair_penalty_predicted": pair.unfair_penalty,
            "unfair_penalty_computed": unfair_report.delta_reo,
        }
        _emit(
            render_csv(
                [row],
                [
                    "anchor_group", "alpha", "fair_penalty",
                    "unfair_penalty_predicted", "unfair_penalty_computed",
                ],
            ),
            out,
        )


if __name__ == "__main__":  # pragma: no cover
    main()
