"""Report envelopes and deterministic serialization.

Every command emits an envelope carrying the command name, toolkit
version, seed, an echo of the effective configuration, the metric blocks
and any notes.  Serialization is byte-deterministic for identical
(inputs, flags, seed): keys are sorted, floats use shortest round-trip
repr, and nothing time- or host-dependent is included.  Numeric fields
that are unavailable are null, with the reason in ``notes``.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from . import __version__
from .inference import ABTestReport
from .metrics import FairnessReport

__all__ = [
    "fairness_block",
    "abtest_block",
    "make_envelope",
    "render_json",
    "render_csv",
    "fairness_rows",
    "abtest_rows",
]


def _scalar(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _pair(value: tuple[float, float] | None) -> tuple[float | None, float | None]:
    return (None, None) if value is None else (float(value[0]), float(value[1]))


def fairness_block(report: FairnessReport, verbose: bool = False) -> dict:
    """One snapshot report as a plain dict."""
    delta_u = []
    for g in range(report.k):
        low, high = _pair(report.ci_delta_u[g] if report.ci_delta_u else None)
        delta_u.append(
            {
                "group": g + 1,
                "estimate": report.delta_u[g],
                "se": report.se_delta_u[g] if report.se_delta_u else None,
                "ci_low": low,
                "ci_high": high,
            }
        )
    reo_low, reo_high = _pair(report.ci_delta_reo)
    block = {
        "metric": report.metric,
        "method": report.method,
        "std_divisor": report.std_divisor,
        "confidence": report.confidence,
        "n_rec": report.n_rec,
        "n_rand": report.n_rand,
        "utilities": [{"group": g + 1, "estimate": u} for g, u in enumerate(report.utilities)],
        "delta_u": delta_u,
        "delta_reo": {
            "estimate": report.delta_reo,
            "se": report.se_delta_reo,
            "ci_low": reo_low,
            "ci_high": reo_high,
        },
        "notes": list(report.notes),
    }
    if verbose and report.propagation is not None:
        prop = report.propagation
        block["diagnostics"] = {
            "gamma": prop.gamma.tolist(),
            "jacobian": prop.jacobian.tolist(),
            "gradient": None if prop.gradient is None else prop.gradient.tolist(),
            "sigma": prop.sigma.tolist(),
            "xi": prop.xi,
        }
    return block


def abtest_block(report: ABTestReport, verbose: bool = False) -> dict:
    """One A/B comparison as a plain dict."""
    reo_low, reo_high = _pair(report.ci_d_reo)
    block: dict[str, Any] = {
        "method": report.method.value,
        "std_divisor": report.std_divisor,
        "confidence": report.confidence,
        "shared_n_rand": report.shared_n_rand,
        "d_reo": {
            "estimate": report.d_reo,
            "se": report.se_d_reo,
            "ci_low": reo_low,
            "ci_high": reo_high,
            "significant": report.significant_d_reo,
        },
    }
    if report.d_u is not None:
        d_u = []
        for g in range(report.k):
            low, high = _pair(report.ci_d_u[g] if report.ci_d_u else None)
            d_u.append(
                {
                    "group": g + 1,
                    "estimate": report.d_u[g],
                    "se": report.se_d_u[g] if report.se_d_u else None,
                    "ci_low": low,
                    "ci_high": high,
                    "significant": report.significant_d_u[g]
                    if report.significant_d_u
                    else None,
                }
            )
        block["d_u"] = d_u
    if report.welch_df is not None:
        block["welch_df"] = report.welch_df
    if report.bootstrap_size is not None:
        block["bootstrap_size"] = report.bootstrap_size
        block["bootstrap_discarded"] = report.bootstrap_discarded
    if report.control_report is not None and report.treatment_report is not None:
        block["control"] = fairness_block(report.control_report, verbose)
        block["treatment"] = fairness_block(report.treatment_report, verbose)
    block["notes"] = list(report.notes)
    return block


def make_envelope(
    command: str,
    config: dict,
    seed: int | None,
    payload: dict,
    notes: list[str] | None = None,
) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": {key: _scalar(value) for key, value in config.items()},
        **payload,
        "notes": list(notes or []),
    }


def _finite(value: Any) -> Any:
    """Replace non-finite numbers with null so reports stay valid JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def render_json(envelope: dict) -> str:
    return json.dumps(_finite(envelope), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    return str(value)


def render_csv(rows: list[dict], fieldnames: list[str]) -> str:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_cell(row.get(name)) for name in fieldnames))
    return "\n".join(lines) + "\n"


FAIRNESS_FIELDS = ["metric", "group", "estimate", "se", "ci_low", "ci_high"]
ABTEST_FIELDS = ["metric", "group", "estimate", "se", "ci_low", "ci_high", "significant"]


def fairness_rows(report: FairnessReport) -> list[dict]:
    rows = []
    for g in range(report.k):
        rows.append({"metric": "utility", "group": g + 1, "estimate": report.utilities[g]})
    for g in range(report.k):
        low, high = _pair(report.ci_delta_u[g] if report.ci_delta_u else None)
        rows.append(
            {
                "metric": "delta_u",
                "group": g + 1,
                "estimate": report.delta_u[g],
                "se": report.se_delta_u[g] if report.se_delta_u else None,
                "ci_low": low,
                "ci_high": high,
            }
        )
    low, high = _pair(report.ci_delta_reo)
    rows.append(
        {
            "metric": "delta_reo",
            "estimate": report.delta_reo,
            "se": report.se_delta_reo,
            "ci_low": low,
            "ci_high": high,
        }
    )
    return rows


def abtest_rows(report: ABTestReport) -> list[dict]:
    rows = []
    if report.d_u is not None:
        for g in range(report.k):
            low, high = _pair(report.ci_d_u[g] if report.ci_d_u else None)
            rows.append(
                {
                    "metric": "d_u",
                    "group": g + 1,
                    "estimate": report.d_u[g],
                    "se": report.se_d_u[g] if report.se_d_u else None,
                    "ci_low": low,
                    "ci_high": high,
                    "significant": report.significant_d_u[g]
                    if report.significant_d_u
                    else None,
                }
            )
    low, high = _pair(report.ci_d_reo)
    rows.append(
        {
            "metric": "d_reo",
            "estimate": report.d_reo,
            "se": report.se_d_reo,
            "ci_low": low,
            "ci_high": high,
            "significant": report.significant_d_reo,
        }
    )
    return rows
