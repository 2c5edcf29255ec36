"""Traffic-size planning for a target estimation accuracy.

The estimators concentrate at the usual parametric rate, so the sample
budget for accuracy ``epsilon`` at failure probability ``delta`` is

    n = ceil( 4 K^2 / (|U|_1^2 epsilon^2) * log(K / delta) )

for a uniform guarantee over all relative utilities and the penalty
simultaneously (``log(1/delta)`` suffices for the penalty alone).  The
control parameter ``n`` converts to actual traffic sizes via

    |default|    = n * max_g U_g^2 (1 - q_g) / q_g
    |randomized| = n * max_g U_g^2 (1 - p_g) / p_g

Both traffic sizes are invariant under a common rescaling of the pilot
utilities, so pilots known only up to scale are fine.  Without pilots,
conservative defaults (U_g = 1, p_g = q_g = 0.5) are used and flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidPilotError

__all__ = ["PlanRequest", "TrafficPlan", "sample_size_parameter", "plan_sizes"]


@dataclass(frozen=True)
class PlanRequest:
    """Accuracy target plus optional pilot estimates of the group rates."""

    k: int
    epsilon: float
    delta: float
    pilot_p: tuple[float, ...] | None = None
    pilot_q: tuple[float, ...] | None = None
    pilot_u: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"group count must be >= 1, got {self.k}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("pilot_p", "pilot_q"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = tuple(float(v) for v in vec)
            if len(vec) != self.k:
                raise InvalidPilotError(f"{name} must have length {self.k}")
            if any(not 0.0 < v < 1.0 for v in vec):
                raise InvalidPilotError(f"{name} entries must lie strictly in (0, 1)")
            object.__setattr__(self, name, vec)
        if self.pilot_u is not None:
            vec = tuple(float(v) for v in self.pilot_u)
            if len(vec) != self.k:
                raise InvalidPilotError(f"pilot_u must have length {self.k}")
            if any(not v > 0 for v in vec):
                raise InvalidPilotError("pilot_u entries must be positive")
            object.__setattr__(self, "pilot_u", vec)

    def utilities(self) -> tuple[np.ndarray, bool]:
        """Pilot utilities, derived from rates when not given directly."""
        if self.pilot_u is not None:
            return np.asarray(self.pilot_u), False
        if self.pilot_p is not None and self.pilot_q is not None:
            return np.asarray(self.pilot_q) / np.asarray(self.pilot_p), False
        return np.ones(self.k), True


@dataclass(frozen=True)
class TrafficPlan:
    """Planned sizes: the control parameter ``n`` and the two traffic volumes."""

    n: int
    n_rec: int
    n_rand: int
    guarantee: str
    conservative: bool
    per_group_rec: tuple[int, ...] | None = None
    per_group_rand: tuple[int, ...] | None = None


def sample_size_parameter(request: PlanRequest, guarantee: str = "uniform") -> float:
    """The continuous sample-size control parameter, before rounding."""
    if guarantee == "uniform":
        log_term = math.log(request.k / request.delta)
    elif guarantee == "penalty-only":
        log_term = math.log(1.0 / request.delta)
    else:
        raise ConfigError(f"guarantee must be 'uniform' or 'penalty-only', got {guarantee!r}")
    u, _ = request.utilities()
    norm1 = float(u.sum())
    return 4.0 * request.k**2 / (norm1**2 * request.epsilon**2) * log_term


def plan_sizes(
    request: PlanRequest,
    *,
    guarantee: str = "uniform",
    per_group: bool = False,
) -> TrafficPlan:
    """Plan traffic sizes meeting the accuracy target.

    ``per_group`` additionally reports, per group, the sizes under which
    each rate estimate alone is within relative error ``epsilon`` with
    probability ``1 - delta`` (``ceil(3 / (rate * epsilon^2) * log(2/delta))``);
    it requires pilot rates.
    """
    u, conservative = request.utilities()
    n = math.ceil(sample_size_parameter(request, guarantee))
    q = (
        np.asarray(request.pilot_q)
        if request.pilot_q is not None
        else np.full(request.k, 0.5)
    )
    p = (
        np.asarray(request.pilot_p)
        if request.pilot_p is not None
        else np.full(request.k, 0.5)
    )
    rec_factor = float(np.max(u * u * (1.0 - q) / q))
    rand_factor = float(np.max(u * u * (1.0 - p) / p))
    per_group_rec = per_group_rand = None
    if per_group:
        if request.pilot_p is None or request.pilot_q is None:
            raise InvalidPilotError("per-group sizes require pilot_p and pilot_q")
        log2d = math.log(2.0 / request.delta)
        per_group_rec = tuple(
            math.ceil(3.0 / (qg * request.epsilon**2) * log2d) for qg in request.pilot_q
        )
        per_group_rand = tuple(
            math.ceil(3.0 / (pg * request.epsilon**2) * log2d) for pg in request.pilot_p
        )
    return TrafficPlan(
        n=n,
        n_rec=math.ceil(n * rec_factor),
        n_rand=math.ceil(n * rand_factor),
        guarantee=guarantee,
        conservative=conservative,
        per_group_rec=per_group_rec,
        per_group_rand=per_group_rand,
    )
