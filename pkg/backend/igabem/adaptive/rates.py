"""Empirical convergence rates of a run."""
from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from igabem.errors import DomainError
from igabem.runtime.protocol import RateFit, RunReport

MIN_TAIL = 5


def tail_length(count: int) -> int:
    """Last ⌈L/2⌉ iterations, at least ``MIN_TAIL``."""
    if count < MIN_TAIL:
        raise DomainError(f"insufficient_data: need {MIN_TAIL} iterations, got {count}")
    return max(MIN_TAIL, math.ceil(count / 2))


def fit_slope(values: Sequence[float], knots: Sequence[int], k0: int) -> float:
    """s = −slope of log(values) against log(knots − k0 + 1)."""
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise DomainError("nonpositive_values: rates need positive finite values")
    x = np.log(np.asarray(knots, dtype=float) - k0 + 1.0)
    if np.ptp(x) == 0.0:
        return 0.0
    slope = np.polyfit(x, np.log(v), 1)[0]
    return float(-slope)


def contraction(values: Sequence[float]) -> float:
    """Geometric mean of successive ratios."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DomainError("insufficient_data: need two values for a ratio")
    if np.any(v <= 0.0):
        raise DomainError("nonpositive_values: ratios need positive values")
    return float(np.exp(np.mean(np.diff(np.log(v)))))


def fit_sequence(values: Sequence[float], knots: Sequence[int], k0: int | None = None) -> tuple[float, float, int]:
    """(s, q, tail) for a whole sequence; ``k0`` defaults to the first knot count."""
    if len(values) != len(knots):
        raise DomainError("length_mismatch: values and knot counts differ")
    tail = tail_length(len(values))
    base = int(knots[0]) if k0 is None else int(k0)
    v = list(values)[-tail:]
    k = list(knots)[-tail:]
    return fit_slope(v, k, base), contraction(v), tail


def fit_rates(report: RunReport) -> RateFit:
    """Rate s and contraction q of the driving estimator over the tail of the run."""
    est = report.config.estimator
    values = report.estimator_values()
    if any(v is None for v in values):
        raise DomainError(f"missing_values: estimator {est!r} was not recorded on every iteration")
    knots = [r.knots for r in report.records]
    s, q, tail = fit_sequence([float(v) for v in values], knots)  # type: ignore[arg-type]

    s_energy = None
    errors = [r.energy_error for r in report.records[-tail:]]
    if all(e is not None and e > 0.0 for e in errors):
        s_energy = fit_slope([float(e) for e in errors], knots[-tail:], knots[0])  # type: ignore[arg-type]
    return RateFit(s=s, q=q, tail=tail, estimator=est, s_energy=s_energy)
