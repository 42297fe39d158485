"""Dörfler marking with the minimal greedy set."""
from __future__ import annotations

import math

import numpy as np

from igabem.adaptive.estimators import IndicatorSet
from igabem.errors import DomainError

MarkSet = frozenset[int]


def doerfler_mark(indicators: IndicatorSet, theta: float) -> MarkSet:
    """Shortest prefix of nodes, by decreasing indicator, holding θ of the total.

    Ties are broken by ascending node parameter. A zero total yields the empty set.
    """
    if not 0.0 < theta <= 1.0:
        raise DomainError(f"invalid_theta: θ={theta!r} not in (0, 1]")
    vals = indicators.values
    total = indicators.total
    if total <= 0.0:
        return frozenset()
    if theta == 1.0:
        return frozenset(int(j) for j, v in zip(indicators.nodes, vals) if v > 0.0)

    order = np.lexsort((indicators.params, -vals))
    goal = theta * total
    marked: list[int] = []
    acc: list[float] = []
    for k in order:
        marked.append(int(indicators.nodes[k]))
        acc.append(float(vals[k]))
        if math.fsum(acc) >= goal:
            break
    return frozenset(marked)
