"""Quadrature rules on [0,1] and [0,1]² for smooth, log-singular and near-singular integrands."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh_tridiagonal

from igabem.errors import DomainError

FloatArray = NDArray[np.float64]
Separation = Literal["coincident", "adjacent", "far"]


@dataclass(frozen=True, eq=False)
class QuadRule:
    nodes: FloatArray
    weights: FloatArray
    kind: str = "gauss"

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    def integrate(self, values: FloatArray) -> float:
        return float(np.dot(self.weights, values))

    def mapped(self, lo: float, hi: float) -> tuple[FloatArray, FloatArray]:
        """Nodes and weights transplanted to [lo, hi]."""
        return lo + (hi - lo) * self.nodes, (hi - lo) * self.weights


def _frozen(rule: QuadRule) -> QuadRule:
    rule.nodes.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> QuadRule:
    """n-point Gauss–Legendre rule on [0,1]."""
    if n < 1:
        raise DomainError(f"invalid_rule_size: n={n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return _frozen(QuadRule(0.5 * (x + 1.0), 0.5 * w, "gauss"))


def _log_moments(count: int) -> FloatArray:
    """∫₀¹ π_k(t) log(1/t) dt for the monic shifted Legendre polynomials π_k."""
    nu = np.empty(count)
    nu[0] = 1.0
    for k in range(1, count):
        nu[k] = (-1.0) ** k / (k * (k + 1) * comb(2 * k, k))
    return nu


@lru_cache(maxsize=64)
def gauss_log(n: int) -> QuadRule:
    """n-point Gauss rule for ∫₀¹ f(t) log(1/t) dt.

    Recurrence coefficients come from the modified Chebyshev algorithm on the
    shifted-Legendre modified moments; nodes and weights from Golub–Welsch.
    """
    if n < 1:
        raise DomainError(f"invalid_rule_size: n={n}")
    nu = _log_moments(2 * n)
    a_aux = np.full(2 * n, 0.5)
    b_aux = np.array([0.0] + [k * k / (4.0 * (4.0 * k * k - 1.0)) for k in range(1, 2 * n)])

    alpha = np.zeros(n)
    beta = np.zeros(n)
    # sig[k + 1] holds σ_k; sig[0] is the σ_{-1} = 0 row.
    sig = np.zeros((n + 1, 2 * n))
    sig[1] = nu
    alpha[0] = a_aux[0] + nu[1] / nu[0]
    beta[0] = nu[0]
    for k in range(1, n):
        for ll in range(k, 2 * n - k):
            sig[k + 1, ll] = (
                sig[k, ll + 1]
                - (alpha[k - 1] - a_aux[ll]) * sig[k, ll]
                - beta[k - 1] * sig[k - 1, ll]
                + b_aux[ll] * sig[k, ll - 1]
            )
        alpha[k] = a_aux[k] + sig[k + 1, k + 1] / sig[k + 1, k] - sig[k, k] / sig[k, k - 1]
        beta[k] = sig[k + 1, k] / sig[k, k - 1]

    if n == 1:
        return _frozen(QuadRule(np.array([alpha[0]]), np.array([beta[0]]), "log"))
    nodes, vecs = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
    weights = beta[0] * vecs[0, :] ** 2
    return _frozen(QuadRule(nodes, weights, "log"))


@lru_cache(maxsize=64)
def graded_gauss(n: int, levels: int = 8, ratio: float = 0.15) -> QuadRule:
    """Composite n-point Gauss on [0,1] with cells graded geometrically towards 0."""
    if n < 1 or levels < 0 or not 0.0 < ratio < 1.0:
        raise DomainError(f"invalid_graded_rule: n={n} levels={levels} ratio={ratio}")
    edges = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1, dtype=float)])
    base = gauss_legendre(n)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = base.mapped(float(lo), float(hi))
        xs.append(x)
        ws.append(w)
    return _frozen(QuadRule(np.concatenate(xs), np.concatenate(ws), "graded"))


# ---------------------------------------------------------------------------
# Rules on [0,1]²
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairRule:
    """Quadrature on [0,1]² split into a bounded part and a log part.

    Σ w·F(s,t) approximates ∫∫ F for bounded F, and Σ w_log·G(s_log,t_log)
    approximates ∫∫ G(s,t) log r(s,t) for smooth G, where r is the distance
    surrogate of the separation class: |s−t| for coincident elements,
    max(1−s, t) for adjacent ones (shared node at s=1 and t=0), 1 for far
    pairs. ``r`` holds r(s,t) at the bounded-part points.
    """

    separation: str
    s: FloatArray
    t: FloatArray
    w: FloatArray
    r: FloatArray
    s_log: FloatArray
    t_log: FloatArray
    w_log: FloatArray

    @property
    def size(self) -> int:
        return int(self.w.size + self.w_log.size)

    def points(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.s, self.t, self.w)]


def _empty() -> FloatArray:
    return np.zeros(0)


@lru_cache(maxsize=64)
def _pair_rule_cached(n_outer: int, n_inner: int, n_log: int, separation: str) -> PairRule:
    outer = gauss_legendre(n_outer)
    inner = gauss_legendre(n_inner)
    if separation == "far":
        S, T = np.meshgrid(outer.nodes, inner.nodes, indexing="ij")
        W = np.outer(outer.weights, inner.weights)
        e = _empty()
        return PairRule("far", S.ravel(), T.ravel(), W.ravel(), np.ones(S.size), e, e, e)

    lg = gauss_log(n_log)
    U, V = np.meshgrid(outer.nodes, inner.nodes, indexing="ij")
    Wu = np.outer(outer.weights, inner.weights)
    UL, VL = np.meshgrid(lg.nodes, inner.nodes, indexing="ij")
    WL = np.outer(lg.weights, inner.weights)
    U, V, Wu = U.ravel(), V.ravel(), Wu.ravel()
    UL, VL, WL = UL.ravel(), VL.ravel(), WL.ravel()

    if separation == "coincident":
        # u = |s − t|, per triangle t = (1 − u) v, s = t + u (and mirrored).
        t1 = (1.0 - U) * V
        s1 = t1 + U
        tl = (1.0 - UL) * VL
        sl = tl + UL
        w = Wu * (1.0 - U)
        wl = -WL * (1.0 - UL)
        return PairRule(
            "coincident",
            np.concatenate([s1, t1]),
            np.concatenate([t1, s1]),
            np.concatenate([w, w]),
            np.concatenate([U, U]),
            np.concatenate([sl, tl]),
            np.concatenate([tl, sl]),
            np.concatenate([wl, wl]),
        )

    if separation == "adjacent":
        # σ = 1 − s, τ = t; ρ = max(σ, τ) and the smaller one is ρ·v.
        rho, v = U, V
        w = Wu * rho
        rl, vl = UL, VL
        wl = -WL * rl
        s_a, t_a = 1.0 - rho, rho * v
        s_b, t_b = 1.0 - rho * v, rho
        sl_a, tl_a = 1.0 - rl, rl * vl
        sl_b, tl_b = 1.0 - rl * vl, rl
        return PairRule(
            "adjacent",
            np.concatenate([s_a, s_b]),
            np.concatenate([t_a, t_b]),
            np.concatenate([w, w]),
            np.concatenate([rho, rho]),
            np.concatenate([sl_a, sl_b]),
            np.concatenate([tl_a, tl_b]),
            np.concatenate([wl, wl]),
        )

    raise DomainError(f"unknown_separation: {separation!r}")


def duffy_pairs(
    rule_outer: QuadRule,
    rule_inner: QuadRule,
    separation: Separation,
    log_rule: QuadRule | None = None,
) -> PairRule:
    """Tensor rule on [0,1]² adapted to how close the two elements are.

    Only Gauss–Legendre outer/inner rules are accepted; the log part uses
    ``log_rule`` (default: a log rule with as many points as ``rule_outer``).
    """
    if rule_outer.kind != "gauss" or rule_inner.kind != "gauss":
        raise DomainError("unsupported_rule: duffy_pairs expects Gauss–Legendre rules")
    n_log = rule_outer.n if log_rule is None else log_rule.n
    return _pair_rule_cached(rule_outer.n, rule_inner.n, n_log, separation)
