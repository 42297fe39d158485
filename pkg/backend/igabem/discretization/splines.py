"""
B-splines and NURBS on clamped knot vectors.

Knot vectors are stored in full: the left end repeated p+1 times, then the
interior knots, then the right end repeated p+1 times. Basis functions use
0-based indices; B_i is supported on [knots[i], knots[i+p+1]).

Closed curves use the same layout. Their conventional end node carries
multiplicity p+1, so the periodic extension of the knot window coincides with
the clamped one and no ghost knots have to be stored separately.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse

from igabem.errors import DomainError, RefinementError, UnsupportedOperationError

Side = Literal["left", "right"]
FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]


@dataclass(frozen=True, eq=False)
class KnotVector:
    degree: int
    knots: FloatArray
    closed: bool = False

    def __post_init__(self) -> None:
        p = int(self.degree)
        if p < 0:
            raise DomainError(f"negative_degree: p={p}")
        t = np.array(self.knots, dtype=float)
        if t.ndim != 1 or t.size < 2 * (p + 1):
            raise DomainError(f"short_knot_vector: need at least {2 * (p + 1)} knots, got {t.size}")
        if np.any(np.diff(t) < 0):
            raise DomainError("unsorted_knots: knot vector must be nondecreasing")
        if not (np.all(t[: p + 1] == t[0]) and np.all(t[-(p + 1):] == t[-1])):
            raise DomainError(f"unclamped_knots: end knots need multiplicity {p + 1}")
        if t[0] >= t[-1]:
            raise DomainError("empty_knot_window: a must be < b")
        _, counts = np.unique(t, return_counts=True)
        if counts[1:-1].size and counts[1:-1].max() > p + 1:
            raise DomainError(f"multiplicity_overflow: interior multiplicity exceeds {p + 1}")
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "degree", p)

    @property
    def a(self) -> float:
        return float(self.knots[0])

    @property
    def b(self) -> float:
        return float(self.knots[-1])

    @property
    def dim(self) -> int:
        return int(self.knots.size - self.degree - 1)

    @property
    def breakpoints(self) -> FloatArray:
        return np.unique(self.knots)

    def multiplicity(self, u: float) -> int:
        return int(np.count_nonzero(self.knots == u))

    def find_span(self, t: ArrayLike, side: Side = "right") -> IntArray:
        """Index k of the nonempty span [knots[k], knots[k+1]) holding t.

        ``side="left"`` selects (knots[k], knots[k+1]] instead. Parameters at
        the window ends are clamped to the first/last nonempty span, which
        gives the one-sided limit from inside [a, b].
        """
        arr = np.asarray(t, dtype=float)
        p = self.degree
        if side == "right":
            k = np.searchsorted(self.knots, arr, side="right") - 1
        else:
            k = np.searchsorted(self.knots, arr, side="left") - 1
        return np.clip(k, p, self.dim - 1).astype(np.intp)


# ---------------------------------------------------------------------------
# Single basis functions (Cox–de Boor)
# ---------------------------------------------------------------------------

def _check_index(kv: KnotVector, i: int) -> None:
    if not 0 <= i < kv.dim:
        raise DomainError(f"basis_index_out_of_range: i={i} not in [0, {kv.dim})")


def _cox_de_boor(knots: FloatArray, i: int, p: int, t: FloatArray, side: Side) -> FloatArray:
    """B_{i,p}(t) from the triangular recursion; 0/0 terms are dropped."""
    local = knots[i : i + p + 2]
    if side == "right":
        vals = [((local[j] <= t) & (t < local[j + 1])).astype(float) for j in range(p + 1)]
    else:
        vals = [((local[j] < t) & (t <= local[j + 1])).astype(float) for j in range(p + 1)]
    for k in range(1, p + 1):
        nxt = []
        for j in range(p + 1 - k):
            out = np.zeros_like(t)
            d1 = local[j + k] - local[j]
            if d1 > 0:
                out = out + (t - local[j]) / d1 * vals[j]
            d2 = local[j + k + 1] - local[j + 1]
            if d2 > 0:
                out = out + (local[j + k + 1] - t) / d2 * vals[j + 1]
            nxt.append(out)
        vals = nxt
    return vals[0]


def bspline_eval(kv: KnotVector, i: int, t: ArrayLike, side: Side = "right") -> FloatArray | float:
    """B_{i,p}(t), right-continuous at knots (left-continuous with ``side="left"``)."""
    _check_index(kv, i)
    arr = np.asarray(t, dtype=float)
    out = _cox_de_boor(kv.knots, i, kv.degree, arr, side)
    return float(out) if out.ndim == 0 else out


def bspline_deriv(kv: KnotVector, i: int, t: ArrayLike, side: Side = "right") -> FloatArray | float:
    """d/dt B_{i,p}(t) from the degree p-1 functions on the same knots."""
    p = kv.degree
    if p == 0:
        raise UnsupportedOperationError("degree_zero_derivative: B-splines of degree 0 are piecewise constant")
    _check_index(kv, i)
    arr = np.asarray(t, dtype=float)
    T = kv.knots
    out = np.zeros_like(arr)
    d1 = T[i + p] - T[i]
    if d1 > 0:
        out = out + p * _cox_de_boor(T, i, p - 1, arr, side) / d1
    d2 = T[i + p + 1] - T[i + 1]
    if d2 > 0:
        out = out - p * _cox_de_boor(T, i + 1, p - 1, arr, side) / d2
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# All active functions at once (Piegl–Tiller)
# ---------------------------------------------------------------------------

def basis_on_span(T: FloatArray, p: int, span: IntArray, t: FloatArray) -> FloatArray:
    """Values of B_{span-p}, …, B_{span} at t, shape ``(m, p+1)``."""
    m = t.size
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = t - T[span + 1 - j]
        right[:, j] = T[span + j] - t
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def basis_deriv_on_span(T: FloatArray, p: int, span: IntArray, t: FloatArray) -> FloatArray:
    """First derivatives of B_{span-p}, …, B_{span} at t, shape ``(m, p+1)``."""
    m = t.size
    dN = np.zeros((m, p + 1))
    if p == 0:
        return dN
    lower = basis_on_span(T, p - 1, span, t)
    for r in range(p + 1):
        i = span - p + r
        if r >= 1:
            dN[:, r] += p * lower[:, r - 1] / (T[i + p] - T[i])
        if r <= p - 1:
            dN[:, r] -= p * lower[:, r] / (T[i + p + 1] - T[i + 1])
    return dN


# ---------------------------------------------------------------------------
# NURBS space
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NurbsSpace:
    knotvec: KnotVector
    weights: FloatArray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.knotvec.dim,):
            raise DomainError(f"weight_count_mismatch: expected {self.knotvec.dim}, got {w.shape}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DomainError("nonpositive_weight: NURBS weights must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def bspline(cls, kv: KnotVector) -> NurbsSpace:
        return cls(kv, np.ones(kv.dim))

    @property
    def degree(self) -> int:
        return self.knotvec.degree

    @property
    def dim(self) -> int:
        return self.knotvec.dim

    def active(self, t: ArrayLike, side: Side = "right") -> tuple[IntArray, FloatArray]:
        """(first index, R values of shape (m, p+1)) of the functions active at t."""
        arr = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        span = self.knotvec.find_span(arr, side)
        return span - self.degree, self.on_span(span, arr)

    def on_span(self, span: ArrayLike, t: ArrayLike) -> FloatArray:
        """R_{span-p}, …, R_{span} at t for known spans; shapes broadcast, output ``(m, p+1)``."""
        sp, arr = np.broadcast_arrays(np.asarray(span, dtype=np.intp), np.asarray(t, dtype=float))
        sp = sp.ravel()
        arr = arr.ravel()
        p = self.degree
        B = basis_on_span(self.knotvec.knots, p, sp, arr)
        w = self.weights[(sp - p)[:, None] + np.arange(p + 1)]
        num = w * B
        return num / num.sum(axis=1, keepdims=True)

    def active_with_deriv(
        self, t: ArrayLike, side: Side = "right"
    ) -> tuple[IntArray, FloatArray, FloatArray]:
        """As :meth:`active`, plus dR/dt for the same functions."""
        arr = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        p = self.degree
        T = self.knotvec.knots
        span = self.knotvec.find_span(arr, side)
        B = basis_on_span(T, p, span, arr)
        dB = basis_deriv_on_span(T, p, span, arr)
        first = span - p
        w = self.weights[first[:, None] + np.arange(p + 1)]
        W = (w * B).sum(axis=1, keepdims=True)
        dW = (w * dB).sum(axis=1, keepdims=True)
        R = w * B / W
        dR = w * (dB * W - B * dW) / (W * W)
        return first, R, dR

    def basis_matrix(self, t: ArrayLike, side: Side = "right") -> sparse.csr_matrix:
        """Sparse ``(m, N)`` matrix of R_j(t_i)."""
        arr = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        first, R = self.active(arr, side)
        p = self.degree
        rows = np.repeat(np.arange(arr.size), p + 1)
        cols = (first[:, None] + np.arange(p + 1)).ravel()
        return sparse.csr_matrix((R.ravel(), (rows, cols)), shape=(arr.size, self.dim))

    def evaluate(self, coeffs: ArrayLike, t: ArrayLike, side: Side = "right") -> FloatArray:
        """Σ_i c_i R_i(t)."""
        c = np.asarray(coeffs, dtype=float)
        arr = np.asarray(t, dtype=float)
        first, R = self.active(arr, side)
        idx = first[:, None] + np.arange(self.degree + 1)
        return (R * c[idx]).sum(axis=1).reshape(arr.shape)

    def evaluate_deriv(self, coeffs: ArrayLike, t: ArrayLike, side: Side = "right") -> FloatArray:
        c = np.asarray(coeffs, dtype=float)
        arr = np.asarray(t, dtype=float)
        first, _, dR = self.active_with_deriv(arr, side)
        idx = first[:, None] + np.arange(self.degree + 1)
        return (dR * c[idx]).sum(axis=1).reshape(arr.shape)


def nurbs_eval(space: NurbsSpace, i: int, t: ArrayLike) -> FloatArray | float:
    """R_{i,p}(t); at the right end of the window the left limit is returned."""
    _check_index(space.knotvec, i)
    arr = np.asarray(t, dtype=float)
    first, R = space.active(arr)
    r = i - first
    hit = (r >= 0) & (r <= space.degree)
    out = np.where(hit, R[np.arange(first.size), np.clip(r, 0, space.degree)], 0.0)
    a, b = space.knotvec.a, space.knotvec.b
    flat = arr.ravel()
    out = np.where((flat < a) | (flat > b), 0.0, out)
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Knot insertion
# ---------------------------------------------------------------------------

def knot_insert(
    space: NurbsSpace, coeffs: ArrayLike | None, new_knot: float
) -> tuple[NurbsSpace, FloatArray | None]:
    """Insert one knot by Boehm's rule on homogeneous coefficients (w_i, a_i w_i).

    The denominator Σ w_i B_i and the represented function Σ a_i R_i are unchanged.
    ``coeffs`` may be a vector or an (N, m) block of coefficient columns.
    """
    kv = space.knotvec
    p = kv.degree
    T = kv.knots
    u = float(new_knot)
    if not kv.a < u < kv.b:
        raise DomainError(f"knot_outside_window: u={u!r} not in ({kv.a!r}, {kv.b!r})")
    s = kv.multiplicity(u)
    if s + 1 > p + 1:
        raise RefinementError(f"multiplicity_overflow: knot {u!r} already has multiplicity {s}")
    k = int(np.searchsorted(T, u, side="right") - 1)

    n = kv.dim
    w = space.weights
    c = None if coeffs is None else np.asarray(coeffs, dtype=float)
    if c is not None and c.shape[0] != n:
        raise DomainError(f"coefficient_length_mismatch: expected {n}, got {c.shape[0]}")
    block = c is not None and c.ndim == 2
    m = c.shape[1] if block else 1  # type: ignore[union-attr]
    hom = np.empty((n, 1 + m))
    hom[:, 0] = w
    if c is None:
        hom[:, 1] = 0.0
    else:
        hom[:, 1:] = (c if block else c[:, None]) * w[:, None]

    q = np.empty((n + 1, 1 + m))
    q[: k - p + 1] = hom[: k - p + 1]
    q[k - s + 1 :] = hom[k - s :]
    for i in range(k - p + 1, k - s + 1):
        alpha = (u - T[i]) / (T[i + p] - T[i])
        q[i] = alpha * hom[i] + (1.0 - alpha) * hom[i - 1]

    new_kv = KnotVector(p, np.insert(T, k + 1, u), kv.closed)
    new_space = NurbsSpace(new_kv, q[:, 0])
    if c is None:
        return new_space, None
    new_coeffs = q[:, 1:] / q[:, :1]
    return new_space, new_coeffs if block else new_coeffs[:, 0]


def insert_knots(
    space: NurbsSpace, coeffs: ArrayLike | None, new_knots: ArrayLike
) -> tuple[NurbsSpace, FloatArray | None]:
    """Repeated single-knot insertion, in ascending order."""
    out_space = space
    out_coeffs = None if coeffs is None else np.asarray(coeffs, dtype=float)
    for u in np.sort(np.asarray(new_knots, dtype=float)):
        out_space, out_coeffs = knot_insert(out_space, out_coeffs, float(u))
    return out_space, out_coeffs


def knot_difference(coarse: FloatArray, fine: FloatArray) -> FloatArray:
    """Multiset difference fine \\ coarse; raises if coarse is not contained in fine."""
    cu, cc = np.unique(coarse, return_counts=True)
    fu, fc = np.unique(fine, return_counts=True)
    lookup = dict(zip(fu.tolist(), fc.tolist()))
    for u, c in zip(cu.tolist(), cc.tolist()):
        if lookup.get(u, 0) < c:
            raise RefinementError(f"not_a_refinement: knot {u!r} lost multiplicity")
    extra: list[float] = []
    coarse_counts = dict(zip(cu.tolist(), cc.tolist()))
    for u, c in zip(fu.tolist(), fc.tolist()):
        extra.extend([u] * (c - coarse_counts.get(u, 0)))
    return np.asarray(extra, dtype=float)
