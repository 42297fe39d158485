"""
Knot meshes on the parameter domain and their refinement.

Nodes are indexed 0..n with node_params[0] = a and node_params[n] = b.
Element e (0-based) is [node_params[e], node_params[e+1]]. For closed curves
node 0 and node n are the same point; node n is the one that is counted and
marked, and index 0 is accepted as an alias for it.

ȟ is bookkept per element rather than read off the node parameters: the
initial mesh fixes it as node differences and every bisection halves it
exactly, so mesh ratios along a refinement chain carry no rounding.
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, cast

import numpy as np
from numpy.typing import ArrayLike, NDArray

from igabem.discretization.geometry import ParamCurve, arclength
from igabem.discretization.splines import (
    KnotVector,
    NurbsSpace,
    insert_knots,
    knot_difference,
)
from igabem.errors import ConfigurationError, DomainError, InternalError, ResolutionError

RefinementMode = Literal["hk", "h"]
# Half an element must span more than this many ulps of its node parameters to be bisected.
_COLLISION_ULPS = 16
FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]


@dataclass(frozen=True, eq=False)
class KnotMesh:
    curve: ParamCurve
    p: int
    node_params: FloatArray
    mults: IntArray
    weights: FloatArray
    kappa0: float
    root: tuple[float, ...] = field(default=(), compare=False)
    root_knot_count: int = field(default=0, compare=False)
    sizes: FloatArray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        z = np.array(self.node_params, dtype=float)
        m = np.array(self.mults, dtype=np.intp)
        p = self.p
        a, b = self.curve.param_interval
        if z.ndim != 1 or z.size < 2 or z.shape != m.shape:
            raise DomainError("malformed_mesh: need ≥2 nodes with one multiplicity each")
        if z[0] != a or z[-1] != b or np.any(np.diff(z) <= 0):
            raise DomainError("malformed_mesh: nodes must increase strictly from a to b")
        if np.any(m < 1) or np.any(m > p + 1):
            raise DomainError(f"multiplicity_out_of_range: multiplicities must lie in 1..{p + 1}")
        if m[0] != p + 1 or m[-1] != p + 1:
            raise DomainError(f"malformed_mesh: end nodes need multiplicity {p + 1}")
        z.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "node_params", z)
        object.__setattr__(self, "mults", m)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.dim,):
            raise DomainError(f"weight_count_mismatch: expected {self.dim}, got {w.shape}")
        object.__setattr__(self, "weights", w)
        s = np.diff(z) if self.sizes is None else np.array(self.sizes, dtype=float)
        if s.shape != (z.size - 1,) or np.any(s <= 0.0):
            raise DomainError(f"malformed_mesh: need {z.size - 1} positive element sizes, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "sizes", s)
        if not self.root:
            object.__setattr__(self, "root", tuple(float(x) for x in z))
            object.__setattr__(self, "root_knot_count", self.knot_count)

    # ── sizes ──
    @property
    def closed(self) -> bool:
        return self.curve.closed

    @property
    def n_elements(self) -> int:
        return int(self.node_params.size - 1)

    @property
    def knots(self) -> FloatArray:
        """Full clamped knot vector (end values repeated p+1 times)."""
        return np.repeat(self.node_params, self.mults)

    @property
    def knot_count(self) -> int:
        """|K|: multiplicities summed over the counted nodes."""
        total = int(self.mults.sum())
        return total - self.p - 1 if self.closed else total

    @property
    def dim(self) -> int:
        return int(self.mults.sum()) - self.p - 1

    @cached_property
    def space(self) -> NurbsSpace:
        return NurbsSpace(KnotVector(self.p, self.knots, self.closed), self.weights)

    @cached_property
    def element_spans(self) -> IntArray:
        """Knot-span index of every element (first active basis index + p)."""
        mids = 0.5 * (self.node_params[:-1] + self.node_params[1:])
        return self.space.knotvec.find_span(mids)

    @property
    def hcheck(self) -> FloatArray:
        """Parameter lengths ȟ per element, dyadic fractions of the initial ones."""
        return cast(FloatArray, self.sizes)

    @cached_property
    def widths(self) -> FloatArray:
        """Node differences; what quadrature maps onto. Equal to ȟ up to rounding in the nodes."""
        return np.diff(self.node_params)

    @cached_property
    def h(self) -> FloatArray:
        """Arclengths per element."""
        z = self.node_params
        return np.array([arclength(self.curve, float(z[e]), float(z[e + 1])) for e in range(self.n_elements)])

    # ── connectivity ──
    def node_indices(self) -> range:
        n = self.n_elements
        return range(1, n + 1) if self.closed else range(0, n + 1)

    def canonical_node(self, j: int) -> int:
        n = self.n_elements
        if not 0 <= j <= n:
            raise DomainError(f"node_out_of_range: j={j} not in [0, {n}]")
        return n if (self.closed and j == 0) else j

    def node_elements(self, j: int) -> tuple[int, ...]:
        n = self.n_elements
        j = self.canonical_node(j)
        if self.closed:
            return tuple(sorted({j - 1, j % n}))
        out = []
        if j >= 1:
            out.append(j - 1)
        if j <= n - 1:
            out.append(j)
        return tuple(out)

    def element_nodes(self, e: int) -> tuple[int, int]:
        n = self.n_elements
        if not 0 <= e < n:
            raise DomainError(f"element_out_of_range: e={e} not in [0, {n})")
        left = e
        if self.closed and left == 0:
            left = n
        return left, e + 1

    def element_neighbors(self, e: int) -> tuple[int, ...]:
        n = self.n_elements
        out = set()
        if e >= 1:
            out.add(e - 1)
        elif self.closed:
            out.add(n - 1)
        if e <= n - 2:
            out.add(e + 1)
        elif self.closed:
            out.add(0)
        out.discard(e)
        return tuple(sorted(out))

    def node_param(self, j: int) -> float:
        return float(self.node_params[self.canonical_node(j)])


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def initial_mesh(
    curve: ParamCurve,
    p: int,
    n0: int,
    weights: ArrayLike | None = None,
    break_multiplicity: int | None = None,
) -> KnotMesh:
    """Nodes at every piece boundary, each piece split uniformly; κ̌₀ is frozen here."""
    if p < 0:
        raise ConfigurationError(f"invalid_degree: p={p}")
    if n0 < 1 or (curve.closed and n0 < 4):
        raise ConfigurationError(f"invalid_initial_size: n0={n0} (closed curves need n0 >= 4)")
    bm = p + 1 if break_multiplicity is None else int(break_multiplicity)
    if not 1 <= bm <= p + 1:
        raise ConfigurationError(f"invalid_break_multiplicity: {bm} not in 1..{p + 1}")

    bounds = curve.piece_bounds
    total = float(bounds[-1] - bounds[0])
    params: list[float] = [float(bounds[0])]
    sizes: list[float] = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        k = max(1, int(round(n0 * float(hi - lo) / total)))
        params.extend(np.linspace(lo, hi, k + 1)[1:].tolist())
        sizes.extend([float(hi - lo) / k] * k)
    params[-1] = float(bounds[-1])
    z = np.asarray(params)

    breaks = set(curve.smooth_breaks)
    mults = np.ones(z.size, dtype=np.intp)
    for j, zj in enumerate(z):
        if zj in breaks:
            mults[j] = bm
    mults[0] = mults[-1] = p + 1

    dim = int(mults.sum()) - p - 1
    w = np.ones(dim) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (dim,):
        raise ConfigurationError(f"weight_count_mismatch: initial space has dimension {dim}, got {w.shape}")
    hc = np.asarray(sizes)
    kappa0 = _ratio(hc, curve.closed)
    return KnotMesh(curve, p, z, mults, w, kappa0, sizes=hc)


# ---------------------------------------------------------------------------
# Mesh quantities
# ---------------------------------------------------------------------------

def _ratio(hc: FloatArray, closed: bool) -> float:
    if hc.size < 2:
        return 1.0
    pairs_a = hc[:-1]
    pairs_b = hc[1:]
    if closed:
        pairs_a = np.append(pairs_a, hc[-1])
        pairs_b = np.append(pairs_b, hc[0])
    return float(np.max(np.maximum(pairs_a / pairs_b, pairs_b / pairs_a)))


def mesh_ratio(mesh: KnotMesh) -> float:
    """κ̌: largest ratio of parameter lengths of neighbouring elements."""
    return _ratio(mesh.hcheck, mesh.closed)


def patch(
    mesh: KnotMesh, seed: Iterable[int], m: int = 1, *, kind: Literal["element", "node"] = "element"
) -> frozenset[int]:
    """ωᵐ(seed) as a set of element indices; m = 0 returns the seed unchanged."""
    seed_set = frozenset(int(s) for s in seed)
    if m < 0:
        raise DomainError(f"negative_patch_order: m={m}")
    if m == 0:
        return seed_set
    if kind == "node":
        elems = {e for j in seed_set for e in mesh.node_elements(j)}
    else:
        for e in seed_set:
            mesh.element_nodes(e)
        elems = set(seed_set) | {nb for e in seed_set for nb in mesh.element_neighbors(e)}
    for _ in range(m - 1):
        elems |= {nb for e in elems for nb in mesh.element_neighbors(e)}
    return frozenset(elems)


def patch_nodes(mesh: KnotMesh, elements: Iterable[int]) -> frozenset[int]:
    """Counted nodes lying in the closure of the given elements."""
    return frozenset(j for e in elements for j in mesh.element_nodes(e))


def patch_param_length(mesh: KnotMesh, elements: Iterable[int]) -> float:
    hc = mesh.hcheck
    return float(sum(hc[e] for e in set(elements)))


def node_patch_length(mesh: KnotMesh, j: int) -> float:
    """|γ⁻¹(ω(z_j))|."""
    return patch_param_length(mesh, mesh.node_elements(j))


def default_q1(p: int, kappa_max: float) -> float:
    """q₁ = q₂^{1/(4p+1)} with q₂ the a-priori patch-shrink bound for κ̌ ≤ kappa_max.

    The patch of a child of a bisected element is the child, its sibling and
    at most one further neighbour, so |ω₊(T')| / |ω(T)| ≤ 1 − 1/(1 + κ + κ²).
    The bound depends on κ̌_max alone and is fixed before the first refinement;
    the shrink measured along a run (``measure_patch_shrink``) stays below it.
    """
    q2 = 1.0 - 1.0 / (1.0 + kappa_max + kappa_max * kappa_max)
    return q2 ** (1.0 / (4 * p + 1))


def tilde_h(mesh: KnotMesh, q1: float | None = None) -> FloatArray:
    """Modified mesh-size: |γ⁻¹(ω(T))| · q₁^{Σ #z over the nodes of ω(T)} per element."""
    q = default_q1(mesh.p, 2.0 * mesh.kappa0) if q1 is None else float(q1)
    if not 0.0 < q < 1.0:
        raise DomainError(f"invalid_q1: {q!r} not in (0, 1)")
    out = np.empty(mesh.n_elements)
    for e in range(mesh.n_elements):
        elems = patch(mesh, [e], 1)
        count = sum(int(mesh.mults[j]) for j in patch_nodes(mesh, elems))
        out[e] = patch_param_length(mesh, elems) * q**count
    return out


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def refine(
    mesh: KnotMesh,
    marked: Iterable[int],
    coeffs: ArrayLike | None = None,
    *,
    mode: RefinementMode = "hk",
) -> tuple[KnotMesh, FloatArray | None]:
    """One refinement step driven by marked nodes.

    Elements with both ends marked are bisected. Remaining marked nodes gain
    one multiplicity while below p+1 (never in ``mode="h"``), otherwise their
    elements are bisected. Closure then bisects neighbours T' of queued T with
    ȟ_T' > κ̌₀ ȟ_T until none remain. Weights, and ``coeffs`` when given, are
    carried over by knot insertion.
    """
    if mode not in ("hk", "h"):
        raise ConfigurationError(f"invalid_refinement_mode: {mode!r}")
    p = mesh.p
    n = mesh.n_elements
    marks = {mesh.canonical_node(int(j)) for j in marked}
    if not marks:
        c = None if coeffs is None else np.asarray(coeffs, dtype=float).copy()
        return mesh, c

    queue: set[int] = set()
    for e in range(n):
        left, right = mesh.element_nodes(e)
        if left in marks and right in marks:
            queue.add(e)
    covered = {j for e in queue for j in mesh.element_nodes(e)}

    mults = mesh.mults.copy()
    raised: list[int] = []
    for j in sorted(marks - covered):
        if mode == "hk" and mults[j] < p + 1:
            mults[j] += 1
            raised.append(j)
        else:
            queue.update(mesh.node_elements(j))

    hc = mesh.hcheck
    work = sorted(queue)
    while work:
        e = work.pop()
        for nb in mesh.element_neighbors(e):
            # compared as a quotient, exactly as in _ratio
            if nb not in queue and hc[nb] / hc[e] > mesh.kappa0:
                queue.add(nb)
                work.append(nb)

    z = mesh.node_params
    split = np.array(sorted(queue), dtype=np.intp)
    mids = 0.5 * (z[split] + z[split + 1])
    room = _COLLISION_ULPS * np.spacing(np.maximum(np.abs(z[split]), np.abs(z[split + 1])))
    crowded = (mids <= z[split]) | (mids >= z[split + 1]) | (0.5 * hc[split] <= room)
    if np.any(crowded):
        e = int(split[crowded][0])
        raise ResolutionError(
            f"node_collision: element [{z[e]!r}, {z[e + 1]!r}] with ȟ={hc[e]!r} cannot be bisected"
        )
    new_z = np.concatenate([z, mids])
    new_m = np.concatenate([mults, np.ones(mids.size, dtype=np.intp)])
    order = np.argsort(new_z, kind="stable")
    new_z = new_z[order]
    new_m = new_m[order]
    halved = np.zeros(n, dtype=bool)
    halved[split] = True
    new_sizes = np.repeat(np.where(halved, 0.5 * hc, hc), np.where(halved, 2, 1))

    inserted = np.concatenate([mids, z[raised]]) if raised else mids
    space, new_coeffs = insert_knots(mesh.space, coeffs, inserted)
    refined = KnotMesh(
        mesh.curve,
        p,
        new_z,
        new_m,
        np.asarray(space.weights),
        mesh.kappa0,
        mesh.root,
        mesh.root_knot_count,
        new_sizes,
    )
    if not np.array_equal(space.knotvec.knots, refined.knots):
        raise InternalError("knot_transport_mismatch: inserted knots disagree with refined mesh")
    return refined, new_coeffs


def refined_elements(coarse: KnotMesh, fine: KnotMesh) -> frozenset[int]:
    """Elements of ``coarse`` that contain a node of ``fine`` in their interior."""
    z = coarse.node_params
    zf = fine.node_params
    out = set()
    for e in range(coarse.n_elements):
        lo, hi = z[e], z[e + 1]
        if np.any((zf > lo) & (zf < hi)):
            out.add(e)
    return frozenset(out)


def overlay(mesh_a: KnotMesh, mesh_b: KnotMesh) -> KnotMesh:
    """Coarsest common refinement: node union, pointwise maximal multiplicity."""
    if (
        mesh_a.curve.name != mesh_b.curve.name
        or mesh_a.curve.param_interval != mesh_b.curve.param_interval
        or mesh_a.p != mesh_b.p
        or mesh_a.root != mesh_b.root
        or mesh_a.kappa0 != mesh_b.kappa0
    ):
        raise DomainError("incompatible_meshes: overlay needs two refinements of one initial mesh")
    z = np.union1d(mesh_a.node_params, mesh_b.node_params)
    ma = dict(zip(mesh_a.node_params.tolist(), mesh_a.mults.tolist()))
    mb = dict(zip(mesh_b.node_params.tolist(), mesh_b.mults.tolist()))
    m = np.array([max(ma.get(x, 0), mb.get(x, 0)) for x in z.tolist()], dtype=np.intp)
    knots = np.repeat(z, m)
    space, _ = insert_knots(mesh_a.space, None, knot_difference(mesh_a.knots, knots))
    # every overlay element is the smaller of the two elements containing it
    mids = 0.5 * (z[:-1] + z[1:])
    in_a = np.searchsorted(mesh_a.node_params, mids) - 1
    in_b = np.searchsorted(mesh_b.node_params, mids) - 1
    sizes = np.minimum(mesh_a.hcheck[in_a], mesh_b.hcheck[in_b])
    return KnotMesh(
        mesh_a.curve,
        mesh_a.p,
        z,
        m,
        np.asarray(space.weights),
        mesh_a.kappa0,
        mesh_a.root,
        mesh_a.root_knot_count,
        sizes,
    )


def uniform_marks(mesh: KnotMesh) -> list[int]:
    """Node set whose marking in ``mode="h"`` bisects every element."""
    return list(mesh.node_indices())
