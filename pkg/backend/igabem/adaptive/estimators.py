"""
Node-based error indicators computed from a sampled residual r = f − VΦ.

μ(z)² weights the squared arclength L² norm of ∂_Γ r on the node patch by the
patch's parameter length. η(z)² is the H^{1/2} Sobolev–Slobodeckij seminorm of
r on the node patch. ρ and ρ̃ are per-element variants of μ weighted by ȟ and
by the modified mesh-size h̃.
"""
from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from igabem.discretization.mesh import KnotMesh, node_patch_length, tilde_h
from igabem.errors import DomainError
from igabem.runtime.telemetry import debug_log
from igabem.solver.bem import QuadConfig, ResidualTable, element_pairs
from igabem.solver.quadrature import PairRule, duffy_pairs, gauss_legendre

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]
IndicatorKind = Literal["mu", "eta"]

# Below this fraction of the patch length the difference quotient is replaced by ∂_Γ r.
_QUOTIENT_GUARD = 1e-6


@dataclass(frozen=True, eq=False)
class IndicatorSet:
    """Squared indicators per counted node."""

    kind: str
    nodes: IntArray
    params: FloatArray
    values: FloatArray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != np.shape(self.nodes) or v.shape != np.shape(self.params):
            raise DomainError("malformed_indicators: nodes, params and values differ in length")
        if np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise DomainError("negative_indicator: indicators must be finite and ≥ 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def total(self) -> float:
        return math.fsum(self.values.tolist())

    @property
    def estimator(self) -> float:
        return math.sqrt(self.total)

    def mass(self, nodes: Iterable[int]) -> float:
        pos = {int(j): k for k, j in enumerate(self.nodes.tolist())}
        return math.fsum(float(self.values[pos[int(j)]]) for j in nodes)

    def as_dict(self) -> dict[int, float]:
        return {int(j): float(v) for j, v in zip(self.nodes, self.values)}


def _check_table(mesh: KnotMesh, table: ResidualTable) -> None:
    if table.n_elements != mesh.n_elements or not np.array_equal(table.mesh.node_params, mesh.node_params):
        raise DomainError(
            f"residual_table_incomplete: table has {table.n_elements} elements, mesh has {mesh.n_elements}"
        )


def _node_arrays(mesh: KnotMesh) -> tuple[IntArray, FloatArray]:
    nodes = np.asarray(list(mesh.node_indices()), dtype=np.intp)
    return nodes, mesh.node_params[nodes]


def mu_indicators(mesh: KnotMesh, table: ResidualTable) -> IndicatorSet:
    """μ(z)² = |γ⁻¹(ω(z))| · ‖∂_Γ r‖²_{L²(ω(z))}."""
    _check_table(mesh, table)
    per_elem = table.deriv_l2_sq()
    nodes, params = _node_arrays(mesh)
    vals = np.array(
        [node_patch_length(mesh, int(j)) * sum(per_elem[e] for e in mesh.node_elements(int(j))) for j in nodes]
    )
    return IndicatorSet("mu", nodes, params, vals)


def _element_patch_lengths(mesh: KnotMesh) -> FloatArray:
    hc = mesh.hcheck
    return np.array([hc[e] + sum(hc[nb] for nb in mesh.element_neighbors(e)) for e in range(mesh.n_elements)])


def _pair_seminorm(
    mesh: KnotMesh, table: ResidualTable, e1: IntArray, e2: IntArray, rule: PairRule, coincident: bool
) -> FloatArray:
    """∫_{T1}∫_{T2} |r(x)−r(y)|²/|x−y|² dx dy (arclength) per element pair."""
    z, hc = mesh.node_params, mesh.widths
    curve = mesh.curve
    S = np.broadcast_to(rule.s, (e1.size, rule.s.size))
    T = np.broadcast_to(rule.t, (e2.size, rule.t.size))
    ts = z[e1][:, None] + hc[e1][:, None] * S
    tt = z[e2][:, None] + hc[e2][:, None] * T
    Js = curve.speed(ts) * hc[e1][:, None]
    Jt = curve.speed(tt) * hc[e2][:, None]
    rs = table.value_at(e1, S)
    rt = table.value_at(e2, T)
    dist = np.linalg.norm(curve.eval(ts) - curve.eval(tt), axis=-1)

    if coincident:
        gap = np.abs(S - T) * hc[e1][:, None]
    else:
        gap = (1.0 - S) * hc[e1][:, None] + T * hc[e2][:, None]
    guard = _QUOTIENT_GUARD * _element_patch_lengths(mesh)[e1][:, None]
    close = gap < guard
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = (rs - rt) ** 2 / dist**2
    if np.any(close):
        ds = table.deriv_at(e1, S)
        dt = table.deriv_at(e2, T)
        quot = np.where(close, 0.5 * (ds**2 + dt**2), quot)
    return (quot * Js * Jt) @ rule.w


def eta_indicators(mesh: KnotMesh, table: ResidualTable, quad: QuadConfig | None = None) -> IndicatorSet:
    """η(z)² = |r|²_{H^{1/2}(ω(z))}, assembled from coincident and adjacent element pairs."""
    _check_table(mesh, table)
    quad = quad or QuadConfig()
    gl = gauss_legendre(quad.eta_n)
    pairs = element_pairs(mesh)

    e1, e2 = pairs["coincident"]
    same = _pair_seminorm(mesh, table, e1, e2, duffy_pairs(gl, gl, "coincident"), True)
    a1, a2 = pairs["adjacent"]
    cross: dict[tuple[int, int], float] = {}
    if a1.size:
        adj = _pair_seminorm(mesh, table, a1, a2, duffy_pairs(gl, gl, "adjacent"), False)
        cross = {(int(x), int(y)): float(v) for x, y, v in zip(a1, a2, adj)}

    nodes, params = _node_arrays(mesh)
    vals = np.empty(nodes.size)
    for k, j in enumerate(nodes):
        elems = mesh.node_elements(int(j))
        total = float(sum(same[e] for e in elems))
        if len(elems) == 2:
            lo, hi = elems
            key = (lo, hi) if (lo, hi) in cross else (hi, lo)
            total += 2.0 * cross.get(key, 0.0)
        vals[k] = max(total, 0.0)
    debug_log("eta", f"nodes={nodes.size} total={vals.sum():.3e}")
    return IndicatorSet("eta", nodes, params, vals)


def rho_indicators(mesh: KnotMesh, table: ResidualTable) -> FloatArray:
    """ρ(T)² = ȟ_T ‖∂_Γ r‖²_{L²(T)} per element."""
    _check_table(mesh, table)
    return mesh.hcheck * table.deriv_l2_sq()


def rho_tilde_indicators(mesh: KnotMesh, table: ResidualTable, tilde: FloatArray | None = None) -> FloatArray:
    """ρ̃(T)² = h̃_T ‖∂_Γ r‖²_{L²(T)} per element; h̃ defaults to ``tilde_h(mesh)``."""
    _check_table(mesh, table)
    ht = tilde_h(mesh) if tilde is None else np.asarray(tilde, dtype=float)
    if ht.shape != (mesh.n_elements,):
        raise DomainError(f"tilde_h_length_mismatch: expected {mesh.n_elements}, got {ht.shape}")
    return ht * table.deriv_l2_sq()
