"""
Numerical checks of the statements behind the adaptive convergence analysis.

Each function measures one quantity on concrete meshes, systems or runs:
residual orthogonality on nested spaces, the Pythagoras identity, the inverse
estimate, patch shrinking, estimator reduction, the local equivalence of μ and
ρ, the mesh constant of the knot-count bound, and linear convergence.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import nnls

from igabem.adaptive.estimators import IndicatorSet
from igabem.discretization.mesh import (
    KnotMesh,
    RefinementMode,
    patch,
    patch_param_length,
    refine,
    refined_elements,
)
from igabem.discretization.splines import insert_knots, knot_difference
from igabem.errors import DomainError
from igabem.runtime.protocol import IterationRecord
from igabem.solver.bem import Density, GalerkinSystem, energy_norm
from igabem.solver.quadrature import gauss_legendre

FloatArray = NDArray[np.float64]


# ---------------------------------------------------------------------------
# Nested spaces
# ---------------------------------------------------------------------------

def prolongation(coarse: KnotMesh, fine: KnotMesh) -> FloatArray:
    """Matrix P with R^coarse_j = Σ_i P_ij R^fine_i."""
    extra = knot_difference(coarse.knots, fine.knots)
    eye = np.eye(coarse.dim)
    space, P = insert_knots(coarse.space, eye, extra)
    if P is None or space.dim != fine.dim or not np.allclose(space.weights, fine.weights, rtol=1e-12, atol=0.0):
        raise DomainError("not_nested: the fine mesh is not a refinement of the coarse mesh")
    return P


def galerkin_orthogonality(
    coarse: KnotMesh, fine_system: GalerkinSystem, fine_density: Density, P: FloatArray | None = None
) -> float:
    """max_j |⟨f − VΦ_fine, R^coarse_j⟩|."""
    P = prolongation(coarse, fine_system.mesh) if P is None else P
    residual = fine_system.load - fine_system.matrix @ fine_density.coeffs
    return float(np.abs(P.T @ residual).max(initial=0.0))


def step_energy_sq(
    coarse_density: Density, fine_system: GalerkinSystem, fine_density: Density, P: FloatArray | None = None
) -> float:
    """‖Φ_fine − Φ_coarse‖²_V, with Φ_coarse written in the fine basis."""
    P = prolongation(coarse_density.mesh, fine_system.mesh) if P is None else P
    diff = fine_density.coeffs - P @ coarse_density.coeffs
    return energy_norm(diff, fine_system) ** 2


def pythagoras_defect(coarse_energy: float, fine_energy: float, step_sq: float) -> float:
    """|‖φ−Φ_+‖² + ‖Φ_+−Φ‖² − ‖φ−Φ‖²| written with bᵀa energies, where ⟨f, φ⟩ cancels."""
    return abs(step_sq - (fine_energy - coarse_energy))


# ---------------------------------------------------------------------------
# Inverse estimate
# ---------------------------------------------------------------------------

def weighted_l2_sq(mesh: KnotMesh, coeffs: FloatArray, n_points: int = 8) -> float:
    """‖h^{1/2} Ψ‖²_{L²(Γ)} for Ψ = Σ c_i R_i, with h the element arclength."""
    rule = gauss_legendre(max(n_points, mesh.p + 2))
    z, hc = mesh.node_params, mesh.widths
    t = z[:-1][:, None] + hc[:, None] * rule.nodes[None, :]
    vals = mesh.space.evaluate(coeffs, t.ravel()).reshape(t.shape)
    ds = mesh.curve.speed(t) * hc[:, None]
    per_elem = (vals**2 * ds) @ rule.weights
    return float(mesh.h @ per_elem)


def inverse_estimate_ratio(system: GalerkinSystem, coeffs: FloatArray) -> float:
    """‖h^{1/2}Ψ‖_{L²} / ‖Ψ‖_V for the discrete function with coefficients ``coeffs``."""
    denom = energy_norm(coeffs, system)
    if denom == 0.0:
        raise DomainError("zero_density: the inverse estimate ratio needs Ψ ≠ 0")
    return math.sqrt(weighted_l2_sq(system.mesh, np.asarray(coeffs, dtype=float))) / denom


def random_inverse_ratio(system: GalerkinSystem, samples: int = 20, seed: int = 0) -> float:
    """Largest ratio over ``samples`` random coefficient vectors (seeded)."""
    rng = np.random.default_rng(seed)
    return max(inverse_estimate_ratio(system, rng.standard_normal(system.load.size)) for _ in range(samples))


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------

def measure_patch_shrink(before: KnotMesh, after: KnotMesh) -> FloatArray:
    """|γ⁻¹(ω_after(T'))| / |γ⁻¹(ω_before(T))| for every child T' of a bisected T."""
    zb = before.node_params
    za = after.node_params
    mids = 0.5 * (za[:-1] + za[1:])
    parent = np.clip(np.searchsorted(zb, mids, side="right") - 1, 0, before.n_elements - 1)
    split = refined_elements(before, after)
    out = []
    for child, par in enumerate(parent):
        if int(par) not in split:
            continue
        num = patch_param_length(after, patch(after, [child], 1))
        den = patch_param_length(before, patch(before, [int(par)], 1))
        out.append(num / den)
    return np.asarray(out, dtype=float)


def refinement_counts(before: KnotMesh, after: KnotMesh) -> tuple[int, int]:
    """(coarse elements bisected + nodes whose multiplicity rose, knots added)."""
    removed = len(refined_elements(before, after))
    pos = np.searchsorted(after.node_params, before.node_params)
    raised = int(np.count_nonzero(after.mults[pos] > before.mults))
    return removed + raised, after.knot_count - before.knot_count


def initial_mesh_constant(mesh: KnotMesh, mode: RefinementMode = "hk") -> int:
    """Largest knot-count increase caused by marking a single node of ``mesh``."""
    base = mesh.knot_count
    return max(refine(mesh, [j], mode=mode)[0].knot_count - base for j in mesh.node_indices())


def mesh_constant(records: Sequence[IterationRecord]) -> float:
    """max_ℓ (|K_ℓ| − |K_0|) / Σ_{j<ℓ} |M_j| along a run."""
    if not records:
        return 0.0
    k0 = records[0].knots
    marked = 0
    worst = 0.0
    for prev, rec in zip(records, records[1:]):
        marked += prev.marked
        if marked:
            worst = max(worst, (rec.knots - k0) / marked)
    return worst


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReductionFit:
    q: float
    C: float
    residual: float


def fit_estimator_reduction(rho_tilde_sq: Sequence[float], step_sq: Sequence[float]) -> ReductionFit:
    """Least-squares (q, C) ≥ 0 in ρ̃²_{ℓ+1} ≈ q ρ̃²_ℓ + C ‖Φ_{ℓ+1}−Φ_ℓ‖²_V.

    ``step_sq[ℓ]`` is ‖Φ_{ℓ+1}−Φ_ℓ‖²_V; rows are scaled by ρ̃²_ℓ.
    """
    rho = np.asarray(rho_tilde_sq, dtype=float)
    step = np.asarray(step_sq, dtype=float)
    if rho.size < 3 or step.size != rho.size - 1:
        raise DomainError("insufficient_data: need ≥3 levels and one step value per transition")
    scale = rho[:-1]
    if np.any(scale <= 0.0):
        raise DomainError("nonpositive_values: ρ̃² must be positive on every level")
    A = np.column_stack([np.ones(scale.size), step / scale])
    b = rho[1:] / scale
    coef, res = nnls(A, b)
    return ReductionFit(q=float(coef[0]), C=float(coef[1]), residual=float(res))


@dataclass(frozen=True)
class EquivalenceCheck:
    upper: float
    lower_ok: bool


def local_equivalence_constant(mu: IndicatorSet, rho_sq: FloatArray, mesh: KnotMesh) -> EquivalenceCheck:
    """max_z μ(z)² / Σ_{T∋z} ρ(T)², and whether ρ(T)² ≤ μ(z)² for every z ∈ T."""
    upper = 0.0
    lower_ok = True
    tol = 1e-12
    for j, m2 in zip(mu.nodes.tolist(), mu.values.tolist()):
        elems = mesh.node_elements(j)
        local = float(sum(rho_sq[e] for e in elems))
        if local > 0.0:
            upper = max(upper, m2 / local)
        if any(rho_sq[e] > m2 * (1.0 + tol) + tol * local for e in elems):
            lower_ok = False
    return EquivalenceCheck(upper=upper, lower_ok=lower_ok)


@dataclass(frozen=True)
class LinearConvergence:
    max_n_ratio: float
    max_step_ratio: float
    q: float


def linear_convergence_check(values: Sequence[float], n: int = 3, tail: int | None = None) -> LinearConvergence:
    """Worst (v_{ℓ+n}/v_ℓ)^{1/n} and worst single-step ratio over the last ``tail`` values."""
    v = np.asarray(values, dtype=float)
    if tail is not None:
        v = v[-tail:]
    if v.size <= n or np.any(v <= 0.0):
        raise DomainError(f"insufficient_data: need more than {n} positive values")
    n_ratio = (v[n:] / v[:-n]) ** (1.0 / n)
    step = v[1:] / v[:-1]
    return LinearConvergence(
        max_n_ratio=float(n_ratio.max()),
        max_step_ratio=float(step.max()),
        q=float(np.exp(np.mean(np.log(step)))),
    )
