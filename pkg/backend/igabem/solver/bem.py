"""
Galerkin BEM for the single-layer operator V on a parametrized curve.

V ψ(x) = −(1/2π) ∫_Γ log|x − y| ψ(y) dy. All integrals are taken element by
element in the parameter domain. Element pairs are classified as coincident,
adjacent (sharing a node), near (one element in between) and far. The log
kernel is split into a bounded part and a log part on coincident and adjacent
pairs; the remaining pairs use tensor Gauss rules.
"""
from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from igabem import config
from igabem.discretization.mesh import KnotMesh
from igabem.discretization.splines import NurbsSpace
from igabem.errors import AssemblyError, DomainError, FactorizationError, InternalError
from igabem.runtime.telemetry import debug_log
from igabem.solver.quadrature import duffy_pairs, gauss_legendre, gauss_log, graded_gauss

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]

_INV_2PI = 1.0 / (2.0 * np.pi)
# Element pairs up to this (cyclic) index distance get dedicated quadrature.
NEAR_BAND = 2
# Entries of kernel blocks kept in memory at once by the far-field loops.
_BLOCK_ENTRIES = 1 << 23


@dataclass(frozen=True)
class QuadConfig:
    quad_n: int = field(default_factory=config.quad_order)
    quad_log_n: int = field(default_factory=config.quad_log_order)
    quad_far_n: int = field(default_factory=config.quad_far_order)
    eta_n: int = field(default_factory=config.eta_quad_order)
    residual_k: int = field(default_factory=config.residual_samples)
    graded_levels: int = 8


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Right-hand side f of Vφ = f and whatever reference data is known.

    ``f_eval(points, params)`` returns f on Γ; ``f_deriv(points, params, unit_tangents)``
    returns the arclength derivative ∂_Γ f.
    """

    name: str
    f_eval: Callable[[FloatArray, FloatArray], FloatArray]
    f_deriv: Callable[[FloatArray, FloatArray, FloatArray], FloatArray] | None = None
    reference_energy: float | None = None
    exact_density: Callable[[FloatArray, FloatArray], FloatArray] | None = None
    smoothness: str = "H1"


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    matrix: FloatArray
    load: FloatArray
    space: NurbsSpace
    mesh: KnotMesh


@dataclass(frozen=True, eq=False)
class Density:
    space: NurbsSpace
    coeffs: FloatArray
    mesh: KnotMesh

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.dim,):
            raise DomainError(f"coefficient_count_mismatch: expected {self.space.dim}, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def values(self, t: ArrayLike) -> FloatArray:
        return self.space.evaluate(self.coeffs, t)

    def scaled(self, alpha: float) -> Density:
        return Density(self.space, alpha * self.coeffs, self.mesh)


# ---------------------------------------------------------------------------
# Element sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Samples:
    t: FloatArray       # (E, P) parameters
    X: FloatArray       # (E, P, 2) points
    J: FloatArray       # (E, P) |γ'| · ȟ
    first: IntArray     # (E,) first active basis index
    R: FloatArray       # (E, P, p+1) basis values


def _sample(mesh: KnotMesh, elems: IntArray, x: FloatArray) -> _Samples:
    """Quantities at local coordinates x ∈ (0,1) of the given elements."""
    z = mesh.node_params
    hc = mesh.widths
    xx = np.broadcast_to(x, (elems.size, x.shape[-1])) if x.ndim == 1 else x
    t = z[elems][:, None] + hc[elems][:, None] * xx
    spans = mesh.element_spans[elems]
    X = mesh.curve.eval(t)
    J = mesh.curve.speed(t) * hc[elems][:, None]
    R = mesh.space.on_span(np.repeat(spans, t.shape[1]), t.ravel()).reshape(t.shape + (mesh.p + 1,))
    return _Samples(t, X, J, spans - mesh.p, R)


def _scatter(A: FloatArray, first1: IntArray, first2: IntArray, loc: FloatArray) -> None:
    q = loc.shape[1]
    rows = first1[:, None] + np.arange(q)
    cols = first2[:, None] + np.arange(q)
    np.add.at(A, (rows[:, :, None], cols[:, None, :]), loc)


def _pair_integrals(
    mesh: KnotMesh,
    e1: IntArray,
    e2: IntArray,
    s: FloatArray,
    t: FloatArray,
    w: FloatArray,
    r: FloatArray | None,
) -> tuple[FloatArray, IntArray, IntArray]:
    """∫∫ K R_i(s) R_j(t) over element pairs; K = log(|Δγ|/r), or 1 when r is None."""
    S1 = _sample(mesh, e1, s)
    S2 = _sample(mesh, e2, t)
    vals = w[None, :] * S1.J * S2.J
    if r is not None:
        dist = np.linalg.norm(S1.X - S2.X, axis=-1)
        vals = vals * np.log(dist / r[None, :])
    loc = np.einsum("ep,epi,epj->eij", vals, S1.R, S2.R)
    return loc, S1.first, S2.first


def element_pairs(mesh: KnotMesh) -> dict[str, tuple[IntArray, IntArray]]:
    """Element pairs (e1, e2) per separation class below the far field.

    Adjacent pairs are oriented so that e1 ends where e2 starts; near pairs
    are listed once per unordered pair.
    """
    n = mesh.n_elements
    idx = np.arange(n)
    out: dict[str, tuple[IntArray, IntArray]] = {"coincident": (idx, idx)}
    if mesh.closed:
        adj = (idx, (idx + 1) % n) if n >= 3 else (idx[:0], idx[:0])
        near_set = sorted({tuple(sorted((e, (e + 2) % n))) for e in range(n)} - {(e, e) for e in range(n)})
        near_set = [pr for pr in near_set if _cyclic(pr[0], pr[1], n) == 2]
    else:
        adj = (idx[:-1], idx[1:])
        near_set = [(e, e + 2) for e in range(n - 2)]
    out["adjacent"] = adj
    arr = np.asarray(near_set, dtype=np.intp).reshape(-1, 2)
    out["near"] = (arr[:, 0], arr[:, 1])
    return out


def _cyclic(e1: int, e2: int, n: int) -> int:
    d = abs(e1 - e2)
    return min(d, n - d)


def _element_distance(mesh: KnotMesh, ea: IntArray, eb: IntArray) -> IntArray:
    d = np.abs(ea[:, None] - eb[None, :])
    if mesh.closed:
        d = np.minimum(d, mesh.n_elements - d)
    return d


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _FarPoints:
    X: FloatArray
    W: FloatArray
    elem: IntArray
    basis: sparse.csr_matrix


def _far_points(mesh: KnotMesh, n_points: int) -> _FarPoints:
    rule = gauss_legendre(n_points)
    elems = np.arange(mesh.n_elements)
    S = _sample(mesh, elems, rule.nodes)
    M = S.t.size
    q = mesh.p + 1
    rows = np.repeat(np.arange(M), q)
    cols = (np.repeat(S.first, rule.n)[:, None] + np.arange(q)).ravel()
    basis = sparse.csr_matrix((S.R.reshape(M, q).ravel(), (rows, cols)), shape=(M, mesh.dim))
    W = (rule.weights[None, :] * S.J).ravel()
    return _FarPoints(S.X.reshape(M, 2), W, np.repeat(elems, rule.n), basis)


def _far_block(mesh: KnotMesh, fp: _FarPoints, rows: IntArray) -> FloatArray:
    d = _element_distance(mesh, fp.elem[rows], fp.elem)
    dx = fp.X[rows, 0][:, None] - fp.X[None, :, 0]
    dy = fp.X[rows, 1][:, None] - fp.X[None, :, 1]
    with np.errstate(divide="ignore"):
        K = np.log(np.hypot(dx, dy))
    K[d <= NEAR_BAND] = 0.0
    K *= fp.W[None, :]
    K *= fp.W[rows][:, None]
    right = np.asarray(fp.basis.T @ K.T)
    return np.asarray(fp.basis[rows].T @ right.T)


def _row_blocks(total: int, width: int) -> list[IntArray]:
    per = max(1, min(config.assembly_block_rows(), _BLOCK_ENTRIES // max(width, 1)))
    return [np.arange(lo, min(lo + per, total)) for lo in range(0, total, per)]


def assemble(
    space: NurbsSpace,
    mesh: KnotMesh,
    problem: ProblemData,
    quad: QuadConfig | None = None,
    *,
    workers: int | None = None,
) -> GalerkinSystem:
    """A_ij = ⟨V R_j, R_i⟩ and b_i = ⟨f, R_i⟩."""
    quad = quad or QuadConfig()
    if space.dim != mesh.dim or not np.array_equal(space.knotvec.knots, mesh.knots):
        raise DomainError("space_mesh_mismatch: the space must be built on the mesh knots")
    N = space.dim
    nworkers = workers or config.assembly_workers()

    fp = _far_points(mesh, quad.quad_far_n)
    blocks = _row_blocks(fp.W.size, fp.W.size)
    A = np.zeros((N, N))
    if nworkers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            for part in pool.map(lambda rows: _far_block(mesh, fp, rows), blocks):
                A += part
    else:
        for rows in blocks:
            A += _far_block(mesh, fp, rows)

    near = np.zeros((N, N))
    gl = gauss_legendre(quad.quad_n)
    lg = gauss_log(quad.quad_log_n)
    pairs = element_pairs(mesh)
    for sep in ("coincident", "adjacent"):
        e1, e2 = pairs[sep]
        if e1.size == 0:
            continue
        rule = duffy_pairs(gl, gl, sep, log_rule=lg)  # type: ignore[arg-type]
        loc, f1, f2 = _pair_integrals(mesh, e1, e2, rule.s, rule.t, rule.w, rule.r)
        loc_log, _, _ = _pair_integrals(mesh, e1, e2, rule.s_log, rule.t_log, rule.w_log, None)
        loc = loc + loc_log
        _scatter(near, f1, f2, loc)
        if sep == "adjacent":
            _scatter(near, f2, f1, np.transpose(loc, (0, 2, 1)))
    e1, e2 = pairs["near"]
    if e1.size:
        rule = duffy_pairs(gl, gl, "far")
        loc, f1, f2 = _pair_integrals(mesh, e1, e2, rule.s, rule.t, rule.w, rule.r)
        _scatter(near, f1, f2, loc)
        _scatter(near, f2, f1, np.transpose(loc, (0, 2, 1)))

    A = -_INV_2PI * (A + near)
    A = 0.5 * (A + A.T)
    b = load_vector(mesh, problem, quad.quad_n)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise AssemblyError("nan_in_assembly: non-finite Galerkin entries (self-intersecting curve?)")
    debug_log("assemble", f"N={N} elements={mesh.n_elements} far_points={fp.W.size} blocks={len(blocks)}")
    return GalerkinSystem(A, b, space, mesh)


def load_vector(mesh: KnotMesh, problem: ProblemData, n_points: int) -> FloatArray:
    rule = gauss_legendre(n_points)
    elems = np.arange(mesh.n_elements)
    S = _sample(mesh, elems, rule.nodes)
    fvals = problem.f_eval(S.X.reshape(-1, 2), S.t.ravel()).reshape(S.t.shape)
    vals = rule.weights[None, :] * S.J * fvals
    loc = np.einsum("ep,epi->ei", vals, S.R)
    b = np.zeros(mesh.dim)
    np.add.at(b, S.first[:, None] + np.arange(mesh.p + 1), loc)
    return b


# ---------------------------------------------------------------------------
# Solve and norms
# ---------------------------------------------------------------------------

def solve(system: GalerkinSystem) -> Density:
    """Cholesky solve of the Galerkin system."""
    A, b = system.matrix, system.load
    try:
        factor = cho_factor(A, lower=False, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise FactorizationError(f"cholesky_failed: Galerkin matrix is not SPD ({exc})") from exc
    coeffs = cho_solve(factor, b)
    res = float(np.linalg.norm(A @ coeffs - b))
    scale = float(np.linalg.norm(b)) or 1.0
    debug_log("solve", f"N={b.size} relative_residual={res / scale:.3e}")
    if not np.all(np.isfinite(coeffs)):
        raise FactorizationError("cholesky_failed: non-finite solution")
    return Density(system.space, coeffs, system.mesh)


def energy_norm(density_delta: Density | ArrayLike, system: GalerkinSystem) -> float:
    """‖ψ‖_V = sqrt(aᵀ A a) for the coefficient vector a of ψ."""
    a = density_delta.coeffs if isinstance(density_delta, Density) else np.asarray(density_delta, dtype=float)
    if a.shape != system.load.shape:
        raise DomainError(f"coefficient_count_mismatch: expected {system.load.shape}, got {a.shape}")
    q = float(a @ system.matrix @ a)
    tol = 1e-12 * float(np.abs(system.matrix).max(initial=0.0)) * float(a @ a)
    if q < -tol:
        raise InternalError(f"negative_energy: aᵀAa = {q!r}")
    return float(np.sqrt(max(q, 0.0)))


def discrete_energy(system: GalerkinSystem, density: Density) -> float:
    """⟨f, Φ⟩ = bᵀa, which equals ‖Φ‖_V² for the Galerkin solution."""
    return float(system.load @ density.coeffs)


def energy_error(system: GalerkinSystem, density: Density, reference_energy: float) -> float:
    """‖φ − Φ‖_V from ‖φ − Φ‖_V² = ⟨f, φ⟩ − ⟨f, Φ⟩ (Galerkin orthogonality)."""
    sq = reference_energy - discrete_energy(system, density)
    if sq < 0.0:
        debug_log("energy_error", f"clipped negative squared error {sq:.3e}")
    return float(np.sqrt(max(sq, 0.0)))


# ---------------------------------------------------------------------------
# Evaluation of VΦ on Γ
# ---------------------------------------------------------------------------

def _singular_elements(mesh: KnotMesh, t: float) -> list[tuple[int, float]]:
    """Elements whose closure holds t, with t expressed in that element's range."""
    z = mesh.node_params
    n = mesh.n_elements
    e = int(np.clip(np.searchsorted(z, t, side="right") - 1, 0, n - 1))
    out = [(e, t)]
    if t == z[e] and e > 0:
        out.append((e - 1, t))
    elif t == z[0] and mesh.closed:
        out.append((n - 1, float(z[-1])))
    return out


def _density_times_speed(density: Density, elems: IntArray, tau: FloatArray) -> FloatArray:
    mesh = density.mesh
    spans = np.repeat(mesh.element_spans[elems], tau.shape[1])
    R = density.space.on_span(spans, tau.ravel())
    idx = (spans - mesh.p)[:, None] + np.arange(mesh.p + 1)
    phi = (R * density.coeffs[idx]).sum(axis=1).reshape(tau.shape)
    return phi * mesh.curve.speed(tau)


def potential(density: Density, ts: ArrayLike, quad: QuadConfig | None = None) -> FloatArray:
    """(VΦ)(γ(t)) for many parameters at once."""
    quad = quad or QuadConfig()
    mesh = density.mesh
    curve = mesh.curve
    z, hc = mesh.node_params, mesh.widths
    n = mesh.n_elements
    shape = np.shape(ts)
    t = np.atleast_1d(np.asarray(ts, dtype=float)).ravel()
    if mesh.closed:
        t = curve.wrap(t)
    Xt = curve.eval(t)
    m = t.size

    sing_j: list[int] = []
    sing_e: list[int] = []
    sing_t: list[float] = []
    near_j: list[int] = []
    near_e: list[int] = []
    near_side: list[float] = []
    excluded = np.full((m, 4), -1, dtype=np.intp)
    for j in range(m):
        singular = _singular_elements(mesh, float(t[j]))
        own = {e for e, _ in singular}
        for e, ts_e in singular:
            sing_j.append(j)
            sing_e.append(e)
            sing_t.append(ts_e)
        ids = list(own)
        for e in own:
            for nb in mesh.element_neighbors(e):
                if nb in own or nb in ids:
                    continue
                ids.append(nb)
                near_j.append(j)
                near_e.append(nb)
                # +1: nb lies after the singular set, its near end is z[nb].
                after = (nb == (e + 1) % n) if mesh.closed else (nb == e + 1)
                near_side.append(1.0 if after else -1.0)
        excluded[j, : len(ids)] = ids

    out = np.zeros(m)

    # Elements holding the target: split at t, log part by the log rule.
    gl = gauss_legendre(quad.quad_n)
    lg = gauss_log(quad.quad_log_n)
    if sing_j:
        sj = np.asarray(sing_j)
        se = np.asarray(sing_e)
        st = np.asarray(sing_t)
        for sign in (-1.0, 1.0):
            L = (st - z[se]) if sign < 0 else (z[se + 1] - st)
            ok = L > 0
            if not np.any(ok):
                continue
            jj, ee, tt, LL = sj[ok], se[ok], st[ok], L[ok]
            tau = tt[:, None] + sign * LL[:, None] * gl.nodes[None, :]
            G = _density_times_speed(density, ee, tau)
            dist = np.linalg.norm(Xt[jj][:, None, :] - curve.eval(tau), axis=-1)
            smooth = (np.log(dist / (LL[:, None] * gl.nodes[None, :])) + np.log(LL)[:, None]) * G
            part = LL * (smooth @ gl.weights)
            tau_l = tt[:, None] + sign * LL[:, None] * lg.nodes[None, :]
            G_l = _density_times_speed(density, ee, tau_l)
            part -= LL * (G_l @ lg.weights)
            np.add.at(out, jj, part)

    # Neighbours: composite Gauss graded towards the end next to the target.
    if near_j:
        gr = graded_gauss(quad.quad_n, quad.graded_levels)
        nj = np.asarray(near_j)
        ne = np.asarray(near_e)
        side = np.asarray(near_side)
        start = np.where(side > 0, z[ne], z[ne + 1])
        tau = start[:, None] + side[:, None] * hc[ne][:, None] * gr.nodes[None, :]
        G = _density_times_speed(density, ne, tau)
        dist = np.linalg.norm(Xt[nj][:, None, :] - curve.eval(tau), axis=-1)
        part = hc[ne] * ((np.log(dist) * G) @ gr.weights)
        np.add.at(out, nj, part)

    # Everything else: plain Gauss with the far-field order.
    fp_rule = gauss_legendre(quad.quad_far_n)
    elems = np.arange(n)
    tau = z[:-1][:, None] + hc[:, None] * fp_rule.nodes[None, :]
    g = (_density_times_speed(density, elems, tau) * hc[:, None] * fp_rule.weights[None, :]).ravel()
    Y = curve.eval(tau).reshape(-1, 2)
    src_elem = np.repeat(elems, fp_rule.n)
    for rows in _row_blocks(m, Y.shape[0]):
        dx = Xt[rows, 0][:, None] - Y[None, :, 0]
        dy = Xt[rows, 1][:, None] - Y[None, :, 1]
        mask = np.zeros((rows.size, Y.shape[0]), dtype=bool)
        for k in range(excluded.shape[1]):
            mask |= src_elem[None, :] == excluded[rows, k][:, None]
        with np.errstate(divide="ignore"):
            K = np.log(np.hypot(dx, dy))
        K[mask] = 0.0
        out[rows] += K @ g

    return (-_INV_2PI * out).reshape(shape)


def eval_V(density: Density, t: float, quad: QuadConfig | None = None) -> float:
    """(VΦ)(γ(t))."""
    return float(potential(density, np.asarray([t]), quad)[0])


# ---------------------------------------------------------------------------
# Residual tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ResidualTable:
    """r = f − VΦ at k Gauss points per element, with its arclength derivative.

    Per element, r∘γ is interpolated by a polynomial of degree k−1 in the
    local coordinate (Legendre basis on [0,1]); ∂_Γ r is that polynomial's
    derivative divided by ȟ·|γ'|.
    """

    mesh: KnotMesh
    k: int
    nodes: FloatArray      # (k,) local Gauss nodes
    weights: FloatArray    # (k,)
    params: FloatArray     # (n, k)
    values: FloatArray     # (n, k)
    derivs: FloatArray     # (n, k)
    speeds: FloatArray     # (n, k)
    coeffs: FloatArray     # (k, n) Legendre coefficients in x = 2ξ − 1

    @classmethod
    def from_values(cls, mesh: KnotMesh, k: int, values: FloatArray) -> ResidualTable:
        if k < 2:
            raise DomainError(f"too_few_samples: k={k} (need ≥ 2)")
        rule = gauss_legendre(k)
        z, hc = mesh.node_params, mesh.widths
        vals = np.asarray(values, dtype=float).reshape(mesh.n_elements, k)
        params = z[:-1][:, None] + hc[:, None] * rule.nodes[None, :]
        speeds = mesh.curve.speed(params)
        x = 2.0 * rule.nodes - 1.0
        coeffs = npleg.legfit(x, vals.T, k - 1)
        dcoef = npleg.legder(coeffs)
        dxi = 2.0 * npleg.legval(x[None, :], dcoef[:, :, None], tensor=False)
        derivs = dxi / (hc[:, None] * speeds)
        return cls(mesh, k, rule.nodes, rule.weights, params, vals, derivs, speeds, coeffs)

    @classmethod
    def from_function(
        cls, mesh: KnotMesh, fn: Callable[[FloatArray, FloatArray], FloatArray], k: int
    ) -> ResidualTable:
        """Table of a given function r(points, params), for synthetic residuals."""
        rule = gauss_legendre(k)
        z, hc = mesh.node_params, mesh.widths
        params = z[:-1][:, None] + hc[:, None] * rule.nodes[None, :]
        X = mesh.curve.eval(params)
        vals = np.asarray(fn(X.reshape(-1, 2), params.ravel()), dtype=float).reshape(params.shape)
        return cls.from_values(mesh, k, vals)

    @property
    def n_elements(self) -> int:
        return int(self.values.shape[0])

    def value_at(self, elems: IntArray, xi: FloatArray) -> FloatArray:
        """Interpolated r at local coordinates xi (shape (E, P)) of the elements."""
        c = self.coeffs[:, elems][:, :, None]
        return npleg.legval(2.0 * xi - 1.0, c, tensor=False)

    def deriv_at(self, elems: IntArray, xi: FloatArray) -> FloatArray:
        """Interpolated ∂_Γ r at local coordinates xi (shape (E, P))."""
        mesh = self.mesh
        dcoef = npleg.legder(self.coeffs)[:, elems][:, :, None]
        dxi = 2.0 * npleg.legval(2.0 * xi - 1.0, dcoef, tensor=False)
        t = mesh.node_params[elems][:, None] + mesh.widths[elems][:, None] * xi
        return dxi / (mesh.widths[elems][:, None] * mesh.curve.speed(t))

    def deriv_l2_sq(self) -> FloatArray:
        """‖∂_Γ r‖²_{L²(T)} (arclength measure) per element."""
        hc = self.mesh.widths
        return hc * ((self.derivs**2 * self.speeds) @ self.weights)

    def value_l2_sq(self) -> FloatArray:
        hc = self.mesh.widths
        return hc * ((self.values**2 * self.speeds) @ self.weights)


def residual_samples(
    density: Density, problem: ProblemData, mesh: KnotMesh, k: int, quad: QuadConfig | None = None
) -> ResidualTable:
    """Sample r = f − VΦ at k Gauss points per element.

    With ``problem.f_deriv`` the sampled ∂_Γ r takes ∂_Γ f exactly and
    differentiates only the interpolant of VΦ.
    """
    if k < 2:
        raise DomainError(f"too_few_samples: k={k} (need ≥ 2)")
    if mesh.n_elements != density.mesh.n_elements or not np.array_equal(
        mesh.node_params, density.mesh.node_params
    ):
        raise DomainError("mesh_mismatch: residual mesh differs from the density's mesh")
    rule = gauss_legendre(k)
    z, hc = mesh.node_params, mesh.widths
    params = z[:-1][:, None] + hc[:, None] * rule.nodes[None, :]
    X = mesh.curve.eval(params)
    f = problem.f_eval(X.reshape(-1, 2), params.ravel()).reshape(params.shape)
    v = potential(density, params.ravel(), quad).reshape(params.shape)
    table = ResidualTable.from_values(mesh, k, f - v)
    if problem.f_deriv is None:
        return table
    tangents = mesh.curve.deriv(params)
    tangents = tangents / np.linalg.norm(tangents, axis=-1, keepdims=True)
    df = problem.f_deriv(X.reshape(-1, 2), params.ravel(), tangents.reshape(-1, 2)).reshape(params.shape)
    dv = ResidualTable.from_values(mesh, k, v).derivs
    return replace(table, derivs=df - dv)
