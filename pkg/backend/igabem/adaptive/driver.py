"""
Adaptive loop: solve, estimate, mark, refine.

Every level is solved from scratch on the refined mesh. The loop stops when
the driving estimator falls below ``config.estimator_floor()``, when the
space reaches ``max_dofs``, after ``max_iters`` refinements, or with
``resolution_limit`` when a marked element is too small to bisect in double
precision.
"""
from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass

from igabem import config
from igabem.adaptive import diagnostics as diag
from igabem.adaptive.estimators import (
    IndicatorSet,
    eta_indicators,
    mu_indicators,
    rho_indicators,
    rho_tilde_indicators,
)
from igabem.adaptive.marking import MarkSet, doerfler_mark
from igabem.adaptive.rates import MIN_TAIL, fit_rates
from igabem.discretization.geometry import builtin_geometry
from igabem.discretization.mesh import KnotMesh, initial_mesh, mesh_ratio, refine
from igabem.errors import ConfigurationError, IgabemError, InternalError, ResolutionError
from igabem.runtime import report as report_io
from igabem.runtime.protocol import IterationRecord, LevelDiagnostics, RunConfig, RunReport, RunSummary
from igabem.runtime.telemetry import TelemetryEmitter, debug_log
from igabem.solver.bem import (
    Density,
    GalerkinSystem,
    ProblemData,
    ResidualTable,
    assemble,
    discrete_energy,
    energy_error,
    residual_samples,
    solve,
)
from igabem.solver.problems import build_problem


@dataclass(frozen=True, eq=False)
class LevelState:
    iteration: int
    mesh: KnotMesh
    system: GalerkinSystem
    density: Density
    table: ResidualTable
    mu: IndicatorSet | None
    eta: IndicatorSet | None
    marked: MarkSet


LevelCallback = Callable[[LevelState], None]


def _uses_mu(problem: ProblemData) -> bool:
    return problem.smoothness == "H1"


def _level_diagnostics(
    state: LevelState, prev: LevelState | None, *, seed: int
) -> LevelDiagnostics:
    mesh, table = state.mesh, state.table
    rho = rho_indicators(mesh, table)
    rho_t = rho_tilde_indicators(mesh, table)
    if state.mu is not None:
        eq = diag.local_equivalence_constant(state.mu, rho, mesh)
    else:
        eq = diag.EquivalenceCheck(upper=0.0, lower_ok=True)
    out = LevelDiagnostics(
        iter=state.iteration,
        rho_sq=float(rho.sum()),
        rho_tilde_sq=float(rho_t.sum()),
        equivalence_upper=eq.upper,
        equivalence_lower_ok=eq.lower_ok,
        inverse_ratio=diag.random_inverse_ratio(state.system, samples=20, seed=seed),
    )
    if prev is None:
        return out
    P = diag.prolongation(prev.mesh, mesh)
    step = diag.step_energy_sq(prev.density, state.system, state.density, P)
    removed, added = diag.refinement_counts(prev.mesh, mesh)
    shrink = diag.measure_patch_shrink(prev.mesh, mesh)
    return out.model_copy(
        update={
            "delta_energy_sq": step,
            "orthogonality": diag.galerkin_orthogonality(prev.mesh, state.system, state.density, P),
            "pythagoras": diag.pythagoras_defect(
                discrete_energy(prev.system, prev.density), discrete_energy(state.system, state.density), step
            ),
            "patch_shrink": float(shrink.max()) if shrink.size else None,
            "removed_elements": removed,
            "added_knots": added,
        }
    )


def _effectivity(records: list[IterationRecord], key: str) -> tuple[float | None, float | None]:
    ratios = [
        r.energy_error / getattr(r, key)
        for r in records
        if r.energy_error is not None and getattr(r, key) not in (None, 0.0)
    ]
    if not ratios:
        return None, None
    return min(ratios), max(ratios)


def _run(
    cfg: RunConfig,
    *,
    telemetry: TelemetryEmitter | None = None,
    on_level: LevelCallback | None = None,
) -> RunReport:
    emitter = telemetry or TelemetryEmitter()
    uniform = cfg.mode == "uniform"
    refinement = "h" if uniform else cfg.refinement
    quad = cfg.quad()

    curve = builtin_geometry(cfg.geometry)
    problem = build_problem(cfg.problem, curve, reference=cfg.reference_energy)
    has_mu = _uses_mu(problem)
    if cfg.estimator == "mu" and not has_mu:
        raise ConfigurationError(
            f"estimator_needs_h1_data: problem {problem.name!r} is only H^1/2, use --estimator eta"
        )
    want_eta = cfg.estimator == "eta" or cfg.compute_eta

    mesh = initial_mesh(curve, cfg.p, cfg.n0, cfg.initial_weights)
    kappa0 = mesh.kappa0
    c_init = diag.initial_mesh_constant(mesh, refinement)
    floor = config.estimator_floor()

    records: list[IterationRecord] = []
    levels: list[LevelDiagnostics] = []
    indicator_blocks: list[tuple[int, list[report_io.IndicatorRow]]] = []
    prev: LevelState | None = None
    state: LevelState | None = None
    stop_reason = "max_iters"
    iteration = 0
    while True:
        started = time.perf_counter()
        try:
            system = assemble(mesh.space, mesh, problem, quad)
            density = solve(system)
            table = residual_samples(density, problem, mesh, quad.residual_k, quad)
            mu = mu_indicators(mesh, table) if has_mu else None
            eta = eta_indicators(mesh, table, quad) if want_eta else None
            driving = eta if cfg.estimator == "eta" else mu
            if driving is None:
                raise InternalError(f"missing_estimator: {cfg.estimator!r} was not computed")
            value = driving.estimator
            err = None
            if problem.reference_energy is not None:
                err = energy_error(system, density, problem.reference_energy)

            stop: str | None = None
            if value <= floor:
                stop = "estimator_floor"
            elif mesh.dim >= cfg.max_dofs:
                stop = "max_dofs"
            elif iteration >= cfg.max_iters:
                stop = "max_iters"
            marks: MarkSet = frozenset()
            if stop is None:
                marks = frozenset(mesh.node_indices()) if uniform else doerfler_mark(driving, cfg.theta)
                if not marks:
                    stop = "estimator_floor"

            state = LevelState(iteration, mesh, system, density, table, mu, eta, marks)
            if cfg.diagnostics:
                levels.append(_level_diagnostics(state, prev, seed=iteration))
        except IgabemError as exc:
            exc.add_note(f"iteration={iteration}")
            raise

        seconds = 0.0 if config.zero_timing() else time.perf_counter() - started
        records.append(
            IterationRecord(
                iter=iteration,
                knots=mesh.knot_count,
                dofs=mesh.dim,
                mu=None if mu is None else mu.estimator,
                eta=None if eta is None else eta.estimator,
                energy_error=err,
                marked=len(marks),
                kappa=mesh_ratio(mesh),
                seconds=seconds,
            )
        )
        emitter.emit_iteration(
            mode=cfg.mode,
            iteration=iteration,
            knots=mesh.knot_count,
            dofs=mesh.dim,
            estimator=cfg.estimator,
            value=value,
            marked=len(marks),
            seconds=seconds,
            energy_error=err,
        )
        if cfg.dump_indicators:
            mu2 = mu.values.tolist() if mu is not None else [None] * driving.values.size
            eta2 = eta.values.tolist() if eta is not None else [None] * driving.values.size
            indicator_blocks.append((iteration, list(zip(driving.params.tolist(), mu2, eta2))))
        if on_level is not None:
            on_level(state)

        if stop is not None:
            stop_reason = stop
            break

        try:
            fine, _ = refine(mesh, marks, mode=refinement)
            kappa = mesh_ratio(fine)
            if kappa > 2.0 * kappa0:
                raise InternalError(f"mesh_ratio_exceeded: κ̌={kappa!r} > 2κ̌₀={2.0 * kappa0!r}")
            if fine.knot_count <= mesh.knot_count:
                raise InternalError("refinement_stalled: marked nodes added no knots")
        except ResolutionError as exc:
            debug_log("driver", f"it={iteration} {exc}")
            stop_reason = "resolution_limit"
            break
        except IgabemError as exc:
            exc.add_note(f"iteration={iteration}")
            raise
        debug_log("driver", f"it={iteration} marked={len(marks)} knots {mesh.knot_count}->{fine.knot_count}")
        prev = state if cfg.diagnostics else None
        mesh = fine
        iteration += 1

    assert state is not None
    emitter.emit_stop(reason=stop_reason, iteration=iteration)
    measured = diag.mesh_constant(records)
    eff_min, eff_max = _effectivity(records, cfg.estimator)
    summary = RunSummary(
        stop_reason=stop_reason,
        iterations=len(records),
        kappa0=kappa0,
        kappa_max=max(r.kappa for r in records),
        mesh_constant_initial=float(c_init),
        mesh_constant_bound=float(2 * c_init + 1),
        mesh_constant_measured=measured,
        reference_energy=problem.reference_energy,
        effectivity_min=eff_min,
        effectivity_max=eff_max,
    )
    out = RunReport(config=cfg, records=records, summary=summary, diagnostics=levels)
    if len(records) >= MIN_TAIL and all(v is not None and v > 0.0 for v in out.estimator_values()):
        out = out.model_copy(update={"fit": fit_rates(out)})

    if cfg.out:
        report_io.write_report(out, cfg.out)
    if cfg.dump_mesh:
        report_io.write_mesh(state.mesh, cfg.dump_mesh)
    if cfg.dump_indicators:
        report_io.write_indicators(indicator_blocks, cfg.dump_indicators)
    if cfg.dump_matrix:
        report_io.write_matrix(state.system, cfg.dump_matrix)
    return out


def adaptive_run(
    cfg: RunConfig,
    *,
    telemetry: TelemetryEmitter | None = None,
    on_level: LevelCallback | None = None,
) -> RunReport:
    """Dörfler-marked adaptive refinement driven by ``cfg.estimator``."""
    if cfg.mode != "adaptive":
        cfg = cfg.model_copy(update={"mode": "adaptive"})
    return _run(cfg, telemetry=telemetry, on_level=on_level)


def uniform_run(
    cfg: RunConfig,
    *,
    telemetry: TelemetryEmitter | None = None,
    on_level: LevelCallback | None = None,
) -> RunReport:
    """Every node marked on every level, h-refinement only."""
    if cfg.mode != "uniform":
        cfg = cfg.model_copy(update={"mode": "uniform"})
    return _run(cfg, telemetry=telemetry, on_level=on_level)


def run(
    cfg: RunConfig,
    *,
    telemetry: TelemetryEmitter | None = None,
    on_level: LevelCallback | None = None,
) -> RunReport:
    runner = uniform_run if cfg.mode == "uniform" else adaptive_run
    return runner(cfg, telemetry=telemetry, on_level=on_level)


def mesh_constant_holds(out: RunReport) -> bool:
    """|K_ℓ| − |K_0| ≤ C Σ_{j<ℓ} |M_j| with C = 2·C_init + 1."""
    return out.summary.mesh_constant_measured <= out.summary.mesh_constant_bound + 1e-12


def fitted_reduction(out: RunReport) -> diag.ReductionFit:
    """Estimator reduction fit over the diagnostics of a run."""
    rho = [d.rho_tilde_sq for d in out.diagnostics]
    steps = [d.delta_energy_sq for d in out.diagnostics[1:]]
    if not out.diagnostics or any(s is None for s in steps):
        raise ConfigurationError("missing_diagnostics: run with diagnostics=True")
    return diag.fit_estimator_reduction(rho, [float(s) for s in steps])  # type: ignore[arg-type]


__all__ = [
    "LevelState",
    "adaptive_run",
    "fitted_reduction",
    "mesh_constant_holds",
    "run",
    "uniform_run",
]
