"""Run protocol models: configuration, per-iteration records and reports."""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from igabem import config
from igabem.discretization.geometry import geometry_names, is_closed_geometry
from igabem.solver.bem import QuadConfig
from igabem.solver.problems import problem_names


class IgabemModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunConfig(IgabemModel):
    geometry: str = "slit"
    problem: str = "constant"
    p: int = Field(default=0, ge=0)
    theta: float = Field(default=0.5, gt=0.0, le=1.0)
    estimator: Literal["mu", "eta"] = "mu"
    mode: Literal["adaptive", "uniform"] = "adaptive"
    refinement: Literal["hk", "h"] = "hk"
    max_dofs: int = Field(default_factory=config.default_max_dofs, ge=1)
    max_iters: int = Field(default_factory=config.default_max_iters, ge=0)
    n0: int = Field(default=4, ge=1)
    initial_weights: list[float] | None = None
    quad_n: int = Field(default_factory=config.quad_order, ge=2)
    quad_log_n: int = Field(default_factory=config.quad_log_order, ge=1)
    quad_far_n: int = Field(default_factory=config.quad_far_order, ge=1)
    eta_quad_n: int = Field(default_factory=config.eta_quad_order, ge=2)
    residual_k: int = Field(default_factory=config.residual_samples, ge=2)
    compute_eta: bool = False
    diagnostics: bool = False
    reference_energy: float | None = None
    out: str | None = None
    dump_mesh: str | None = None
    dump_indicators: str | None = None
    dump_matrix: str | None = None

    @field_validator("geometry")
    @classmethod
    def _known_geometry(cls, v: str) -> str:
        key = v.strip().lower()
        if key not in geometry_names():
            raise ValueError(f"unknown_geometry: {v!r}. Available: {', '.join(geometry_names())}")
        return key

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, v: str) -> str:
        key = v.strip().lower()
        if key not in problem_names():
            raise ValueError(f"unknown_problem: {v!r}. Available: {', '.join(problem_names())}")
        return key

    @field_validator("initial_weights")
    @classmethod
    def _positive_weights(cls, v: list[float] | None) -> list[float] | None:
        if v is not None and any(not w > 0.0 for w in v):
            raise ValueError("invalid_weights: NURBS weights must be positive")
        return v

    @model_validator(mode="after")
    def _closed_needs_four(self) -> RunConfig:
        if is_closed_geometry(self.geometry) and self.n0 < 4:
            raise ValueError(f"invalid_initial_size: closed geometry {self.geometry!r} needs n0 >= 4, got {self.n0}")
        return self

    def quad(self) -> QuadConfig:
        return QuadConfig(
            quad_n=self.quad_n,
            quad_log_n=self.quad_log_n,
            quad_far_n=self.quad_far_n,
            eta_n=self.eta_quad_n,
            residual_k=self.residual_k,
        )

    def echo(self) -> dict[str, Any]:
        """JSON-compatible view of the numerical settings (output paths left out)."""
        return self.model_dump(mode="json", exclude={"out", "dump_mesh", "dump_indicators", "dump_matrix"})


class IterationRecord(IgabemModel):
    iter: int = Field(ge=0)
    knots: int = Field(ge=1)
    dofs: int = Field(ge=1)
    mu: float | None = None
    eta: float | None = None
    energy_error: float | None = None
    marked: int = Field(ge=0)
    kappa: float = Field(ge=1.0)
    seconds: float = Field(ge=0.0)


class LevelDiagnostics(IgabemModel):
    """Computable instances of the convergence analysis at one level.

    ``delta_energy_sq``, ``orthogonality``, ``pythagoras`` and ``patch_shrink``
    describe the step from the previous level to this one.
    """

    iter: int
    rho_sq: float
    rho_tilde_sq: float
    equivalence_upper: float
    equivalence_lower_ok: bool
    inverse_ratio: float
    delta_energy_sq: float | None = None
    orthogonality: float | None = None
    pythagoras: float | None = None
    patch_shrink: float | None = None
    removed_elements: int | None = None
    added_knots: int | None = None


class RateFit(IgabemModel):
    s: float
    q: float
    tail: int
    estimator: Literal["mu", "eta"]
    s_energy: float | None = None


class RunSummary(IgabemModel):
    stop_reason: str
    iterations: int
    kappa0: float
    kappa_max: float
    mesh_constant_initial: float
    mesh_constant_bound: float
    mesh_constant_measured: float
    reference_energy: float | None = None
    effectivity_min: float | None = None
    effectivity_max: float | None = None


class RunReport(IgabemModel):
    config: RunConfig
    records: list[IterationRecord]
    summary: RunSummary
    fit: RateFit | None = None
    diagnostics: list[LevelDiagnostics] = Field(default_factory=list)

    @model_validator(mode="after")
    def _knots_increase(self) -> RunReport:
        knots = [r.knots for r in self.records]
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("non_increasing_knots: |K_ℓ| must increase strictly along a run")
        return self

    def estimator_values(self) -> list[float | None]:
        key = self.config.estimator
        return [getattr(r, key) for r in self.records]
