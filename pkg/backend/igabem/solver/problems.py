"""Right-hand sides by name, with closed-form or extrapolated reference energies."""
from __future__ import annotations

import math
from collections.abc import Callable
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from igabem.discretization.geometry import ParamCurve, builtin_geometry
from igabem.discretization.mesh import initial_mesh, refine, uniform_marks
from igabem.errors import ConfigurationError, NumericalError
from igabem.runtime.telemetry import debug_log
from igabem.solver.bem import ProblemData, QuadConfig, assemble, discrete_energy, solve

FloatArray = NDArray[np.float64]

# cap of the unit square, Γ(1/4)² / (4π^{3/2})
_SQUARE_CAPACITY = math.gamma(0.25) ** 2 / (4.0 * math.pi**1.5)

# (geometry, problem) pairs without a closed form whose reference energy is
# extrapolated once per process, and the uniform sequence used for it.
DERIVED_REFERENCES: dict[tuple[str, str], dict[str, int]] = {
    ("pacman", "constant"): {"p": 2, "levels": 4, "n0": 24},
    ("pacman", "harmonic"): {"p": 2, "levels": 4, "n0": 24},
    ("square", "harmonic"): {"p": 2, "levels": 4, "n0": 24},
}


def _constant(x: FloatArray, t: FloatArray) -> FloatArray:
    return np.ones(x.shape[0])


def _constant_deriv(x: FloatArray, t: FloatArray, tangent: FloatArray) -> FloatArray:
    return np.zeros(x.shape[0])


def _harmonic(x: FloatArray, t: FloatArray) -> FloatArray:
    return x[:, 0] ** 2 - x[:, 1] ** 2


def _harmonic_deriv(x: FloatArray, t: FloatArray, tangent: FloatArray) -> FloatArray:
    return 2.0 * x[:, 0] * tangent[:, 0] - 2.0 * x[:, 1] * tangent[:, 1]


def _power(x: FloatArray, t: FloatArray) -> FloatArray:
    return np.abs(x[:, 0]) ** 0.6


def log_capacity(curve: ParamCurve) -> float | None:
    """Logarithmic capacity of Γ where a closed form is known, else None."""
    shape = curve.shape
    if curve.name == "circle" and "radius" in shape:
        return float(shape["radius"])
    if curve.name == "slit" and "half_length" in shape:
        return 0.5 * float(shape["half_length"])
    if curve.name == "square" and "side" in shape:
        return _SQUARE_CAPACITY * float(shape["side"])
    return None


def reference_energy(problem: str, curve: ParamCurve) -> float | None:
    """⟨f, φ⟩ in closed form, or None.

    For f ≡ 1, φ is −2π / ln cap(Γ) times the unit equilibrium measure of Γ,
    so ⟨1, φ⟩ = −2π / ln cap(Γ).
    """
    shape = curve.shape
    if problem == "constant":
        cap = log_capacity(curve)
        return None if cap is None else -2.0 * math.pi / math.log(cap)
    if curve.name == "circle" and "radius" in shape and problem == "harmonic":
        return 4.0 * math.pi * shape["radius"] ** 4
    return None


def exact_density(problem: str, curve: ParamCurve) -> Callable[[FloatArray, FloatArray], FloatArray] | None:
    shape = curve.shape
    if curve.name == "circle" and "radius" in shape:
        r = shape["radius"]
        if problem == "constant":
            value = -1.0 / (r * math.log(r))
            return lambda x, t: np.full(np.shape(t), value)
        if problem == "harmonic":
            return lambda x, t: 4.0 * r * np.cos(2.0 * np.asarray(t))
    if curve.name == "slit" and "half_length" in shape and problem == "constant":
        L = shape["half_length"]
        scale = 2.0 / math.log(2.0 / L)
        return lambda x, t: scale / np.sqrt(L * L - np.asarray(t) ** 2)
    return None


_PROBLEMS: dict[str, tuple[Callable[..., FloatArray], Callable[..., FloatArray] | None, str]] = {
    "constant": (_constant, _constant_deriv, "H1"),
    "harmonic": (_harmonic, _harmonic_deriv, "H1"),
    "power": (_power, None, "H1/2"),
}


def problem_names() -> list[str]:
    return sorted(_PROBLEMS)


def build_problem(
    name: str, curve: ParamCurve, *, reference: float | None = None, derive: bool = True
) -> ProblemData:
    """ProblemData for ``name`` on ``curve``.

    ``reference`` overrides the closed form. Without either, pairs listed in
    ``DERIVED_REFERENCES`` get their extrapolated energy unless ``derive`` is off.
    """
    key = (name or "").strip().lower()
    if key not in _PROBLEMS:
        raise ConfigurationError(f"unknown_problem: {name!r}. Available: {', '.join(problem_names())}")
    f, df, smoothness = _PROBLEMS[key]
    ref = reference if reference is not None else reference_energy(key, curve)
    if ref is None and derive and (curve.name, key) in DERIVED_REFERENCES:
        ref = derived_reference_energy(curve.name, key)
    return ProblemData(
        name=key,
        f_eval=f,
        f_deriv=df,
        reference_energy=ref,
        exact_density=exact_density(key, curve),
        smoothness=smoothness,
    )


def aitken(e0: float, e1: float, e2: float) -> float:
    """Δ² extrapolation of a linearly converging sequence."""
    d1 = e1 - e0
    d2 = e2 - e1
    denom = d2 - d1
    if denom == 0.0 or not math.isfinite(denom):
        return e2
    return e2 - d2 * d2 / denom


def extrapolate_reference_energy(
    geometry: str,
    problem: str,
    p: int,
    *,
    levels: int = 3,
    n0: int = 16,
    quad: QuadConfig | None = None,
) -> float:
    """⟨f, φ⟩ by Aitken extrapolation of bᵀa over the last three of ``levels`` uniform meshes."""
    if levels < 3:
        raise ConfigurationError(f"invalid_levels: need at least 3, got {levels}")
    curve = builtin_geometry(geometry)
    prob = build_problem(problem, curve, derive=False)
    mesh = initial_mesh(curve, p, n0)
    energies: list[float] = []
    for level in range(levels):
        system = assemble(mesh.space, mesh, prob, quad)
        energies.append(discrete_energy(system, solve(system)))
        debug_log("reference", f"level={level} dofs={mesh.dim} energy={energies[-1]!r}")
        if level < levels - 1:
            mesh, _ = refine(mesh, uniform_marks(mesh), mode="h")
    value = aitken(*energies[-3:])
    if not math.isfinite(value):
        raise NumericalError(f"extrapolation_failed: energies={energies}")
    return value


@lru_cache(maxsize=None)
def derived_reference_energy(geometry: str, problem: str) -> float:
    """Extrapolated ⟨f, φ⟩ for a pair of ``DERIVED_REFERENCES``, computed once and kept."""
    key = (geometry, problem)
    if key not in DERIVED_REFERENCES:
        raise ConfigurationError(f"no_derived_reference: {geometry}/{problem}")
    spec = DERIVED_REFERENCES[key]
    value = extrapolate_reference_energy(geometry, problem, spec["p"], levels=spec["levels"], n0=spec["n0"])
    debug_log("reference", f"derived {geometry}/{problem} energy={value!r}")
    return value
