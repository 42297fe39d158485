"""
Central config: env-based numerical defaults in one place, no hardcoding in logic.
"""
from __future__ import annotations

import os


def _env(name: str, default: str) -> str:
    return os.environ.get(name, default)


def _env_int(name: str, default: int) -> int:
    v = os.environ.get(name)
    if not v:
        return default
    try:
        return int(v)
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    v = os.environ.get(name)
    if not v:
        return default
    try:
        return float(v)
    except ValueError:
        return default


def _env_flag(name: str) -> bool:
    return str(_env(name, "")).strip().lower() in {"1", "true", "yes", "on"}


# --- Quadrature ---
def quad_order() -> int:
    """Gauss points per direction for coincident, adjacent and near element pairs."""
    return _env_int("IGABEM_QUAD_N", 16)


def quad_log_order() -> int:
    """Points of the log-weighted Gauss rule used on the singular coordinate."""
    return _env_int("IGABEM_QUAD_LOG_N", 16)


def quad_far_order() -> int:
    return _env_int("IGABEM_QUAD_FAR_N", 10)


def eta_quad_order() -> int:
    """Gauss points per direction for the element-pair integrals of the Faermann indicators."""
    return _env_int("IGABEM_ETA_QUAD_N", 12)


def residual_samples() -> int:
    """Gauss samples per element for the residual table (degree of the interpolant + 1)."""
    return _env_int("IGABEM_RESIDUAL_K", 8)


def arclength_tol() -> float:
    return _env_float("IGABEM_ARCLENGTH_TOL", 1e-12)


# --- Assembly ---
def assembly_workers() -> int:
    """Threads used for row-block assembly. 1 = sequential."""
    return max(1, _env_int("IGABEM_WORKERS", 1))


def assembly_block_rows() -> int:
    """Quadrature points per row block of the far-field kernel matrix (bounds memory)."""
    return max(64, _env_int("IGABEM_BLOCK_ROWS", 2048))


# --- Adaptive loop ---
def estimator_floor() -> float:
    """Absolute estimator value below which the adaptive loop stops."""
    return _env_float("IGABEM_ESTIMATOR_FLOOR", 1e-12)


def default_max_dofs() -> int:
    return _env_int("IGABEM_MAX_DOFS", 2000)


def default_max_iters() -> int:
    return _env_int("IGABEM_MAX_ITERS", 200)


# --- Reports ---
def zero_timing() -> bool:
    """Record every level as taking 0 s, so repeated runs write byte-identical reports."""
    return _env_flag("IGABEM_ZERO_TIMING")


# --- Debug ---
def debug_enabled() -> bool:
    """True when ``IGABEM_DEBUG`` is set to a truthy value."""
    return _env_flag("IGABEM_DEBUG") or _env("IGABEM_DEBUG", "").strip().lower() == "debug"


# --- Paths ---
def output_dir() -> str:
    """Base directory for relative report/dump paths. Override with IGABEM_OUTPUT_DIR."""
    return os.path.expanduser(_env("IGABEM_OUTPUT_DIR", "."))

