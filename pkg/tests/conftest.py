"""Shared fixtures: curves, small meshes and cheap quadrature settings."""
from __future__ import annotations

import numpy as np
import pytest

from igabem.discretization.geometry import ParamCurve, circle, segment_piece, slit
from igabem.discretization.mesh import KnotMesh, initial_mesh
from igabem.solver.bem import QuadConfig


def straight(t0: float = 0.0, t1: float = 1.0) -> ParamCurve:
    """Unit-speed segment γ(t) = (t, 0) on [t0, t1]."""
    return ParamCurve("segment", (segment_piece(t0, t1, (t0, 0.0), (t1, 0.0)),), closed=False, smooth_breaks=())


@pytest.fixture
def segment() -> ParamCurve:
    return straight()


@pytest.fixture
def circle_curve() -> ParamCurve:
    return circle()


@pytest.fixture
def slit_curve() -> ParamCurve:
    return slit()


@pytest.fixture
def fast_quad() -> QuadConfig:
    return QuadConfig(quad_n=10, quad_log_n=10, quad_far_n=8, eta_n=8, residual_k=6)


@pytest.fixture
def circle_mesh(circle_curve: ParamCurve) -> KnotMesh:
    return initial_mesh(circle_curve, 0, 4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_segment():
    return straight
