"""Boundary parametrizations: piecewise-C² curves, arclength maps, built-in geometries."""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from igabem.config import arclength_tol
from igabem.errors import ConfigurationError, DomainError

Side = Literal["left", "right"]
FloatArray = NDArray[np.float64]

# Parameter comparisons are done with this slack so that nodes computed by
# repeated bisection still count as lying on the interval ends.
_PARAM_SLACK = 1e-13


@dataclass(frozen=True, eq=False)
class CurvePiece:
    """One C² piece of a parametrization, defined on [t0, t1]."""

    t0: float
    t1: float
    point: Callable[[FloatArray], FloatArray]
    tangent: Callable[[FloatArray], FloatArray]


def segment_piece(t0: float, t1: float, start: ArrayLike, end: ArrayLike) -> CurvePiece:
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    slope = (p1 - p0) / (t1 - t0)

    def point(t: FloatArray) -> FloatArray:
        return p0 + (t - t0)[..., None] * slope

    def tangent(t: FloatArray) -> FloatArray:
        return np.broadcast_to(slope, t.shape + (2,)).copy()

    return CurvePiece(t0, t1, point, tangent)


def arc_piece(
    t0: float, t1: float, center: ArrayLike, radius: float, theta0: float, theta1: float
) -> CurvePiece:
    c = np.asarray(center, dtype=float)
    rate = (theta1 - theta0) / (t1 - t0)

    def point(t: FloatArray) -> FloatArray:
        th = theta0 + rate * (t - t0)
        return c + radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def tangent(t: FloatArray) -> FloatArray:
        th = theta0 + rate * (t - t0)
        return radius * rate * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    return CurvePiece(t0, t1, point, tangent)


@dataclass(frozen=True, eq=False)
class ParamCurve:
    """Parametrization γ:[a,b]→Γ, C² between consecutive piece boundaries.

    ``smooth_breaks`` lists the corners (parameters where γ is only continuous).
    For closed curves a corner at the junction a≡b is reported as ``a``.
    """

    name: str
    pieces: tuple[CurvePiece, ...]
    closed: bool
    smooth_breaks: tuple[float, ...]
    shape: dict[str, float] = field(default_factory=dict)
    _bounds: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        bounds = [self.pieces[0].t0] + [pc.t1 for pc in self.pieces]
        object.__setattr__(self, "_bounds", np.asarray(bounds, dtype=float))

    @property
    def param_interval(self) -> tuple[float, float]:
        return float(self._bounds[0]), float(self._bounds[-1])

    @property
    def piece_bounds(self) -> FloatArray:
        """Parameters where the C² pieces meet, including a and b."""
        return self._bounds.copy()

    @property
    def period(self) -> float:
        a, b = self.param_interval
        return b - a

    def wrap(self, t: ArrayLike) -> FloatArray:
        """Map parameters periodically into [a, b) (closed curves only)."""
        a, b = self.param_interval
        arr = np.asarray(t, dtype=float)
        if not self.closed:
            return arr
        return a + np.mod(arr - a, b - a)

    def _check(self, t: FloatArray) -> FloatArray:
        a, b = self.param_interval
        if np.any(t < a - _PARAM_SLACK) or np.any(t > b + _PARAM_SLACK):
            bad = t[(t < a - _PARAM_SLACK) | (t > b + _PARAM_SLACK)].ravel()[0]
            raise DomainError(f"parameter_out_of_range: t={bad!r} outside [{a!r}, {b!r}]")
        return np.clip(t, a, b)

    def _piece_index(self, t: FloatArray, side: Side) -> NDArray[np.intp]:
        inner = self._bounds[1:-1]
        if side == "right":
            idx = np.searchsorted(inner, t, side="right")
        else:
            idx = np.searchsorted(inner, t, side="left")
        return idx

    def _apply(self, which: str, t: ArrayLike, side: Side, wrap: bool) -> FloatArray:
        arr = np.asarray(t, dtype=float)
        if wrap:
            arr = self.wrap(arr)
        arr = self._check(arr)
        flat = arr.ravel()
        out = np.empty((flat.size, 2))
        idx = self._piece_index(flat, side)
        for k in np.unique(idx):
            sel = idx == k
            fn = getattr(self.pieces[int(k)], which)
            out[sel] = fn(flat[sel])
        return out.reshape(arr.shape + (2,))

    def eval(self, t: ArrayLike, *, wrap: bool = False) -> FloatArray:
        """γ(t) as an array of shape ``t.shape + (2,)``."""
        return self._apply("point", t, "right", wrap)

    def deriv(self, t: ArrayLike, side: Side = "right", *, wrap: bool = False) -> FloatArray:
        """One-sided tangent γ'_r(t) (default) or γ'_l(t)."""
        return self._apply("tangent", t, side, wrap)

    def speed(self, t: ArrayLike, side: Side = "right") -> FloatArray:
        return np.linalg.norm(self.deriv(t, side), axis=-1)

    @property
    def length(self) -> float:
        a, b = self.param_interval
        return arclength(self, a, b)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_point(curve: ParamCurve, t: float, *, wrap: bool = False) -> FloatArray:
    """γ(t); closed curves accept any t when ``wrap`` is set."""
    return curve.eval(np.float64(t), wrap=wrap)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _gauss_on(curve: ParamCurve, lo: float, hi: float) -> float:
    x = 0.5 * (hi - lo) * (_GL_NODES + 1.0) + lo
    return float(0.5 * (hi - lo) * np.dot(_GL_WEIGHTS, curve.speed(x)))


def _adaptive_length(curve: ParamCurve, lo: float, hi: float, tol: float, depth: int = 0) -> float:
    whole = _gauss_on(curve, lo, hi)
    mid = 0.5 * (lo + hi)
    halves = _gauss_on(curve, lo, mid) + _gauss_on(curve, mid, hi)
    if abs(whole - halves) <= tol * max(abs(halves), 1e-300) or depth >= 30:
        return halves
    return _adaptive_length(curve, lo, mid, tol, depth + 1) + _adaptive_length(
        curve, mid, hi, tol, depth + 1
    )


def arclength(curve: ParamCurve, t1: float, t2: float, *, tol: float | None = None) -> float:
    """∫_{t1}^{t2} |γ'(t)| dt by adaptive composite Gauss split at the piece bounds."""
    if t1 > t2:
        raise DomainError(f"reversed_interval: t1={t1!r} > t2={t2!r}")
    a, b = curve.param_interval
    if t1 < a - _PARAM_SLACK or t2 > b + _PARAM_SLACK:
        raise DomainError(f"parameter_out_of_range: [{t1!r}, {t2!r}] not inside [{a!r}, {b!r}]")
    rtol = arclength_tol() if tol is None else tol
    cuts = [t1] + [float(x) for x in curve.piece_bounds if t1 < x < t2] + [t2]
    return float(
        sum(_adaptive_length(curve, lo, hi, rtol) for lo, hi in zip(cuts[:-1], cuts[1:]) if hi > lo)
    )


def param_of_arclength(curve: ParamCurve, s: float, *, xtol: float = 1e-13) -> float:
    """Inverse of s ↦ arclength(a, ·) by bracketed root finding."""
    a, b = curve.param_interval
    total = curve.length
    if s < -_PARAM_SLACK or s > total * (1.0 + 1e-12) + _PARAM_SLACK:
        raise DomainError(f"arclength_out_of_range: s={s!r} outside [0, {total!r}]")
    if s <= 0.0:
        return a
    if s >= total:
        return b
    # Locate the piece first so brentq works on a C² monotone map.
    bounds = curve.piece_bounds
    acc = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        piece_len = arclength(curve, float(lo), float(hi))
        if s <= acc + piece_len:
            target = min(s - acc, piece_len)
            return float(
                brentq(lambda t: arclength(curve, float(lo), t) - target, float(lo), float(hi), xtol=xtol)
            )
        acc += piece_len
    return b


# ---------------------------------------------------------------------------
# Validation by sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveCheck:
    name: str
    closed: bool
    min_speed: float
    speed_ratio: float
    diameter: float
    closure_gap: float
    c_gamma: float
    cusp_free: bool

    @property
    def ok(self) -> bool:
        return (
            self.min_speed > 0.0
            and self.diameter < 1.0
            and (not self.closed or self.closure_gap <= 1e-12)
            and self.cusp_free
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "closed": self.closed,
            "min_speed": self.min_speed,
            "speed_ratio": self.speed_ratio,
            "diameter": self.diameter,
            "closure_gap": self.closure_gap,
            "c_gamma": self.c_gamma,
            "cusp_free": self.cusp_free,
            "ok": self.ok,
        }


def check_curve(curve: ParamCurve, samples: int = 200) -> CurveCheck:
    """Sample the ParamCurve invariants: tangents, diam < 1, closure, bi-Lipschitz, cusps."""
    a, b = curve.param_interval
    t = np.linspace(a, b, samples)
    speeds = np.concatenate([curve.speed(t[:-1], "right"), curve.speed(t[1:], "left")])
    pts = curve.eval(t)
    diffs = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.max(np.linalg.norm(diffs, axis=-1)))
    closure_gap = float(np.linalg.norm(curve.eval(a) - curve.eval(b)))

    total = curve.length
    s = np.linspace(0.0, total, min(samples, 80))
    gl = curve.eval(np.array([param_of_arclength(curve, float(si)) for si in s]))
    ds = np.abs(s[:, None] - s[None, :])
    dist = np.linalg.norm(gl[:, None, :] - gl[None, :, :], axis=-1)
    mask = ds > 0
    if curve.closed:
        mask &= ds <= 0.75 * total
    ratio = dist[mask] / ds[mask]
    c_gamma = float(max(1.0 / ratio.min(), ratio.max())) if ratio.size else 1.0

    cusp_free = True
    for tb in curve.smooth_breaks:
        left_t = b if (curve.closed and tb <= a) else tb
        gl_ = curve.deriv(left_t, "left")
        gr_ = curve.deriv(tb, "right")
        cos = float(np.dot(gl_, gr_) / (np.linalg.norm(gl_) * np.linalg.norm(gr_)))
        if cos <= -1.0 + 1e-8:
            cusp_free = False

    return CurveCheck(
        name=curve.name,
        closed=curve.closed,
        min_speed=float(speeds.min()),
        speed_ratio=float(speeds.max() / speeds.min()),
        diameter=diameter,
        closure_gap=closure_gap,
        c_gamma=c_gamma,
        cusp_free=cusp_free,
    )


# ---------------------------------------------------------------------------
# Built-in geometries
# ---------------------------------------------------------------------------

def circle(radius: float = 0.5) -> ParamCurve:
    piece = arc_piece(0.0, 2.0 * math.pi, (0.0, 0.0), radius, 0.0, 2.0 * math.pi)
    return ParamCurve("circle", (piece,), closed=True, smooth_breaks=(), shape={"radius": radius})


def slit(half_length: float = 0.49) -> ParamCurve:
    """Segment (−L,0)–(L,0) with the identity parametrization t ↦ (t, 0) on [−L, L]."""
    L = half_length
    piece = segment_piece(-L, L, (-L, 0.0), (L, 0.0))
    return ParamCurve("slit", (piece,), closed=False, smooth_breaks=(), shape={"half_length": L})


def square(side: float = 0.4) -> ParamCurve:
    """Axis-aligned square centred at the origin, parametrized by arclength."""
    h = 0.5 * side
    corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
    pieces = tuple(
        segment_piece(k * side, (k + 1) * side, corners[k], corners[(k + 1) % 4]) for k in range(4)
    )
    return ParamCurve(
        "square", pieces, closed=True, smooth_breaks=tuple(k * side for k in range(4)), shape={"side": side}
    )


def pacman(radius: float = 0.4, opening: float = 7.0 * math.pi / 4.0) -> ParamCurve:
    """Circular sector boundary with a reentrant corner at the origin, by arclength."""
    mouth = 0.5 * (2.0 * math.pi - opening)
    arc_len = radius * opening
    start = (radius * math.cos(mouth), radius * math.sin(mouth))
    end = (radius * math.cos(-mouth), radius * math.sin(-mouth))
    t1 = radius
    t2 = radius + arc_len
    t3 = t2 + radius
    pieces = (
        segment_piece(0.0, t1, (0.0, 0.0), start),
        arc_piece(t1, t2, (0.0, 0.0), radius, mouth, mouth + opening),
        segment_piece(t2, t3, end, (0.0, 0.0)),
    )
    return ParamCurve(
        "pacman", pieces, closed=True, smooth_breaks=(0.0, t1, t2), shape={"radius": radius, "opening": opening}
    )


_BUILTINS: dict[str, Callable[[], ParamCurve]] = {
    "circle": circle,
    "slit": slit,
    "square": square,
    "pacman": pacman,
}


def builtin_geometry(name: str) -> ParamCurve:
    curve = geometry_factory(name)()
    check = check_curve(curve, samples=64)
    if not check.ok:
        raise ConfigurationError(f"invalid_geometry: {check.to_dict()}")
    return curve


def geometry_names() -> list[str]:
    return sorted(_BUILTINS)


def geometry_factory(name: str) -> Callable[[], ParamCurve]:
    factory = _BUILTINS.get((name or "").strip().lower())
    if factory is None:
        raise ConfigurationError(f"unknown_geometry: {name!r}. Available: {', '.join(geometry_names())}")
    return factory


def is_closed_geometry(name: str) -> bool:
    return geometry_factory(name)().closed
