"""Plain-text outputs of a run: the iteration CSV and the mesh, indicator and matrix dumps."""
from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from igabem.discretization.mesh import KnotMesh
from igabem.runtime.paths import resolve_output_path
from igabem.runtime.protocol import IterationRecord, RunReport
from igabem.solver.bem import GalerkinSystem

CSV_HEADER = "iter,knots,dofs,mu,eta,energy_error,marked,kappa,seconds"
INDICATOR_HEADER = "node_param,mu2,eta2"


def fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % float(value)


def format_record(rec: IterationRecord) -> str:
    return ",".join(
        [
            fmt(rec.iter),
            fmt(rec.knots),
            fmt(rec.dofs),
            fmt(rec.mu),
            fmt(rec.eta),
            fmt(rec.energy_error),
            fmt(rec.marked),
            fmt(rec.kappa),
            f"{rec.seconds:.3f}",
        ]
    )


def format_report(report: RunReport) -> str:
    lines = [f"# config: {json.dumps(report.config.echo(), sort_keys=True)}", CSV_HEADER]
    lines.extend(format_record(r) for r in report.records)
    if report.fit is not None:
        fit = report.fit
        extra = f" s_energy={fmt(fit.s_energy)}" if fit.s_energy is not None else ""
        lines.append(f"# fit: s={fmt(fit.s)} q={fmt(fit.q)} tail={fit.tail} estimator={fit.estimator}{extra}")
    else:
        lines.append("# fit: insufficient_data")
    lines.append(f"# summary: {json.dumps(report.summary.model_dump(mode='json'), sort_keys=True)}")
    return "\n".join(lines) + "\n"


def _write(path: str, text: str) -> Path:
    target = resolve_output_path(path)
    target.write_text(text, encoding="utf-8")
    return target


def write_report(report: RunReport, path: str) -> Path:
    return _write(path, format_report(report))


def format_mesh(mesh: KnotMesh) -> str:
    lines = [
        f"# p={mesh.p} geometry={mesh.curve.name} closed={str(mesh.closed).lower()} "
        f"knots={mesh.knot_count} dofs={mesh.dim} kappa0={fmt(mesh.kappa0)}"
    ]
    lines.extend(f"{fmt(z)} {int(m)}" for z, m in zip(mesh.node_params.tolist(), mesh.mults.tolist()))
    return "\n".join(lines) + "\n"


def write_mesh(mesh: KnotMesh, path: str) -> Path:
    return _write(path, format_mesh(mesh))


IndicatorRow = tuple[float, float | None, float | None]


def format_indicators(blocks: Sequence[tuple[int, Iterable[IndicatorRow]]]) -> str:
    lines = [INDICATOR_HEADER]
    for iteration, rows in blocks:
        lines.append(f"# iter={iteration}")
        lines.extend(f"{fmt(z)},{fmt(m)},{fmt(e)}" for z, m, e in rows)
    return "\n".join(lines) + "\n"


def write_indicators(blocks: Sequence[tuple[int, Iterable[IndicatorRow]]], path: str) -> Path:
    return _write(path, format_indicators(blocks))


def format_matrix(system: GalerkinSystem) -> str:
    A = system.matrix
    lines = [f"# N={A.shape[0]}"]
    rows, cols = np.nonzero(A)
    lines.extend(f"{i} {j} {fmt(A[i, j])}" for i, j in zip(rows.tolist(), cols.tolist()))
    return "\n".join(lines) + "\n"


def write_matrix(system: GalerkinSystem, path: str) -> Path:
    return _write(path, format_matrix(system))
