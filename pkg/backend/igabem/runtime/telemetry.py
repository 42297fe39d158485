"""Telemetry emitter: per-level progress of adaptive runs, and stderr debug lines."""
from __future__ import annotations

import sys
from collections.abc import Callable
from typing import Any

from igabem.config import debug_enabled


def debug_log(scope: str, msg: str) -> None:
    if not debug_enabled():
        return
    sys.stderr.write(f"DEBUG [{scope}]: {msg}\n")
    sys.stderr.flush()


def build_iteration_meta(
    *,
    mode: str,
    iteration: int,
    knots: int,
    dofs: int,
    estimator: str,
    value: float,
    marked: int,
    seconds: float,
    energy_error: float | None = None,
) -> dict[str, Any]:
    meta: dict[str, Any] = {
        "iteration": {
            "mode": mode,
            "index": iteration,
            "knots": knots,
            "dofs": dofs,
            "estimator": estimator,
            "value": value,
            "marked": marked,
            "seconds": round(seconds, 3),
        }
    }
    if energy_error is not None:
        meta["energy_error"] = energy_error
    return meta


Event = dict[str, Any]


class TelemetryEmitter:
    def __init__(self, *, emit_event: Callable[[Event], None] | None = None) -> None:
        self._emit_event = emit_event
        self.events: list[Event] = []

    def emit_iteration(
        self,
        *,
        mode: str,
        iteration: int,
        knots: int,
        dofs: int,
        estimator: str,
        value: float,
        marked: int,
        seconds: float,
        energy_error: float | None = None,
    ) -> None:
        meta = build_iteration_meta(
            mode=mode,
            iteration=iteration,
            knots=knots,
            dofs=dofs,
            estimator=estimator,
            value=value,
            marked=marked,
            seconds=seconds,
            energy_error=energy_error,
        )
        event = {"channel": "iteration", "meta": meta}
        self.events.append(event)
        if self._emit_event is not None:
            self._emit_event(event)

    def emit_stop(self, *, reason: str, iteration: int) -> None:
        event = {"channel": "stop", "meta": {"reason": reason, "iteration": iteration}}
        self.events.append(event)
        if self._emit_event is not None:
            self._emit_event(event)


def stderr_progress(event: Event) -> None:
    """One-line summary per event, for the CLI."""
    meta = event.get("meta", {})
    if event.get("channel") == "iteration":
        it = meta["iteration"]
        line = (
            f"[{it['mode']}] it={it['index']} knots={it['knots']} dofs={it['dofs']} "
            f"{it['estimator']}={it['value']:.3e} marked={it['marked']} ({it['seconds']}s)"
        )
    else:
        line = f"[stop] {meta.get('reason')} after it={meta.get('iteration')}"
    sys.stderr.write(line + "\n")
    sys.stderr.flush()
