"""Output path resolution for reports and dumps."""
from __future__ import annotations

import os
from pathlib import Path

from igabem import config
from igabem.errors import ConfigurationError

_TOO_BROAD_ROOTS = frozenset({
    "/", "/nix", "/usr", "/var", "/opt", "/run", "/srv", "/mnt",
    "/proc", "/sys", "/dev", "/boot", "/lib", "/lib64", "/bin", "/sbin", "/snap", "/home", "/etc",
})


def is_root_too_broad(directory: Path | str) -> bool:
    resolved = Path(directory).resolve()
    return str(resolved) in _TOO_BROAD_ROOTS


def resolve_output_path(rel: str, *, base: Path | str | None = None) -> Path:
    """Absolute path for an output file, with its parent directory created.

    Rules:
    - Home-relative paths (~/) are expanded.
    - Relative paths are resolved against *base* (default ``config.output_dir()``).
    - Files directly inside a system root (``/``, ``/usr``, ...) are refused.
    """
    if not rel or not rel.strip():
        raise ConfigurationError("invalid_path: empty output path")
    p = Path(rel.strip()).expanduser()
    if not p.is_absolute():
        root = Path(os.path.expanduser(str(base))) if base is not None else Path(config.output_dir())
        p = root / p
    res = p.resolve()
    if res.is_dir():
        raise ConfigurationError(f"invalid_path: '{rel}' is a directory")
    if is_root_too_broad(res.parent):
        raise ConfigurationError(
            f"invalid_path: refusing to write '{res.name}' directly into {res.parent}. "
            "Use a project or scratch directory instead."
        )
    res.parent.mkdir(parents=True, exist_ok=True)
    return res
