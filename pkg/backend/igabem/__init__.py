"""igabem - adaptive isogeometric boundary elements for the 2D single-layer equation."""

__all__ = ["__version__"]

try:
    from importlib.metadata import version as _meta_version

    __version__ = _meta_version("igabem")
except Exception:  # not installed as package (source checkout)
    __version__ = "0.1.0"
