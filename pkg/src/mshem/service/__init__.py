"""HTTP service wrapping the curve-tracing toolkit."""

from .app import create_app

__all__ = ["create_app"]
