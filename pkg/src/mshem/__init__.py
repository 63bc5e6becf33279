"""P-V curve tracing by multi-stage holomorphic embedding."""

__version__ = "0.1.0"
