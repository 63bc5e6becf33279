"""Bundled test cases."""

from importlib import resources


def load_case_text(name: str) -> str:
    """Return the raw text of a bundled case file, e.g. ``case39.m``."""
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")
