"""Paths to the data files bundled with the package."""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def data_path(filename: str) -> Path:
    """Filesystem path of a bundled data file."""
    ref = resources.files("namegrounder").joinpath("data", filename)
    return Path(str(ref))


def default_library_path() -> Path:
    return data_path("objects.json")
