"""Resilience capital-investment planning on a power-flow digital twin."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a file bundled under ``gridres/data``."""
    return Path(str(resources.files("gridres") / "data" / name))
