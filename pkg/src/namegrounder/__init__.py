"""Deterministic tabletop simulator for name-then-instruct language grounding."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ExtractionError,
    FormatError,
    GenerationInfeasibleError,
    LibraryValidationError,
    NameGrounderError,
    NamingSceneError,
    NonUniqueDescriptorError,
    PlacementError,
    StoreError,
    StoreFormatError,
    StoreVersionError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ExtractionError",
    "FormatError",
    "GenerationInfeasibleError",
    "LibraryValidationError",
    "NameGrounderError",
    "NamingSceneError",
    "NonUniqueDescriptorError",
    "PlacementError",
    "StoreError",
    "StoreFormatError",
    "StoreVersionError",
]
