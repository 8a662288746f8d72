"""Exception types shared across the simulator."""
from __future__ import annotations


class NameGrounderError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(NameGrounderError):
    """A data file could not be parsed.

    Carries enough location info (line number or byte offset, field name)
    to point at the offending part of the file.
    """

    def __init__(self, message: str, *, line: int | None = None,
                 field: str | None = None, offset: int | None = None):
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        if offset is not None:
            parts.append(f"offset {offset}")
        super().__init__(": ".join(parts))
        self.line = line
        self.field = field
        self.offset = offset


class LibraryValidationError(NameGrounderError):
    """An object library entry violates an invariant (duplicate id, empty colors, ...)."""


class PlacementError(NameGrounderError):
    """Scene generation could not place the requested object count without overlap."""


class NonUniqueDescriptorError(NameGrounderError):
    """No descriptor uniquely identifies the target; carries the indistinguishable set."""

    def __init__(self, target: str, candidates: tuple[str, ...]):
        super().__init__(
            f"no unique referring expression for {target!r}; "
            f"indistinguishable candidates: {sorted(candidates)}"
        )
        self.target = target
        self.candidates = tuple(candidates)


class GenerationInfeasibleError(NameGrounderError):
    """The requested instruction kind cannot be generated for this scene."""


class ExtractionError(NameGrounderError):
    """A matched template produced an unusable slot (counts as a PR failure downstream)."""


class NamingSceneError(NameGrounderError):
    """A naming-view capture was requested for a scene that is not single-object."""


class StoreError(NameGrounderError):
    """Invalid memory-store operation (empty name, empty observations)."""


class StoreFormatError(FormatError):
    """Memory store file is corrupt; no partial store is returned."""


class StoreVersionError(NameGrounderError):
    """Memory store file was written by an incompatible format version."""


class ConfigError(NameGrounderError):
    """Experiment or CLI configuration is invalid."""
