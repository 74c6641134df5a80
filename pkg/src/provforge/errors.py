"""Exception taxonomy shared across the package.

Every error a caller is expected to handle derives from ProvForgeError;
the CLI maps subclasses onto its exit-code contract (1 validation,
2 runtime/deploy failure, 3 I/O).
"""

from __future__ import annotations


class ProvForgeError(Exception):
    """Base class for all provforge errors."""


# --- validation ------------------------------------------------------------


class SchemaViolation(ProvForgeError):
    """A JSON document or record violates its schema.

    ``path`` points at the offending location (e.g. ``activities[1].order_index``).
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnknownStrategy(ProvForgeError):
    """The declared containerization strategy is not a known value."""


class StrategyMismatch(ProvForgeError):
    """Declared strategy disagrees with the group topology."""


class UnresolvedDependency(ProvForgeError):
    """A depends_on target is not registered in the catalog."""


class UnresolvedImage(ProvForgeError):
    """An image identifier does not resolve to a catalog record."""


class ConflictingDigest(ProvForgeError):
    """Same name+tag re-registered with a different digest and no version bump."""


class DuplicateServiceName(ProvForgeError):
    """A provenance service with this name is already registered."""


class UnknownService(ProvForgeError):
    """No provenance service registered under this name."""


class DependencyCycle(ProvForgeError):
    """The image dependency graph contains a cycle."""


class NoDefaultProvService(ProvForgeError):
    """Spec names no provenance service and the catalog has no default."""


class PortCollision(ProvForgeError):
    """Two containers claim the same host port."""


class InvalidPlan(ProvForgeError):
    """A deployment plan violates a structural invariant (named in the message)."""


class EmptyGroup(ProvForgeError):
    """A strategy group holds no runs to summarize."""


class DegenerateInput(ProvForgeError):
    """Statistical input too small or malformed for the requested test."""


# --- runtime ---------------------------------------------------------------


class EngineError(ProvForgeError):
    """Base class for container-engine failures."""


class PullFailed(EngineError):
    """Image pull failed (exit status / stderr in the message)."""


class StartFailed(EngineError):
    """Container failed to start."""


class StopFailed(EngineError):
    """Container failed to stop."""


class ReadinessTimeout(EngineError):
    """Readiness probe did not succeed within its timeout."""


class ExecFailed(EngineError):
    """Command could not be spawned inside a container (nonzero exit is a result, not this)."""


class InvalidTransition(EngineError):
    """Operation applied to a handle in a state that does not permit it."""


class RunFailed(ProvForgeError):
    """A deployment run terminated with outcome=failed.

    ``record`` carries the persisted RunRecord (failures are provenance too).
    """

    def __init__(self, message: str, record=None):
        self.record = record
        super().__init__(message)


class UnknownRun(ProvForgeError):
    """No run (live or recorded) under this id."""


class AlreadyTerminal(ProvForgeError):
    """The run already reached a terminal outcome."""


# --- archives --------------------------------------------------------------


class MissingArtifact(ProvForgeError):
    """A file referenced by the run record vanished from the run directory."""


class CorruptArchive(ProvForgeError):
    """A research-object archive is unreadable or lacks its manifest."""


class IoFailure(ProvForgeError):
    """Persistence failed at the OS level."""
