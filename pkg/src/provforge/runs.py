"""Container provenance of one workflow execution (the run record)."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .errors import SchemaViolation
from .models import check_keys, get_int, get_list, get_str
from .planner import DeploymentPlan
from .workflow import Strategy


class Outcome(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class ContainerEvent:
    """One lifecycle event (started/ready/stopped/failed/setup), monotonic ms."""

    container: str
    kind: str
    at_ms: int

    def to_json_dict(self) -> dict[str, Any]:
        return {"container": self.container, "kind": self.kind, "at_ms": self.at_ms}

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "ContainerEvent":
        check_keys(doc, path, required=("container", "kind", "at_ms"))
        return cls(
            container=get_str(doc, "container", path),
            kind=get_str(doc, "kind", path),
            at_ms=get_int(doc, "at_ms", path),
        )


@dataclass(frozen=True)
class ActivityTiming:
    """Monotonic start/end and exit code of one activity, plus its log refs."""

    activity: str
    start_ms: int
    end_ms: int
    exit_code: int
    stdout_ref: str | None = None
    stderr_ref: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "activity": self.activity,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "exit_code": self.exit_code,
            "stdout_ref": self.stdout_ref,
            "stderr_ref": self.stderr_ref,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "ActivityTiming":
        check_keys(
            doc,
            path,
            required=("activity", "start_ms", "end_ms", "exit_code"),
            optional=("stdout_ref", "stderr_ref"),
        )
        return cls(
            activity=get_str(doc, "activity", path),
            start_ms=get_int(doc, "start_ms", path),
            end_ms=get_int(doc, "end_ms", path),
            exit_code=get_int(doc, "exit_code", path),
            stdout_ref=doc.get("stdout_ref"),
            stderr_ref=doc.get("stderr_ref"),
        )


@dataclass(frozen=True)
class ImageUse:
    """Identity of one image the run pulled."""

    image_id: str
    digest: str
    registry: str

    def to_json_dict(self) -> dict[str, Any]:
        return {"image_id": self.image_id, "digest": self.digest, "registry": self.registry}

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "ImageUse":
        check_keys(doc, path, required=("image_id", "digest", "registry"))
        return cls(
            image_id=get_str(doc, "image_id", path),
            digest=get_str(doc, "digest", path),
            registry=get_str(doc, "registry", path),
        )


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    workflow_name: str
    strategy: Strategy
    environment_label: str
    plan: DeploymentPlan
    prov_service: str
    outcome: Outcome
    images: tuple[ImageUse, ...] = ()
    container_events: tuple[ContainerEvent, ...] = ()
    activity_timings: tuple[ActivityTiming, ...] = ()
    host_metadata: dict[str, Any] = field(default_factory=dict)
    failure_phase: str | None = None
    failure_reason: str | None = None
    started_at_utc: str = ""
    finished_at_utc: str = ""
    duration_ms: int = 0

    def __post_init__(self):
        for attr in ("images", "container_events", "activity_timings"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def duration_minutes(self) -> float:
        return self.duration_ms / 60000.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "workflow_name": self.workflow_name,
            "strategy": self.strategy.value,
            "environment_label": self.environment_label,
            "plan": self.plan.to_json_dict(),
            "prov_service": self.prov_service,
            "outcome": self.outcome.value,
            "images": [i.to_json_dict() for i in self.images],
            "container_events": [e.to_json_dict() for e in self.container_events],
            "activity_timings": [t.to_json_dict() for t in self.activity_timings],
            "host_metadata": self.host_metadata,
            "failure_phase": self.failure_phase,
            "failure_reason": self.failure_reason,
            "started_at_utc": self.started_at_utc,
            "finished_at_utc": self.finished_at_utc,
            "duration_ms": self.duration_ms,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "run") -> "RunRecord":
        check_keys(
            doc,
            path,
            required=(
                "run_id",
                "workflow_name",
                "strategy",
                "environment_label",
                "plan",
                "prov_service",
                "outcome",
            ),
            optional=(
                "images",
                "container_events",
                "activity_timings",
                "host_metadata",
                "failure_phase",
                "failure_reason",
                "started_at_utc",
                "finished_at_utc",
                "duration_ms",
            ),
        )
        try:
            strategy = Strategy(get_str(doc, "strategy", path))
            outcome = Outcome(get_str(doc, "outcome", path))
        except ValueError as exc:
            raise SchemaViolation(str(exc), path) from None
        metadata = doc.get("host_metadata", {})
        if not isinstance(metadata, Mapping):
            raise SchemaViolation("expected an object", f"{path}.host_metadata")
        return cls(
            run_id=get_str(doc, "run_id", path),
            workflow_name=get_str(doc, "workflow_name", path),
            strategy=strategy,
            environment_label=get_str(doc, "environment_label", path, default=""),
            plan=DeploymentPlan.from_json_dict(doc["plan"], f"{path}.plan"),
            prov_service=get_str(doc, "prov_service", path),
            outcome=outcome,
            images=tuple(
                ImageUse.from_json_dict(i, f"{path}.images[{n}]")
                for n, i in enumerate(get_list(doc, "images", path, default=[]))
            ),
            container_events=tuple(
                ContainerEvent.from_json_dict(e, f"{path}.container_events[{n}]")
                for n, e in enumerate(get_list(doc, "container_events", path, default=[]))
            ),
            activity_timings=tuple(
                ActivityTiming.from_json_dict(t, f"{path}.activity_timings[{n}]")
                for n, t in enumerate(get_list(doc, "activity_timings", path, default=[]))
            ),
            host_metadata=dict(metadata),
            failure_phase=doc.get("failure_phase"),
            failure_reason=doc.get("failure_reason"),
            started_at_utc=get_str(doc, "started_at_utc", path, default=""),
            finished_at_utc=get_str(doc, "finished_at_utc", path, default=""),
            duration_ms=get_int(doc, "duration_ms", path, default=0),
        )
