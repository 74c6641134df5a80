"""Workflow specification: parsing, validation, and strategy classification.

The workflow spec is the user's JSON description of activities, container
groups, the containerization strategy, and (optionally) the provenance
service. The declared strategy is cross-checked against the group topology
and the run fails closed on disagreement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping

from .errors import SchemaViolation, StrategyMismatch, UnknownStrategy, UnresolvedImage
from .models import (
    VolumeSpec,
    check_keys,
    get_identifier,
    get_int,
    get_list,
    get_str,
    get_str_list,
)

if TYPE_CHECKING:
    from .catalog import Catalog


class Strategy(str, Enum):
    COARSE_GRAINED = "coarse_grained"
    PARTIAL_MODULAR = "partial_modular"
    PROVENANCE_MODULAR = "provenance_modular"
    FINE_GRAINED = "fine_grained"
    HYBRID_OTHER = "hybrid_other"


class GroupRole(str, Enum):
    WORKFLOW = "workflow"
    PROV_SERVICE = "prov_service"
    DBMS = "dbms"


@dataclass(frozen=True)
class Activity:
    """One sequential workflow step, run inside its group's container."""

    name: str
    script: str
    arguments: tuple[str, ...] = ()
    order_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arguments", tuple(self.arguments))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "script": self.script,
            "arguments": list(self.arguments),
            "order_index": self.order_index,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "Activity":
        check_keys(doc, path, required=("name", "script", "order_index"), optional=("arguments",))
        order_index = get_int(doc, "order_index", path)
        if order_index < 0:
            raise SchemaViolation("order_index must be >= 0", f"{path}.order_index")
        return cls(
            name=get_identifier(doc, "name", path),
            script=get_str(doc, "script", path),
            arguments=get_str_list(doc, "arguments", path, default=[]),
            order_index=order_index,
        )


@dataclass(frozen=True)
class ContainerGroup:
    """A set of activities (or a support service) mapped onto one container image."""

    name: str
    image: str
    activities: tuple[str, ...] = ()
    role: GroupRole = GroupRole.WORKFLOW

    def __post_init__(self):
        object.__setattr__(self, "activities", tuple(self.activities))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "image": self.image,
            "activities": list(self.activities),
            "role": self.role.value,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "ContainerGroup":
        check_keys(doc, path, required=("name", "image"), optional=("activities", "role"))
        role_raw = doc.get("role", GroupRole.WORKFLOW.value)
        try:
            role = GroupRole(role_raw)
        except ValueError:
            choices = ", ".join(r.value for r in GroupRole)
            raise SchemaViolation(f"expected one of [{choices}], got {role_raw!r}", f"{path}.role") from None
        return cls(
            name=get_identifier(doc, "name", path),
            image=get_str(doc, "image", path),
            activities=get_str_list(doc, "activities", path, default=[]),
            role=role,
        )


@dataclass(frozen=True)
class WorkflowSpec:
    workflow_name: str
    strategy: Strategy
    activities: tuple[Activity, ...]
    container_groups: tuple[ContainerGroup, ...]
    prov_service: str | None = None
    datasets: tuple[VolumeSpec, ...] = ()
    environment_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "activities", tuple(self.activities))
        object.__setattr__(self, "container_groups", tuple(self.container_groups))
        object.__setattr__(self, "datasets", tuple(self.datasets))

    def activities_in_order(self) -> tuple[Activity, ...]:
        return tuple(sorted(self.activities, key=lambda a: a.order_index))

    def group_of(self, activity_name: str) -> ContainerGroup:
        for group in self.container_groups:
            if activity_name in group.activities:
                return group
        raise SchemaViolation(f"activity not assigned to any group: {activity_name}")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "workflow_name": self.workflow_name,
            "strategy": self.strategy.value,
            "prov_service": self.prov_service,
            "activities": [a.to_json_dict() for a in self.activities],
            "container_groups": [g.to_json_dict() for g in self.container_groups],
            "datasets": [d.to_json_dict() for d in self.datasets],
            "environment_label": self.environment_label,
        }


def parse_spec(document: str | Mapping[str, Any]) -> WorkflowSpec:
    """Parse and validate a workflow spec document (JSON text or mapping)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"invalid JSON: {exc}") from None
    else:
        doc = document
    path = "spec"
    check_keys(
        doc,
        path,
        required=("workflow_name", "strategy", "activities", "container_groups"),
        optional=("prov_service", "datasets", "environment_label"),
    )

    strategy_raw = get_str(doc, "strategy", path)
    try:
        strategy = Strategy(strategy_raw)
    except ValueError:
        known = ", ".join(s.value for s in Strategy)
        raise UnknownStrategy(f"unknown strategy {strategy_raw!r} (known: {known})") from None

    activities = tuple(
        Activity.from_json_dict(a, f"{path}.activities[{i}]")
        for i, a in enumerate(get_list(doc, "activities", path))
    )
    if not activities:
        raise SchemaViolation("at least one activity required", f"{path}.activities")
    names = [a.name for a in activities]
    if len(set(names)) != len(names):
        raise SchemaViolation("duplicate activity names", f"{path}.activities")
    indices = sorted(a.order_index for a in activities)
    if indices != list(range(len(activities))):
        raise SchemaViolation(
            f"order_index values must be unique and dense 0..{len(activities) - 1}, got {indices}",
            f"{path}.activities",
        )

    groups = tuple(
        ContainerGroup.from_json_dict(g, f"{path}.container_groups[{i}]")
        for i, g in enumerate(get_list(doc, "container_groups", path))
    )
    if not groups:
        raise SchemaViolation("at least one container group required", f"{path}.container_groups")
    group_names = [g.name for g in groups]
    if len(set(group_names)) != len(group_names):
        raise SchemaViolation("duplicate group names", f"{path}.container_groups")

    assigned: dict[str, str] = {}
    for gi, group in enumerate(groups):
        gpath = f"{path}.container_groups[{gi}]"
        if group.role is GroupRole.WORKFLOW and not group.activities:
            raise SchemaViolation("workflow group needs at least one activity", gpath)
        if group.role is not GroupRole.WORKFLOW and group.activities:
            raise SchemaViolation(f"{group.role.value} group must not hold activities", gpath)
        for activity in group.activities:
            if activity not in set(names):
                raise SchemaViolation(f"unknown activity: {activity}", f"{gpath}.activities")
            if activity in assigned:
                raise SchemaViolation(
                    f"activity {activity} assigned to both {assigned[activity]} and {group.name}",
                    f"{gpath}.activities",
                )
            assigned[activity] = group.name
    unassigned = [n for n in names if n not in assigned]
    if unassigned:
        raise SchemaViolation(f"activities not assigned to any group: {unassigned}", f"{path}.container_groups")

    prov_service = doc.get("prov_service")
    if prov_service is not None and not isinstance(prov_service, str):
        raise SchemaViolation("expected a service name or null", f"{path}.prov_service")

    return WorkflowSpec(
        workflow_name=get_identifier(doc, "workflow_name", path),
        strategy=strategy,
        activities=activities,
        container_groups=groups,
        prov_service=prov_service,
        datasets=tuple(
            VolumeSpec.from_json_dict(d, f"{path}.datasets[{i}]")
            for i, d in enumerate(get_list(doc, "datasets", path, default=[]))
        ),
        environment_label=get_str(doc, "environment_label", path, default=""),
    )


def classify_topology(spec: WorkflowSpec) -> Strategy:
    """Strategy implied by the group topology alone (names never matter).

    Precedence: one group is coarse-grained; one group per activity is
    fine-grained; then the two provenance-isolating hybrids; anything else
    is hybrid_other.
    """
    groups = spec.container_groups
    if len(groups) == 1:
        return Strategy.COARSE_GRAINED
    workflow_groups = [g for g in groups if g.role is GroupRole.WORKFLOW]
    other_roles = sorted(g.role.value for g in groups if g.role is not GroupRole.WORKFLOW)
    if len(workflow_groups) == len(spec.activities) and all(
        len(g.activities) == 1 for g in workflow_groups
    ):
        return Strategy.FINE_GRAINED
    if (
        len(groups) == 3
        and len(workflow_groups) == 1
        and other_roles == [GroupRole.DBMS.value, GroupRole.PROV_SERVICE.value]
    ):
        return Strategy.PROVENANCE_MODULAR
    if len(groups) == 2 and len(workflow_groups) == 1 and other_roles == [GroupRole.PROV_SERVICE.value]:
        return Strategy.PARTIAL_MODULAR
    return Strategy.HYBRID_OTHER


def infer_strategy(spec: WorkflowSpec) -> Strategy:
    """Classify the topology and fail closed if it disagrees with the declaration."""
    inferred = classify_topology(spec)
    if inferred is not spec.strategy:
        raise StrategyMismatch(
            f"declared strategy {spec.strategy.value} but group topology implies {inferred.value}"
        )
    return inferred


def validate_against_catalog(spec: WorkflowSpec, catalog: "Catalog") -> list[str]:
    """Resolve every group image and its dependency closure against the catalog.

    Returns the union of closures (first occurrence order, deduplicated).
    """
    resolved: list[str] = []
    seen: set[str] = set()
    for group in spec.container_groups:
        try:
            closure = catalog.resolve_image_closure(group.image)
        except UnresolvedImage as exc:
            raise UnresolvedImage(str(exc)) from None
        for image_id in closure:
            if image_id not in seen:
                seen.add(image_id)
                resolved.append(image_id)
    return resolved
