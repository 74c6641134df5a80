"""Turn a validated workflow spec plus catalog into an executable deployment plan.

Phase ordering contract: pull everything first; start and readiness-test the
provenance stack (DBMS groups, then provenance-service groups); start each
workflow container lazily at its first activity and stop it right after its
last; stop the provenance stack last, in reverse start order. Coarse-grained
plans collapse to pull/start/run*/stop of the single container.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping

from .errors import InvalidPlan, NoDefaultProvService, PortCollision, SchemaViolation
from .models import PortSpec, VolumeSpec, check_keys, get_identifier, get_list, get_str
from .workflow import GroupRole, Strategy, WorkflowSpec, infer_strategy

if TYPE_CHECKING:
    from .catalog import Catalog

AUTO_PORT_BASE = 49152


class PhaseKind(str, Enum):
    PULL = "pull"
    START_CONTAINER = "start_container"
    AWAIT_READY = "await_ready"
    RUN_ACTIVITY = "run_activity"
    STOP_CONTAINER = "stop_container"


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    image: str
    container: str | None = None
    activity: str | None = None

    def describe(self) -> str:
        parts = [self.kind.value, self.container or self.image]
        if self.activity:
            parts.append(self.activity)
        return ":".join(parts)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "image": self.image,
            "container": self.container,
            "activity": self.activity,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "Phase":
        check_keys(doc, path, required=("kind", "image"), optional=("container", "activity"))
        try:
            kind = PhaseKind(get_str(doc, "kind", path))
        except ValueError:
            raise SchemaViolation(f"unknown phase kind {doc.get('kind')!r}", f"{path}.kind") from None
        container = doc.get("container")
        activity = doc.get("activity")
        if container is not None and not isinstance(container, str):
            raise SchemaViolation("expected a container name or null", f"{path}.container")
        if activity is not None and not isinstance(activity, str):
            raise SchemaViolation("expected an activity name or null", f"{path}.activity")
        return cls(kind=kind, image=get_str(doc, "image", path), container=container, activity=activity)


@dataclass(frozen=True)
class DeploymentPlan:
    run_label: str
    strategy: Strategy
    prov_service: str
    phases: tuple[Phase, ...]
    port_assignments: dict[str, tuple[PortSpec, ...]] = field(default_factory=dict)
    volume_assignments: dict[str, tuple[VolumeSpec, ...]] = field(default_factory=dict)
    activity_commands: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def containers(self) -> list[str]:
        return [p.container for p in self.phases if p.kind is PhaseKind.START_CONTAINER]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "run_label": self.run_label,
            "strategy": self.strategy.value,
            "prov_service": self.prov_service,
            "phases": [p.to_json_dict() for p in self.phases],
            "port_assignments": {
                c: [p.to_json_dict() for p in ports]
                for c, ports in sorted(self.port_assignments.items())
            },
            "volume_assignments": {
                c: [v.to_json_dict() for v in vols]
                for c, vols in sorted(self.volume_assignments.items())
            },
            "activity_commands": {
                a: list(argv) for a, argv in sorted(self.activity_commands.items())
            },
        }

    def to_json_text(self, *, indent: int | None = None) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=indent)

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "plan") -> "DeploymentPlan":
        check_keys(
            doc,
            path,
            required=("run_label", "strategy", "prov_service", "phases"),
            optional=("port_assignments", "volume_assignments", "activity_commands"),
        )
        try:
            strategy = Strategy(get_str(doc, "strategy", path))
        except ValueError:
            raise SchemaViolation(f"unknown strategy {doc.get('strategy')!r}", f"{path}.strategy") from None
        ports_doc = doc.get("port_assignments", {})
        vols_doc = doc.get("volume_assignments", {})
        commands_doc = doc.get("activity_commands", {})
        for name, mapping in (("port_assignments", ports_doc), ("volume_assignments", vols_doc), ("activity_commands", commands_doc)):
            if not isinstance(mapping, Mapping):
                raise SchemaViolation("expected an object", f"{path}.{name}")
        for activity, argv in commands_doc.items():
            if not (isinstance(argv, (list, tuple)) and argv and all(isinstance(a, str) for a in argv)):
                raise SchemaViolation(
                    "expected a non-empty argument vector", f"{path}.activity_commands.{activity}"
                )
        return cls(
            run_label=get_str(doc, "run_label", path),
            strategy=strategy,
            prov_service=get_identifier(doc, "prov_service", path),
            phases=tuple(
                Phase.from_json_dict(p, f"{path}.phases[{i}]")
                for i, p in enumerate(get_list(doc, "phases", path))
            ),
            port_assignments={
                c: tuple(
                    PortSpec.from_json_dict(p, f"{path}.port_assignments.{c}[{i}]")
                    for i, p in enumerate(ports)
                )
                for c, ports in ports_doc.items()
            },
            volume_assignments={
                c: tuple(
                    VolumeSpec.from_json_dict(v, f"{path}.volume_assignments.{c}[{i}]")
                    for i, v in enumerate(vols)
                )
                for c, vols in vols_doc.items()
            },
            activity_commands={a: tuple(argv) for a, argv in commands_doc.items()},
        )


def _start_order(spec: WorkflowSpec) -> list:
    """Container start order: DBMS groups, prov-service groups, then workflow
    groups by their first activity's order_index."""
    by_index = {a.name: a.order_index for a in spec.activities}
    dbms = [g for g in spec.container_groups if g.role is GroupRole.DBMS]
    prov = [g for g in spec.container_groups if g.role is GroupRole.PROV_SERVICE]
    workflow = sorted(
        (g for g in spec.container_groups if g.role is GroupRole.WORKFLOW),
        key=lambda g: min(by_index[a] for a in g.activities),
    )
    return dbms + prov + workflow


def _assign_ports(
    containers: list[tuple[str, tuple[PortSpec, ...]]], port_base: int
) -> dict[str, tuple[PortSpec, ...]]:
    used: set[int] = set()
    assignments: dict[str, tuple[PortSpec, ...]] = {}
    for name, ports in containers:
        resolved = []
        for port in ports:
            host = port.host_port
            if host == 0:
                host = port_base
                while host in used:
                    host += 1
                if host > 65535:
                    raise PortCollision("auto-assignment exhausted the port range")
            elif host in used:
                raise PortCollision(f"host port {host} claimed twice (container {name})")
            used.add(host)
            resolved.append(PortSpec(container_port=port.container_port, host_port=host))
        assignments[name] = tuple(resolved)
    return assignments


def _merge_volumes(name: str, *volume_sets: tuple[VolumeSpec, ...]) -> tuple[VolumeSpec, ...]:
    merged: list[VolumeSpec] = []
    by_container_path: dict[str, VolumeSpec] = {}
    for volumes in volume_sets:
        for volume in volumes:
            known = by_container_path.get(volume.container_path)
            if known is None:
                by_container_path[volume.container_path] = volume
                merged.append(volume)
            elif known.host_path != volume.host_path:
                raise SchemaViolation(
                    f"container {name} binds {volume.container_path} from both "
                    f"{known.host_path} and {volume.host_path}"
                )
    return tuple(merged)


def _merge_ports(*port_sets: tuple[PortSpec, ...]) -> tuple[PortSpec, ...]:
    merged: list[PortSpec] = []
    seen: set[int] = set()
    for ports in port_sets:
        for port in ports:
            if port.container_port not in seen:
                seen.add(port.container_port)
                merged.append(port)
    return tuple(merged)


def build_plan(
    spec: WorkflowSpec, catalog: "Catalog", *, port_base: int = AUTO_PORT_BASE
) -> DeploymentPlan:
    """Build the deterministic deployment plan for a catalog-validated spec.

    The declared strategy is re-checked against the topology (fail closed:
    a silently mismatched plan would corrupt container provenance). If the
    spec names no provenance service the catalog default is injected and
    recorded in the plan (NoDefaultProvService when there is none).
    """
    infer_strategy(spec)
    if spec.prov_service is not None:
        service = catalog.get_service(spec.prov_service)
    else:
        service = catalog.default_prov_service()
        if service is None:
            raise NoDefaultProvService(
                f"workflow {spec.workflow_name} names no provenance service and the catalog has no default"
            )

    ordered_groups = _start_order(spec)
    images = {g.name: catalog.get_image(g.image) for g in ordered_groups}
    coarse = spec.strategy is Strategy.COARSE_GRAINED

    # The coarse-grained single container bundles the provenance stack, so it
    # inherits the ports and volumes the stack's images declare.
    prov_stack_images = [catalog.get_image(i) for i in catalog.resolve_image_closure(service.image)]
    volume_assignments: dict[str, tuple[VolumeSpec, ...]] = {}
    port_sets: list[tuple[str, tuple[PortSpec, ...]]] = []
    for group in ordered_groups:
        image = images[group.name]
        volumes = [image.volumes]
        ports = [image.ports]
        if group.role is GroupRole.WORKFLOW:
            volumes.append(spec.datasets)
        if coarse:
            volumes.extend(img.volumes for img in prov_stack_images)
            ports.extend(img.ports for img in prov_stack_images)
        volume_assignments[group.name] = _merge_volumes(group.name, *volumes)
        port_sets.append((group.name, _merge_ports(*ports)))
    port_assignments = _assign_ports(port_sets, port_base)

    phases: list[Phase] = []
    pulled: set[str] = set()
    for group in ordered_groups:
        image_id = images[group.name].image_id
        if image_id not in pulled:
            pulled.add(image_id)
            phases.append(Phase(kind=PhaseKind.PULL, image=image_id))

    if coarse:
        group = ordered_groups[0]
        image_id = images[group.name].image_id
        phases.append(Phase(kind=PhaseKind.START_CONTAINER, image=image_id, container=group.name))
        for activity in spec.activities_in_order():
            phases.append(
                Phase(
                    kind=PhaseKind.RUN_ACTIVITY,
                    image=image_id,
                    container=group.name,
                    activity=activity.name,
                )
            )
        phases.append(Phase(kind=PhaseKind.STOP_CONTAINER, image=image_id, container=group.name))
    else:
        stack_groups = [g for g in ordered_groups if g.role is not GroupRole.WORKFLOW]
        for group in stack_groups:
            image_id = images[group.name].image_id
            phases.append(Phase(kind=PhaseKind.START_CONTAINER, image=image_id, container=group.name))
            phases.append(Phase(kind=PhaseKind.AWAIT_READY, image=image_id, container=group.name))

        activities = spec.activities_in_order()
        last_activity_of = {}
        for activity in activities:
            last_activity_of[spec.group_of(activity.name).name] = activity.name
        running: set[str] = set()
        for activity in activities:
            group = spec.group_of(activity.name)
            image_id = images[group.name].image_id
            if group.name not in running:
                running.add(group.name)
                phases.append(
                    Phase(kind=PhaseKind.START_CONTAINER, image=image_id, container=group.name)
                )
            phases.append(
                Phase(
                    kind=PhaseKind.RUN_ACTIVITY,
                    image=image_id,
                    container=group.name,
                    activity=activity.name,
                )
            )
            if last_activity_of[group.name] == activity.name:
                phases.append(
                    Phase(kind=PhaseKind.STOP_CONTAINER, image=image_id, container=group.name)
                )
        for group in reversed(stack_groups):
            phases.append(
                Phase(
                    kind=PhaseKind.STOP_CONTAINER,
                    image=images[group.name].image_id,
                    container=group.name,
                )
            )

    plan = DeploymentPlan(
        run_label=f"{spec.workflow_name}-{spec.strategy.value}",
        strategy=spec.strategy,
        prov_service=service.service_name,
        phases=tuple(phases),
        port_assignments=port_assignments,
        volume_assignments=volume_assignments,
        activity_commands={
            a.name: (a.script, *a.arguments) for a in spec.activities
        },
    )
    validate_plan(plan)
    return plan


def validate_plan(plan: DeploymentPlan) -> None:
    """Assert every structural plan invariant; raises InvalidPlan naming the violation."""
    started: set[str] = set()
    stopped: set[str] = set()
    pulled: set[str] = set()
    seen_activity = False
    activities: set[str] = set()

    for phase in plan.phases:
        if phase.kind is PhaseKind.PULL:
            if phase.container is not None:
                raise InvalidPlan("pull phase must not name a container")
            if seen_activity or started:
                raise InvalidPlan("pull after container lifecycle began")
            pulled.add(phase.image)
            continue
        if phase.container is None:
            raise InvalidPlan(f"{phase.kind.value} phase missing its container")
        if phase.kind is PhaseKind.START_CONTAINER:
            if phase.container in started:
                raise InvalidPlan(f"container started twice: {phase.container}")
            if phase.image not in pulled:
                raise InvalidPlan(f"start before pull: {phase.container}")
            started.add(phase.container)
        elif phase.kind is PhaseKind.AWAIT_READY:
            if phase.container not in started or phase.container in stopped:
                raise InvalidPlan(f"readiness wait on a container that is not running: {phase.container}")
            if seen_activity:
                raise InvalidPlan("provenance-stack readiness after an activity began")
        elif phase.kind is PhaseKind.RUN_ACTIVITY:
            if phase.activity is None:
                raise InvalidPlan("run_activity phase missing its activity")
            if phase.container not in started:
                raise InvalidPlan(f"activity before start: {phase.activity}")
            if phase.container in stopped:
                raise InvalidPlan(f"activity after stop: {phase.activity}")
            if phase.activity in activities:
                raise InvalidPlan(f"activity scheduled twice: {phase.activity}")
            if plan.activity_commands and phase.activity not in plan.activity_commands:
                raise InvalidPlan(f"activity without a command: {phase.activity}")
            activities.add(phase.activity)
            seen_activity = True
        elif phase.kind is PhaseKind.STOP_CONTAINER:
            if phase.container not in started:
                raise InvalidPlan(f"stop before start: {phase.container}")
            if phase.container in stopped:
                raise InvalidPlan(f"container stopped twice: {phase.container}")
            stopped.add(phase.container)

    if started != stopped:
        raise InvalidPlan(f"unbalanced start/stop: {sorted(started ^ stopped)}")

    host_ports = [p.host_port for ports in plan.port_assignments.values() for p in ports]
    if len(host_ports) != len(set(host_ports)):
        raise InvalidPlan("host port collision in assignments")
    if any(p == 0 for p in host_ports):
        raise InvalidPlan("unassigned auto port in plan")
