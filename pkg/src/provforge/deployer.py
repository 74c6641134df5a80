"""Execute a deployment plan against an engine and record container provenance.

One orchestration thread owns the run; status queries read an atomically
published immutable snapshot. Cleanup is unconditional: whatever the outcome,
every container this deployer started is stopped (workflow containers first,
provenance stack last so late provenance flushes are not lost), and the run
record is persisted — failures are provenance too.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

from .catalog import Catalog, ImageRecord
from .engine import ContainerHandle, ContainerState
from .errors import (
    AlreadyTerminal,
    EngineError,
    ProvForgeError,
    RunFailed,
    StartFailed,
    StopFailed,
    UnknownRun,
)
from .models import ProbeKind, ReadinessProbe
from .planner import DeploymentPlan, Phase, PhaseKind, validate_plan
from .research_object import build_research_object
from .runs import ActivityTiming, ContainerEvent, ImageUse, Outcome, RunRecord
from .workflow import Strategy, WorkflowSpec

PhaseHook = Callable[[str, Phase, int], None]

_DEFAULT_PROBE_TIMEOUT = 60.0


@dataclass(frozen=True)
class RunStatus:
    """Read-only snapshot of a live or finished run."""

    run_id: str
    live: bool
    current_phase: str | None
    phase_index: int | None
    container_states: dict[str, str]
    elapsed_ms: int
    outcome: Outcome | None


class _Abort(Exception):
    """Internal control flow: abort was requested between phases."""


class _ActivityFailed(Exception):
    def __init__(self, activity: str, exit_code: int):
        self.activity = activity
        self.exit_code = exit_code
        super().__init__(f"activity {activity} exited with code {exit_code}")


class _LiveRun:
    def __init__(self, snapshot: RunStatus):
        self.snapshot = snapshot
        self.abort_requested = threading.Event()
        self.done = threading.Event()
        self.record: RunRecord | None = None


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def new_run_id() -> str:
    """Sortable and collision-safe: UTC second timestamp + 6 random hex chars."""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"{stamp}-{secrets.token_hex(3)}"


class Deployer:
    def __init__(self, catalog: Catalog, engine, *, phase_hook: PhaseHook | None = None):
        self.catalog = catalog
        self.engine = engine
        self.phase_hook = phase_hook
        self._runs: dict[str, _LiveRun] = {}

    # --- public API -----------------------------------------------------------

    def deploy(
        self,
        plan: DeploymentPlan,
        *,
        spec_document: WorkflowSpec | Mapping[str, Any] | None = None,
        no_wrap: bool = False,
    ) -> RunRecord:
        """Run every phase in order and persist the run record.

        Raises RunFailed (record attached) when the outcome is failed; returns
        the record for succeeded and aborted runs. On success the research
        object is written into the run directory unless ``no_wrap``.
        """
        validate_plan(plan)
        service = self.catalog.get_service(plan.prov_service)
        run_id = new_run_id()
        run_dir = self.catalog.run_dir(run_id)
        (run_dir / "logs").mkdir(parents=True, exist_ok=True)
        (run_dir / "artifacts").mkdir(exist_ok=True)
        (run_dir / "plan.json").write_text(plan.to_json_text(indent=2) + "\n")
        spec_dict = spec_document.to_json_dict() if isinstance(spec_document, WorkflowSpec) else spec_document
        if spec_dict is not None:
            (run_dir / "artifacts" / "workflow_spec.json").write_text(
                json.dumps(spec_dict, indent=2, sort_keys=True) + "\n"
            )

        self.engine.prepare_run(run_id, run_dir / "logs")
        t0 = self.engine.now()
        started_wall = _utc_now_iso()
        live = _LiveRun(
            RunStatus(
                run_id=run_id,
                live=True,
                current_phase=None,
                phase_index=None,
                container_states={},
                elapsed_ms=0,
                outcome=None,
            )
        )
        self._runs[run_id] = live

        def ms() -> int:
            return round((self.engine.now() - t0) * 1000)

        records: dict[str, ImageRecord] = {}
        handles: dict[str, ContainerHandle] = {}
        start_order: list[str] = []
        events: list[ContainerEvent] = []
        timings: list[ActivityTiming] = []
        images: list[ImageUse] = []
        container_meta: dict[str, Any] = {}
        outcome = Outcome.SUCCEEDED
        failure_phase: str | None = None
        failure_reason: str | None = None

        def publish(phase: Phase | None, index: int | None) -> None:
            live.snapshot = RunStatus(
                run_id=run_id,
                live=True,
                current_phase=phase.describe() if phase else None,
                phase_index=index,
                container_states={c: h.state.value for c, h in handles.items()},
                elapsed_ms=ms(),
                outcome=None,
            )

        current_phase: Phase | None = None
        unexpected: BaseException | None = None
        try:
            for index, phase in enumerate(plan.phases):
                current_phase = phase
                publish(phase, index)
                if self.phase_hook is not None:
                    self.phase_hook(run_id, phase, index)
                if live.abort_requested.is_set():
                    raise _Abort()
                self._execute_phase(
                    phase, plan, service, records, handles, start_order, events, timings, images, ms
                )
        except _Abort:
            outcome = Outcome.ABORTED
            failure_phase = current_phase.describe() if current_phase else None
            failure_reason = "abort requested"
        except _ActivityFailed as exc:
            outcome = Outcome.FAILED
            failure_phase = current_phase.describe() if current_phase else None
            failure_reason = str(exc)
        except ProvForgeError as exc:
            outcome = Outcome.FAILED
            failure_phase = current_phase.describe() if current_phase else None
            failure_reason = str(exc)
        except Exception as exc:  # hook or engine defect: keep the provenance, re-raise after
            outcome = Outcome.FAILED
            failure_phase = current_phase.describe() if current_phase else None
            failure_reason = f"{type(exc).__name__}: {exc}"
            unexpected = exc
        finally:
            self._cleanup(handles, start_order, events, ms)
            for container, handle in handles.items():
                container_meta[container] = self.engine.collect_metadata(handle)

        record = RunRecord(
            run_id=run_id,
            workflow_name=plan.run_label.rsplit("-", 1)[0],
            strategy=plan.strategy,
            environment_label="",
            plan=plan,
            prov_service=plan.prov_service,
            outcome=outcome,
            images=tuple(images),
            container_events=tuple(events),
            activity_timings=tuple(timings),
            host_metadata={**self.engine.engine_info(), "containers": container_meta},
            failure_phase=failure_phase,
            failure_reason=failure_reason,
            started_at_utc=started_wall,
            finished_at_utc=_utc_now_iso(),
            duration_ms=ms(),
        )
        if spec_dict is not None:
            record = replace(
                record,
                workflow_name=str(spec_dict.get("workflow_name", record.workflow_name)),
                environment_label=str(spec_dict.get("environment_label", "")),
            )
        (run_dir / "record.json").write_text(
            json.dumps(record.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
        self.catalog.record_run(record)
        live.record = record
        live.snapshot = RunStatus(
            run_id=run_id,
            live=False,
            current_phase=None,
            phase_index=None,
            container_states={c: h.state.value for c, h in handles.items()},
            elapsed_ms=record.duration_ms,
            outcome=outcome,
        )
        live.done.set()

        if unexpected is not None:
            raise unexpected
        if outcome is Outcome.FAILED:
            raise RunFailed(f"run {run_id} failed at {failure_phase}: {failure_reason}", record)
        if outcome is Outcome.SUCCEEDED and not no_wrap:
            build_research_object(record, run_dir / "research_object.provro", self.catalog)
        return record

    def status(self, run_id: str) -> RunStatus:
        live = self._runs.get(run_id)
        if live is not None:
            return live.snapshot
        record = self.catalog.get_run(run_id)  # raises UnknownRun
        return terminal_status(record)

    def request_abort(self, run_id: str) -> None:
        live = self._runs.get(run_id)
        if live is None:
            raise UnknownRun(f"no live run with id: {run_id}")
        if live.done.is_set():
            raise AlreadyTerminal(f"run {run_id} already finished")
        live.abort_requested.set()

    def abort_run(self, run_id: str, wait_timeout: float = 30.0) -> RunRecord:
        """Request an abort and wait for the orchestration to wind down.

        Call from a different thread than deploy() (the phase hook can use
        request_abort directly instead).
        """
        self.request_abort(run_id)
        live = self._runs[run_id]
        if not live.done.wait(wait_timeout):
            raise ProvForgeError(f"run {run_id} did not stop within {wait_timeout}s")
        assert live.record is not None
        return live.record

    # --- internals -------------------------------------------------------------

    def _execute_phase(
        self,
        phase: Phase,
        plan: DeploymentPlan,
        service,
        records: dict[str, ImageRecord],
        handles: dict[str, ContainerHandle],
        start_order: list[str],
        events: list[ContainerEvent],
        timings: list[ActivityTiming],
        images: list[ImageUse],
        ms,
    ) -> None:
        if phase.kind is PhaseKind.PULL:
            record = self.catalog.get_image(phase.image)
            records[record.image_id] = record
            self.engine.pull_image(record)
            images.append(
                ImageUse(image_id=record.image_id, digest=record.digest, registry=record.registry)
            )
            return

        container = phase.container
        if phase.kind is PhaseKind.START_CONTAINER:
            record = records.get(phase.image) or self.catalog.get_image(phase.image)
            try:
                handle = self.engine.start_container(
                    record,
                    container,
                    volumes=plan.volume_assignments.get(container, ()),
                    ports=plan.port_assignments.get(container, ()),
                    cmd=record.start_command,
                )
            except EngineError:
                events.append(ContainerEvent(container=container, kind="failed", at_ms=ms()))
                raise
            handles[container] = handle
            start_order.append(container)
            events.append(ContainerEvent(container=container, kind="started", at_ms=ms()))
            if plan.strategy is Strategy.COARSE_GRAINED:
                self._start_bundled_prov_stack(plan, service, record, handle, events, ms)
            return

        if phase.kind is PhaseKind.AWAIT_READY:
            handle = handles[container]
            probe = self._probe_for(plan, service, phase)
            try:
                self.engine.await_ready(handle, probe)
            except EngineError:
                events.append(ContainerEvent(container=container, kind="failed", at_ms=ms()))
                raise
            events.append(ContainerEvent(container=container, kind="ready", at_ms=ms()))
            return

        if phase.kind is PhaseKind.RUN_ACTIVITY:
            handle = handles[container]
            argv = list(plan.activity_commands[phase.activity])
            start_ms = ms()
            result = self.engine.run_in_container(handle, argv, log_name=phase.activity)
            timings.append(
                ActivityTiming(
                    activity=phase.activity,
                    start_ms=start_ms,
                    end_ms=ms(),
                    exit_code=result.exit_code,
                    stdout_ref=self._relative_log_ref(result.stdout_ref),
                    stderr_ref=self._relative_log_ref(result.stderr_ref),
                )
            )
            if result.exit_code != 0:
                raise _ActivityFailed(phase.activity, result.exit_code)
            return

        if phase.kind is PhaseKind.STOP_CONTAINER:
            handle = handles[container]
            was_stopped = handle.state in (ContainerState.STOPPED, ContainerState.FAILED)
            try:
                self.engine.stop_container(handle)
            except StopFailed:
                events.append(ContainerEvent(container=container, kind="failed", at_ms=ms()))
                raise
            if not was_stopped:
                events.append(ContainerEvent(container=container, kind="stopped", at_ms=ms()))
            return

        raise ProvForgeError(f"unknown phase kind: {phase.kind}")

    def _start_bundled_prov_stack(self, plan, service, container_image, handle, events, ms) -> None:
        """Coarse-grained: bring the provenance stack up inside the single container.

        The stack images' start commands run as setup execs in dependency
        order before any activity (the DBMS precedes the service in the
        closure)."""
        for image_id in self.catalog.resolve_image_closure(service.image):
            if image_id == container_image.image_id:
                continue
            image = self.catalog.get_image(image_id)
            if not image.start_command:
                continue
            result = self.engine.run_in_container(
                handle, image.start_command, log_name=f"setup-{image.name}"
            )
            events.append(
                ContainerEvent(container=handle.container_name, kind="setup", at_ms=ms())
            )
            if result.exit_code != 0:
                raise StartFailed(
                    f"provenance stack setup {image_id} exited with code {result.exit_code}"
                )

    def _probe_for(self, plan: DeploymentPlan, service, phase: Phase) -> ReadinessProbe:
        service_image = self.catalog.get_image(service.image)
        if phase.image == service_image.image_id and service.readiness is not None:
            return service.readiness
        ports = plan.port_assignments.get(phase.container, ())
        if ports:
            return ReadinessProbe(
                kind=ProbeKind.TCP_PORT,
                target=ports[0].container_port,
                timeout=_DEFAULT_PROBE_TIMEOUT,
            )
        return ReadinessProbe(kind=ProbeKind.COMMAND, target=("true",), timeout=_DEFAULT_PROBE_TIMEOUT)

    @staticmethod
    def _relative_log_ref(ref: str | None) -> str | None:
        if ref is None:
            return None
        path = Path(ref)
        return str(Path("logs") / path.name)

    def _cleanup(self, handles, start_order, events, ms) -> None:
        """Stop everything we started, newest first (provenance stack last)."""
        for container in reversed(start_order):
            handle = handles[container]
            if handle.state in (ContainerState.STOPPED, ContainerState.FAILED):
                continue
            try:
                self.engine.stop_container(handle)
                events.append(ContainerEvent(container=container, kind="stopped", at_ms=ms()))
            except (StopFailed, EngineError):
                events.append(ContainerEvent(container=container, kind="failed", at_ms=ms()))


def terminal_status(record: RunRecord) -> RunStatus:
    states: dict[str, str] = {}
    event_state = {
        "started": ContainerState.RUNNING.value,
        "setup": ContainerState.RUNNING.value,
        "ready": ContainerState.READY.value,
        "stopped": ContainerState.STOPPED.value,
        "failed": ContainerState.FAILED.value,
    }
    for event in record.container_events:
        states[event.container] = event_state.get(event.kind, states.get(event.container, ""))
    return RunStatus(
        run_id=record.run_id,
        live=False,
        current_phase=None,
        phase_index=None,
        container_states=states,
        elapsed_ms=record.duration_ms,
        outcome=record.outcome,
    )


def deploy(plan: DeploymentPlan, engine, catalog: Catalog, **kwargs) -> RunRecord:
    """One-shot convenience wrapper around Deployer."""
    return Deployer(catalog, engine).deploy(plan, **kwargs)
