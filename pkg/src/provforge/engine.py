"""Container runtimes behind one contract.

Two engines are shipped:

* ``SimulatedEngine`` executes plans against a scripted scenario on a virtual
  monotonic clock that only advances when events consume time. A scenario
  plus a seed always reproduces the same handle timeline, which is what the
  end-to-end and fault-injection tests run on.
* ``ExternalEngine`` drives a real container CLI through user-configurable
  argument-vector templates (presets ship for Docker-style and
  Singularity/Apptainer-style runtimes). Templates render to vectors, never
  shell strings.

Handles follow created -> running -> ready -> stopped, with failed reachable
from any non-stopped state. Activities may run in ``running`` or ``ready``
(workflow containers are not readiness-probed).
"""

from __future__ import annotations

import json
import platform
import socket
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .catalog import ImageRecord
from .errors import (
    EngineError,
    ExecFailed,
    InvalidTransition,
    PortCollision,
    PullFailed,
    ReadinessTimeout,
    SchemaViolation,
    StartFailed,
    StopFailed,
)
from .models import (
    PortSpec,
    ProbeKind,
    ReadinessProbe,
    VolumeSpec,
    check_keys,
    get_bool,
    get_number,
    get_str,
)

PLACEHOLDERS = ("{image}", "{name}", "{volumes}", "{ports}", "{cmd}")

DOCKER_TEMPLATES: dict[str, tuple[str, ...]] = {
    "pull": ("docker", "pull", "{image}"),
    "start": ("docker", "run", "-d", "--name", "{name}", "{ports}", "{volumes}", "{image}", "{cmd}"),
    "exec": ("docker", "exec", "{name}", "{cmd}"),
    "stop": ("docker", "stop", "{name}"),
    "inspect": ("docker", "inspect", "{name}"),
}

SINGULARITY_TEMPLATES: dict[str, tuple[str, ...]] = {
    "pull": ("singularity", "pull", "{image}"),
    "start": ("singularity", "instance", "start", "{volumes}", "{image}", "{name}", "{cmd}"),
    "exec": ("singularity", "exec", "instance://{name}", "{cmd}"),
    "stop": ("singularity", "instance", "stop", "{name}"),
    "inspect": ("singularity", "instance", "list", "--json", "{name}"),
}

_FLAVORS = {
    "docker": (DOCKER_TEMPLATES, "-v", "-p"),
    "singularity": (SINGULARITY_TEMPLATES, "--bind", None),
}

_MODE_SUFFIX = {"read_only": "ro", "read_write": "rw"}


class ContainerState(str, Enum):
    CREATED = "created"
    RUNNING = "running"
    READY = "ready"
    STOPPED = "stopped"
    FAILED = "failed"


_ALLOWED_TRANSITIONS = {
    (ContainerState.CREATED, ContainerState.RUNNING),
    (ContainerState.RUNNING, ContainerState.READY),
    (ContainerState.RUNNING, ContainerState.STOPPED),
    (ContainerState.READY, ContainerState.STOPPED),
    (ContainerState.CREATED, ContainerState.FAILED),
    (ContainerState.RUNNING, ContainerState.FAILED),
    (ContainerState.READY, ContainerState.FAILED),
}


@dataclass
class ContainerHandle:
    """Mutable view of one container the engine manages."""

    container_name: str
    image: str
    state: ContainerState = ContainerState.CREATED
    started_at: float | None = None
    stopped_at: float | None = None
    host_metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ExecResult:
    exit_code: int
    duration: float
    stdout_ref: str | None = None
    stderr_ref: str | None = None


def _transition(handle: ContainerHandle, new: ContainerState) -> None:
    if (handle.state, new) not in _ALLOWED_TRANSITIONS:
        raise InvalidTransition(
            f"container {handle.container_name}: illegal transition {handle.state.value} -> {new.value}"
        )
    handle.state = new


def render_template(
    template: Sequence[str],
    *,
    image: str = "",
    name: str = "",
    volumes: Sequence[VolumeSpec] = (),
    ports: Sequence[PortSpec] = (),
    cmd: Sequence[str] = (),
    volume_flag: str | None = "-v",
    port_flag: str | None = "-p",
) -> list[str]:
    """Expand a lifecycle template into a concrete argument vector.

    ``{volumes}``/``{ports}``/``{cmd}`` tokens expand to zero or more
    elements; ``{image}``/``{name}`` substitute in place. Any placeholder left
    unexpanded is an error (never pass vectors through a shell).
    """
    rendered: list[str] = []
    for token in template:
        if token == "{volumes}":
            for volume in volumes:
                binding = f"{volume.host_path}:{volume.container_path}:{_MODE_SUFFIX[volume.mode.value]}"
                rendered.extend([volume_flag, binding] if volume_flag else [binding])
        elif token == "{ports}":
            if port_flag:
                for port in ports:
                    rendered.extend([port_flag, f"{port.host_port}:{port.container_port}"])
        elif token == "{cmd}":
            rendered.extend(cmd)
        else:
            rendered.append(token.replace("{image}", image).replace("{name}", name))
    for element in rendered:
        for placeholder in PLACEHOLDERS:
            if placeholder in element:
                raise EngineError(f"unexpanded placeholder {placeholder} in rendered command")
    return rendered


# --- simulated engine --------------------------------------------------------


@dataclass(frozen=True)
class SimImage:
    present: bool = True
    pull_latency: float | None = None

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "SimImage":
        check_keys(doc, path, optional=("present", "pull_latency"))
        latency = doc.get("pull_latency")
        return cls(
            present=get_bool(doc, "present", path, default=True),
            pull_latency=get_number(doc, "pull_latency", path) if latency is not None else None,
        )


@dataclass(frozen=True)
class SimContainer:
    start_latency: float | None = None
    ready_after: float | None = None
    never_ready: bool = False
    fail_start: bool = False
    fail_stop: bool = False

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "SimContainer":
        check_keys(
            doc, path, optional=("start_latency", "ready_after", "never_ready", "fail_start", "fail_stop")
        )
        return cls(
            start_latency=get_number(doc, "start_latency", path) if "start_latency" in doc else None,
            ready_after=get_number(doc, "ready_after", path) if "ready_after" in doc else None,
            never_ready=get_bool(doc, "never_ready", path, default=False),
            fail_start=get_bool(doc, "fail_start", path, default=False),
            fail_stop=get_bool(doc, "fail_stop", path, default=False),
        )


@dataclass(frozen=True)
class SimCommand:
    duration: float | None = None
    exit_code: int = 0
    stdout: str = ""
    stderr: str = ""
    spawn_failure: bool = False

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str) -> "SimCommand":
        check_keys(doc, path, optional=("duration", "exit_code", "stdout", "stderr", "spawn_failure"))
        return cls(
            duration=get_number(doc, "duration", path) if "duration" in doc else None,
            exit_code=int(get_number(doc, "exit_code", path, default=0)),
            stdout=get_str(doc, "stdout", path, default=""),
            stderr=get_str(doc, "stderr", path, default=""),
            spawn_failure=get_bool(doc, "spawn_failure", path, default=False),
        )


@dataclass(frozen=True)
class SimScenario:
    """Scripted behavior for a simulated run; unspecified entries use defaults."""

    images: dict[str, SimImage] = field(default_factory=dict)
    containers: dict[str, SimContainer] = field(default_factory=dict)
    commands: dict[str, SimCommand] = field(default_factory=dict)
    default_pull_latency: float = 0.0
    default_start_latency: float = 0.0
    default_ready_after: float = 0.0
    default_duration: float = 0.0
    op_tick: float = 0.001  # minimal clock cost of a lifecycle operation
    seed: int = 0

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "scenario") -> "SimScenario":
        check_keys(
            doc,
            path,
            optional=(
                "images",
                "containers",
                "commands",
                "default_pull_latency",
                "default_start_latency",
                "default_ready_after",
                "default_duration",
                "op_tick",
                "seed",
            ),
        )
        return cls(
            images={
                k: SimImage.from_json_dict(v, f"{path}.images.{k}")
                for k, v in doc.get("images", {}).items()
            },
            containers={
                k: SimContainer.from_json_dict(v, f"{path}.containers.{k}")
                for k, v in doc.get("containers", {}).items()
            },
            commands={
                k: SimCommand.from_json_dict(v, f"{path}.commands.{k}")
                for k, v in doc.get("commands", {}).items()
            },
            default_pull_latency=get_number(doc, "default_pull_latency", path, default=0.0),
            default_start_latency=get_number(doc, "default_start_latency", path, default=0.0),
            default_ready_after=get_number(doc, "default_ready_after", path, default=0.0),
            default_duration=get_number(doc, "default_duration", path, default=0.0),
            op_tick=get_number(doc, "op_tick", path, default=0.001),
            seed=int(get_number(doc, "seed", path, default=0)),
        )


class SimulatedEngine:
    """Deterministic engine on a virtual monotonic clock."""

    name = "simulated/1"

    def __init__(self, scenario: SimScenario | None = None, pull_policy: str = "if_missing"):
        self.scenario = scenario or SimScenario()
        self.pull_policy = pull_policy
        self._clock = 0.0
        self._pulled: set[str] = set()
        self._used_host_ports: dict[int, str] = {}
        self._info: dict[str, dict[str, Any]] = {}
        self._log_root: Path | None = None
        self._run_id = ""

    # clock ------------------------------------------------------------------

    def now(self) -> float:
        return self._clock

    def _advance(self, seconds: float) -> None:
        if seconds < 0:
            raise EngineError("virtual clock cannot move backwards")
        self._clock += seconds

    # scenario lookups ---------------------------------------------------------

    def _image_cfg(self, record: ImageRecord) -> SimImage:
        return self.scenario.images.get(record.image_id) or self.scenario.images.get(
            record.name, SimImage()
        )

    def _container_cfg(self, name: str) -> SimContainer:
        return self.scenario.containers.get(name, SimContainer())

    def _command_cfg(self, argv: Sequence[str]) -> SimCommand:
        for key in (" ".join(argv), argv[0], Path(argv[0]).name):
            if key in self.scenario.commands:
                return self.scenario.commands[key]
        return SimCommand()

    # contract -----------------------------------------------------------------

    def prepare_run(self, run_id: str, log_root: str | Path) -> None:
        self._run_id = run_id
        self._log_root = Path(log_root)
        self._log_root.mkdir(parents=True, exist_ok=True)

    def engine_info(self) -> dict[str, Any]:
        return {"engine": self.name, "hostname": "simhost", "kernel": "sim"}

    def pull_image(self, record: ImageRecord) -> None:
        if self.pull_policy == "if_missing" and record.image_id in self._pulled:
            return
        cfg = self._image_cfg(record)
        self._advance(self.scenario.op_tick)
        if not cfg.present:
            raise PullFailed(
                f"pull {record.image_id}: exit 1: simulated registry has no such image"
            )
        latency = cfg.pull_latency if cfg.pull_latency is not None else self.scenario.default_pull_latency
        self._advance(latency)
        self._pulled.add(record.image_id)

    def start_container(
        self,
        record: ImageRecord,
        name: str,
        volumes: Sequence[VolumeSpec] = (),
        ports: Sequence[PortSpec] = (),
        cmd: Sequence[str] = (),
    ) -> ContainerHandle:
        if record.image_id not in self._pulled:
            raise StartFailed(f"start {name}: image {record.image_id} was never pulled")
        for port in ports:
            if port.host_port in self._used_host_ports:
                raise PortCollision(
                    f"host port {port.host_port} already bound by {self._used_host_ports[port.host_port]}"
                )
        cfg = self._container_cfg(name)
        self._advance(self.scenario.op_tick)
        if cfg.fail_start:
            raise StartFailed(f"start {name}: simulated start failure")
        latency = cfg.start_latency if cfg.start_latency is not None else self.scenario.default_start_latency
        self._advance(latency)
        handle = ContainerHandle(container_name=name, image=record.image_id)
        _transition(handle, ContainerState.RUNNING)
        handle.started_at = self._clock
        handle.host_metadata = dict(self.engine_info())
        for port in ports:
            self._used_host_ports[port.host_port] = name
        self._info[name] = {
            "digest": record.digest,
            "ports": [p.to_json_dict() for p in ports],
            "volumes": [v.to_json_dict() for v in volumes],
            "cmd": list(cmd),
        }
        return handle

    def await_ready(self, handle: ContainerHandle, probe: ReadinessProbe) -> None:
        if handle.state is ContainerState.READY:
            return
        if handle.state is not ContainerState.RUNNING:
            raise InvalidTransition(
                f"cannot probe readiness of {handle.container_name} in state {handle.state.value}"
            )
        cfg = self._container_cfg(handle.container_name)
        ready_after = cfg.ready_after if cfg.ready_after is not None else self.scenario.default_ready_after
        started = self.now()
        self._advance(min(self.scenario.op_tick, probe.timeout))
        while True:
            waited = self.now() - started
            if not cfg.never_ready and self.now() - (handle.started_at or 0.0) >= ready_after:
                _transition(handle, ContainerState.READY)
                return
            if waited >= probe.timeout:
                _transition(handle, ContainerState.FAILED)
                raise ReadinessTimeout(
                    f"{handle.container_name} not ready within {probe.timeout}s ({probe.kind.value} probe)"
                )
            self._advance(min(probe.interval, probe.timeout - waited))

    def run_in_container(
        self, handle: ContainerHandle, argv: Sequence[str], log_name: str | None = None
    ) -> ExecResult:
        if handle.state not in (ContainerState.RUNNING, ContainerState.READY):
            raise InvalidTransition(
                f"cannot exec in {handle.container_name} in state {handle.state.value}"
            )
        if not argv:
            raise ExecFailed("empty command")
        cmd = self._command_cfg(argv)
        if cmd.spawn_failure:
            raise ExecFailed(f"spawn {argv[0]} in {handle.container_name}: simulated spawn failure")
        start = self.now()
        duration = cmd.duration if cmd.duration is not None else self.scenario.default_duration
        self._advance(duration)
        stdout_ref = stderr_ref = None
        if self._log_root is not None:
            stem = log_name or Path(argv[0]).name
            stdout_path = self._log_root / f"{stem}.stdout.log"
            stderr_path = self._log_root / f"{stem}.stderr.log"
            stdout_path.write_text(cmd.stdout)
            stderr_path.write_text(cmd.stderr)
            stdout_ref, stderr_ref = str(stdout_path), str(stderr_path)
        return ExecResult(
            exit_code=cmd.exit_code,
            duration=self.now() - start,
            stdout_ref=stdout_ref,
            stderr_ref=stderr_ref,
        )

    def stop_container(self, handle: ContainerHandle) -> None:
        if handle.state in (ContainerState.STOPPED, ContainerState.FAILED):
            return  # idempotent; failed containers stay failed
        if handle.state not in (ContainerState.RUNNING, ContainerState.READY):
            raise InvalidTransition(
                f"cannot stop {handle.container_name} in state {handle.state.value}"
            )
        cfg = self._container_cfg(handle.container_name)
        self._advance(self.scenario.op_tick)
        self._release_ports(handle.container_name)
        if cfg.fail_stop:
            _transition(handle, ContainerState.FAILED)
            raise StopFailed(f"stop {handle.container_name}: simulated stop failure")
        _transition(handle, ContainerState.STOPPED)
        handle.stopped_at = self.now()

    def _release_ports(self, name: str) -> None:
        for port, owner in list(self._used_host_ports.items()):
            if owner == name:
                del self._used_host_ports[port]

    def collect_metadata(self, handle: ContainerHandle) -> dict[str, Any]:
        info = self._info.get(handle.container_name, {})
        metadata: dict[str, Any] = {
            "engine": self.name,
            "digest": info.get("digest"),
            "ports": info.get("ports", []),
            "volumes": info.get("volumes", []),
            "state": handle.state.value,
        }
        if handle.stopped_at is not None:
            metadata["stopped_at"] = handle.stopped_at
        return metadata


# --- external engine ----------------------------------------------------------


def _subprocess_runner(
    argv: Sequence[str], stdout_path: Path | None = None, stderr_path: Path | None = None
) -> tuple[int, str, str]:
    """Run an argument vector (never a shell string); streams go to files when given."""
    try:
        if stdout_path is not None or stderr_path is not None:
            with open(stdout_path or Path("/dev/null"), "wb") as out, open(
                stderr_path or Path("/dev/null"), "wb"
            ) as err:
                completed = subprocess.run(list(argv), stdout=out, stderr=err)
            return completed.returncode, "", ""
        completed = subprocess.run(list(argv), capture_output=True, text=True)
        return completed.returncode, completed.stdout, completed.stderr
    except OSError as exc:
        raise ExecFailed(f"cannot spawn {argv[0]}: {exc}") from exc


class ExternalEngine:
    """Engine driving a real container CLI through argument-vector templates."""

    def __init__(
        self,
        templates: Mapping[str, Sequence[str]],
        *,
        pull_policy: str = "if_missing",
        volume_flag: str | None = "-v",
        port_flag: str | None = "-p",
        runner: Callable[..., tuple[int, str, str]] | None = None,
    ):
        for verb in ("pull", "start", "exec", "stop"):
            if verb not in templates:
                raise SchemaViolation(f"external engine template missing verb: {verb}")
        self.templates = {k: tuple(v) for k, v in templates.items()}
        self.pull_policy = pull_policy
        self.volume_flag = volume_flag
        self.port_flag = port_flag
        self.name = f"{self.templates['exec'][0]}/external"
        self._runner = runner or _subprocess_runner
        self._pulled: set[str] = set()
        self._used_host_ports: dict[int, str] = {}
        self._info: dict[str, dict[str, Any]] = {}
        self._log_root: Path | None = None
        self._run_id = ""

    def now(self) -> float:
        return time.monotonic()

    def prepare_run(self, run_id: str, log_root: str | Path) -> None:
        self._run_id = run_id
        self._log_root = Path(log_root)
        self._log_root.mkdir(parents=True, exist_ok=True)

    def engine_info(self) -> dict[str, Any]:
        return {
            "engine": self.name,
            "hostname": socket.gethostname(),
            "kernel": platform.release(),
        }

    def _physical_name(self, name: str) -> str:
        return f"{name}-{self._run_id}" if self._run_id else name

    def _render(self, verb: str, **kwargs: Any) -> list[str]:
        return render_template(
            self.templates[verb],
            volume_flag=self.volume_flag,
            port_flag=self.port_flag,
            **kwargs,
        )

    @staticmethod
    def _image_ref(record: ImageRecord) -> str:
        return record.registry or record.image_id

    def pull_image(self, record: ImageRecord) -> None:
        if self.pull_policy == "if_missing" and record.image_id in self._pulled:
            return
        argv = self._render("pull", image=self._image_ref(record))
        code, _, stderr = self._runner(argv)
        if code != 0:
            raise PullFailed(f"pull {record.image_id}: exit {code}: {stderr.strip()}")
        self._pulled.add(record.image_id)

    def start_container(
        self,
        record: ImageRecord,
        name: str,
        volumes: Sequence[VolumeSpec] = (),
        ports: Sequence[PortSpec] = (),
        cmd: Sequence[str] = (),
    ) -> ContainerHandle:
        for port in ports:
            if port.host_port in self._used_host_ports:
                raise PortCollision(
                    f"host port {port.host_port} already bound by {self._used_host_ports[port.host_port]}"
                )
        physical = self._physical_name(name)
        argv = self._render(
            "start",
            image=self._image_ref(record),
            name=physical,
            volumes=volumes,
            ports=ports,
            cmd=cmd,
        )
        code, _, stderr = self._runner(argv)
        if code != 0:
            raise StartFailed(f"start {name}: exit {code}: {stderr.strip()}")
        handle = ContainerHandle(container_name=name, image=record.image_id)
        _transition(handle, ContainerState.RUNNING)
        handle.started_at = self.now()
        handle.host_metadata = dict(self.engine_info())
        for port in ports:
            self._used_host_ports[port.host_port] = name
        self._info[name] = {
            "digest": record.digest,
            "physical_name": physical,
            "ports": [p.to_json_dict() for p in ports],
            "volumes": [v.to_json_dict() for v in volumes],
        }
        return handle

    def _probe_once(self, handle: ContainerHandle, probe: ReadinessProbe) -> bool:
        if probe.kind is ProbeKind.TCP_PORT:
            host_port = probe.target
            for port in self._info.get(handle.container_name, {}).get("ports", []):
                if port["container_port"] == probe.target:
                    host_port = port["host_port"]
                    break
            try:
                with socket.create_connection(("127.0.0.1", host_port), timeout=probe.interval):
                    return True
            except OSError:
                return False
        if probe.kind is ProbeKind.COMMAND:
            argv = self._render(
                "exec",
                name=self._info[handle.container_name]["physical_name"],
                cmd=list(probe.target),
            )
            code, _, _ = self._runner(argv)
            return code == 0
        return Path(str(probe.target)).exists()

    def await_ready(self, handle: ContainerHandle, probe: ReadinessProbe) -> None:
        if handle.state is ContainerState.READY:
            return
        if handle.state is not ContainerState.RUNNING:
            raise InvalidTransition(
                f"cannot probe readiness of {handle.container_name} in state {handle.state.value}"
            )
        deadline = self.now() + probe.timeout
        while True:
            if self._probe_once(handle, probe):
                _transition(handle, ContainerState.READY)
                return
            remaining = deadline - self.now()
            if remaining <= 0:
                _transition(handle, ContainerState.FAILED)
                raise ReadinessTimeout(
                    f"{handle.container_name} not ready within {probe.timeout}s ({probe.kind.value} probe)"
                )
            time.sleep(min(probe.interval, remaining))

    def run_in_container(
        self, handle: ContainerHandle, argv: Sequence[str], log_name: str | None = None
    ) -> ExecResult:
        if handle.state not in (ContainerState.RUNNING, ContainerState.READY):
            raise InvalidTransition(
                f"cannot exec in {handle.container_name} in state {handle.state.value}"
            )
        if not argv:
            raise ExecFailed("empty command")
        rendered = self._render(
            "exec", name=self._info[handle.container_name]["physical_name"], cmd=list(argv)
        )
        stdout_path = stderr_path = None
        if self._log_root is not None:
            stem = log_name or Path(argv[0]).name
            stdout_path = self._log_root / f"{stem}.stdout.log"
            stderr_path = self._log_root / f"{stem}.stderr.log"
        start = self.now()
        code, _, _ = self._runner(rendered, stdout_path=stdout_path, stderr_path=stderr_path)
        return ExecResult(
            exit_code=code,
            duration=self.now() - start,
            stdout_ref=str(stdout_path) if stdout_path else None,
            stderr_ref=str(stderr_path) if stderr_path else None,
        )

    def stop_container(self, handle: ContainerHandle) -> None:
        if handle.state in (ContainerState.STOPPED, ContainerState.FAILED):
            return
        if handle.state not in (ContainerState.RUNNING, ContainerState.READY):
            raise InvalidTransition(
                f"cannot stop {handle.container_name} in state {handle.state.value}"
            )
        argv = self._render("stop", name=self._info[handle.container_name]["physical_name"])
        code, _, stderr = self._runner(argv)
        for port, owner in list(self._used_host_ports.items()):
            if owner == handle.container_name:
                del self._used_host_ports[port]
        if code != 0:
            _transition(handle, ContainerState.FAILED)
            raise StopFailed(f"stop {handle.container_name}: exit {code}: {stderr.strip()}")
        _transition(handle, ContainerState.STOPPED)
        handle.stopped_at = self.now()

    def collect_metadata(self, handle: ContainerHandle) -> dict[str, Any]:
        info = self._info.get(handle.container_name, {})
        metadata: dict[str, Any] = dict(self.engine_info())
        metadata["state"] = handle.state.value
        metadata["requested_ports"] = info.get("ports", [])
        metadata["requested_volumes"] = info.get("volumes", [])
        if handle.stopped_at is not None:
            metadata["stopped_at"] = handle.stopped_at
        if "inspect" not in self.templates:
            return metadata
        argv = self._render("inspect", name=info.get("physical_name", handle.container_name))
        try:
            code, stdout, _ = self._runner(argv)
        except ExecFailed:
            return metadata
        if code != 0:
            return metadata
        try:
            doc = json.loads(stdout)
        except json.JSONDecodeError:
            return metadata
        if isinstance(doc, list):
            doc = doc[0] if doc else {}
        if not isinstance(doc, Mapping):
            return metadata
        digests = doc.get("RepoDigests")
        if isinstance(digests, list) and digests:
            metadata["digest"] = digests[0]
        elif doc.get("Image"):
            metadata["digest"] = doc["Image"]
        network = doc.get("NetworkSettings")
        if isinstance(network, Mapping) and "Ports" in network:
            metadata["ports"] = network["Ports"]
        if "Mounts" in doc:
            metadata["volumes"] = doc["Mounts"]
        return metadata


# --- engine config loading ------------------------------------------------------


def load_engine(config: str | Path | Mapping[str, Any], *, runner: Callable[..., tuple[int, str, str]] | None = None):
    """Build an engine from a config file path or an already-parsed mapping.

    Config schema::

        {"kind": "simulated", "pull_policy": "if_missing", "scenario": {...}}
        {"kind": "external", "flavor": "docker" | "singularity",
         "command_template": {...}, "volume_flag": "-v", "port_flag": "-p",
         "pull_policy": "always" | "if_missing"}
    """
    if isinstance(config, (str, Path)):
        try:
            doc = json.loads(Path(config).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"invalid engine config JSON: {exc}") from None
    else:
        doc = config
    path = "engine"
    check_keys(
        doc,
        path,
        required=("kind",),
        optional=("pull_policy", "scenario", "flavor", "command_template", "volume_flag", "port_flag"),
    )
    kind = get_str(doc, "kind", path)
    pull_policy = get_str(doc, "pull_policy", path, default="if_missing")
    if pull_policy not in ("always", "if_missing"):
        raise SchemaViolation(f"expected always|if_missing, got {pull_policy!r}", f"{path}.pull_policy")

    if kind == "simulated":
        scenario = SimScenario.from_json_dict(doc.get("scenario", {}), f"{path}.scenario")
        return SimulatedEngine(scenario, pull_policy=pull_policy)
    if kind != "external":
        raise SchemaViolation(f"expected simulated|external, got {kind!r}", f"{path}.kind")

    flavor = doc.get("flavor")
    if flavor is not None:
        if flavor not in _FLAVORS:
            raise SchemaViolation(f"unknown flavor {flavor!r}", f"{path}.flavor")
        templates, volume_flag, port_flag = _FLAVORS[flavor]
        templates = dict(templates)
    else:
        templates, volume_flag, port_flag = {}, "-v", "-p"
    for verb, argv in doc.get("command_template", {}).items():
        if not (isinstance(argv, list) and all(isinstance(a, str) for a in argv)):
            raise SchemaViolation("expected an argument vector", f"{path}.command_template.{verb}")
        templates[verb] = tuple(argv)
    if "volume_flag" in doc:
        volume_flag = doc["volume_flag"]
    if "port_flag" in doc:
        port_flag = doc["port_flag"]
    return ExternalEngine(
        templates,
        pull_policy=pull_policy,
        volume_flag=volume_flag,
        port_flag=port_flag,
        runner=runner,
    )
