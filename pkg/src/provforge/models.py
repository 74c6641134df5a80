"""Shared value types (volumes, ports, readiness probes) and JSON document helpers.

All descriptor parsing in the package goes through the ``get_*`` helpers so
that schema errors consistently carry the offending JSON path.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from .errors import SchemaViolation

IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
DIGEST_RE = re.compile(r"^[a-z0-9]+:[0-9a-f]+$")

_REQUIRED = object()


class VolumeMode(str, Enum):
    READ_ONLY = "read_only"
    READ_WRITE = "read_write"


class ProbeKind(str, Enum):
    TCP_PORT = "tcp_port"
    COMMAND = "command"
    FILE_EXISTS = "file_exists"


@dataclass(frozen=True)
class VolumeSpec:
    """A host directory bound into a container."""

    host_path: str
    container_path: str
    mode: VolumeMode = VolumeMode.READ_WRITE

    def __post_init__(self):
        if not isinstance(self.mode, VolumeMode):
            try:
                object.__setattr__(self, "mode", VolumeMode(self.mode))
            except ValueError:
                raise SchemaViolation(f"unknown volume mode: {self.mode!r}") from None
        if not self.container_path.startswith("/"):
            raise SchemaViolation(
                f"container_path must be absolute, got {self.container_path!r}"
            )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "host_path": self.host_path,
            "container_path": self.container_path,
            "mode": self.mode.value,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "volume") -> "VolumeSpec":
        check_keys(doc, path, required=("host_path", "container_path"), optional=("mode",))
        mode = get_enum(doc, "mode", path, VolumeMode, default=VolumeMode.READ_WRITE)
        host = get_str(doc, "host_path", path)
        container = get_str(doc, "container_path", path)
        if not container.startswith("/"):
            raise SchemaViolation("container_path must be absolute", f"{path}.container_path")
        return cls(host_path=host, container_path=container, mode=mode)


@dataclass(frozen=True)
class PortSpec:
    """A container port, optionally mapped to a host port (0 = auto-assign)."""

    container_port: int
    host_port: int = 0

    def __post_init__(self):
        if not 1 <= self.container_port <= 65535:
            raise SchemaViolation(f"container_port out of range: {self.container_port}")
        if not 0 <= self.host_port <= 65535:
            raise SchemaViolation(f"host_port out of range: {self.host_port}")

    def to_json_dict(self) -> dict[str, Any]:
        return {"container_port": self.container_port, "host_port": self.host_port}

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "port") -> "PortSpec":
        check_keys(doc, path, required=("container_port",), optional=("host_port",))
        return cls(
            container_port=get_int(doc, "container_port", path),
            host_port=get_int(doc, "host_port", path, default=0),
        )


@dataclass(frozen=True)
class ReadinessProbe:
    """Check that a started container's service accepts work.

    target is a port number (tcp_port), an argument vector (command)
    or a path (file_exists). Invariant: timeout >= interval > 0.
    """

    kind: ProbeKind
    target: Any
    timeout: float = 60.0
    interval: float = 1.0

    def __post_init__(self):
        if not (self.timeout >= self.interval > 0):
            raise SchemaViolation(
                f"probe requires timeout >= interval > 0, got timeout={self.timeout} interval={self.interval}"
            )
        if self.kind is ProbeKind.TCP_PORT and not (
            isinstance(self.target, int) and 1 <= self.target <= 65535
        ):
            raise SchemaViolation(f"tcp_port probe target must be a port number, got {self.target!r}")
        if self.kind is ProbeKind.COMMAND:
            if not (
                isinstance(self.target, (list, tuple))
                and self.target
                and all(isinstance(t, str) for t in self.target)
            ):
                raise SchemaViolation("command probe target must be a non-empty argument vector")
            object.__setattr__(self, "target", tuple(self.target))
        if self.kind is ProbeKind.FILE_EXISTS and not isinstance(self.target, str):
            raise SchemaViolation("file_exists probe target must be a path string")

    def to_json_dict(self) -> dict[str, Any]:
        target = list(self.target) if isinstance(self.target, tuple) else self.target
        return {
            "kind": self.kind.value,
            "target": target,
            "timeout": self.timeout,
            "interval": self.interval,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "readiness") -> "ReadinessProbe":
        check_keys(doc, path, required=("kind", "target"), optional=("timeout", "interval"))
        kind = get_enum(doc, "kind", path, ProbeKind)
        try:
            return cls(
                kind=kind,
                target=doc["target"],
                timeout=get_number(doc, "timeout", path, default=60.0),
                interval=get_number(doc, "interval", path, default=1.0),
            )
        except SchemaViolation as exc:
            if exc.path:
                raise
            raise SchemaViolation(str(exc), path) from None


@dataclass(frozen=True)
class SoftwareItem:
    """One name+version entry of an image's software stack."""

    name: str
    version: str

    def to_json_dict(self) -> dict[str, str]:
        return {"name": self.name, "version": self.version}

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "software") -> "SoftwareItem":
        check_keys(doc, path, required=("name", "version"))
        return cls(name=get_str(doc, "name", path), version=get_str(doc, "version", path))


# --- JSON document helpers --------------------------------------------------


def check_keys(
    doc: Any,
    path: str,
    required: tuple[str, ...] = (),
    optional: tuple[str, ...] = (),
) -> None:
    """Reject non-mappings, missing required keys, and unknown keys."""
    if not isinstance(doc, Mapping):
        raise SchemaViolation(f"expected an object, got {type(doc).__name__}", path)
    for key in required:
        if key not in doc:
            raise SchemaViolation("missing required field", f"{path}.{key}")
    allowed = set(required) | set(optional)
    for key in doc:
        if key not in allowed:
            raise SchemaViolation("unknown field", f"{path}.{key}")


def get_str(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> str:
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if not isinstance(value, str):
        raise SchemaViolation(f"expected a string, got {type(value).__name__}", f"{path}.{key}")
    return value


def get_identifier(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> str:
    value = get_str(doc, key, path, default)
    if not IDENTIFIER_RE.match(value):
        raise SchemaViolation(f"not a valid identifier: {value!r}", f"{path}.{key}")
    return value


def get_int(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> int:
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"expected an integer, got {value!r}", f"{path}.{key}")
    return value


def get_number(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> float:
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"expected a number, got {value!r}", f"{path}.{key}")
    return float(value)


def get_bool(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> bool:
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if not isinstance(value, bool):
        raise SchemaViolation(f"expected a boolean, got {value!r}", f"{path}.{key}")
    return value


def get_list(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> list:
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if not isinstance(value, list):
        raise SchemaViolation(f"expected a list, got {type(value).__name__}", f"{path}.{key}")
    return value


def get_str_list(doc: Mapping[str, Any], key: str, path: str, default: Any = _REQUIRED) -> tuple[str, ...]:
    values = get_list(doc, key, path, default)
    for i, item in enumerate(values):
        if not isinstance(item, str):
            raise SchemaViolation(f"expected a string, got {item!r}", f"{path}.{key}[{i}]")
    return tuple(values)


def get_enum(doc: Mapping[str, Any], key: str, path: str, enum_cls, default: Any = _REQUIRED):
    value = doc.get(key, default)
    if value is _REQUIRED:
        raise SchemaViolation("missing required field", f"{path}.{key}")
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise SchemaViolation(f"expected one of [{choices}], got {value!r}", f"{path}.{key}") from None


def validate_digest(value: str, path: str) -> str:
    if not DIGEST_RE.match(value):
        raise SchemaViolation(
            f"digest must be algorithm-prefixed lowercase hex (e.g. sha256:...), got {value!r}", path
        )
    return value
