"""File-backed catalog of container images, provenance services, and run provenance.

Layout (one directory per catalog, daemon-free so it works on shared filesystems):

    images/<name>@<tag>.json    one document per image record
    services/<name>.json        one document per provenance-service record
    services/_default           name of the default provenance service
    runs.log                    append-only JSONL archive of run records
    runs/<run_id>/              per-run working directories (owned by the deployer)
    .lock                       single-writer lock for all catalog writes

Records are immutable once written. Readers never take the lock; the run-log
reader tolerates a truncated trailing line from an in-flight append.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from filelock import FileLock

from .errors import (
    ConflictingDigest,
    DependencyCycle,
    DuplicateServiceName,
    SchemaViolation,
    UnknownRun,
    UnknownService,
    UnresolvedDependency,
    UnresolvedImage,
)
from .models import (
    IDENTIFIER_RE,
    PortSpec,
    ProbeKind,
    ReadinessProbe,
    SoftwareItem,
    VolumeSpec,
    check_keys,
    get_bool,
    get_identifier,
    get_int,
    get_list,
    get_str,
    get_str_list,
    validate_digest,
)
from .runs import Outcome, RunRecord


def content_digest(data: bytes) -> str:
    """Catalog-wide content hash: algorithm-prefixed lowercase hex."""
    return "sha256:" + hashlib.sha256(data).hexdigest()


def file_digest(path: Path) -> str:
    return content_digest(Path(path).read_bytes())


@dataclass(frozen=True)
class ImageRecord:
    """Metadata for one deployable container image (the image itself is not stored)."""

    name: str
    tag: str
    registry: str
    digest: str
    description: str = ""
    definition_ref: str | None = None
    definition_version: int = 1
    definition_hash: str | None = None
    volumes: tuple[VolumeSpec, ...] = ()
    ports: tuple[PortSpec, ...] = ()
    start_command: tuple[str, ...] = ()
    software_stack: tuple[SoftwareItem, ...] = ()
    depends_on: tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("volumes", "ports", "start_command", "software_stack", "depends_on"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if not IDENTIFIER_RE.match(self.name):
            raise SchemaViolation(f"not a valid image name: {self.name!r}")
        if not IDENTIFIER_RE.match(self.tag):
            raise SchemaViolation(f"not a valid image tag: {self.tag!r}")
        validate_digest(self.digest, "digest")
        if self.definition_version < 1:
            raise SchemaViolation(f"definition_version must be >= 1, got {self.definition_version}")

    @property
    def image_id(self) -> str:
        return f"{self.name}:{self.tag}"

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "tag": self.tag,
            "registry": self.registry,
            "digest": self.digest,
            "description": self.description,
            "definition_ref": self.definition_ref,
            "definition_version": self.definition_version,
            "definition_hash": self.definition_hash,
            "volumes": [v.to_json_dict() for v in self.volumes],
            "ports": [p.to_json_dict() for p in self.ports],
            "start_command": list(self.start_command),
            "software_stack": [s.to_json_dict() for s in self.software_stack],
            "depends_on": list(self.depends_on),
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "image") -> "ImageRecord":
        check_keys(
            doc,
            path,
            required=("name", "tag", "registry", "digest"),
            optional=(
                "description",
                "definition_ref",
                "definition_version",
                "definition_hash",
                "volumes",
                "ports",
                "start_command",
                "software_stack",
                "depends_on",
            ),
        )
        definition_ref = doc.get("definition_ref")
        if definition_ref is not None and not isinstance(definition_ref, str):
            raise SchemaViolation("expected a path string or null", f"{path}.definition_ref")
        definition_hash = doc.get("definition_hash")
        if definition_hash is not None:
            validate_digest(get_str(doc, "definition_hash", path), f"{path}.definition_hash")
        return cls(
            name=get_identifier(doc, "name", path),
            tag=get_identifier(doc, "tag", path),
            registry=get_str(doc, "registry", path),
            digest=validate_digest(get_str(doc, "digest", path), f"{path}.digest"),
            description=get_str(doc, "description", path, default=""),
            definition_ref=definition_ref,
            definition_version=get_int(doc, "definition_version", path, default=1),
            definition_hash=definition_hash,
            volumes=tuple(
                VolumeSpec.from_json_dict(v, f"{path}.volumes[{i}]")
                for i, v in enumerate(get_list(doc, "volumes", path, default=[]))
            ),
            ports=tuple(
                PortSpec.from_json_dict(p, f"{path}.ports[{i}]")
                for i, p in enumerate(get_list(doc, "ports", path, default=[]))
            ),
            start_command=get_str_list(doc, "start_command", path, default=[]),
            software_stack=tuple(
                SoftwareItem.from_json_dict(s, f"{path}.software_stack[{i}]")
                for i, s in enumerate(get_list(doc, "software_stack", path, default=[]))
            ),
            depends_on=get_str_list(doc, "depends_on", path, default=[]),
        )


@dataclass(frozen=True)
class ProvenanceServiceRecord:
    """A containerized provenance-capture service known to the catalog."""

    service_name: str
    image: str
    requires_instrumentation: bool = False
    readiness: ReadinessProbe | None = None
    is_default: bool = False

    def __post_init__(self):
        if not IDENTIFIER_RE.match(self.service_name):
            raise SchemaViolation(f"not a valid service name: {self.service_name!r}")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "service_name": self.service_name,
            "image": self.image,
            "requires_instrumentation": self.requires_instrumentation,
            "readiness": self.readiness.to_json_dict() if self.readiness else None,
            "is_default": self.is_default,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any], path: str = "service") -> "ProvenanceServiceRecord":
        check_keys(
            doc,
            path,
            required=("service_name", "image"),
            optional=("requires_instrumentation", "readiness", "is_default"),
        )
        readiness = doc.get("readiness")
        return cls(
            service_name=get_identifier(doc, "service_name", path),
            image=get_str(doc, "image", path),
            requires_instrumentation=get_bool(doc, "requires_instrumentation", path, default=False),
            readiness=ReadinessProbe.from_json_dict(readiness, f"{path}.readiness")
            if readiness is not None
            else None,
            is_default=get_bool(doc, "is_default", path, default=False),
        )


def _dump(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class Catalog:
    """Open (creating if needed) the catalog rooted at ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._images_dir = self.root / "images"
        self._services_dir = self.root / "services"
        self._runs_dir = self.root / "runs"
        self._run_log = self.root / "runs.log"
        for d in (self._images_dir, self._services_dir, self._runs_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))
        self._image_cache: dict[Path, tuple[tuple[int, int], ImageRecord]] = {}

    # --- images -------------------------------------------------------------

    def _image_path(self, name: str, tag: str) -> Path:
        return self._images_dir / f"{name}@{tag}.json"

    def _load_image(self, path: Path) -> ImageRecord:
        # Records are immutable once written; (mtime, size) keys a safe
        # read-through cache that still sees bump rewrites.
        stat = path.stat()
        key = (stat.st_mtime_ns, stat.st_size)
        cached = self._image_cache.get(path)
        if cached is not None and cached[0] == key:
            return cached[1]
        record = ImageRecord.from_json_dict(json.loads(path.read_text()), path.stem)
        self._image_cache[path] = (key, record)
        return record

    def list_images(self) -> list[ImageRecord]:
        records = [self._load_image(p) for p in self._images_dir.glob("*.json")]
        records.sort(key=lambda r: (r.name, r.tag))
        return records

    def find_image(self, identifier: str) -> ImageRecord | None:
        """Resolve ``name:tag`` exactly, or a bare ``name`` when unique."""
        if ":" in identifier:
            name, tag = identifier.split(":", 1)
            if not (IDENTIFIER_RE.match(name) and IDENTIFIER_RE.match(tag)):
                return None  # identifiers never contain path separators
            path = self._image_path(name, tag)
            return self._load_image(path) if path.is_file() else None
        if not IDENTIFIER_RE.match(identifier):
            return None
        candidates = [r for r in self.list_images() if r.name == identifier]
        if len(candidates) > 1:
            tags = ", ".join(r.image_id for r in candidates)
            raise UnresolvedImage(f"ambiguous image name {identifier!r}: matches {tags}")
        return candidates[0] if candidates else None

    def get_image(self, identifier: str) -> ImageRecord:
        record = self.find_image(identifier)
        if record is None:
            raise UnresolvedImage(f"image not registered: {identifier}")
        return record

    def register_image(self, record: ImageRecord, *, bump: bool = False) -> str:
        """Persist an image record and return its stable id.

        Re-registering an identical (name, tag, digest) is idempotent. A new
        digest for an existing (name, tag) requires ``bump=True`` and advances
        definition_version by exactly one.
        """
        with self._lock:
            for dep in record.depends_on:
                if self.find_image(dep) is None:
                    raise UnresolvedDependency(
                        f"image {record.image_id} depends on unregistered image: {dep}"
                    )
            path = self._image_path(record.name, record.tag)
            if path.is_file():
                existing = self._load_image(path)
                if existing.digest == record.digest:
                    return existing.image_id
                if not bump:
                    raise ConflictingDigest(
                        f"{record.image_id} already registered with digest {existing.digest}; "
                        f"re-register with an explicit version bump to accept {record.digest}"
                    )
                record = replace(record, definition_version=existing.definition_version + 1)
            record = self._with_definition_hash(record)
            path.write_text(_dump(record.to_json_dict()))
            return record.image_id

    @staticmethod
    def _with_definition_hash(record: ImageRecord) -> ImageRecord:
        if record.definition_ref is None:
            return record
        ref = Path(record.definition_ref)
        if ref.is_file():
            return replace(
                record, definition_ref=str(ref.resolve()), definition_hash=file_digest(ref)
            )
        return record

    def resolve_image_closure(self, identifier: str) -> list[str]:
        """Dependency closure of an image in topological order.

        Dependencies precede dependents; the queried image comes last; ties
        are broken lexicographically by (name, tag).
        """
        target = self.get_image(identifier)
        closure: dict[str, ImageRecord] = {}
        in_progress: list[str] = []

        def visit(record: ImageRecord) -> None:
            if record.image_id in in_progress:
                cycle = " -> ".join(in_progress + [record.image_id])
                raise DependencyCycle(f"image dependency cycle: {cycle}")
            if record.image_id in closure:
                return
            in_progress.append(record.image_id)
            for dep in record.depends_on:
                visit(self.get_image(dep))
            in_progress.pop()
            closure[record.image_id] = record

        visit(target)

        deps_of = {
            image_id: {self.get_image(d).image_id for d in rec.depends_on}
            for image_id, rec in closure.items()
        }
        ordered: list[str] = []
        emitted: set[str] = set()
        while len(ordered) < len(closure):
            ready = sorted(
                image_id
                for image_id, deps in deps_of.items()
                if image_id not in emitted and deps <= emitted
            )
            if not ready:  # unreachable after the DFS cycle check
                raise DependencyCycle(f"image dependency cycle involving {identifier}")
            ordered.append(ready[0])
            emitted.add(ready[0])
        return ordered

    # --- provenance services --------------------------------------------------

    def _service_path(self, name: str) -> Path:
        return self._services_dir / f"{name}.json"

    @property
    def _default_pointer(self) -> Path:
        return self._services_dir / "_default"

    def _default_name(self) -> str | None:
        if self._default_pointer.is_file():
            name = self._default_pointer.read_text().strip()
            return name or None
        return None

    def register_prov_service(self, descriptor: ProvenanceServiceRecord) -> str:
        """Persist a provenance-service record; the first one becomes the default."""
        with self._lock:
            image = self.find_image(descriptor.image)
            if image is None:
                raise UnresolvedDependency(
                    f"service {descriptor.service_name} references unregistered image: {descriptor.image}"
                )
            self.resolve_image_closure(image.image_id)  # surfaces broken closures early
            if self._service_path(descriptor.service_name).is_file():
                raise DuplicateServiceName(
                    f"provenance service already registered: {descriptor.service_name}"
                )
            stored = replace(
                descriptor,
                image=image.image_id,
                readiness=descriptor.readiness or self._default_probe(image),
                is_default=False,
            )
            self._service_path(stored.service_name).write_text(_dump(stored.to_json_dict()))
            if self._default_name() is None or descriptor.is_default:
                self._default_pointer.write_text(stored.service_name + "\n")
            return stored.service_name

    @staticmethod
    def _default_probe(image: ImageRecord) -> ReadinessProbe:
        if image.ports:
            return ReadinessProbe(kind=ProbeKind.TCP_PORT, target=image.ports[0].container_port)
        return ReadinessProbe(kind=ProbeKind.COMMAND, target=("true",))

    def set_default_prov_service(self, service_name: str) -> None:
        with self._lock:
            if not IDENTIFIER_RE.match(service_name) or not self._service_path(service_name).is_file():
                raise UnknownService(f"provenance service not registered: {service_name}")
            self._default_pointer.write_text(service_name + "\n")

    def get_service(self, service_name: str) -> ProvenanceServiceRecord:
        if not IDENTIFIER_RE.match(service_name):
            raise UnknownService(f"provenance service not registered: {service_name}")
        path = self._service_path(service_name)
        if not path.is_file():
            raise UnknownService(f"provenance service not registered: {service_name}")
        record = ProvenanceServiceRecord.from_json_dict(json.loads(path.read_text()), path.stem)
        return replace(record, is_default=self._default_name() == record.service_name)

    def list_services(self) -> list[ProvenanceServiceRecord]:
        names = sorted(p.stem for p in self._services_dir.glob("*.json"))
        return [self.get_service(n) for n in names]

    def default_prov_service(self) -> ProvenanceServiceRecord | None:
        name = self._default_name()
        return self.get_service(name) if name else None

    # --- run provenance -------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        return self._runs_dir / run_id

    def record_run(self, run: RunRecord) -> str:
        """Append a terminal run record to the run log (append-only)."""
        if not isinstance(run.outcome, Outcome):
            raise SchemaViolation(f"run outcome must be terminal, got {run.outcome!r}")
        line = json.dumps(run.to_json_dict(), sort_keys=True, separators=(",", ":"))
        with self._lock:
            with self._run_log.open("a") as fh:
                fh.write(line + "\n")
        return run.run_id

    def _iter_runs(self) -> Iterable[RunRecord]:
        if not self._run_log.is_file():
            return
        with self._run_log.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    yield RunRecord.from_json_dict(json.loads(line))
                except (json.JSONDecodeError, SchemaViolation):
                    continue  # in-flight append; complete records only

    def query_runs(
        self,
        *,
        workflow: str | None = None,
        strategy: str | None = None,
        environment: str | None = None,
        outcome: str | None = None,
    ) -> list[RunRecord]:
        """All recorded runs matching the filter, in start-time order."""
        strategy = getattr(strategy, "value", strategy)
        outcome = getattr(outcome, "value", outcome)
        matches = [
            run
            for run in self._iter_runs()
            if (workflow is None or run.workflow_name == workflow)
            and (strategy is None or run.strategy.value == strategy)
            and (environment is None or run.environment_label == environment)
            and (outcome is None or run.outcome.value == outcome)
        ]
        matches.sort(key=lambda r: (r.started_at_utc, r.run_id))
        return matches

    def get_run(self, run_id: str) -> RunRecord:
        for run in self._iter_runs():
            if run.run_id == run_id:
                return run
        raise UnknownRun(f"no recorded run with id: {run_id}")
