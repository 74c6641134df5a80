"""Bundle a finished run into a verifiable research-object archive.

The archive is a tar file (``.provro``, optionally gzipped) with
``manifest.json`` at the root. The manifest embeds the workflow spec, plan,
and run record verbatim, describes every image used (with its definition file
when available), and carries a hash inventory of every archived file, so the
bundle alone supports repetition and verification. Tar metadata is
normalized (sorted members, zeroed timestamps/owners), which makes two builds
from the same run directory identical except for the manifest's created_at.

Archive layout::

    manifest.json
    run/record.json | run/plan.json | run/logs/** | run/artifacts/**
    volumes/<container>/<n>/**      copied read-write bind mounts
    images/<name>@<tag>.json        catalog record per image used
    images/<name>@<tag>.def         definition file contents when readable
    recipe/combined_image.def       single-image regeneration recipe
"""

from __future__ import annotations

import io
import json
import tarfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .catalog import Catalog, content_digest
from .errors import CorruptArchive, MissingArtifact
from .models import VolumeMode
from .planner import PhaseKind
from .runs import RunRecord

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ResearchObjectManifest:
    run_id: str
    created_at: str
    workflow_spec: dict[str, Any] | None
    plan: dict[str, Any]
    run_record: dict[str, Any]
    images: list[dict[str, Any]]
    inventory: list[dict[str, Any]]
    provenance_db: str | None
    format_version: int = FORMAT_VERSION

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "run_id": self.run_id,
            "created_at": self.created_at,
            "workflow_spec": self.workflow_spec,
            "plan": self.plan,
            "run_record": self.run_record,
            "images": self.images,
            "inventory": self.inventory,
            "provenance_db": self.provenance_db,
        }


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)


def _walk_files(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.is_file())


def _collect_run_files(run: RunRecord, run_dir: Path) -> dict[str, bytes]:
    members: dict[str, bytes] = {}
    for required in ("record.json", "plan.json"):
        path = run_dir / required
        if not path.is_file():
            raise MissingArtifact(f"run file vanished: {path}")
        members[f"run/{required}"] = path.read_bytes()
    for timing in run.activity_timings:
        for ref in (timing.stdout_ref, timing.stderr_ref):
            if ref is None:
                continue
            path = run_dir / ref
            if not path.is_file():
                raise MissingArtifact(f"log referenced by the run record vanished: {path}")
    for sub in ("logs", "artifacts"):
        base = run_dir / sub
        if base.is_dir():
            for path in _walk_files(base):
                members[f"run/{sub}/{path.relative_to(base)}"] = path.read_bytes()
    return members


def _collect_volume_files(run: RunRecord) -> dict[str, bytes]:
    members: dict[str, bytes] = {}
    for container, volumes in sorted(run.plan.volume_assignments.items()):
        for index, volume in enumerate(volumes):
            if volume.mode is not VolumeMode.READ_WRITE:
                continue
            host = Path(volume.host_path)
            prefix = f"volumes/{container}/{index}"
            if host.is_file():
                members[f"{prefix}/{host.name}"] = host.read_bytes()
            elif host.is_dir():
                for path in _walk_files(host):
                    members[f"{prefix}/{path.relative_to(host)}"] = path.read_bytes()
    return members


def _collect_images(run: RunRecord, catalog: Catalog) -> tuple[dict[str, bytes], list[dict[str, Any]]]:
    members: dict[str, bytes] = {}
    described: list[dict[str, Any]] = []
    for use in run.images:
        record = catalog.get_image(use.image_id)
        stem = f"images/{record.name}@{record.tag}"
        members[f"{stem}.json"] = (
            json.dumps(record.to_json_dict(), indent=2, sort_keys=True) + "\n"
        ).encode()
        definition_file = None
        if record.definition_ref and Path(record.definition_ref).is_file():
            definition_file = f"{stem}.def"
            members[definition_file] = Path(record.definition_ref).read_bytes()
        described.append({"record": record.to_json_dict(), "definition_file": definition_file})
    return members, described


def _combined_recipe(run: RunRecord, images: list[dict[str, Any]], members: dict[str, bytes]) -> bytes:
    lines = [
        f"# Single-image regeneration recipe for run {run.run_id}",
        f"# Strategy: {run.strategy.value}; provenance service: {run.prov_service}",
        "# Concatenates the software stacks and definitions of every image the run pulled.",
        "",
    ]
    for entry in images:
        record = entry["record"]
        lines.append(f"## image {record['name']}:{record['tag']} (digest {record['digest']})")
        stack = record.get("software_stack") or []
        if stack:
            lines.append("# software stack:")
            lines.extend(f"#   {item['name']} {item['version']}" for item in stack)
        if entry["definition_file"]:
            lines.append(f"# definition ({entry['definition_file']}):")
            lines.append(members[entry["definition_file"]].decode(errors="replace").rstrip("\n"))
        else:
            lines.append("# (no definition file archived)")
        lines.append("")
    return "\n".join(lines).encode()


def _prov_db_ref(run: RunRecord, catalog: Catalog, members: dict[str, bytes]) -> str | None:
    """Archive path holding the provenance stack's persisted volume, if any.

    The stack may persist through the service container or its DBMS
    dependency, so every container running an image from the service's
    dependency closure is searched (service first); coarse-grained runs fall
    back to the single bundled container."""
    service = catalog.get_service(run.prov_service)
    stack_images = list(reversed(catalog.resolve_image_closure(service.image)))
    started = [
        (p.container, p.image) for p in run.plan.phases if p.kind is PhaseKind.START_CONTAINER
    ]
    containers = [c for image in stack_images for c, i in started if i == image]
    containers += [c for c, _ in started if c not in containers]
    for container in containers:
        volume_dirs = sorted(
            {name.split("/", 3)[:3][2] for name in members if name.startswith(f"volumes/{container}/")}
        )
        if volume_dirs:
            return f"volumes/{container}/{volume_dirs[0]}"
    return None


def build_research_object(
    run: RunRecord, output_path: str | Path, catalog: Catalog, *, compress: bool = False
) -> ResearchObjectManifest:
    """Write the archive for a terminal run and return its manifest."""
    run_dir = catalog.run_dir(run.run_id)
    if not run_dir.is_dir():
        raise MissingArtifact(f"run directory vanished: {run_dir}")
    members = _collect_run_files(run, run_dir)
    members.update(_collect_volume_files(run))
    image_members, images = _collect_images(run, catalog)
    members.update(image_members)
    members["recipe/combined_image.def"] = _combined_recipe(run, images, members)

    spec_path = run_dir / "artifacts" / "workflow_spec.json"
    workflow_spec = json.loads(spec_path.read_text()) if spec_path.is_file() else None

    inventory = [
        {"path": name, "size": len(data), "digest": content_digest(data)}
        for name, data in sorted(members.items())
    ]
    manifest = ResearchObjectManifest(
        run_id=run.run_id,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        workflow_spec=workflow_spec,
        plan=run.plan.to_json_dict(),
        run_record=run.to_json_dict(),
        images=images,
        inventory=inventory,
        provenance_db=_prov_db_ref(run, catalog, members),
    )

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    mode = "w:gz" if compress else "w"
    with tarfile.open(output_path, mode) as tar:
        payload = (json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n").encode()
        _add_bytes(tar, "manifest.json", payload)
        for name, data in sorted(members.items()):
            _add_bytes(tar, name, data)
    return manifest


def _add_bytes(tar: tarfile.TarFile, name: str, data: bytes) -> None:
    info = tarfile.TarInfo(name=name)
    info.size = len(data)
    info.mtime = 0
    info.uid = info.gid = 0
    info.uname = info.gname = ""
    info.mode = 0o644
    tar.addfile(info, io.BytesIO(data))


def verify_research_object(archive_path: str | Path) -> VerificationReport:
    """Re-hash every inventory entry and check the manifest's references."""
    archive_path = Path(archive_path)
    if not archive_path.is_file():
        raise CorruptArchive(f"no archive at {archive_path}")
    try:
        tar = tarfile.open(archive_path, "r:*")
    except tarfile.TarError as exc:
        raise CorruptArchive(f"unreadable archive {archive_path}: {exc}") from None
    with tar:
        contents: dict[str, bytes] = {}
        for member in tar.getmembers():
            if member.isfile():
                extracted = tar.extractfile(member)
                contents[member.name] = extracted.read() if extracted else b""
        if "manifest.json" not in contents:
            raise CorruptArchive(f"archive {archive_path} has no manifest.json")
        try:
            manifest = json.loads(contents["manifest.json"])
        except json.JSONDecodeError as exc:
            raise CorruptArchive(f"manifest.json is not valid JSON: {exc}") from None

    violations: list[str] = []
    inventoried: set[str] = set()
    for entry in manifest.get("inventory", []):
        name = entry.get("path")
        inventoried.add(name)
        if name not in contents:
            violations.append(f"inventory references a file absent from the archive: {name}")
            continue
        data = contents[name]
        if entry.get("size") != len(data):
            violations.append(f"size mismatch for {name}: manifest {entry.get('size')}, archive {len(data)}")
        if entry.get("digest") != content_digest(data):
            violations.append(f"digest mismatch for {name}")
    for name in contents:
        if name != "manifest.json" and name not in inventoried:
            violations.append(f"archived file missing from the inventory: {name}")
    prov_db = manifest.get("provenance_db")
    if prov_db and not any(name.startswith(prov_db + "/") or name == prov_db for name in contents):
        violations.append(f"provenance_db path absent from the archive: {prov_db}")
    for image in manifest.get("images", []):
        definition = image.get("definition_file")
        if definition and definition not in contents:
            violations.append(f"image definition absent from the archive: {definition}")
    return VerificationReport(ok=not violations, violations=violations)
