"""Shared fixtures: a stocked catalog, spec builders, and run-invariant checks."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from provforge.catalog import Catalog, ImageRecord, ProvenanceServiceRecord
from provforge.models import PortSpec, ProbeKind, ReadinessProbe, VolumeSpec
from provforge.planner import PhaseKind
from provforge.runs import Outcome, RunRecord
from provforge.workflow import Strategy


def fake_digest(seed: str) -> str:
    return "sha256:" + hashlib.sha256(seed.encode()).hexdigest()


def make_image(name, tag="1.0", deps=(), ports=(), volumes=(), cmd=(), **kwargs) -> ImageRecord:
    return ImageRecord(
        name=name,
        tag=tag,
        registry=f"docker://registry.example/{name}:{tag}",
        digest=fake_digest(f"{name}:{tag}"),
        ports=tuple(PortSpec(p) if isinstance(p, int) else p for p in ports),
        volumes=tuple(volumes),
        start_command=tuple(cmd),
        depends_on=tuple(deps),
        **kwargs,
    )


@pytest.fixture
def catalog(tmp_path) -> Catalog:
    return Catalog(tmp_path / "catalog")


def register_denseed_stack(catalog: Catalog, prov_volume_host: str | None = None) -> None:
    """fastbit + monetdb + dfanalyzer (default service) + denseed, as a toy stack."""
    prov_volumes = (
        (VolumeSpec(host_path=prov_volume_host, container_path="/prov/db"),)
        if prov_volume_host
        else ()
    )
    catalog.register_image(make_image("fastbit"))
    catalog.register_image(
        make_image("monetdb", ports=(50000,), cmd=("monetdbd", "start"), volumes=prov_volumes)
    )
    catalog.register_image(
        make_image(
            "dfanalyzer", deps=("monetdb", "fastbit"), ports=(22000,), cmd=("dfanalyzer", "serve")
        )
    )
    catalog.register_image(make_image("denseed"))
    catalog.register_prov_service(
        ProvenanceServiceRecord(
            service_name="dfanalyzer",
            image="dfanalyzer",
            requires_instrumentation=True,
            readiness=ReadinessProbe(kind=ProbeKind.TCP_PORT, target=22000, timeout=30, interval=1),
        )
    )


@pytest.fixture
def stocked_catalog(catalog) -> Catalog:
    register_denseed_stack(catalog)
    return catalog


def activity_docs(n: int) -> list[dict]:
    return [
        {"name": f"a{i}", "script": f"/wf/a{i}.py", "arguments": [], "order_index": i}
        for i in range(n)
    ]


def spec_doc(strategy: str, n: int = 3, env: str = "test-env", **overrides) -> dict:
    """Workflow spec document for the toy stack under a named strategy."""
    acts = activity_docs(n)
    names = [a["name"] for a in acts]
    if strategy == "coarse_grained":
        groups = [{"name": "all", "image": "denseed", "activities": names, "role": "workflow"}]
    elif strategy == "partial_modular":
        groups = [
            {"name": "wf", "image": "denseed", "activities": names, "role": "workflow"},
            {"name": "prov", "image": "dfanalyzer", "role": "prov_service"},
        ]
    elif strategy == "provenance_modular":
        groups = [
            {"name": "wf", "image": "denseed", "activities": names, "role": "workflow"},
            {"name": "prov", "image": "dfanalyzer", "role": "prov_service"},
            {"name": "db", "image": "monetdb", "role": "dbms"},
        ]
    elif strategy == "fine_grained":
        groups = [
            {"name": f"wf{i}", "image": "denseed", "activities": [name], "role": "workflow"}
            for i, name in enumerate(names)
        ] + [
            {"name": "prov", "image": "dfanalyzer", "role": "prov_service"},
            {"name": "db", "image": "monetdb", "role": "dbms"},
        ]
    else:
        raise ValueError(strategy)
    doc = {
        "workflow_name": "denseed",
        "strategy": strategy,
        "environment_label": env,
        "activities": acts,
        "container_groups": groups,
    }
    doc.update(overrides)
    return doc


def toy_scenario(durations=(2.0, 5.0, 3.0), **overrides) -> dict:
    doc = {
        "containers": {"db": {"ready_after": 1.0}, "prov": {"ready_after": 2.0}},
        "commands": {
            f"/wf/a{i}.py": {"duration": d, "stdout": f"activity a{i} ok\n"}
            for i, d in enumerate(durations)
        },
    }
    doc.update(overrides)
    return doc


def set_partitions(items: list) -> list[list[list]]:
    """All set partitions of ``items`` (each partition: list of non-empty blocks)."""
    if not items:
        return [[]]
    head, rest = items[0], items[1:]
    partitions = []
    for partial in set_partitions(rest):
        for i in range(len(partial)):
            partitions.append(partial[:i] + [partial[i] + [head]] + partial[i + 1 :])
        partitions.append(partial + [[head]])
    return partitions


# --- run-record invariants (shared by deployer tests and acceptance) -----------


def assert_run_invariants(record: RunRecord) -> None:
    # cleanup totality: everything started was stopped or marked failed
    terminal_by_container: dict[str, set[str]] = {}
    for event in record.container_events:
        terminal_by_container.setdefault(event.container, set()).add(event.kind)
    for container, kinds in terminal_by_container.items():
        if "started" in kinds:
            assert kinds & {"stopped", "failed"}, f"{container} started but never stopped/failed"

    # sequentiality: non-overlapping, ordered activity timings
    timings = record.activity_timings
    for timing in timings:
        assert timing.end_ms >= timing.start_ms
    for earlier, later in zip(timings, timings[1:]):
        assert earlier.end_ms <= later.start_ms, "activity timings overlap"

    # provenance-first in non-coarse runs that reached an activity
    ready_events = [e.at_ms for e in record.container_events if e.kind == "ready"]
    if record.strategy is not Strategy.COARSE_GRAINED and timings and ready_events:
        assert max(ready_events) < min(t.start_ms for t in timings), "activity before provenance stack ready"

    # record completeness: every planned pull appears with a digest
    planned = {p.image for p in record.plan.phases if p.kind is PhaseKind.PULL}
    if record.outcome is Outcome.SUCCEEDED:
        recorded = {i.image_id for i in record.images}
        assert planned == recorded, f"images missing from record: {planned ^ recorded}"
    for image in record.images:
        assert image.digest.startswith("sha256:")

    # outcome consistency
    if record.outcome is Outcome.SUCCEEDED:
        assert all(t.exit_code == 0 for t in timings)
        assert record.failure_phase is None
    else:
        assert record.failure_phase is not None or record.outcome is Outcome.ABORTED


def write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))
    return path
