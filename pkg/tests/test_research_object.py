"""Research-object building, verification, and tamper detection."""

import io
import json
import tarfile

import pytest

from provforge.catalog import Catalog
from provforge.deployer import Deployer
from provforge.engine import SimScenario, SimulatedEngine
from provforge.errors import CorruptArchive, MissingArtifact, RunFailed
from provforge.planner import build_plan
from provforge.research_object import build_research_object, verify_research_object
from provforge.workflow import parse_spec

from conftest import register_denseed_stack, spec_doc, toy_scenario


@pytest.fixture
def finished_run(tmp_path):
    """A succeeded provenance-modular run whose prov volume holds a DB file."""
    prov_volume = tmp_path / "prov-db"
    prov_volume.mkdir()
    (prov_volume / "provenance.mdb").write_bytes(b"monetdb farm bytes")
    catalog = Catalog(tmp_path / "catalog")
    register_denseed_stack(catalog, prov_volume_host=str(prov_volume))
    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    record = Deployer(catalog, engine).deploy(plan, spec_document=spec, no_wrap=True)
    return catalog, record


def test_build_then_verify_round_trip(finished_run, tmp_path):
    catalog, record = finished_run
    archive = tmp_path / "bundle.provro"
    manifest = build_research_object(record, archive, catalog)
    report = verify_research_object(archive)
    assert report.ok, report.violations

    paths = {entry["path"] for entry in manifest.inventory}
    assert "run/record.json" in paths and "run/plan.json" in paths
    assert sum(1 for p in paths if p.startswith("run/logs/")) >= 6  # stdout+stderr per activity
    assert "recipe/combined_image.def" in paths
    assert any(p.startswith("images/") and p.endswith(".json") for p in paths)
    # the bound provenance volume was archived and referenced
    assert manifest.provenance_db == "volumes/db/0"
    assert f"{manifest.provenance_db}/provenance.mdb" in paths


def test_manifest_supports_reissuing_the_deploy(finished_run, tmp_path):
    catalog, record = finished_run
    manifest = build_research_object(record, tmp_path / "b.provro", catalog)
    assert manifest.workflow_spec["workflow_name"] == "denseed"
    assert manifest.workflow_spec["strategy"] == "provenance_modular"
    assert manifest.plan == record.plan.to_json_dict()
    assert manifest.run_record["run_id"] == record.run_id
    assert {img["record"]["name"] for img in manifest.images} >= {"denseed", "dfanalyzer", "monetdb"}


def test_missing_log_raises_missing_artifact(finished_run, tmp_path):
    catalog, record = finished_run
    victim = catalog.run_dir(record.run_id) / record.activity_timings[1].stdout_ref
    victim.unlink()
    with pytest.raises(MissingArtifact, match=victim.name):
        build_research_object(record, tmp_path / "b.provro", catalog)


def test_failed_run_still_wraps(tmp_path):
    catalog = Catalog(tmp_path / "catalog")
    register_denseed_stack(catalog)
    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, catalog)
    scenario = toy_scenario()
    scenario["commands"]["/wf/a1.py"] = {"exit_code": 1}
    engine = SimulatedEngine(SimScenario.from_json_dict(scenario))
    with pytest.raises(RunFailed) as excinfo:
        Deployer(catalog, engine).deploy(plan, spec_document=spec, no_wrap=True)
    record = excinfo.value.record

    archive = tmp_path / "failed.provro"
    manifest = build_research_object(record, archive, catalog)
    assert verify_research_object(archive).ok
    assert manifest.run_record["outcome"] == "failed"


def _flip_byte(archive, target, out_path):
    with tarfile.open(archive) as tar:
        members = [(m, tar.extractfile(m).read()) for m in tar.getmembers() if m.isfile()]
    with tarfile.open(out_path, "w") as out:
        for member, data in members:
            if member.name == target:
                mid = len(data) // 2
                data = data[:mid] + bytes([data[mid] ^ 0xFF]) + data[mid + 1 :]
            info = tarfile.TarInfo(member.name)
            info.size = len(data)
            out.addfile(info, io.BytesIO(data))


def test_single_byte_corruption_detected(finished_run, tmp_path):
    catalog, record = finished_run
    archive = tmp_path / "bundle.provro"
    manifest = build_research_object(record, archive, catalog)
    target = next(e["path"] for e in manifest.inventory if e["path"].startswith("volumes/") and e["size"] > 0)
    corrupted = tmp_path / "corrupted.provro"
    _flip_byte(archive, target, corrupted)
    report = verify_research_object(corrupted)
    assert not report.ok
    assert any(target in violation for violation in report.violations)


def test_missing_manifest_is_corrupt(finished_run, tmp_path):
    catalog, record = finished_run
    archive = tmp_path / "bundle.provro"
    build_research_object(record, archive, catalog)
    stripped = tmp_path / "stripped.provro"
    with tarfile.open(archive) as tar, tarfile.open(stripped, "w") as out:
        for member in tar.getmembers():
            if member.name == "manifest.json":
                continue
            data = tar.extractfile(member).read()
            info = tarfile.TarInfo(member.name)
            info.size = len(data)
            out.addfile(info, io.BytesIO(data))
    with pytest.raises(CorruptArchive):
        verify_research_object(stripped)


def test_garbage_file_is_corrupt(tmp_path):
    junk = tmp_path / "junk.provro"
    junk.write_bytes(b"this is not a tar archive")
    with pytest.raises(CorruptArchive):
        verify_research_object(junk)


def test_uninventoried_member_is_a_violation(finished_run, tmp_path):
    catalog, record = finished_run
    archive = tmp_path / "bundle.provro"
    build_research_object(record, archive, catalog)
    padded = tmp_path / "padded.provro"
    with tarfile.open(archive) as tar, tarfile.open(padded, "w") as out:
        for member in tar.getmembers():
            data = tar.extractfile(member).read()
            info = tarfile.TarInfo(member.name)
            info.size = len(data)
            out.addfile(info, io.BytesIO(data))
        smuggled = b"not in the manifest"
        info = tarfile.TarInfo("run/extra.bin")
        info.size = len(smuggled)
        out.addfile(info, io.BytesIO(smuggled))
    report = verify_research_object(padded)
    assert not report.ok
    assert any("run/extra.bin" in v for v in report.violations)


def test_determinism_modulo_created_at(finished_run, tmp_path):
    catalog, record = finished_run
    first, second = tmp_path / "a.provro", tmp_path / "b.provro"
    build_research_object(record, first, catalog)
    build_research_object(record, second, catalog)

    def members(path):
        with tarfile.open(path) as tar:
            return {m.name: tar.extractfile(m).read() for m in tar.getmembers() if m.isfile()}

    left, right = members(first), members(second)
    assert left.keys() == right.keys()
    for name in left:
        if name == "manifest.json":
            a, b = json.loads(left[name]), json.loads(right[name])
            a.pop("created_at"), b.pop("created_at")
            assert a == b
        else:
            assert left[name] == right[name], name
