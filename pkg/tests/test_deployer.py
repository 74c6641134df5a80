"""End-to-end simulated runs: timings, cleanup, status, and abort semantics."""

import json
import threading

import pytest

from provforge.deployer import Deployer, deploy
from provforge.engine import SimScenario, SimulatedEngine
from provforge.errors import AlreadyTerminal, RunFailed, UnknownRun
from provforge.planner import PhaseKind, build_plan
from provforge.runs import Outcome
from provforge.workflow import parse_spec

from conftest import assert_run_invariants, spec_doc, toy_scenario


def run_toy(catalog, strategy, scenario_doc=None, hook=None, no_wrap=True, spec_overrides=None):
    doc = spec_doc(strategy, **(spec_overrides or {}))
    spec = parse_spec(doc)
    plan = build_plan(spec, catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(scenario_doc or toy_scenario()))
    deployer = Deployer(catalog, engine, phase_hook=hook)
    record = deployer.deploy(plan, spec_document=spec, no_wrap=no_wrap)
    return deployer, record


def test_provenance_modular_toy_run(stocked_catalog):
    deployer, record = run_toy(stocked_catalog, "provenance_modular")
    assert record.outcome is Outcome.SUCCEEDED
    assert_run_invariants(record)

    # virtual-clock oracle: total activity time is exactly the scripted sum
    total = sum(t.end_ms - t.start_ms for t in record.activity_timings)
    assert total == 10000

    events = {(e.container, e.kind): e.at_ms for e in record.container_events}
    assert events[("db", "ready")] < events[("prov", "ready")]
    assert events[("prov", "ready")] < record.activity_timings[0].start_ms

    # eager workflow stop, provenance stack last
    assert events[("wf", "stopped")] <= events[("prov", "stopped")] <= events[("db", "stopped")]


def test_environment_label_recorded(stocked_catalog):
    _, record = run_toy(stocked_catalog, "coarse_grained")
    assert record.workflow_name == "denseed"
    assert record.environment_label == "test-env"
    assert record.prov_service == "dfanalyzer"


def test_coarse_run_starts_prov_stack_inside_container(stocked_catalog):
    _, record = run_toy(stocked_catalog, "coarse_grained")
    setups = [e for e in record.container_events if e.kind == "setup"]
    assert [e.container for e in setups] == ["all", "all"]  # monetdb then dfanalyzer
    assert all(e.at_ms <= record.activity_timings[0].start_ms for e in setups)
    assert_run_invariants(record)


def test_images_recorded_with_digests(stocked_catalog):
    _, record = run_toy(stocked_catalog, "provenance_modular")
    planned = {p.image for p in record.plan.phases if p.kind is PhaseKind.PULL}
    assert {i.image_id for i in record.images} == planned
    assert all(i.digest.startswith("sha256:") and i.registry for i in record.images)


def test_run_directory_layout(stocked_catalog):
    _, record = run_toy(stocked_catalog, "provenance_modular")
    run_dir = stocked_catalog.run_dir(record.run_id)
    assert (run_dir / "record.json").is_file()
    assert (run_dir / "plan.json").is_file()
    assert (run_dir / "artifacts" / "workflow_spec.json").is_file()
    for timing in record.activity_timings:
        assert timing.stdout_ref.startswith("logs/")
        assert (run_dir / timing.stdout_ref).is_file()
    stored = json.loads((run_dir / "record.json").read_text())
    assert stored["run_id"] == record.run_id


def test_readiness_timeout_fails_run_and_cleans_up(stocked_catalog):
    scenario = toy_scenario()
    scenario["containers"]["prov"] = {"never_ready": True}
    with pytest.raises(RunFailed) as excinfo:
        run_toy(stocked_catalog, "provenance_modular", scenario_doc=scenario)
    record = excinfo.value.record
    assert record.outcome is Outcome.FAILED
    assert record.failure_phase == "await_ready:prov"
    assert record.activity_timings == ()
    assert_run_invariants(record)
    # db was started before the failure and must have been stopped again
    kinds = {(e.container, e.kind) for e in record.container_events}
    assert ("db", "started") in kinds and ("db", "stopped") in kinds
    assert ("prov", "failed") in kinds
    # failures are provenance too: the record is queryable
    assert stocked_catalog.get_run(record.run_id).outcome is Outcome.FAILED


def test_activity_failure_is_fail_fast(stocked_catalog):
    scenario = toy_scenario()
    scenario["commands"]["/wf/a1.py"] = {"duration": 1.0, "exit_code": 1}
    with pytest.raises(RunFailed) as excinfo:
        run_toy(stocked_catalog, "provenance_modular", scenario_doc=scenario)
    record = excinfo.value.record
    assert record.outcome is Outcome.FAILED
    assert record.failure_phase == "run_activity:wf:a1"
    assert [t.activity for t in record.activity_timings] == ["a0", "a1"]  # a2 never ran
    assert record.activity_timings[-1].exit_code == 1
    assert_run_invariants(record)
    # provenance stack stopped after the workflow container
    events = {(e.container, e.kind): e.at_ms for e in record.container_events}
    assert events[("wf", "stopped")] <= events[("prov", "stopped")] <= events[("db", "stopped")]


def test_pull_failure_recorded(stocked_catalog):
    scenario = toy_scenario(images={"denseed:1.0": {"present": False}})
    with pytest.raises(RunFailed) as excinfo:
        run_toy(stocked_catalog, "provenance_modular", scenario_doc=scenario)
    record = excinfo.value.record
    assert record.failure_phase == "pull:denseed:1.0"
    assert "no such image" in record.failure_reason


def test_status_mid_run(stocked_catalog):
    observed = {}

    def hook(run_id, phase, index):
        if phase.kind is PhaseKind.RUN_ACTIVITY and phase.activity == "a1":
            observed["status"] = deployer_box["d"].status(run_id)

    deployer_box = {}

    def make(catalog, engine, hook):
        deployer = Deployer(catalog, engine, phase_hook=hook)
        deployer_box["d"] = deployer
        return deployer

    from provforge.engine import SimScenario, SimulatedEngine

    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, stocked_catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    deployer = make(stocked_catalog, engine, hook)
    record = deployer.deploy(plan, spec_document=spec, no_wrap=True)

    status = observed["status"]
    assert status.live
    assert status.current_phase == "run_activity:wf:a1"
    assert status.container_states["wf"] == "running"
    assert status.container_states["db"] == "ready"

    finished = deployer.status(record.run_id)
    assert not finished.live
    assert finished.outcome is Outcome.SUCCEEDED
    assert finished.elapsed_ms == record.duration_ms


def test_status_unknown_run(stocked_catalog):
    deployer = Deployer(stocked_catalog, SimulatedEngine(SimScenario()))
    with pytest.raises(UnknownRun):
        deployer.status("20991231T000000Z-ffffff")


def test_abort_between_activities(stocked_catalog):
    deployer_ref = {}

    def hook(run_id, phase, index):
        if phase.kind is PhaseKind.RUN_ACTIVITY and phase.activity == "a1":
            deployer_ref["d"].request_abort(run_id)

    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, stocked_catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    deployer = Deployer(stocked_catalog, engine, phase_hook=hook)
    deployer_ref["d"] = deployer
    record = deployer.deploy(plan, spec_document=spec, no_wrap=True)
    assert record.outcome is Outcome.ABORTED
    assert [t.activity for t in record.activity_timings] == ["a0"]
    assert_run_invariants(record)
    status = deployer.status(record.run_id)
    assert status.outcome is Outcome.ABORTED


def test_abort_finished_run_is_already_terminal(stocked_catalog):
    deployer, record = run_toy(stocked_catalog, "coarse_grained")
    with pytest.raises(AlreadyTerminal):
        deployer.request_abort(record.run_id)
    with pytest.raises(UnknownRun):
        deployer.request_abort("20991231T000000Z-ffffff")


def test_abort_run_from_another_thread(stocked_catalog):
    release = threading.Event()
    seen = threading.Event()
    run_box = {}

    def hook(run_id, phase, index):
        run_box.setdefault("run_id", run_id)
        if phase.kind is PhaseKind.RUN_ACTIVITY and phase.activity == "a1":
            seen.set()
            release.wait(5)

    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, stocked_catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    deployer = Deployer(stocked_catalog, engine, phase_hook=hook)

    result = {}

    def orchestrate():
        result["record"] = deployer.deploy(plan, spec_document=spec, no_wrap=True)

    thread = threading.Thread(target=orchestrate)
    thread.start()
    assert seen.wait(5)
    deployer.request_abort(run_box["run_id"])
    release.set()
    aborted = deployer.abort_run(run_box["run_id"], wait_timeout=10)
    thread.join(10)
    assert aborted.outcome is Outcome.ABORTED
    assert result["record"].run_id == aborted.run_id


def test_wrapper_invoked_on_success(stocked_catalog, tmp_path):
    deployer, record = run_toy(stocked_catalog, "provenance_modular", no_wrap=False)
    archive = stocked_catalog.run_dir(record.run_id) / "research_object.provro"
    assert archive.is_file()


def test_no_wrap_skips_archive(stocked_catalog):
    deployer, record = run_toy(stocked_catalog, "provenance_modular", no_wrap=True)
    assert not (stocked_catalog.run_dir(record.run_id) / "research_object.provro").exists()


def test_module_level_deploy_helper(stocked_catalog):
    spec = parse_spec(spec_doc("coarse_grained"))
    plan = build_plan(spec, stocked_catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    record = deploy(plan, engine, stocked_catalog, spec_document=spec, no_wrap=True)
    assert record.outcome is Outcome.SUCCEEDED


def test_all_three_strategies_satisfy_invariants(stocked_catalog):
    for strategy in ("coarse_grained", "partial_modular", "provenance_modular"):
        _, record = run_toy(stocked_catalog, strategy)
        assert record.outcome is Outcome.SUCCEEDED
        assert_run_invariants(record)
        assert sum(t.end_ms - t.start_ms for t in record.activity_timings) == 10000


def test_hook_exception_still_persists_provenance(stocked_catalog):
    def hook(run_id, phase, index):
        if phase.kind is PhaseKind.RUN_ACTIVITY and phase.activity == "a1":
            raise ZeroDivisionError("hook bug")

    spec = parse_spec(spec_doc("provenance_modular"))
    plan = build_plan(spec, stocked_catalog)
    engine = SimulatedEngine(SimScenario.from_json_dict(toy_scenario()))
    deployer = Deployer(stocked_catalog, engine, phase_hook=hook)
    with pytest.raises(ZeroDivisionError):
        deployer.deploy(plan, spec_document=spec, no_wrap=True)
    runs = stocked_catalog.query_runs(outcome="failed")
    assert len(runs) == 1
    record = runs[0]
    assert record.failure_reason.startswith("ZeroDivisionError")
    assert_run_invariants(record)


def test_run_record_json_round_trip(stocked_catalog):
    from provforge.runs import RunRecord

    _, record = run_toy(stocked_catalog, "provenance_modular")
    rebuilt = RunRecord.from_json_dict(json.loads(json.dumps(record.to_json_dict())))
    assert rebuilt == record
