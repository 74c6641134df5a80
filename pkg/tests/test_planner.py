"""Plan construction, ordering guarantees, and structural validation."""

import itertools
import json

import pytest

from provforge.errors import InvalidPlan, NoDefaultProvService, PortCollision, UnknownService
from provforge.models import PortSpec
from provforge.planner import DeploymentPlan, Phase, PhaseKind, build_plan, validate_plan
from provforge.workflow import Strategy, classify_topology, parse_spec

from conftest import make_image, set_partitions, spec_doc


def _phases(plan):
    return [p.describe() for p in plan.phases]


def test_provenance_modular_phase_sequence(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("provenance_modular")), stocked_catalog)
    assert _phases(plan) == [
        "pull:monetdb:1.0",
        "pull:dfanalyzer:1.0",
        "pull:denseed:1.0",
        "start_container:db",
        "await_ready:db",
        "start_container:prov",
        "await_ready:prov",
        "start_container:wf",
        "run_activity:wf:a0",
        "run_activity:wf:a1",
        "run_activity:wf:a2",
        "stop_container:wf",
        "stop_container:prov",
        "stop_container:db",
    ]


def test_coarse_phase_sequence(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("coarse_grained")), stocked_catalog)
    assert _phases(plan) == [
        "pull:denseed:1.0",
        "start_container:all",
        "run_activity:all:a0",
        "run_activity:all:a1",
        "run_activity:all:a2",
        "stop_container:all",
    ]


def test_fine_grained_sequence_is_the_unique_valid_one(stocked_catalog):
    """Brute force: of all 9! orderings of the lifecycle phases, exactly one
    satisfies lazy start, eager stop, and activity order; build_plan emits it."""
    doc = spec_doc("fine_grained")
    doc["container_groups"] = doc["container_groups"][:3]  # drop the prov stack groups
    plan = build_plan(parse_spec(doc), stocked_catalog)
    emitted = [p for p in plan.phases if p.kind is not PhaseKind.PULL]

    containers = [f"wf{i}" for i in range(3)]
    items = []
    for i, container in enumerate(containers):
        items += [("start", container), ("run", f"a{i}", container), ("stop", container)]

    def valid(seq):
        pos = {item: k for k, item in enumerate(seq)}
        for i, container in enumerate(containers):
            start, run, stop = pos[("start", container)], pos[("run", f"a{i}", container)], pos[("stop", container)]
            if not (start == run - 1 and stop == run + 1):  # lazy start, eager stop
                return False
        runs = [pos[("run", f"a{i}", containers[i])] for i in range(3)]
        return runs == sorted(runs)

    survivors = [seq for seq in itertools.permutations(items) if valid(seq)]
    assert len(survivors) == 1
    expected = survivors[0]
    got = tuple(
        ("run", p.activity, p.container) if p.kind is PhaseKind.RUN_ACTIVITY
        else ("start" if p.kind is PhaseKind.START_CONTAINER else "stop", p.container)
        for p in emitted
    )
    assert got == expected


def test_lazy_start_eager_stop_interleaving(stocked_catalog):
    doc = spec_doc("coarse_grained", n=3)
    doc["strategy"] = "hybrid_other"
    doc["container_groups"] = [
        {"name": "g1", "image": "denseed", "activities": ["a0", "a2"], "role": "workflow"},
        {"name": "g2", "image": "denseed", "activities": ["a1"], "role": "workflow"},
        {"name": "prov", "image": "dfanalyzer", "role": "prov_service"},
    ]
    plan = build_plan(parse_spec(doc), stocked_catalog)
    seq = _phases(plan)
    # g1 hosts a0 and a2: starts at a0, stays up across a1, stops after a2
    assert seq.index("start_container:g1") < seq.index("run_activity:g1:a0")
    assert seq.index("start_container:g2") > seq.index("run_activity:g1:a0")
    assert seq.index("stop_container:g2") < seq.index("run_activity:g1:a2")
    assert seq.index("stop_container:g1") > seq.index("run_activity:g1:a2")


def test_auto_port_assignment(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("provenance_modular")), stocked_catalog)
    hosts = {c: [p.host_port for p in ports] for c, ports in plan.port_assignments.items()}
    assert hosts["db"] == [49152]
    assert hosts["prov"] == [49153]
    all_ports = [p for ports in hosts.values() for p in ports]
    assert len(all_ports) == len(set(all_ports))
    assert 0 not in all_ports


def test_explicit_port_collision(catalog):
    catalog.register_image(make_image("svc-a", ports=(PortSpec(80, 8080),), cmd=("a",)))
    catalog.register_image(make_image("svc-b", ports=(PortSpec(81, 8080),), cmd=("b",)))
    catalog.register_image(make_image("wf"))
    from provforge.catalog import ProvenanceServiceRecord

    catalog.register_prov_service(ProvenanceServiceRecord(service_name="svc", image="svc-a"))
    doc = {
        "workflow_name": "toy",
        "strategy": "hybrid_other",
        "activities": [
            {"name": "a0", "script": "/wf/a0.py", "order_index": 0},
            {"name": "a1", "script": "/wf/a1.py", "order_index": 1},
        ],
        "container_groups": [
            {"name": "wf", "image": "wf", "activities": ["a0", "a1"], "role": "workflow"},
            {"name": "s1", "image": "svc-a", "role": "prov_service"},
            {"name": "s2", "image": "svc-b", "role": "prov_service"},
        ],
    }
    with pytest.raises(PortCollision):
        build_plan(parse_spec(doc), catalog)


def test_coarse_plan_bundles_prov_stack_ports_and_volumes(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("coarse_grained")), stocked_catalog)
    ports = {p.container_port for p in plan.port_assignments["all"]}
    assert ports == {50000, 22000}  # monetdb + dfanalyzer, inherited by the single container


def test_plan_determinism(stocked_catalog):
    first = build_plan(parse_spec(spec_doc("provenance_modular")), stocked_catalog)
    second = build_plan(parse_spec(spec_doc("provenance_modular")), stocked_catalog)
    assert first.to_json_text() == second.to_json_text()


def test_plan_json_round_trip(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("partial_modular")), stocked_catalog)
    parsed = DeploymentPlan.from_json_dict(json.loads(plan.to_json_text()))
    assert parsed == plan
    validate_plan(parsed)


def test_default_prov_service_injected(stocked_catalog):
    plan = build_plan(parse_spec(spec_doc("coarse_grained")), stocked_catalog)
    assert plan.prov_service == "dfanalyzer"


def test_no_default_prov_service(catalog):
    catalog.register_image(make_image("denseed"))
    with pytest.raises(NoDefaultProvService):
        build_plan(parse_spec(spec_doc("coarse_grained")), catalog)


def test_unknown_prov_service_in_spec(stocked_catalog):
    doc = spec_doc("coarse_grained", prov_service="ghost")
    with pytest.raises(UnknownService):
        build_plan(parse_spec(doc), stocked_catalog)


def test_validate_plan_accepts_all_built_plans(stocked_catalog):
    for strategy in ("coarse_grained", "partial_modular", "provenance_modular", "fine_grained"):
        validate_plan(build_plan(parse_spec(spec_doc(strategy)), stocked_catalog))


def _toy_plan(phases) -> DeploymentPlan:
    return DeploymentPlan(
        run_label="toy-coarse_grained",
        strategy=Strategy.COARSE_GRAINED,
        prov_service="svc",
        phases=tuple(phases),
    )


def test_validate_plan_activity_before_start():
    plan = _toy_plan(
        [
            Phase(kind=PhaseKind.PULL, image="img:1"),
            Phase(kind=PhaseKind.RUN_ACTIVITY, image="img:1", container="c", activity="a0"),
            Phase(kind=PhaseKind.START_CONTAINER, image="img:1", container="c"),
            Phase(kind=PhaseKind.STOP_CONTAINER, image="img:1", container="c"),
        ]
    )
    with pytest.raises(InvalidPlan, match="activity before start"):
        validate_plan(plan)


def test_validate_plan_unbalanced_start_stop():
    plan = _toy_plan(
        [
            Phase(kind=PhaseKind.PULL, image="img:1"),
            Phase(kind=PhaseKind.START_CONTAINER, image="img:1", container="c"),
        ]
    )
    with pytest.raises(InvalidPlan, match="unbalanced"):
        validate_plan(plan)


def test_validate_plan_start_before_pull():
    plan = _toy_plan(
        [
            Phase(kind=PhaseKind.START_CONTAINER, image="img:1", container="c"),
            Phase(kind=PhaseKind.STOP_CONTAINER, image="img:1", container="c"),
        ]
    )
    with pytest.raises(InvalidPlan, match="pull"):
        validate_plan(plan)


def test_activity_order_preserved_over_all_partitions(stocked_catalog):
    """For every set partition of up to 6 activities into workflow groups, the
    run_activity projection equals the activities sorted by order_index."""
    for n in range(1, 7):
        for blocks in set_partitions(list(range(n))):
            doc = spec_doc("coarse_grained", n=n)
            doc["strategy"] = "hybrid_other"
            doc["container_groups"] = [
                {
                    "name": f"g{i}",
                    "image": "denseed",
                    "activities": [f"a{j}" for j in block],
                    "role": "workflow",
                }
                for i, block in enumerate(blocks)
            ] + [{"name": "prov", "image": "dfanalyzer", "role": "prov_service"}]
            doc["strategy"] = classify_topology(parse_spec(doc)).value
            spec = parse_spec(doc)
            plan = build_plan(spec, stocked_catalog)
            validate_plan(plan)
            ran = [p.activity for p in plan.phases if p.kind is PhaseKind.RUN_ACTIVITY]
            assert ran == [f"a{j}" for j in range(n)]


def test_build_plan_fails_closed_on_strategy_mismatch(stocked_catalog):
    from provforge.errors import StrategyMismatch

    doc = spec_doc("provenance_modular")
    doc["strategy"] = "coarse_grained"  # one declared container, three real groups
    with pytest.raises(StrategyMismatch):
        build_plan(parse_spec(doc), stocked_catalog)
