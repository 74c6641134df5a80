"""provforge: deploy containerized scientific workflows with provenance capture.

The package turns a JSON workflow spec plus an image catalog into an ordered
deployment plan, executes it under a user-selected containerization strategy
(coarse-grained, partial-modular, provenance-modular, fine-grained, or other
hybrids), records two-level provenance (container lifecycle + workflow
timings), and wraps finished runs into verifiable research objects. Recorded
runs can be compared across strategies with one-way ANOVA and Bonferroni
post-hoc tests.
"""

from .analytics import (
    AnovaResult,
    GroupSummary,
    PairwiseComparison,
    StrategySample,
    anova_one_way,
    bonferroni_posthoc,
    summarize_runs,
)
from .catalog import Catalog, ImageRecord, ProvenanceServiceRecord
from .deployer import Deployer, RunStatus, deploy
from .engine import (
    ContainerHandle,
    ContainerState,
    ExternalEngine,
    SimScenario,
    SimulatedEngine,
    load_engine,
)
from .errors import ProvForgeError
from .models import PortSpec, ProbeKind, ReadinessProbe, VolumeMode, VolumeSpec
from .planner import DeploymentPlan, Phase, PhaseKind, build_plan, validate_plan
from .research_object import build_research_object, verify_research_object
from .runs import Outcome, RunRecord
from .workflow import (
    Activity,
    ContainerGroup,
    GroupRole,
    Strategy,
    WorkflowSpec,
    infer_strategy,
    parse_spec,
    validate_against_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "Activity",
    "AnovaResult",
    "Catalog",
    "ContainerGroup",
    "ContainerHandle",
    "ContainerState",
    "Deployer",
    "DeploymentPlan",
    "ExternalEngine",
    "GroupRole",
    "GroupSummary",
    "ImageRecord",
    "Outcome",
    "PairwiseComparison",
    "Phase",
    "PhaseKind",
    "PortSpec",
    "ProbeKind",
    "ProvForgeError",
    "ProvenanceServiceRecord",
    "ReadinessProbe",
    "RunRecord",
    "RunStatus",
    "SimScenario",
    "SimulatedEngine",
    "Strategy",
    "StrategySample",
    "VolumeMode",
    "VolumeSpec",
    "WorkflowSpec",
    "anova_one_way",
    "bonferroni_posthoc",
    "build_plan",
    "build_research_object",
    "deploy",
    "infer_strategy",
    "load_engine",
    "parse_spec",
    "summarize_runs",
    "validate_against_catalog",
    "validate_plan",
    "verify_research_object",
]
