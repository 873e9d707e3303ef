"""Fuzzy rule-based complex event processing for cardiovascular risk streams.

The package is organized as a small library:

* :mod:`cardiocep.model` -- immutable fuzzy-model value types
* :mod:`cardiocep.fcl` -- FCL parsing, canonical printing, validation
* :mod:`cardiocep.engine` -- Mamdani inference and risk classification
* :mod:`cardiocep.clinical` -- the built-in cardiovascular model and
  dataset adapters
* :mod:`cardiocep.stream` -- windowed stream runtime with hot rule deploy
* :mod:`cardiocep.cohort` -- deterministic synthetic cohorts
* :mod:`cardiocep.bench` -- throughput / deployment measurement harness
* :mod:`cardiocep.cli` -- the ``cardiocep`` command
"""

from .model import (
    Clause,
    FuzzyModel,
    InferenceSettings,
    LinguisticVariable,
    Rule,
    TermShape,
    TriangularTerm,
    left_shoulder,
    right_shoulder,
    singleton,
    triangle,
)
from .fcl import (
    Diagnostic,
    FclError,
    FclSemanticError,
    FclSyntaxError,
    parse_fcl,
    print_fcl,
    validate_model,
)
from .engine import (
    CrispResult,
    EngineError,
    FiredRule,
    MembershipVector,
    MissingVariable,
    NoRuleFired,
    RiskCategory,
    classify_risk,
    defuzzify_cog,
    fuzzify,
    infer,
    membership,
    rule_strength,
)
from .clinical import (
    PatientEvent,
    band_table,
    builtin_model,
    extended_model,
    parse_dataset_row,
    rule_prefix_model,
)
from .cohort import GeneratorSpec, generate, write_cohort
from .stream import (
    DeploymentReceipt,
    NdjsonSink,
    RejectedDeployment,
    RiskAssessment,
    RunSummary,
    SimulatedClock,
    SinkFailure,
    StreamEngine,
    WallClock,
    WindowSpec,
    WindowStats,
    assign_window,
    deploy_rules,
    open_source,
    process,
)

__version__ = "0.1.0"
