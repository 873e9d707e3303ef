"""Built-in cardiovascular model: guideline bands, rule base, event schema.

Fuzzy partitions are constructed from the published guideline bands: each
band's apex sits at its midpoint, feet extend to the neighbouring apexes,
and the first/last terms saturate outward as shoulders.  Open-ended bands
(">= v") put their knee half the preceding band's width above v.  The age
partition follows the guideline's deliberately overlapping bands and is
pinned explicitly below.

Naming note: the published rule table spells its glucose-driven variable
"cholestrol" and gives it diabetes-status terms.  The model names that
variable ``glucose`` (it is fed by the event's glucose field, in g/l) and
keeps a separate mmol/l ``cholesterol`` variable that no published rule
references.  ``INPUT_ALIASES`` accepts the original spelling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, fields, replace
from itertools import product
from pathlib import Path

from .engine import risk_output_variable
from .model import (
    Clause,
    FuzzyModel,
    InferenceSettings,
    LinguisticVariable,
    Rule,
    left_shoulder,
    right_shoulder,
    singleton,
    triangle,
)


class FormatError(ValueError):
    """A dataset record that cannot be converted to a PatientEvent."""

    def __init__(self, column: int | str, reason: str):
        super().__init__(f"column {column}: {reason}")
        self.column = column
        self.reason = reason


# ---- event schema ---------------------------------------------------------


@dataclass(frozen=True)
class PatientEvent:
    """One timestamped record of the cardio parameters."""

    event_id: str
    ts_ms: int
    age: float
    gender: int  # 1 female, 2 male
    height: float
    weight: float
    sbp: float
    dbp: float
    cholesterol: float  # mmol/l
    glucose: float  # g/l
    smoking: int
    alcohol: int
    active: int
    label: int | None = None  # dataset ground truth, passthrough

    def __post_init__(self) -> None:
        if self.age < 0:
            raise ValueError(f"age {self.age} < 0")
        if self.sbp <= 0 or self.dbp <= 0:
            raise ValueError(f"blood pressure must be positive, got {self.sbp}/{self.dbp}")
        if self.gender not in (1, 2):
            raise ValueError(f"gender code {self.gender} not in {{1, 2}}")
        for name in ("smoking", "alcohol", "active"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} flag {getattr(self, name)} not in {{0, 1}}")
        if self.ts_ms < 0:
            raise ValueError(f"timestamp {self.ts_ms} < 0")


CANONICAL_FIELDS = tuple(f.name for f in fields(PatientEvent))

# Model variable -> PatientEvent field feeding it.
EVENT_BINDING = {
    "age": "age",
    "systolic_bp": "sbp",
    "diastolic_bp": "dbp",
    "gender": "gender",
    "glucose": "glucose",
    "cholesterol": "cholesterol",
    "smoking": "smoking",
}

# Accepted spellings for inference inputs beyond the variable names.
INPUT_ALIASES = {
    "sbp": "systolic_bp",
    "dbp": "diastolic_bp",
    "cholestrol": "glucose",  # the rule table's original spelling
}


def event_inputs(event: PatientEvent) -> dict[str, float]:
    """Crisp inference inputs for one event, keyed by model variable name."""
    return {var: float(getattr(event, field)) for var, field in EVENT_BINDING.items()}


# ---- guideline band table ---------------------------------------------------


@dataclass(frozen=True)
class Band:
    label: str
    lo: float | None  # None = unbounded below
    hi: float | None  # None = unbounded above
    unit: str


@dataclass(frozen=True)
class ClinicalBandTable:
    """The guideline state table, verbatim, ordered by band floor.

    Includes the isolated systolic/diastolic hypertension rows even though
    they are excluded from the fuzzy partitions (they overlap the grade
    bands and surface as crisp assessment flags instead).
    """

    variables: dict[str, tuple[Band, ...]]

    def band(self, variable: str, label: str) -> Band:
        for band in self.variables[variable]:
            if band.label == label:
                return band
        raise KeyError(f"{variable!r} has no band {label!r}")


def band_table() -> ClinicalBandTable:
    def ordered(unit: str, *rows: tuple[str, float | None, float | None]) -> tuple[Band, ...]:
        bands = [Band(label, lo, hi, unit) for label, lo, hi in rows]
        return tuple(sorted(bands, key=lambda b: b.lo if b.lo is not None else float("-inf")))

    return ClinicalBandTable({
        "age": ordered(
            "years",
            ("Young", None, 45.0),
            ("Medium", 40.0, 65.0),
            ("Old", 60.0, 75.0),
            ("Very Old", 70.0, None),
        ),
        "sbp": ordered(
            "mmHg",
            ("Optimal", None, 120.0),
            ("Normal", 120.0, 129.0),
            ("Normally High", 130.0, 139.0),
            ("Grade 1 (Light)", 140.0, 159.0),
            ("Grade 2 (Moderate)", 160.0, 179.0),
            ("Systolic Hypertension (Isolated)", 140.0, None),
        ),
        "dbp": ordered(
            "mmHg",
            ("Optimal", None, 80.0),
            ("Normal", 80.0, 84.0),
            ("Normally High", 85.0, 89.0),
            ("Grade 1 (Light)", 90.0, 99.0),
            ("Grade 2 (Moderate)", 100.0, 109.0),
            ("Grade 3 (Severe)", 110.0, None),
            ("Diastolic Hypertension (Isolated)", None, 90.0),
        ),
        "gender": ordered("code", ("Female", 1.0, 1.0), ("Male", 2.0, 2.0)),
        "smoking": ordered("code", ("Non-Smoker", 0.0, 0.0), ("Smoker", 1.0, 1.0)),
        "diabetes": ordered(
            "g/l",
            ("Non-diabetic", 0.8, 1.0),
            ("Prediabetic", 1.01, 1.24),
            ("Diabetic", 1.26, None),
        ),
        "cholesterol": ordered(
            "mmol/l",
            ("Normal", None, 5.2),
            ("Medium", 5.2, 6.1),
            ("High", 6.2, None),
        ),
    })


# ---- fuzzy partitions -------------------------------------------------------

AGE_VARIABLE = LinguisticVariable("age", 0.0, 120.0, (
    left_shoulder("young", 0.0, 40.0, 52.5),
    triangle("medium", 40.0, 52.5, 67.5),
    triangle("old", 52.5, 67.5, 72.5),
    right_shoulder("very_old", 67.5, 72.5, 120.0),
), unit="years")

SBP_VARIABLE = LinguisticVariable("systolic_bp", 60.0, 220.0, (
    left_shoulder("optimal_sbp", 60.0, 90.0, 124.5),
    triangle("normal_sbp", 90.0, 124.5, 134.5),
    triangle("normally_high_sbp", 124.5, 134.5, 149.5),
    triangle("grade_1_sbp", 134.5, 149.5, 169.5),
    right_shoulder("grade_2_sbp", 149.5, 169.5, 220.0),
), unit="mmHg")

DBP_VARIABLE = LinguisticVariable("diastolic_bp", 30.0, 140.0, (
    left_shoulder("optimal_dbp", 30.0, 55.0, 82.0),
    triangle("normal_dbp", 55.0, 82.0, 87.0),
    triangle("normally_high_dbp", 82.0, 87.0, 94.5),
    triangle("grade_1_dbp", 87.0, 94.5, 104.5),
    triangle("grade_2_dbp", 94.5, 104.5, 114.5),
    right_shoulder("grade_3_dbp", 104.5, 114.5, 140.0),
), unit="mmHg")

GENDER_VARIABLE = LinguisticVariable("gender", 1.0, 2.0, (
    singleton("female", 1.0),
    singleton("male", 2.0),
), unit="code")

# Diabetes status read from blood glucose; knee of the open "diabetic" band
# sits half a band-width above its floor (1.26 + 0.23 / 2).
GLUCOSE_VARIABLE = LinguisticVariable("glucose", 0.4, 3.0, (
    left_shoulder("non_diabetic", 0.4, 0.9, 1.125),
    triangle("prediabetic", 0.9, 1.125, 1.375),
    right_shoulder("diabetic", 1.125, 1.375, 3.0),
), unit="g/l")

# The "high" knee is pinned at 6.2 + 0.3 so the categorical code-3
# representative (6.5 mmol/l) is fully inside the band.
CHOLESTEROL_VARIABLE = LinguisticVariable("cholesterol", 2.0, 10.0, (
    left_shoulder("normal", 2.0, 3.6, 5.65),
    triangle("medium", 3.6, 5.65, 6.5),
    right_shoulder("high", 5.65, 6.5, 10.0),
), unit="mmol/l")

SMOKING_VARIABLE = LinguisticVariable("smoking", 0.0, 1.0, (
    singleton("non_smoker", 0.0),
    singleton("smoker", 1.0),
), unit="code")

_INPUT_VARIABLES = (
    AGE_VARIABLE,
    SBP_VARIABLE,
    DBP_VARIABLE,
    GENDER_VARIABLE,
    GLUCOSE_VARIABLE,
    CHOLESTEROL_VARIABLE,
    SMOKING_VARIABLE,
)

_SETTINGS = InferenceSettings(resolution=1000, default_output=50.0)

# The ten published rules.  Rule 6 appears in the source table with two
# consequents; the Then-column value (medium_risk) is the one adopted.
_PUBLISHED_RULES = (
    (1, "young", "optimal_sbp", "optimal_dbp", "female", "non_diabetic", "non_smoker", "low_risk"),
    (2, "young", "normal_sbp", "normal_dbp", "male", "prediabetic", "smoker", "medium_risk"),
    (3, "young", "normally_high_sbp", "normally_high_dbp", "male", "diabetic", "smoker", "high_risk"),
    (4, "young", "normal_sbp", "normal_dbp", "female", "non_diabetic", "non_smoker", "low_risk"),
    (5, "young", "normally_high_sbp", "normally_high_dbp", "female", "prediabetic", "non_smoker", "high_risk"),
    (6, "medium", "optimal_sbp", "optimal_dbp", "female", "non_diabetic", "non_smoker", "medium_risk"),
    (7, "medium", "normal_sbp", "normal_dbp", "male", "prediabetic", "smoker", "medium_risk"),
    (8, "medium", "normally_high_sbp", "normally_high_dbp", "male", "diabetic", "smoker", "high_risk"),
    (9, "medium", "normal_sbp", "normal_dbp", "female", "non_diabetic", "non_smoker", "low_risk"),
    (10, "medium", "normally_high_sbp", "normally_high_dbp", "female", "prediabetic", "non_smoker", "high_risk"),
)


def _published_rules() -> tuple[Rule, ...]:
    rules = []
    for num, age, sbp, dbp, gender, glucose, smoking, risk in _PUBLISHED_RULES:
        rules.append(Rule(
            id=f"RULE_{num}",
            antecedent=(
                Clause("age", age),
                Clause("systolic_bp", sbp),
                Clause("diastolic_bp", dbp),
                Clause("gender", gender),
                Clause("glucose", glucose),
                Clause("smoking", smoking),
            ),
            consequent=Clause("risk", risk),
        ))
    return tuple(rules)


def builtin_model() -> FuzzyModel:
    """The clinical model with exactly the ten published rules."""
    return FuzzyModel(
        name="cardio_risk",
        inputs=_INPUT_VARIABLES,
        output=risk_output_variable(),
        rules=_published_rules(),
        settings=_SETTINGS,
    )


# ---- extended rule set ------------------------------------------------------

AGE_RANK = {"young": 0, "medium": 1, "old": 2, "very_old": 3}
SBP_RANK = {"optimal_sbp": 0, "normal_sbp": 1, "normally_high_sbp": 2, "grade_1_sbp": 3, "grade_2_sbp": 4}
# grade_3 shares the top of the 0-4 pressure scale
DBP_RANK = {"optimal_dbp": 0, "normal_dbp": 1, "normally_high_dbp": 2, "grade_1_dbp": 3, "grade_2_dbp": 4, "grade_3_dbp": 4}
GLUCOSE_RANK = {"non_diabetic": 0, "prediabetic": 1, "diabetic": 2}

SEVERITY_ORDER = ("very_low_risk", "low_risk", "medium_risk", "high_risk", "very_high_risk")


def severity_points(
    age: str, sbp: str, gender: str, smoking: str, glucose: str, dbp: str | None = None,
) -> int:
    """Additive risk-factor score used to fill the unpublished rules."""
    pressure = SBP_RANK[sbp]
    if dbp is not None:
        pressure = max(pressure, DBP_RANK[dbp])
    return (
        AGE_RANK[age]
        + pressure
        + (2 if smoking == "smoker" else 0)
        + GLUCOSE_RANK[glucose]
        + (1 if gender == "male" else 0)
    )


def severity_consequent(points: int) -> str:
    if points <= 1:
        return "very_low_risk"
    if points <= 3:
        return "low_risk"
    if points <= 6:
        return "medium_risk"
    if points <= 9:
        return "high_risk"
    return "very_high_risk"


def extended_model() -> FuzzyModel:
    """The published rules plus a generated rule for every combination of
    age, systolic pressure, gender, smoking, and diabetes status.

    Published rules come first (so a deterministic prefix of length ten is
    exactly the published set) and keep their antecedents verbatim; the
    generated five-clause rules carry consequents from the severity score.
    """
    rules = list(_published_rules())
    num = len(rules) + 1
    for age, sbp, gender, smoking, glucose in product(
        AGE_VARIABLE.term_names(),
        SBP_VARIABLE.term_names(),
        GENDER_VARIABLE.term_names(),
        SMOKING_VARIABLE.term_names(),
        GLUCOSE_VARIABLE.term_names(),
    ):
        consequent = severity_consequent(severity_points(age, sbp, gender, smoking, glucose))
        rules.append(Rule(
            id=f"RULE_{num}",
            antecedent=(
                Clause("age", age),
                Clause("systolic_bp", sbp),
                Clause("gender", gender),
                Clause("smoking", smoking),
                Clause("glucose", glucose),
            ),
            consequent=Clause("risk", consequent),
        ))
        num += 1
    return FuzzyModel(
        name="cardio_risk_extended",
        inputs=_INPUT_VARIABLES,
        output=risk_output_variable(),
        rules=tuple(rules),
        settings=_SETTINGS,
    )


def rule_prefix_model(model: FuzzyModel, count: int, name: str | None = None) -> FuzzyModel:
    """Model restricted to the first ``count`` rules (for benchmark grids)."""
    if not 1 <= count <= len(model.rules):
        raise ValueError(f"rule count {count} outside 1..{len(model.rules)}")
    return replace(model, name=name or f"{model.name}_{count}", rules=model.rules[:count])


def rule_archetype(model: FuzzyModel, rule_id: str) -> dict[str, float]:
    """Crisp inputs at the apex of each antecedent term of one rule."""
    for rule in model.rules:
        if rule.id == rule_id:
            return {cl.variable: model.variable(cl.variable).term(cl.term).b for cl in rule.antecedent}
    raise KeyError(f"model has no rule {rule_id!r}")


# ---- dataset ingestion ------------------------------------------------------

# Representative concentrations for the public dataset's categorical codes
# (band interiors; adapter constants, not guideline values).
KAGGLE_CHOLESTEROL_MMOL_L = {1: 4.5, 2: 5.65, 3: 6.5}
KAGGLE_GLUCOSE_G_L = {1: 0.9, 2: 1.12, 3: 1.4}

_KAGGLE_COLUMNS = 13
DAYS_PER_YEAR = 365.25


def _num(raw: str, column: int | str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise FormatError(column, f"not numeric: {raw!r}") from None


def _int_code(raw: str, column: int | str, allowed: tuple[int, ...]) -> int:
    value = _num(raw, column)
    if value != int(value) or int(value) not in allowed:
        raise FormatError(column, f"code {raw!r} not in {sorted(allowed)}")
    return int(value)


def parse_dataset_row(line: str, format: str = "kaggle-cardio") -> PatientEvent:
    """Convert one dataset line to a canonical :class:`PatientEvent`.

    ``kaggle-cardio`` rows are semicolon-separated with 13 columns
    (id, age-in-days, gender, height, weight, ap_hi, ap_lo, cholesterol
    code, glucose code, smoke, alco, active, cardio); ages convert to
    years and the categorical codes to representative concentrations.
    ``canonical-csv`` rows are comma-separated in CANONICAL_FIELDS order.
    """
    if format == "kaggle-cardio":
        parts = [p.strip() for p in line.strip().split(";")]
        if len(parts) != _KAGGLE_COLUMNS:
            raise FormatError("arity", f"expected {_KAGGLE_COLUMNS} columns, got {len(parts)}")
        try:
            return PatientEvent(
                event_id=parts[0],
                ts_ms=0,
                age=_num(parts[1], 2) / DAYS_PER_YEAR,
                gender=_int_code(parts[2], 3, (1, 2)),
                height=_num(parts[3], 4),
                weight=_num(parts[4], 5),
                sbp=_num(parts[5], 6),
                dbp=_num(parts[6], 7),
                cholesterol=KAGGLE_CHOLESTEROL_MMOL_L[_int_code(parts[7], 8, (1, 2, 3))],
                glucose=KAGGLE_GLUCOSE_G_L[_int_code(parts[8], 9, (1, 2, 3))],
                smoking=_int_code(parts[9], 10, (0, 1)),
                alcohol=_int_code(parts[10], 11, (0, 1)),
                active=_int_code(parts[11], 12, (0, 1)),
                label=_int_code(parts[12], 13, (0, 1)),
            )
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError("record", str(exc)) from None
    if format == "canonical-csv":
        row = next(csv.reader([line]))
        return event_from_row(row)
    raise ValueError(f"unknown dataset format {format!r}")


def event_from_row(row: list[str]) -> PatientEvent:
    if len(row) != len(CANONICAL_FIELDS):
        raise FormatError("arity", f"expected {len(CANONICAL_FIELDS)} columns, got {len(row)}")
    try:
        return PatientEvent(
            event_id=row[0],
            ts_ms=int(_num(row[1], "ts_ms")),
            age=_num(row[2], "age"),
            gender=_int_code(row[3], "gender", (1, 2)),
            height=_num(row[4], "height"),
            weight=_num(row[5], "weight"),
            sbp=_num(row[6], "sbp"),
            dbp=_num(row[7], "dbp"),
            cholesterol=_num(row[8], "cholesterol"),
            glucose=_num(row[9], "glucose"),
            smoking=_int_code(row[10], "smoking", (0, 1)),
            alcohol=_int_code(row[11], "alcohol", (0, 1)),
            active=_int_code(row[12], "active", (0, 1)),
            label=None if row[13] == "" else _int_code(row[13], "label", (0, 1)),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError("record", str(exc)) from None


def event_to_row(event: PatientEvent) -> list[str]:
    def cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)  # shortest exact round-trip form
        return str(value)

    return [cell(getattr(event, name)) for name in CANONICAL_FIELDS]


def event_to_json(event: PatientEvent) -> str:
    obj = {name: getattr(event, name) for name in CANONICAL_FIELDS}
    return json.dumps(obj, separators=(", ", ": "))


def event_from_json(line: str) -> PatientEvent:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError("record", f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FormatError("record", "expected a JSON object")
    unknown = set(obj) - set(CANONICAL_FIELDS)
    if unknown:
        raise FormatError("record", f"unknown fields: {sorted(unknown)}")
    missing = set(CANONICAL_FIELDS) - {"label"} - set(obj)
    if missing:
        raise FormatError("record", f"missing fields: {sorted(missing)}")
    try:
        return PatientEvent(
            event_id=str(obj["event_id"]),
            ts_ms=int(obj["ts_ms"]),
            age=float(obj["age"]),
            gender=int(obj["gender"]),
            height=float(obj["height"]),
            weight=float(obj["weight"]),
            sbp=float(obj["sbp"]),
            dbp=float(obj["dbp"]),
            cholesterol=float(obj["cholesterol"]),
            glucose=float(obj["glucose"]),
            smoking=int(obj["smoking"]),
            alcohol=int(obj["alcohol"]),
            active=int(obj["active"]),
            label=None if obj.get("label") is None else int(obj["label"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError("record", str(exc)) from None


def is_header_line(line: str, format: str) -> bool:
    """Header rows are detected by a non-numeric first field."""
    sep = ";" if format == "kaggle-cardio" else ","
    first = line.split(sep, 1)[0].strip()
    if format == "canonical-csv":
        return first == "event_id"
    try:
        float(first)
        return False
    except ValueError:
        return True


def write_events_csv(events, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_FIELDS)
        for event in events:
            writer.writerow(event_to_row(event))


def write_events_ndjson(events, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event_to_json(event) + "\n")


def builtin_fcl_path() -> Path:
    """Location of the shipped FCL source for :func:`builtin_model`."""
    return Path(__file__).parent / "data" / "cardio_risk.fcl"


def extended_fcl_path() -> Path:
    return Path(__file__).parent / "data" / "cardio_risk_extended.fcl"
