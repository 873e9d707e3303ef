"""Mamdani min/max inference over a :class:`~cardiocep.model.FuzzyModel`.

Pipeline: fuzzify crisp inputs, take the MIN over each rule's antecedent
degrees (scaled by the rule weight), clip the consequent term at that
strength, accumulate all clipped terms by pointwise MAX over a sampled
output universe, and defuzzify by centre of gravity.  Every operation is a
pure function of immutable arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Mapping

import numpy as np

from .model import (
    FuzzyModel,
    LinguisticVariable,
    Rule,
    TermShape,
    TriangularTerm,
    left_shoulder,
    right_shoulder,
    triangle,
)


class EngineError(Exception):
    """Base class for inference failures."""


class NotFinite(EngineError):
    def __init__(self, variable: str, value: float):
        super().__init__(f"variable {variable!r} received non-finite value {value!r}")
        self.variable = variable


class MissingVariable(EngineError):
    def __init__(self, names):
        names = sorted(names)
        super().__init__("missing value for variable(s): " + ", ".join(names))
        self.names = names


class NoRuleFired(EngineError):
    def __init__(self):
        super().__init__("every rule evaluated to zero strength")


class EmptyActivation(EngineError):
    def __init__(self):
        super().__init__("no output term carries a positive clip level")


class OutOfUniverse(EngineError):
    def __init__(self, score: float, lo: float, hi: float):
        super().__init__(f"score {score} outside output universe [{lo}, {hi}]")
        self.score = score


def membership(term: TriangularTerm, x):
    """Degree to which ``x`` belongs to ``term``, per the piecewise-linear form.

    For a proper triangle (a < b < c):

    * 0 for x <= a,
    * (x - a) / (b - a) for a <= x <= b,
    * (c - x) / (c - b) for b <= x <= c,
    * 0 for x >= c.

    Shoulders saturate at 1 on their closed side and singletons are 1 only
    at exactly b.  Accepts a float or a numpy array; total over the reals.
    """
    a, b, c = term.a, term.b, term.c
    if isinstance(x, np.ndarray):
        return _membership_array(term, x)
    if term.shape is TermShape.SINGLETON:
        return 1.0 if x == b else 0.0
    if term.shape is TermShape.LEFT_SHOULDER:
        if x <= b:
            return 1.0
        if x >= c:
            return 0.0
        return (c - x) / (c - b)
    if term.shape is TermShape.RIGHT_SHOULDER:
        if x >= b:
            return 1.0
        if x <= a:
            return 0.0
        return (x - a) / (b - a)
    if x <= a or x >= c:
        return 0.0
    if x <= b:
        return (x - a) / (b - a)
    return (c - x) / (c - b)


def _membership_array(term: TriangularTerm, xs: np.ndarray) -> np.ndarray:
    a, b, c = term.a, term.b, term.c
    xs = np.asarray(xs, dtype=float)
    if term.shape is TermShape.SINGLETON:
        return np.where(xs == b, 1.0, 0.0)
    if term.shape is TermShape.LEFT_SHOULDER:
        down = (c - xs) / (c - b)
        return np.clip(np.where(xs <= b, 1.0, down), 0.0, 1.0)
    if term.shape is TermShape.RIGHT_SHOULDER:
        up = (xs - a) / (b - a)
        return np.clip(np.where(xs >= b, 1.0, up), 0.0, 1.0)
    up = (xs - a) / (b - a)
    down = (c - xs) / (c - b)
    return np.clip(np.minimum(up, down), 0.0, 1.0)


@dataclass(frozen=True)
class MembershipVector:
    """Per-term degrees of one variable for one crisp input."""

    variable: str
    entries: dict[str, float]
    clamped: bool = False


@dataclass(frozen=True)
class FiredRule:
    rule_id: str
    strength: float


@dataclass(frozen=True)
class CrispResult:
    """Outcome of one inference: crisp score plus the evidence behind it."""

    score: float
    category: str
    fired: tuple[FiredRule, ...]
    memberships: tuple[MembershipVector, ...]


def fuzzify(variable: LinguisticVariable, x: float) -> MembershipVector:
    """Map a crisp value to one degree per term of ``variable``.

    Values outside the universe are clamped to its edges and the vector is
    flagged, so outlier sensor readings still score instead of failing.
    """
    if not math.isfinite(x):
        raise NotFinite(variable.name, x)
    clamped = False
    if x < variable.lo:
        x, clamped = variable.lo, True
    elif x > variable.hi:
        x, clamped = variable.hi, True
    entries = {t.name: membership(t, x) for t in variable.terms}
    return MembershipVector(variable.name, entries, clamped)


def rule_strength(rule: Rule, memberships: Mapping[str, MembershipVector]) -> float:
    """MIN over the antecedent clause degrees, scaled by the rule weight."""
    missing = [cl.variable for cl in rule.antecedent if cl.variable not in memberships]
    if missing:
        raise MissingVariable(missing)
    degree = min(memberships[cl.variable].entries[cl.term] for cl in rule.antecedent)
    return degree * rule.weight


def defuzzify_cog(
    activated: Mapping[str, float],
    output: LinguisticVariable,
    resolution: int = 1000,
) -> float:
    """Centroid of the MAX envelope of clipped output terms.

    The envelope is sampled at ``resolution`` equally spaced points across
    the output universe (endpoints included).
    """
    clips = {name: level for name, level in activated.items() if level > 0.0}
    if not clips:
        raise EmptyActivation()
    grid = np.linspace(output.lo, output.hi, resolution)
    envelope = np.zeros_like(grid)
    for name, level in clips.items():
        np.maximum(envelope, np.minimum(membership(output.term(name), grid), level), out=envelope)
    mass = envelope.sum()
    if mass == 0.0:
        raise EmptyActivation()
    return float(np.dot(grid, envelope) / mass)


class RiskCategory(Enum):
    """Five-band cardiovascular risk scale, ascending severity."""

    VERY_LOW = "VeryLow"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    VERY_HIGH = "VeryHigh"

    @property
    def label(self) -> str:
        return self.value

    @property
    def severity(self) -> int:
        return list(RiskCategory).index(self)

    @classmethod
    def from_label(cls, label: str) -> "RiskCategory":
        for cat in cls:
            if cat.value == label:
                return cat
        raise ValueError(f"unknown risk category {label!r}")


# Risk-score partition over [0, 100] percent.  Supports follow the published
# band ranges (<20 / 15-45 / 35-65 / 55-85 / >75); apexes sit at band
# midpoints so each band has a unique fully-saturated representative point.
RISK_TERMS = (
    left_shoulder("very_low_risk", 0.0, 0.0, 20.0),
    triangle("low_risk", 15.0, 30.0, 45.0),
    triangle("medium_risk", 35.0, 50.0, 65.0),
    triangle("high_risk", 55.0, 70.0, 85.0),
    right_shoulder("very_high_risk", 75.0, 100.0, 100.0),
)

_RISK_TERM_TO_CATEGORY = {
    "very_low_risk": RiskCategory.VERY_LOW,
    "low_risk": RiskCategory.LOW,
    "medium_risk": RiskCategory.MEDIUM,
    "high_risk": RiskCategory.HIGH,
    "very_high_risk": RiskCategory.VERY_HIGH,
}


def risk_output_variable() -> LinguisticVariable:
    """The canonical `risk` output variable shared by the clinical models."""
    return LinguisticVariable("risk", 0.0, 100.0, RISK_TERMS, unit="percent")


def _argmax_term(output: LinguisticVariable, score: float) -> str:
    """Winning output term at ``score``; ties go to the later-declared term.

    Term declaration order is ascending severity, so the tie break is
    deliberately conservative (toward the more severe category).
    """
    best_name = output.terms[0].name
    best = -1.0
    for term in output.terms:
        degree = membership(term, score)
        if degree >= best:
            best, best_name = degree, term.name
    return best_name


def classify_risk(score: float) -> RiskCategory:
    """Risk band whose membership is highest at ``score`` on the 0-100 scale."""
    risk = risk_output_variable()
    if score < risk.lo or score > risk.hi:
        raise OutOfUniverse(score, risk.lo, risk.hi)
    return _RISK_TERM_TO_CATEGORY[_argmax_term(risk, score)]


def category_label(output: LinguisticVariable, score: float) -> str:
    """Readable category for a score: a risk-band label for risk-shaped
    outputs, otherwise the raw name of the winning output term."""
    name = _argmax_term(output, score)
    cat = _RISK_TERM_TO_CATEGORY.get(name)
    return cat.label if cat is not None else name


class _CompiledModel:
    """Per-model precomputation: output grid plus each term's sampled curve.

    Building one of these is the deployment cost of a model; scoring an
    event afterwards only pays for clip/max/centroid work.
    """

    def __init__(self, model: FuzzyModel, resolution: int):
        self.model = model
        self.resolution = resolution
        self.grid = np.linspace(model.output.lo, model.output.hi, resolution)
        self.consequent_grids = {
            t.name: membership(t, self.grid) for t in model.output.terms
        }
        # Rule clauses resolved once so the hot loop is dict lookups only.
        self.compiled_rules = [
            (rule.id, rule.weight, [(cl.variable, cl.term) for cl in rule.antecedent],
             rule.consequent.term)
            for rule in model.rules
        ]
        self.required = set(model.required_inputs())


@lru_cache(maxsize=16)
def _compile(model: FuzzyModel, resolution: int) -> _CompiledModel:
    return _CompiledModel(model, resolution)


def compile_model(model: FuzzyModel, resolution: int | None = None) -> _CompiledModel:
    res = resolution if resolution is not None else model.settings.resolution
    return _compile(model, res)


def infer(
    model: FuzzyModel,
    inputs: Mapping[str, float],
    resolution: int | None = None,
) -> CrispResult:
    """Run the full Mamdani pipeline for one set of crisp inputs.

    ``inputs`` is keyed by variable name and must cover every variable that
    any rule references; declared-but-unreferenced inputs are fuzzified only
    when supplied.  Deterministic for fixed model, inputs, and resolution.

    Raises :class:`MissingVariable` when a referenced variable has no value
    and :class:`NoRuleFired` when every rule evaluates to zero strength.
    """
    compiled = compile_model(model, resolution)
    missing = compiled.required - inputs.keys()
    if missing:
        raise MissingVariable(missing)

    vectors: dict[str, MembershipVector] = {}
    for var in model.inputs:
        if var.name in inputs:
            vectors[var.name] = fuzzify(var, inputs[var.name])

    fired: list[FiredRule] = []
    activated: dict[str, float] = {}
    for rule_id, weight, clauses, consequent in compiled.compiled_rules:
        degree = 1.0
        for variable, term in clauses:
            degree = min(degree, vectors[variable].entries[term])
            if degree == 0.0:
                break
        strength = degree * weight
        if strength > 0.0:
            fired.append(FiredRule(rule_id, strength))
            if strength > activated.get(consequent, 0.0):
                activated[consequent] = strength
    if not fired:
        raise NoRuleFired()

    envelope = np.zeros_like(compiled.grid)
    for name, level in activated.items():
        np.maximum(envelope, np.minimum(compiled.consequent_grids[name], level), out=envelope)
    mass = envelope.sum()
    if mass == 0.0:
        # Possible only for consequent terms so narrow the grid misses them.
        raise EmptyActivation()
    score = float(np.dot(compiled.grid, envelope) / mass)

    return CrispResult(
        score=score,
        category=category_label(model.output, score),
        fired=tuple(fired),
        memberships=tuple(vectors.values()),
    )
