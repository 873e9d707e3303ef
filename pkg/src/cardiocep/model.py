"""Immutable fuzzy-model data types shared by the parser, engine, and runtime.

A :class:`FuzzyModel` is a plain value object: once constructed it never
changes, so models can be shared freely across threads and swapped
atomically in the stream engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class TermShape(Enum):
    TRIANGLE = "triangle"
    LEFT_SHOULDER = "left-shoulder"
    RIGHT_SHOULDER = "right-shoulder"
    SINGLETON = "singleton"


@dataclass(frozen=True)
class TriangularTerm:
    """A named membership function defined by three vertices (a, b, c).

    The shape decides how the vertices are read:

    * ``TRIANGLE``        -- a < b < c, apex at b.
    * ``LEFT_SHOULDER``   -- a <= b < c, membership 1 for x <= b, falling to
      0 at c.  ``a`` records where the saturated plateau starts (normally
      the universe floor) and does not affect the curve.
    * ``RIGHT_SHOULDER``  -- a < b <= c, membership 0 up to a, rising to 1
      at b and saturated beyond.  ``c`` records the plateau end.
    * ``SINGLETON``       -- a == b == c, membership 1 only at exactly b.
    """

    name: str
    a: float
    b: float
    c: float
    shape: TermShape

    def __post_init__(self) -> None:
        a, b, c = self.a, self.b, self.c
        ok = {
            TermShape.TRIANGLE: a < b < c,
            TermShape.LEFT_SHOULDER: a <= b < c,
            TermShape.RIGHT_SHOULDER: a < b <= c,
            TermShape.SINGLETON: a == b == c,
        }[self.shape]
        if not ok:
            raise ValueError(
                f"term {self.name!r}: vertices ({a}, {b}, {c}) violate "
                f"{self.shape.value} ordering"
            )

    @property
    def support(self) -> tuple[float, float]:
        """Closed interval outside which membership is identically zero.

        Shoulders saturate, so their support extends to the recorded
        plateau edge (a for left shoulders, c for right shoulders).
        """
        return (self.a, self.c)


def triangle(name: str, a: float, b: float, c: float) -> TriangularTerm:
    return TriangularTerm(name, a, b, c, TermShape.TRIANGLE)


def left_shoulder(name: str, lo: float, knee: float, foot: float) -> TriangularTerm:
    return TriangularTerm(name, lo, knee, foot, TermShape.LEFT_SHOULDER)


def right_shoulder(name: str, foot: float, knee: float, hi: float) -> TriangularTerm:
    return TriangularTerm(name, foot, knee, hi, TermShape.RIGHT_SHOULDER)


def singleton(name: str, value: float) -> TriangularTerm:
    return TriangularTerm(name, value, value, value, TermShape.SINGLETON)


class VariableKind(Enum):
    FUZZY = "fuzzy"
    CRISP_CODED = "crisp-coded"


@dataclass(frozen=True)
class LinguisticVariable:
    """A named variable over a closed real universe with named fuzzy terms."""

    name: str
    lo: float
    hi: float
    terms: tuple[TriangularTerm, ...]
    unit: str = ""

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"variable {self.name!r}: universe [{self.lo}, {self.hi}] is empty")
        seen: set[str] = set()
        for term in self.terms:
            if term.name in seen:
                raise ValueError(f"variable {self.name!r}: duplicate term {term.name!r}")
            seen.add(term.name)

    @property
    def kind(self) -> VariableKind:
        """Crisp-coded variables carry singleton terms only (e.g. gender codes)."""
        if self.terms and all(t.shape is TermShape.SINGLETON for t in self.terms):
            return VariableKind.CRISP_CODED
        return VariableKind.FUZZY

    def term(self, name: str) -> TriangularTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"variable {self.name!r} has no term {name!r}")

    def term_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)


@dataclass(frozen=True)
class Clause:
    """One `variable IS term` proposition."""

    variable: str
    term: str


@dataclass(frozen=True)
class Rule:
    """AND-conjunction of antecedent clauses implying one output clause."""

    id: str
    antecedent: tuple[Clause, ...]
    consequent: Clause
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.antecedent:
            raise ValueError(f"rule {self.id!r}: empty antecedent")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"rule {self.id!r}: weight {self.weight} outside (0, 1]")


@dataclass(frozen=True)
class InferenceSettings:
    """Operator selection for the Mamdani pipeline.

    The grammar subset only admits MIN/MIN/MAX/COG, so these fields exist
    mainly for print fidelity plus the two tunables: the centroid sample
    count and the fallback output used when no rule fires.
    """

    and_op: str = "MIN"
    activation: str = "MIN"
    accumulation: str = "MAX"
    defuzzifier: str = "COG"
    resolution: int = 1000
    default_output: float | None = None

    def __post_init__(self) -> None:
        if self.resolution < 100:
            raise ValueError(f"cog resolution {self.resolution} below minimum 100")


@dataclass(frozen=True)
class FuzzyModel:
    """A parsed function block: input/output variables plus the rule base."""

    name: str
    inputs: tuple[LinguisticVariable, ...]
    output: LinguisticVariable
    rules: tuple[Rule, ...]
    settings: InferenceSettings = field(default_factory=InferenceSettings)

    def variable(self, name: str) -> LinguisticVariable:
        for var in self.inputs:
            if var.name == name:
                return var
        if name == self.output.name:
            return self.output
        raise KeyError(f"model {self.name!r} has no variable {name!r}")

    def input_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.inputs)

    def rule_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.rules)

    def required_inputs(self) -> tuple[str, ...]:
        """Input variables referenced by at least one rule antecedent.

        Declared inputs that no rule reads (the stand-alone cholesterol
        variable in the clinical model) are optional at inference time.
        """
        used = {cl.variable for rule in self.rules for cl in rule.antecedent}
        return tuple(v.name for v in self.inputs if v.name in used)
