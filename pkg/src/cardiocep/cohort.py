"""Deterministic synthetic patient cohorts for validation runs.

Each field draws from its own PCG64 substream, seeded by
``SeedSequence((seed, field_tag))`` with the fixed tags below, and every
draw is a plain ``random()`` uniform.  Adding a new field therefore never
perturbs the values of existing fields, and equal specs produce identical
cohorts on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clinical import PatientEvent, write_events_csv, write_events_ndjson

# Substream tags, fixed forever; append-only.
_FIELD_TAGS = {
    "age": 0,
    "sbp": 1,
    "dbp": 2,
    "cholesterol": 3,
    "glucose": 4,
    "height": 5,
    "weight": 6,
    "gender": 7,
    "smoking": 8,
    "alcohol": 9,
    "active": 10,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Cohort size, seed, and per-field sampling ranges/probabilities.

    Continuous fields are uniform within their range; categorical fields
    are independent Bernoulli draws with the given probabilities.  All
    default ranges sit inside the clinical universes.
    """

    n: int = 1000
    seed: int = 42
    age: tuple[float, float] = (18.0, 90.0)
    sbp: tuple[float, float] = (90.0, 200.0)
    dbp: tuple[float, float] = (55.0, 120.0)
    cholesterol: tuple[float, float] = (3.0, 8.0)
    glucose: tuple[float, float] = (0.7, 2.0)
    height: tuple[float, float] = (140.0, 200.0)
    weight: tuple[float, float] = (40.0, 150.0)
    p_female: float = 0.5
    p_smoking: float = 0.3
    p_alcohol: float = 0.2
    p_active: float = 0.6

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError(f"cohort size must be positive, got {self.n}")
        for name in ("age", "sbp", "dbp", "cholesterol", "glucose", "height", "weight"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} range [{lo}, {hi}] is empty")
        for name in ("p_female", "p_smoking", "p_alcohol", "p_active"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} = {p} is not a probability")


def _uniforms(spec: GeneratorSpec, tag_name: str) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((spec.seed, _FIELD_TAGS[tag_name]))))
    return rng.random(spec.n)


def generate(spec: GeneratorSpec) -> list[PatientEvent]:
    """Exactly ``spec.n`` events, fully determined by ``spec.seed``."""
    def scaled(name: str) -> np.ndarray:
        lo, hi = getattr(spec, name)
        return lo + _uniforms(spec, name) * (hi - lo)

    age = scaled("age")
    sbp = scaled("sbp")
    dbp = scaled("dbp")
    cholesterol = scaled("cholesterol")
    glucose = scaled("glucose")
    height = scaled("height")
    weight = scaled("weight")
    gender = np.where(_uniforms(spec, "gender") < spec.p_female, 1, 2)
    smoking = (_uniforms(spec, "smoking") < spec.p_smoking).astype(int)
    alcohol = (_uniforms(spec, "alcohol") < spec.p_alcohol).astype(int)
    active = (_uniforms(spec, "active") < spec.p_active).astype(int)

    return [
        PatientEvent(
            event_id=f"evt-{i:06d}",
            ts_ms=0,
            age=float(age[i]),
            gender=int(gender[i]),
            height=float(height[i]),
            weight=float(weight[i]),
            sbp=float(sbp[i]),
            dbp=float(dbp[i]),
            cholesterol=float(cholesterol[i]),
            glucose=float(glucose[i]),
            smoking=int(smoking[i]),
            alcohol=int(alcohol[i]),
            active=int(active[i]),
        )
        for i in range(spec.n)
    ]


def write_cohort(events, path: str | Path, format: str = "canonical-csv") -> None:
    """Persist a cohort so it reads back with exact field equality."""
    if format == "canonical-csv":
        write_events_csv(events, path)
    elif format == "ndjson":
        write_events_ndjson(events, path)
    else:
        raise ValueError(f"unknown cohort format {format!r}")
