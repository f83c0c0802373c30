"""Deterministic feasibility and risk calculus.

Five-dimension attack-potential vectors are combined bottom-up over an
attack tree, mapped to an ordinal feasibility level, and crossed with an
impact level to yield a 1-5 risk level.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Mapping

import yaml

from .errors import MissingStepFeasibility

if TYPE_CHECKING:  # pragma: no cover
    from .tree import AttackTree

DIMENSIONS = ("ET", "SE", "KoIC", "WoO", "Eq")

DEFAULT_VALUE_SETS: dict[str, tuple[int, ...]] = {
    "ET": (0, 1, 4, 10, 19),
    "SE": (0, 3, 6, 8),
    "KoIC": (0, 3, 7, 11),
    "WoO": (0, 1, 4, 10),
    "Eq": (0, 4, 7, 9),
}


@dataclass(frozen=True)
class FeasibilityVector:
    """Per-method attack-potential scores; lower means more feasible."""

    ET: int
    SE: int
    KoIC: int
    WoO: int
    Eq: int

    def overall(self) -> int:
        return self.ET + self.SE + self.KoIC + self.WoO + self.Eq

    def as_dict(self) -> dict[str, int]:
        return {d: getattr(self, d) for d in DIMENSIONS}

    @classmethod
    def from_dict(cls, values: Mapping[str, int]) -> "FeasibilityVector":
        return cls(**{d: int(values[d]) for d in DIMENSIONS})

    @classmethod
    def dimension_max(cls, a: "FeasibilityVector", b: "FeasibilityVector") -> "FeasibilityVector":
        return cls(**{d: max(getattr(a, d), getattr(b, d)) for d in DIMENSIONS})


class FeasibilityLevel(Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"
    VERY_LOW = "VeryLow"


# Ordinal index shared by the risk matrix: 4 is the most dangerous end.
_FEASIBILITY_INDEX = {
    FeasibilityLevel.VERY_LOW: 1,
    FeasibilityLevel.LOW: 2,
    FeasibilityLevel.MEDIUM: 3,
    FeasibilityLevel.HIGH: 4,
}


class ImpactSeverity(Enum):
    """Per-dimension impact rating."""

    SEVERE = "Severe"
    MAJOR = "Major"
    MODERATE = "Moderate"
    NEGLIGIBLE = "Negligible"


class ImpactLevel(Enum):
    SERIOUS = "Serious"
    MAJOR = "Major"
    MODERATE = "Moderate"
    NEGLIGIBLE = "Negligible"


_IMPACT_INDEX = {
    ImpactLevel.NEGLIGIBLE: 1,
    ImpactLevel.MODERATE: 2,
    ImpactLevel.MAJOR: 3,
    ImpactLevel.SERIOUS: 4,
}

_SEVERITY_TO_LEVEL = {
    ImpactSeverity.SEVERE: ImpactLevel.SERIOUS,
    ImpactSeverity.MAJOR: ImpactLevel.MAJOR,
    ImpactSeverity.MODERATE: ImpactLevel.MODERATE,
    ImpactSeverity.NEGLIGIBLE: ImpactLevel.NEGLIGIBLE,
}

IMPACT_DIMENSIONS = ("safety", "financial", "operational", "privacy")


@dataclass(frozen=True)
class ImpactVector:
    safety: ImpactSeverity
    financial: ImpactSeverity
    operational: ImpactSeverity
    privacy: ImpactSeverity

    def as_dict(self) -> dict[str, str]:
        return {d: getattr(self, d).value for d in IMPACT_DIMENSIONS}

    @classmethod
    def from_dict(cls, values: Mapping[str, str]) -> "ImpactVector":
        return cls(**{d: ImpactSeverity(values[d]) for d in IMPACT_DIMENSIONS})


@dataclass(frozen=True)
class RiskConfig:
    """Tenant-configurable value sets, level thresholds and propagation switches."""

    value_sets: Mapping[str, tuple[int, ...]] = None  # type: ignore[assignment]
    high_max: int = 13
    medium_max: int = 19
    low_max: int = 24
    # "per_dimension_max" follows the per-dimension reading of the AND rule;
    # "max_overall_child" takes the whole vector of the hardest child instead.
    and_rule: str = "per_dimension_max"

    def __post_init__(self):
        if self.value_sets is None:
            object.__setattr__(self, "value_sets", dict(DEFAULT_VALUE_SETS))

    @classmethod
    def load(cls, path) -> "RiskConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        value_sets = {
            d: tuple(int(v) for v in raw.get("value_sets", {}).get(d, DEFAULT_VALUE_SETS[d]))
            for d in DIMENSIONS
        }
        thresholds = raw.get("thresholds", {})
        return cls(
            value_sets=value_sets,
            high_max=int(thresholds.get("high_max", 13)),
            medium_max=int(thresholds.get("medium_max", 19)),
            low_max=int(thresholds.get("low_max", 24)),
            and_rule=raw.get("and_rule", "per_dimension_max"),
        )

    def snap(self, dimension: str, value: int) -> tuple[int, bool]:
        """Snap an out-of-set score to the nearest allowed value."""
        allowed = self.value_sets[dimension]
        if value in allowed:
            return value, False
        nearest = min(allowed, key=lambda v: (abs(v - value), v))
        return nearest, True


DEFAULT_CONFIG = RiskConfig()


def feasibility_level(vector: FeasibilityVector, config: RiskConfig = DEFAULT_CONFIG) -> FeasibilityLevel:
    total = vector.overall()
    if total <= config.high_max:
        return FeasibilityLevel.HIGH
    if total <= config.medium_max:
        return FeasibilityLevel.MEDIUM
    if total <= config.low_max:
        return FeasibilityLevel.LOW
    return FeasibilityLevel.VERY_LOW


def impact_level(vector: ImpactVector) -> ImpactLevel:
    """Aggregate the four dimensions by maximum severity."""
    levels = [_SEVERITY_TO_LEVEL[getattr(vector, d)] for d in IMPACT_DIMENSIONS]
    return max(levels, key=lambda lv: _IMPACT_INDEX[lv])


def risk_level(feasibility: FeasibilityLevel, impact: ImpactLevel) -> int:
    raw = _IMPACT_INDEX[impact] + _FEASIBILITY_INDEX[feasibility] - 3
    return max(1, min(5, raw))


INSPECTION_THRESHOLD = 3


@dataclass(frozen=True)
class PropagationResult:
    cumulative: Mapping[str, FeasibilityVector]  # node id -> Cumulative_F
    root: FeasibilityVector
    most_feasible_path: frozenset[str]


def propagate(tree: "AttackTree", config: RiskConfig = DEFAULT_CONFIG) -> PropagationResult:
    """Compute cumulative feasibility bottom-up.

    Rules: a leaf's cumulative equals its step vector; a method with an
    upstream prerequisite takes the per-dimension max of the prerequisite's
    cumulative and its own step vector; AND combines children (per the
    configured rule); OR adopts the full vector of the child with the lowest
    overall, ties broken by child index.
    """
    cumulative: dict[str, FeasibilityVector] = {}
    spine: set[str] = set()

    def visit(node) -> FeasibilityVector:
        kind = node.__class__.__name__
        if kind == "AttackMethod":
            if node.step_feasibility is None:
                raise MissingStepFeasibility(node.id)
            vec = node.step_feasibility
            if node.child is not None:
                vec = FeasibilityVector.dimension_max(visit(node.child), vec)
            cumulative[node.id] = vec
            return vec
        if kind == "LogicNode":
            child_vectors = [visit(c) for c in node.children]
            if node.kind.value == "AND":
                if config.and_rule == "max_overall_child":
                    vec = max(child_vectors, key=lambda v: v.overall())
                else:
                    vec = child_vectors[0]
                    for other in child_vectors[1:]:
                        vec = FeasibilityVector.dimension_max(vec, other)
            else:  # OR
                vec = min(child_vectors, key=lambda v: v.overall())
            cumulative[node.id] = vec
            return vec
        # AttackObjective: transparent pass-through of its single child.
        vec = visit(node.child)
        cumulative[node.id] = vec
        return vec

    def walk_spine(node) -> None:
        spine.add(node.id)
        kind = node.__class__.__name__
        if kind == "AttackMethod":
            if node.child is not None:
                walk_spine(node.child)
        elif kind == "LogicNode":
            if node.kind.value == "OR":
                chosen = min(node.children, key=lambda c: cumulative[c.id].overall())
                walk_spine(chosen)
            else:
                for child in node.children:
                    walk_spine(child)
        else:
            walk_spine(node.child)

    root_vector = visit(tree.root)
    walk_spine(tree.root)
    return PropagationResult(cumulative=cumulative, root=root_vector, most_feasible_path=frozenset(spine))
