from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable


class Outcome(str, enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Evidence:
    description: str
    value: float | None = None
    tolerance: float | None = None

    def to_dict(self) -> dict:
        return {"description": self.description, "value": _jsonable(self.value),
                "tolerance": self.tolerance}


@dataclass(frozen=True)
class Verdict:
    """Three-valued outcome plus the rule that decided it."""

    outcome: Outcome
    criterion: str
    evidence: tuple[Evidence, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        object.__setattr__(self, "evidence", tuple(self.evidence))
        if self.outcome is Outcome.INCONCLUSIVE and not self.evidence:
            raise ValueError("an Inconclusive verdict must carry evidence")

    @property
    def holds(self) -> bool:
        return self.outcome is Outcome.HOLDS

    @property
    def fails(self) -> bool:
        return self.outcome is Outcome.FAILS

    @property
    def inconclusive(self) -> bool:
        return self.outcome is Outcome.INCONCLUSIVE

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "criterion": self.criterion,
                "evidence": [e.to_dict() for e in self.evidence]}


def holds(criterion: str, *evidence: Evidence) -> Verdict:
    return Verdict(Outcome.HOLDS, criterion, evidence)


def fails(criterion: str, *evidence: Evidence) -> Verdict:
    return Verdict(Outcome.FAILS, criterion, evidence)


def inconclusive(criterion: str, *evidence: Evidence) -> Verdict:
    return Verdict(Outcome.INCONCLUSIVE, criterion, evidence)


def all_of(criterion: str, verdicts: Iterable[Verdict]) -> Verdict:
    """Conjunction: any Fails wins, then any Inconclusive, else Holds."""
    verdicts = list(verdicts)
    evidence = tuple(e for v in verdicts for e in v.evidence)
    if any(v.fails for v in verdicts):
        return Verdict(Outcome.FAILS, criterion, evidence)
    if any(v.inconclusive for v in verdicts):
        return Verdict(Outcome.INCONCLUSIVE, criterion, evidence)
    return Verdict(Outcome.HOLDS, criterion, evidence)


def _jsonable(value):
    if value is None:
        return None
    if isinstance(value, complex):
        return [value.real, value.imag]
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)
