from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Point2, PolarPoint, polar_to_cartesian

# Longest possible leg on the unit disk; a budget at least this large is never exhausted.
DISK_DIAMETER = 2.0


class ScenarioConstraintError(ValueError):
    """Raised for scenarios outside the regime r < 1 - (d + d')."""


@dataclass(frozen=True)
class Scenario:
    """Energy budget ``d`` (as distance), attraction radius ``d_prime`` and
    charger location ``(r, theta)`` in polar coordinates."""

    d: float
    d_prime: float
    r: float
    theta: float

    def __post_init__(self):
        for name in ("d", "d_prime", "r", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.d <= 0:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.d_prime <= 0:
            raise ValueError(f"d_prime must be positive, got {self.d_prime}")
        if self.r < 0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        if not (-math.pi < self.theta <= math.pi):
            raise ValueError(f"theta must lie in (-pi, pi], got {self.theta}")

    @property
    def charger(self) -> Point2:
        return polar_to_cartesian(PolarPoint(self.r, self.theta))

    @property
    def never_depleted(self) -> bool:
        return self.d >= DISK_DIAMETER

    def as_vector(self) -> tuple[float, float, float, float]:
        return (self.d, self.d_prime, self.r, self.theta)

    def check_simulable(self, strict: bool = True) -> None:
        """Enforce r < 1 - (d + d'), the regime in which the charging model holds.

        Budgets of at least the disk diameter never deplete, so the charger is
        irrelevant and the constraint is waived. With ``strict=False`` only
        the charger itself has to lie inside the disk.
        """
        if self.r >= 1.0:
            raise ScenarioConstraintError(f"charger radius r = {self.r} must be < 1")
        if self.never_depleted or not strict:
            return
        if not self.r < 1.0 - (self.d + self.d_prime):
            raise ScenarioConstraintError(
                f"scenario {self.as_vector()} violates the constraint r < 1 - (d + d'): "
                f"r = {self.r} but 1 - (d + d') = {1.0 - (self.d + self.d_prime)}"
            )


# Training batch used throughout the evaluation.
REFERENCE_SCENARIOS = (
    Scenario(0.2, 0.1, 0.0, math.pi),
    Scenario(0.2, 0.2, 0.0, math.pi),
    Scenario(0.2, 0.2, 0.2, math.pi),
    Scenario(0.2, 0.2, 0.6, math.pi),
    Scenario(0.2, 0.2, 0.8, math.pi),
)
