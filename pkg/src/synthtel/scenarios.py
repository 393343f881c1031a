"""User scenarios: turn concurrent users into per-service request rates.

Rates are fluid expectations. Each user of a class completes one scenario loop
every ``think_time`` seconds, and a loop sends ``requests_per_loop`` requests to
every service listed in its steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ScenarioKind(str, Enum):
    VISITOR = "visitor"
    NEW_SHOPPER = "new_shopper"
    RETURNING_SHOPPER = "returning_shopper"


@dataclass(frozen=True)
class UserScenario:
    kind: ScenarioKind
    steps: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError(f"{self.kind.value}: scenario needs at least one step")
        for service, n in self.steps:
            if n < 1:
                raise ValueError(f"{self.kind.value}: requests_per_loop for {service} must be >= 1")


@dataclass(frozen=True)
class ScenarioMix:
    visitor_fraction: float = 0.5
    new_shopper_prob: float = 0.5  # x; returning shoppers get 1 - x
    think_time: float = 5.0

    def __post_init__(self) -> None:
        if not 0 <= self.visitor_fraction <= 1:
            raise ValueError("visitor_fraction must be in [0, 1]")
        if not 0 <= self.new_shopper_prob <= 1:
            raise ValueError("new_shopper_prob must be in [0, 1]")
        if not self.think_time > 0:
            raise ValueError("think_time must be > 0")

    def fractions(self) -> dict[ScenarioKind, float]:
        shoppers = 1.0 - self.visitor_fraction
        return {
            ScenarioKind.VISITOR: self.visitor_fraction,
            ScenarioKind.NEW_SHOPPER: shoppers * self.new_shopper_prob,
            ScenarioKind.RETURNING_SHOPPER: shoppers * (1.0 - self.new_shopper_prob),
        }


# Visitor: homepage + catalogue. New shopper: register, catalogue, add to cart,
# order. Returning shopper: the same flow with login instead of register.
DEFAULT_SCENARIOS: tuple[UserScenario, ...] = (
    UserScenario(
        ScenarioKind.VISITOR,
        (("frontend", 2), ("catalogue", 1), ("catalogue-db", 1)),
    ),
    UserScenario(
        ScenarioKind.NEW_SHOPPER,
        (
            ("frontend", 4),
            ("user", 1),
            ("catalogue", 1),
            ("catalogue-db", 1),
            ("cart", 1),
            ("orders", 1),
            ("orders-db", 1),
            ("payment", 1),
            ("shipping", 1),
        ),
    ),
    UserScenario(
        ScenarioKind.RETURNING_SHOPPER,
        (
            ("frontend", 4),
            ("login", 1),
            ("catalogue", 1),
            ("catalogue-db", 1),
            ("cart", 1),
            ("orders", 1),
            ("orders-db", 1),
            ("payment", 1),
            ("shipping", 1),
        ),
    ),
)


def request_coefficients(
    mix: ScenarioMix, scenarios=DEFAULT_SCENARIOS
) -> dict[str, float]:
    """Requests per second contributed by one concurrent user, per service."""
    fractions = mix.fractions()
    coeffs: dict[str, float] = {}
    for sc in scenarios:
        loops_per_user = fractions[sc.kind] / mix.think_time
        for service, n in sc.steps:
            coeffs[service] = coeffs.get(service, 0.0) + loops_per_user * n
    return coeffs


def service_request_rates(n_users, mix: ScenarioMix, scenarios=DEFAULT_SCENARIOS) -> dict:
    """Map service -> request rate (req/s) for ``n_users`` (scalar or array)."""
    users = np.asarray(n_users, dtype=float)
    if np.any(users < 0):
        raise ValueError("n_users must be non-negative")
    coeffs = request_coefficients(mix, scenarios)
    if users.ndim == 0:
        return {svc: float(c * users) for svc, c in coeffs.items()}
    return {svc: c * users for svc, c in coeffs.items()}
