"""Risk measures and summary statistics over P&L vectors.

Sign conventions: entropic risk is "lower is better" (it is a certainty-
equivalent loss); CVaR is the mean P&L over the worst tail and is
"higher (less negative) is better".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InsufficientDataError, ParameterError


def entropic_risk(pnl, a: float) -> float:
    """(1/a) * log E[exp(-a * pnl)], computed with a max shift.

    The shift makes the objective evaluable on tail-heavy batches where
    exp(-a*pnl) would overflow.
    """
    pnl = np.asarray(pnl, dtype=float)
    if pnl.size == 0:
        raise EmptyInputError("entropic_risk of an empty vector")
    if a <= 0:
        raise ParameterError("risk aversion a must be positive")
    x = -a * pnl
    m = x.max()
    return float((m + np.log(np.mean(np.exp(x - m)))) / a)


def cvar(pnl, level: float) -> float:
    """Mean of the k = ceil(level * n) smallest P&L values (no interpolation)."""
    pnl = np.asarray(pnl, dtype=float)
    if pnl.size == 0:
        raise EmptyInputError("cvar of an empty vector")
    if not 0.0 < level <= 1.0:
        raise ParameterError(f"level must lie in (0, 1], got {level}")
    k = math.ceil(level * pnl.size)
    if k >= pnl.size:
        return float(pnl.mean())
    return float(np.partition(pnl, k - 1)[:k].mean())


def summary(pnl) -> tuple[float, float]:
    """(mean, sample standard deviation with n-1 denominator)."""
    pnl = np.asarray(pnl, dtype=float)
    if pnl.size == 0:
        raise EmptyInputError("summary of an empty vector")
    if pnl.size < 2:
        raise InsufficientDataError("std requires at least 2 observations")
    return float(pnl.mean()), float(pnl.std(ddof=1))


@dataclass(frozen=True)
class RiskSpec:
    """A named risk metric with its parameters, usable as a bootstrap statistic."""

    measure: str  # "entropic" | "cvar" | "mean" | "std"
    a: float = 1.0
    level: float = 0.05

    def __post_init__(self):
        if self.measure not in ("entropic", "cvar", "mean", "std"):
            raise ParameterError(f"unknown risk measure {self.measure!r}")
        if self.measure == "entropic" and self.a <= 0:
            raise ParameterError("entropic risk requires a > 0")
        if self.measure == "cvar" and not 0.0 < self.level <= 1.0:
            raise ParameterError("cvar level must lie in (0, 1]")

    @property
    def higher_is_better(self) -> bool:
        return self.measure in ("cvar", "mean")

    def evaluate(self, pnl) -> float:
        if self.measure == "entropic":
            return entropic_risk(pnl, self.a)
        if self.measure == "cvar":
            return cvar(pnl, self.level)
        if self.measure == "mean":
            return float(np.asarray(pnl, dtype=float).mean())
        return summary(pnl)[1]
