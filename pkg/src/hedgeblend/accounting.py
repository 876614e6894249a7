"""Terminal P&L accounting with proportional transaction costs.

Position convention: a schedule holds delta_0 .. delta_{n-1}, the units of
underlying carried over each step t -> t+1. The book starts flat
(delta_{-1} = 0, so the first trade establishes the position) and is unwound
at maturity (delta_n = 0), so position changes run t = 0..n and every trade
pays cost_rate * S_t * |change|.

    pnl = sum_t delta_t * (S_{t+1} - S_t)  -  costs  -  (S_n - K)^+
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .market import MarketPaths


@dataclass
class HedgeSchedule:
    """Per-path, per-step hedge ratios produced by any strategy."""

    delta: np.ndarray  # (n_paths, n_steps)
    strategy_label: str = ""

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.ndim != 2:
            raise DimensionError(f"delta must be 2-D, got shape {self.delta.shape}")
        if not np.isfinite(self.delta).all():
            raise ParameterError("hedge schedule contains non-finite entries")

    @property
    def n_paths(self) -> int:
        return self.delta.shape[0]

    @property
    def n_steps(self) -> int:
        return self.delta.shape[1]

    def take(self, indices: np.ndarray) -> "HedgeSchedule":
        return HedgeSchedule(self.delta[indices].copy(), self.strategy_label)


@dataclass(frozen=True)
class CostSpec:
    """Proportional transaction cost rate (fraction of traded notional)."""

    cost_rate: float

    def __post_init__(self):
        if self.cost_rate < 0:
            raise ParameterError("cost_rate must be non-negative")


@dataclass
class PnLReport:
    """Terminal P&L per path and its three-way decomposition.

    transaction_costs and payoff are positive magnitudes; elementwise
    pnl == hedge_gains - transaction_costs - payoff.
    """

    pnl: np.ndarray
    hedge_gains: np.ndarray
    transaction_costs: np.ndarray
    payoff: np.ndarray
    trades: np.ndarray  # (n_paths, n_steps+1) of |position change|
    strategy_label: str = ""

    @property
    def n_paths(self) -> int:
        return self.pnl.shape[0]


def position_changes(delta: np.ndarray) -> np.ndarray:
    """Signed position changes for t=0..n, including entry and final unwind."""
    padded = np.pad(delta, ((0, 0), (1, 1)))
    return np.diff(padded, axis=1)


def compute_pnl(
    paths: MarketPaths, hedges: HedgeSchedule, cost: CostSpec, strike: float
) -> PnLReport:
    """Terminal P&L of a short call hedged with ``hedges`` on ``paths``."""
    if strike <= 0:
        raise ParameterError("strike must be positive")
    if hedges.delta.shape != (paths.n_paths, paths.n_steps):
        raise DimensionError(
            f"hedge schedule shape {hedges.delta.shape} does not match "
            f"paths ({paths.n_paths} x {paths.n_steps})"
        )
    spot = paths.spot
    gains = np.sum(hedges.delta * np.diff(spot, axis=1), axis=1)
    changes = position_changes(hedges.delta)
    trades = np.abs(changes)
    costs = cost.cost_rate * np.sum(spot * trades, axis=1)
    payoff = np.maximum(spot[:, -1] - strike, 0.0)
    return PnLReport(
        pnl=gains - costs - payoff,
        hedge_gains=gains,
        transaction_costs=costs,
        payoff=payoff,
        trades=trades,
        strategy_label=hedges.strategy_label,
    )


def average_trade_size(report: PnLReport) -> float:
    """Mean |position change| over all paths and steps t=0..n."""
    return float(report.trades.mean())


@dataclass
class DecompositionRow:
    strategy: str
    mean_gains: float
    mean_costs: float
    mean_payoff: float
    mean_net: float
    diff_gains: float = 0.0
    diff_costs: float = 0.0
    diff_payoff: float = 0.0
    diff_net: float = 0.0


def decompose_pnl(reports: list[PnLReport], baseline: int = 0) -> list[DecompositionRow]:
    """Component means per strategy plus differences vs. the baseline report."""
    if not reports:
        raise DimensionError("decompose_pnl requires at least one report")
    n = reports[0].n_paths
    for r in reports:
        if r.n_paths != n:
            raise DimensionError("reports cover different path counts")
        if not np.array_equal(r.payoff, reports[baseline].payoff):
            raise DimensionError("reports were not computed on the same paths")
    base = reports[baseline]
    rows = []
    for r in reports:
        rows.append(
            DecompositionRow(
                strategy=r.strategy_label,
                mean_gains=float(r.hedge_gains.mean()),
                mean_costs=float(r.transaction_costs.mean()),
                mean_payoff=float(r.payoff.mean()),
                mean_net=float(r.pnl.mean()),
                diff_gains=float(r.hedge_gains.mean() - base.hedge_gains.mean()),
                diff_costs=float(r.transaction_costs.mean() - base.transaction_costs.mean()),
                diff_payoff=float(r.payoff.mean() - base.payoff.mean()),
                diff_net=float(r.pnl.mean() - base.pnl.mean()),
            )
        )
    return rows


def write_pnl_csv(report: PnLReport, file) -> None:
    """Per-path export: path_id, pnl, gains, costs, payoff."""
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["path_id", "pnl", "hedge_gains", "transaction_costs", "payoff"])
    for p in range(report.n_paths):
        writer.writerow(
            [
                p,
                f"{report.pnl[p]:.12g}",
                f"{report.hedge_gains[p]:.12g}",
                f"{report.transaction_costs[p]:.12g}",
                f"{report.payoff[p]:.12g}",
            ]
        )
