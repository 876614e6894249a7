"""Ensembles of independently trained hedgers and their disagreement.

Members differ in both parameter initialisation and the paths they train on;
at inference every member hedges the same evaluation paths, so the per-step
sample standard deviation across members is well defined path by path.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .accounting import CostSpec, HedgeSchedule
from .errors import NumericalDivergenceError, ParameterError
from .hedger import HedgerModel, TrainConfig, forward_rollout, train_hedger
from .market import MarketPaths, PathGrid


@dataclass
class EnsembleOutput:
    """Member hedges plus the ensemble mean and disagreement fields.

    disagreement: (n_paths, n_steps) sample std across members (M-1
    denominator); avg_disagreement: its time average per path.
    """

    member_hedges: list[HedgeSchedule]
    mean_hedge: HedgeSchedule
    disagreement: np.ndarray
    avg_disagreement: np.ndarray

    @property
    def n_members(self) -> int:
        return len(self.member_hedges)

    def take(self, indices: np.ndarray) -> "EnsembleOutput":
        return EnsembleOutput(
            member_hedges=[h.take(indices) for h in self.member_hedges],
            mean_hedge=self.mean_hedge.take(indices),
            disagreement=self.disagreement[indices].copy(),
            avg_disagreement=self.avg_disagreement[indices].copy(),
        )


def member_seed(root_seed: int, index: int) -> int:
    """Deterministic per-member seed; mixing documented in :mod:`hedgeblend.rng`."""
    return rng.derive_seed(root_seed, rng.TAG_MEMBER, index)


def _train_member(args) -> HedgerModel:
    index, config, market, grid, cost, strike = args
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return train_hedger(config, market, grid, cost, strike, label=f"member {index}")
    with threadpool_limits(limits=1):
        return train_hedger(config, market, grid, cost, strike, label=f"member {index}")


def train_ensemble(
    m: int,
    config: TrainConfig,
    market,
    grid: PathGrid,
    cost: CostSpec,
    strike: float,
    workers: int = 1,
    member_seeds: list[int] | None = None,
) -> list[HedgerModel]:
    """Train M independent members; seeds derived from config.seed and index.

    ``member_seeds`` overrides the derived seeds (test hook for degenerate
    ensembles). ``workers`` bounds process parallelism without affecting
    results: each member's training is self-contained and deterministic.
    """
    if m < 2:
        raise ParameterError("an ensemble needs at least 2 members")
    if member_seeds is None:
        member_seeds = [member_seed(config.seed, i) for i in range(m)]
    elif len(member_seeds) != m:
        raise ParameterError("member_seeds must have length m")

    configs = [
        TrainConfig(
            epochs=config.epochs,
            paths_per_epoch=config.paths_per_epoch,
            step_size=config.step_size,
            adam_betas=config.adam_betas,
            risk_aversion=config.risk_aversion,
            seed=member_seeds[i],
        )
        for i in range(m)
    ]
    jobs = [(i, configs[i], market, grid, cost, strike) for i in range(m)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_train_member, jobs))
    models = []
    for job in jobs:
        try:
            models.append(train_hedger(job[1], market, grid, cost, strike, label=f"member {job[0]}"))
        except NumericalDivergenceError as exc:
            raise NumericalDivergenceError(f"member {job[0]} diverged: {exc}") from exc
    return models


def aggregate(members: list[HedgerModel], paths: MarketPaths, strike: float) -> EnsembleOutput:
    """Per-step ensemble mean and sample-std disagreement on shared paths."""
    if len(members) == 0:
        raise ParameterError("aggregate requires at least one member")
    if len(members) == 1:
        raise ParameterError("disagreement is undefined for a single member")
    hedges = [forward_rollout(model, paths, strike) for model in members]
    stacked = np.stack([h.delta for h in hedges])
    mean = stacked.mean(axis=0)
    spread = stacked.std(axis=0, ddof=1)
    return EnsembleOutput(
        member_hedges=hedges,
        mean_hedge=HedgeSchedule(mean, "ensemble_mean"),
        disagreement=spread,
        avg_disagreement=spread.mean(axis=1),
    )


def write_disagreement_csv(output: EnsembleOutput, file) -> None:
    """Per-(path, step) dump: path_id, step, mean_delta, disagreement."""
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["path_id", "step", "mean_delta", "disagreement"])
    mean = output.mean_hedge.delta
    for p in range(mean.shape[0]):
        for t in range(mean.shape[1]):
            writer.writerow([p, t, f"{mean[p, t]:.12g}", f"{output.disagreement[p, t]:.12g}"])


def write_path_uncertainty_csv(output: EnsembleOutput, file) -> None:
    """Per-path summary: path_id, avg_disagreement."""
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["path_id", "avg_disagreement"])
    for p, value in enumerate(output.avg_disagreement):
        writer.writerow([p, f"{value:.12g}"])
