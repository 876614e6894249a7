"""Statistical evaluation: win rates, uncertainty drivers, bootstrap tests.

All analyses are pure functions of their inputs; CSV emitters format floats
with a fixed precision so identical inputs reproduce identical bytes.
Win is strict inequality throughout: ties count against the candidate.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import rng
from .accounting import PnLReport, average_trade_size, decompose_pnl
from .errors import (
    DimensionError,
    EmptyInputError,
    ParameterError,
    UndefinedCorrelationError,
)
from .market import MarketPaths
from .risk import RiskSpec, cvar, summary

N_QUINTILES = 5


@dataclass
class QuintileRow:
    label: str
    win_rate: float
    mean_advantage: float
    avg_uncertainty: float
    n_paths: int


def quintile_analysis(pnl_a, pnl_b, psi_bar) -> list[QuintileRow]:
    """Win rate of A over B within uncertainty quintiles, plus an overall row.

    Paths are sorted by psi_bar ascending (stable, so equal values keep path
    order) and split into five contiguous groups of near-equal size.
    """
    pnl_a, pnl_b, psi_bar = (np.asarray(x, dtype=float) for x in (pnl_a, pnl_b, psi_bar))
    if not pnl_a.shape == pnl_b.shape == psi_bar.shape:
        raise DimensionError("pnl_a, pnl_b and psi_bar must have equal length")
    if pnl_a.size < N_QUINTILES:
        raise EmptyInputError(f"need at least {N_QUINTILES} paths")

    order = np.argsort(psi_bar, kind="stable")
    wins = (pnl_a > pnl_b)[order]
    advantage = (pnl_a - pnl_b)[order]
    psi_sorted = psi_bar[order]

    rows = []
    for q, idx in enumerate(np.array_split(np.arange(pnl_a.size), N_QUINTILES)):
        rows.append(
            QuintileRow(
                label=f"Q{q + 1}",
                win_rate=float(wins[idx].mean()),
                mean_advantage=float(advantage[idx].mean()),
                avg_uncertainty=float(psi_sorted[idx].mean()),
                n_paths=idx.size,
            )
        )
    rows.append(
        QuintileRow(
            label="overall",
            win_rate=float(wins.mean()),
            mean_advantage=float(advantage.mean()),
            avg_uncertainty=float(psi_sorted.mean()),
            n_paths=pnl_a.size,
        )
    )
    return rows


def rolling_winrate(pnl_a, pnl_b, psi_bar, window: int) -> np.ndarray:
    """(mean uncertainty, win rate) per rolling window over sorted paths.

    Returns an array of shape (n - window + 1, 2).
    """
    pnl_a, pnl_b, psi_bar = (np.asarray(x, dtype=float) for x in (pnl_a, pnl_b, psi_bar))
    n = pnl_a.size
    if window < 1:
        raise ParameterError("window must be >= 1")
    if window > n:
        raise ParameterError(f"window {window} exceeds {n} paths")
    order = np.argsort(psi_bar, kind="stable")
    wins = (pnl_a > pnl_b)[order].astype(float)
    psi_sorted = psi_bar[order]

    kernel_mean = lambda x: np.convolve(x, np.ones(window) / window, mode="valid")
    return np.column_stack([kernel_mean(psi_sorted), kernel_mean(wins)])


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation against a zero-variance input")
    return float(np.corrcoef(x, y)[0, 1])


def uncertainty_correlations(psi_bar, paths: MarketPaths) -> tuple[float, float]:
    """Pearson correlations of path uncertainty with final moneyness and
    with the time-average instantaneous volatility."""
    psi_bar = np.asarray(psi_bar, dtype=float)
    if psi_bar.size != paths.n_paths:
        raise DimensionError("psi_bar length does not match path count")
    final_moneyness = paths.spot[:, -1]
    avg_vol = np.sqrt(paths.variance).mean(axis=1)
    return _pearson(psi_bar, final_moneyness), _pearson(psi_bar, avg_vol)


@dataclass
class HeatmapData:
    """Mean disagreement per (time bin, moneyness bin); empty bins are NaN."""

    grid: np.ndarray  # (time_bins, moneyness_bins), NaN where unpopulated
    counts: np.ndarray
    moneyness_edges: np.ndarray
    time_edges: np.ndarray  # step-index edges


def heatmap_data(
    psi: np.ndarray,
    paths: MarketPaths,
    moneyness_bins: int,
    time_bins: int,
    strike: float = 1.0,
) -> HeatmapData:
    """Bin per-step disagreement by (moneyness, time step)."""
    if moneyness_bins < 2 or time_bins < 2:
        raise ParameterError("bins must be >= 2")
    n = paths.n_steps
    if psi.shape != (paths.n_paths, n):
        raise DimensionError("psi shape does not match paths")
    moneyness = paths.spot[:, :n] / strike

    m_edges = np.linspace(moneyness.min(), moneyness.max(), moneyness_bins + 1)
    t_edges = np.linspace(0, n, time_bins + 1)
    m_idx = np.clip(np.digitize(moneyness, m_edges) - 1, 0, moneyness_bins - 1)
    t_idx = np.clip(
        np.digitize(np.broadcast_to(np.arange(n), moneyness.shape), t_edges) - 1,
        0,
        time_bins - 1,
    )

    flat = t_idx.ravel() * moneyness_bins + m_idx.ravel()
    counts = np.bincount(flat, minlength=time_bins * moneyness_bins)
    sums = np.bincount(flat, weights=psi.ravel(), minlength=time_bins * moneyness_bins)
    with np.errstate(invalid="ignore"):
        grid = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return HeatmapData(
        grid=grid.reshape(time_bins, moneyness_bins),
        counts=counts.reshape(time_bins, moneyness_bins),
        moneyness_edges=m_edges,
        time_edges=t_edges,
    )


@dataclass
class ComparisonRow:
    strategy: str
    mean_pnl: float
    std_pnl: float
    cvar: float


def strategy_comparison(reports: list[PnLReport], level: float = 0.05) -> list[ComparisonRow]:
    """Mean / std / CVaR table, one row per strategy, shared paths required."""
    if not reports:
        raise EmptyInputError("no reports to compare")
    n = reports[0].n_paths
    for r in reports:
        if r.n_paths != n:
            raise DimensionError("reports cover different path counts")
        if not np.array_equal(r.payoff, reports[0].payoff):
            raise DimensionError("reports were not computed on the same paths")
    rows = []
    for r in reports:
        mean, std = summary(r.pnl)
        rows.append(ComparisonRow(r.strategy_label, mean, std, cvar(r.pnl, level)))
    return rows


@dataclass
class BootstrapResult:
    """Paired-bootstrap metric difference, oriented so positive favours A.

    mean_diff and the CI are in raw P&L units (multiply by 1e4 for bps).
    """

    mean_diff: float
    ci_low: float
    ci_high: float
    win_fraction: float
    resamples: int

    @property
    def significant(self) -> bool:
        return self.ci_low > 0 or self.ci_high < 0


def paired_bootstrap(
    pnl_a,
    pnl_b,
    metric: RiskSpec,
    resamples: int = 5000,
    seed: int = 0,
    block: int = 512,
) -> BootstrapResult:
    """Resample paths with replacement; evaluate both strategies on the same
    draws and record the oriented metric difference (A minus B for
    higher-is-better metrics, flipped otherwise)."""
    pnl_a = np.asarray(pnl_a, dtype=float)
    pnl_b = np.asarray(pnl_b, dtype=float)
    if pnl_a.shape != pnl_b.shape:
        raise DimensionError("pnl vectors must have equal length")
    if resamples < 100:
        raise ParameterError("resamples must be >= 100")
    n = pnl_a.size
    gen = rng.generator(rng.derive_seed(seed, rng.TAG_BOOTSTRAP))

    diffs = np.empty(resamples)
    done = 0
    while done < resamples:
        m = min(block, resamples - done)
        idx = gen.integers(0, n, size=(m, n))
        stat_a = _row_metric(pnl_a[idx], metric)
        stat_b = _row_metric(pnl_b[idx], metric)
        d = stat_a - stat_b
        diffs[done : done + m] = d if metric.higher_is_better else -d
        done += m

    lo, hi = np.percentile(diffs, [2.5, 97.5])
    return BootstrapResult(
        mean_diff=float(diffs.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
        win_fraction=float((diffs > 0).mean()),
        resamples=resamples,
    )


def _row_metric(samples: np.ndarray, metric: RiskSpec) -> np.ndarray:
    """Metric per row of a (resamples, n) matrix."""
    if metric.measure == "mean":
        return samples.mean(axis=1)
    if metric.measure == "std":
        return samples.std(axis=1, ddof=1)
    if metric.measure == "cvar":
        n = samples.shape[1]
        k = int(np.ceil(metric.level * n))
        if k >= n:
            return samples.mean(axis=1)
        return np.partition(samples, k - 1, axis=1)[:, :k].mean(axis=1)
    x = -metric.a * samples
    m = x.max(axis=1, keepdims=True)
    return (m[:, 0] + np.log(np.mean(np.exp(x - m), axis=1))) / metric.a


# -- CSV / manifest emitters ----------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_rows_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_quintiles_csv(path: str, rows: list[QuintileRow]) -> None:
    write_rows_csv(
        path,
        ["quintile", "win_rate", "mean_advantage", "avg_uncertainty", "n_paths"],
        [[r.label, r.win_rate, r.mean_advantage, r.avg_uncertainty, r.n_paths] for r in rows],
    )


def write_winrate_curve_csv(path: str, curve: np.ndarray, window: int) -> None:
    write_rows_csv(
        path,
        ["window_mean_uncertainty", "win_rate"],
        [[float(u), float(w)] for u, w in curve],
    )


def write_correlations_csv(path: str, corr_moneyness: float, corr_vol: float) -> None:
    write_rows_csv(
        path,
        ["characteristic", "correlation_with_uncertainty"],
        [["final_moneyness", corr_moneyness], ["average_volatility", corr_vol]],
    )


def write_heatmap_csv(path: str, data: HeatmapData) -> None:
    """Populated bins only: absent bins are omitted rather than zero-filled."""
    rows = []
    t_bins, m_bins = data.grid.shape
    for ti in range(t_bins):
        for mi in range(m_bins):
            if data.counts[ti, mi] == 0:
                continue
            rows.append(
                [
                    ti,
                    mi,
                    float((data.time_edges[ti] + data.time_edges[ti + 1]) / 2),
                    float((data.moneyness_edges[mi] + data.moneyness_edges[mi + 1]) / 2),
                    float(data.grid[ti, mi]),
                    int(data.counts[ti, mi]),
                ]
            )
    write_rows_csv(
        path,
        ["time_bin", "moneyness_bin", "time_center", "moneyness_center",
         "mean_disagreement", "count"],
        rows,
    )


def write_comparison_csv(path: str, rows: list[ComparisonRow]) -> None:
    write_rows_csv(
        path,
        ["strategy", "mean_pnl", "std_pnl", "cvar_5pct"],
        [[r.strategy, r.mean_pnl, r.std_pnl, r.cvar] for r in rows],
    )


def write_bootstrap_csv(path: str, entries: list[tuple[str, str, BootstrapResult]]) -> None:
    """Rows of (comparison label, metric, result); diffs also given in bps."""
    rows = []
    for label, metric, res in entries:
        rows.append(
            [
                label,
                metric,
                res.mean_diff,
                res.mean_diff * 1e4,
                res.ci_low,
                res.ci_high,
                res.ci_low * 1e4,
                res.ci_high * 1e4,
                res.win_fraction,
                int(res.significant),
                res.resamples,
            ]
        )
    write_rows_csv(
        path,
        ["comparison", "metric", "mean_diff", "mean_diff_bps", "ci_low", "ci_high",
         "ci_low_bps", "ci_high_bps", "win_fraction", "significant", "resamples"],
        rows,
    )


def write_decomposition_csv(path: str, reports: list[PnLReport], baseline: int = 0) -> None:
    rows = []
    for row in decompose_pnl(reports, baseline=baseline):
        rows.append(
            [
                row.strategy,
                row.mean_gains,
                row.mean_costs,
                row.mean_payoff,
                row.mean_net,
                row.diff_gains,
                row.diff_costs,
                row.diff_payoff,
                row.diff_net,
            ]
        )
    write_rows_csv(
        path,
        ["strategy", "mean_hedge_gains", "mean_transaction_costs", "mean_payoff",
         "mean_net_pnl", "diff_gains", "diff_costs", "diff_payoff", "diff_net"],
        rows,
    )


def write_trade_stats_csv(path: str, reports: list[PnLReport]) -> None:
    write_rows_csv(
        path,
        ["strategy", "average_trade_size", "mean_transaction_costs"],
        [
            [r.strategy_label, average_trade_size(r), float(r.transaction_costs.mean())]
            for r in reports
        ],
    )


def write_blend_curves_csv(path: str, psi_grid: np.ndarray, curves: dict[str, np.ndarray]) -> None:
    """alpha(psi) samples for each fitted objective."""
    names = sorted(curves)
    rows = [
        [float(psi_grid[i])] + [float(curves[name][i]) for name in names]
        for i in range(psi_grid.size)
    ]
    write_rows_csv(path, ["disagreement"] + [f"alpha_{n}" for n in names], rows)


def write_cvar_bars_csv(path: str, entries: list[tuple[str, str, float]]) -> None:
    """(calibration, strategy, cvar) rows for bar-chart data."""
    write_rows_csv(
        path,
        ["calibration", "strategy", "cvar_5pct"],
        [[c, s, v] for c, s, v in entries],
    )


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path: str, config_record: dict, artifact_dir: str) -> dict:
    """Run manifest: full configuration plus a hash of every artifact."""
    artifacts = {}
    for name in sorted(os.listdir(artifact_dir)):
        full = os.path.join(artifact_dir, name)
        if os.path.isfile(full) and not name.endswith("manifest.json"):
            artifacts[name] = file_sha256(full)
    manifest = {"config": config_record, "artifacts": artifacts}
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
