"""End-to-end orchestration: simulate, train, blend, evaluate, export.

Every stage is seeded from the run configuration, so a rerun with the same
config reproduces every artifact byte for byte. On a stage failure the run
directory keeps whatever was already written plus a FAILED marker naming
the stage.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import evaluation as ev
from .accounting import PnLReport, compute_pnl, write_pnl_csv
from .blend import (
    BlendFit,
    BlendObjective,
    alpha_weight,
    blend_features,
    blend_schedules,
    fit_blend,
    train_eval_split,
)
from .classical import VolMode, bs_delta_strategy, bs_price, ww_strategy
from .config import RunConfig
from .ensemble import (
    EnsembleOutput,
    aggregate,
    train_ensemble,
    write_path_uncertainty_csv,
)
from .errors import StageError
from .hedger import (
    HedgerModel,
    forward_rollout,
    load_model,
    network_price,
    save_model,
    train_hedger,
)
from .market import GBMSpec, MarketPaths, simulate_gbm, simulate_heston
from .risk import RiskSpec, cvar


class _Stage:
    """Context manager that tags failures with the stage name."""

    def __init__(self, name: str, out_dir: str):
        self.name = name
        self.out_dir = out_dir

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            return False
        marker = os.path.join(self.out_dir, "FAILED")
        try:
            with open(marker, "w") as fh:
                fh.write(f"{self.name}: {exc}\n")
        except OSError:
            pass
        raise StageError(self.name, str(exc)) from exc


def validate_gbm(config: RunConfig, threshold: float = 0.06, out_dir: str | None = None) -> dict:
    """Train one hedger on zero-cost GBM and score it against closed forms.

    Reports the mean absolute error of the learned hedge ratios vs. the
    analytic delta on fresh paths, and the gap between the indifference
    price and the analytic option price.
    """
    from .accounting import CostSpec
    from .classical import bs_delta_strategy as bs_strategy

    vol = config.gbm_vol
    zero_cost = CostSpec(0.0)
    model = train_hedger(config.train, GBMSpec(vol=vol), config.grid, zero_cost, config.strike)

    test_paths = simulate_gbm(vol, config.grid, config.eval_paths, seed=config.eval_seeds[0])
    learned = forward_rollout(model, test_paths, config.strike)
    reference = bs_strategy(test_paths, config.strike, VolMode.fixed(vol))
    mae = float(np.abs(learned.delta - reference.delta).mean())

    price = network_price(model, test_paths, zero_cost, config.strike, config.train.risk_aversion)
    analytic = bs_price(1.0, config.strike, vol, config.grid.maturity)
    report = {
        "delta_mae": mae,
        "network_price": price,
        "analytic_price": float(analytic),
        "price_error": abs(price - analytic),
        "threshold": threshold,
        "passed": bool(mae <= threshold),
        "final_training_loss": model.loss_history[-1],
        "epochs": config.train.epochs,
        "paths_per_epoch": config.train.paths_per_epoch,
        "seed": config.train.seed,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gbm_validation.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


@dataclass
class PipelineResult:
    """Objects produced by a run, for callers that want more than the CSVs."""

    config: RunConfig
    members: list[HedgerModel]
    eval_paths: MarketPaths
    ensemble: EnsembleOutput
    train_idx: np.ndarray
    test_idx: np.ndarray
    fits: dict[str, BlendFit]
    reports_all: dict[str, PnLReport]
    reports_test: dict[str, PnLReport]
    comparison: list[ev.ComparisonRow]
    bootstrap: list[tuple[str, str, ev.BootstrapResult]]
    quintiles: list[ev.QuintileRow]
    correlations: tuple[float, float]
    manifest: dict


def simulate_eval_paths(config: RunConfig, seed: int | None = None) -> MarketPaths:
    return simulate_heston(
        config.heston_params(), config.grid, config.eval_paths,
        seed=config.eval_seeds[0] if seed is None else seed,
    )


def train_members(config: RunConfig, out_dir: str | None = None) -> list[HedgerModel]:
    members = train_ensemble(
        config.ensemble_size,
        config.train,
        config.heston_params(),
        config.grid,
        config.cost(),
        config.strike,
        workers=config.workers,
    )
    if out_dir is not None:
        member_dir = os.path.join(out_dir, "members")
        os.makedirs(member_dir, exist_ok=True)
        for i, model in enumerate(members):
            save_model(model, os.path.join(member_dir, f"member_{i}.npz"))
    return members


def load_members(out_dir: str) -> list[HedgerModel]:
    member_dir = os.path.join(out_dir, "members")
    names = sorted(f for f in os.listdir(member_dir) if f.endswith(".npz"))
    return [load_model(os.path.join(member_dir, name)) for name in names]


def classical_schedules(config: RunConfig, paths: MarketPaths) -> dict:
    fixed = VolMode.fixed(config.fixed_vol_value())
    return {
        "bs_delta_fixed": bs_delta_strategy(paths, config.strike, fixed),
        "bs_delta_true": bs_delta_strategy(paths, config.strike, VolMode.true_instantaneous()),
        "whalley_wilmott": ww_strategy(
            paths, config.strike, fixed, config.cost_rate,
            risk_aversion=config.train.risk_aversion,
        ),
    }


def fit_blends(
    config: RunConfig,
    paths: MarketPaths,
    ens: EnsembleOutput,
    bs,
    train_idx: np.ndarray,
) -> dict[str, BlendFit]:
    """Fit each configured objective on the training subset."""
    sub_paths = paths.take(train_idx)
    sub_ens = ens.take(train_idx)
    sub_bs = bs.take(train_idx)
    fits = {}
    for kind in config.objectives:
        objective = BlendObjective(kind=kind, a=config.train.risk_aversion, level=config.cvar_level)
        fits[kind] = fit_blend(
            sub_paths, sub_ens, sub_bs, config.cost(), config.strike,
            objective, extended=config.extended_blend, seed=config.train.seed,
        )
    return fits


def full_pipeline(config: RunConfig, out_dir: str) -> PipelineResult:
    """Run every stage and export all table/figure CSVs plus the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    config.save_json(os.path.join(out_dir, "config.json"))
    cost = config.cost()
    strike = config.strike
    label = config.calibration if isinstance(config.calibration, str) else "custom"

    with _Stage("simulate", out_dir):
        eval_paths = simulate_eval_paths(config)

    with _Stage("train", out_dir):
        members = train_members(config, out_dir)

    with _Stage("aggregate", out_dir):
        ens = aggregate(members, eval_paths, strike)
        with open(os.path.join(out_dir, "ensemble_uncertainty.csv"), "w", newline="") as fh:
            write_path_uncertainty_csv(ens, fh)

    with _Stage("classical", out_dir):
        classical = classical_schedules(config, eval_paths)

    with _Stage("split", out_dir):
        train_idx, test_idx = train_eval_split(
            eval_paths, config.train_fraction, seed=config.eval_seeds[0]
        )

    with _Stage("fit_blend", out_dir):
        fits = fit_blends(config, eval_paths, ens, classical["bs_delta_fixed"], train_idx)
        for kind, fit in fits.items():
            with open(os.path.join(out_dir, f"blend_{kind}.json"), "w") as fh:
                fh.write(fit.to_json())
                fh.write("\n")

    with _Stage("evaluate", out_dir):
        features = blend_features(eval_paths, strike) if config.extended_blend else None
        schedules = dict(classical)
        schedules["ensemble_mean"] = ens.mean_hedge
        for kind, fit in fits.items():
            blended = blend_schedules(
                ens.mean_hedge, classical["bs_delta_fixed"], ens.disagreement,
                fit.params, features,
            )
            blended.strategy_label = f"blend_{kind}"
            schedules[f"blend_{kind}"] = blended

        strategy_order = [
            "ensemble_mean", "bs_delta_fixed", "bs_delta_true", "whalley_wilmott",
        ] + [f"blend_{kind}" for kind in config.objectives]
        reports_all = {}
        reports_test = {}
        for name in strategy_order:
            sched = schedules[name]
            sched.strategy_label = name
            reports_all[name] = compute_pnl(eval_paths, sched, cost, strike)
            reports_test[name] = compute_pnl(
                eval_paths.take(test_idx), sched.take(test_idx), cost, strike
            )
            with open(os.path.join(out_dir, f"pnl_{name}.csv"), "w", newline="") as fh:
                write_pnl_csv(reports_all[name], fh)

        quintiles = ev.quintile_analysis(
            reports_all["ensemble_mean"].pnl,
            reports_all["bs_delta_fixed"].pnl,
            ens.avg_disagreement,
        )
        ev.write_quintiles_csv(os.path.join(out_dir, "table2_quintiles.csv"), quintiles)

        window = min(config.winrate_window, config.eval_paths)
        curve = ev.rolling_winrate(
            reports_all["ensemble_mean"].pnl,
            reports_all["bs_delta_fixed"].pnl,
            ens.avg_disagreement,
            window,
        )
        ev.write_winrate_curve_csv(os.path.join(out_dir, "fig1_winrate.csv"), curve, window)

        correlations = ev.uncertainty_correlations(ens.avg_disagreement, eval_paths)
        ev.write_correlations_csv(
            os.path.join(out_dir, "table3_correlations.csv"), *correlations
        )

        heatmap = ev.heatmap_data(
            ens.disagreement, eval_paths,
            config.heatmap_moneyness_bins, config.heatmap_time_bins, strike,
        )
        ev.write_heatmap_csv(os.path.join(out_dir, "fig2_heatmap.csv"), heatmap)

        comparison = ev.strategy_comparison(
            [reports_test[name] for name in strategy_order], level=config.cvar_level
        )
        ev.write_comparison_csv(os.path.join(out_dir, "table4_comparison.csv"), comparison)

        cvar_spec = RiskSpec("cvar", level=config.cvar_level)
        bootstrap_entries = []
        if "cvar" in fits:
            for rival in ("bs_delta_fixed", "whalley_wilmott"):
                res = ev.paired_bootstrap(
                    reports_test["blend_cvar"].pnl, reports_test[rival].pnl,
                    cvar_spec, resamples=config.bootstrap_resamples,
                    seed=config.eval_seeds[0],
                )
                bootstrap_entries.append((f"blend_cvar_vs_{rival}", "cvar", res))
            res = ev.paired_bootstrap(
                reports_test["blend_cvar"].pnl, reports_test["bs_delta_fixed"].pnl,
                RiskSpec("mean"), resamples=config.mean_bootstrap_resamples,
                seed=config.eval_seeds[0],
            )
            bootstrap_entries.append(("blend_cvar_vs_bs_delta_fixed", "mean", res))
        ev.write_bootstrap_csv(os.path.join(out_dir, "table5_bootstrap.csv"), bootstrap_entries)

        ev.write_decomposition_csv(
            os.path.join(out_dir, "table6_decomposition.csv"),
            [reports_all[name] for name in strategy_order],
            baseline=strategy_order.index("bs_delta_fixed"),
        )
        ev.write_trade_stats_csv(
            os.path.join(out_dir, "trade_stats.csv"),
            [reports_all[name] for name in strategy_order],
        )

        psi_grid = np.linspace(0.0, max(float(ens.disagreement.max()), 1e-6), 101)
        curves = {}
        for kind, fit in fits.items():
            if fit.params.extended:
                rep = (np.ones_like(psi_grid), np.full_like(psi_grid, 0.5))
                curves[kind] = alpha_weight(psi_grid, fit.params, rep)
            else:
                curves[kind] = alpha_weight(psi_grid, fit.params)
        ev.write_blend_curves_csv(os.path.join(out_dir, "fig3_blend_curves.csv"), psi_grid, curves)

        ev.write_cvar_bars_csv(
            os.path.join(out_dir, "fig4_cvar_bars.csv"),
            [(label, row.strategy, row.cvar) for row in comparison],
        )

    with _Stage("seed_stability", out_dir):
        seed_rows = _seed_stability(config, members, fits)
        ev.write_rows_csv(
            os.path.join(out_dir, "seed_stability.csv"),
            ["seed", "blend_cvar", "bs_delta_cvar", "improvement_bps"],
            seed_rows,
        )

    with _Stage("report", out_dir):
        manifest = ev.write_manifest(
            os.path.join(out_dir, "manifest.json"), config.to_dict(), out_dir
        )

    return PipelineResult(
        config=config,
        members=members,
        eval_paths=eval_paths,
        ensemble=ens,
        train_idx=train_idx,
        test_idx=test_idx,
        fits=fits,
        reports_all=reports_all,
        reports_test=reports_test,
        comparison=comparison,
        bootstrap=bootstrap_entries,
        quintiles=quintiles,
        correlations=correlations,
        manifest=manifest,
    )


def _seed_stability(config: RunConfig, members, fits) -> list[list]:
    """Blend-vs-BS CVaR per evaluation seed, on the full path set of each."""
    kind = "cvar" if "cvar" in fits else next(iter(fits))
    fit = fits[kind]
    cost = config.cost()
    rows = []
    for seed in config.eval_seeds:
        paths = simulate_eval_paths(config, seed=seed)
        ens = aggregate(members, paths, config.strike)
        bs = bs_delta_strategy(paths, config.strike, VolMode.fixed(config.fixed_vol_value()))
        features = blend_features(paths, config.strike) if fit.params.extended else None
        blended = blend_schedules(ens.mean_hedge, bs, ens.disagreement, fit.params, features)
        blend_pnl = compute_pnl(paths, blended, cost, config.strike).pnl
        bs_pnl = compute_pnl(paths, bs, cost, config.strike).pnl
        c_blend = cvar(blend_pnl, config.cvar_level)
        c_bs = cvar(bs_pnl, config.cvar_level)
        rows.append([seed, c_blend, c_bs, (c_blend - c_bs) * 1e4])
    return rows


def cross_calibration(config: RunConfig, out_dir: str) -> list[dict]:
    """Run the pipeline per named calibration and emit a summary CSV."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for name in ("baseline", "high_vov", "low_corr"):
        sub_config = config.with_calibration(name)
        result = full_pipeline(sub_config, os.path.join(out_dir, name))
        by_name = {row.strategy: row for row in result.comparison}
        boot = next(
            (res for lbl, metric, res in result.bootstrap
             if lbl == "blend_cvar_vs_bs_delta_fixed" and metric == "cvar"),
            None,
        )
        fit = result.fits.get("cvar") or next(iter(result.fits.values()))
        features = (
            blend_features(result.eval_paths.take(result.test_idx), config.strike)
            if fit.params.extended else None
        )
        alpha = alpha_weight(
            result.ensemble.take(result.test_idx).disagreement, fit.params, features
        )
        rows.append(
            {
                "calibration": name,
                "blend_cvar": by_name["blend_cvar"].cvar if "blend_cvar" in by_name else float("nan"),
                "bs_cvar": by_name["bs_delta_fixed"].cvar,
                "improvement_bps": boot.mean_diff * 1e4 if boot else float("nan"),
                "significant": int(boot.significant) if boot else 0,
                "avg_alpha": float(np.mean(alpha)),
                "ww_cvar": by_name["whalley_wilmott"].cvar,
                "beta1_cvar_fit": fit.params.uncertainty_coef,
                "q1_win_rate": result.quintiles[0].win_rate,
                "q5_win_rate": result.quintiles[4].win_rate,
            }
        )
    header = list(rows[0].keys())
    ev.write_rows_csv(
        os.path.join(out_dir, "cross_calibration.csv"),
        header,
        [[r[h] for h in header] for r in rows],
    )
    return rows
