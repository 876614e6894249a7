import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgeblend.accounting import (
    CostSpec,
    HedgeSchedule,
    PnLReport,
    average_trade_size,
    compute_pnl,
    decompose_pnl,
    position_changes,
    write_pnl_csv,
)
from hedgeblend.errors import DimensionError, ParameterError
from hedgeblend.market import MarketPaths, PathGrid


def make_paths(spot_rows: np.ndarray, maturity: float = 1.0) -> MarketPaths:
    spot = np.asarray(spot_rows, dtype=float)
    grid = PathGrid(n_steps=spot.shape[1] - 1, maturity=maturity)
    return MarketPaths(
        spot=spot, variance=np.zeros_like(spot), grid=grid, seed=0
    )


class TestComputePnl:
    def test_single_path_hand_case(self):
        paths = make_paths([[1.0, 1.1, 1.2]])
        hedges = HedgeSchedule(np.array([[0.5, 0.7]]))
        report = compute_pnl(paths, hedges, CostSpec(5e-4), strike=1.0)
        assert report.hedge_gains[0] == pytest.approx(0.12, abs=1e-15)
        assert report.transaction_costs[0] == pytest.approx(7.8e-4, abs=1e-15)
        assert report.payoff[0] == pytest.approx(0.2, abs=1e-15)
        assert report.pnl[0] == pytest.approx(-0.08078, abs=1e-15)
        assert np.allclose(report.trades[0], [0.5, 0.2, 0.7])

    def test_zero_hedge_is_minus_payoff(self, baseline_paths, cost):
        hedges = HedgeSchedule(np.zeros((baseline_paths.n_paths, baseline_paths.n_steps)))
        report = compute_pnl(baseline_paths, hedges, cost, strike=1.0)
        assert np.all(report.transaction_costs == 0)
        assert np.array_equal(report.pnl, -report.payoff)

    def test_static_unit_hedge_replicates_intrinsic_move(self):
        # zero costs, delta == 1 on an ITM path, K == S0: pnl is exactly 0
        paths = make_paths([[1.0, 1.3, 1.5]])
        hedges = HedgeSchedule(np.ones((1, 2)))
        report = compute_pnl(paths, hedges, CostSpec(0.0), strike=1.0)
        assert report.pnl[0] == pytest.approx(0.0, abs=1e-15)

    def test_shape_mismatch_rejected(self, baseline_paths, cost):
        bad = HedgeSchedule(np.zeros((baseline_paths.n_paths, 3)))
        with pytest.raises(DimensionError):
            compute_pnl(baseline_paths, bad, cost, strike=1.0)

    def test_invalid_strike_rejected(self, baseline_paths, cost):
        hedges = HedgeSchedule(np.zeros((baseline_paths.n_paths, baseline_paths.n_steps)))
        with pytest.raises(ParameterError):
            compute_pnl(baseline_paths, hedges, cost, strike=0.0)

    def test_non_finite_schedule_rejected(self):
        with pytest.raises(ParameterError):
            HedgeSchedule(np.array([[np.nan, 0.0]]))

    @given(
        seed=st.integers(0, 10_000),
        n_paths=st.integers(1, 8),
        n_steps=st.integers(1, 12),
        cost_rate=st.floats(0, 0.01),
    )
    @settings(max_examples=60, deadline=None)
    def test_decomposition_identity_property(self, seed, n_paths, n_steps, cost_rate):
        gen = np.random.default_rng(seed)
        spot = np.exp(gen.normal(0, 0.1, size=(n_paths, n_steps + 1)).cumsum(axis=1))
        delta = gen.normal(0, 1, size=(n_paths, n_steps))
        report = compute_pnl(
            make_paths(spot), HedgeSchedule(delta), CostSpec(cost_rate), strike=1.0
        )
        recomposed = report.hedge_gains - report.transaction_costs - report.payoff
        assert np.abs(report.pnl - recomposed).max() < 1e-12
        assert np.all(report.transaction_costs >= 0)
        assert np.all(report.payoff >= 0)

    def test_costs_scale_linearly(self, baseline_paths, rng_np):
        delta = rng_np.normal(0, 0.5, size=(baseline_paths.n_paths, baseline_paths.n_steps))
        hedges = HedgeSchedule(delta)
        single = compute_pnl(baseline_paths, hedges, CostSpec(5e-4), 1.0)
        double = compute_pnl(baseline_paths, hedges, CostSpec(1e-3), 1.0)
        assert np.allclose(double.transaction_costs, 2.0 * single.transaction_costs)

    def test_gains_translation_covariance(self):
        gen = np.random.default_rng(0)
        increments = gen.normal(0, 0.01, size=(4, 10))
        spot = 1.0 + np.pad(increments, ((0, 0), (1, 0))).cumsum(axis=1)
        shifted = 1.0 + np.pad(increments + 0.005, ((0, 0), (1, 0))).cumsum(axis=1)
        hedges = HedgeSchedule(np.ones((4, 10)))
        base = compute_pnl(make_paths(spot), hedges, CostSpec(0.0), strike=100.0)
        moved = compute_pnl(make_paths(shifted), hedges, CostSpec(0.0), strike=100.0)
        # deep OTM strike: payoff 0 on both, so pnl shifts by n * shift
        assert np.allclose(moved.pnl - base.pnl, 10 * 0.005, atol=1e-12)


class TestTrades:
    def test_position_changes_include_entry_and_unwind(self):
        changes = position_changes(np.array([[0.5, 0.7]]))
        assert np.allclose(changes, [[0.5, 0.2, -0.7]])

    def test_average_trade_size_zero_hedge(self, baseline_paths, cost):
        hedges = HedgeSchedule(np.zeros((baseline_paths.n_paths, baseline_paths.n_steps)))
        assert average_trade_size(compute_pnl(baseline_paths, hedges, cost, 1.0)) == 0.0

    def test_average_trade_size_constant_hedge(self):
        n = 126
        spot = np.ones((3, n + 1))
        report = compute_pnl(
            make_paths(spot), HedgeSchedule(np.full((3, n), 0.5)), CostSpec(0.0), 1.0
        )
        assert average_trade_size(report) == pytest.approx(1.0 / (n + 1), abs=1e-15)


class TestDecompose:
    def _report(self, delta, paths, cost_rate=5e-4, label=""):
        hedges = HedgeSchedule(delta, label)
        return compute_pnl(paths, hedges, CostSpec(cost_rate), 1.0)

    def test_identical_strategies_have_zero_differences(self, baseline_paths):
        delta = np.full((baseline_paths.n_paths, baseline_paths.n_steps), 0.4)
        rows = decompose_pnl(
            [self._report(delta, baseline_paths, label="a"),
             self._report(delta, baseline_paths, label="b")]
        )
        assert rows[1].diff_gains == 0 and rows[1].diff_costs == 0
        assert rows[1].diff_payoff == 0 and rows[1].diff_net == 0

    def test_zero_cost_spec_zeroes_cost_column(self, baseline_paths, rng_np):
        delta = rng_np.normal(0, 0.3, size=(baseline_paths.n_paths, baseline_paths.n_steps))
        rows = decompose_pnl([self._report(delta, baseline_paths, cost_rate=0.0)])
        assert rows[0].mean_costs == 0.0

    def test_path_count_mismatch_rejected(self, baseline_paths):
        delta = np.zeros((baseline_paths.n_paths, baseline_paths.n_steps))
        full = self._report(delta, baseline_paths)
        short = PnLReport(
            pnl=full.pnl[:10], hedge_gains=full.hedge_gains[:10],
            transaction_costs=full.transaction_costs[:10], payoff=full.payoff[:10],
            trades=full.trades[:10],
        )
        with pytest.raises(DimensionError):
            decompose_pnl([full, short])

    def test_payoff_must_match_across_reports(self, baseline_paths):
        delta = np.zeros((baseline_paths.n_paths, baseline_paths.n_steps))
        a = self._report(delta, baseline_paths)
        b = self._report(delta, baseline_paths)
        b.payoff = b.payoff + 0.1
        with pytest.raises(DimensionError):
            decompose_pnl([a, b])


def test_pnl_csv_export(tmp_path, baseline_paths, cost):
    delta = np.full((baseline_paths.n_paths, baseline_paths.n_steps), 0.2)
    report = compute_pnl(baseline_paths, HedgeSchedule(delta, "x"), cost, 1.0)
    target = tmp_path / "pnl.csv"
    with open(target, "w", newline="") as fh:
        write_pnl_csv(report, fh)
    lines = target.read_text().splitlines()
    assert lines[0] == "path_id,pnl,hedge_gains,transaction_costs,payoff"
    assert len(lines) == 1 + baseline_paths.n_paths
    values = lines[1].split(",")
    assert float(values[1]) == pytest.approx(report.pnl[0], rel=1e-10)
