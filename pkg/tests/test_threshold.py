"""Tests for plateau detection and data-driven threshold selection."""

import json

import numpy as np
import pytest

from gpdflow.errors import DataError, InputError
from gpdflow.simulate import gumbel_copula_example, sample_gumbel_copula
from gpdflow.threshold import (
    PlateauConfig,
    ThresholdResult,
    detect_plateau,
    make_exceedance_dataset,
    marginal_quantiles,
    select_threshold,
)

GRID = np.linspace(0.5, 0.995, 100)


def scenario_data(seed=0, n=1200):
    return sample_gumbel_copula(gumbel_copula_example(), n, seed=seed)


class TestDetectPlateau:
    def test_constant_curve_starts_at_first_point(self):
        q_det, found = detect_plateau(GRID, np.full(100, 0.4))
        assert found
        assert q_det == GRID[0]

    def test_kink_detected_within_one_window(self):
        # steep decline (slope 4) into an exactly constant tail at q = 0.7
        vals = np.maximum(0.35, 0.35 + 4.0 * (0.7 - GRID))
        q_det, found = detect_plateau(GRID, vals)
        assert found
        # the first admissible window may straddle the kink by one point
        assert q_det == pytest.approx(0.695)
        assert 0.7 - 8 * 0.005 <= q_det <= 0.7 + 1e-12

    def test_gentle_slope_within_tolerance_counts_as_flat(self):
        # slope 1 keeps every window deviation below 5% of the window mean
        vals = np.maximum(0.35, 0.35 + (0.7 - GRID))
        q_det, found = detect_plateau(GRID, vals)
        assert found
        assert q_det == GRID[0]

    def test_steep_decline_returns_last_point_not_found(self):
        q_det, found = detect_plateau(GRID, 0.5 * (1.0 - GRID))
        assert not found
        assert q_det == GRID[-1]

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(15, 60))
            vals = rng.normal(1.0, 0.3, n).cumsum() / 10 + 1.0
            q = np.linspace(0.5, 0.9, n)
            cfg = PlateauConfig(
                window=int(rng.integers(2, 6)),
                rel_tol=float(rng.uniform(0.01, 0.5)),
                min_tail=2,
            )
            got = detect_plateau(q, vals, cfg)
            w = cfg.window
            scored = n - cfg.min_tail
            flat = []
            for s in range(scored - w + 1):
                win = vals[s : s + w]
                flat.append(
                    np.max(np.abs(win - win.mean())) <= cfg.rel_tol * abs(win.mean())
                )
            want = (float(q[-1]), False)
            for s in range(len(flat)):
                if all(flat[s:]):
                    want = (float(q[s]), True)
                    break
            assert got == want

    def test_exclude_tail_override(self):
        q_det, found = detect_plateau(
            GRID[:10], np.ones(10), PlateauConfig(window=8), exclude_tail=0
        )
        assert found
        assert q_det == GRID[0]

    def test_too_few_scored_points(self):
        with pytest.raises(InputError, match="need at least"):
            detect_plateau(GRID[:12], np.ones(12))

    def test_curve_shape_validation(self):
        with pytest.raises(InputError):
            detect_plateau(GRID[:10], np.ones(11))
        with pytest.raises(InputError):
            detect_plateau(GRID[:10].reshape(2, 5), np.ones(10).reshape(2, 5))

    def test_config_validation(self):
        with pytest.raises(InputError):
            PlateauConfig(window=1)
        with pytest.raises(InputError):
            PlateauConfig(rel_tol=0.0)
        with pytest.raises(InputError):
            PlateauConfig(rel_tol=np.inf)
        with pytest.raises(InputError):
            PlateauConfig(min_tail=-1)


class TestMarginalQuantiles:
    def test_ceiling_index_convention(self):
        data = np.column_stack([np.arange(1.0, 11.0), np.arange(10.0, 0.0, -1.0)])
        assert marginal_quantiles(data, 0.5).tolist() == [5.0, 5.0]
        assert marginal_quantiles(data, 0.51).tolist() == [6.0, 6.0]
        assert marginal_quantiles(data, 0.95).tolist() == [10.0, 10.0]


class TestSelectThreshold:
    def test_comonotone_selects_grid_start(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(1000)
        raw = np.column_stack([x, 2.0 * x + 1.0])
        res = select_threshold(raw)
        assert res.flags == ()
        assert res.q_star == res.q_chi == res.q_omega == 0.5
        xs = np.sort(x)
        np.testing.assert_allclose(res.threshold, [xs[499], 2.0 * xs[499] + 1.0])

    def test_monotone_copula_curves_have_no_chi_plateau(self):
        # pre-asymptotic Gumbel-copula data: chi(q) declines over the whole
        # grid, so the detector reports no plateau and falls back, flagged
        raw = scenario_data(seed=0)
        with pytest.warns(RuntimeWarning, match="chi plateau not found"):
            res = select_threshold(raw)
        assert "chi plateau not found" in res.flags
        assert res.q_chi == pytest.approx(0.995)
        assert res.q_omega == pytest.approx(0.5)
        assert res.q_star == pytest.approx(0.995)
        np.testing.assert_allclose(
            res.threshold, marginal_quantiles(raw, res.q_star)
        )

    def test_small_sample_warns(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(50)
        with pytest.warns(RuntimeWarning, match="unreliable"):
            select_threshold(np.column_stack([x, x]))

    def test_grid_must_increase(self):
        raw = scenario_data(seed=1, n=200)
        with pytest.raises(InputError, match="strictly increasing"):
            select_threshold(raw, q=np.array([0.5, 0.5, 0.6]))

    def test_raw_must_be_matrix(self):
        with pytest.raises(InputError):
            select_threshold(np.ones(30))

    def test_bootstrap_bands_propagate(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(400)
        raw = np.column_stack([x, x + 1.0])
        res = select_threshold(raw, n_boot=100, seed=11)
        assert res.diagnostics.chi_lo is not None
        assert res.diagnostics.omega_hi is not None
        assert np.all(res.diagnostics.chi_lo <= res.diagnostics.chi_hi + 1e-12)

    def test_result_invariant(self):
        raw = scenario_data(seed=2, n=300)
        with pytest.warns(RuntimeWarning):
            res = select_threshold(raw, q=np.linspace(0.5, 0.9, 40))
        with pytest.raises(InputError, match="q_star"):
            ThresholdResult(
                q_chi=res.q_chi,
                q_omega=res.q_omega,
                q_star=res.q_star - 0.01,
                threshold=res.threshold,
                diagnostics=res.diagnostics,
            )

    def test_summary_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(500)
        raw = np.column_stack([x, 3.0 * x])
        res = select_threshold(raw)
        path = tmp_path / "threshold.json"
        res.to_json(path)
        text = path.read_text()
        assert text.endswith("\n")
        doc = json.loads(text)
        assert doc["q_star"] == res.q_star
        assert doc["q_chi"] == res.q_chi
        assert doc["q_omega"] == res.q_omega
        assert doc["flags"] == list(res.flags)
        assert doc["threshold"] == [float(t) for t in res.threshold]


class TestMakeExceedanceDataset:
    def test_shifts_and_filters(self):
        raw = np.array([[1.0, 1.0], [3.0, 1.0], [1.0, 4.0], [0.0, 0.0]])
        ds = make_exceedance_dataset(raw, np.array([2.0, 2.0]))
        assert ds.n == 2
        np.testing.assert_allclose(ds.observations, [[1.0, -1.0], [-1.0, 2.0]])
        np.testing.assert_allclose(ds.threshold, [2.0, 2.0])

    def test_nothing_exceeds(self):
        raw = np.zeros((5, 2))
        with pytest.raises(DataError, match="exceeds"):
            make_exceedance_dataset(raw, np.array([1.0, 1.0]))

    def test_count_matches_union_exceedance(self):
        raw = scenario_data(seed=3)
        with pytest.warns(RuntimeWarning):
            res = select_threshold(raw, q=np.linspace(0.5, 0.95, 46))
        ds = make_exceedance_dataset(raw, res.threshold)
        assert ds.n == int(np.sum(np.any(raw > res.threshold, axis=1)))
