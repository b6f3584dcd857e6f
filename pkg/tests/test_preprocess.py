import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import rankdata

from csiuq.errors import ConfigError, DegenerateWindow
from csiuq.preprocess import (
    MAD_SCALE,
    PreprocessParams,
    TimeSeries,
    _hampel_pass,
    _windowed_median_mad,
    borda_order,
    collapse_subcarriers,
    hampel_array,
    hampel_filter,
    preprocess_pipeline,
    rank_subcarriers,
    read_series_csv,
    write_series_csv,
)
from csiuq.synth import ChannelConfig, CsiTensor, Label, MotionScenario, PathComponent, synth_csi


def _brute_force_hampel(x, half_window, n_sigmas):
    """Repeat full passes until nothing changes."""
    cur = np.asarray(x, dtype=float)
    while True:
        nxt = _hampel_pass(cur, half_window, n_sigmas)
        if np.array_equal(nxt, cur):
            return cur
        cur = nxt


class TestHampel:
    def test_constant_unchanged(self):
        out = hampel_filter(TimeSeries([1.0] * 5, 100.0), half_window=2)
        np.testing.assert_array_equal(out.values, [1, 1, 1, 1, 1])

    def test_spike_replaced(self):
        out = hampel_filter(TimeSeries([1, 1, 9, 1, 1], 100.0), half_window=2, n_sigmas=3)
        np.testing.assert_array_equal(out.values, [1, 1, 1, 1, 1])

    def test_ramp_unchanged(self):
        out = hampel_filter(TimeSeries([1, 2, 3, 4, 5], 100.0), half_window=2, n_sigmas=3)
        np.testing.assert_array_equal(out.values, [1, 2, 3, 4, 5])

    def test_truncated_edge_windows(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
        med, mad = _windowed_median_mad(x, 2)
        # first window is x[0:3] = [1, 2, 3]; last is x[4:7] = [5, 6, 7]
        assert med[0] == 2.0 and mad[0] == 1.0
        assert med[-1] == 6.0 and mad[-1] == 1.0
        assert med[3] == 4.0 and mad[3] == 1.0

    def test_threshold_uses_mad_scale(self):
        # put the centre point just inside, then well outside, n_sigmas * 1.4826 * MAD
        base = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        med, mad = _windowed_median_mad(base, 5)
        i = 5
        limit = 3 * MAD_SCALE * mad[i]
        inside = base.copy()
        inside[i] = med[i] + 0.99 * limit
        outside = base.copy()
        outside[i] = med[i] + 1.01 * limit + 1.0
        assert _hampel_pass(inside, 5, 3.0)[i] == inside[i]
        assert _hampel_pass(outside, 5, 3.0)[i] != outside[i]

    def test_idempotent_on_random_series(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(11, 300))
            x = rng.standard_normal(n)
            spikes = rng.random(n) < 0.05
            x[spikes] += rng.normal(0, 20, spikes.sum())
            once = hampel_array(x, 5, 3.0)
            np.testing.assert_array_equal(hampel_array(once, 5, 3.0), once)

    def test_matches_repeated_full_passes(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            x = rng.standard_t(2, size=int(rng.integers(20, 200)))
            hw = int(rng.integers(1, 6))
            if x.size <= 2 * hw:
                continue
            np.testing.assert_array_equal(hampel_array(x, hw, 2.0), _brute_force_hampel(x, hw, 2.0))

    def test_rows_filtered_independently(self):
        rng = np.random.default_rng(2)
        X = rng.standard_cauchy((4, 60))
        out = hampel_array(X, 3, 3.0)
        for r in range(4):
            np.testing.assert_array_equal(out[r], hampel_array(X[r], 3, 3.0))

    @given(arrays(np.float64, st.integers(5, 60),
                  elements=st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)))
    @settings(max_examples=200, deadline=None)
    def test_values_within_original_and_medians(self, x):
        hw = 2
        out = hampel_array(x, hw, 3.0)
        med, _ = _windowed_median_mad(x, hw)
        lo = min(x.min(), med.min())
        hi = max(x.max(), med.max())
        assert out.shape == x.shape
        assert np.all(out >= lo) and np.all(out <= hi)

    @pytest.mark.parametrize("kwargs", [dict(half_window=0), dict(n_sigmas=0.0), dict(n_sigmas=-1.0)])
    def test_bad_parameters(self, kwargs):
        with pytest.raises(ConfigError):
            hampel_array(np.zeros(20), **kwargs)

    def test_too_short(self):
        with pytest.raises(ConfigError, match="too short"):
            hampel_filter(TimeSeries([1.0, 2.0, 3.0, 4.0], 100.0), half_window=2)


class TestRanking:
    def test_dominant_first(self):
        rng = np.random.default_rng(0)
        amp = 0.1 * rng.standard_normal((6, 50)) + 1.0
        amp[3] = 5.0 + 3.0 * rng.standard_normal(50)
        assert rank_subcarriers(amp).order[0] == 3

    def test_identical_rows_keep_index_order(self):
        row = np.sin(np.arange(20.0))
        np.testing.assert_array_equal(rank_subcarriers(np.tile(row, (5, 1))).order, np.arange(5))

    def test_borda_tie(self):
        # power ranks (1, 3, 2) + variance ranks (3, 1, 2) = (4, 4, 4)
        np.testing.assert_array_equal(borda_order([10, 5, 7], [1, 9, 4]), [0, 1, 2])

    def test_borda_sum(self):
        # power ranks (3, 1, 2) + variance ranks (1, 2, 3) = (4, 3, 5)
        np.testing.assert_array_equal(borda_order([1, 9, 5], [9, 5, 1]), [1, 0, 2])

    def test_scores(self):
        amp = np.array([[1.0, 3.0], [2.0, 2.0]])
        r = rank_subcarriers(amp)
        np.testing.assert_allclose(r.mean_power, [5.0, 4.0])
        np.testing.assert_allclose(r.variance, [1.0, 0.0])

    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_permutation_and_relabeling(self, n_sc, seed):
        rng = np.random.default_rng(seed)
        amp = rng.gamma(2.0, size=(n_sc, 30))
        order = rank_subcarriers(amp).order
        assert sorted(order.tolist()) == list(range(n_sc))
        perm = rng.permutation(n_sc)
        relabeled = perm[rank_subcarriers(amp[perm]).order]
        # identical up to the index tie-break: equal Borda sums may swap
        power, var = np.mean(amp**2, axis=1), np.var(amp, axis=1)
        score = rankdata(-power, method="min") + rankdata(-var, method="min")
        np.testing.assert_array_equal(score[relabeled], score[order])
        for s in np.unique(score):
            assert set(relabeled[score[relabeled] == s]) == set(order[score[order] == s])

    def test_needs_two_samples(self):
        with pytest.raises(ConfigError):
            rank_subcarriers(np.ones((3, 1)))


class TestCollapse:
    def test_single_row_standardized(self):
        rng = np.random.default_rng(3)
        amp = rng.gamma(3.0, size=(4, 500))
        out = collapse_subcarriers(amp, rank_subcarriers(amp), k=1).values
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-6

    def test_duplicate_rows(self):
        rng = np.random.default_rng(4)
        row = rng.standard_normal(100)
        amp = np.stack([row, row])
        r = rank_subcarriers(amp)
        np.testing.assert_allclose(collapse_subcarriers(amp, r, 2).values,
                                   collapse_subcarriers(amp, r, 1).values, atol=1e-15)

    def test_opposite_rows_cancel(self):
        row = np.random.default_rng(5).standard_normal(100)
        amp = np.stack([row, -row])
        out = collapse_subcarriers(amp, rank_subcarriers(amp), 2).values
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_zero_variance_row_excluded(self, caplog):
        row = np.random.default_rng(6).standard_normal(50)
        amp = np.stack([row * 3, np.full(50, 100.0)])
        ranking = rank_subcarriers(amp)
        with caplog.at_level(logging.WARNING):
            out = collapse_subcarriers(amp, ranking, 2)
        assert "zero variance" in caplog.text
        np.testing.assert_allclose(out.values, (row - row.mean()) / row.std(), atol=1e-12)

    def test_all_degenerate(self):
        amp = np.ones((3, 40))
        with pytest.raises(DegenerateWindow):
            collapse_subcarriers(amp, rank_subcarriers(amp), 3)

    def test_k_clamped(self, caplog):
        amp = np.random.default_rng(7).standard_normal((2, 30))
        with caplog.at_level(logging.WARNING):
            out = collapse_subcarriers(amp, rank_subcarriers(amp), 5)
        assert "only 2 subcarriers" in caplog.text
        assert len(out) == 30


def _static_tensor(noise_sigma):
    cfg = ChannelConfig(n_tx=1, n_rx=2, n_subcarriers=12, csd_delay_s=(0.0,),
                        paths=(PathComponent(1.0, 5.0), PathComponent(0.5, 11.0)),
                        noise_sigma=noise_sigma)
    return synth_csi(cfg, MotionScenario(Label.NO_MOTION, 10.0), seed=0)


class TestPipeline:
    def test_static_zero_noise_is_degenerate(self):
        with pytest.raises(DegenerateWindow, match="degenerate"):
            preprocess_pipeline(_static_tensor(0.0))

    def test_noisy_static_standardized(self):
        out = preprocess_pipeline(_static_tensor(0.05), PreprocessParams(top_k=1))
        assert abs(out.values.mean()) < 1e-9
        assert out.values.std() == pytest.approx(1.0, abs=1e-6)
        # the k=5 average of independent standardized rows shrinks toward 0
        avg = preprocess_pipeline(_static_tensor(0.05)).values
        assert abs(avg.mean()) < 1e-9 and 0 < avg.std() <= 1.0 + 1e-12

    def test_length_and_rate(self):
        out = preprocess_pipeline(_static_tensor(0.05))
        assert len(out) == 1000 and out.sample_rate_hz == 100.0

    def test_rejects_non_4d(self):
        with pytest.raises(ConfigError, match="4-D"):
            preprocess_pipeline(np.zeros((12, 1000)))


class TestSeriesCsv:
    def test_round_trip(self, tmp_path):
        s = TimeSeries(np.random.default_rng(0).standard_normal(17), 100.0)
        write_series_csv(tmp_path / "s.csv", s)
        text = (tmp_path / "s.csv").read_text().splitlines()
        assert text[0] == "# sample_rate_hz=100.0" and text[1] == "sample_index,value"
        back = read_series_csv(tmp_path / "s.csv")
        assert back.sample_rate_hz == 100.0
        np.testing.assert_array_equal(back.values, s.values)

    def test_missing_rate(self, tmp_path):
        (tmp_path / "s.csv").write_text("sample_index,value\n0,1.0\n")
        with pytest.raises(ConfigError):
            read_series_csv(tmp_path / "s.csv")

    def test_time_series_invariants(self):
        with pytest.raises(ConfigError):
            TimeSeries([], 100.0)
        with pytest.raises(ConfigError):
            TimeSeries([1.0, np.nan], 100.0)
