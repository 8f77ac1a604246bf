import numpy as np
import pytest

from ionnode.bootstrap import (
    BootstrapError,
    ResamplingSpec,
    bootstrap_ci,
    resample_dataset,
    resample_two_ion,
)
from ionnode.optics import OpticsConfig
from ionnode.protocol import bell_pair, synthetic_dataset

IDEAL = OpticsConfig()


def small_dataset(seed=1, clicks=200):
    return synthetic_dataset(bell_pair(0.1), IDEAL, clicks, seed=seed)


class TestResampleDataset:
    def test_deterministic_from_seed(self):
        data = small_dataset()
        a = resample_dataset(data, 42)
        b = resample_dataset(data, 42)
        assert np.array_equal(a.attempts, b.attempts)
        assert np.array_equal(a.n_click, b.n_click)
        assert np.array_equal(a.n_bright, b.n_bright)

    def test_different_seed_differs(self):
        data = small_dataset()
        a = resample_dataset(data, 42)
        b = resample_dataset(data, 43)
        assert not (
            np.array_equal(a.n_click, b.n_click) and np.array_equal(a.attempts, b.attempts)
        )

    def test_degenerate_bins_preserved(self):
        # all mass on one detector with a deterministic ion outcome: only
        # the Poisson attempt totals may vary
        data = small_dataset()
        data.n_click[:] = 0
        data.n_bright[:] = 0
        data.n_dark[:] = 0
        data.n_empty[:] = 0
        data.n_click[2] = data.attempts
        data.n_bright[2] = data.attempts
        data.validate()
        out = resample_dataset(data, 7)
        assert np.array_equal(out.n_click[2], out.attempts)
        assert np.array_equal(out.n_bright[2], out.attempts)
        assert out.n_click[[0, 1, 3]].sum() == 0 and out.n_empty.sum() == 0

    def test_unbiased_means(self):
        data = small_dataset(clicks=500)
        setting = 3
        n_draws = 10_000
        clicks = np.zeros((n_draws, 4))
        brights = np.zeros(n_draws)
        attempts = np.zeros(n_draws)
        for r in range(n_draws):
            out = resample_dataset(data, 10_000 + r)
            clicks[r] = out.n_click[:, setting]
            brights[r] = out.n_bright[0, setting]
            attempts[r] = out.attempts[setting]
        for k in range(4):
            mean = clicks[:, k].mean()
            se = clicks[:, k].std(ddof=1) / np.sqrt(n_draws)
            assert abs(mean - data.n_click[k, setting]) <= 3 * max(se, 1e-9)
        se_b = brights.std(ddof=1) / np.sqrt(n_draws)
        assert abs(brights.mean() - data.n_bright[0, setting]) <= 3 * max(se_b, 1e-9)
        se_a = attempts.std(ddof=1) / np.sqrt(n_draws)
        assert abs(attempts.mean() - data.attempts[setting]) <= 3 * se_a

    def test_resample_is_valid_dataset(self):
        data = small_dataset()
        for seed in range(20):
            resample_dataset(data, seed).validate()


class TestResampleTwoIon:
    def test_deterministic_outcome(self):
        counts = np.array([100, 0, 0, 0])
        for seed in range(10):
            assert np.array_equal(resample_two_ion(counts, seed), counts)

    def test_mean_of_balanced(self):
        counts = np.array([50, 50, 0, 0])
        draws = np.array([resample_two_ion(counts, s)[0] for s in range(10_000)])
        # binomial(100, 1/2) std error of the mean over 1e4 draws = 0.05
        assert abs(draws.mean() - 50.0) <= 1.5

    def test_total_preserved(self):
        counts = np.array([13, 7, 21, 9])
        for seed in range(50):
            assert resample_two_ion(counts, seed).sum() == 50

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            resample_two_ion(np.array([1, 2, 3]), 0)


class TestBootstrapCI:
    def test_constant_statistic(self):
        data = small_dataset()
        spec = ResamplingSpec(replicates=50, seed=5)
        res = bootstrap_ci(data, spec, lambda ds: 0.75)
        assert res.point == res.lo == res.hi == 0.75

    def test_containment_for_smooth_statistic(self):
        data = small_dataset(clicks=400)

        def stat(ds):
            return ds.n_bright.sum() / max(ds.n_click.sum(), 1)

        res = bootstrap_ci(data, ResamplingSpec(replicates=200, seed=8), stat)
        assert res.lo <= res.point <= res.hi

    def test_reproducible(self):
        data = small_dataset()

        def stat(ds):
            return float(ds.n_click[0].sum())

        a = bootstrap_ci(data, ResamplingSpec(replicates=30, seed=3), stat)
        b = bootstrap_ci(data, ResamplingSpec(replicates=30, seed=3), stat)
        assert np.array_equal(a.values, b.values)

    def test_workers_do_not_change_result(self):
        data = small_dataset()

        def stat(ds):
            return float(ds.n_bright[1].sum())

        a = bootstrap_ci(data, ResamplingSpec(replicates=40, seed=9), stat, workers=1)
        b = bootstrap_ci(data, ResamplingSpec(replicates=40, seed=9), stat, workers=4)
        assert np.array_equal(a.values, b.values)

    def test_failure_threshold(self):
        data = small_dataset()
        calls = {"n": 0}

        def flaky(ds):
            calls["n"] += 1
            if calls["n"] % 3 == 0:
                raise RuntimeError("synthetic failure")
            return 1.0

        with pytest.raises(BootstrapError, match="replicates failed"):
            bootstrap_ci(data, ResamplingSpec(replicates=30, seed=2), flaky)

    def test_ci_width_shrinks_with_sample_size(self):
        # statistical check with a cheap deterministic statistic
        widths = {1: [], 4: []}
        for run in range(20):
            for factor in (1, 4):
                data = synthetic_dataset(bell_pair(0.3), IDEAL, 150 * factor, seed=600 + run)

                def stat(ds):
                    return ds.n_bright.sum() / max(ds.n_click.sum(), 1)

                res = bootstrap_ci(data, ResamplingSpec(replicates=120, seed=run), stat)
                widths[factor].append(res.hi - res.lo)
        assert np.mean(widths[4]) <= 0.7 * np.mean(widths[1])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ResamplingSpec(replicates=1, seed=0).validate()
        with pytest.raises(ValueError):
            ResamplingSpec(replicates=10, seed=0, statistic="nonsense").validate()
