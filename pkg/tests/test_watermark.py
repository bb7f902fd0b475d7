from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from conoco.errors import BandEdgeError, ConfigurationError, InsufficientDataError
from conoco.sigproc import splitmix64
from conoco.watermark import (ExplorationScaleSchedule, PolicyRateBounds, SecretKey,
                              derive_dim_seed, digital_band, generate_watermark, inject_action,
                              smooth_scale)

BAND = (1.2, 2.49)
BOUNDS = PolicyRateBounds(19.0, 21.0)


# ---------------------------------------------------------------------------
# Keys and bounds
# ---------------------------------------------------------------------------

class TestKeyTypes:
    def test_band_validation(self):
        with pytest.raises(BandEdgeError):
            SecretKey(1, (2.0, 1.0))
        with pytest.raises(BandEdgeError):
            SecretKey(1, (0.0, 1.0))

    def test_seed_reduced_to_64_bits(self):
        assert SecretKey((1 << 64) + 3, BAND).seed == 3

    def test_with_seed_keeps_band(self):
        k = SecretKey(1, BAND).with_seed(2)
        assert k.seed == 2 and k.band == BAND

    def test_bounds_validation(self):
        with pytest.raises(ConfigurationError):
            PolicyRateBounds(21.0, 19.0)
        with pytest.raises(ConfigurationError):
            PolicyRateBounds(0.0, 1.0)
        assert BOUNDS.contains(20.0) and not BOUNDS.contains(22.0)

    def test_digital_band(self):
        lo, hi = digital_band(SecretKey(1, BAND), BOUNDS)
        assert lo == pytest.approx(1.2 / 21) and hi == pytest.approx(2.49 / 19)

    def test_digital_band_above_nyquist(self):
        with pytest.raises(BandEdgeError):
            digital_band(SecretKey(1, (5.0, 9.8)), BOUNDS)


class TestDeriveDimSeed:
    def test_formula(self):
        s = 123456789
        assert derive_dim_seed(s, 3) == splitmix64(s ^ ((3 * 0x9E3779B97F4A7C15) % (1 << 64)))

    def test_deterministic(self):
        assert derive_dim_seed(99, 1) == derive_dim_seed(99, 1)

    def test_distinct_dims(self):
        rng = np.random.default_rng(0)
        seeds = rng.integers(0, 2**63, size=10_000, dtype=np.int64)
        assert all(derive_dim_seed(int(s), 1) != derive_dim_seed(int(s), 2) for s in seeds)

    def test_streams_uncorrelated(self):
        w = generate_watermark(SecretKey(5, (1.0, 9.0)), 100_000, 2, BOUNDS).samples
        from conoco.sigproc import gaussian_stream
        a = gaussian_stream(derive_dim_seed(5, 1), 100_000)
        b = gaussian_stream(derive_dim_seed(5, 2), 100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
        assert w.shape == (100_000, 2)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            derive_dim_seed(1, 0)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

class TestGenerateWatermark:
    def test_unit_std_per_column(self):
        w = generate_watermark(SecretKey(7, BAND), 5000, 2, BOUNDS)
        np.testing.assert_allclose(np.std(w.samples, axis=0), 1.0, atol=1e-9)

    def test_expected_power_inside_digital_band(self):
        # Analytic: fraction of |H|^2 inside the band for white input.
        from conoco.sigproc import design_bandpass
        lo, hi = 1.2 / 21, 2.49 / 19
        f = np.linspace(0, 0.5, 200_001)
        h2 = np.abs(design_bandpass(4, lo, hi).response(f)) ** 2
        assert h2[(f >= lo) & (f <= hi)].sum() / h2.sum() >= 0.9

    def test_power_inside_digital_band(self):
        # Periodogram oracle averaged over keys; a single column scatters
        # around the expected fraction by a few percent.
        f = np.fft.rfftfreq(5000)
        inside = (f >= 1.2 / 21) & (f <= 2.49 / 19)
        fractions = []
        for seed in range(20):
            w = generate_watermark(SecretKey(seed, BAND), 5000, 2, BOUNDS).samples
            for col in w.T:
                p = np.abs(np.fft.rfft(col)) ** 2
                fractions.append(p[inside].sum() / p.sum())
        assert np.mean(fractions) >= 0.9
        assert min(fractions) >= 0.85

    def test_deterministic(self):
        a = generate_watermark(SecretKey(7, BAND), 800, 3, BOUNDS).samples
        b = generate_watermark(SecretKey(7, BAND), 800, 3, BOUNDS).samples
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = generate_watermark(SecretKey(7, BAND), 800, 1, BOUNDS).samples
        b = generate_watermark(SecretKey(8, BAND), 800, 1, BOUNDS).samples
        assert abs(np.corrcoef(a[:, 0], b[:, 0])[0, 1]) < 0.3

    def test_pooled_marginal_is_standard_normal(self):
        pooled = np.concatenate([
            generate_watermark(SecretKey(s, BAND), 5000, 1, BOUNDS).samples[:, 0]
            for s in range(20)])
        assert stats.kstest(pooled, "norm").pvalue > 0.01

    def test_lag_one_autocorrelation(self):
        # App-D style pendulum band at 20 Hz: strongly colored.
        col = generate_watermark(SecretKey(3, (0.1, 1.5)), 5000, 1, BOUNDS).samples[:, 0]
        assert np.corrcoef(col[:-1], col[1:])[0, 1] > 0.3

    def test_read_only(self):
        w = generate_watermark(SecretKey(1, BAND), 500, 1, BOUNDS)
        with pytest.raises(ValueError):
            w.samples[0, 0] = 1.0

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            generate_watermark(SecretKey(1, BAND), 40, 1, BOUNDS)

    def test_infeasible_band(self):
        with pytest.raises(BandEdgeError):
            generate_watermark(SecretKey(1, (5.0, 12.0)), 500, 1, BOUNDS)


# ---------------------------------------------------------------------------
# Injection and exploration scale
# ---------------------------------------------------------------------------

class TestInjectAction:
    def test_identity(self):
        w = np.array([0.3, -1.2])
        np.testing.assert_array_equal(inject_action(np.zeros(2), np.ones(2), w), w)

    def test_zero_noise(self):
        m = np.array([1.5, -0.5])
        np.testing.assert_array_equal(inject_action(m, np.full(2, 0.3), np.zeros(2)), m)

    def test_saturation_applied_last(self):
        out = inject_action(np.array([0.8]), np.array([1.0]), np.array([0.7]), saturation=1.0)
        assert out[0] == 1.0

    def test_episode_std(self):
        w = generate_watermark(SecretKey(11, BAND), 10_000, 2, BOUNDS).samples
        m = np.random.default_rng(0).normal(size=(10_000, 2))
        a = inject_action(m, 0.4, w)
        np.testing.assert_allclose(np.std(a - m, axis=0), 0.4, rtol=0.05)


class TestSmoothScale:
    def test_window_one_identity(self):
        v = np.random.default_rng(0).uniform(0.5, 2, size=(50, 2))
        np.testing.assert_array_equal(smooth_scale(v, 1), v)

    def test_constant_unchanged(self):
        np.testing.assert_allclose(smooth_scale(np.full(40, 0.7), 9), 0.7)

    def test_step(self):
        v = np.where(np.arange(200) < 100, 1.0, 2.0)
        out = smooth_scale(v, 10)
        assert out[104] == pytest.approx(1.5)
        assert out[99] == pytest.approx(1.0) and out[109] == pytest.approx(2.0)

    def test_head_averages_seen_values(self):
        out = smooth_scale(np.array([1.0, 3.0, 5.0, 7.0]), 3)
        np.testing.assert_allclose(out, [1.0, 2.0, 3.0, 5.0])

    def test_rejects_zero_window(self):
        with pytest.raises(ValueError):
            smooth_scale(np.ones(3), 0)


class TestSchedule:
    def test_constant(self):
        s = ExplorationScaleSchedule(value=0.5).sample(10, 2)
        assert s.shape == (10, 2) and np.all(s == 0.5)

    def test_sinusoidal(self):
        s = ExplorationScaleSchedule("sinusoidal", value=1.0, amplitude=0.5, period=4).sample(4, 1)
        np.testing.assert_allclose(s[:, 0], [1.0, 1.5, 1.0, 0.5], atol=1e-12)

    def test_step_with_smoothing(self):
        s = ExplorationScaleSchedule("step", value=1.0, step_at=100, step_to=2.0,
                                     smoothing=10).sample(200, 1)
        assert s[104, 0] == pytest.approx(1.5)

    def test_custom(self):
        s = ExplorationScaleSchedule("custom", values=(0.1, 0.2, 0.3)).sample(3, 2)
        np.testing.assert_allclose(s[:, 1], [0.1, 0.2, 0.3])
        with pytest.raises(ConfigurationError):
            ExplorationScaleSchedule("custom", values=(0.1,)).sample(3, 1)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            ExplorationScaleSchedule("ramp")

    def test_negative_scale_rejected(self):
        with pytest.raises(ConfigurationError):
            ExplorationScaleSchedule(value=-1.0).sample(5, 1)

    def test_zero_scale_allowed(self):
        assert np.all(ExplorationScaleSchedule(value=0.0).sample(5, 1) == 0)
