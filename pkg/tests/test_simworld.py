from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import signal as sps

from conoco.errors import ConfigurationError, InsufficientDataError
from conoco.simworld import (AdditiveAttack, BandStopAttack, DoubleIntegratorTask,
                             GaussianPolicy, GlimpseSensor, GlimpseSequence, JamAttack,
                             LinearPlant, PointMassTask, SequenceNoise, WGNNoise,
                             attack_additive, attack_bandstop, attack_jam, ideal_bandstop,
                             make_task, run_episode, sense)
from conoco.watermark import (ExplorationScaleSchedule, PolicyRateBounds, SecretKey,
                              generate_watermark)

BOUNDS = PolicyRateBounds(19.0, 21.0)
BAND = (1.2, 2.49)
DT = 0.005


def _band_power(x, band_digital):
    spec = np.abs(np.fft.rfft(x, axis=0)) ** 2
    f = np.fft.rfftfreq(x.shape[0])
    return float(spec[(f >= band_digital[0]) & (f <= band_digital[1])].sum())


@dataclass
class _CoastTask:
    """Zero mean rule from a moving start; used to probe passive stability."""

    name: str = "coast"
    action_dim: int = 2

    def reset(self, rng):
        return np.array([1.0, -0.5, 0.8, 0.3]), {}

    def mean(self, x, ctx):
        return np.zeros(2)

    def reward(self, x, a, ctx):
        return 0.0

    def update(self, x, ctx, rng):
        pass


# ---------------------------------------------------------------------------
# Plants
# ---------------------------------------------------------------------------

class TestLinearPlant:
    def test_double_integrator_discretization(self):
        # Closed form for an undamped double integrator under zero-order hold.
        p = LinearPlant.from_continuous([[0, 1], [0, 0]], [[0], [1]], [[0, 1]], 0.1)
        np.testing.assert_allclose(p.A, [[1, 0.1], [0, 1]], atol=1e-12)
        np.testing.assert_allclose(p.B[:, 0], [0.005, 0.1], atol=1e-12)

    def test_rejects_unstable(self):
        with pytest.raises(ConfigurationError):
            LinearPlant(np.array([[1.01]]), np.array([[1.0]]), np.array([[1.0]]), 0.1)

    def test_marginal_allowed(self):
        LinearPlant(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            LinearPlant(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), 0.1)

    def test_read_only(self):
        p = DoubleIntegratorTask().make_plant(DT)
        with pytest.raises(ValueError):
            p.A[0, 0] = 2.0

    def test_transfer_function_matches_empirical(self):
        # Open-loop damped double integrator driven by colored noise at the plant rate.
        plant = DoubleIntegratorTask().make_plant(DT)
        n = 1 << 16
        u = generate_watermark(SecretKey(4, (0.5, 8.0)), n, 2, PolicyRateBounds(200, 200)).samples
        x = np.zeros(4)
        y = np.empty((n, 2))
        for k in range(n):
            x = plant.A @ x + plant.B @ u[k]
            y[k] = plant.C @ x
        f, puu = sps.welch(u[:, 0], 1 / DT, nperseg=4096)
        _, puy = sps.csd(u[:, 0], y[:, 0], 1 / DT, nperseg=4096)
        band = (f >= BAND[0]) & (f <= BAND[1])
        # The state update maps u[k] into y[k], one step ahead of the analytic H(z).
        h_emp = puy[band] / puu[band]
        h_ana = plant.transfer_function(f[band], 0, 0) * np.exp(2j * np.pi * f[band] * DT)
        db = 20 * np.log10(np.abs(h_emp) / np.abs(h_ana))
        assert np.max(np.abs(db)) < 1.0


class TestTasks:
    def test_make_task(self):
        assert isinstance(make_task("T1"), PointMassTask)
        assert make_task("T2", init_std=2.0).init_std == 2.0
        with pytest.raises(ConfigurationError):
            make_task("T3")

    def test_plants_output_velocity(self):
        for task in (PointMassTask(), DoubleIntegratorTask()):
            p = task.make_plant(DT)
            assert (p.n_states, p.n_inputs, p.n_outputs) == (4, 2, 2)
            np.testing.assert_array_equal(p.C, [[0, 0, 1, 0], [0, 0, 0, 1]])


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

class TestRunEpisode:
    def test_passive_decay(self):
        task = _CoastTask()
        plant = DoubleIntegratorTask().make_plant(DT)
        tr = run_episode(GaussianPolicy(), plant, None, task, 200)
        norms = np.linalg.norm(tr.states[:, 2:], axis=1)
        assert np.all(np.diff(norms) <= 1e-12)

    def test_point_mass_approaches_goal(self):
        task = PointMassTask()
        plant = task.make_plant(DT)
        tr = run_episode(GaussianPolicy(), plant, None, task, 400, seed=5)
        dist = -tr.rewards
        stop = int(np.argmax(dist < task.arrival)) if np.any(dist < task.arrival) else dist.size
        assert stop > 5
        assert np.all(np.diff(dist[:stop]) < 0)

    def test_exploration_std(self):
        task = DoubleIntegratorTask()
        plant = task.make_plant(DT)
        tr = run_episode(GaussianPolicy(schedule=ExplorationScaleSchedule(value=0.3)), plant,
                         WGNNoise(8), task, 10_000)
        np.testing.assert_allclose(np.std(tr.actions - tr.means, axis=0), 0.3, rtol=0.05)

    def test_sequence_noise_injected_exactly(self):
        task = DoubleIntegratorTask()
        w = generate_watermark(SecretKey(2, BAND), 300, 2, BOUNDS)
        tr = run_episode(GaussianPolicy(schedule=ExplorationScaleSchedule(value=0.5)),
                         task.make_plant(DT), SequenceNoise(w), task, 300)
        np.testing.assert_allclose(tr.actions - tr.means, 0.5 * w.samples, atol=1e-12)

    def test_zero_order_hold_lengths(self):
        task = DoubleIntegratorTask()
        tr = run_episode(GaussianPolicy(), task.make_plant(DT), WGNNoise(1), task, 50)
        assert tr.states.shape == (50 * 10 + 1, 4)
        assert tr.duration == pytest.approx(2.5)

    def test_deterministic(self):
        task = PointMassTask()
        plant = task.make_plant(DT)
        a = run_episode(GaussianPolicy(), plant, WGNNoise(3), task, 100, seed=1)
        b = run_episode(GaussianPolicy(), plant, WGNNoise(3), PointMassTask(), 100, seed=1)
        np.testing.assert_array_equal(a.states, b.states)

    def test_process_noise_path(self):
        task = DoubleIntegratorTask()
        tr = run_episode(GaussianPolicy(), task.make_plant(DT, 0.01), None, task, 20, seed=2)
        assert np.all(np.isfinite(tr.states))

    def test_rate_mismatch(self):
        task = DoubleIntegratorTask()
        with pytest.raises(ConfigurationError):
            run_episode(GaussianPolicy(rate=19.0), task.make_plant(0.007), None, task, 10)

    def test_short_noise_sequence(self):
        task = DoubleIntegratorTask()
        w = generate_watermark(SecretKey(2, BAND), 100, 2, BOUNDS)
        with pytest.raises(ConfigurationError):
            run_episode(GaussianPolicy(), task.make_plant(DT), SequenceNoise(w), task, 200)

    def test_saturation(self):
        task = DoubleIntegratorTask()
        tr = run_episode(GaussianPolicy(schedule=ExplorationScaleSchedule(value=5.0),
                                        saturation=0.5),
                         task.make_plant(DT), WGNNoise(4), task, 200)
        assert np.max(np.abs(tr.actions)) <= 0.5


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trace_and_plant():
    task = DoubleIntegratorTask()
    plant = task.make_plant(DT)
    w = generate_watermark(SecretKey(3, BAND), 1000, 2, BOUNDS)
    return run_episode(GaussianPolicy(), plant, SequenceNoise(w), task, 1000, seed=9), plant


class TestSense:
    def test_ideal_sensor(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(rate=100.0))
        exact = tr.states[::2] @ plant.C.T
        assert len(g) == exact.shape[0]
        np.testing.assert_allclose(g.samples, exact, atol=1e-12)

    def test_identity_projection(self, trace_and_plant):
        tr, plant = trace_and_plant
        a = sense(tr, plant, GlimpseSensor())
        b = sense(tr, plant, GlimpseSensor(projection=(0.0, 0.0)))
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-15)

    def test_projection_geometry(self, trace_and_plant):
        tr, plant = trace_and_plant
        a = sense(tr, plant, GlimpseSensor())
        b = sense(tr, plant, GlimpseSensor(projection=(0.0, 60.0)))
        np.testing.assert_allclose(b.samples[:, 0], 0.5 * a.samples[:, 0], atol=1e-12)
        np.testing.assert_allclose(b.samples[:, 1], a.samples[:, 1], atol=1e-12)

    def test_drop_fraction(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(drop_fraction=0.2, n_glimpses=1000))
        assert len(g) == 800
        assert np.all(np.diff(g.timestamps) > 0)

    def test_drop_count(self, trace_and_plant):
        tr, plant = trace_and_plant
        assert len(sense(tr, plant, GlimpseSensor(drop_count=200, n_glimpses=1000))) == 800

    def test_jitter(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(jitter=0.1), seed=3)
        gaps = np.diff(g.timestamps)
        assert np.all(gaps >= 0.001 - 1e-12)
        assert np.std(gaps) == pytest.approx(0.001, rel=0.1)

    def test_jitter_floor(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(jitter=3.0), seed=3)
        assert np.min(np.diff(g.timestamps)) >= 0.001 - 1e-12

    def test_noise_level(self, trace_and_plant):
        tr, plant = trace_and_plant
        clean = sense(tr, plant, GlimpseSensor())
        noisy = sense(tr, plant, GlimpseSensor(noise=0.5), seed=1)
        assert np.std(noisy.samples - clean.samples) == pytest.approx(0.5, rel=0.05)

    def test_offset(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(offset=10.0))
        assert g.timestamps[0] == 10.0 and len(g) == 4001
        with pytest.raises(InsufficientDataError):
            sense(tr, plant, GlimpseSensor(offset=60.0))

    def test_channels(self, trace_and_plant):
        tr, plant = trace_and_plant
        g = sense(tr, plant, GlimpseSensor(channels=(1,)))
        assert g.dims == 1

    def test_sensor_validation(self):
        with pytest.raises(ConfigurationError):
            GlimpseSensor(rate=0.0)
        with pytest.raises(ConfigurationError):
            GlimpseSensor(jitter=-0.1)
        with pytest.raises(ConfigurationError):
            GlimpseSensor(drop_fraction=1.0)

    def test_glimpse_sequence_carries_no_trace_fields(self):
        names = {f.name for f in dataclasses.fields(GlimpseSequence)}
        assert names == {"samples", "rate", "timestamps", "provenance"}
        with pytest.raises(ConfigurationError):
            GlimpseSequence(np.zeros((3, 1)), 1.0, np.array([0.0, 2.0, 1.0]))


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------

class TestAdditiveAttack:
    def test_zero_strength(self):
        a = np.random.default_rng(0).normal(size=(50, 2))
        np.testing.assert_array_equal(attack_additive(a, 0.0), a)

    def test_strength_two(self):
        a = np.zeros((10_000, 2))
        np.testing.assert_allclose(np.std(attack_additive(a, 2.0, seed=4), axis=0), 2.0,
                                   rtol=0.05)

    def test_clip(self):
        assert attack_additive(np.array([[1.5]]), 0.0, clip=1.0)[0, 0] == 1.0

    def test_negative(self):
        with pytest.raises(ValueError):
            attack_additive(np.zeros((3, 1)), -1.0)

    def test_online_matches_offline(self):
        a = np.random.default_rng(1).normal(size=(40, 2))
        att = AdditiveAttack(0.7, 1.2, seed=5)
        att.start(40, 2)
        online = np.stack([att.apply(k, a[k]) for k in range(40)])
        np.testing.assert_allclose(online, attack_additive(a, 0.7, 1.2, seed=5))


class TestBandStopAttack:
    @staticmethod
    def _mixture(fraction, n=4000, seed=0):
        # In-band colored part plus an out-of-band part, scaled to the fraction.
        band = (1.2 / 20, 2.49 / 20)
        rng = np.random.default_rng(seed)
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.fft.rfftfreq(n)
        inside = (f >= band[0]) & (f <= band[1])
        a = np.fft.irfft(np.where(inside, spec, 0), n)
        b = np.fft.irfft(np.where(inside, 0, spec), n)
        a *= np.sqrt(fraction / np.mean(a ** 2))
        b *= np.sqrt((1 - fraction) / np.mean(b ** 2))
        return a + b, band

    def test_full_strength_mse_equals_fraction(self):
        x, band = self._mixture(0.6)
        y = ideal_bandstop(x, band)
        assert np.mean((y - x) ** 2) / np.mean(x ** 2) == pytest.approx(0.6, abs=0.02)

    def test_no_power_in_band(self):
        x, band = self._mixture(0.0)
        y = ideal_bandstop(x, band)
        assert np.mean((y - x) ** 2) / np.mean(x ** 2) < 0.01

    def test_causal_filter_passes_distant_tone(self):
        x = np.sin(2 * np.pi * 0.3 * np.arange(4000))
        y = attack_bandstop(x, (1.2 / 20, 2.49 / 20), 4)
        # IIR phase shifts the tone, so compare power rather than waveform.
        assert np.mean(y[400:] ** 2) == pytest.approx(np.mean(x[400:] ** 2), rel=0.01)

    def test_attenuation_grows_with_order(self):
        x, band = self._mixture(0.6)
        left = [_band_power(attack_bandstop(x, band, k), band) for k in (2, 4, 8)]
        assert left[0] > left[1] > left[2]
        assert left[2] < 0.1 * _band_power(x, band)

    def test_online_matches_offline(self):
        x = np.random.default_rng(2).normal(size=(200, 2))
        att = BandStopAttack((0.06, 0.12), 4)
        att.start(200, 2)
        online = np.stack([att.apply(k, x[k]) for k in range(200)])
        np.testing.assert_allclose(online, attack_bandstop(x, (0.06, 0.12), 4), atol=1e-12)


class TestJamAttack:
    def test_band_power_additive(self):
        n = 100_000
        band = (1.2 / 21, 2.49 / 19)
        w = generate_watermark(SecretKey(1, BAND), n, 1, BOUNDS).samples
        combined = attack_jam(w, np.ones(n), SecretKey(2, BAND), BOUNDS, owner_seed=1)
        jam = combined - w
        total = _band_power(w, band) + _band_power(jam, band)
        assert _band_power(combined, band) == pytest.approx(total, rel=0.05)

    def test_true_key_negated_cancels(self):
        key = SecretKey(1, BAND)
        w = generate_watermark(key, 4000, 2, BOUNDS).samples
        out = attack_jam(w, -np.ones(4000), key, BOUNDS)
        band = (1.2 / 21, 2.49 / 19)
        assert _band_power(out, band) < 0.01 * _band_power(w, band)

    def test_rejects_owner_seed(self):
        with pytest.raises(ConfigurationError):
            attack_jam(np.zeros((100, 1)), np.ones(100), SecretKey(7, BAND), BOUNDS, owner_seed=7)

    def test_online_matches_offline(self):
        key = SecretKey(3, BAND)
        x = np.zeros((300, 2))
        att = JamAttack(key, BOUNDS, 0.5)
        att.start(300, 2)
        online = np.stack([att.apply(k, x[k]) for k in range(300)])
        np.testing.assert_allclose(online, attack_jam(x, np.full(300, 0.5), key, BOUNDS))
