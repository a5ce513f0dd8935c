import tempfile
import unittest
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError
from scipy.stats import chisquare

from autodiff import AdamState, adam_step
from config.exceptions import CheckpointError, DataValidationError, LeakageError
from network.model import GmvNetwork
from panel import ReturnPanel, SyntheticMarketSpec, generate_synthetic
from training import (
    MAGIC, Checkpoint, CheckpointSchedule, SampleDrawer, TrainConfig, TrainProfile, calibration_end_for,
    decode_checkpoint, draw_sample, encode_checkpoint, evaluate_loss, load_checkpoint, reduce_batch,
    sample_gradient, save_checkpoint, train,
)
from training.tasks import train_task


def small_config(**overrides):
    base = dict(dt_in=40, dt_out=5, n_min=6, n_max=10, epochs=1, steps_per_epoch=2, batch_size=3,
                width=8, validation_days=60, validation_samples=4, seed=3)
    base.update(overrides)
    return TrainConfig(**base)


def synthetic_panel(n_assets=16, n_days=200, seed=1):
    spec = SyntheticMarketSpec(n_assets=n_assets, n_days=n_days, n_factors=2, seed=seed)
    panel, _ = generate_synthetic(spec)
    return panel


class TrainConfigTest(unittest.TestCase):

    def test_learning_rate_schedule(self):
        config = TrainConfig()
        self.assertAlmostEqual(config.learning_rate_at(0), 1e-4)
        self.assertAlmostEqual(config.learning_rate_at(500), 0.99e-4, places=15)

    def test_invalid_asset_range(self):
        with self.assertRaises(ValidationError):
            TrainConfig(n_min=100, n_max=50)

    def test_unknown_key(self):
        with self.assertRaises(ValidationError):
            TrainConfig(batchsize=3)

    def test_desk_profile(self):
        config = TrainConfig.for_profile(TrainProfile.DESK)
        self.assertEqual((config.dt_in, config.n_min, config.n_max), (120, 20, 60))
        self.assertEqual(TrainConfig.for_profile('paper').dt_in, 1200)

    def test_hash_tracks_values(self):
        self.assertEqual(TrainConfig().config_hash(), TrainConfig().config_hash())
        self.assertNotEqual(TrainConfig().config_hash(), TrainConfig(seed=1).config_hash())


class SamplerTest(unittest.TestCase):
    """학습 표본 추출"""

    def test_minimal_span_forces_decision_date(self):
        config = small_config()
        panel = synthetic_panel(n_days=config.dt_in + config.dt_out + 1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            sample = draw_sample(panel, config, rng)
            self.assertEqual(sample.t, config.dt_in)

    def test_one_day_gap_between_windows(self):
        config = small_config()
        panel = synthetic_panel()
        sample = draw_sample(panel, config, np.random.default_rng(1))
        self.assertEqual(sample.input_rows[1], sample.t)
        self.assertEqual(sample.oos_rows[0], sample.t + 1)
        np.testing.assert_array_equal(sample.window, panel.returns[sample.t - 40:sample.t][:, sample.columns])
        np.testing.assert_array_equal(sample.oos, panel.returns[sample.t + 1:sample.t + 6][:, sample.columns])
        self.assertTrue(6 <= sample.n <= 10)
        self.assertEqual(len(set(sample.columns.tolist())), sample.n)

    def test_span_too_short(self):
        config = small_config()
        panel = synthetic_panel(n_days=config.dt_in + config.dt_out)
        with self.assertRaises(DataValidationError):
            draw_sample(panel, config, np.random.default_rng(0))

    def test_asset_count_uniform(self):
        config = small_config(n_min=5, n_max=14)
        panel = synthetic_panel(n_days=60)
        drawer = SampleDrawer(panel, config)
        rng = np.random.default_rng(2)
        counts = np.bincount([drawer.draw(rng).n for _ in range(10000)], minlength=15)[5:]
        self.assertGreater(chisquare(counts).pvalue, 0.01)

    def test_asset_count_uniform_when_universe_shrinks(self):
        panel = synthetic_panel(n_days=200)
        returns = panel.returns.copy()
        returns[:100, 8:] = np.nan
        late_listed = ReturnPanel(dates=panel.dates, assets=panel.assets, returns=returns)
        config = small_config(n_min=6, n_max=14)
        drawer = SampleDrawer(late_listed, config)
        rng = np.random.default_rng(7)
        samples = [drawer.draw(rng) for _ in range(4500)]
        counts = np.bincount([s.n for s in samples], minlength=15)[6:]
        self.assertGreater(chisquare(counts).pvalue, 0.01)
        for sample in samples:
            if sample.n > 8:
                self.assertGreaterEqual(sample.t - config.dt_in, 100)
            self.assertFalse(np.isnan(sample.window).any())
        panel = synthetic_panel(n_days=300)
        config = small_config(calibration_end=panel.dates[199].date())
        drawer = SampleDrawer(panel, config)
        rng = np.random.default_rng(3)
        for _ in range(200):
            sample = drawer.draw(rng)
            self.assertLessEqual(sample.oos_rows[1], 200)
        with self.assertRaises(LeakageError):
            drawer.build(200 - config.dt_out, np.arange(6))

    def test_incomplete_assets_never_drawn(self):
        panel = synthetic_panel()
        returns = panel.returns.copy()
        returns[100, 0] = np.nan
        gapped = ReturnPanel(dates=panel.dates, assets=panel.assets, returns=returns)
        drawer = SampleDrawer(gapped, small_config())
        rng = np.random.default_rng(4)
        for _ in range(100):
            sample = drawer.draw(rng)
            if sample.t - 40 <= 100 < sample.t + 6:
                self.assertNotIn(0, sample.columns)

    def test_validation_region_held_out(self):
        panel = synthetic_panel(n_days=300)
        config = small_config()
        drawer = SampleDrawer(panel, config)
        validation = drawer.validation_set(np.random.default_rng(5))
        self.assertEqual(len(validation), 4)
        self.assertTrue(all(s.t >= 300 - 60 for s in validation))
        rng = np.random.default_rng(6)
        for _ in range(50):
            sample = drawer.draw_training(rng)
            self.assertLess(sample.oos_rows[1] - 1, drawer.validation_t_min)


class CheckpointTest(unittest.TestCase):
    """체크포인트 컨테이너"""

    def setUp(self):
        network = GmvNetwork(12, width=4, seed=9)
        self.ckpt = Checkpoint.from_network(network, calibration_end=date(2019, 12, 31), seed=9)

    def test_bitwise_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(self.ckpt, Path(tmp) / 'model.ckpt')
            loaded = load_checkpoint(path)
        self.assertEqual(list(loaded.arrays), GmvNetwork.param_names(4))
        for name, array in self.ckpt.arrays.items():
            self.assertEqual(loaded.arrays[name].tobytes(), array.tobytes())
        self.assertEqual(loaded.meta, self.ckpt.meta)

    def test_header_layout(self):
        payload = encode_checkpoint(self.ckpt)
        self.assertEqual(payload[:8], MAGIC)
        self.assertEqual(int.from_bytes(payload[8:12], 'little'), 1)

    def test_corrupted_magic(self):
        payload = bytearray(encode_checkpoint(self.ckpt))
        payload[0] ^= 0xFF
        with self.assertRaises(CheckpointError):
            decode_checkpoint(bytes(payload))

    def test_truncated(self):
        payload = encode_checkpoint(self.ckpt)
        with self.assertRaises(CheckpointError):
            decode_checkpoint(payload[:-8])

    def test_version_mismatch(self):
        payload = bytearray(encode_checkpoint(self.ckpt))
        payload[8:12] = (99).to_bytes(4, 'little')
        with self.assertRaises(CheckpointError):
            decode_checkpoint(bytes(payload))

    def test_count_mismatch(self):
        self.ckpt.meta.param_count = 1
        with self.assertRaises(CheckpointError):
            decode_checkpoint(encode_checkpoint(self.ckpt))

    def test_paper_scale_count(self):
        self.assertEqual(GmvNetwork.expected_param_count(1200, 64), 39586)

    def test_restored_network_matches(self):
        window = 0.01 * np.random.default_rng(10).standard_normal((12, 5))
        original = GmvNetwork(12, width=4, seed=9)
        restored = decode_checkpoint(encode_checkpoint(self.ckpt)).to_network()
        np.testing.assert_array_equal(
            restored.forward(window).weights.data, original.forward(window).weights.data
        )


class TrainerTest(unittest.TestCase):
    """학습 루프"""

    def setUp(self):
        self.panel = synthetic_panel(n_days=200)

    def test_zero_epochs_returns_initialization(self):
        result = train(self.panel, small_config(epochs=0))
        initial = GmvNetwork(40, width=8, seed=3).copy_arrays()
        self.assertEqual(result.history, [])
        for name, array in initial.items():
            np.testing.assert_array_equal(result.checkpoint.arrays[name], array)
        self.assertEqual(result.checkpoint.meta.calibration_end, self.panel.dates[-1].date())

    def test_deterministic(self):
        a = train(self.panel, small_config())
        b = train(self.panel, small_config())
        for name in a.checkpoint.arrays:
            self.assertEqual(a.checkpoint.arrays[name].tobytes(), b.checkpoint.arrays[name].tobytes())
        self.assertEqual(len(a.history), 1)
        self.assertTrue(np.isfinite(a.history[0].train_loss))

    def test_thread_count_does_not_change_result(self):
        a = train(self.panel, small_config(threads=1))
        b = train(self.panel, small_config(threads=3))
        for name in a.checkpoint.arrays:
            np.testing.assert_allclose(b.checkpoint.arrays[name], a.checkpoint.arrays[name], rtol=1e-12, atol=1e-15)

    def test_every_parameter_group_receives_gradient(self):
        network = GmvNetwork(40, width=8, seed=4)
        sample = draw_sample(self.panel, small_config(), np.random.default_rng(7))
        loss, grads = sample_gradient(network, sample)
        self.assertTrue(np.isfinite(loss))
        for prefix in ('lag.alpha', 'lag.beta_raw', 'lstm.fwd.', 'lstm.bwd.', 'lstm.head.', 'mlp.'):
            group = [g for name, g in grads.items() if name.startswith(prefix)]
            self.assertTrue(group, prefix)
            self.assertTrue(any(np.any(g != 0) for g in group), prefix)

    def test_adam_step_lowers_fixed_batch_loss(self):
        network = GmvNetwork(40, width=8, seed=5)
        drawer = SampleDrawer(self.panel, small_config())
        rng = np.random.default_rng(8)
        batch = [drawer.draw(rng) for _ in range(4)]
        before = evaluate_loss(network, batch)
        _, grads, dropped = reduce_batch([sample_gradient(network, s) for s in batch])
        self.assertEqual(dropped, 0)
        self.assertTrue(adam_step(network.arrays(), grads, AdamState(), 1e-5, clip_norm=1.0))
        self.assertLess(evaluate_loss(network, batch), before)

    def test_non_finite_samples_are_skipped(self):
        loss, grads, dropped = reduce_batch([(float('nan'), None), (2.0, {'x': np.ones(2)})])
        self.assertEqual((loss, dropped), (2.0, 1))
        np.testing.assert_array_equal(grads['x'], np.ones(2))
        _, none, _ = reduce_batch([(float('nan'), None)])
        self.assertIsNone(none)

    @pytest.mark.slow
    def test_desk_smoke_run(self):
        panel = synthetic_panel(n_assets=50, n_days=600, seed=2)
        config = TrainConfig(dt_in=120, n_min=20, n_max=40, epochs=2, steps_per_epoch=20, batch_size=4,
                             validation_samples=8, seed=1)
        result = train(panel, config)
        self.assertEqual([r.epoch for r in result.history], [1, 2])
        self.assertTrue(all(np.isfinite(r.train_loss) and np.isfinite(r.validation_loss) for r in result.history))
        self.assertEqual(result.checkpoint.meta.param_count, GmvNetwork.expected_param_count(120, 64))


class ScheduleTest(unittest.TestCase):
    """연 단위 재보정 일정"""

    def make(self, end, seed=0):
        return Checkpoint.from_network(GmvNetwork(12, width=4, seed=seed), calibration_end=end, seed=seed)

    def test_calibration_end(self):
        self.assertEqual(calibration_end_for('2015-06-01'), date(2014, 12, 31))

    def test_latest_preceding_calibration(self):
        schedule = CheckpointSchedule([
            self.make(date(2014, 12, 31)), self.make(date(2015, 12, 31), 1), self.make(date(2015, 12, 31), 2),
        ])
        self.assertEqual(schedule.select('2015-03-02').calibration_end, date(2014, 12, 31))
        entry = schedule.select('2016-01-04')
        self.assertEqual(entry.calibration_end, date(2015, 12, 31))
        self.assertEqual(len(entry.networks()), 2)

    def test_no_preceding_calibration(self):
        schedule = CheckpointSchedule([self.make(date(2014, 12, 31))])
        with self.assertRaises(LeakageError):
            schedule.select('2014-12-31')

    def test_ensemble_precision_is_mean(self):
        schedule = CheckpointSchedule([self.make(date(2014, 12, 31), 1), self.make(date(2014, 12, 31), 2)])
        window = 0.01 * np.random.default_rng(11).standard_normal((12, 4))
        nets = schedule.select('2015-01-02').networks()
        expected = 0.5 * (nets[0].forward(window).precision.data + nets[1].forward(window).precision.data)
        np.testing.assert_allclose(schedule.precision('2015-01-02', window), expected, rtol=1e-14)

    def test_missing_calibration_end(self):
        with self.assertRaises(CheckpointError):
            CheckpointSchedule([Checkpoint.from_network(GmvNetwork(12, width=4))])


class TrainTaskTest(unittest.TestCase):

    def test_task_writes_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = str(Path(tmp) / 'task.ckpt')
            result = train_task.apply(kwargs={
                'config': small_config(epochs=0).model_dump(mode='json'),
                'output': output,
                'synth': {'n_assets': 12, 'n_days': 120, 'n_factors': 1},
            }).get()
            self.assertEqual(result['status'], 'success')
            self.assertTrue(Path(output).exists())
            self.assertEqual(load_checkpoint(output).meta.dt_in, 40)

    def test_task_reports_invalid_config(self):
        result = train_task.apply(kwargs={'config': {'n_min': 9, 'n_max': 3}, 'output': 'unused.ckpt'}).get()
        self.assertFalse(result['success'])
        self.assertEqual(result['error_code'], 'VALIDATION_ERROR')
