import io
import sys
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from cli import RunConfig, config_help, main
from config.exceptions import ConfigError
from estimators.models import CleanerTag
from network.model import GmvNetwork

SMALL_MARKET = ['--set', 'synth.n_assets=8', '--set', 'synth.n_days=200', '--set', 'synth.n_factors=2']
SMALL_TRAIN = [
    '--set', 'train.dt_in=40', '--set', 'train.n_min=6', '--set', 'train.n_max=8', '--set', 'train.epochs=1',
    '--set', 'train.steps_per_epoch=2', '--set', 'train.batch_size=3', '--set', 'train.width=8',
    '--set', 'train.validation_days=60', '--set', 'train.validation_samples=4', '--set', 'train.seed=3',
]


def run_cli(*argv):
    """(종료 코드, 표준 출력, 표준 오류)"""
    out, err = io.StringIO(), io.StringIO()
    with patch.object(sys.modules['cli.main'], 'setup_logging'), redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def error_of(err):
    """표준 오류의 마지막 줄 (오류 응답 JSON)"""
    return json.loads(err.strip().splitlines()[-1])


class RunConfigTest(unittest.TestCase):
    """설정 파일·덮어쓰기·출처"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = Path(self.tmp.name) / 'run.cfg'
        path.write_text(text, encoding='utf-8')
        return path

    def test_defaults(self):
        config = RunConfig.load()
        self.assertEqual(config.train.epochs, 100)
        self.assertEqual(config.backtest.dt_in, 1200)
        self.assertEqual(config.fees.ticket_floor, 0.35)
        self.assertEqual(config.provenance('train', 'epochs'), 'default')

    def test_file_values_and_provenance(self):
        path = self.write("# 주석\n\ntrain.epochs=7\nbacktest.strategy=qis\n")
        config = RunConfig.load(path)
        self.assertEqual(config.train.epochs, 7)
        self.assertEqual(config.backtest.strategy, 'QIS')
        self.assertEqual(config.provenance('train', 'epochs'), f"{path}:3")

    def test_set_overrides_file(self):
        path = self.write("train.epochs=7\n")
        config = RunConfig.load(path, ['train.epochs=9'])
        self.assertEqual(config.train.epochs, 9)
        self.assertEqual(config.provenance('train', 'epochs'), '--set')

    def test_unknown_key_reports_line(self):
        path = self.write("train.epochs=7\ntrain.epoch=8\n")
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.load(path)
        problem = ctx.exception.details[0]
        self.assertEqual(problem['key'], 'train.epoch')
        self.assertEqual(problem['provenance'], f"{path}:2")

    def test_unknown_section(self):
        with self.assertRaises(ConfigError):
            RunConfig.load(overrides=['trian.epochs=1'])

    def test_out_of_range_value(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.load(overrides=['fees.sec_rate=-1'])
        self.assertEqual(ctx.exception.details[0]['provenance'], '--set')

    def test_malformed_line(self):
        path = self.write("train.epochs 7\n")
        with self.assertRaises(ConfigError):
            RunConfig.load(path)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            RunConfig.load(Path(self.tmp.name) / 'absent.cfg')

    def test_list_and_none_values(self):
        config = RunConfig.load(overrides=[
            'backtest.checkpoints=a.ckpt, b.ckpt', 'diagnose.benchmarks=QIS,CLIP', 'data.path=none',
        ])
        self.assertEqual(config.backtest.checkpoints, ['a.ckpt', 'b.ckpt'])
        self.assertEqual(config.diagnose.benchmarks, [CleanerTag.QIS, CleanerTag.CLIP])
        self.assertIsNone(config.data.path)

    def test_run_seed_inherited_unless_explicit(self):
        config = RunConfig.load(overrides=['train.seed=3'], flags={'run.seed': '11', 'run.threads': '1'})
        self.assertEqual(config.synth.seed, 11)
        self.assertEqual(config.backtest.seed, 11)
        self.assertEqual(config.train.seed, 3)
        self.assertEqual(config.backtest.threads, 1)
        self.assertEqual(config.provenance('run', 'seed'), '--seed')

    def test_desk_profile(self):
        config = RunConfig.load(overrides=['run.profile=desk', 'train.epochs=3'])
        self.assertEqual(config.train.dt_in, 120)
        self.assertEqual(config.train.epochs, 3)

    def test_help_lists_every_key(self):
        text = config_help()
        self.assertIn('train.epochs=100  [paper]', text)
        self.assertIn('fees.ticket_floor=0.35  [paper]', text)
        self.assertIn('clean.tag=QIS  [paper]', text)
        for section in ('run', 'synth', 'data', 'filter', 'train', 'backtest', 'fees', 'sim', 'clean',
                        'gradcheck', 'diagnose'):
            self.assertIn(f"[{section}]", text)


class CommandLineTest(unittest.TestCase):
    """명령 실행과 종료 코드"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def test_help(self):
        stdout = io.StringIO()
        with redirect_stdout(stdout), self.assertRaises(SystemExit) as ctx:
            main(['backtest', '--help'])
        self.assertEqual(ctx.exception.code, 0)
        self.assertIn('backtest.dt_in=1200', stdout.getvalue())

    def test_unknown_command(self):
        code, _, err = run_cli('explode')
        self.assertEqual(code, 1)
        self.assertEqual(error_of(err)['error_code'], 'CONFIG_ERROR')

    def test_invalid_key_exit_code(self):
        code, _, err = run_cli('synth', '-o', str(self.out), '--set', 'synth.n_asset=5')
        self.assertEqual(code, 1)
        response = error_of(err)
        self.assertFalse(response['success'])
        self.assertEqual(response['details'][0]['provenance'], '--set')

    def test_synth_then_ingest(self):
        synth_dir = self.out / 'synth'
        code, stdout, _ = run_cli('synth', '-o', str(synth_dir), *SMALL_MARKET)
        self.assertEqual(code, 0)
        summary = json.loads(stdout)
        self.assertEqual(summary['assets'], 8)

        ingest_dir = self.out / 'ingest'
        code, stdout, _ = run_cli('ingest', '-o', str(ingest_dir), '--set', f"data.path={summary['records']}")
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)['days'], summary['days'])
        original = pd.read_csv(synth_dir / 'returns.csv', index_col=0)
        ingested = pd.read_csv(ingest_dir / 'returns.csv', index_col=0)
        np.testing.assert_allclose(ingested.to_numpy(), original.to_numpy(), rtol=0, atol=1e-7)

    def test_synth_deterministic(self):
        _, first, _ = run_cli('synth', '-o', str(self.out / 'a'), *SMALL_MARKET)
        _, second, _ = run_cli('synth', '-o', str(self.out / 'b'), *SMALL_MARKET)
        self.assertEqual(json.loads(first)['digest'], json.loads(second)['digest'])

    def test_ingest_needs_path(self):
        code, _, err = run_cli('ingest', '-o', str(self.out))
        self.assertEqual(code, 1)
        self.assertEqual(error_of(err)['details']['key'], 'data.path')

    def test_clean_mle_on_identity_market(self):
        code, stdout, _ = run_cli(
            'clean', '-o', str(self.out), '--estimator', 'mle',
            '--set', 'synth.n_assets=10', '--set', 'synth.n_days=1100', '--set', 'synth.loading_scale=0',
            '--set', 'synth.idio_vol_min=0.2', '--set', 'synth.idio_vol_max=0.2',
            '--set', 'data.window_days=1000', '--set', 'data.window_assets=10',
        )
        self.assertEqual(code, 0)
        summary = json.loads(stdout)
        self.assertEqual(summary['estimator'], 'MLE')
        self.assertEqual(summary['n'], 10)
        weights = pd.read_csv(self.out / 'clean_weights.csv')['weight'].to_numpy()
        self.assertAlmostEqual(weights.sum(), 1.0, places=10)
        np.testing.assert_allclose(weights, 0.1, atol=0.04)
        spectrum = pd.read_csv(self.out / 'clean_eigenvalues.csv')
        self.assertEqual(list(spectrum.columns), ['rank', 'sample', 'cleaned'])
        np.testing.assert_allclose(spectrum['cleaned'], spectrum['sample'], rtol=1e-8)

    def test_clean_qis_keeps_trace(self):
        code, _, _ = run_cli('clean', '-o', str(self.out), *SMALL_MARKET,
                             '--set', 'data.window_days=100', '--set', 'data.window_assets=6')
        self.assertEqual(code, 0)
        spectrum = pd.read_csv(self.out / 'clean_eigenvalues.csv')
        self.assertAlmostEqual(spectrum['cleaned'].sum(), 6.0, places=6)

    def test_clean_ao_calibrates_before_decision(self):
        code, stdout, _ = run_cli('clean', '-o', str(self.out), '-e', 'ao', *SMALL_MARKET,
                                  '--set', 'data.window_days=100', '--set', 'data.window_assets=6',
                                  '--set', 'clean.ao_samples=5')
        self.assertEqual(code, 0)
        decision = json.loads(stdout)['decision_date']
        header = (self.out / 'ao_table.csv').read_text(encoding='utf-8').splitlines()[0]
        self.assertIn('n=6 dt_in=100', header)
        span_end = header.split('span=')[1].split()[0].split('..')[1]
        self.assertLess(span_end, decision)
        spectrum = pd.read_csv(self.out / 'clean_eigenvalues.csv')
        self.assertAlmostEqual(spectrum['cleaned'].sum(), 6.0, places=6)

    def test_clean_unknown_estimator(self):
        code, _, _ = run_cli('clean', '-o', str(self.out), '--estimator', 'magic')
        self.assertEqual(code, 1)

    def test_train_deterministic_and_clean_with_checkpoint(self):
        digests = []
        for name in ('a', 'b'):
            code, stdout, _ = run_cli('train', '-o', str(self.out / name), *SMALL_MARKET, *SMALL_TRAIN)
            self.assertEqual(code, 0)
            digests.append(list(json.loads(stdout)['checkpoints'].values()))
        self.assertEqual(digests[0], digests[1])
        self.assertTrue((self.out / 'a' / 'train_history_seed3.csv').exists())

        checkpoint = self.out / 'a' / 'gmv_seed3.ckpt'
        code, stdout, _ = run_cli(
            'clean', '-o', str(self.out / 'nn'), '--estimator', 'nn', *SMALL_MARKET,
            '--set', f"backtest.checkpoints={checkpoint}", '--set', 'data.window_days=40',
            '--set', 'data.window_assets=6',
        )
        self.assertEqual(code, 0)
        spectrum = pd.read_csv(self.out / 'nn' / 'clean_eigenvalues.csv')
        self.assertAlmostEqual(float((1.0 / spectrum['cleaned']).sum()), 6.0, places=8)

    def test_backtest_deterministic(self):
        args = [*SMALL_MARKET, '--set', 'backtest.strategy=MLE', '--set', 'backtest.n=5',
                '--set', 'backtest.rebalances=3', '--set', 'backtest.interval=5', '--set', 'backtest.dt_in=30',
                '--set', 'backtest.replications=2', '--seed', '4', '--threads', '1']
        run_cli('backtest', '-o', str(self.out / 'a'), *args)
        code, stdout, _ = run_cli('backtest', '-o', str(self.out / 'b'), *args, '--xlsx')
        self.assertEqual(code, 0)
        summary = json.loads(stdout)
        self.assertEqual(summary['strategy'], 'MLE')
        self.assertTrue(any(f.endswith('.xlsx') for f in summary['files']))
        name = 'backtest_mle_unconstrained.csv'
        self.assertEqual((self.out / 'a' / name).read_text(), (self.out / 'b' / name).read_text())

    def test_backtest_ao_needs_span_or_table(self):
        code, _, err = run_cli('backtest', '-o', str(self.out), *SMALL_MARKET, '--set', 'backtest.strategy=AO',
                               '--set', 'backtest.n=5', '--set', 'backtest.dt_in=30')
        self.assertEqual(code, 1)
        self.assertEqual(error_of(err)['details']['key'], 'backtest.span_start')

    def test_simulate_cash(self):
        code, stdout, _ = run_cli('simulate', '-o', str(self.out), *SMALL_MARKET,
                                  '--set', 'sim.strategy=CASH', '--set', 'sim.dt_in=20')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)['final_nlv'], 1_000_000.0)
        self.assertTrue((self.out / 'simulation_ledger.csv').exists())

    def test_simulate_strategy_costs(self):
        code, stdout, _ = run_cli(
            'simulate', '-o', str(self.out), *SMALL_MARKET, '--set', 'sim.strategy=MLE', '--set', 'sim.n=5',
            '--set', 'sim.dt_in=30', '--set', 'sim.use_universe_filter=false', '--set', 'sim.reference_rate=0.05',
        )
        self.assertEqual(code, 0)
        costs = json.loads(stdout)['costs']
        self.assertGreater(costs['fees_commission'], 0.0)
        self.assertAlmostEqual(
            costs['nlv_change'],
            costs['trading_pnl'] + costs['dividends'] - costs['fees_commission'] - costs['fees_notional']
            - costs['fees_sec'] - costs['interest'],
            places=5,
        )

    def test_gradcheck_default_sample(self):
        code, stdout, _ = run_cli('gradcheck', '-o', str(self.out), '--set', 'gradcheck.max_entries=4')
        self.assertEqual(code, 0)
        self.assertLess(json.loads(stdout)['max_error'], 1e-4)
        report = pd.read_csv(self.out / 'gradcheck.csv')
        self.assertEqual(len(report), len(GmvNetwork.param_names(64)))

    def test_gradcheck_failure_exit_code(self):
        code, _, err = run_cli('gradcheck', '-o', str(self.out), '--set', 'gradcheck.n=4',
                               '--set', 'gradcheck.dt_in=10', '--set', 'gradcheck.width=4',
                               '--set', 'gradcheck.max_entries=2', '--set', 'gradcheck.tolerance=1e-300')
        self.assertEqual(code, 2)
        self.assertEqual(error_of(err)['error_code'], 'NUMERICAL_ERROR')

    def test_diagnose_without_checkpoints(self):
        code, stdout, _ = run_cli('diagnose', '-o', str(self.out), *SMALL_MARKET,
                                  '--set', 'diagnose.n=5', '--set', 'diagnose.dt_in=40', '--set', 'diagnose.samples=10')
        self.assertEqual(code, 0)
        summary = json.loads(stdout)
        self.assertEqual(summary['methods'], ['qis', 'raw'])
        stability = pd.read_csv(self.out / 'spectrum_stability.csv')
        self.assertEqual(len(stability), 2 * 5)
        self.assertFalse((self.out / 'lag_profile.csv').exists())

    def test_diagnose_with_checkpoint(self):
        run_cli('train', '-o', str(self.out / 'train'), *SMALL_MARKET, *SMALL_TRAIN)
        checkpoint = self.out / 'train' / 'gmv_seed3.ckpt'
        code, stdout, _ = run_cli('diagnose', '-o', str(self.out), *SMALL_MARKET,
                                  '--set', f"diagnose.checkpoints={checkpoint}", '--set', 'diagnose.n=5',
                                  '--set', 'diagnose.samples=6', '--set', 'diagnose.grid_points=11')
        self.assertEqual(code, 0)
        summary = json.loads(stdout)
        self.assertEqual(summary['dt_in'], 40)
        self.assertIn('nn', summary['methods'])
        lag = pd.read_csv(self.out / 'lag_profile.csv')
        self.assertEqual(len(lag), 40)
        transfer = pd.read_csv(self.out / 'vol_transfer.csv')
        self.assertEqual(list(transfer.columns), ['sigma', 'model_0'])
        self.assertTrue((transfer['model_0'] > 0).all())
