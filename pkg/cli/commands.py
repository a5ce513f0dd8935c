"""
명령 구현

각 명령은 (RunConfig, argparse.Namespace)를 받아 산출물을 run.output_dir에 쓰고
표준 출력용 요약 dict를 돌려줍니다. 난수는 모두 설정의 시드에서 나옵니다.
"""
from argparse import Namespace
from pathlib import Path
from typing import Callable, Dict, List, Tuple
import hashlib
import logging

import numpy as np
import pandas as pd

from autodiff import eigh_array, grad_check
from backtest.engine import run_frictionless
from backtest.models import NN_STRATEGY, STRATEGIES
from backtest.reports import write_backtest_report
from backtest.strategies import strategy_for_market
from broker.models import CASH_STRATEGY, from_micro
from broker.simulator import run_simulation, write_simulation_report
from config.exceptions import ConfigError, DataValidationError, NumericalError
from config.seeds import STREAM_DIAGNOSE, STREAM_GRADCHECK, make_rng
from estimators.average_oracle import calibrate_ao
from estimators.cleaners import correlation_matrix
from estimators.dispatch import clean_correlation, spectrum_map
from estimators.models import CleanConfig, CleanerTag
from network.diagnostics import spectrum_stability_report
from network.model import GmvNetwork
from panel.ingest import ingest_csv
from panel.models import SyntheticMarketSpec
from panel.sources import MarketData, load_market
from panel.synthetic import generate_synthetic
from panel.universe import filter_universe
from training.checkpoint import load_checkpoint, save_checkpoint
from training.schedule import train_yearly
from training.trainer import train_ensemble
from .run_config import RunConfig

logger = logging.getLogger(__name__)

MAX_WINDOW_ATTEMPTS = 100


def output_dir(config: RunConfig) -> Path:
    path = Path(config.run.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def market_for(config: RunConfig) -> MarketData:
    return load_market(config.data.path, config.synth)


def run_synth(config: RunConfig, args: Namespace) -> dict:
    """합성 시장 생성 → records.csv (수집 형식), returns.csv, population_covariance.csv"""
    market = load_market(synth=config.synth)
    out = output_dir(config)
    records = out / 'records.csv'
    market.store.to_csv(records)
    market.panel.to_frame().to_csv(out / 'returns.csv', float_format='%.10g')
    assets = market.panel.assets
    pd.DataFrame(market.population, index=assets, columns=assets).to_csv(
        out / 'population_covariance.csv', float_format='%.12g')
    return {
        'command': 'synth',
        'days': market.panel.n_days,
        'assets': market.panel.n_assets,
        'records': str(records),
        'digest': file_digest(records),
    }


def run_ingest(config: RunConfig, args: Namespace) -> dict:
    """CSV 수집·검증 → returns.csv (선택: 마지막 거래일 유니버스 필터)"""
    if config.data.path is None:
        raise ConfigError("ingest 명령에는 data.path가 필요합니다",
                          details={'key': 'data.path', 'provenance': config.provenance('data', 'path')})
    panel, store = ingest_csv(config.data.path)
    out = output_dir(config)
    panel.to_frame().to_csv(out / 'returns.csv', float_format='%.10g')
    summary = {
        'command': 'ingest',
        'days': panel.n_days,
        'assets': panel.n_assets,
        'first_date': str(panel.dates[0].date()),
        'last_date': str(panel.dates[-1].date()),
    }
    if args.universe:
        selection = filter_universe(store, store.dates[-1], config.data.window_assets, config.filter)
        pd.DataFrame({'asset_id': selection.assets}).to_csv(out / 'universe.csv', index=False)
        summary['universe'] = {
            'selected': len(selection.assets),
            'shortfall': selection.shortfall,
            'excluded': selection.excluded,
        }
    return summary


def run_train(config: RunConfig, args: Namespace) -> dict:
    """
    학습 → 체크포인트와 에폭별 손실 CSV

    --years가 있으면 연도별 재보정 일정으로 학습합니다.
    """
    market = market_for(config)
    out = output_dir(config)
    train_config = config.train
    if args.years:
        paths = train_yearly(market.panel, train_config, args.years, out, market.store)
        return {'command': 'train', 'checkpoints': {str(p): file_digest(p) for p in paths}}

    checkpoints = {}
    for result in train_ensemble(market.panel, train_config, market.store, config.filter):
        seed = result.checkpoint.meta.seed
        path = save_checkpoint(result.checkpoint, out / f"gmv_seed{seed}.ckpt")
        result.history_frame().to_csv(out / f"train_history_seed{seed}.csv", index=False)
        checkpoints[str(path)] = file_digest(path)
    return {'command': 'train', 'config_hash': train_config.config_hash(), 'checkpoints': checkpoints}


def select_window(market: MarketData, config: RunConfig) -> Tuple[np.ndarray, List[str], pd.Timestamp]:
    """
    data.window_end까지 data.window_days일, 결측 없는 자산 중 시가총액 상위 data.window_assets개

    Returns:
        (윈도우, 자산 ID, 결정일 = 윈도우 다음 거래일)
    """
    data = config.data
    panel = market.panel
    stop = panel.n_days
    if data.window_end is not None:
        stop = int(panel.dates.searchsorted(pd.Timestamp(data.window_end), side='right'))
    start = stop - data.window_days
    if start < 0:
        raise DataValidationError(f"윈도우 {data.window_days}일을 만들 이력이 부족합니다 ({stop}일)")
    complete = panel.complete_assets(start, stop)
    if complete.size == 0:
        raise DataValidationError("윈도우 전체에 결측 없는 자산이 없습니다")
    candidates = [panel.assets[i] for i in complete]
    last = panel.dates[stop - 1]
    caps = market.store.market_cap.loc[last].reindex(candidates).fillna(0.0)
    chosen = sorted(caps.sort_values(ascending=False, kind='mergesort').index[:data.window_assets].tolist())
    window = panel.window(start, stop, panel.asset_index(chosen))
    decision = panel.dates[stop] if stop < panel.n_days else last + pd.offsets.BDay(1)
    return window, chosen, decision


def run_clean(config: RunConfig, args: Namespace) -> dict:
    """
    윈도우 하나에 추정기 적용 → clean_eigenvalues.csv, clean_weights.csv

    추정기는 --estimator (없으면 clean.tag), NN은 backtest.checkpoints를 씁니다.
    """
    estimator = (args.estimator or config.clean.tag.value).upper()
    if estimator not in STRATEGIES:
        raise ConfigError(f"알 수 없는 추정기 '{estimator}' (가능: {', '.join(STRATEGIES)})")
    market = market_for(config)
    window, assets, decision = select_window(market, config)
    out = output_dir(config)
    ao_tables = None
    if estimator == CleanerTag.AO.value and config.clean.ao_table is None:
        # 결정일 이전 데이터만으로 보정
        table = calibrate_before(market, config, cutoff=decision.date(), n=len(assets), dt_in=window.shape[0])
        table.to_csv(out / 'ao_table.csv')
        ao_tables = {table.key: table}
    strategy_config = config.backtest.model_copy(update={'strategy': estimator, 'dt_in': config.data.window_days})
    strategy = strategy_for_market(strategy_config, market, config.clean, ao_tables)
    weights = strategy.weights(window, assets, decision)

    sample = eigh_array(correlation_matrix(window))[0]
    spectrum = pd.DataFrame({'rank': np.arange(1, len(assets) + 1), 'sample': np.sort(sample)})
    cleaned = cleaned_spectrum(strategy, window, assets, decision)
    if cleaned is not None:
        spectrum['cleaned'] = cleaned

    spectrum.to_csv(out / 'clean_eigenvalues.csv', index=False, float_format='%.12g')
    weights.to_csv(out / 'clean_weights.csv')
    logger.info(f"정제 완료: {estimator}, n={len(assets)}, 결정일 {decision.date()}")
    return {
        'command': 'clean',
        'estimator': estimator,
        'n': len(assets),
        'window_days': int(window.shape[0]),
        'decision_date': str(decision.date()),
        'leverage': weights.leverage,
        'n_eff': weights.n_eff,
    }


def cleaned_spectrum(strategy, window: np.ndarray, assets: List[str], decision) -> np.ndarray:
    """정제 고유값 (오름차순, 앙상블은 순위별 평균, 단변량 전략은 None)"""
    if strategy.name == NN_STRATEGY:
        spectra = []
        for network in strategy.schedule.select(decision).networks():
            inverse = network.forward(window).inv_eigenvalues.data
            spectra.append(np.sort(1.0 / inverse))
        return np.mean(spectra, axis=0)
    if strategy.name in ('ERB', 'MCW'):
        return None
    clean = (strategy.clean or CleanConfig()).model_copy(update={'tag': CleanerTag(strategy.name)})
    reference = None
    if strategy.reference is not None:
        reference = strategy.reference.loc[assets, assets].to_numpy()
    corr = clean_correlation(window, clean, ao_tables=strategy.ao_tables, reference=reference)
    return np.sort(eigh_array(corr)[0])


def run_backtest(config: RunConfig, args: Namespace) -> dict:
    """무마찰 부트스트랩 백테스트 → backtest_<전략>_<제약>.csv (+ _drawdown, 선택 .xlsx)"""
    backtest = config.backtest
    market = market_for(config)
    out = output_dir(config)
    ao_tables = None
    if backtest.strategy == CleanerTag.AO.value and config.clean.ao_table is None:
        table = calibrate_before(market, config)
        table.to_csv(out / 'ao_table.csv')
        ao_tables = {table.key: table}
    strategy = strategy_for_market(backtest, market, config.clean, ao_tables)
    report = run_frictionless(market.panel, backtest, strategy)
    files = write_backtest_report(report, out, xlsx=args.xlsx)
    logger.info(f"백테스트 요약\n{report.table()}")
    return {
        'command': 'backtest',
        'strategy': backtest.strategy,
        'constraint': backtest.constraint.value,
        'aggregate': {k: float(v) for k, v in report.aggregate.items()},
        'files': [str(p) for p in files],
    }


def calibrate_before(market: MarketData, config: RunConfig, cutoff=None, n: int = None, dt_in: int = None):
    """
    cutoff(기본 backtest.span_start) 이전 구간으로 AO 테이블 보정

    n, dt_in을 생략하면 backtest 섹션 값을 씁니다.
    """
    backtest = config.backtest
    cutoff = cutoff if cutoff is not None else backtest.span_start
    if cutoff is None:
        raise ConfigError("AO 전략에는 clean.ao_table 또는 backtest.span_start가 필요합니다",
                          details={'key': 'backtest.span_start'})
    stop = int(market.panel.dates.searchsorted(pd.Timestamp(cutoff), side='left'))
    return calibrate_ao(
        market.panel, n or backtest.n, dt_in or backtest.dt_in, backtest.dt_out,
        samples=config.clean.ao_samples, seed=backtest.seed, span=(0, stop),
        validation_start=cutoff,
    )


def run_simulate(config: RunConfig, args: Namespace) -> dict:
    """일간 계좌 시뮬레이션 → simulation_*.csv (선택 .xlsx)"""
    sim = config.sim
    market = market_for(config)
    strategy = None if sim.strategy == CASH_STRATEGY else strategy_for_market(sim, market, config.clean)
    result = run_simulation(sim, market.store, strategy, config.fees, filter_config=config.filter)
    files = write_simulation_report(result, output_dir(config), xlsx=args.xlsx)
    return {
        'command': 'simulate',
        'strategy': sim.strategy,
        'final_nlv': float(result.nlv.iloc[-1]),
        'costs': {k: from_micro(v) for k, v in result.costs().items()},
        'files': [str(p) for p in files],
    }


def run_gradcheck(config: RunConfig, args: Namespace) -> dict:
    """
    합성 표본 하나로 전체 손실의 중앙 차분 검사

    Raises:
        NumericalError: 최대 상대 오차가 허용치 이상
    """
    check = config.gradcheck
    panel, _ = generate_synthetic(SyntheticMarketSpec(
        n_assets=check.n, n_days=check.dt_in + check.dt_out, seed=check.seed,
    ))
    window, oos = panel.returns[:check.dt_in], panel.returns[check.dt_in:]
    network = GmvNetwork(check.dt_in, width=check.width, seed=check.seed)
    report = grad_check(
        lambda: network.loss(window, oos), network.params, h=check.h,
        max_entries=check.max_entries, rng=make_rng(check.seed, STREAM_GRADCHECK),
    )
    frame = pd.DataFrame({
        'parameter': list(report.per_param),
        'max_relative_error': list(report.per_param.values()),
        'checked': [report.checked[name] for name in report.per_param],
    })
    frame.to_csv(output_dir(config) / 'gradcheck.csv', index=False, float_format='%.6e')
    if report.max_error >= check.tolerance:
        raise NumericalError(
            f"그래디언트 검사 실패: 최대 상대 오차 {report.max_error:.3e} ≥ {check.tolerance:g}",
            details=report.to_dict(),
        )
    return {'command': 'gradcheck', 'max_error': report.max_error, 'tolerance': check.tolerance}


def draw_spectra(market: MarketData, n: int, dt_in: int, samples: int, seed: int) -> List[Tuple[np.ndarray, float]]:
    """무작위 윈도우·자산의 표본 상관 고유값"""
    panel = market.panel
    if panel.n_days < dt_in:
        raise DataValidationError(f"패널 {panel.n_days}일이 윈도우 {dt_in}일보다 짧습니다")
    rng = make_rng(seed, STREAM_DIAGNOSE)
    spectra = []
    for _ in range(samples):
        for _attempt in range(MAX_WINDOW_ATTEMPTS):
            t0 = int(rng.integers(0, panel.n_days - dt_in + 1))
            complete = panel.complete_assets(t0, t0 + dt_in)
            if complete.size >= n:
                break
        else:
            continue
        columns = np.sort(rng.choice(complete, size=n, replace=False))
        values = eigh_array(correlation_matrix(panel.window(t0, t0 + dt_in, columns)))[0]
        spectra.append((values, n / dt_in))
    if len(spectra) < 2:
        raise DataValidationError(f"결측 없는 자산이 {n}개 이상인 윈도우를 충분히 찾지 못했습니다")
    return spectra


def run_diagnose(config: RunConfig, args: Namespace) -> dict:
    """
    해석 진단 → spectrum_stability.csv (+ 체크포인트가 있으면 lag_profile.csv, vol_transfer.csv)
    """
    diag = config.diagnose
    networks = [load_checkpoint(p).to_network() for p in diag.checkpoints]
    dt_in = {net.dt_in for net in networks} or {diag.dt_in}
    if len(dt_in) != 1:
        raise ConfigError(f"체크포인트의 Δt_in이 서로 다릅니다: {sorted(dt_in)}")
    dt_in = dt_in.pop()
    market = market_for(config)
    out = output_dir(config)

    spectra = draw_spectra(market, diag.n, dt_in, diag.samples, diag.seed)
    benchmarks = {tag.value.lower(): spectrum_map(tag, config.clean) for tag in diag.benchmarks}
    stability = spectrum_stability_report([net.cleaner for net in networks], spectra, benchmarks)
    stability.to_csv(out / 'spectrum_stability.csv', index=False, float_format='%.10g')
    summary = {'command': 'diagnose', 'samples': len(spectra), 'dt_in': dt_in,
               'methods': sorted(stability['method'].unique().tolist())}
    if not networks:
        logger.warning("체크포인트가 없어 지연 프로필과 변동성 전달 곡선은 생략합니다")
        return summary

    profiles = []
    for k, net in enumerate(networks):
        lag = net.lag.diagnostics()
        profiles.append(pd.DataFrame({'model': k, 'lag': lag['lag'], 'alpha': lag['alpha'], 'beta': lag['beta']}))
    pd.concat(profiles, ignore_index=True).to_csv(out / 'lag_profile.csv', index=False, float_format='%.10g')
    summary['half_mass_lag'] = [int(net.lag.diagnostics()['half_mass_lag']) for net in networks]

    grid = np.linspace(diag.grid_min, diag.grid_max, diag.grid_points)
    transfer = pd.DataFrame({'sigma': grid})
    for k, net in enumerate(networks):
        transfer[f'model_{k}'] = net.vol.transfer_curve(grid)
    transfer.to_csv(out / 'vol_transfer.csv', index=False, float_format='%.10g')
    return summary


COMMANDS: Dict[str, Callable[[RunConfig, Namespace], dict]] = {
    'synth': run_synth,
    'ingest': run_ingest,
    'train': run_train,
    'clean': run_clean,
    'backtest': run_backtest,
    'simulate': run_simulate,
    'gradcheck': run_gradcheck,
    'diagnose': run_diagnose,
}
