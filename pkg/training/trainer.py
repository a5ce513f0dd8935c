"""
종단간 학습 루프

표본마다 별도 Tape로 손실과 그래디언트를 구하고, 고정된 순서로 합산해
배치 평균을 낸 뒤 노름 클리핑 + Adam 한 스텝을 적용합니다.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from autodiff import AdamState, Tape, adam_step
from config.exceptions import GmvError, NumericalError
from config.seeds import STREAM_TRAIN, STREAM_VALIDATION, make_rng
from network.model import GmvNetwork
from panel.models import FilterConfig, PanelStore, ReturnPanel
from .sampler import SampleDrawer
from .schemas import Checkpoint, EpochRecord, TrainConfig, TrainResult, TrainSample

logger = logging.getLogger(__name__)

SampleGradient = Tuple[float, Optional[Dict[str, np.ndarray]]]


def sample_gradient(network: GmvNetwork, sample: TrainSample) -> SampleGradient:
    """
    표본 하나의 손실과 파라미터 그래디언트

    Returns:
        (손실, 그래디언트) - 손실이 비유한이거나 수치 오류면 그래디언트 None
    """
    try:
        with Tape() as tape:
            loss = network.loss(sample.window, sample.oos)
            value = loss.item()
            if not np.isfinite(value):
                return value, None
            tape.backward(loss)
        grads = {name: tape.grad(p) for name, p in network.params.items()}
    except NumericalError as e:
        logger.warning(f"표본 건너뜀 (t={sample.t}, n={sample.n}): {e.message}")
        return float('nan'), None
    return value, grads


def batch_gradients(network: GmvNetwork, samples: Sequence[TrainSample], threads: int = 1) -> List[SampleGradient]:
    """배치 표본 평가 (결과 순서는 입력 순서로 고정)"""
    if threads <= 1:
        return [sample_gradient(network, s) for s in samples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: sample_gradient(network, s), samples))


def reduce_batch(results: Sequence[SampleGradient]) -> Tuple[float, Optional[Dict[str, np.ndarray]], int]:
    """유한 손실 표본만 평균 (합산 순서 고정)"""
    total_loss = 0.0
    total: Optional[Dict[str, np.ndarray]] = None
    used = 0
    for loss, grads in results:
        if grads is None:
            continue
        used += 1
        total_loss += loss
        if total is None:
            total = {k: g.copy() for k, g in grads.items()}
        else:
            for k, g in grads.items():
                total[k] += g
    if used == 0:
        return float('nan'), None, len(results)
    return total_loss / used, {k: g / used for k, g in total.items()}, len(results) - used


def evaluate_loss(network: GmvNetwork, samples: Sequence[TrainSample]) -> float:
    """Tape 없이 평균 손실"""
    losses = []
    for sample in samples:
        try:
            value = network.loss(sample.window, sample.oos).item()
        except NumericalError:
            continue
        if np.isfinite(value):
            losses.append(value)
    return float(np.mean(losses)) if losses else float('nan')


def train(
    panel: ReturnPanel,
    config: Optional[TrainConfig] = None,
    store: Optional[PanelStore] = None,
    filter_config: Optional[FilterConfig] = None,
    seed: Optional[int] = None,
    progress: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """
    GMV 네트워크 학습

    Args:
        panel: 수익률 패널
        config: 학습 설정
        store: 원천 레코드 (유니버스 필터 사용 시)
        filter_config: 유니버스 필터 설정
        seed: 설정 시드 대신 쓸 시드 (앙상블 독립 실행)
        progress: 에폭 종료 콜백

    Returns:
        TrainResult (체크포인트 + 에폭별 손실)
    """
    config = config or TrainConfig()
    seed = config.seed if seed is None else seed
    drawer = SampleDrawer(panel, config, store, filter_config)
    network = GmvNetwork(config.dt_in, width=config.width, seed=seed)
    validation = drawer.validation_set(make_rng(seed, STREAM_VALIDATION))
    rng = make_rng(seed, STREAM_TRAIN)
    state = AdamState()
    params = network.arrays()
    calibration_end = panel.dates[drawer.stop - 1].date()

    logger.info(
        f"학습 시작: 파라미터 {network.n_params}개, Δt_in={config.dt_in}, n∈[{config.n_min}, {config.n_max}], "
        f"{config.epochs}에폭 × {config.steps_per_epoch}배치 × {config.batch_size}표본, 보정 종료 {calibration_end}"
    )

    history: List[EpochRecord] = []
    batch_index = 0
    for epoch in range(1, config.epochs + 1):
        epoch_losses = []
        skipped = 0
        lr = config.learning_rate_at(batch_index)
        for _ in range(config.steps_per_epoch):
            samples = [drawer.draw_training(rng) for _ in range(config.batch_size)]
            loss, grads, dropped = reduce_batch(batch_gradients(network, samples, config.threads))
            skipped += dropped
            lr = config.learning_rate_at(batch_index)
            batch_index += 1
            if grads is None:
                logger.warning(f"에폭 {epoch}: 배치 전체가 비유한 손실이라 건너뜀")
                continue
            if adam_step(params, grads, state, lr, clip_norm=config.clip_norm):
                epoch_losses.append(loss)

        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(epoch_losses)) if epoch_losses else float('nan'),
            validation_loss=evaluate_loss(network, validation),
            skipped=skipped,
            learning_rate=lr,
        )
        history.append(record)
        logger.info(
            f"에폭 {epoch}/{config.epochs}: 학습 손실 {record.train_loss:.6f}, "
            f"검증 손실 {record.validation_loss:.6f}, 건너뛴 표본 {skipped}개"
        )
        if progress is not None:
            progress(record)

    checkpoint = Checkpoint.from_network(
        network,
        config_hash=config.config_hash(),
        calibration_end=calibration_end,
        seed=seed,
        epoch=config.epochs,
    )
    return TrainResult(checkpoint=checkpoint, history=history)


def train_ensemble(panel: ReturnPanel, config: TrainConfig, store: Optional[PanelStore] = None,
                   filter_config: Optional[FilterConfig] = None) -> List[TrainResult]:
    """시드 목록마다 독립 학습"""
    seeds = config.ensemble_seeds or [config.seed]
    results = []
    for seed in seeds:
        try:
            results.append(train(panel, config, store, filter_config, seed=seed))
        except GmvError as e:
            logger.error(f"시드 {seed} 학습 실패: {e.message}")
            raise
    return results
