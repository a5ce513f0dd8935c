"""Adam 옵티마이저"""
from dataclasses import dataclass, field
from typing import Dict, Optional
import logging

import numpy as np

from config.exceptions import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """1·2차 모멘트와 스텝 수"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    """전체 그래디언트 노름을 max_norm 이하로 축소"""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    clip_norm: Optional[float] = None,
) -> bool:
    """
    Adam 한 스텝 (params 제자리 갱신)

    Returns:
        적용 여부 (비유한 그래디언트면 False, 상태 불변)
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"알 수 없는 파라미터: {name}")
        if g.shape != params[name].shape:
            raise ShapeError(f"그래디언트 shape 불일치 {name}: {g.shape} vs {params[name].shape}")
        if not np.all(np.isfinite(g)):
            logger.warning(f"비유한 그래디언트로 스텝 거부: {name}")
            return False

    if clip_norm is not None:
        grads = clip_by_global_norm(grads, clip_norm)

    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        params[name] -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return True
