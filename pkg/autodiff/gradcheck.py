"""유한 차분 그래디언트 검사"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional
import logging

import numpy as np

from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """파라미터별 최대 상대 오차"""
    max_error: float
    per_param: Dict[str, float] = field(default_factory=dict)
    checked: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {'max_error': self.max_error, 'per_param': self.per_param, 'checked': self.checked}


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)


def grad_check(
    fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    h: float = 1e-6,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    역전파 그래디언트와 중앙 차분 비교

    Args:
        fn: 파라미터를 사용해 스칼라 Tensor를 만드는 함수
        params: 이름 → 학습 파라미터
        h: 차분 간격
        max_entries: 파라미터당 검사할 최대 원소 수 (None이면 전체)
        rng: max_entries 샘플링용 난수 생성기
    """
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = {name: tape.grad(p) for name, p in params.items()}

    report = GradCheckReport(max_error=0.0)
    for name, p in params.items():
        if not p.data.flags['C_CONTIGUOUS']:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = fn().item()
            flat[i] = original - h
            minus = fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(float(grad_flat[i]), numeric))
        report.per_param[name] = worst
        report.checked[name] = int(len(indices))
        report.max_error = max(report.max_error, worst)

    logger.info(f"그래디언트 검사: 최대 상대 오차 {report.max_error:.3e}")
    return report
