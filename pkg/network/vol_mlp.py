"""
변동성 MLP

자산별 σ̃ 스칼라 하나를 1→64→32→16→1 MLP에 통과시켜 역변동성을 만들고
평균이 1이 되도록 정규화합니다.
"""
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np

from autodiff import Tensor, as_tensor, leaky_relu, parameter, softplus
from config.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

LAYER_SIZES: Tuple[int, ...] = (1, 64, 32, 16, 1)
LEAKY_SLOPE = 0.01


def mlp_param_count(sizes: Tuple[int, ...] = LAYER_SIZES) -> int:
    return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))


class VolatilityMlp:
    """σ̃ → σ_NN⁻¹"""

    def __init__(self, rng: Optional[np.random.Generator] = None, arrays: Optional[Dict[str, np.ndarray]] = None,
                 sizes: Tuple[int, ...] = LAYER_SIZES):
        self.sizes = tuple(sizes)
        if arrays is None:
            arrays = self.init_arrays(rng or np.random.default_rng(0), self.sizes)
        self.params: Dict[str, Tensor] = {
            name: parameter(arrays[name], name=name) for name in self.param_names(self.sizes)
        }
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if self.params[f'mlp.w{k}'].shape != (fan_in, fan_out) or self.params[f'mlp.b{k}'].shape != (fan_out,):
                raise ShapeError(f"MLP {k}번째 층 shape 불일치")

    @staticmethod
    def param_names(sizes: Tuple[int, ...] = LAYER_SIZES) -> List[str]:
        names = []
        for k in range(len(sizes) - 1):
            names += [f'mlp.w{k}', f'mlp.b{k}']
        return names

    @staticmethod
    def init_arrays(rng: np.random.Generator, sizes: Tuple[int, ...] = LAYER_SIZES) -> Dict[str, np.ndarray]:
        """균등 ±1/√fan_in 가중치, bias 0"""
        arrays = {}
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            arrays[f'mlp.w{k}'] = rng.uniform(-bound, bound, (fan_in, fan_out))
            arrays[f'mlp.b{k}'] = np.zeros(fan_out)
        return arrays

    @property
    def n_params(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def raw_output(self, sigma) -> Tensor:
        """정규화 전 출력 (자산별 독립)"""
        s = as_tensor(sigma)
        if s.ndim != 1:
            raise ShapeError(f"σ̃는 1차원 벡터여야 합니다: {s.shape}")
        if np.any(s.data <= 0) or not np.all(np.isfinite(s.data)):
            raise NumericalError("σ̃는 양의 유한값이어야 합니다")
        x = s.reshape(-1, 1)
        depth = len(self.sizes) - 1
        for k in range(depth):
            x = x @ self.params[f'mlp.w{k}'] + self.params[f'mlp.b{k}']
            x = softplus(x) if k == depth - 1 else leaky_relu(x, LEAKY_SLOPE)
        return x.reshape(-1)

    def __call__(self, sigma) -> Tensor:
        """평균 1로 정규화한 σ_NN⁻¹"""
        raw = self.raw_output(sigma)
        return raw / raw.mean()

    def transfer_curve(self, grid: np.ndarray) -> np.ndarray:
        """입력 격자에 대한 정규화 전 출력 (진단용)"""
        return self.raw_output(np.asarray(grid, dtype=float)).data.copy()
