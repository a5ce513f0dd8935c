"""
양방향 LSTM 고유값 정제기

정렬된 표본 고유값 (λ̂_k, q) 쌍을 작은 것부터/큰 것부터 두 셀로 훑고,
두 은닉 상태를 이어 softplus 헤드로 역고유값을 만든 뒤 합이 n이 되도록
정규화합니다. 정렬 → 처리 → 역정렬 구조라 순열 등변성이 정확히 성립합니다.
"""
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np

from autodiff import Tensor, as_tensor, concat, parameter, sigmoid, softplus, stack, tanh, tsum
from config.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

INPUT_DIM = 2
GATES = 4
FORGET_BIAS = 1.0


def param_count(width: int) -> int:
    """8ω² + 26ω + 1"""
    if width < 1:
        raise ShapeError(f"은닉 폭은 1 이상이어야 합니다: {width}")
    return 8 * width * width + 26 * width + 1


def lstm_cell(x, h, m, w_in, w_rec, bias) -> Tuple[Tensor, Tensor]:
    """
    LSTM 한 스텝 (게이트 순서 i, f, c, o)

    Args:
        x: 입력 (2,)
        h, m: 은닉/셀 상태 (ω,)
        w_in: (4ω, 2), w_rec: (4ω, ω), bias: (4ω,)
    """
    return _step(as_tensor(w_in) @ as_tensor(x), as_tensor(h), as_tensor(m), as_tensor(w_rec), as_tensor(bias))


def _step(x_proj: Tensor, h: Tensor, m: Tensor, w_rec: Tensor, bias: Tensor) -> Tuple[Tensor, Tensor]:
    width = h.shape[0]
    z = x_proj + w_rec @ h + bias
    i = sigmoid(z[0:width])
    f = sigmoid(z[width:2 * width])
    c = tanh(z[2 * width:3 * width])
    o = sigmoid(z[3 * width:4 * width])
    m_next = f * m + i * c
    h_next = o * tanh(m_next)
    return h_next, m_next


class BiLstmCleaner:
    """양방향 LSTM 역고유값 맵"""

    CELLS = ('fwd', 'bwd')

    def __init__(self, width: int = 64, rng: Optional[np.random.Generator] = None,
                 arrays: Optional[Dict[str, np.ndarray]] = None):
        self.width = width
        if arrays is None:
            arrays = self.init_arrays(width, rng or np.random.default_rng(0))
        self.params: Dict[str, Tensor] = {name: parameter(arrays[name], name=name) for name in self.param_names(width)}
        self._check_shapes()

    @staticmethod
    def param_names(width: int = 0) -> List[str]:
        names = []
        for cell in BiLstmCleaner.CELLS:
            names += [f'lstm.{cell}.w_in', f'lstm.{cell}.w_rec', f'lstm.{cell}.bias']
        return names + ['lstm.head.a', 'lstm.head.b']

    @staticmethod
    def init_arrays(width: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        """균등 ±1/√ω 가중치, forget 게이트 bias +1, 나머지 bias 0"""
        bound = 1.0 / np.sqrt(width)
        arrays = {}
        for cell in BiLstmCleaner.CELLS:
            arrays[f'lstm.{cell}.w_in'] = rng.uniform(-bound, bound, (GATES * width, INPUT_DIM))
            arrays[f'lstm.{cell}.w_rec'] = rng.uniform(-bound, bound, (GATES * width, width))
            bias = np.zeros(GATES * width)
            bias[width:2 * width] = FORGET_BIAS
            arrays[f'lstm.{cell}.bias'] = bias
        arrays['lstm.head.a'] = rng.uniform(-bound, bound, 2 * width)
        arrays['lstm.head.b'] = np.zeros(1)
        return arrays

    def _check_shapes(self) -> None:
        w = self.width
        expected = {'w_in': (GATES * w, INPUT_DIM), 'w_rec': (GATES * w, w), 'bias': (GATES * w,)}
        for cell in self.CELLS:
            for key, shape in expected.items():
                actual = self.params[f'lstm.{cell}.{key}'].shape
                if actual != shape:
                    raise ShapeError(f"lstm.{cell}.{key} shape {actual} ≠ {shape}")
        if self.params['lstm.head.a'].shape != (2 * w,) or self.params['lstm.head.b'].shape != (1,):
            raise ShapeError("헤드 shape 불일치")

    @property
    def n_params(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def _run(self, inputs: Tensor, cell: str, reverse: bool) -> List[Tensor]:
        w_in = self.params[f'lstm.{cell}.w_in']
        w_rec = self.params[f'lstm.{cell}.w_rec']
        bias = self.params[f'lstm.{cell}.bias']
        projected = inputs @ w_in.T
        n = inputs.shape[0]
        h = Tensor(np.zeros(self.width))
        m = Tensor(np.zeros(self.width))
        states: List[Optional[Tensor]] = [None] * n
        order = range(n - 1, -1, -1) if reverse else range(n)
        for k in order:
            h, m = _step(projected[k], h, m, w_rec, bias)
            states[k] = h
        return states

    def __call__(self, eigenvalues, q: float) -> Tensor:
        """
        역고유값 λ_NN⁻¹ (입력 순서, 합 = n)

        Args:
            eigenvalues: 표본 고유값 (n,)
            q: 종횡비 n/Δt
        """
        lam = as_tensor(eigenvalues)
        n = lam.shape[0] if lam.ndim == 1 else 0
        if n < 2:
            raise ShapeError(f"고유값은 2개 이상이어야 합니다: shape={lam.shape}")
        if not np.all(np.isfinite(lam.data)) or not np.isfinite(q) or q <= 0:
            raise NumericalError("고유값 또는 q가 유한하지 않거나 q ≤ 0 입니다")

        order = np.argsort(lam.data, kind='stable')
        inverse = np.argsort(order, kind='stable')
        ordered = lam[order]
        inputs = concat([ordered.reshape(n, 1), Tensor(np.full((n, 1), float(q)))], axis=1)

        forward = stack(self._run(inputs, 'fwd', reverse=False), axis=0)
        backward = stack(self._run(inputs, 'bwd', reverse=True), axis=0)
        hidden = concat([forward, backward], axis=1)
        raw = softplus(hidden @ self.params['lstm.head.a'] + self.params['lstm.head.b'])
        normalized = raw / tsum(raw) * float(n)
        return normalized[inverse]
