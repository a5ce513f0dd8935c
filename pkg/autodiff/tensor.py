"""
역전파 자동미분 텐서

Tape가 활성화된 동안 생성된 연산 노드를 생성 순서대로 기록하고,
backward()는 역순으로 한 번씩 방문하며 그래디언트를 누적합니다.
그래디언트는 Tape별 딕셔너리에 저장되므로 여러 스레드가 같은
파라미터 텐서를 공유해도 서로 간섭하지 않습니다.
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import threading

import numpy as np

from config.exceptions import NumericalError, ShapeError

ArrayLike = Union['Tensor', np.ndarray, float, int]

MAX_RANK = 3
_local = threading.local()


class Tape:
    """연산 기록 (스레드별 활성 Tape 하나)"""

    def __init__(self):
        self.nodes: List['Tensor'] = []
        self.grads: Dict[int, np.ndarray] = {}
        self._previous: Optional['Tape'] = None

    def __enter__(self) -> 'Tape':
        self._previous = getattr(_local, 'tape', None)
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._previous
        self._previous = None
        return False

    def record(self, node: 'Tensor') -> None:
        self.nodes.append(node)

    def backward(self, loss: 'Tensor', seed: Optional[np.ndarray] = None) -> None:
        """loss에서 역전파 (loss는 보통 스칼라)"""
        if seed is None:
            if loss.data.size != 1:
                raise ShapeError(f"스칼라가 아닌 출력의 역전파에는 seed가 필요합니다: shape={loss.shape}")
            seed = np.ones_like(loss.data)
        self.grads[id(loss)] = np.asarray(seed, dtype=loss.data.dtype)

        for node in reversed(self.nodes):
            g = self.grads.get(id(node))
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = unbroadcast(pg, parent.shape)
                key = id(parent)
                if key in self.grads:
                    self.grads[key] = self.grads[key] + pg
                else:
                    self.grads[key] = pg

    def grad(self, tensor: 'Tensor') -> np.ndarray:
        """텐서의 누적 그래디언트 (없으면 0)"""
        g = self.grads.get(id(tensor))
        return np.zeros_like(tensor.data) if g is None else g


def current_tape() -> Optional[Tape]:
    return getattr(_local, 'tape', None)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """브로드캐스트된 그래디언트를 원래 shape으로 합산"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    if grad.shape != shape:
        raise ShapeError(f"그래디언트 shape {grad.shape}를 {shape}로 되돌릴 수 없습니다")
    return grad


def as_tensor(value: ArrayLike) -> 'Tensor':
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


class Tensor:
    """밀집 텐서 (rank ≤ 3)"""

    __array_priority__ = 100

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence['Tensor'] = (),
        backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        name: Optional[str] = None,
    ):
        array = np.asarray(data)
        if array.dtype.kind != 'f':
            array = array.astype(np.float64)
        if array.ndim > MAX_RANK:
            raise ShapeError(f"rank {array.ndim} 텐서는 지원하지 않습니다")
        self.data = array
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> 'Tensor':
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __neg__(self): return mul(self, -1.0)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """부모 중 하나라도 그래디언트가 필요하고 Tape가 활성화되어 있으면 노드를 기록"""
    tape = current_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    node = Tensor(data, requires_grad=True, parents=parents, backward=backward)
    tape.record(node)
    return node


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shape 불일치 {a.shape} vs {b.shape}")


# ---- 이항 연산 ----

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'add')
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'sub')
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'mul')
    return make_node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'div')
    out = a.data / b.data
    return make_node(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeError(f"matmul: shape 불일치 {a.shape} @ {b.shape}")

    def backward(g):
        ga = gb = None
        if a.ndim == 1 and b.ndim == 1:
            return g * b.data, g * a.data
        if b.ndim == 1:
            ga = np.multiply.outer(g, b.data)
            gb = np.tensordot(a.data, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim))))
            return ga, gb
        if a.ndim == 1:
            ga = b.data @ g
            gb = np.outer(a.data, g)
            return ga, gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return make_node(a.data @ b.data, (a, b), backward)


# ---- 형태 연산 ----

def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return make_node(np.swapaxes(a.data, -1, -2) if a.ndim >= 2 else a.data, (a,),
                     lambda g: (np.swapaxes(g, -1, -2) if g.ndim >= 2 else g,))


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {a.shape} → {shape} 불가")
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, index) -> Tensor:
    """슬라이스/팬시 인덱싱 (중복 인덱스는 역전파에서 합산)"""
    a = as_tensor(a)
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return make_node(np.array(out, copy=True), (a,), backward)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shape 불일치 {[p.shape for p in parts]}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return make_node(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    expanded = [reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]) for p in parts]
    return concat(expanded, axis=axis)


# ---- 축소 연산 ----

def _expand(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return make_node(np.asarray(out), (a,), lambda g: (_expand(g, a.shape, axis, keepdims).copy(),))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# ---- 원소별 함수 ----

def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus_array(x: np.ndarray) -> np.ndarray:
    """log(1 + eˣ) (큰 x에서 오버플로 방지)"""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = softplus_array(a.data)
    slope = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_node(out, (a,), lambda g: (g * slope,))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return make_node(a.data * factor, (a,), lambda g: (g * factor,))


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise NumericalError("음수의 제곱근")
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericalError("0 이하 값의 로그")
    return make_node(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def diag(a: Tensor) -> Tensor:
    """정방 행렬의 대각 성분"""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"diag: 정방 행렬이 아닙니다 {a.shape}")
    return make_node(np.diag(a.data).copy(), (a,), lambda g: (np.diag(g),))


def parameter(data, name: Optional[str] = None) -> Tensor:
    """학습 가능한 리프 텐서"""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)
