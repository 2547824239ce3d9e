#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
#   Copyright 2026 Kaede Hoshikawa
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.

from typing import (
    Callable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)
import contextlib
import contextvars

from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import DTypeLike
import numpy as np

from . import constants
from .exceptions import BackwardError, DimensionError

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "to_half_precision",
    "relu",
    "sigmoid",
    "conv2d",
    "max_pool2x2",
    "global_avg_pool",
    "linear",
    "resize_bilinear",
    "mse_loss",
    "binary_cross_entropy",
    "cross_entropy",
]

_BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
_Operand = Union["Tensor", np.ndarray, float, int]

_GRAD_ENABLED: "contextvars.ContextVar[bool]" = contextvars.ContextVar(
    "prunedistill_grad_enabled", default=True
)

BCE_CLAMP = 1e-7


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable gradient recording for the current context.

    The flag is a context variable, so concurrent forward passes on separate
    threads do not observe each other.
    """
    token = _GRAD_ENABLED.set(False)

    try:
        yield

    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


class Tensor:
    """
    A dense array taking part in reverse-mode automatic differentiation.

    Every operation on tensors that require gradients records its inputs and
    a backward function; :meth:`backward` replays them in reverse
    topological order.
    """

    __slots__ = ("_data", "_requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data: Union[np.ndarray, Sequence[float], float],
        *,
        requires_grad: bool = False,
        dtype: Optional[DTypeLike] = None,
    ) -> None:
        arr = np.array(data, dtype=dtype)

        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)

        self._data = arr
        self._requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

        self._parents: Tuple["Tensor", ...] = ()
        self._backward_fn: Optional[_BackwardFn] = None

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: _BackwardFn,
    ) -> "Tensor":
        out = cls.__new__(cls)
        out._data = data
        out.grad = None

        if is_grad_enabled() and any(p._requires_grad for p in parents):
            out._requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn

        else:
            out._requires_grad = False
            out._parents = ()
            out._backward_fn = None

        return out

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        if value.shape != self._data.shape:
            raise DimensionError(
                f"Cannot assign an array of shape {value.shape} "
                f"to a tensor of shape {self._data.shape}."
            )

        self._data = value

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def ndim(self) -> int:
        return int(self._data.ndim)

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> np.dtype:  # type: ignore
        return self._data.dtype

    @property
    def requires_grad(self) -> bool:
        return self._requires_grad

    @requires_grad.setter
    def requires_grad(self, value: bool) -> None:
        if self._parents:
            raise BackwardError(
                "requires_grad can only be changed on leaf tensors."
            )

        self._requires_grad = value

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self._data

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(
                f"Only one-element tensors can be converted to a scalar, "
                f"got shape {self.shape}."
            )

        return float(self._data.reshape(()))

    def detach(self) -> "Tensor":
        """
        Returns a tensor sharing the data but cut from the gradient tape.
        """
        out = Tensor.__new__(Tensor)
        out._data = self._data
        out._requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward_fn = None

        return out

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate_grad(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)

        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]

        while stack:
            node, expanded = stack.pop()

            if expanded:
                order.append(node)
                continue

            if id(node) in visited:
                continue

            visited.add(id(node))
            stack.append((node, True))

            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        order.reverse()

        return order

    def backward(self) -> None:
        """
        Backpropagate from this scalar tensor.

        Gradients are accumulated into ``.grad`` of every tensor reachable
        from here that requires gradients; call :meth:`zero_grad` between
        steps to reset them.
        """
        if self.size != 1:
            raise BackwardError(
                f"backward() needs a scalar loss, got shape {self.shape}."
            )

        if not self._requires_grad:
            raise BackwardError(
                "The loss is not attached to any tensor requiring gradients."
            )

        grads = {id(self): np.ones(self.shape, dtype=np.float64)}

        for node in self._topological_order():
            grad = grads.pop(id(node), None)

            if grad is None:
                continue

            node._accumulate_grad(grad)

            if node._backward_fn is None:
                continue

            for parent, parent_grad in zip(
                node._parents, node._backward_fn(grad)
            ):
                if parent_grad is None or not parent._requires_grad:
                    continue

                key = id(parent)

                if key in grads:
                    grads[key] = grads[key] + parent_grad

                else:
                    grads[key] = parent_grad

    def reshape(self, *shape: int) -> "Tensor":
        orig_shape = self.shape

        return Tensor._from_op(
            self._data.reshape(shape),
            (self,),
            lambda g: (g.reshape(orig_shape),),
        )

    def sum(self) -> "Tensor":  # noqa: A003
        shape = self.shape

        return Tensor._from_op(
            np.asarray(self._data.sum(dtype=np.float64)),
            (self,),
            lambda g: (np.full(shape, float(g)),),
        )

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)

    def __getitem__(self, index: object) -> "Tensor":
        shape = self.shape

        def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            grad = np.zeros(shape, dtype=np.float64)
            np.add.at(grad, index, g)  # type: ignore

            return (grad,)

        return Tensor._from_op(
            np.array(self._data[index]),  # type: ignore
            (self,),
            backward_fn,
        )

    def __add__(self, other: _Operand) -> "Tensor":
        rhs = _as_tensor(other)
        lhs_shape, rhs_shape = self.shape, rhs.shape

        return Tensor._from_op(
            self._data + rhs._data,
            (self, rhs),
            lambda g: (_unbroadcast(g, lhs_shape), _unbroadcast(g, rhs_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other: _Operand) -> "Tensor":
        rhs = _as_tensor(other)
        lhs_shape, rhs_shape = self.shape, rhs.shape

        return Tensor._from_op(
            self._data - rhs._data,
            (self, rhs),
            lambda g: (
                _unbroadcast(g, lhs_shape),
                _unbroadcast(-g, rhs_shape),
            ),
        )

    def __rsub__(self, other: _Operand) -> "Tensor":
        return _as_tensor(other) - self

    def __mul__(self, other: _Operand) -> "Tensor":
        rhs = _as_tensor(other)
        lhs_data, rhs_data = self._data, rhs._data

        return Tensor._from_op(
            lhs_data * rhs_data,
            (self, rhs),
            lambda g: (
                _unbroadcast(g * rhs_data, lhs_data.shape),
                _unbroadcast(g * lhs_data, rhs_data.shape),
            ),
        )

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self._data, (self,), lambda g: (-g,))

    def __truediv__(self, other: float) -> "Tensor":
        return self * (1.0 / float(other))

    def __repr__(self) -> str:  # pragma: no cover
        parts = [
            ("shape", repr(self.shape)),
            ("dtype", str(self.dtype)),
            ("requires_grad", repr(self._requires_grad)),
        ]

        args_repr = ", ".join([f"{k}={v}" for k, v in parts])

        return f"{self.__class__.__name__}({args_repr})"

    def __str__(self) -> str:  # pragma: no cover
        return repr(self)


def _as_tensor(value: _Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value

    return Tensor(np.asarray(value, dtype=np.float64))


def _expect_ndim(x: Tensor, ndim: int, what: str) -> None:
    if x.ndim != ndim:
        raise DimensionError(
            f"{what} expects a {ndim}-dimensional input, got shape {x.shape}."
        )


def to_half_precision(x: Tensor) -> Tensor:
    """
    Round every element to the nearest binary16 value (ties to even),
    saturating at +/-65504, and store it back in working precision.

    Gradients pass straight through.
    """
    limit = constants.HALF_PRECISION_MAX

    data = (
        np.clip(x.data, -limit, limit).astype(np.float16).astype(x.dtype)
    )

    return Tensor._from_op(data, (x,), lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    return Tensor._from_op(
        np.where(mask, x.data, 0.0).astype(x.dtype),
        (x,),
        lambda g: (g * mask,),
    )


def sigmoid(x: Tensor) -> Tensor:
    z = x.data.astype(np.float64)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    2d cross-correlation of ``x`` [B, C, H, W] with ``weight`` [O, C, k, k].
    """
    _expect_ndim(x, 4, "conv2d")
    _expect_ndim(weight, 4, "conv2d weight")

    out_channels, in_channels, kh, kw = weight.shape

    if x.shape[1] != in_channels:
        raise DimensionError(
            f"conv2d weight expects {in_channels} input channels, "
            f"got {x.shape[1]}."
        )

    if bias is not None and bias.shape != (out_channels,):
        raise DimensionError(
            f"conv2d bias must have shape ({out_channels},), "
            f"got {bias.shape}."
        )

    p, s = padding, stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))

    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} is larger than the padded input "
            f"{xp.shape[2]}x{xp.shape[3]}."
        )

    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    out_h, out_w = windows.shape[2], windows.shape[3]

    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    if bias is not None:
        out = out + bias.data[None, :, None, None]

    w = weight.data

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))

        grad_xp = np.zeros(xp.shape, dtype=np.float64)

        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w[:, :, i, j], axes=([1], [0]))
                grad_xp[
                    :,
                    :,
                    i : i + s * (out_h - 1) + 1 : s,
                    j : j + s * (out_w - 1) + 1 : s,
                ] += contrib.transpose(0, 3, 1, 2)

        grad_x = grad_xp[
            :, :, p : xp.shape[2] - p, p : xp.shape[3] - p
        ].copy()

        grads: List[Optional[np.ndarray]] = [grad_x, grad_w]

        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))

        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)

    return Tensor._from_op(out, parents, backward_fn)


def max_pool2x2(x: Tensor) -> Tensor:
    _expect_ndim(x, 4, "max_pool2x2")

    b, c, h, w = x.shape

    if h % 2 or w % 2:
        raise DimensionError(
            f"max_pool2x2 needs even spatial sizes, got {h}x{w}."
        )

    h2, w2 = h // 2, w // 2
    cells = (
        x.data.reshape(b, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2, w2, 4)
    )
    # Ties resolve to the first cell in row-major order.
    winner = cells.argmax(axis=-1)[..., None]
    out = np.take_along_axis(cells, winner, axis=-1)[..., 0]

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad_cells = np.zeros(cells.shape, dtype=np.float64)
        np.put_along_axis(grad_cells, winner, g[..., None], axis=-1)

        return (
            grad_cells.reshape(b, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h, w),
        )

    return Tensor._from_op(out, (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    _expect_ndim(x, 4, "global_avg_pool")

    b, c, h, w = x.shape

    return Tensor._from_op(
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape),),
    )


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    ``x`` [B, in] times ``weight`` [out, in] transposed, plus ``bias``.
    """
    _expect_ndim(x, 2, "linear")
    _expect_ndim(weight, 2, "linear weight")

    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"linear weight expects {weight.shape[1]} input features, "
            f"got {x.shape[1]}."
        )

    x_data, w_data = x.data, weight.data
    out = x_data @ w_data.T

    if bias is not None:
        out = out + bias.data

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        grads: List[Optional[np.ndarray]] = [g @ w_data, g.T @ x_data]

        if bias is not None:
            grads.append(g.sum(axis=0))

        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)

    return Tensor._from_op(out, parents, backward_fn)


def _interpolation_matrix(out_size: int, in_size: int) -> np.ndarray:
    # Half-pixel centres, clamped at the borders.
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (
        in_size / out_size
    ) - 0.5
    src = np.clip(src, 0.0, in_size - 1)

    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo

    rows = np.arange(out_size)
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)

    return matrix


def resize_bilinear(x: Tensor, size: Tuple[int, int]) -> Tensor:
    """
    Bilinear resize of ``x`` [B, C, H, W] to ``size`` (align_corners=False).

    Returns ``x`` itself when the size already matches.
    """
    _expect_ndim(x, 4, "resize_bilinear")

    out_h, out_w = size
    in_h, in_w = x.shape[2], x.shape[3]

    if min(out_h, out_w, in_h, in_w) < 1:
        raise DimensionError(
            f"Cannot resize {in_h}x{in_w} to {out_h}x{out_w}."
        )

    if (out_h, out_w) == (in_h, in_w):
        return x

    rows = _interpolation_matrix(out_h, in_h)
    cols = _interpolation_matrix(out_w, in_w)

    return Tensor._from_op(
        rows @ x.data @ cols.T,
        (x,),
        lambda g: (rows.T @ g @ cols,),
    )


def mse_loss(prediction: Tensor, target: _Operand) -> Tensor:
    """
    Mean-reduced squared error over all elements.
    """
    rhs = _as_tensor(target)

    if prediction.shape != rhs.shape:
        raise DimensionError(
            f"mse_loss got mismatched shapes {prediction.shape} "
            f"and {rhs.shape}."
        )

    diff = prediction.data.astype(np.float64) - rhs.data
    scale = 2.0 / diff.size

    return Tensor._from_op(
        np.asarray(np.mean(diff * diff)),
        (prediction, rhs),
        lambda g: (g * scale * diff, -g * scale * diff),
    )


def binary_cross_entropy(
    probabilities: Tensor, target: np.ndarray, eps: float = BCE_CLAMP
) -> Tensor:
    """
    Mean binary cross-entropy on probabilities clamped to [eps, 1 - eps].
    """
    if probabilities.shape != target.shape:
        raise DimensionError(
            f"binary_cross_entropy got mismatched shapes "
            f"{probabilities.shape} and {target.shape}."
        )

    p = probabilities.data.astype(np.float64)
    clamped = np.clip(p, eps, 1.0 - eps)
    inside = (p >= eps) & (p <= 1.0 - eps)
    y = target.astype(np.float64)
    n = p.size

    loss = -np.mean(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped))

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        dp = -(y / clamped - (1.0 - y) / (1.0 - clamped)) / n

        return (g * dp * inside,)

    return Tensor._from_op(np.asarray(loss), (probabilities,), backward_fn)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean softmax cross-entropy of ``logits`` [B, K] against integer labels.
    """
    _expect_ndim(logits, 2, "cross_entropy")

    batch = logits.shape[0]

    if labels.shape != (batch,):
        raise DimensionError(
            f"cross_entropy needs {batch} labels, got shape {labels.shape}."
        )

    z = logits.data.astype(np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)

    loss = np.mean(log_norm - shifted[rows, labels])

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.exp(shifted - log_norm[:, None])
        grad[rows, labels] -= 1.0

        return (g * grad / batch,)

    return Tensor._from_op(np.asarray(loss), (logits,), backward_fn)
