"""Reverse-mode tape tensors.

A Tensor wraps a numpy array and, when any input of an op requires
gradients, records its parents plus a backward closure. Calling
``backward`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into the ``grad`` field of every leaf
tensor that requires them. Repeated backward calls accumulate into
``grad`` until ``zero_grad`` is called.

Default precision is float32; gradient verification runs in float64
(see gradcheck). Every op output is checked for NaN/Inf; non-finite
values are an error state, not a value.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


# Module-wide switch; tests flip it to verify rejection behavior.
FINITE_CHECKS = True


def check_finite(data: np.ndarray, op: str) -> None:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        if not isinstance(data, np.ndarray):
            if isinstance(data, np.generic):
                data = np.asarray(data)  # numpy scalar: keep its dtype
            else:
                data = np.asarray(data, dtype=np.float32)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def detach(self) -> "Tensor":
        """Same values, cut from the graph (no gradient flows through)."""
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = "param" if (self.is_leaf and self.requires_grad) else ("node" if not self.is_leaf else "const")
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"

    # Operator sugar; implementations live in ops.py (imported lazily to
    # avoid a circular import).
    def __add__(self, other):
        from . import ops

        return ops.add(self, ops.as_tensor(other, like=self))

    def __radd__(self, other):
        from . import ops

        return ops.add(ops.as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, ops.as_tensor(other, like=self))

    def __rmul__(self, other):
        from . import ops

        return ops.mul(ops.as_tensor(other, like=self), self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, ops.as_tensor(other, like=self))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(ops.as_tensor(other, like=self), self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def node(
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    op: str,
) -> Tensor:
    """Build an op output, recording the graph only when gradients can flow."""
    check_finite(data, op)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's grad field.

    loss must be scalar. Calling twice without zero_grad doubles the
    gradients (accumulation is the documented behavior).
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.data.shape}")

    # Iterative post-order topological sort over the recorded graph.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(topo):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._backward is not None:
            for parent, pg in zip(t._parents, t._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        elif t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g
