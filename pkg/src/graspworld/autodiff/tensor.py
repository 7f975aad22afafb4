"""Reverse-mode automatic differentiation on float64 numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient buffer.  Operations
(see :mod:`graspworld.autodiff.ops`) run eagerly; when a ``Tape`` is active
and an input requires gradients, the op appends a node with a backward rule.
``Tape.backward`` then walks the node list once, in reverse creation order,
accumulating gradients into every reachable tensor's ``grad``.

Graph construction and backward are single-threaded by contract.  Parameter
snapshots (plain ndarray copies) are immutable values safe to hand to other
threads.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op's contract."""


class Tensor:
    """An n-dimensional float64 array participating in autodiff.

    ``data`` is always a C-contiguous float64 ndarray; ``grad`` is either
    None or an ndarray of identical shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same data that never records onto a tape."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad, name=self.name)
        return t

    def assert_finite(self) -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"tensor {self.name or ''} contains non-finite values")
        return self

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.data.shape}"
        if self.name:
            head += f", name={self.name!r}"
        return head + (", grad)" if self.requires_grad else ")")


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad``, allocating the buffer on first touch."""
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad += g


class Tape:
    """Ordered record of operations for one forward pass.

    Nodes are appended in execution order, so the list is topologically
    sorted by construction; backward visits each node exactly once in
    reverse.  Tapes do not nest: entering a second tape while one is active
    is a usage error.
    """

    _active: Optional["Tape"] = None

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._consumed = False

    @classmethod
    def active(cls) -> Optional["Tape"]:
        return cls._active

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        Tape._active = None

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, output: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        output.requires_grad = True
        self._nodes.append((output, backward))

    def backward(self, root: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """Accumulate d(root)/d(x) into ``x.grad`` for every recorded input.

        ``root`` must be scalar unless an explicit ``seed`` gradient of the
        same shape is supplied.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        self._consumed = True
        if seed is None:
            if root.size != 1:
                raise ShapeError(
                    f"backward root must be scalar, got shape {root.shape}; pass a seed gradient"
                )
            seed = np.ones_like(root.data)
        accumulate_grad(root, np.asarray(seed, dtype=DTYPE))
        for out, rule in reversed(self._nodes):
            if out.grad is not None:
                rule(out.grad)


def as_tensor(x, name: Optional[str] = None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, name=name)


def parameters_like(arrays: Sequence[np.ndarray]) -> list[Tensor]:
    return [Tensor(a, requires_grad=True) for a in arrays]
