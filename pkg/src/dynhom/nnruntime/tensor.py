"""Reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient buffer and a backward
closure that routes its output gradient to its parents.  Graphs are built
eagerly by the ops and torn down when the tensors go out of scope after a
training step.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate_grad(self, g) -> None:
        if self.grad is None:
            # copy: g may be a view or a buffer shared with another parent
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def backward(self, seed=None) -> None:
        """Backpropagate from this tensor through every reachable parent.

        Without an explicit seed the tensor must be scalar-sized (loss-style).
        """
        if seed is None:
            if self.data.size != 1:
                raise ShapeMismatch(
                    f"backward() without seed needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


class Parameter(Tensor):
    """Leaf tensor with Adam state: first/second moment buffers and a step
    count, created lazily on the first optimizer step."""

    __slots__ = ("m", "v", "step", "name")

    def __init__(self, data, name: str = ""):
        super().__init__(data)
        self.m = None
        self.v = None
        self.step = 0
        self.name = name

    def zero_grad(self) -> None:
        self.grad = None

    def ensure_state(self) -> None:
        if self.m is None:
            self.m = np.zeros_like(self.data)
            self.v = np.zeros_like(self.data)
