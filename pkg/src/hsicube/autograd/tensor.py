"""Reverse-mode differentiation core.

A Tensor wraps a numpy array plus an optional place on the tape: ops record
their parents and a closure that routes the output gradient onto each parent.
``backward()`` on a scalar loss walks the recorded graph once in reverse
topological order. Per-walk gradients flow through a scratch table; only leaf
tensors that require gradients (parameters, probe inputs) keep a persistent
``grad`` array, which accumulates additively across backward calls until
cleared with ``zero_grad``.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate ``grad`` on every reachable gradient-requiring leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _toposort(self)
        flow = {id(self): np.ones_like(self.data)}
        for node in order:
            g = flow.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                node._backward(g, flow)
            elif node.requires_grad:
                node.accumulate_grad(g)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable leaf tensor with a checkpoint name."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name


def add_to_flow(flow: dict, t: Tensor, g):
    """Route gradient ``g`` to tensor ``t`` inside one backward walk."""
    if not t.requires_grad:
        return
    key = id(t)
    prev = flow.get(key)
    # Out-of-place add: closures may hand the same array to several parents.
    flow[key] = g if prev is None else prev + g


def _toposort(root: Tensor):
    """Topological order with root first, iterative to spare the stack."""
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in visited and p.requires_grad:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    order.reverse()
    return order


def make_op(data, parents, backward):
    """Build an op output that tracks gradients iff any parent does."""
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward)
