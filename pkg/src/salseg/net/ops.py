"""Minimal reverse-mode differentiation over NCHW float64 arrays.

Only the three operations the networks need are provided: convolution,
ReLU and channel concatenation.  The convolution kernel comes from the
compiled extension when it is importable and from numpy otherwise; set
``SALSEG_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from ..masks import DomainError
from . import _conv_py

BACKEND = "python"
if not os.environ.get("SALSEG_PURE_PYTHON"):
    try:
        from . import _conv_ext as _kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        _kernels = _conv_py
else:
    _kernels = _conv_py

KERNELS = {"python": _conv_py}
if BACKEND == "cython":
    KERNELS["cython"] = _kernels


def use_backend(name: str) -> None:
    """Switch the active convolution kernel at runtime."""
    global BACKEND, _kernels
    if name not in KERNELS:
        raise DomainError(f"backend {name!r} unavailable; have {sorted(KERNELS)}")
    BACKEND, _kernels = name, KERNELS[name]


class ShapeError(DomainError):
    """Shape mismatch inside the network; ``layer`` names the culprit."""

    def __init__(self, layer: str, message: str):
        super().__init__(f"{layer}: {message}")
        self.layer = layer


def conv2d_forward(x, w, b, stride=1, dilation=1, pad=0):
    return _kernels.conv2d_forward(x, w, b, stride, dilation, pad)


def conv2d_backward(dout, x, w, stride=1, dilation=1, pad=0):
    return _kernels.conv2d_backward(dout, x, w, stride, dilation, pad)


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "name")

    def __init__(self, value, parents=(), backward_fn=None, name=""):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    def accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g


def conv(x: Node, w: Node, b: Node, stride=1, dilation=1, pad=0, name="conv") -> Node:
    if x.value.ndim != 4:
        raise ShapeError(name, f"expected a 4-D input, got shape {x.value.shape}")
    if x.value.shape[1] != w.value.shape[1]:
        raise ShapeError(name, f"input has {x.value.shape[1]} channels, weights expect {w.value.shape[1]}")
    if b.value.shape != (w.value.shape[0],):
        raise ShapeError(name, f"bias shape {b.value.shape} does not match {w.value.shape[0]} filters")
    out = Node(conv2d_forward(x.value, w.value, b.value, stride, dilation, pad), (x, w, b), name=name)

    def backward():
        dx, dw, db = conv2d_backward(out.grad, x.value, w.value, stride, dilation, pad)
        x.accumulate(dx)
        w.accumulate(dw)
        b.accumulate(db)

    out.backward_fn = backward
    return out


def relu(x: Node, name="relu") -> Node:
    out = Node(np.maximum(x.value, 0.0), (x,), name=name)

    def backward():
        x.accumulate(out.grad * (x.value > 0))

    out.backward_fn = backward
    return out


def concat(xs: list[Node], name="concat") -> Node:
    shapes = [x.value.shape for x in xs]
    if len({(s[0],) + s[2:] for s in shapes}) != 1:
        raise ShapeError(name, f"cannot concatenate shapes {shapes}")
    out = Node(np.concatenate([x.value for x in xs], axis=1), tuple(xs), name=name)
    splits = np.cumsum([s[1] for s in shapes])[:-1]

    def backward():
        for x, g in zip(xs, np.split(out.grad, splits, axis=1)):
            x.accumulate(g)

    out.backward_fn = backward
    return out


def backprop(outputs: list[Node], grads: list[np.ndarray]):
    """Seed ``outputs`` with ``grads`` and propagate to every ancestor."""
    order, seen = [], set()

    def visit(n):
        # iterative DFS; graphs are shallow but keep recursion out of it anyway
        stack = [(n, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node.parents)

    for o in outputs:
        visit(o)
    for o, g in zip(outputs, grads):
        o.accumulate(g)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn()
