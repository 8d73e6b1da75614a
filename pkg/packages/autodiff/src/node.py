"""
Reverse-mode differentiation tape

Each Node holds a value, a gradient accumulator and the vector-Jacobian
product (VJP) that maps its upstream cotangent to cotangents of its parents.
``backward`` sweeps the graph in reverse topological order; the order is a
deterministic function of graph construction, so repeated sweeps produce
bit-identical gradients.

A graph is single-threaded. Independent graphs (one per image pair) may be
built and swept concurrently.
"""

from typing import Callable, Sequence

import numpy as np

Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class GraphError(ValueError):
    """Invalid graph usage: non-scalar root, shape mismatch, bad operands."""


class Node:
    """A value in the differentiation graph.

    Attributes:
        value: Forward value (float64 array)
        grad: Accumulated cotangent after backward(), else None
        parents: Nodes this value was computed from
        vjp: Maps the upstream cotangent to one cotangent per parent
        op: Operation name, for diagnostics
        requires_grad: Whether any trainable leaf is reachable through this node
    """

    __slots__ = ("value", "grad", "parents", "vjp", "op", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        vjp: Vjp | None = None,
        op: str = "leaf",
        requires_grad: bool = False,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.shape})"


def leaf(value: np.ndarray) -> Node:
    """A trainable input."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value: np.ndarray) -> Node:
    """A non-trainable input; never receives a gradient."""
    return Node(np.asarray(value, dtype=np.float64))


def as_node(value: "Node | np.ndarray | float") -> Node:
    return value if isinstance(value, Node) else constant(np.asarray(value))


def topological_order(root: Node) -> list[Node]:
    """Parents-before-children order of every node reachable from root."""
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node) -> list[Node]:
    """Accumulate d(root)/d(node) into ``grad`` of every reachable node.

    Args:
        root: Scalar node (a single element)

    Returns:
        The trainable leaves reached, in discovery order

    Raises:
        GraphError: if root is not a scalar
    """
    if root.value.size != 1:
        raise GraphError(f"backward needs a scalar root, got shape {root.shape}")
    order = topological_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)

    for node in reversed(order):
        if node.grad is None or node.vjp is None or not node.requires_grad:
            continue
        cotangents = node.vjp(node.grad)
        for parent, cotangent in zip(node.parents, cotangents):
            if cotangent is None or not parent.requires_grad:
                continue
            if cotangent.shape != parent.shape:
                raise GraphError(
                    f"{node.op}: cotangent shape {cotangent.shape} for parent {parent.shape}"
                )
            parent.grad = cotangent.copy() if parent.grad is None else parent.grad + cotangent

    return [n for n in order if not n.parents and n.requires_grad]
