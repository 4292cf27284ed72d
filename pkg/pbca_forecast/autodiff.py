"""Reverse-mode differentiation over a small, closed set of tensor operations.

Graphs are built node by node through the methods of :class:`Graph`. Node ids
are handed out in construction order, so operands always carry smaller ids
than the node using them and ascending id order is a valid evaluation order.

All tensors are rank 2 and hold float64 values. Vectors are columns
``[n, 1]``; a scalar is ``[1, 1]``.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from ._compat import StrEnum
from typing import Any

import numpy as np

from .const import FINITE_DIFF_EPSILON, FINITE_DIFF_FLOOR
from .exceptions import ContractError, NumericError, ShapeError

_LOGGER = logging.getLogger(__name__)


class OpKind(StrEnum):
    """Operation kinds understood by the evaluator."""

    CONSTANT = "constant"
    PARAMETER = "parameter"
    MATMUL = "matmul"
    ADD = "add"
    HADAMARD = "hadamard"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX_MASKED = "softmax-masked"
    CONCAT = "concat"
    SLICE = "slice"
    COLUMN_LOOKUP = "column-lookup"
    SCALAR_LOOKUP = "scalar-lookup"
    SUM = "sum"
    MEAN = "mean"
    SQUARE = "square"


_ARITY: dict[OpKind, int | None] = {
    OpKind.CONSTANT: 0,
    OpKind.PARAMETER: 0,
    OpKind.MATMUL: 2,
    OpKind.ADD: 2,
    OpKind.HADAMARD: 2,
    OpKind.TANH: 1,
    OpKind.SIGMOID: 1,
    OpKind.SOFTMAX_MASKED: 1,
    OpKind.CONCAT: None,
    OpKind.SLICE: 1,
    OpKind.COLUMN_LOOKUP: 1,
    OpKind.SCALAR_LOOKUP: 1,
    OpKind.SUM: 1,
    OpKind.MEAN: 1,
    OpKind.SQUARE: 1,
}


@dataclass(frozen=True)
class Tensor:
    """A rank-2 float64 value."""

    dims: tuple[int, int]
    values: np.ndarray

    def __post_init__(self) -> None:
        """Check the value count against the dims."""
        if len(self.dims) != 2 or min(self.dims) < 1:
            raise ShapeError(f"Tensor dims must be two positive integers, got {self.dims}")
        if self.values.size != self.dims[0] * self.dims[1]:
            raise ShapeError(
                f"Tensor dims {self.dims} do not match {self.values.size} values"
            )

    @classmethod
    def of(cls, array: Any) -> "Tensor":
        """Wrap an array-like, promoting vectors to columns."""
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must have rank 2, got rank {arr.ndim}")
        return cls(dims=(arr.shape[0], arr.shape[1]), values=np.ascontiguousarray(arr).ravel())

    @property
    def array(self) -> np.ndarray:
        """Return the values as a 2-D array view."""
        return self.values.reshape(self.dims)

    def item(self) -> float:
        """Return the single value of a scalar tensor."""
        if self.values.size != 1:
            raise ContractError(f"Tensor with dims {self.dims} is not a scalar")
        return float(self.values[0])


@dataclass(eq=False)
class GraphNode:
    """A node of a computation graph."""

    id: int
    op: OpKind
    operands: tuple[int, ...]
    dims: tuple[int, int]
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str | None = None
    value: np.ndarray | None = None

    def __repr__(self) -> str:
        """Return a compact description for error messages."""
        label = f" {self.name!r}" if self.name else ""
        return f"node {self.id} ({self.op}{label}, dims {self.dims})"


@dataclass
class GradientMap:
    """Gradients of a scalar loss for every parameter node of a graph."""

    by_id: dict[int, np.ndarray]
    names: dict[str, int]

    def __getitem__(self, name: str) -> np.ndarray:
        """Return the gradient of the named parameter."""
        return self.by_id[self.names[name]]

    def __contains__(self, name: object) -> bool:
        """Return True if the named parameter is part of the graph."""
        return name in self.names

    def __iter__(self) -> Iterator[str]:
        """Iterate over parameter names in node order."""
        return iter(self.names)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        """Iterate over (name, gradient) pairs in node order."""
        for name, node_id in self.names.items():
            yield name, self.by_id[node_id]


class Graph:
    """A computation graph with construction-time shape inference."""

    def __init__(self) -> None:
        """Initialize an empty graph."""
        self.nodes: list[GraphNode] = []
        self._parameters: dict[str, GraphNode] = {}
        self._ones: dict[tuple[int, int], GraphNode] = {}
        self._zeros: dict[tuple[int, int], GraphNode] = {}

    def __len__(self) -> int:
        """Return the number of nodes."""
        return len(self.nodes)

    @property
    def parameters(self) -> dict[str, GraphNode]:
        """Return the parameter nodes by name."""
        return dict(self._parameters)

    def _add(
        self,
        op: OpKind,
        operands: Sequence[GraphNode],
        dims: tuple[int, int],
        name: str | None = None,
        **attrs: Any,
    ) -> GraphNode:
        arity = _ARITY[op]
        if arity is not None and len(operands) != arity:
            raise ContractError(f"{op} takes {arity} operands, got {len(operands)}")
        for operand in operands:
            if operand.id >= len(self.nodes) or self.nodes[operand.id] is not operand:
                raise ContractError(f"{operand!r} does not belong to this graph")
        node = GraphNode(
            id=len(self.nodes),
            op=op,
            operands=tuple(operand.id for operand in operands),
            dims=dims,
            attrs=attrs,
            name=name,
        )
        self.nodes.append(node)
        return node

    # Leaves

    def constant(self, array: Any) -> GraphNode:
        """Add a constant leaf."""
        tensor = Tensor.of(array)
        node = self._add(OpKind.CONSTANT, (), tensor.dims)
        node.value = tensor.array.copy()
        return node

    def ones(self, rows: int, cols: int) -> GraphNode:
        """Return a shared all-ones constant."""
        key = (rows, cols)
        if key not in self._ones:
            self._ones[key] = self.constant(np.ones(key))
        return self._ones[key]

    def zeros(self, rows: int, cols: int) -> GraphNode:
        """Return a shared all-zeros constant."""
        key = (rows, cols)
        if key not in self._zeros:
            self._zeros[key] = self.constant(np.zeros(key))
        return self._zeros[key]

    def parameter(self, name: str, dims: tuple[int, int]) -> GraphNode:
        """
        Declare a named parameter, or return the existing declaration.

        Args:
            name: Parameter name, the key used in bindings
            dims: Expected dims of the bound value

        Returns:
            The parameter node

        Raises:
            ShapeError: If the name was declared before with other dims

        """
        dims = (int(dims[0]), int(dims[1]))
        existing = self._parameters.get(name)
        if existing is not None:
            if existing.dims != dims:
                raise ShapeError(
                    f"Parameter {name!r} declared with dims {existing.dims} and {dims}"
                )
            return existing
        node = self._add(OpKind.PARAMETER, (), dims, name=name)
        self._parameters[name] = node
        return node

    # Operations

    def matmul(self, a: GraphNode, b: GraphNode, transpose_b: bool = False) -> GraphNode:
        """Add ``a @ b`` (or ``a @ b.T``)."""
        inner = b.dims[1] if transpose_b else b.dims[0]
        if a.dims[1] != inner:
            raise ShapeError(f"matmul of {a!r} and {b!r} (transpose_b={transpose_b})")
        cols = b.dims[0] if transpose_b else b.dims[1]
        return self._add(OpKind.MATMUL, (a, b), (a.dims[0], cols), transpose_b=transpose_b)

    def add(self, a: GraphNode, b: GraphNode) -> GraphNode:
        """Add the element-wise sum of two equally shaped tensors."""
        self._same_dims(OpKind.ADD, a, b)
        return self._add(OpKind.ADD, (a, b), a.dims)

    def hadamard(self, a: GraphNode, b: GraphNode) -> GraphNode:
        """Add the element-wise product of two equally shaped tensors."""
        self._same_dims(OpKind.HADAMARD, a, b)
        return self._add(OpKind.HADAMARD, (a, b), a.dims)

    def tanh(self, a: GraphNode) -> GraphNode:
        """Add an element-wise tanh."""
        return self._add(OpKind.TANH, (a,), a.dims)

    def sigmoid(self, a: GraphNode) -> GraphNode:
        """Add an element-wise logistic sigmoid."""
        return self._add(OpKind.SIGMOID, (a,), a.dims)

    def softmax_masked(
        self, scores: GraphNode, mask: Sequence[bool] | np.ndarray | None = None, literal: bool = False
    ) -> GraphNode:
        """
        Add a softmax over a row of scores.

        Args:
            scores: A ``[1, T]`` row
            mask: ``True`` marks an entry as masked; None masks nothing
            literal: Keep masked entries in the softmax with a literal score
                of zero instead of excluding them

        Returns:
            The ``[1, T]`` weight row

        Raises:
            ShapeError: If scores is not a row or the mask length differs
            ContractError: If every entry is masked in exclusion mode

        """
        if scores.dims[0] != 1:
            raise ShapeError(f"softmax-masked expects a row, got {scores!r}")
        if mask is None:
            mask_arr = np.zeros(scores.dims[1], dtype=bool)
        else:
            mask_arr = np.asarray(mask, dtype=bool).ravel()
        if mask_arr.size != scores.dims[1]:
            raise ShapeError(f"mask of length {mask_arr.size} for {scores!r}")
        if not literal and mask_arr.all():
            raise ContractError(f"softmax-masked over {scores!r} with every entry masked")
        return self._add(
            OpKind.SOFTMAX_MASKED, (scores,), scores.dims, mask=mask_arr, literal=literal
        )

    def concat(self, parts: Sequence[GraphNode], axis: int = 0) -> GraphNode:
        """Add a concatenation along rows (axis 0) or columns (axis 1)."""
        if not parts:
            raise ContractError("concat needs at least one operand")
        if axis not in (0, 1):
            raise ContractError(f"concat axis must be 0 or 1, got {axis}")
        other = 1 - axis
        first = parts[0]
        for part in parts[1:]:
            if part.dims[other] != first.dims[other]:
                raise ShapeError(f"concat along axis {axis} of {first!r} and {part!r}")
        sizes = tuple(part.dims[axis] for part in parts)
        dims = (sum(sizes), first.dims[1]) if axis == 0 else (first.dims[0], sum(sizes))
        return self._add(OpKind.CONCAT, parts, dims, axis=axis, sizes=sizes)

    def slice(self, a: GraphNode, start: int, stop: int, axis: int = 0) -> GraphNode:
        """Add the rows (axis 0) or columns (axis 1) ``start:stop`` of a tensor."""
        if axis not in (0, 1):
            raise ContractError(f"slice axis must be 0 or 1, got {axis}")
        if not 0 <= start < stop <= a.dims[axis]:
            raise ShapeError(f"slice {start}:{stop} along axis {axis} of {a!r}")
        dims = (stop - start, a.dims[1]) if axis == 0 else (a.dims[0], stop - start)
        return self._add(OpKind.SLICE, (a,), dims, axis=axis, start=start, stop=stop)

    def column_lookup(self, a: GraphNode, indices: Sequence[int]) -> GraphNode:
        """Add a gather of the given (0-based) columns of a matrix."""
        idx = self._indices(a, indices)
        return self._add(OpKind.COLUMN_LOOKUP, (a,), (a.dims[0], idx.size), indices=idx)

    def scalar_lookup(self, a: GraphNode, indices: Sequence[int]) -> GraphNode:
        """Add a gather of the given (0-based) coordinates of a row vector."""
        if a.dims[0] != 1:
            raise ShapeError(f"scalar-lookup expects a row, got {a!r}")
        idx = self._indices(a, indices)
        return self._add(OpKind.SCALAR_LOOKUP, (a,), (1, idx.size), indices=idx)

    def sum(self, a: GraphNode) -> GraphNode:
        """Add the sum of all entries."""
        return self._add(OpKind.SUM, (a,), (1, 1))

    def mean(self, a: GraphNode) -> GraphNode:
        """Add the mean of all entries."""
        return self._add(OpKind.MEAN, (a,), (1, 1))

    def square(self, a: GraphNode) -> GraphNode:
        """Add an element-wise square."""
        return self._add(OpKind.SQUARE, (a,), a.dims)

    @staticmethod
    def _same_dims(op: OpKind, a: GraphNode, b: GraphNode) -> None:
        if a.dims != b.dims:
            raise ShapeError(f"{op} of {a!r} and {b!r}")

    @staticmethod
    def _indices(a: GraphNode, indices: Sequence[int]) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.intp).ravel()
        if idx.size == 0:
            raise ContractError(f"lookup into {a!r} needs at least one index")
        if idx.min() < 0 or idx.max() >= a.dims[1]:
            raise ShapeError(f"lookup indices {idx.min()}..{idx.max()} out of range for {a!r}")
        return idx


# Forward kernels


def _fw_matmul(node: GraphNode, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ (b.T if node.attrs["transpose_b"] else b)


def _fw_softmax(node: GraphNode, x: np.ndarray) -> np.ndarray:
    mask: np.ndarray = node.attrs["mask"]
    row = x[0]
    if node.attrs["literal"]:
        row = np.where(mask, 0.0, row)
        keep = np.ones_like(mask)
    else:
        keep = ~mask
    shifted = np.where(keep, row - row[keep].max(), -np.inf)
    exp = np.exp(shifted)
    return (exp / exp.sum()).reshape(1, -1)


def _fw_concat(node: GraphNode, *parts: np.ndarray) -> np.ndarray:
    return np.concatenate(parts, axis=node.attrs["axis"])


def _fw_slice(node: GraphNode, a: np.ndarray) -> np.ndarray:
    start, stop = node.attrs["start"], node.attrs["stop"]
    return a[start:stop, :] if node.attrs["axis"] == 0 else a[:, start:stop]


def _fw_lookup(node: GraphNode, a: np.ndarray) -> np.ndarray:
    return a[:, node.attrs["indices"]]


_FORWARD: dict[OpKind, Callable[..., np.ndarray]] = {
    OpKind.MATMUL: _fw_matmul,
    OpKind.ADD: lambda node, a, b: a + b,
    OpKind.HADAMARD: lambda node, a, b: a * b,
    OpKind.TANH: lambda node, a: np.tanh(a),
    OpKind.SIGMOID: lambda node, a: 1.0 / (1.0 + np.exp(-a)),
    OpKind.SOFTMAX_MASKED: _fw_softmax,
    OpKind.CONCAT: _fw_concat,
    OpKind.SLICE: _fw_slice,
    OpKind.COLUMN_LOOKUP: _fw_lookup,
    OpKind.SCALAR_LOOKUP: _fw_lookup,
    OpKind.SUM: lambda node, a: np.array([[a.sum()]]),
    OpKind.MEAN: lambda node, a: np.array([[a.mean()]]),
    OpKind.SQUARE: lambda node, a: a * a,
}


# Backward kernels: (node, upstream gradient, output value, *operand values)
# -> one gradient per operand, in operand order.


def _bw_matmul(node: GraphNode, g: np.ndarray, out: np.ndarray, a: np.ndarray, b: np.ndarray):
    if node.attrs["transpose_b"]:
        return g @ b, g.T @ a
    return g @ b.T, a.T @ g


def _bw_softmax(node: GraphNode, g: np.ndarray, y: np.ndarray, x: np.ndarray):
    mask: np.ndarray = node.attrs["mask"]
    grad = y * (g - (g * y).sum())
    grad[:, mask] = 0.0
    return (grad,)


def _bw_concat(node: GraphNode, g: np.ndarray, out: np.ndarray, *parts: np.ndarray):
    bounds = np.cumsum(node.attrs["sizes"])[:-1]
    return tuple(np.split(g, bounds, axis=node.attrs["axis"]))


def _bw_slice(node: GraphNode, g: np.ndarray, out: np.ndarray, a: np.ndarray):
    grad = np.zeros_like(a)
    start, stop = node.attrs["start"], node.attrs["stop"]
    if node.attrs["axis"] == 0:
        grad[start:stop, :] = g
    else:
        grad[:, start:stop] = g
    return (grad,)


def _bw_lookup(node: GraphNode, g: np.ndarray, out: np.ndarray, a: np.ndarray):
    grad = np.zeros_like(a)
    # repeated indices accumulate in index order
    np.add.at(grad, (slice(None), node.attrs["indices"]), g)
    return (grad,)


_BACKWARD: dict[OpKind, Callable[..., tuple[np.ndarray, ...]]] = {
    OpKind.MATMUL: _bw_matmul,
    OpKind.ADD: lambda node, g, out, a, b: (g, g),
    OpKind.HADAMARD: lambda node, g, out, a, b: (g * b, g * a),
    OpKind.TANH: lambda node, g, out, a: (g * (1.0 - out * out),),
    OpKind.SIGMOID: lambda node, g, out, a: (g * out * (1.0 - out),),
    OpKind.SOFTMAX_MASKED: _bw_softmax,
    OpKind.CONCAT: _bw_concat,
    OpKind.SLICE: _bw_slice,
    OpKind.COLUMN_LOOKUP: _bw_lookup,
    OpKind.SCALAR_LOOKUP: _bw_lookup,
    OpKind.SUM: lambda node, g, out, a: (np.full_like(a, g[0, 0]),),
    OpKind.MEAN: lambda node, g, out, a: (np.full_like(a, g[0, 0] / a.size),),
    OpKind.SQUARE: lambda node, g, out, a: (2.0 * a * g,),
}


def _accumulate(parts: list[tuple[int, int, np.ndarray]]) -> np.ndarray:
    """Sum adjoint contributions in ascending (consumer id, operand position) order."""
    parts.sort(key=lambda part: (part[0], part[1]))
    total = np.array(parts[0][2], dtype=np.float64)
    for _, _, grad in parts[1:]:
        total = total + grad
    return total


def evaluate(graph: Graph, root: GraphNode, bindings: Mapping[str, Any]) -> Tensor:
    """
    Evaluate every node up to ``root`` in ascending id order.

    Args:
        graph: The graph holding ``root``
        root: The node whose value is returned
        bindings: Values for the parameter nodes, by name

    Returns:
        The value of ``root``

    Raises:
        ContractError: If a parameter is unbound
        ShapeError: If a bound value has the wrong dims
        NumericError: If any value is not finite

    """
    nodes = graph.nodes
    for node in nodes[: root.id + 1]:
        if node.op is OpKind.CONSTANT:
            pass
        elif node.op is OpKind.PARAMETER:
            if node.name not in bindings:
                raise ContractError(f"Parameter {node.name!r} is not bound")
            value = np.asarray(bindings[node.name], dtype=np.float64)
            if value.ndim == 1:
                value = value.reshape(-1, 1)
            if value.shape != node.dims:
                raise ShapeError(f"Binding of shape {value.shape} for {node!r}")
            node.value = value
        else:
            args = [nodes[i].value for i in node.operands]
            node.value = _FORWARD[node.op](node, *args)
        if not np.isfinite(node.value).all():
            raise NumericError(f"Non-finite value at {node!r}")
    _LOGGER.debug("Evaluated %d nodes up to %r", root.id + 1, root)
    return Tensor.of(root.value)


def backward(graph: Graph, loss: GraphNode) -> GradientMap:
    """
    Backpropagate from a scalar loss that has been evaluated.

    Args:
        graph: The graph holding ``loss``
        loss: A one-element node

    Returns:
        The gradient of ``loss`` for every parameter node of the graph;
        parameters the loss does not depend on get zeros

    Raises:
        ContractError: If the loss is not a scalar or was not evaluated

    """
    if loss.dims != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got {loss!r}")
    if loss.value is None:
        raise ContractError(f"{loss!r} has not been evaluated")
    nodes = graph.nodes
    # contributions to each node's adjoint, keyed by (consumer id, operand position)
    pending: dict[int, list[tuple[int, int, np.ndarray]]] = {loss.id: [(loss.id, 0, np.ones((1, 1)))]}
    adjoints: dict[int, np.ndarray] = {}
    for node in reversed(nodes[: loss.id + 1]):
        parts = pending.pop(node.id, None)
        if parts is None:
            continue
        grad = _accumulate(parts)
        if node.op is OpKind.PARAMETER or not node.operands:
            adjoints[node.id] = grad
            continue
        args = [nodes[i].value for i in node.operands]
        outputs = _BACKWARD[node.op](node, grad, node.value, *args)
        for position, (operand_id, operand_grad) in enumerate(zip(node.operands, outputs)):
            pending.setdefault(operand_id, []).append((node.id, position, operand_grad))
    by_id: dict[int, np.ndarray] = {}
    names: dict[str, int] = {}
    for name, node in graph._parameters.items():
        names[name] = node.id
        by_id[node.id] = adjoints.get(node.id, np.zeros(node.dims))
    return GradientMap(by_id=by_id, names=names)


def finite_diff_check(
    build: Callable[[Graph], GraphNode],
    point: Mapping[str, Any],
    epsilon: float = FINITE_DIFF_EPSILON,
) -> float:
    """
    Compare backpropagated gradients against central finite differences.

    Args:
        build: Builds a scalar loss into the graph it is given
        point: Parameter values, by name
        epsilon: Finite-difference step

    Returns:
        The maximum over parameters of
        ``max|backprop - central| / max(max|central|, 1e-8)``

    Raises:
        ContractError: If epsilon is not positive or the loss is not a scalar

    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    graph = Graph()
    loss = build(graph)
    if loss.dims != (1, 1):
        raise ContractError(f"finite_diff_check needs a scalar loss, got {loss!r}")
    bindings = {
        name: np.array(value, dtype=np.float64).reshape(graph.parameters[name].dims)
        if name in graph.parameters
        else np.array(value, dtype=np.float64)
        for name, value in point.items()
    }
    evaluate(graph, loss, bindings)
    grads = backward(graph, loss)

    worst = 0.0
    for name, analytic in grads.items():
        value = bindings[name]
        numeric = np.zeros_like(value)
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + epsilon
            upper = evaluate(graph, loss, bindings).item()
            value[index] = original - epsilon
            lower = evaluate(graph, loss, bindings).item()
            value[index] = original
            numeric[index] = (upper - lower) / (2.0 * epsilon)
        scale = max(float(np.abs(numeric).max()), FINITE_DIFF_FLOOR)
        error = float(np.abs(analytic - numeric).max()) / scale
        _LOGGER.debug("Gradient check %s: relative error %.3e", name, error)
        worst = max(worst, error)
    return worst
