"""Peephole LSTM cell, bidirectional encoder, decoder cell and output projection."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, GraphNode
from .const import FORGET_BIAS_INIT
from .exceptions import ContractError, ShapeError

_LOGGER = logging.getLogger(__name__)

# Gate blocks of the stacked weights, in storage order.
GATES: tuple[str, ...] = ("input", "forget", "output", "cell")


def lstm_shapes(prefix: str, n: int, d_in: int) -> dict[str, tuple[int, int]]:
    """
    Return the parameter names and dims of one peephole LSTM.

    Args:
        prefix: Name prefix, e.g. ``enc0.fwd``
        n: Hidden size
        d_in: Input size

    Returns:
        Parameter dims by name

    """
    return {
        f"{prefix}.W": (4 * n, d_in),
        f"{prefix}.R": (4 * n, n),
        f"{prefix}.b": (4 * n, 1),
        f"{prefix}.p_i": (n, 1),
        f"{prefix}.p_f": (n, 1),
        f"{prefix}.p_o": (n, 1),
    }


def init_lstm(rng: np.random.Generator, prefix: str, n: int, d_in: int) -> dict[str, np.ndarray]:
    """
    Draw initial values for one peephole LSTM.

    Weights and peepholes are uniform in ``±1/sqrt(fan_in)``; the forget-gate
    bias block starts at +1 and every other bias at 0.
    """
    values: dict[str, np.ndarray] = {}
    for name, dims in lstm_shapes(prefix, n, d_in).items():
        if name.endswith(".b"):
            bias = np.zeros(dims)
            bias[n : 2 * n] = FORGET_BIAS_INIT
            values[name] = bias
            continue
        fan_in = dims[1] if dims[1] > 1 else n
        bound = 1.0 / np.sqrt(fan_in)
        values[name] = rng.uniform(-bound, bound, size=dims)
    return values


@dataclass(frozen=True)
class PeepholeLstmParams:
    """Graph nodes of one peephole LSTM's parameters."""

    W: GraphNode
    R: GraphNode
    b: GraphNode
    p_i: GraphNode
    p_f: GraphNode
    p_o: GraphNode
    n: int
    d_in: int

    @classmethod
    def declare(cls, graph: Graph, prefix: str, n: int, d_in: int) -> "PeepholeLstmParams":
        """Declare the parameters in a graph under ``prefix``."""
        shapes = lstm_shapes(prefix, n, d_in)
        nodes = {name.rsplit(".", 1)[1]: graph.parameter(name, dims) for name, dims in shapes.items()}
        return cls(n=n, d_in=d_in, **nodes)


@dataclass(frozen=True)
class LstmState:
    """Hidden and cell state, both ``[n, 1]``."""

    hidden: GraphNode
    cell: GraphNode

    def __post_init__(self) -> None:
        """Check that hidden and cell agree."""
        if self.hidden.dims != self.cell.dims:
            raise ShapeError(f"hidden {self.hidden!r} and cell {self.cell!r} differ")

    @classmethod
    def zeros(cls, graph: Graph, n: int) -> "LstmState":
        """Return the zero initial state."""
        zero = graph.zeros(n, 1)
        return cls(hidden=zero, cell=zero)


@dataclass
class EncoderOutput:
    """Concatenated forward/backward hidden states of one input window."""

    states: list[GraphNode]
    matrix: GraphNode
    _projections: dict[int, GraphNode] = field(default_factory=dict, repr=False)

    @classmethod
    def from_states(cls, graph: Graph, states: Sequence[GraphNode]) -> "EncoderOutput":
        """Stack per-position states into the ``[H, T]`` matrix."""
        if not states:
            raise ContractError("An encoder output needs at least one state")
        return cls(states=list(states), matrix=graph.concat(states, axis=1))

    @property
    def length(self) -> int:
        """Return the history length T."""
        return len(self.states)

    @property
    def dim(self) -> int:
        """Return the state size H."""
        return self.matrix.dims[0]

    def projected(self, graph: Graph, u_a: GraphNode) -> GraphNode:
        """Return ``U_a @ H``, built once per projection matrix."""
        if u_a.id not in self._projections:
            self._projections[u_a.id] = graph.matmul(u_a, self.matrix)
        return self._projections[u_a.id]


@dataclass(frozen=True)
class OutputProjection:
    """``W_out`` ``[1, n]`` and ``b_out`` ``[1, 1]``."""

    W: GraphNode
    b: GraphNode

    @classmethod
    def declare(cls, graph: Graph, prefix: str, n: int) -> "OutputProjection":
        """Declare the projection parameters under ``prefix``."""
        return cls(W=graph.parameter(f"{prefix}.W", (1, n)), b=graph.parameter(f"{prefix}.b", (1, 1)))


def lstm_peephole_step(
    graph: Graph, x_t: GraphNode, prev: LstmState, params: PeepholeLstmParams
) -> LstmState:
    """
    Advance a peephole LSTM by one step.

    The input, forget and output gates see the cell state; the output gate
    sees the updated one:

        i = σ(W_i x + R_i h + p_i ⊙ c_prev + b_i)
        f = σ(W_f x + R_f h + p_f ⊙ c_prev + b_f)
        c = f ⊙ c_prev + i ⊙ tanh(W_c x + R_c h + b_c)
        o = σ(W_o x + R_o h + p_o ⊙ c + b_o)
        h = o ⊙ tanh(c)

    Args:
        graph: Graph to build into
        x_t: Input ``[d_in, 1]``
        prev: Previous state
        params: Cell parameters

    Returns:
        The next state

    Raises:
        ShapeError: If the input or state dims do not match the parameters

    """
    n = params.n
    if x_t.dims != (params.d_in, 1):
        raise ShapeError(f"LSTM input {x_t!r} does not match d_in={params.d_in}")
    if prev.hidden.dims != (n, 1):
        raise ShapeError(f"LSTM state {prev.hidden!r} does not match n={n}")

    pre = graph.add(
        graph.add(graph.matmul(params.W, x_t), graph.matmul(params.R, prev.hidden)), params.b
    )
    z_i, z_f, z_o, z_c = (graph.slice(pre, k * n, (k + 1) * n) for k in range(4))

    i_gate = graph.sigmoid(graph.add(z_i, graph.hadamard(params.p_i, prev.cell)))
    f_gate = graph.sigmoid(graph.add(z_f, graph.hadamard(params.p_f, prev.cell)))
    cell = graph.add(
        graph.hadamard(f_gate, prev.cell), graph.hadamard(i_gate, graph.tanh(z_c))
    )
    o_gate = graph.sigmoid(graph.add(z_o, graph.hadamard(params.p_o, cell)))
    hidden = graph.hadamard(o_gate, graph.tanh(cell))
    return LstmState(hidden=hidden, cell=cell)


def encode_bidirectional(
    graph: Graph,
    sequence: Sequence[GraphNode],
    fwd: PeepholeLstmParams,
    bwd: PeepholeLstmParams,
) -> EncoderOutput:
    """
    Read a sequence forward and backward from zero states.

    Entry j is ``[h_fwd_j; h_bwd_j]`` where the forward state has consumed
    ``x_1..x_j`` and the backward state ``x_T..x_j``.

    Raises:
        ContractError: If the sequence is empty
        ShapeError: If the two directions have different hidden sizes

    """
    if not sequence:
        raise ContractError("Cannot encode an empty sequence")
    if fwd.n != bwd.n:
        raise ShapeError(f"Forward size {fwd.n} and backward size {bwd.n} differ")

    forward: list[GraphNode] = []
    state = LstmState.zeros(graph, fwd.n)
    for x_t in sequence:
        state = lstm_peephole_step(graph, x_t, state, fwd)
        forward.append(state.hidden)

    backward: list[GraphNode] = [forward[0]] * len(sequence)
    state = LstmState.zeros(graph, bwd.n)
    for j in reversed(range(len(sequence))):
        state = lstm_peephole_step(graph, sequence[j], state, bwd)
        backward[j] = state.hidden

    states = [graph.concat([f, b], axis=0) for f, b in zip(forward, backward)]
    return EncoderOutput.from_states(graph, states)


def decoder_step(
    graph: Graph,
    y_prev: GraphNode,
    s_prev: LstmState,
    context: GraphNode,
    params: PeepholeLstmParams,
) -> LstmState:
    """
    Run the decoder cell on ``[y_prev; context]``.

    Raises:
        ShapeError: If ``params.d_in`` differs from ``dim(y_prev) + dim(context)``

    """
    expected = y_prev.dims[0] + context.dims[0]
    if params.d_in != expected:
        raise ShapeError(
            f"Decoder input size {params.d_in} does not match "
            f"{y_prev.dims[0]} + {context.dims[0]} = {expected}"
        )
    return lstm_peephole_step(graph, graph.concat([y_prev, context], axis=0), s_prev, params)


def output_projection(graph: Graph, state: LstmState, proj: OutputProjection) -> GraphNode:
    """Return ``W_out @ s + b_out`` as a ``[1, 1]`` node."""
    if proj.W.dims[1] != state.hidden.dims[0]:
        raise ShapeError(f"Projection {proj.W!r} does not match state {state.hidden!r}")
    return graph.add(graph.matmul(proj.W, state.hidden), proj.b)
