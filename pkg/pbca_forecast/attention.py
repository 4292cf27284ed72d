"""Content attention and its position-based variants.

For output step ``i`` (1-based) and input position ``j`` the lag is
``i + T - j``. Lags above T point before the start of the history; those
positions are masked. The π parameters hold one coordinate (π(1)) or one
column (π(2), π(3)) per lag ``1..T+T'``; coordinate ``lag`` lives at 0-based
index ``lag - 1`` and the ones above T are never selected while masking is on.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from ._compat import StrEnum

import numpy as np

from .autodiff import Graph, GraphNode
from .exceptions import ContractError, ShapeError
from .recurrent import EncoderOutput

_LOGGER = logging.getLogger(__name__)


class AttentionVariant(StrEnum):
    """Scoring mechanisms."""

    A = "A"
    PI1 = "pi1"
    PI2 = "pi2"
    PI3 = "pi3"


@dataclass(frozen=True)
class LagIndex:
    """Position pair of an output step and an input position."""

    i: int
    j: int
    T: int

    @property
    def lag(self) -> int:
        """Return ``i + T - j``."""
        return self.i + self.T - self.j

    @property
    def valid(self) -> bool:
        """Return True if the lag stays within the history."""
        return self.lag <= self.T


def lag_coordinates(i: int, T: int) -> np.ndarray:
    """Return the 0-based π coordinate for each input position ``j = 1..T``."""
    return np.array([LagIndex(i, j, T).lag - 1 for j in range(1, T + 1)], dtype=np.intp)


def lag_mask(i: int, T: int, masking: bool = True) -> np.ndarray:
    """Return True for each input position whose lag exceeds T."""
    if not masking:
        return np.zeros(T, dtype=bool)
    return np.array([not LagIndex(i, j, T).valid for j in range(1, T + 1)])


def attention_shapes(
    prefix: str, variant: AttentionVariant, n: int, H: int, m: int, T: int, T_prime: int
) -> dict[str, tuple[int, int]]:
    """
    Return the parameter names and dims of one attention block.

    Args:
        prefix: Name prefix, e.g. ``att0``
        variant: Scoring mechanism
        n: Decoder hidden size
        H: Encoder state size (2n, or 2Kn for π(3))
        m: Attention units
        T: History length
        T_prime: Forecast horizon

    Returns:
        Parameter dims by name; ``v_a`` is stored as a ``[1, m]`` row

    """
    shapes = {
        f"{prefix}.W_a": (m, n),
        f"{prefix}.U_a": (m, H),
        f"{prefix}.v_a": (1, m),
    }
    if variant is AttentionVariant.PI1:
        shapes[f"{prefix}.pi"] = (1, T + T_prime)
    elif variant in (AttentionVariant.PI2, AttentionVariant.PI3):
        shapes[f"{prefix}.pi"] = (H, T + T_prime)
    return shapes


def init_attention(
    rng: np.random.Generator,
    prefix: str,
    variant: AttentionVariant,
    n: int,
    H: int,
    m: int,
    T: int,
    T_prime: int,
) -> dict[str, np.ndarray]:
    """Draw initial attention values; π starts at all ones."""
    values: dict[str, np.ndarray] = {}
    for name, dims in attention_shapes(prefix, variant, n, H, m, T, T_prime).items():
        if name.endswith(".pi"):
            values[name] = np.ones(dims)
            continue
        bound = 1.0 / np.sqrt(dims[1])
        values[name] = rng.uniform(-bound, bound, size=dims)
    return values


@dataclass(frozen=True)
class AttentionParams:
    """Graph nodes of one attention block."""

    variant: AttentionVariant
    W_a: GraphNode
    U_a: GraphNode
    v_a: GraphNode
    pi: GraphNode | None
    T: int
    T_prime: int

    def __post_init__(self) -> None:
        """Check that the π field matches the variant."""
        if (self.variant is AttentionVariant.A) != (self.pi is None):
            raise ContractError(f"Variant {self.variant} with pi={self.pi!r}")
        if self.pi is not None and self.pi.dims[1] != self.T + self.T_prime:
            raise ShapeError(f"{self.pi!r} needs {self.T + self.T_prime} lag columns")
        if self.variant is AttentionVariant.PI1 and self.pi.dims[0] != 1:
            raise ShapeError(f"π(1) must be a row, got {self.pi!r}")

    @property
    def m(self) -> int:
        """Return the number of attention units."""
        return self.W_a.dims[0]

    @property
    def H(self) -> int:
        """Return the encoder state size."""
        return self.U_a.dims[1]

    @classmethod
    def declare(
        cls,
        graph: Graph,
        prefix: str,
        variant: AttentionVariant,
        n: int,
        H: int,
        m: int,
        T: int,
        T_prime: int,
    ) -> "AttentionParams":
        """Declare the parameters in a graph under ``prefix``."""
        shapes = attention_shapes(prefix, variant, n, H, m, T, T_prime)
        nodes = {name.rsplit(".", 1)[1]: graph.parameter(name, dims) for name, dims in shapes.items()}
        return cls(variant=variant, T=T, T_prime=T_prime, pi=nodes.pop("pi", None), **nodes)


@dataclass(frozen=True)
class Scores:
    """A ``[1, T]`` score row and the positions excluded from the softmax."""

    scores: GraphNode
    mask: np.ndarray


@dataclass(frozen=True)
class AttentionResult:
    """Weights ``[1, T]`` and context ``[H, 1]`` of one output step."""

    weights: GraphNode
    context: GraphNode


def _require(p: AttentionParams, *variants: AttentionVariant) -> None:
    if p.variant not in variants:
        raise ContractError(
            f"Attention variant {p.variant} used where {', '.join(variants)} is expected"
        )


def _check_step(i: int, p: AttentionParams) -> None:
    if not 1 <= i <= p.T_prime:
        raise ContractError(f"Output step {i} outside 1..{p.T_prime}")


def _check_inputs(s_prev: GraphNode, h: EncoderOutput, p: AttentionParams) -> None:
    if h.dim != p.H:
        raise ShapeError(f"Encoder states of size {h.dim} for U_a {p.U_a!r}")
    if h.length != p.T:
        raise ShapeError(f"Encoder output of length {h.length} for T={p.T}")
    if s_prev.dims != (p.W_a.dims[1], 1):
        raise ShapeError(f"Decoder state {s_prev!r} for W_a {p.W_a!r}")


def _score(graph: Graph, s_prev: GraphNode, keys: GraphNode, p: AttentionParams) -> GraphNode:
    """Return ``v_a tanh(W_a s ⊗ 1 + keys)`` for an ``[m, T]`` key matrix."""
    query = graph.matmul(graph.matmul(p.W_a, s_prev), graph.ones(1, p.T))
    return graph.matmul(p.v_a, graph.tanh(graph.add(query, keys)))


def score_content(graph: Graph, s_prev: GraphNode, h: EncoderOutput, p: AttentionParams) -> Scores:
    """
    Score every input position with the original content attention.

    ``e_j = v_a tanh(W_a s_prev + U_a h_j)``; nothing is masked.

    Raises:
        ContractError: If ``p`` is not the content variant
        ShapeError: If the dims do not agree

    """
    _require(p, AttentionVariant.A)
    _check_inputs(s_prev, h, p)
    scores = _score(graph, s_prev, h.projected(graph, p.U_a), p)
    return Scores(scores=scores, mask=np.zeros(p.T, dtype=bool))


def score_pi1(
    graph: Graph,
    i: int,
    s_prev: GraphNode,
    h: EncoderOutput,
    p: AttentionParams,
    masking: bool = True,
) -> Scores:
    """
    Score with one learned scalar per lag.

    ``e_ij = v_a tanh(W_a s_prev + π(1)[i+T-j] U_a h_j)`` for valid lags;
    positions with ``i+T-j > T`` are masked.

    Raises:
        ContractError: If ``i`` is outside ``1..T'`` or ``p`` is not π(1)
        ShapeError: If the dims do not agree

    """
    _require(p, AttentionVariant.PI1)
    _check_step(i, p)
    _check_inputs(s_prev, h, p)
    weights = graph.scalar_lookup(p.pi, lag_coordinates(i, p.T))
    spread = graph.matmul(graph.ones(p.m, 1), weights)
    keys = graph.hadamard(spread, h.projected(graph, p.U_a))
    return Scores(scores=_score(graph, s_prev, keys, p), mask=lag_mask(i, p.T, masking))


def _score_columns(
    graph: Graph, i: int, s_prev: GraphNode, h: EncoderOutput, p: AttentionParams, masking: bool
) -> Scores:
    columns = graph.column_lookup(p.pi, lag_coordinates(i, p.T))
    keys = graph.matmul(p.U_a, graph.hadamard(columns, h.matrix))
    return Scores(scores=_score(graph, s_prev, keys, p), mask=lag_mask(i, p.T, masking))


def score_pi2(
    graph: Graph,
    i: int,
    s_prev: GraphNode,
    h: EncoderOutput,
    p: AttentionParams,
    masking: bool = True,
) -> Scores:
    """
    Score with one learned coordinate-wise vector per lag.

    ``e_ij = v_a tanh(W_a s_prev + U_a (π(2)[:, i+T-j] ⊙ h_j))`` for valid
    lags; positions with ``i+T-j > T`` are masked.
    """
    _require(p, AttentionVariant.PI2)
    _check_step(i, p)
    _check_inputs(s_prev, h, p)
    return _score_columns(graph, i, s_prev, h, p, masking)


def score_pi3(
    graph: Graph,
    i: int,
    s_prev: GraphNode,
    h_concat: EncoderOutput,
    p: AttentionParams,
    K: int,
    masking: bool = True,
) -> Scores:
    """
    Score concatenated per-variable states with a single π(2)-style attention.

    Raises:
        ShapeError: If the state size is not ``2Kn``

    """
    _require(p, AttentionVariant.PI3)
    _check_step(i, p)
    n = p.W_a.dims[1]
    if h_concat.dim != 2 * K * n:
        raise ShapeError(f"π(3) over K={K}, n={n} needs states of size {2 * K * n}, got {h_concat.dim}")
    _check_inputs(s_prev, h_concat, p)
    return _score_columns(graph, i, s_prev, h_concat, p, masking)


def normalize_and_context(
    graph: Graph, scores: Scores, h: EncoderOutput, literal: bool = False
) -> AttentionResult:
    """
    Turn scores into weights and the weighted sum of encoder states.

    Masked positions are left out of the softmax and get weight 0. With
    ``literal`` they keep a score of exactly 0 inside the softmax instead.

    Raises:
        ContractError: If every position is masked

    """
    if not literal and scores.mask.all():
        raise ContractError("Every input position is masked")
    weights = graph.softmax_masked(scores.scores, scores.mask, literal=literal)
    context = graph.matmul(h.matrix, weights, transpose_b=True)
    return AttentionResult(weights=weights, context=context)


def multivariate_concat_context(graph: Graph, contexts: Sequence[GraphNode]) -> GraphNode:
    """
    Stack per-variable contexts in variable order.

    Raises:
        ShapeError: If the contexts differ in length

    """
    if not contexts:
        raise ContractError("No contexts to concatenate")
    first = contexts[0]
    for context in contexts[1:]:
        if context.dims != first.dims:
            raise ShapeError(f"Context {context!r} differs from {first!r}")
    if len(contexts) == 1:
        return first
    return graph.concat(contexts, axis=0)


def attend(
    graph: Graph,
    i: int,
    s_prev: GraphNode,
    h: EncoderOutput,
    p: AttentionParams,
    K: int = 1,
    masking: bool = True,
    literal: bool = False,
) -> AttentionResult:
    """Score with the variant of ``p`` and normalize."""
    if p.variant is AttentionVariant.A:
        _check_step(i, p)
        scores = score_content(graph, s_prev, h, p)
    elif p.variant is AttentionVariant.PI1:
        scores = score_pi1(graph, i, s_prev, h, p, masking)
    elif p.variant is AttentionVariant.PI2:
        scores = score_pi2(graph, i, s_prev, h, p, masking)
    else:
        scores = score_pi3(graph, i, s_prev, h, p, K, masking)
    return normalize_and_context(graph, scores, h, literal=literal)
