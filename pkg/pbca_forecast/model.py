"""Encoder-decoder forecaster with position-based content attention."""
from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from ._compat import StrEnum
from typing import Any

import numpy as np

from .attention import (
    AttentionParams,
    attend,
    attention_shapes,
    init_attention,
    multivariate_concat_context,
)
from .autodiff import Graph, GradientMap, GraphNode, backward, evaluate
from .config import ForecastConfig, Variant
from .exceptions import ContractError, ShapeError
from .recurrent import (
    EncoderOutput,
    LstmState,
    OutputProjection,
    PeepholeLstmParams,
    decoder_step,
    encode_bidirectional,
    init_lstm,
    lstm_shapes,
    output_projection,
)

_LOGGER = logging.getLogger(__name__)


class DecoderMode(StrEnum):
    """What the decoder consumes as its previous output."""

    @classmethod
    def parse(cls, value: str) -> "DecoderMode":
        """
        Parse a string into a DecoderMode enum.

        Args:
            value: The string to parse

        Returns:
            The corresponding DecoderMode enum value

        Raises:
            ValueError: If the string doesn't match any DecoderMode

        """
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"'{value}' is not a valid DecoderMode")

    TEACHER_FORCED = "teacher-forced"
    FREE_RUNNING = "free-running"


def _attention_blocks(config: ForecastConfig) -> list[tuple[str, int]]:
    """Return (prefix, state size) of each attention block."""
    n = config.n
    encoders = len(config.encoded_variables)
    if config.variant.per_variable:
        return [(f"att{k}", 2 * n) for k in range(encoders)]
    return [("att0", 2 * n * encoders)]


def parameter_shapes(config: ForecastConfig) -> dict[str, tuple[int, int]]:
    """
    Return every parameter name and its dims, in initialization order.

    Args:
        config: Forecaster configuration

    Returns:
        Parameter dims by name

    """
    n = config.n
    shapes: dict[str, tuple[int, int]] = {}
    for k in range(len(config.encoded_variables)):
        shapes.update(lstm_shapes(f"enc{k}.fwd", n, 1))
        shapes.update(lstm_shapes(f"enc{k}.bwd", n, 1))
    for prefix, state_size in _attention_blocks(config):
        shapes.update(
            attention_shapes(
                prefix, config.variant.attention, n, state_size, config.m, config.T, config.T_prime
            )
        )
    shapes.update(lstm_shapes("dec", n, 1 + config.context_dim))
    shapes["out.W"] = (1, n)
    shapes["out.b"] = (1, 1)
    return shapes


def is_regularized(name: str) -> bool:
    """Return True if a parameter enters the default L2 term."""
    return not (name.endswith(".b") or name.endswith(".pi"))


@dataclass
class ForecastModel:
    """Configuration plus the current value of every parameter."""

    config: ForecastConfig
    params: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        """Check that the parameters match the architecture."""
        expected = parameter_shapes(self.config)
        missing = sorted(set(expected) - set(self.params))
        extra = sorted(set(self.params) - set(expected))
        if missing or extra:
            raise ShapeError(f"Parameters do not match {self.config.variant}: missing {missing}, unexpected {extra}")
        for name, dims in expected.items():
            if self.params[name].shape != dims:
                raise ShapeError(f"Parameter {name!r} has shape {self.params[name].shape}, expected {dims}")

    @classmethod
    def initialize(cls, config: ForecastConfig) -> "ForecastModel":
        """
        Draw fresh parameters from ``config.seed``.

        Encoder and decoder cells follow the LSTM initialization, attention
        weights are uniform in ``±1/sqrt(fan_in)`` with π at all ones, and the
        output bias starts at 0.
        """
        rng = np.random.default_rng(config.seed)
        n = config.n
        params: dict[str, np.ndarray] = {}
        for k in range(len(config.encoded_variables)):
            params.update(init_lstm(rng, f"enc{k}.fwd", n, 1))
            params.update(init_lstm(rng, f"enc{k}.bwd", n, 1))
        for prefix, state_size in _attention_blocks(config):
            params.update(
                init_attention(
                    rng, prefix, config.variant.attention, n, state_size, config.m, config.T, config.T_prime
                )
            )
        params.update(init_lstm(rng, "dec", n, 1 + config.context_dim))
        bound = 1.0 / np.sqrt(n)
        params["out.W"] = rng.uniform(-bound, bound, size=(1, n))
        params["out.b"] = np.zeros((1, 1))
        _LOGGER.debug(
            "Initialized %s with %d parameter arrays (%d values)",
            config.variant,
            len(params),
            sum(value.size for value in params.values()),
        )
        return cls(config=config, params=params)

    def copy(self) -> "ForecastModel":
        """Return a deep copy of the parameters."""
        return ForecastModel(config=self.config, params={k: v.copy() for k, v in self.params.items()})

    def weights(self) -> Iterator[tuple[str, np.ndarray]]:
        """Iterate over the parameters in the L2 term."""
        for name, value in self.params.items():
            if self.config.regularize_all or is_regularized(name):
                yield name, value


@dataclass
class ForwardGraph:
    """Nodes of one forward pass."""

    graph: Graph
    predictions: GraphNode
    attention: list[list[GraphNode]] = field(default_factory=list)


@dataclass(frozen=True)
class Forecast:
    """Predictions ``(T',)`` and one ``(T', T)`` weight matrix per attention block."""

    predictions: np.ndarray
    attention: list[np.ndarray]


def _check_example(
    config: ForecastConfig, window: np.ndarray, targets: np.ndarray | None, mode: DecoderMode
) -> None:
    if window.shape != (config.T, config.K):
        raise ShapeError(f"Window of shape {window.shape}, expected {(config.T, config.K)}")
    if mode is DecoderMode.TEACHER_FORCED and targets is None:
        raise ContractError("Teacher-forced decoding needs targets")
    if targets is not None and targets.shape != (config.T_prime,):
        raise ShapeError(f"Targets of shape {targets.shape}, expected {(config.T_prime,)}")


def _encode(graph: Graph, config: ForecastConfig, window: np.ndarray) -> list[EncoderOutput]:
    outputs = []
    for k, variable in enumerate(config.encoded_variables):
        fwd = PeepholeLstmParams.declare(graph, f"enc{k}.fwd", config.n, 1)
        bwd = PeepholeLstmParams.declare(graph, f"enc{k}.bwd", config.n, 1)
        sequence = [graph.constant([[value]]) for value in window[:, variable]]
        outputs.append(encode_bidirectional(graph, sequence, fwd, bwd))
    return outputs


def _concat_states(graph: Graph, outputs: list[EncoderOutput]) -> EncoderOutput:
    if len(outputs) == 1:
        return outputs[0]
    columns = [graph.concat([out.states[j] for out in outputs], axis=0) for j in range(outputs[0].length)]
    return EncoderOutput.from_states(graph, columns)


def build_forward(
    graph: Graph,
    config: ForecastConfig,
    window: np.ndarray,
    targets: np.ndarray | None = None,
    mode: DecoderMode = DecoderMode.FREE_RUNNING,
) -> ForwardGraph:
    """
    Build the forward pass of one example.

    Args:
        graph: Graph to build into
        config: Forecaster configuration
        window: History ``(T, K)``
        targets: Horizon values of the target variable ``(T',)``
        mode: Decoder input policy

    Returns:
        The prediction row ``[1, T']`` and the attention weight nodes

    Raises:
        ContractError: If teacher forcing is requested without targets
        ShapeError: If the window or targets do not match the config

    """
    window = np.asarray(window, dtype=np.float64)
    if targets is not None:
        targets = np.asarray(targets, dtype=np.float64)
    _check_example(config, window, targets, mode)

    encoded = _encode(graph, config, window)
    variant = config.variant
    blocks: list[tuple[AttentionParams, EncoderOutput]] = []
    if variant.per_variable:
        for k, output in enumerate(encoded):
            params = AttentionParams.declare(
                graph, f"att{k}", variant.attention, config.n, output.dim, config.m, config.T, config.T_prime
            )
            blocks.append((params, output))
    else:
        output = _concat_states(graph, encoded) if variant is Variant.PI3 else encoded[0]
        params = AttentionParams.declare(
            graph, "att0", variant.attention, config.n, output.dim, config.m, config.T, config.T_prime
        )
        blocks.append((params, output))

    dec = PeepholeLstmParams.declare(graph, "dec", config.n, 1 + config.context_dim)
    proj = OutputProjection.declare(graph, "out", config.n)

    state = LstmState.zeros(graph, config.n)
    y_prev = graph.constant([[window[-1, config.target]]])
    predictions: list[GraphNode] = []
    attention: list[list[GraphNode]] = [[] for _ in blocks]
    for i in range(1, config.T_prime + 1):
        contexts = []
        for b, (params, output) in enumerate(blocks):
            result = attend(
                graph,
                i,
                state.hidden,
                output,
                params,
                K=len(encoded),
                masking=config.masking,
                literal=config.literal_mask,
            )
            attention[b].append(result.weights)
            contexts.append(result.context)
        context = multivariate_concat_context(graph, contexts)
        state = decoder_step(graph, y_prev, state, context, dec)
        y_hat = output_projection(graph, state, proj)
        predictions.append(y_hat)
        if mode is DecoderMode.TEACHER_FORCED:
            y_prev = graph.constant([[targets[i - 1]]])
        else:
            y_prev = y_hat

    row = predictions[0] if len(predictions) == 1 else graph.concat(predictions, axis=1)
    return ForwardGraph(graph=graph, predictions=row, attention=attention)


def build_loss(
    graph: Graph,
    config: ForecastConfig,
    window: np.ndarray,
    targets: np.ndarray,
    mode: DecoderMode = DecoderMode.TEACHER_FORCED,
    l2: float | None = None,
) -> GraphNode:
    """
    Build ``mean((ŷ - y)²) + l2 · Σ w²`` for one example.

    Args:
        graph: Graph to build into
        config: Forecaster configuration; ``regularize_all`` widens the L2 term
        window: History ``(T, K)``
        targets: Horizon values ``(T',)``
        mode: Decoder input policy
        l2: Penalty coefficient, ``config.l2`` when omitted

    Returns:
        The ``[1, 1]`` loss node

    """
    l2 = config.l2 if l2 is None else l2
    forward_graph = build_forward(graph, config, window, targets, mode)
    error = graph.add(forward_graph.predictions, graph.constant(-np.asarray(targets, dtype=np.float64).reshape(1, -1)))
    total = graph.mean(graph.square(error))
    if l2 > 0:
        penalty: GraphNode | None = None
        for name, node in graph.parameters.items():
            if not (config.regularize_all or is_regularized(name)):
                continue
            term = graph.sum(graph.square(node))
            penalty = term if penalty is None else graph.add(penalty, term)
        if penalty is not None:
            total = graph.add(total, graph.hadamard(graph.constant([[l2]]), penalty))
    return total


def forward(
    model: ForecastModel,
    window: np.ndarray,
    targets: np.ndarray | None = None,
    mode: DecoderMode = DecoderMode.FREE_RUNNING,
) -> Forecast:
    """
    Forecast one example.

    Args:
        model: The forecaster
        window: History ``(T, K)``
        targets: Horizon values, required for teacher forcing
        mode: Decoder input policy

    Returns:
        Predictions and attention weights

    Raises:
        ContractError: If teacher forcing is requested without targets
        ShapeError: If the window or targets do not match the config
        NumericError: If a value overflows

    """
    graph = Graph()
    fwd = build_forward(graph, model.config, window, targets, mode)
    predictions = evaluate(graph, fwd.predictions, model.params).array.ravel().copy()
    attention = [np.vstack([node.value for node in block]) for block in fwd.attention]
    return Forecast(predictions=predictions, attention=attention)


def loss(
    predictions: np.ndarray,
    targets: np.ndarray,
    weights: Mapping[str, Any],
    l2: float,
    regularize_all: bool = False,
) -> float:
    """
    Return ``(1/T') Σ (ŷ_i - y_i)² + l2 · Σ w²``.

    Biases (names ending in ``.b``) and π are left out of the penalty unless
    ``regularize_all`` is set.

    Raises:
        ContractError: If the lengths differ or are zero

    """
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if predictions.size != targets.size or predictions.size == 0:
        raise ContractError(f"{predictions.size} predictions for {targets.size} targets")
    value = float(np.mean((predictions - targets) ** 2))
    if l2:
        value += l2 * sum(
            float(np.sum(np.square(w)))
            for name, w in weights.items()
            if regularize_all or is_regularized(name)
        )
    return value


def loss_and_gradients(
    model: ForecastModel,
    window: np.ndarray,
    targets: np.ndarray,
    mode: DecoderMode = DecoderMode.TEACHER_FORCED,
) -> tuple[float, GradientMap]:
    """Evaluate the regularized loss of one example and its gradients."""
    graph = Graph()
    total = build_loss(graph, model.config, window, targets, mode)
    value = evaluate(graph, total, model.params).item()
    return value, backward(graph, total)


def predict_many(
    model: ForecastModel,
    windows: np.ndarray,
    mode: DecoderMode = DecoderMode.FREE_RUNNING,
    targets: np.ndarray | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """
    Forecast a stack of examples.

    Args:
        model: The forecaster
        windows: ``(N, T, K)``
        mode: Decoder input policy
        targets: ``(N, T')`` horizon values, needed for teacher forcing

    Returns:
        Predictions ``(N, T')`` and, per attention block, weights ``(N, T', T)``

    """
    if len(windows) == 0:
        raise ContractError("No examples to forecast")
    forecasts = [
        forward(model, window, None if targets is None else targets[e], mode)
        for e, window in enumerate(windows)
    ]
    predictions = np.vstack([f.predictions for f in forecasts])
    attention = [np.stack([f.attention[b] for f in forecasts]) for b in range(len(forecasts[0].attention))]
    return predictions, attention

