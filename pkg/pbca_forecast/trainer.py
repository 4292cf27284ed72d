"""Training loop, Selected-π model selection and the hyperparameter sweep."""
from __future__ import annotations

import logging
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ForecastConfig, Variant
from .const import SWEEP_ATTENTION_UNITS, SWEEP_HIDDEN_SIZES
from .data import Partition, WindowedDataset
from .exceptions import ContractError
from .metrics import mse
from .model import DecoderMode, ForecastModel, loss_and_gradients, predict_many
from .optimizer import AdamState, adam_step, clip_by_global_norm

_LOGGER = logging.getLogger(__name__)

# Tie-break order for model selection
SELECTION_ORDER: tuple[Variant, ...] = (
    Variant.PI1,
    Variant.PI2,
    Variant.PI3,
    Variant.A,
    Variant.MULTI_PI1,
    Variant.MULTI_PI2,
    Variant.MULTI_A,
)


@dataclass(frozen=True)
class EpochRecord:
    """Mean training loss and validation MSE after one epoch."""

    epoch: int
    train_loss: float
    val_mse: float


@dataclass
class TrainReport:
    """
    History of one training run.

    Epoch 0 stands for the initial parameters; ``best_epoch`` is 0 when no
    epoch improved on them.
    """

    initial_val_mse: float
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0

    @property
    def best_val_mse(self) -> float:
        """Return the validation MSE of the returned parameters."""
        if self.best_epoch == 0:
            return self.initial_val_mse
        return self.epochs[self.best_epoch - 1].val_mse

    def lines(self) -> list[str]:
        """Render as tab-separated lines."""
        rows = [f"{r.epoch}\t{r.train_loss:.10g}\t{r.val_mse:.10g}" for r in self.epochs]
        rows.append(f"best_epoch\t{self.best_epoch}")
        rows.append(f"wall_time\t{self.wall_time:.3f}")
        return rows


def validation_mse(model: ForecastModel, partition: Partition) -> float:
    """Return the free-running MSE of a model on a partition."""
    if len(partition) == 0:
        raise ContractError(f"Partition {partition.name} is empty")
    predictions, _ = predict_many(model, partition.inputs, DecoderMode.FREE_RUNNING)
    return mse(predictions, partition.targets)


class ForecastTrainer:
    """Trains one forecaster on a split dataset with Adam and early stopping."""

    def __init__(
        self,
        config: ForecastConfig,
        dataset: WindowedDataset,
        model: ForecastModel | None = None,
    ) -> None:
        """
        Initialize the trainer.

        Args:
            config: Hyperparameters; ``seed`` drives initialization and shuffling
            dataset: Split dataset
            model: Starting point, freshly initialized when omitted

        """
        if not dataset.is_split:
            raise ContractError("Training needs a split dataset")
        self.config = config
        self.dataset = dataset
        self.model = model.copy() if model is not None else ForecastModel.initialize(config)
        self.mode = DecoderMode.TEACHER_FORCED if config.teacher_forcing else DecoderMode.FREE_RUNNING
        self._rng = np.random.default_rng(config.seed)
        self._state = AdamState.zeros_like(self.model.params)

    def _example(self, window: np.ndarray, targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        value, grads = loss_and_gradients(self.model, window, targets, self.mode)
        return value, dict(grads.items())

    def batch_gradients(
        self, inputs: np.ndarray, targets: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """
        Return the mean loss and mean gradient of a batch.

        Per-example graphs may run on a thread pool; the sum is always taken
        in example order.
        """
        if self.config.threads > 1 and len(inputs) > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                results = list(pool.map(self._example, inputs, targets))
        else:
            results = [self._example(window, target) for window, target in zip(inputs, targets)]

        total = 0.0
        summed: dict[str, np.ndarray] = {name: np.zeros_like(v) for name, v in self.model.params.items()}
        for value, grads in results:
            total += value
            for name, grad in grads.items():
                summed[name] += grad
        count = len(results)
        return total / count, {name: grad / count for name, grad in summed.items()}

    def run_epoch(self) -> float:
        """Run one shuffled pass over the training block and return the mean loss."""
        train = self.dataset.train
        order = self._rng.permutation(len(train))
        size = self.config.batch_size
        losses = []
        for start in range(0, len(order), size):
            batch = order[start : start + size]
            value, grads = self.batch_gradients(train.inputs[batch], train.targets[batch])
            if self.config.clip_norm > 0:
                grads = clip_by_global_norm(grads, self.config.clip_norm)
            params, self._state = adam_step(
                self.model.params, grads, self._state, self.config.learning_rate
            )
            self.model.params = params
            losses.extend([value] * len(batch))
        return float(np.mean(losses))

    def train(self) -> tuple[ForecastModel, TrainReport]:
        """
        Train until ``max_epochs`` or ``patience`` epochs without improvement.

        Returns:
            The parameters with the lowest validation MSE and the report

        Raises:
            ContractError: If the training block is empty
            NumericError: If a value or gradient stops being finite

        """
        if len(self.dataset.train) == 0:
            raise ContractError("The training split is empty")
        validation = self.dataset.validation
        started = time.perf_counter()
        report = TrainReport(initial_val_mse=validation_mse(self.model, validation))
        best = self.model.copy()
        best_mse = report.initial_val_mse
        _LOGGER.info(
            "Training %s (n=%d, m=%d) on %d examples; initial validation MSE %.6g",
            self.config.variant,
            self.config.n,
            self.config.m,
            len(self.dataset.train),
            best_mse,
        )

        stale = 0
        for epoch in range(1, self.config.max_epochs + 1):
            train_loss = self.run_epoch()
            val = validation_mse(self.model, validation)
            report.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_mse=val))
            _LOGGER.info("Epoch %d: train loss %.6g, validation MSE %.6g", epoch, train_loss, val)
            if val < best_mse:
                best, best_mse, report.best_epoch, stale = self.model.copy(), val, epoch, 0
            else:
                stale += 1
                if stale >= self.config.patience:
                    _LOGGER.info("No improvement for %d epochs, stopping", stale)
                    break

        report.wall_time = time.perf_counter() - started
        _LOGGER.info("Best epoch %d with validation MSE %.6g", report.best_epoch, best_mse)
        return best, report


def train(
    config: ForecastConfig, dataset: WindowedDataset, model: ForecastModel | None = None
) -> tuple[ForecastModel, TrainReport]:
    """Train a forecaster; see :meth:`ForecastTrainer.train`."""
    return ForecastTrainer(config, dataset, model).train()


@dataclass(frozen=True)
class Selection:
    """Chosen model, every candidate and their validation MSE."""

    model: ForecastModel
    scores: list[tuple[Variant, float]]
    candidates: list[ForecastModel]


def _rank(variant: Variant) -> int:
    return SELECTION_ORDER.index(variant)


def select_pi(candidates: Sequence[ForecastModel], validation: Partition) -> Selection:
    """
    Pick the candidate with the lowest free-running validation MSE.

    Ties go to the earlier variant in π(1), π(2), π(3) order.

    Raises:
        ContractError: If there is no candidate

    """
    if not candidates:
        raise ContractError("Model selection needs at least one candidate")
    scores = [(model.config.variant, validation_mse(model, validation)) for model in candidates]
    if len(candidates) == 1:
        return Selection(model=candidates[0], scores=scores, candidates=list(candidates))
    chosen = min(range(len(candidates)), key=lambda k: (scores[k][1], _rank(scores[k][0]), k))
    _LOGGER.info("Selected %s with validation MSE %.6g", scores[chosen][0], scores[chosen][1])
    return Selection(model=candidates[chosen], scores=scores, candidates=list(candidates))


def train_and_select(
    config: ForecastConfig, dataset: WindowedDataset, variants: Iterable[Variant]
) -> tuple[Selection, dict[Variant, TrainReport]]:
    """Train one model per variant and select among them."""
    models = []
    reports: dict[Variant, TrainReport] = {}
    for variant in variants:
        model, report = train(config.with_overrides(variant=variant), dataset)
        models.append(model)
        reports[variant] = report
    return select_pi(models, dataset.validation), reports


@dataclass(frozen=True)
class SweepResult:
    """Best model of an (n, m) grid and the validation MSE of every pair."""

    model: ForecastModel
    report: TrainReport
    table: list[tuple[int, int, float]]


def sweep(
    config: ForecastConfig,
    dataset: WindowedDataset,
    hidden_sizes: Sequence[int] = SWEEP_HIDDEN_SIZES,
    attention_units: Sequence[int] = SWEEP_ATTENTION_UNITS,
) -> SweepResult:
    """
    Train one model per (n, m) pair and keep the best on validation.

    Ties keep the pair trained first.

    Raises:
        ContractError: If either grid is empty

    """
    if not hidden_sizes or not attention_units:
        raise ContractError("The sweep grid is empty")
    best: tuple[ForecastModel, TrainReport] | None = None
    table: list[tuple[int, int, float]] = []
    for n in hidden_sizes:
        for m in attention_units:
            model, report = train(config.with_overrides(n=n, m=m), dataset)
            table.append((n, m, report.best_val_mse))
            _LOGGER.info("Sweep n=%d, m=%d: validation MSE %.6g", n, m, report.best_val_mse)
            if best is None or report.best_val_mse < best[1].best_val_mse:
                best = (model, report)
    return SweepResult(model=best[0], report=best[1], table=table)
