"""
Training loop shared by the frame-level and word-level models, and the :class:`TrainingTrace` it records.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Tuple, Union

import numpy as np

from .errors import TrainingError
from .nn import Adam, LayerStack
from .serialization import Serializer, serializable

logger = logging.getLogger(__name__)

Gradients = Dict[str, np.ndarray]


class Trainable(Protocol):
    stacks: Dict[str, LayerStack]

    def loss_and_gradients(
        self, batch, seed: Optional[int] = None
    ) -> Tuple[float, Gradients, Dict[str, float]]:
        ...


@serializable
@dataclass
class EpochRecord:
    epoch: int
    loss: float
    components: Dict[str, float] = field(default_factory=dict)
    clip_events: int = 0
    validation_ap: Optional[float] = None
    phase: str = ""


@serializable
@dataclass
class TrainingTrace:
    kind: str
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_ap: Optional[float] = None
    stopped_early: bool = False
    start_losses: Dict[str, float] = field(default_factory=dict)
    """ Objective of each phase evaluated before its first update. """
    phase_best: Dict[str, int] = field(default_factory=dict)
    """ Best epoch of each phase, counted from the start of the phase. """

    @property
    def losses(self) -> List[float]:
        return [_x.loss for _x in self.epochs]

    def phase(self, name: str) -> List[EpochRecord]:
        return [_x for _x in self.epochs if _x.phase == name]

    @property
    def clip_events(self) -> int:
        return sum(_x.clip_events for _x in self.epochs)


def write_trace(trace: TrainingTrace, path: Union[str, Path]):
    Serializer().dump(trace, path, indent=2)


def read_trace(path: Union[str, Path]) -> TrainingTrace:
    return Serializer().load(path, expected_type=TrainingTrace)


def epoch_rng(seed: Optional[int], epoch: int, reseed: bool = True) -> np.random.Generator:
    """
    Sampling stream of one epoch. With ``reseed=False`` every epoch replays the same batches, negatives and dropout masks.
    """
    return np.random.default_rng([seed or 0, epoch if reseed else 0])


@dataclass
class EarlyStopping:
    """
    Tracks the validation AP, the best parameters seen so far and the number of consecutive evaluations without improvement.
    """

    patience: Optional[int]
    best_ap: float = -math.inf
    best_epoch: Optional[int] = None
    stagnant: int = 0
    snapshot: Optional[Dict[str, np.ndarray]] = None

    def update(self, epoch: int, ap: float, stacks: Dict[str, LayerStack]) -> bool:
        """
        Records an evaluation and returns whether training should stop.
        """
        if ap > self.best_ap:
            self.best_ap, self.best_epoch, self.stagnant = ap, epoch, 0
            self.snapshot = {_name: _stack.params.copy() for _name, _stack in stacks.items()}
        else:
            self.stagnant += 1
        return self.patience is not None and self.stagnant >= self.patience

    def restore(self, stacks: Dict[str, LayerStack]):
        if self.snapshot is not None:
            for name, stack in stacks.items():
                stack.assign(self.snapshot[name])


def run_epochs(
    model: Trainable,
    batches: Callable[[np.random.Generator], Iterable],
    n_epochs: int,
    optimizer: Adam,
    trace: TrainingTrace,
    seed: Optional[int] = None,
    phase: str = "",
    validate: Optional[Callable[[Trainable], float]] = None,
    eval_every: int = 1,
    patience: Optional[int] = None,
    reseed_every_epoch: bool = True,
    weight: Callable[[object], float] = lambda _batch: 1.0,
) -> TrainingTrace:
    """
    Runs ``n_epochs`` epochs of Adam updates and appends one :class:`EpochRecord` per epoch to ``trace``.

    :param batches: Maps the epoch's random generator to the epoch's batches.
    :param validate: Maps the model to a validation AP. When given, the parameters of the best evaluated epoch are restored at the end.
    :param weight: Weight of each batch in the epoch loss average.
    """
    stopper = EarlyStopping(patience)
    offset = len(trace.epochs)
    last = 0
    for epoch in range(1, n_epochs + 1):
        last = epoch
        rng = epoch_rng(seed, epoch, reseed_every_epoch)
        clip_events = optimizer.clip_events
        total, total_weight, components = 0.0, 0.0, {}
        for batch in batches(rng):
            loss, grads, batch_components = model.loss_and_gradients(
                batch, seed=int(rng.integers(2**31))
            )
            if not math.isfinite(loss):
                raise TrainingError(f"Non-finite {trace.kind} loss at epoch {epoch}.")
            optimizer.step(grads)
            w = weight(batch)
            total += w * loss
            total_weight += w
            for name, value in batch_components.items():
                components[name] = components.get(name, 0.0) + w * value
        if total_weight == 0:
            raise TrainingError(f"No {trace.kind} training batch in epoch {epoch}.")

        record = EpochRecord(
            epoch=len(trace.epochs) + 1,
            loss=total / total_weight,
            components={_k: _v / total_weight for _k, _v in components.items()},
            clip_events=optimizer.clip_events - clip_events,
            phase=phase,
        )
        stop = False
        if validate is not None and epoch % eval_every == 0:
            record.validation_ap = float(validate(model))
            stop = stopper.update(epoch, record.validation_ap, model.stacks)
        trace.epochs.append(record)
        logger.info(
            "%s%s epoch %d: loss %.6f%s, %d clip events%s",
            trace.kind,
            f" ({phase})" if phase else "",
            record.epoch,
            record.loss,
            "".join(f", {_k} {_v:.6f}" for _k, _v in record.components.items()),
            record.clip_events,
            "" if record.validation_ap is None else f", validation AP {record.validation_ap:.4f}",
        )
        if stop:
            trace.stopped_early = True
            logger.info(
                "Early stop after %d stagnant evaluations; best epoch %d.",
                stopper.stagnant,
                stopper.best_epoch,
            )
            break

    if stopper.best_epoch is not None:
        stopper.restore(model.stacks)
        trace.best_ap = stopper.best_ap
        best = stopper.best_epoch
    else:
        best = last
    if best:
        trace.phase_best[phase or trace.kind] = best
        trace.best_epoch = offset + best
    return trace
