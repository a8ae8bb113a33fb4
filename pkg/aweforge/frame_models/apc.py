"""
Autoregressive predictive coding (APC) with the past-slice auxiliary loss.

A stack of GRU layers encodes the utterance and a linear predictor maps the last layer's hidden state at ``t`` to frame ``t + shift``. The auxiliary loss picks random anchors ``a``, runs the encoder on the ``length``-frame slice starting ``history`` frames before each anchor, and scores the same predictor ``aux_shift`` frames ahead.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from ..errors import ConfigurationError
from ..features import FeatureArchive
from ..nn import Adam, backward, forward, mae_loss
from ..serialization import serializable
from ..training import TrainingTrace, run_epochs
from .base import FrameModel

logger = logging.getLogger(__name__)


@serializable
@dataclass(frozen=True)
class AuxConfig:
    anchors: int = 12
    history: int = 14
    length: int = 7
    shift: int = 5
    weight: float = 0.1

    def __post_init__(self):
        if self.history < self.length:
            raise ConfigurationError(
                f"Auxiliary slices of {self.length} frames cannot start {self.history} frames back."
            )
        if min(self.anchors, self.length, self.shift) < 1 or self.weight < 0:
            raise ConfigurationError(f"Invalid auxiliary loss configuration {self}.")

    @property
    def min_frames(self) -> int:
        """
        Utterances up to this length skip the auxiliary loss.
        """
        return self.history + self.length + self.shift


@serializable
@dataclass(frozen=True)
class ApcConfig:
    input_dim: int = 39
    hidden_dim: int = 512
    n_layers: int = 3
    shift: int = 2
    aux: AuxConfig = field(default_factory=AuxConfig)

    def __post_init__(self):
        if self.shift < 1:
            raise ConfigurationError(f"APC shift must be at least 1, received {self.shift}.")
        if self.n_layers < 1:
            raise ConfigurationError("APC needs at least one GRU layer.")


@serializable
@dataclass(frozen=True)
class ApcSchedule:
    lr: float = 1e-3
    epochs: int = 50
    batch_utterances: int = 32
    clip_norm: Optional[float] = 5.0
    reseed_every_epoch: bool = True


class ApcLoss(NamedTuple):
    total: float
    main: float
    aux: Optional[float]
    """ ``None`` when the utterance is too short for the auxiliary loss. """


def apc_objective(predictions: np.ndarray, frames: np.ndarray, shift: int):
    """
    Mean L1 distance between ``predictions[t]`` and ``frames[t + shift]`` over every ``t`` with a target, and its gradient with respect to ``predictions``.
    """
    span = frames.shape[-2] - shift
    loss, d_valid = mae_loss(predictions[..., :span, :], frames[..., shift:, :])
    d_predictions = np.zeros(predictions.shape)
    d_predictions[..., :span, :] = d_valid
    return loss, d_predictions


def apc_anchors(n_frames: int, aux: AuxConfig, rng: np.random.Generator) -> np.ndarray:
    """
    ``aux.anchors`` anchor positions drawn uniformly from ``[history, n_frames - length - shift]``.
    """
    return rng.integers(aux.history, n_frames - aux.length - aux.shift + 1, size=aux.anchors)


class ApcModel(FrameModel):
    kind = "apc"

    def stack_descriptors(self):
        cfg = self.config
        layers = [f"gru({cfg.input_dim},{cfg.hidden_dim})"] + [
            f"gru({cfg.hidden_dim},{cfg.hidden_dim})" for _ in range(cfg.n_layers - 1)
        ]
        return {
            "encoder": "; ".join(layers),
            "predictor": f"affine({cfg.hidden_dim},{cfg.input_dim})",
        }

    @property
    def output_dim(self):
        return self.config.hidden_dim

    def _encode(self, frames):
        return forward(self.stacks["encoder"], frames)[0]

    def predict(self, frames: np.ndarray) -> np.ndarray:
        """
        ``out[t]`` predicts ``frames[t + shift]``.
        """
        return forward(self.stacks["predictor"], self._encode(frames))[0]

    def _branch(self, frames, targets, shift):
        encoder, predictor = self.stacks["encoder"], self.stacks["predictor"]
        hidden, enc_cache = forward(encoder, frames)
        predictions, pred_cache = forward(predictor, hidden)
        loss, d_predictions = apc_objective(predictions, targets, shift)
        predictor_grads, d_hidden, _ = backward(predictor, d_predictions, pred_cache)
        encoder_grads, _, _ = backward(encoder, d_hidden, enc_cache)
        return loss, {"encoder": encoder_grads, "predictor": predictor_grads}

    def utterance_loss(self, frames: np.ndarray, rng: np.random.Generator):
        """
        Loss of a single utterance with at least ``shift + 1`` frames.
        """
        cfg = self.config
        main, grads = self._branch(frames, frames, cfg.shift)
        aux = None
        if len(frames) > cfg.aux.min_frames:
            starts = apc_anchors(len(frames), cfg.aux, rng) - cfg.aux.history
            window = np.arange(cfg.aux.length + cfg.aux.shift)
            # Every slice carries its aux targets as trailing frames; the encoder only sees the slice.
            extended = frames[starts[:, None] + window]
            aux, aux_grads = self._aux_branch(extended)
            for name in grads:
                grads[name] = grads[name] + cfg.aux.weight * aux_grads[name]
        total = main + (0.0 if aux is None else cfg.aux.weight * aux)
        return ApcLoss(total, main, aux), grads

    def _aux_branch(self, extended):
        aux = self.config.aux
        encoder, predictor = self.stacks["encoder"], self.stacks["predictor"]
        hidden, enc_cache = forward(encoder, extended[:, : aux.length])
        predictions, pred_cache = forward(predictor, hidden)
        loss, d_predictions = mae_loss(predictions, extended[:, aux.shift :])
        predictor_grads, d_hidden, _ = backward(predictor, d_predictions, pred_cache)
        encoder_grads, _, _ = backward(encoder, d_hidden, enc_cache)
        return loss, {"encoder": encoder_grads, "predictor": predictor_grads}

    def loss_and_gradients(self, batch: List[np.ndarray], seed=None):
        """
        Utterances are processed one at a time and their gradients averaged.
        """
        rng = np.random.default_rng(seed)
        usable = [_x for _x in batch if len(_x) > self.config.shift]
        if not usable:
            raise ConfigurationError(
                f"No utterance in the batch is longer than the APC shift {self.config.shift}."
            )
        grads = {_name: np.zeros(_stack.n_params) for _name, _stack in self.stacks.items()}
        total = main = aux = 0.0
        n_aux = 0
        for frames in usable:
            loss, utterance_grads = self.utterance_loss(np.asarray(frames, dtype=np.float64), rng)
            total += loss.total
            main += loss.main
            if loss.aux is not None:
                aux += loss.aux
                n_aux += 1
            for name in grads:
                grads[name] += utterance_grads[name] / len(usable)
        components = {"main": main / len(usable), "aux": aux / n_aux if n_aux else 0.0}
        return total / len(usable), grads, components


def apc_loss(model: ApcModel, frames: np.ndarray, seed: Optional[int] = None) -> ApcLoss:
    """
    Main, auxiliary and total loss of one utterance. Anchors are drawn from ``seed``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    model.check_dim(frames.shape[-1])
    if len(frames) <= model.config.shift:
        raise ConfigurationError(
            f"An utterance of {len(frames)} frames has no target {model.config.shift} frames ahead."
        )
    return model.utterance_loss(frames, np.random.default_rng(seed))[0]


def _usable_utterances(archive: FeatureArchive, shift: int) -> List[np.ndarray]:
    usable = []
    for entry in archive:
        if entry.n_frames <= shift:
            message = f"Skipped utterance `{entry.utterance_id}` of {entry.n_frames} frames (APC shift {shift})."
            logger.warning(message)
            warnings.warn(message)
            continue
        usable.append(entry.frames.astype(np.float64))
    return usable


def train_apc(
    model: ApcModel,
    archive: FeatureArchive,
    schedule: ApcSchedule = ApcSchedule(),
    seed: Optional[int] = None,
    validate=None,
) -> TrainingTrace:
    model.check_dim(archive.dim)
    utterances = _usable_utterances(archive, model.config.shift)
    if not utterances:
        raise ConfigurationError("No utterance is long enough for APC training.")

    def batches(rng):
        order = rng.permutation(len(utterances))
        for start in range(0, len(order), schedule.batch_utterances):
            yield [utterances[_k] for _k in order[start : start + schedule.batch_utterances]]

    optimizer = Adam(model.stacks, lr=schedule.lr, clip_norm=schedule.clip_norm)
    return run_epochs(
        model,
        batches,
        schedule.epochs,
        optimizer,
        TrainingTrace("apc"),
        seed=seed,
        validate=validate,
        reseed_every_epoch=schedule.reseed_every_epoch,
        weight=len,
    )
