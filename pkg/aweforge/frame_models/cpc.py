"""
Contrastive predictive coding (CPC).

A frame encoder maps every frame ``x_t`` to ``z_t``, an LSTM summarizes ``z_0..z_t`` into the context ``c_t`` and one affine head per step ``k`` predicts ``z_{t+k}`` from ``c_t``. Candidates are scored with the log-bilinear function ``exp(z^T W_k c_t)`` and trained with the InfoNCE loss, where negatives are frames from other utterances of the same speaker.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from ..errors import ConfigurationError, DataError, TrainingError, UsageError
from ..features import FeatureArchive
from ..nn import Adam, backward, forward
from ..pairing import same_speaker_positions
from ..serialization import serializable
from ..training import TrainingTrace, run_epochs
from .base import FrameModel

logger = logging.getLogger(__name__)


@serializable
@dataclass(frozen=True)
class CpcConfig:
    input_dim: int = 39
    hidden_dim: int = 512
    n_hidden: int = 6
    dropout: float = 0.5
    dropout_after: int = 3
    """ Number of hidden blocks preceding the dropout layer. """
    z_dim: int = 64
    c_dim: int = 356
    steps: int = 3
    n_candidates: int = 32

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError(f"CPC needs at least one prediction step, received {self.steps}.")
        if self.n_candidates < 2:
            raise ConfigurationError(f"CPC needs at least two candidates, received {self.n_candidates}.")
        if not 0 <= self.dropout_after <= self.n_hidden:
            raise ConfigurationError(
                f"Dropout position {self.dropout_after} outside the {self.n_hidden} hidden blocks."
            )


@serializable
@dataclass(frozen=True)
class CpcSchedule:
    lr: float = 1e-5
    max_epochs: int = 15_000
    batch_speakers: int = 9
    pool_size: int = 128
    """ Frames drawn per batch and speaker, from which the negatives of that speaker are sampled. """
    eval_every: int = 10
    patience: int = 5
    clip_norm: Optional[float] = 5.0
    reseed_every_epoch: bool = True


@dataclass
class CpcBatch:
    """
    ``frames`` is ``(B, T, d)``; ``pool`` holds ``(B, P, d)`` same-speaker negative frames for every utterance.
    """

    frames: np.ndarray
    pool: np.ndarray


class CpcModel(FrameModel):
    kind = "cpc"

    def stack_descriptors(self):
        cfg = self.config
        blocks, in_dim = [], cfg.input_dim
        for index in range(cfg.n_hidden):
            blocks.append(f"affine({in_dim},{cfg.hidden_dim}); layer-norm({cfg.hidden_dim}); relu")
            if index + 1 == cfg.dropout_after and cfg.dropout > 0:
                blocks.append(f"dropout({cfg.dropout!r})")
            in_dim = cfg.hidden_dim
        blocks.append(f"affine({in_dim},{cfg.z_dim})")
        return {
            "encoder": "; ".join(blocks),
            "autoregressor": f"lstm({cfg.z_dim},{cfg.c_dim})",
            # The K heads are the column blocks of a single affine map.
            "predictors": f"affine({cfg.c_dim},{cfg.steps * cfg.z_dim})",
        }

    @property
    def output_dim(self):
        return self.config.c_dim

    def context(self, frames: np.ndarray):
        z, _ = forward(self.stacks["encoder"], frames)
        c, _ = forward(self.stacks["autoregressor"], z)
        return z, c

    def _encode(self, frames):
        return self.context(frames)[1]

    def prediction(self, c_t: np.ndarray, k: int) -> np.ndarray:
        if not 1 <= k <= self.config.steps:
            raise UsageError(f"Prediction step {k} not in [1, {self.config.steps}].")
        out, _ = forward(self.stacks["predictors"], c_t)
        z_dim = self.config.z_dim
        return out[..., (k - 1) * z_dim : k * z_dim]

    def loss_and_gradients(self, batch: CpcBatch, seed=None):
        cfg = self.config
        rng = np.random.default_rng(seed)
        encoder, autoregressor, predictors = (
            self.stacks[_x] for _x in ["encoder", "autoregressor", "predictors"]
        )
        seeds = rng.integers(2**31, size=2)
        z, enc_cache = forward(encoder, batch.frames, train_mode=True, seed=int(seeds[0]))
        z_pool, pool_cache = forward(encoder, batch.pool, train_mode=True, seed=int(seeds[1]))
        c, ar_cache = forward(autoregressor, z)
        predictions, pred_cache = forward(predictors, c)

        B, T, Z = z.shape
        valid_steps = [_k for _k in range(1, cfg.steps + 1) if T - _k > 0]
        if not valid_steps:
            raise UsageError(f"CPC batch of {T} frames is too short for any prediction step.")

        dz = np.zeros_like(z)
        dz_pool = np.zeros_like(z_pool)
        d_predictions = np.zeros_like(predictions)
        total, per_step = 0.0, {}
        b_index = np.arange(B)[:, None, None]
        for k in valid_steps:
            span = T - k
            prediction = predictions[:, :span, (k - 1) * Z : k * Z]
            positive = z[:, k:]
            negative_index = rng.integers(batch.pool.shape[1], size=(B, span, cfg.n_candidates - 1))
            negatives = z_pool[b_index, negative_index]

            # The positive candidate sits at index 0 of the logits.
            logits = np.concatenate(
                [
                    np.sum(positive * prediction, axis=-1, keepdims=True),
                    np.einsum("btnz,btz->btn", negatives, prediction),
                ],
                axis=-1,
            )
            losses = logsumexp(logits, axis=-1) - logits[..., 0]
            loss_k = float(np.mean(losses))
            if not np.isfinite(loss_k):
                raise TrainingError(f"Non-finite CPC score at step {k}.")
            per_step[f"step{k}"] = loss_k
            total += loss_k / len(valid_steps)

            d_logits = softmax(logits, axis=-1)
            d_logits[..., 0] -= 1.0
            d_logits /= B * span * len(valid_steps)
            d_predictions[:, :span, (k - 1) * Z : k * Z] = d_logits[..., :1] * positive + np.einsum(
                "btn,btnz->btz", d_logits[..., 1:], negatives
            )
            dz[:, k:] += d_logits[..., :1] * prediction
            np.add.at(
                dz_pool,
                (np.broadcast_to(b_index, negative_index.shape), negative_index),
                d_logits[..., 1:, None] * prediction[:, :, None, :],
            )

        grads = {}
        grads["predictors"], dc, _ = backward(predictors, d_predictions, pred_cache)
        grads["autoregressor"], dz_ar, _ = backward(autoregressor, dc, ar_cache)
        grads["encoder"], _, _ = backward(encoder, dz + dz_ar, enc_cache)
        pool_grads, _, _ = backward(encoder, dz_pool, pool_cache)
        grads["encoder"] += pool_grads
        return total, grads, per_step


def cpc_scores(
    model: CpcModel, frames: np.ndarray, t: int, k: int, candidates: np.ndarray
) -> np.ndarray:
    """
    Log-bilinear score ``exp(z_i^T g_k(c_t))`` of every candidate row ``z_i`` for the prediction ``k`` steps ahead of frame ``t``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    model.check_dim(frames.shape[-1])
    if not 0 <= t < len(frames) or t + k >= len(frames):
        raise UsageError(f"Frame {t} has no target {k} steps ahead in a {len(frames)}-frame utterance.")
    _, c = model.context(frames)
    return np.exp(np.asarray(candidates, dtype=np.float64) @ model.prediction(c[t], k))


def info_nce_loss(scores: Sequence[float], true_index: int) -> float:
    """
    ``-log(score_true / sum(scores))``, computed from the log scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)) or np.any(scores <= 0):
        raise TrainingError(f"Candidate scores must be finite and positive, received {scores}.")
    if not 0 <= true_index < len(scores):
        raise UsageError(f"True index {true_index} out of range for {len(scores)} candidates.")
    log_scores = np.log(scores)
    return float(logsumexp(log_scores) - log_scores[true_index])


def eligible_speakers(archive: FeatureArchive) -> Dict[str, List[str]]:
    """
    Utterance ids of every speaker with at least two utterances.
    """
    by_speaker = archive.by_speaker()
    excluded = sorted(_spk for _spk, _entries in by_speaker.items() if len(_entries) < 2)
    if excluded:
        logger.info("Speakers without negative-sampling support excluded from CPC batches: %s.", excluded)
    return {
        _spk: [_x.utterance_id for _x in _entries]
        for _spk, _entries in sorted(by_speaker.items())
        if len(_entries) >= 2
    }


def speaker_batches(
    speakers: Dict[str, List[str]], batch_speakers: int, rng: np.random.Generator
) -> List[List[str]]:
    """
    Groups utterance ids into batches of ``batch_speakers`` utterances with distinct speakers, always drawing from the speakers with the most remaining utterances.
    """
    queues = {_spk: list(rng.permutation(_ids)) for _spk, _ids in speakers.items()}
    batches = []
    while sum(len(_q) > 0 for _q in queues.values()) >= batch_speakers:
        names = list(queues)
        tie_break = rng.permutation(len(names))
        order = np.lexsort((tie_break, [-len(queues[_n]) for _n in names]))
        batches.append([str(queues[names[_k]].pop()) for _k in order[:batch_speakers]])
    return batches


def _cpc_batch(archive, utterance_ids, pool_size, rng) -> CpcBatch:
    length = min(archive[_u].n_frames for _u in utterance_ids)
    frames = np.stack([archive[_u].frames[:length] for _u in utterance_ids]).astype(np.float64)
    pool = np.stack(
        [
            [
                archive[_p.utterance_id].frames[_p.frame]
                for _p in same_speaker_positions(archive, _u, pool_size, rng)
            ]
            for _u in utterance_ids
        ]
    ).astype(np.float64)
    return CpcBatch(frames, pool)


def train_cpc(
    model: CpcModel,
    archive: FeatureArchive,
    schedule: CpcSchedule = CpcSchedule(),
    seed: Optional[int] = None,
    validate: Optional[Callable[[CpcModel], float]] = None,
) -> TrainingTrace:
    """
    Trains ``model`` in place. Each batch holds one utterance from each of ``batch_speakers`` speakers, truncated to the shortest of them.

    :param validate: Validation AP of the model, evaluated every ``schedule.eval_every`` epochs. Training stops after ``schedule.patience`` evaluations without improvement and restores the best evaluated parameters.
    """
    model.check_dim(archive.dim)
    speakers = eligible_speakers(archive)
    if len(speakers) < schedule.batch_speakers:
        raise DataError(
            f"CPC batches need {schedule.batch_speakers} speakers with at least two utterances, found {len(speakers)}."
        )

    steps = model.config.steps

    def batches(rng):
        for utterance_ids in speaker_batches(speakers, schedule.batch_speakers, rng):
            batch = _cpc_batch(archive, utterance_ids, schedule.pool_size, rng)
            if batch.frames.shape[1] < 2:
                message = f"Skipped a CPC batch truncated to {batch.frames.shape[1]} frame (steps={steps})."
                logger.warning(message)
                warnings.warn(message)
                continue
            yield batch

    optimizer = Adam(model.stacks, lr=schedule.lr, clip_norm=schedule.clip_norm)
    return run_epochs(
        model,
        batches,
        schedule.max_epochs,
        optimizer,
        TrainingTrace("cpc"),
        seed=seed,
        validate=validate,
        eval_every=schedule.eval_every,
        patience=schedule.patience,
        reseed_every_epoch=schedule.reseed_every_epoch,
    )
