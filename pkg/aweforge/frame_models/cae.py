"""
Frame-level autoencoder (AE) and correspondence autoencoder (CAE).

Both share one architecture: a feed-forward encoder to a linear latent layer and a mirrored decoder. The AE reconstructs its input frame; the CAE, initialized from a trained AE, reconstructs the DTW-aligned frame ``y`` of a discovered pair from ``x``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DataError, DimensionMismatch
from ..features import FeatureArchive
from ..nn import Adam, backward, forward, mse_loss
from ..pairing import FramePairs
from ..serialization import serializable
from ..training import TrainingTrace, run_epochs
from .base import FrameModel

logger = logging.getLogger(__name__)


@serializable
@dataclass(frozen=True)
class FrameCaeConfig:
    input_dim: int = 39
    hidden_dim: int = 100
    n_layers: int = 6
    latent_dim: int = 39


@serializable
@dataclass(frozen=True)
class FrameCaeSchedule:
    ae_epochs: int = 5
    cae_epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 256
    clip_norm: Optional[float] = 5.0
    reseed_every_epoch: bool = True


def _mlp(in_dim, hidden_dim, n_layers, out_dim):
    blocks = []
    for _ in range(n_layers):
        blocks.append(f"affine({in_dim},{hidden_dim}); relu")
        in_dim = hidden_dim
    blocks.append(f"affine({in_dim},{out_dim})")
    return "; ".join(blocks)


class FrameCaeModel(FrameModel):
    kind = "fcae"

    def stack_descriptors(self):
        cfg = self.config
        return {
            "encoder": _mlp(cfg.input_dim, cfg.hidden_dim, cfg.n_layers, cfg.latent_dim),
            "decoder": _mlp(cfg.latent_dim, cfg.hidden_dim, cfg.n_layers, cfg.input_dim),
        }

    @property
    def output_dim(self):
        return self.config.latent_dim

    def _encode(self, frames):
        return forward(self.stacks["encoder"], frames)[0]

    def reconstruct(self, frames: np.ndarray) -> np.ndarray:
        return forward(self.stacks["decoder"], self._encode(frames))[0]

    def loss_and_gradients(self, batch: Tuple[np.ndarray, np.ndarray], seed=None):
        """
        ``batch`` is ``(x, y)``; the AE phase passes ``y = x``.
        """
        x, y = batch
        encoder, decoder = self.stacks["encoder"], self.stacks["decoder"]
        latent, enc_cache = forward(encoder, x)
        output, dec_cache = forward(decoder, latent)
        loss, d_output = mse_loss(output, y)
        decoder_grads, d_latent, _ = backward(decoder, d_output, dec_cache)
        encoder_grads, _, _ = backward(encoder, d_latent, enc_cache)
        return loss, {"encoder": encoder_grads, "decoder": decoder_grads}, {}


def frame_ae_loss(model: FrameCaeModel, frames: np.ndarray) -> float:
    """
    Mean over frames of the squared L2 reconstruction error.
    """
    frames = np.asarray(frames, dtype=np.float64)
    model.check_dim(frames.shape[-1])
    return mse_loss(model.reconstruct(frames), frames)[0]


def frame_cae_loss(model: FrameCaeModel, pairs: FramePairs) -> float:
    """
    Mean over pairs of the squared L2 error between ``y`` and the reconstruction of ``x``.
    """
    model.check_dim(pairs.dim)
    x, y = (_a.astype(np.float64) for _a in (pairs.x, pairs.y))
    return mse_loss(model.reconstruct(x), y)[0]


def _minibatches(x, y, batch_size):
    def batches(rng):
        order = rng.permutation(len(x))
        for start in range(0, len(order), batch_size):
            index = order[start : start + batch_size]
            yield x[index], y[index]

    return batches


def train_frame_cae(
    model: FrameCaeModel,
    archive: FeatureArchive,
    frame_pairs: FramePairs,
    schedule: FrameCaeSchedule = FrameCaeSchedule(),
    seed: Optional[int] = None,
) -> TrainingTrace:
    """
    Trains ``model`` in place: ``ae_epochs`` of autoencoding over every frame of ``archive``, then ``cae_epochs`` over ``frame_pairs`` starting from the AE weights.
    """
    model.check_dim(archive.dim)
    if len(frame_pairs) == 0:
        raise DataError("The frame CAE needs at least one frame pair.")
    if frame_pairs.dim != model.input_dim:
        raise DimensionMismatch("frame pairs", model.input_dim, frame_pairs.dim)

    ae_seed, cae_seed = np.random.SeedSequence(seed or 0).generate_state(2)
    trace = TrainingTrace("fcae")
    frames = archive.all_frames()
    optimizer = Adam(model.stacks, lr=schedule.lr, clip_norm=schedule.clip_norm)
    trace.start_losses["ae"] = frame_ae_loss(model, frames)
    run_epochs(
        model,
        _minibatches(frames, frames, schedule.batch_size),
        schedule.ae_epochs,
        optimizer,
        trace,
        seed=int(ae_seed),
        phase="ae",
        reseed_every_epoch=schedule.reseed_every_epoch,
        weight=lambda _batch: len(_batch[0]),
    )

    x, y = (_a.astype(np.float64) for _a in (frame_pairs.x, frame_pairs.y))
    optimizer = Adam(model.stacks, lr=schedule.lr, clip_norm=schedule.clip_norm)
    trace.start_losses["cae"] = frame_cae_loss(model, frame_pairs)
    logger.info("CAE phase starts from loss %.6f.", trace.start_losses["cae"])
    return run_epochs(
        model,
        _minibatches(x, y, schedule.batch_size),
        schedule.cae_epochs,
        optimizer,
        trace,
        seed=int(cae_seed),
        phase="cae",
        reseed_every_epoch=schedule.reseed_every_epoch,
        weight=lambda _batch: len(_batch[0]),
    )
