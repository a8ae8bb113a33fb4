"""
Correspondence autoencoder RNN (CAE-RNN) for acoustic word embeddings.

An encoder of GRU layers reads a segment and a linear head maps its last hidden state to the embedding ``z``. A bridge projects ``z`` to the initial state of every decoder GRU layer, and the decoder receives ``z`` as its input at every step before a linear output layer. The AE-RNN phase reconstructs the input segment; the CAE-RNN phase, initialized from it, reconstructs the other member of a discovered pair.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import (
    ConfigurationError,
    DataError,
    DimensionMismatch,
    FormatError,
    InputError,
)
from ..features import FeatureArchive
from ..nn import Adam, LayerStack, backward, forward, load_checkpoint, save_checkpoint
from ..pairing import Segment, SegmentPair, check_segments
from ..serialization import serializable
from ..training import TrainingTrace, read_trace, run_epochs

logger = logging.getLogger(__name__)

KIND = "awe"
AE_PHASE = "ae-rnn"
CAE_PHASE = "cae-rnn"


@serializable
@dataclass(frozen=True)
class AweConfig:
    input_dim: int = 39
    hidden_dim: int = 512
    n_layers: int = 3
    embedding_dim: int = 130

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.n_layers, self.embedding_dim) < 1:
            raise ConfigurationError(f"Invalid AWE model configuration {self}.")


@serializable
@dataclass(frozen=True)
class AweSchedule:
    ae_epochs: int = 150
    cae_epochs: int = 25
    ae_lr: float = 1e-3
    cae_lr: float = 1e-4
    batch_size: int = 256
    eval_every: int = 1
    patience: Optional[int] = None
    clip_norm: Optional[float] = 5.0
    reseed_every_epoch: bool = True


@dataclass
class AweBatch:
    """
    Zero-padded inputs ``x`` of shape ``(B, Tx, d)`` and targets ``y`` of shape ``(B, Ty, d)`` with the true length of every row.
    """

    x: np.ndarray
    x_lengths: np.ndarray
    y: np.ndarray
    y_lengths: np.ndarray

    @classmethod
    def from_items(cls, items: Sequence[Tuple[np.ndarray, np.ndarray]]) -> "AweBatch":
        x, x_lengths = _pad([_x for _x, _ in items])
        y, y_lengths = _pad([_y for _, _y in items])
        return cls(x, x_lengths, y, y_lengths)

    def __len__(self):
        return len(self.x_lengths)


def _pad(sequences):
    lengths = np.array([len(_x) for _x in sequences], dtype=int)
    if len(lengths) == 0 or lengths.min() < 1:
        raise InputError("Cannot batch an empty segment.")
    out = np.zeros((len(sequences), lengths.max(), sequences[0].shape[-1]))
    for row, seq in enumerate(sequences):
        out[row, : len(seq)] = seq
    return out, lengths


class AweModel:
    kind = KIND

    def __init__(
        self,
        config: AweConfig = AweConfig(),
        seed: Optional[int] = 0,
        stacks: Optional[Dict[str, LayerStack]] = None,
    ):
        self.config = config
        expected = self.stack_descriptors()
        if stacks is None:
            seeds = np.random.SeedSequence(seed or 0).spawn(len(expected))
            stacks = {
                _name: LayerStack(_descriptor, seed=int(_seed.generate_state(1)[0]))
                for (_name, _descriptor), _seed in zip(expected.items(), seeds)
            }
        elif (
            received := {_name: _stack.descriptor for _name, _stack in stacks.items()}
        ) != expected:
            raise DimensionMismatch("awe stacks", expected, received)
        self.stacks: Dict[str, LayerStack] = dict(stacks)

    def stack_descriptors(self) -> Dict[str, str]:
        cfg = self.config
        H, E = cfg.hidden_dim, cfg.embedding_dim
        encoder = [f"gru({cfg.input_dim},{H})"] + [f"gru({H},{H})"] * (cfg.n_layers - 1)
        decoder = [f"gru({E},{H})"] + [f"gru({H},{H})"] * (cfg.n_layers - 1)
        return {
            "encoder": "; ".join(encoder),
            "head": f"affine({H},{E})",
            "bridge": f"affine({E},{cfg.n_layers * H})",
            "decoder": "; ".join(decoder + [f"affine({H},{cfg.input_dim})"]),
        }

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def check_dim(self, dim: int):
        if dim != self.input_dim:
            raise DimensionMismatch("awe model input", self.input_dim, dim)

    def embed(self, frames: np.ndarray) -> np.ndarray:
        """
        Embedding of one ``(T, d)`` segment. Only the encoder and the head take part.
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or len(frames) == 0:
            raise InputError(f"Cannot embed a segment of shape {frames.shape}.")
        self.check_dim(frames.shape[1])
        hidden = forward(self.stacks["encoder"], frames)[0]
        return forward(self.stacks["head"], hidden[-1])[0]

    def reconstruct(self, frames: np.ndarray, n_steps: int) -> np.ndarray:
        """
        Decoder output unrolled for ``n_steps`` frames from the embedding of ``frames``.
        """
        frames = np.asarray(frames, dtype=np.float64)
        batch = AweBatch.from_items([(frames, np.zeros((n_steps, self.input_dim)))])
        return self._forward(batch)[0][0, :n_steps]

    def _forward(self, batch: AweBatch):
        L, H = self.config.n_layers, self.config.hidden_dim
        rows = np.arange(len(batch))
        hidden, enc_cache = forward(self.stacks["encoder"], batch.x)
        z, head_cache = forward(self.stacks["head"], hidden[rows, batch.x_lengths - 1])
        states, bridge_cache = forward(self.stacks["bridge"], z)
        inputs = np.repeat(z[:, None], batch.y.shape[1], axis=1)
        output, dec_cache = forward(
            self.stacks["decoder"],
            inputs,
            initial_states=[states[:, _k * H : (_k + 1) * H] for _k in range(L)],
        )
        return output, (enc_cache, head_cache, bridge_cache, dec_cache, hidden.shape)

    def loss_and_gradients(self, batch: AweBatch, seed=None):
        """
        Mean over items of ``(1/|y|) sum_t ||y_t - y_hat_t||^2``. Padded target frames are masked out.
        """
        output, caches = self._forward(batch)
        enc_cache, head_cache, bridge_cache, dec_cache, hidden_shape = caches
        mask = np.arange(batch.y.shape[1])[None, :] < batch.y_lengths[:, None]
        diff = (output - batch.y) * mask[..., None]
        scale = 1.0 / (batch.y_lengths * len(batch))
        loss = float(np.sum(np.sum(diff * diff, axis=(1, 2)) * scale))
        d_output = 2.0 * diff * scale[:, None, None]

        decoder_grads, d_inputs, d_states = backward(self.stacks["decoder"], d_output, dec_cache)
        bridge_grads, d_z, _ = backward(
            self.stacks["bridge"], np.concatenate(d_states, axis=1), bridge_cache
        )
        d_z = d_z + d_inputs.sum(axis=1)
        head_grads, d_last, _ = backward(self.stacks["head"], d_z, head_cache)
        d_hidden = np.zeros(hidden_shape)
        d_hidden[np.arange(len(batch)), batch.x_lengths - 1] = d_last
        encoder_grads, _, _ = backward(self.stacks["encoder"], d_hidden, enc_cache)
        grads = {
            "encoder": encoder_grads,
            "head": head_grads,
            "bridge": bridge_grads,
            "decoder": decoder_grads,
        }
        return loss, grads, {}

    def save(self, path: Union[str, Path]):
        save_checkpoint(path, self.kind, self.config, self.stacks)


def load_awe_model(path: Union[str, Path]) -> AweModel:
    checkpoint = load_checkpoint(path)
    if checkpoint.kind != KIND:
        raise FormatError(path, "kind", f"expected `{KIND}`, found `{checkpoint.kind}`")
    return AweModel(checkpoint.config, stacks=checkpoint.stacks)


def awe_encode(model: AweModel, frames: np.ndarray) -> np.ndarray:
    return model.embed(frames)


def cae_rnn_loss(model: AweModel, x: np.ndarray, y: np.ndarray) -> float:
    """
    ``(1/|y|) sum_t ||y_t - y_hat_t||^2`` with the decoder unrolled for ``|y|`` steps from the embedding of ``x``.
    """
    x, y = (np.asarray(_a, dtype=np.float64) for _a in (x, y))
    model.check_dim(x.shape[-1])
    model.check_dim(y.shape[-1])
    return model.loss_and_gradients(AweBatch.from_items([(x, y)]))[0]


def ae_rnn_loss(model: AweModel, x: np.ndarray) -> float:
    return cae_rnn_loss(model, x, x)


# Training


def length_buckets(
    items: Sequence[Tuple[np.ndarray, np.ndarray]], batch_size: int
) -> Callable[[np.random.Generator], Iterable[AweBatch]]:
    """
    Batches of items with similar input lengths, in random order. Ties are broken randomly every epoch.
    """
    lengths = np.array([len(_x) for _x, _ in items])

    def batches(rng):
        order = np.lexsort((rng.random(len(items)), lengths))
        chunks = [order[_k : _k + batch_size] for _k in range(0, len(order), batch_size)]
        for index in rng.permutation(len(chunks)):
            yield AweBatch.from_items([items[_k] for _k in chunks[index]])

    return batches


def items_loss(
    model: AweModel, items: Sequence[Tuple[np.ndarray, np.ndarray]], batch_size: int = 256
) -> float:
    """
    Mean item loss over ``items`` without updating the model.
    """
    total = 0.0
    for start in range(0, len(items), batch_size):
        chunk = items[start : start + batch_size]
        total += len(chunk) * model.loss_and_gradients(AweBatch.from_items(chunk))[0]
    return total / len(items)


def training_items(
    archive: FeatureArchive, pairs: Sequence[SegmentPair]
) -> Tuple[List[Tuple[np.ndarray, np.ndarray]], List[Tuple[np.ndarray, np.ndarray]]]:
    """
    AE-RNN items (every distinct pair member with itself) and CAE-RNN items (both orders of every pair).
    """
    segments = sorted({_s for _p in pairs for _s in (_p.first, _p.second)})
    check_segments(segments, archive)
    frames: Dict[Segment, np.ndarray] = {
        _s: archive[_s.utterance_id].frames[_s.start : _s.end].astype(np.float64)
        for _s in segments
    }
    ae_items = [(frames[_s], frames[_s]) for _s in segments]
    cae_items = []
    for pair in pairs:
        cae_items.append((frames[pair.first], frames[pair.second]))
        cae_items.append((frames[pair.second], frames[pair.first]))
    return ae_items, cae_items


def train_awe(
    model: AweModel,
    archive: FeatureArchive,
    pairs: Sequence[SegmentPair],
    schedule: AweSchedule = AweSchedule(),
    seed: Optional[int] = None,
    validate: Optional[Callable[[AweModel], float]] = None,
) -> TrainingTrace:
    """
    Trains ``model`` in place: ``ae_epochs`` of AE-RNN over the distinct pair members, then ``cae_epochs`` of CAE-RNN over both orders of every pair, starting from the AE-RNN weights.

    :param validate: Maps the model to a validation AP. Each phase keeps the parameters of its best evaluated epoch.
    """
    if not pairs:
        raise DataError("AWE training needs at least one segment pair.")
    model.check_dim(archive.dim)
    ae_items, cae_items = training_items(archive, pairs)
    ae_seed, cae_seed = np.random.SeedSequence(seed or 0).generate_state(2)
    trace = TrainingTrace(KIND)
    logger.info(
        "Training AWE model on %d segments and %d pairs.", len(ae_items), len(pairs)
    )

    for phase, items, epochs, lr, phase_seed in [
        (AE_PHASE, ae_items, schedule.ae_epochs, schedule.ae_lr, ae_seed),
        (CAE_PHASE, cae_items, schedule.cae_epochs, schedule.cae_lr, cae_seed),
    ]:
        trace.start_losses[phase] = items_loss(model, items, schedule.batch_size)
        logger.info("%s phase starts from loss %.6f.", phase, trace.start_losses[phase])
        run_epochs(
            model,
            length_buckets(items, schedule.batch_size),
            epochs,
            Adam(model.stacks, lr=lr, clip_norm=schedule.clip_norm),
            trace,
            seed=int(phase_seed),
            phase=phase,
            validate=validate,
            eval_every=schedule.eval_every,
            patience=schedule.patience,
            reseed_every_epoch=schedule.reseed_every_epoch,
            weight=len,
        )
    return trace


def epochs_from(traces: Iterable[Union[TrainingTrace, str, Path]]) -> Dict[str, int]:
    """
    Epoch count of each phase averaged over the best epochs of earlier runs, for training without validation data.
    """
    traces = [_t if isinstance(_t, TrainingTrace) else read_trace(_t) for _t in traces]
    if not traces:
        raise ConfigurationError("Averaging epoch counts needs at least one training trace.")
    if bad := [_t.kind for _t in traces if _t.kind != KIND]:
        raise ConfigurationError(f"Expected `{KIND}` training traces, found {bad}.")
    return {
        _phase: int(round(np.mean([_t.phase_best.get(_phase, 0) for _t in traces])))
        for _phase in (AE_PHASE, CAE_PHASE)
    }


def fixed_schedule(schedule: AweSchedule, epochs: Dict[str, int]) -> AweSchedule:
    """
    ``schedule`` with the given phase epoch counts and early stopping disabled.
    """
    return replace(
        schedule, ae_epochs=epochs[AE_PHASE], cae_epochs=epochs[CAE_PHASE], patience=None
    )
