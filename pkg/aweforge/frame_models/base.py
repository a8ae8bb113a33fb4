import abc
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Type, Union

import numpy as np

from ..errors import DimensionMismatch, FormatError
from ..features import FeatureArchive, FeatureSequence
from ..nn import LayerStack, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

_MODEL_KINDS: Dict[str, Type["FrameModel"]] = {}


class FrameModel(abc.ABC):
    """
    Base of the self-supervised frame-level models. A model owns named :class:`LayerStack` objects built from its config and maps a ``(T, d)`` utterance to ``(T, out_dim)`` learned representations.
    """

    kind: str

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if kind := getattr(cls, "kind", None):
            _MODEL_KINDS[kind] = cls

    def __init__(self, config, seed: Optional[int] = 0, stacks: Optional[Dict[str, LayerStack]] = None):
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
            raise DimensionMismatch(f"{self.kind} stacks", expected, received)
        self.stacks: Dict[str, LayerStack] = dict(stacks)

    @abc.abstractmethod
    def stack_descriptors(self) -> Dict[str, str]:
        """
        Layer descriptor of every stack, in checkpoint order.
        """

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    @abc.abstractmethod
    def output_dim(self) -> int:
        pass

    @abc.abstractmethod
    def _encode(self, frames: np.ndarray) -> np.ndarray:
        pass

    @abc.abstractmethod
    def loss_and_gradients(
        self, batch, seed: Optional[int] = None
    ) -> Tuple[float, Dict[str, np.ndarray], Dict[str, float]]:
        """
        Loss of one training batch, its gradient with respect to every stack and the named loss components.
        """

    def check_dim(self, dim: int):
        if dim != self.input_dim:
            raise DimensionMismatch(f"{self.kind} model input", self.input_dim, dim)

    def encode(self, seq: FeatureSequence) -> FeatureSequence:
        self.check_dim(seq.dim)
        out = self._encode(seq.frames.astype(np.float64))
        return seq.replace_frames(out, dim_label=f"learned({self.output_dim})")

    def save(self, path: Union[str, Path]):
        save_checkpoint(path, self.kind, self.config, self.stacks)


def load_frame_model(path: Union[str, Path]) -> FrameModel:
    checkpoint = load_checkpoint(path)
    if (cls := _MODEL_KINDS.get(checkpoint.kind)) is None:
        raise FormatError(
            path, "kind", f"`{checkpoint.kind}` is not a frame model kind ({', '.join(_MODEL_KINDS)})"
        )
    return cls(checkpoint.config, stacks=checkpoint.stacks)


def encode_frames(model: FrameModel, seq: FeatureSequence) -> FeatureSequence:
    """
    Learned representation of every frame of ``seq``. Dropout is disabled and the output has as many frames as the input.
    """
    return model.encode(seq)


def encode_archive(model: FrameModel, archive: FeatureArchive) -> FeatureArchive:
    model.check_dim(archive.dim)
    logger.info("Encoding %d utterances with the %s model.", len(archive), model.kind)
    return archive.map(model.encode)
