"""
Segment embeddings, the downsampling baseline and the embedding file.

Embedding file (``*.awem``, little endian)::

  b"AWEM"
  u16   format version
  u32   entry count
  u16   embedding dimension
  per entry: utterance id (u16-prefixed UTF-8), u32 start, u32 end, word label, speaker id, then the f32 vector
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .._binary import BinaryReader, BinaryWriter
from ..errors import ConfigurationError, FormatError, InputError
from ..features import FeatureArchive
from ..pairing import LabeledSegment, Segment, check_segments
from .model import AweModel

MAGIC = b"AWEM"
VERSION = 1

logger = logging.getLogger(__name__)


@dataclass
class Embedding:
    vector: np.ndarray
    segment: Segment
    word: str = ""
    speaker: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector)
        if self.vector.ndim != 1 or not np.all(np.isfinite(self.vector)):
            raise InputError(
                f"Invalid embedding of shape {self.vector.shape} for {self.segment}."
            )

    @property
    def dim(self) -> int:
        return len(self.vector)

    def __eq__(self, other):
        return (
            isinstance(other, Embedding)
            and (self.segment, self.word, self.speaker)
            == (other.segment, other.word, other.speaker)
            and np.array_equal(self.vector, other.vector)
        )


def downsample_embed(frames: np.ndarray, n_keep: int = 10) -> np.ndarray:
    """
    Concatenation of ``n_keep`` frames linearly interpolated at the equally spaced positions ``i (T - 1) / (n_keep - 1)``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise InputError(f"Cannot downsample a segment of shape {frames.shape}.")
    if n_keep < 2:
        raise ConfigurationError(f"Downsampling keeps at least 2 frames, received {n_keep}.")
    positions = np.arange(n_keep) * (len(frames) - 1) / (n_keep - 1)
    lower = np.floor(positions).astype(int)
    upper = np.minimum(lower + 1, len(frames) - 1)
    weight = (positions - lower)[:, None]
    return ((1.0 - weight) * frames[lower] + weight * frames[upper]).ravel()


def _labeled(segments: Sequence[Union[Segment, LabeledSegment]]) -> List[LabeledSegment]:
    return [_s if isinstance(_s, LabeledSegment) else LabeledSegment(_s) for _s in segments]


def _embed_all(archive, segments, embed) -> List[Embedding]:
    segments = _labeled(segments)
    check_segments([_s.segment for _s in segments], archive)
    out = []
    for item in segments:
        segment = item.segment
        frames = archive[segment.utterance_id].frames[segment.start : segment.end]
        speaker = item.speaker or archive[segment.utterance_id].speaker_id
        out.append(Embedding(embed(frames), segment, item.word, speaker))
    return out


def embed_segments(
    model: AweModel,
    archive: FeatureArchive,
    segments: Sequence[Union[Segment, LabeledSegment]],
) -> List[Embedding]:
    """
    Embeds every segment with ``model``. Segments without a speaker take the speaker of their utterance.
    """
    model.check_dim(archive.dim)
    logger.info("Embedding %d segments with the AWE model.", len(segments))
    return _embed_all(archive, segments, model.embed)


def downsample_segments(
    archive: FeatureArchive,
    segments: Sequence[Union[Segment, LabeledSegment]],
    n_keep: int = 10,
) -> List[Embedding]:
    return _embed_all(archive, segments, lambda _x: downsample_embed(_x, n_keep))


def write_embeddings(embeddings: Sequence[Embedding], path: Union[str, Path]):
    dim = embeddings[0].dim if embeddings else 0
    if bad := [str(_x.segment) for _x in embeddings if _x.dim != dim]:
        raise InputError(f"Embeddings of {bad} do not have dimension {dim}.")
    with open(path, "wb") as fo:
        writer = BinaryWriter(fo)
        writer.magic(MAGIC)
        writer.scalar("u16", VERSION)
        writer.scalar("u32", len(embeddings))
        writer.scalar("u16", dim)
        for embedding in embeddings:
            writer.text(embedding.segment.utterance_id)
            writer.scalar("u32", embedding.segment.start)
            writer.scalar("u32", embedding.segment.end)
            writer.text(embedding.word)
            writer.text(embedding.speaker)
            writer.floats(embedding.vector)
    logger.debug("Wrote %d embeddings to %s.", len(embeddings), path)


def read_embeddings(path: Union[str, Path]) -> List[Embedding]:
    with open(path, "rb") as fo:
        reader = BinaryReader(fo, path)
        reader.magic(MAGIC)
        reader.version(VERSION)
        count = reader.scalar("u32", "entry count")
        dim = reader.scalar("u16", "dimension")
        embeddings = []
        for index in range(count):
            utterance_id = reader.text(f"entry {index} utterance id")
            start = reader.scalar("u32", f"entry {index} start")
            end = reader.scalar("u32", f"entry {index} end")
            word = reader.text(f"entry {index} word")
            speaker = reader.text(f"entry {index} speaker")
            vector = reader.floats(dim, f"entry {index} vector")
            try:
                segment = Segment(utterance_id, start, end)
                embeddings.append(Embedding(vector, segment, word, speaker))
            except InputError as err:
                raise FormatError(path, f"entry {index}", str(err))
        if not reader.at_end():
            raise FormatError(path, "entries", "trailing bytes")
    return embeddings


def embedding_matrix(embeddings: Sequence[Embedding], dim: Optional[int] = None) -> np.ndarray:
    """
    ``(N, dim)`` matrix of the embedding vectors.
    """
    if not embeddings:
        return np.zeros((0, dim or 0))
    return np.stack([_x.vector for _x in embeddings]).astype(np.float64)
