"""
Feature sequences, feature archives (``*.farc``), delta coefficients and normalization.

Archive file layout (little endian)::

  b"FARC"
  u16   format version
  u32   entry count
  per entry:
    u16 + UTF-8   utterance id
    u16 + UTF-8   speaker id
    u32           frame count T
    u16           dimension d
    f32           frame period (seconds)
    f32 * T * d   frames, row major
"""

import logging
import re
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np

from ._binary import BinaryReader, BinaryWriter
from .errors import FormatError, InputError, UnknownUtterances

MAGIC = b"FARC"
VERSION = 1
DEFAULT_FRAME_PERIOD = 0.01
NORMALIZE_MODES = ("none", "global", "per-speaker")

logger = logging.getLogger(__name__)

_LEARNED_LABEL = re.compile(r"^learned\((\d+)\)$")


def default_dim_label(dim: int) -> str:
    return {13: "mfcc13", 39: "mfcc39"}.get(dim, f"learned({dim})")


def label_dim(dim_label: str) -> int:
    if dim_label in ("mfcc13", "mfcc39"):
        return int(dim_label[4:])
    if match := _LEARNED_LABEL.match(dim_label):
        return int(match.group(1))
    raise InputError(f"Invalid dimension label `{dim_label}`.")


@dataclass(eq=False)
class FeatureSequence:
    """
    One utterance (or segment) as a ``(T, d)`` matrix of frames. Frames are stored as 32-bit floats.
    """

    utterance_id: str
    speaker_id: str
    frames: np.ndarray
    frame_period: float = DEFAULT_FRAME_PERIOD
    dim_label: Optional[str] = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise InputError(
                f"Utterance `{self.utterance_id}` needs a (T>=1, d>=1) frame matrix, received shape {self.frames.shape}."
            )
        if not np.all(np.isfinite(self.frames)):
            raise InputError(f"Utterance `{self.utterance_id}` has non-finite frames.")
        self.frame_period = float(np.float32(self.frame_period))
        self.dim_label = self.dim_label or default_dim_label(self.dim)
        if label_dim(self.dim_label) != self.dim:
            raise InputError(
                f"Dimension label `{self.dim_label}` does not match dimension {self.dim} of `{self.utterance_id}`."
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def replace_frames(self, frames: np.ndarray, dim_label: Optional[str] = None):
        return FeatureSequence(
            self.utterance_id, self.speaker_id, frames, self.frame_period, dim_label
        )

    def __eq__(self, other):
        return (
            isinstance(other, FeatureSequence)
            and (self.utterance_id, self.speaker_id, self.frame_period, self.dim_label)
            == (other.utterance_id, other.speaker_id, other.frame_period, other.dim_label)
            and np.array_equal(self.frames, other.frames)
        )


class FeatureArchive:
    """
    Ordered collection of :class:`FeatureSequence` entries with unique utterance ids and a common dimension.
    """

    def __init__(self, entries: Iterable[FeatureSequence] = ()):
        self._entries: Dict[str, FeatureSequence] = {}
        for entry in entries:
            self.add(entry)

    def add(self, entry: FeatureSequence):
        if entry.utterance_id in self._entries:
            raise InputError(f"Duplicate utterance id `{entry.utterance_id}`.")
        if self._entries and entry.dim != self.dim:
            raise InputError(
                f"Utterance `{entry.utterance_id}` has dimension {entry.dim}, the archive has {self.dim}."
            )
        self._entries[entry.utterance_id] = entry

    @property
    def entries(self) -> List[FeatureSequence]:
        return list(self._entries.values())

    @property
    def utterance_ids(self) -> List[str]:
        return list(self._entries)

    @property
    def dim(self) -> Optional[int]:
        return next(iter(self._entries.values())).dim if self._entries else None

    def __len__(self):
        return len(self._entries)

    def __iter__(self) -> Iterator[FeatureSequence]:
        return iter(self._entries.values())

    def __contains__(self, utterance_id):
        return utterance_id in self._entries

    def __getitem__(self, utterance_id: str) -> FeatureSequence:
        try:
            return self._entries[utterance_id]
        except KeyError:
            raise UnknownUtterances([utterance_id])

    def __eq__(self, other):
        return isinstance(other, FeatureArchive) and self.entries == other.entries

    def by_speaker(self) -> Dict[str, List[FeatureSequence]]:
        out = defaultdict(list)
        for entry in self:
            out[entry.speaker_id].append(entry)
        return dict(out)

    def subset(self, utterance_ids: Iterable[str]) -> "FeatureArchive":
        utterance_ids = list(utterance_ids)
        if missing := [_x for _x in utterance_ids if _x not in self._entries]:
            raise UnknownUtterances(missing)
        return FeatureArchive(self._entries[_x] for _x in utterance_ids)

    def map(self, fxn) -> "FeatureArchive":
        return FeatureArchive(fxn(_x) for _x in self)

    def all_frames(self) -> np.ndarray:
        return np.concatenate([_x.frames for _x in self]).astype(np.float64)

    @property
    def stats(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Per-dimension mean and variance over every frame.
        """
        frames = self.all_frames()
        return frames.mean(axis=0), frames.var(axis=0)


def write_archive(archive: FeatureArchive, path: Union[str, Path]):
    with open(path, "wb") as fo:
        writer = BinaryWriter(fo)
        writer.magic(MAGIC)
        writer.scalar("u16", VERSION)
        writer.scalar("u32", len(archive))
        for entry in archive:
            writer.text(entry.utterance_id)
            writer.text(entry.speaker_id)
            writer.scalar("u32", entry.n_frames)
            writer.scalar("u16", entry.dim)
            writer.scalar("f32", entry.frame_period)
            writer.floats(entry.frames)
    logger.debug("Wrote %d utterances to %s.", len(archive), path)


def read_archive(path: Union[str, Path]) -> FeatureArchive:
    with open(path, "rb") as fo:
        reader = BinaryReader(fo, path)
        reader.magic(MAGIC)
        reader.version(VERSION)
        count = reader.scalar("u32", "entry count")
        entries = []
        for index in range(count):
            utterance_id = reader.text(f"entry {index} utterance id")
            speaker_id = reader.text(f"entry {index} speaker id")
            n_frames = reader.scalar("u32", f"entry {index} frame count")
            dim = reader.scalar("u16", f"entry {index} dimension")
            period = reader.scalar("f32", f"entry {index} frame period")
            frames = reader.floats(n_frames * dim, f"entry {index} frames")
            entries.append(
                FeatureSequence(
                    utterance_id, speaker_id, frames.reshape(n_frames, dim), period
                )
            )
        if not reader.at_end():
            raise FormatError(path, "entries", "trailing bytes")
    return FeatureArchive(entries)


def regression_deltas(frames: np.ndarray, window: int = 2) -> np.ndarray:
    """
    Regression deltas ``sum_n n (c[t+n] - c[t-n]) / (2 sum_n n^2)`` over ``n = 1..window``, replicating edge frames. A ramp ``c[t] = t`` has delta 1 away from the edges.
    """
    n_frames = len(frames)
    padded = np.pad(frames, ((window, window), (0, 0)), mode="edge")
    weights = np.arange(1, window + 1)
    numerator = sum(
        _n
        * (
            padded[window + _n : window + _n + n_frames]
            - padded[window - _n : window - _n + n_frames]
        )
        for _n in weights
    )
    return numerator / (2.0 * np.sum(weights**2))


def add_deltas(seq: FeatureSequence, window: int = 2) -> FeatureSequence:
    """
    Appends velocity and acceleration coefficients, producing ``[static, velocity, acceleration]`` frames of dimension ``3d``.
    """
    if seq.dim_label == "mfcc39":
        raise InputError(f"Utterance `{seq.utterance_id}` already has delta coefficients.")
    if seq.n_frames < 2:
        raise InputError(
            f"Utterance `{seq.utterance_id}` has {seq.n_frames} frame(s), deltas need at least 2."
        )
    static = seq.frames.astype(np.float64)
    velocity = regression_deltas(static, window)
    acceleration = regression_deltas(velocity, window)
    out = np.concatenate(
        [seq.frames, velocity.astype(np.float32), acceleration.astype(np.float32)],
        axis=1,
    )
    return seq.replace_frames(
        out, "mfcc39" if seq.dim_label == "mfcc13" else f"learned({3 * seq.dim})"
    )


def _standardizer(frames: np.ndarray, group: str):
    if len(frames) < 2:
        raise InputError(
            f"Cannot compute statistics for {group} from {len(frames)} frame(s)."
        )
    mean, var = frames.mean(axis=0), frames.var(axis=0)
    if np.any(zero := var < 1e-12):
        message = f"Zero-variance dimension(s) {np.flatnonzero(zero).tolist()} in {group}; using variance 1."
        logger.warning(message)
        warnings.warn(message)
        var = np.where(zero, 1.0, var)
    return mean, np.sqrt(var)


def normalize(
    archive: FeatureArchive, mode: str = "per-speaker", reference: Optional[FeatureArchive] = None
) -> FeatureArchive:
    """
    Standardizes every dimension to zero mean and unit variance.

    :param mode: ``'none'``, ``'global'`` or ``'per-speaker'``.
    :param reference: Archive the statistics are computed on, e.g., the training portion. Defaults to ``archive``. In per-speaker mode, speakers absent from the reference use their own statistics.
    """
    if mode not in NORMALIZE_MODES:
        raise InputError(f"Invalid normalization mode `{mode}`, expected one of {NORMALIZE_MODES}.")
    if mode == "none":
        return archive
    reference = reference if reference is not None else archive

    if mode == "global":
        mean, std = _standardizer(reference.all_frames(), "the archive")
        stats = defaultdict(lambda: (mean, std))
    else:
        reference_groups = reference.by_speaker()
        stats = {}
        for speaker, entries in archive.by_speaker().items():
            if speaker not in reference_groups:
                logger.info(
                    "Speaker `%s` is absent from the reference archive, using its own statistics.",
                    speaker,
                )
            group = reference_groups.get(speaker, entries)
            stats[speaker] = _standardizer(
                np.concatenate([_x.frames for _x in group]).astype(np.float64),
                f"speaker `{speaker}`",
            )

    def apply(entry: FeatureSequence):
        mean, std = stats[entry.speaker_id]
        return entry.replace_frames((entry.frames - mean) / std, entry.dim_label)

    return archive.map(apply)
