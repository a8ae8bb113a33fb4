"""
Segment pairs, DTW alignment, frame-pair extraction and same-speaker negative sampling.

Text formats (``#`` starts a comment)::

  pairs.txt      utt1 start1 end1 utt2 start2 end2
  segments.txt   utterance_id start end [word [speaker]]

Frame spans are 0-based and end-exclusive.

Frame pair file (``*.fprs``, little endian): ``b"FPRS"``, u16 version, u32 count, u16 dimension, then ``count`` rows of ``x`` followed by the same number of rows of ``y``, all f32.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from ._binary import BinaryReader, BinaryWriter
from .errors import FormatError, InputError, SamplingError, UnknownUtterances
from .features import FeatureArchive

MAGIC = b"FPRS"
VERSION = 1
METRICS = ("euclidean", "cosine")

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Segment:
    utterance_id: str
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise InputError(
                f"Invalid span [{self.start}, {self.end}) in utterance `{self.utterance_id}`."
            )

    @property
    def length(self) -> int:
        return self.end - self.start

    def __str__(self):
        return f"{self.utterance_id} {self.start} {self.end}"


@dataclass(frozen=True)
class SegmentPair:
    first: Segment
    second: Segment

    def key(self) -> Tuple[Segment, Segment]:
        """
        Order-independent identity of the pair.
        """
        return tuple(sorted((self.first, self.second)))

    def swapped(self) -> "SegmentPair":
        return SegmentPair(self.second, self.first)


@dataclass(frozen=True)
class LabeledSegment:
    segment: Segment
    word: str = ""
    speaker: str = ""


class FramePair(NamedTuple):
    x: np.ndarray
    y: np.ndarray


@dataclass
class FramePairs:
    """
    Frame pairs stored as two aligned ``(N, d)`` matrices.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float32)
        self.y = np.ascontiguousarray(self.y, dtype=np.float32)
        if self.x.shape != self.y.shape or self.x.ndim != 2:
            raise InputError(
                f"Frame pair matrices must have equal (N, d) shapes, received {self.x.shape} and {self.y.shape}."
            )

    @classmethod
    def empty(cls, dim: int) -> "FramePairs":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)))

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return len(self.x)

    def __iter__(self) -> Iterator[FramePair]:
        return (FramePair(_x, _y) for _x, _y in zip(self.x, self.y))


@dataclass(frozen=True)
class AlignmentPath:
    path: Tuple[Tuple[int, int], ...]
    cost: float

    def __len__(self):
        return len(self.path)

    @property
    def normalized_cost(self) -> float:
        return self.cost / len(self.path)


# Segment and pair IO


def _data_lines(path):
    with open(path, "r") as fo:
        for line_number, line in enumerate(fo, start=1):
            if content := line.split("#", 1)[0].strip():
                yield line_number, content.split()


def _parse_segment(path, line_number, fields) -> Segment:
    try:
        return Segment(fields[0], int(fields[1]), int(fields[2]))
    except (ValueError, InputError) as err:
        raise FormatError(path, f"line {line_number}", str(err))


def read_pairs(path: Union[str, Path]) -> List[SegmentPair]:
    pairs = []
    for line_number, fields in _data_lines(path):
        if len(fields) != 6:
            raise FormatError(
                path, f"line {line_number}", f"expected 6 fields, found {len(fields)}"
            )
        pairs.append(
            SegmentPair(
                _parse_segment(path, line_number, fields[:3]),
                _parse_segment(path, line_number, fields[3:]),
            )
        )
    return pairs


def write_pairs(pairs: Sequence[SegmentPair], path: Union[str, Path]):
    with open(path, "w") as fo:
        fo.write("# utt1 start1 end1 utt2 start2 end2\n")
        for pair in pairs:
            fo.write(f"{pair.first} {pair.second}\n")


def read_segments(path: Union[str, Path]) -> List[LabeledSegment]:
    segments = []
    for line_number, fields in _data_lines(path):
        if not 3 <= len(fields) <= 5:
            raise FormatError(
                path, f"line {line_number}", f"expected 3 to 5 fields, found {len(fields)}"
            )
        segments.append(
            LabeledSegment(_parse_segment(path, line_number, fields), *fields[3:])
        )
    return segments


def write_segments(segments: Sequence[LabeledSegment], path: Union[str, Path]):
    with open(path, "w") as fo:
        fo.write("# utterance_id start end word speaker\n")
        for item in segments:
            fo.write(
                " ".join([str(item.segment)] + [_x for _x in (item.word, item.speaker) if _x])
                + "\n"
            )


def check_segments(segments: Sequence[Segment], archive: FeatureArchive):
    """
    Raises :class:`UnknownUtterances` listing every missing utterance, or an :class:`InputError` for the first span exceeding its utterance.
    """
    if missing := {_x.utterance_id for _x in segments if _x.utterance_id not in archive}:
        raise UnknownUtterances(missing)
    for segment in segments:
        if segment.end > (length := archive[segment.utterance_id].n_frames):
            raise InputError(
                f"Segment {segment} exceeds the {length} frames of its utterance."
            )


def segment_frames(archive: FeatureArchive, segment: Segment) -> np.ndarray:
    check_segments([segment], archive)
    return archive[segment.utterance_id].frames[segment.start : segment.end]


# DTW


def local_costs(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """
    Pairwise frame distances. Cosine distances involving a zero vector are set to 1.
    """
    if metric not in METRICS:
        raise InputError(f"Invalid metric `{metric}`, expected one of {METRICS}.")
    costs = cdist(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), metric)
    if metric == "cosine":
        costs = np.where(np.isnan(costs), 1.0, np.maximum(costs, 0.0))
    return costs


@njit
def _accumulate(costs):
    n_rows, n_cols = costs.shape
    acc = np.empty((n_rows, n_cols))
    for i in range(n_rows):
        for j in range(n_cols):
            if i == 0 and j == 0:
                best = 0.0
            elif i == 0:
                best = acc[i, j - 1]
            elif j == 0:
                best = acc[i - 1, j]
            else:
                best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            acc[i, j] = costs[i, j] + best
    return acc


@njit
def _backtrace(acc):
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # Ties prefer the diagonal, then the (1, 0) step.
            diagonal = acc[i - 1, j - 1]
            vertical = acc[i - 1, j]
            horizontal = acc[i, j - 1]
            if diagonal <= vertical and diagonal <= horizontal:
                i, j = i - 1, j - 1
            elif vertical <= horizontal:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path


def dtw_align(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> AlignmentPath:
    """
    Minimum-cost monotone alignment with steps (1, 0), (0, 1) and (1, 1) and no band constraint. The cost is the unnormalized sum of local distances along the path.
    """
    a, b = (np.asarray(_x).reshape(len(_x), -1) for _x in (a, b))
    if len(a) == 0 or len(b) == 0:
        raise InputError("Cannot align an empty sequence.")
    if a.shape[1] != b.shape[1]:
        raise InputError(
            f"Cannot align sequences of dimensions {a.shape[1]} and {b.shape[1]}."
        )
    acc = _accumulate(local_costs(a, b, metric))
    return AlignmentPath(
        tuple((int(_i), int(_j)) for _i, _j in _backtrace(acc)), float(acc[-1, -1])
    )


def extract_frame_pairs(
    pairs: Sequence[SegmentPair], archive: FeatureArchive, metric: str = "euclidean"
) -> FramePairs:
    """
    Aligns each segment pair and emits one frame pair per path step in each direction (x to y and y to x).
    """
    check_segments([_s for _p in pairs for _s in (_p.first, _p.second)], archive)
    xs, ys = [], []
    for pair in pairs:
        a = segment_frames(archive, pair.first)
        b = segment_frames(archive, pair.second)
        rows, cols = np.array(dtw_align(a, b, metric).path).T
        xs.extend([a[rows], b[cols]])
        ys.extend([b[cols], a[rows]])
    if not xs:
        return FramePairs.empty(archive.dim or 0)
    logger.info(
        "Extracted %d frame pairs from %d segment pairs.", sum(map(len, xs)), len(pairs)
    )
    return FramePairs(np.concatenate(xs), np.concatenate(ys))


def write_frame_pairs(frame_pairs: FramePairs, path: Union[str, Path]):
    with open(path, "wb") as fo:
        writer = BinaryWriter(fo)
        writer.magic(MAGIC)
        writer.scalar("u16", VERSION)
        writer.scalar("u32", len(frame_pairs))
        writer.scalar("u16", frame_pairs.dim)
        writer.floats(frame_pairs.x)
        writer.floats(frame_pairs.y)


def read_frame_pairs(path: Union[str, Path]) -> FramePairs:
    with open(path, "rb") as fo:
        reader = BinaryReader(fo, path)
        reader.magic(MAGIC)
        reader.version(VERSION)
        count = reader.scalar("u32", "count")
        dim = reader.scalar("u16", "dimension")
        x = reader.floats(count * dim, "x frames").reshape(count, dim)
        y = reader.floats(count * dim, "y frames").reshape(count, dim)
        if not reader.at_end():
            raise FormatError(path, "y frames", "trailing bytes")
    return FramePairs(x, y)


# Negative sampling


@dataclass(frozen=True)
class FramePosition:
    utterance_id: str
    frame: int


@dataclass(frozen=True)
class CandidateSet:
    positions: Tuple[FramePosition, ...]
    true_index: int

    @property
    def target(self) -> FramePosition:
        return self.positions[self.true_index]


def same_speaker_positions(
    archive: FeatureArchive,
    utterance_id: str,
    count: int,
    rng: np.random.Generator,
) -> List[FramePosition]:
    """
    Draws ``count`` frame positions uniformly, with replacement, from the frames of every other utterance of the speaker of ``utterance_id``.
    """
    speaker = archive[utterance_id].speaker_id
    others = [
        _x for _x in archive.by_speaker()[speaker] if _x.utterance_id != utterance_id
    ]
    if not others:
        raise SamplingError(
            f"Speaker `{speaker}` has no utterance other than `{utterance_id}` to draw negatives from."
        )
    ends = np.cumsum([_x.n_frames for _x in others])
    flat = rng.integers(ends[-1], size=count)
    owners = np.searchsorted(ends, flat, side="right")
    starts = np.concatenate([[0], ends[:-1]])
    return [
        FramePosition(others[_o].utterance_id, int(_f - starts[_o]))
        for _o, _f in zip(owners, flat)
    ]


def sample_negatives(
    archive: FeatureArchive,
    anchor: Tuple[str, int, int],
    n_candidates: int,
    seed: Optional[int] = None,
) -> CandidateSet:
    """
    Candidate set for the prediction made at frame ``t`` of ``utterance`` for ``k`` steps ahead: the true target ``(utterance, t + k)`` at a random index, plus ``n_candidates - 1`` negatives drawn uniformly from other utterances of the same speaker.

    :param anchor: ``(utterance, t, k)``.
    """
    utterance_id, t, k = anchor
    if n_candidates < 2:
        raise SamplingError(f"Need at least 2 candidates, received {n_candidates}.")
    if not 0 <= t + k < archive[utterance_id].n_frames:
        raise SamplingError(f"Target frame {t + k} outside utterance `{utterance_id}`.")
    rng = np.random.default_rng(seed)
    negatives = same_speaker_positions(archive, utterance_id, n_candidates - 1, rng)
    true_index = int(rng.integers(n_candidates))
    positions = (
        negatives[:true_index] + [FramePosition(utterance_id, t + k)] + negatives[true_index:]
    )
    return CandidateSet(tuple(positions), true_index)
