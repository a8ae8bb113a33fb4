"""
Synthetic feature-space corpora with word-level ground truth, and simulated unsupervised term discovery (UTD) pair lists.

Each word type owns a template trajectory interpolated between smoothed phone targets. A token renders its template time-warped, passed through the speaker's diagonal affine transform and corrupted by Gaussian noise. Utterances concatenate tokens with near-zero silence separators.
"""

import dataclasses
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, FormatError, InputError
from .features import FeatureArchive, FeatureSequence
from .pairing import LabeledSegment, Segment, SegmentPair
from .serialization import serializable

logger = logging.getLogger(__name__)


@serializable
@dataclass(frozen=True)
class CorpusSpec:
    n_word_types: int = 12
    n_speakers: int = 8
    n_utterances: int = 600
    words_per_utterance: Tuple[int, int] = (2, 5)
    frames_per_phone: Tuple[int, int] = (3, 6)
    phones_per_word: Tuple[int, int] = (3, 6)
    dim: int = 13
    speaker_scale: float = 0.4
    noise: float = 0.1
    warp: Tuple[float, float] = (0.8, 1.25)
    silence: Tuple[int, int] = (3, 8)
    silence_level: float = 0.01
    smoothing: float = 0.5
    seed: int = 0
    name: str = "A"
    """ Language tag used in reports. """

    def __post_init__(self):
        for fld in ["words_per_utterance", "frames_per_phone", "phones_per_word", "warp", "silence"]:
            value = tuple(getattr(self, fld))
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigurationError(f"Invalid range {fld}={value}.")
            object.__setattr__(self, fld, value)

        counts = {
            "n_word_types": self.n_word_types,
            "n_speakers": self.n_speakers,
            "n_utterances": self.n_utterances,
            "words_per_utterance": self.words_per_utterance[0],
            "frames_per_phone": self.frames_per_phone[0],
            "phones_per_word": self.phones_per_word[0],
        }
        if invalid := [_key for _key, _value in counts.items() if _value < 1]:
            raise ConfigurationError(f"Counts {invalid} must be at least 1.")
        if self.dim < 2:
            raise ConfigurationError(f"Feature dimension must be at least 2, received {self.dim}.")
        if min(self.noise, self.silence_level, self.speaker_scale) < 0:
            raise ConfigurationError("Noise, silence level and speaker scale must be non-negative.")
        if not (0.5 < self.warp[0] and self.warp[1] < 2.0):
            raise ConfigurationError(f"Warp range {self.warp} not within (0.5, 2.0).")
        if self.silence[0] < 0:
            raise ConfigurationError(f"Invalid silence range {self.silence}.")

    def language(self, seed: int, name: Optional[str] = None) -> "CorpusSpec":
        """
        Same generative family with an independent draw of word templates and speakers.
        """
        return dataclasses.replace(self, seed=seed, name=name or f"{self.name}-{seed}")


@dataclass(frozen=True)
class WordToken:
    word: str
    start: int
    end: int


@dataclass
class GroundTruth:
    tokens: Dict[str, List[WordToken]]
    speakers: Dict[str, str]
    lengths: Dict[str, int]

    def validate(self):
        for utterance_id, tokens in self.tokens.items():
            previous_end = 0
            for token in tokens:
                if not previous_end <= token.start < token.end <= self.lengths[utterance_id]:
                    raise InputError(
                        f"Invalid or overlapping span [{token.start}, {token.end}) in `{utterance_id}`."
                    )
                previous_end = token.end

    def labeled_segments(self, utterance_ids: Optional[Sequence[str]] = None) -> List[LabeledSegment]:
        utterance_ids = self.tokens if utterance_ids is None else utterance_ids
        return [
            LabeledSegment(
                Segment(_utt, _token.start, _token.end), _token.word, self.speakers[_utt]
            )
            for _utt in utterance_ids
            for _token in self.tokens[_utt]
        ]


@dataclass(frozen=True)
class Speaker:
    gain: np.ndarray
    bias: np.ndarray

    @classmethod
    def draw(cls, rng, dim, scale):
        return cls(np.exp(scale * rng.standard_normal(dim)), scale * rng.standard_normal(dim))

    def apply(self, frames):
        return frames * self.gain + self.bias

    def invert(self, frames):
        return (frames - self.bias) / self.gain


def draw_template(rng: np.random.Generator, spec: CorpusSpec) -> np.ndarray:
    """
    Smoothed phone targets linearly interpolated between phone centers.
    """
    n_phones = int(rng.integers(spec.phones_per_word[0], spec.phones_per_word[1] + 1))
    targets = rng.standard_normal((n_phones, spec.dim))
    padded = np.concatenate([targets[:1], targets, targets[-1:]])
    targets = (1 - spec.smoothing) * targets + spec.smoothing / 2 * (padded[:-2] + padded[2:])

    durations = rng.integers(spec.frames_per_phone[0], spec.frames_per_phone[1] + 1, size=n_phones)
    centers = np.cumsum(durations) - durations / 2.0 - 0.5
    positions = np.arange(int(durations.sum()))
    return np.stack(
        [np.interp(positions, centers, targets[:, _d]) for _d in range(spec.dim)], axis=1
    )


def warp_template(template: np.ndarray, factor: float) -> np.ndarray:
    """
    Resamples ``template`` to ``round(len * factor)`` frames with linear interpolation.
    """
    n_out = max(1, int(round(len(template) * factor)))
    positions = np.linspace(0, len(template) - 1, n_out)
    grid = np.arange(len(template))
    return np.stack(
        [np.interp(positions, grid, template[:, _d]) for _d in range(template.shape[1])], axis=1
    )


def render_token(
    template: np.ndarray,
    warp: float,
    speaker: Speaker,
    noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    warped = warp_template(template, warp)
    return speaker.apply(warped) + noise * rng.standard_normal(warped.shape)


def generate_corpus(spec: CorpusSpec) -> Tuple[FeatureArchive, GroundTruth]:
    """
    Deterministic given ``spec.seed``. Every utterance renders from its own sub-seed spawned from the master seed.
    """
    template_seq, speaker_seq, utterance_seq = np.random.SeedSequence(spec.seed).spawn(3)
    template_rng = np.random.default_rng(template_seq)
    templates = [draw_template(template_rng, spec) for _ in range(spec.n_word_types)]
    speaker_rng = np.random.default_rng(speaker_seq)
    speakers = [
        Speaker.draw(speaker_rng, spec.dim, spec.speaker_scale) for _ in range(spec.n_speakers)
    ]
    word_names = [f"w{_k:03d}" for _k in range(spec.n_word_types)]
    speaker_names = [f"spk{_k:02d}" for _k in range(spec.n_speakers)]

    entries, truth = [], GroundTruth({}, {}, {})
    for index, child in enumerate(utterance_seq.spawn(spec.n_utterances)):
        rng = np.random.default_rng(child)
        utterance_id = f"utt{index:05d}"
        speaker_index = index % spec.n_speakers

        def silence():
            n = int(rng.integers(spec.silence[0], spec.silence[1] + 1))
            return spec.silence_level * rng.standard_normal((n, spec.dim))

        chunks, tokens = [silence()], []
        position = len(chunks[0])
        n_words = int(rng.integers(spec.words_per_utterance[0], spec.words_per_utterance[1] + 1))
        for _ in range(n_words):
            word = int(rng.integers(spec.n_word_types))
            token = render_token(
                templates[word],
                rng.uniform(*spec.warp),
                speakers[speaker_index],
                spec.noise,
                rng,
            )
            tokens.append(WordToken(word_names[word], position, position + len(token)))
            gap = silence()
            chunks.extend([token, gap])
            position += len(token) + len(gap)

        entries.append(
            FeatureSequence(utterance_id, speaker_names[speaker_index], np.concatenate(chunks))
        )
        truth.tokens[utterance_id] = tokens
        truth.speakers[utterance_id] = speaker_names[speaker_index]
        truth.lengths[utterance_id] = position

    logger.info(
        "Generated corpus `%s`: %d utterances, %d tokens.",
        spec.name,
        len(entries),
        sum(map(len, truth.tokens.values())),
    )
    return FeatureArchive(entries), truth


# Ground truth file


def write_truth(truth: GroundTruth, path: Union[str, Path]):
    """
    One ``utterance_id word_type start end speaker_id`` line per token, preceded by ``# length utterance_id T`` lines.
    """
    with open(path, "w") as fo:
        for utterance_id, length in truth.lengths.items():
            fo.write(f"# length {utterance_id} {length}\n")
        for utterance_id, tokens in truth.tokens.items():
            for token in tokens:
                fo.write(
                    f"{utterance_id} {token.word} {token.start} {token.end} {truth.speakers[utterance_id]}\n"
                )


def read_truth(path: Union[str, Path]) -> GroundTruth:
    truth = GroundTruth(defaultdict(list), {}, {})
    with open(path, "r") as fo:
        for line_number, line in enumerate(fo, start=1):
            fields = line.split()
            try:
                if fields[:2] == ["#", "length"]:
                    truth.lengths[fields[2]] = int(fields[3])
                elif fields and not fields[0].startswith("#"):
                    utterance_id, word, start, end, speaker = fields
                    truth.tokens[utterance_id].append(WordToken(word, int(start), int(end)))
                    truth.speakers[utterance_id] = speaker
            except ValueError as err:
                raise FormatError(path, f"line {line_number}", str(err))
    truth.tokens = dict(truth.tokens)
    for utterance_id, tokens in truth.tokens.items():
        truth.lengths.setdefault(utterance_id, max(_x.end for _x in tokens))
    truth.validate()
    return truth


# Simulated term discovery


def _pair_key(a: Segment, b: Segment):
    return tuple(sorted((a, b)))


def _jitter(segment: Segment, jitter: int, length: int, rng) -> Segment:
    if jitter == 0:
        return segment
    start, end = (
        int(np.clip(_x + rng.integers(-jitter, jitter + 1), 0, length))
        for _x in (segment.start, segment.end)
    )
    return Segment(segment.utterance_id, start, end) if start < end else segment


def simulate_utd_pairs(
    truth: GroundTruth,
    pair_budget: int,
    error_rate: float = 0.0,
    boundary_jitter: int = 0,
    seed: Optional[int] = None,
) -> List[SegmentPair]:
    """
    Draws distinct same-word token pairs across utterances. Each emitted pair is independently replaced by a different-word pair with probability ``error_rate``, and every boundary moves by up to ``boundary_jitter`` frames (clamped to the utterance).
    """
    if not 0.0 <= error_rate < 1.0:
        raise ConfigurationError(f"Error rate {error_rate} not in [0, 1).")
    if pair_budget <= 0:
        return []
    rng = np.random.default_rng(seed)
    items = truth.labeled_segments()
    by_word = defaultdict(list)
    for index, item in enumerate(items):
        by_word[item.word].append(index)
    same_pairs = [
        (_a, _b)
        for _indices in by_word.values()
        for _a, _b in combinations(_indices, 2)
        if items[_a].segment.utterance_id != items[_b].segment.utterance_id
    ]
    if pair_budget > len(same_pairs):
        message = f"Pair budget {pair_budget} exceeds the {len(same_pairs)} available same-word pairs; returning all of them."
        logger.warning(message)
        warnings.warn(message)
        pair_budget = len(same_pairs)

    def mismatched():
        for _ in range(1000):
            a, b = (int(_x) for _x in rng.integers(len(items), size=2))
            if items[a].word != items[b].word and (
                items[a].segment.utterance_id != items[b].segment.utterance_id
            ):
                return a, b
        return None

    out, seen = [], set()
    for candidate in rng.permutation(len(same_pairs)):
        if len(out) == pair_budget:
            break
        a, b = same_pairs[candidate]
        if rng.random() < error_rate and (replacement := mismatched()) is not None:
            a, b = replacement
        first, second = (
            _jitter(
                items[_k].segment,
                boundary_jitter,
                truth.lengths[items[_k].segment.utterance_id],
                rng,
            )
            for _k in (a, b)
        )
        if (key := _pair_key(first, second)) not in seen:
            seen.add(key)
            out.append(SegmentPair(first, second))
    logger.info("Simulated %d UTD pairs (error rate %.2f).", len(out), error_rate)
    return out


def pair_is_correct(pair: SegmentPair, truth: GroundTruth) -> bool:
    """
    Whether both segments overlap tokens of the same word type the most.
    """

    def word_of(segment: Segment):
        overlaps = [
            (min(_t.end, segment.end) - max(_t.start, segment.start), _t.word)
            for _t in truth.tokens[segment.utterance_id]
        ]
        return max(overlaps)[1] if overlaps and max(overlaps)[0] > 0 else None

    first = word_of(pair.first)
    return first is not None and first == word_of(pair.second)


# Splits and evaluation items


@dataclass(frozen=True)
class CorpusSplit:
    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    test: Tuple[str, ...]


def split_corpus(
    archive: FeatureArchive,
    truth: GroundTruth,
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: Optional[int] = None,
) -> CorpusSplit:
    """
    Utterance-level train/validation/test split. Each speaker's utterances are shuffled and divided by ``fractions``, so all speakers appear in every portion they have enough utterances for.
    """
    if len(fractions) != 3 or min(fractions) < 0 or not np.isclose(sum(fractions), 1.0):
        raise ConfigurationError(f"Invalid split fractions {fractions}.")
    rng = np.random.default_rng(seed)
    portions = ([], [], [])
    for speaker, entries in sorted(archive.by_speaker().items()):
        ids = [entries[_k].utterance_id for _k in rng.permutation(len(entries))]
        bounds = np.round(np.cumsum(fractions[:2]) * len(ids)).astype(int)
        for portion, chunk in zip(portions, np.split(np.array(ids, dtype=object), bounds)):
            portion.extend(chunk.tolist())
    unknown = [_x for _x in archive.utterance_ids if _x not in truth.tokens]
    if unknown:
        logger.info("%d utterances have no ground truth.", len(unknown))
    order = {_utt: _k for _k, _utt in enumerate(archive.utterance_ids)}
    return CorpusSplit(*(tuple(sorted(_p, key=order.get)) for _p in portions))


def eval_segments(
    truth: GroundTruth,
    archive: FeatureArchive,
    utterance_ids: Optional[Sequence[str]] = None,
    max_items: Optional[int] = None,
    seed: Optional[int] = None,
    min_frames: int = 1,
) -> List[LabeledSegment]:
    """
    Isolated-word evaluation items (segment, word label, speaker) from the ground truth of ``utterance_ids``. A random subset of ``max_items`` items is kept in corpus order when given.
    """
    utterance_ids = archive.utterance_ids if utterance_ids is None else utterance_ids
    items = [
        _x
        for _x in truth.labeled_segments([_u for _u in utterance_ids if _u in truth.tokens])
        if _x.segment.length >= min_frames
    ]
    if max_items is not None and len(items) > max_items:
        keep = np.sort(np.random.default_rng(seed).choice(len(items), size=max_items, replace=False))
        items = [items[_k] for _k in keep]
    return items
