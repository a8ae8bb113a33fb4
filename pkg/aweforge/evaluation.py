"""
Same-different word discrimination, the speaker probe and evaluation reports.

Every unordered pair of evaluation items is ranked by distance, closest first. Same-word pairs are positives and the average precision is the mean, over positives, of the precision at the rank of each positive. Equal distances keep the stable item-pair order and are counted in :attr:`EvalReport.tie_count`.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import log_softmax, softmax
from sklearn.model_selection import train_test_split

from .awe import AweModel, Embedding, downsample_segments, embed_segments
from .errors import ConfigurationError, EvaluationError, InputError, StratificationError
from .features import FeatureArchive
from .frame_models import FrameModel, encode_archive
from .pairing import METRICS, LabeledSegment, Segment, check_segments, dtw_align
from .serialization import Serializer, serializable

logger = logging.getLogger(__name__)

DISTANCES = ("cosine", "euclidean")
SUMMARY_COLUMNS = (
    "features",
    "method",
    "language",
    "ap_mean",
    "ap_std",
    "speaker_acc_mean",
    "speaker_acc_std",
)


@dataclass
class EvalSet:
    """
    Labeled evaluation items with either one embedding vector or one frame sequence per item.
    """

    segments: List[Segment]
    words: List[str]
    speakers: List[str]
    vectors: Optional[np.ndarray] = None
    sequences: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        n = len(self.segments)
        if len(self.words) != n or len(self.speakers) != n:
            raise InputError("Evaluation segments, words and speakers differ in length.")
        if n < 2:
            raise EvaluationError(f"An evaluation set needs at least 2 items, found {n}.")
        if self.vectors is not None:
            self.vectors = np.asarray(self.vectors, dtype=np.float64)
            if self.vectors.shape[0] != n:
                raise InputError(f"Expected {n} embeddings, found {self.vectors.shape[0]}.")
        if self.sequences is not None and len(self.sequences) != n:
            raise InputError(f"Expected {n} sequences, found {len(self.sequences)}.")

    def __len__(self):
        return len(self.segments)

    @classmethod
    def from_embeddings(cls, embeddings: Sequence[Embedding]) -> "EvalSet":
        return cls(
            [_x.segment for _x in embeddings],
            [_x.word for _x in embeddings],
            [_x.speaker for _x in embeddings],
            vectors=np.stack([_x.vector for _x in embeddings]) if embeddings else None,
        )

    @classmethod
    def from_archive(cls, archive: FeatureArchive, segments: Sequence[LabeledSegment]) -> "EvalSet":
        check_segments([_x.segment for _x in segments], archive)
        return cls(
            [_x.segment for _x in segments],
            [_x.word for _x in segments],
            [_x.speaker or archive[_x.segment.utterance_id].speaker_id for _x in segments],
            sequences=[
                archive[_x.segment.utterance_id].frames[_x.segment.start : _x.segment.end]
                for _x in segments
            ],
        )

    def pair_labels(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Same-word and same-speaker flags of every unordered item pair, in :func:`numpy.triu_indices` order.
        """
        first, second = np.triu_indices(len(self), k=1)
        words, speakers = np.asarray(self.words), np.asarray(self.speakers)
        return words[first] == words[second], speakers[first] == speakers[second]


@serializable
@dataclass
class EvalReport:
    ap: float
    n_pairs: int
    n_positive: int
    mode: str
    distance: str
    tie_count: int = 0
    pr: List[List[float]] = field(default_factory=list)
    """ ``[recall, precision]`` at the rank of every positive pair. """
    same_speaker_ap: Optional[float] = None
    different_speaker_ap: Optional[float] = None
    speaker_accuracy: Optional[float] = None
    meta: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RankedPairs:
    ap: float
    pr: List[List[float]]
    tie_count: int


def ranked_ap(distances: np.ndarray, positives: np.ndarray) -> RankedPairs:
    """
    Average precision of the ranking of ``distances`` (closest first) with respect to the boolean ``positives``.
    """
    distances = np.asarray(distances, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if (n_positive := int(positives.sum())) == 0:
        raise EvaluationError("The evaluation pairs contain no same-word pair.")
    order = np.argsort(distances, kind="stable")
    hits = positives[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_positive + 1) / ranks
    recall = np.arange(1, n_positive + 1) / n_positive
    return RankedPairs(
        ap=math.fsum(precision) / n_positive,
        pr=[[float(_r), float(_p)] for _r, _p in zip(recall, precision)],
        tie_count=int(np.count_nonzero(np.diff(distances[order]) == 0)),
    )


def _report(distances, eval_set, mode, distance, meta) -> EvalReport:
    positives, same_speaker = eval_set.pair_labels()
    ranked = ranked_ap(distances, positives)
    subset_ap = {}
    for name, keep in [
        ("same", ~positives | same_speaker),
        ("different", ~positives | ~same_speaker),
    ]:
        subset_ap[name] = (
            ranked_ap(distances[keep], positives[keep]).ap
            if np.any(positives & keep)
            else None
        )
    if ranked.tie_count:
        logger.info("%d tied pair distances ranked in item order.", ranked.tie_count)
    report = EvalReport(
        ap=ranked.ap,
        n_pairs=len(distances),
        n_positive=int(positives.sum()),
        mode=mode,
        distance=distance,
        tie_count=ranked.tie_count,
        pr=ranked.pr,
        same_speaker_ap=subset_ap["same"],
        different_speaker_ap=subset_ap["different"],
        meta=dict(meta or {}),
    )
    logger.info(
        "Same-different AP %.4f over %d pairs (%d positive).",
        report.ap,
        report.n_pairs,
        report.n_positive,
    )
    return report


def pair_distances(vectors: np.ndarray, distance: str = "cosine") -> np.ndarray:
    """
    Condensed pairwise distances. Cosine distances involving a zero vector are set to 1.
    """
    if distance not in DISTANCES:
        raise ConfigurationError(f"Invalid distance `{distance}`, expected one of {DISTANCES}.")
    with np.errstate(invalid="ignore", divide="ignore"):
        distances = pdist(np.asarray(vectors, dtype=np.float64), distance)
    return np.where(np.isnan(distances), 1.0, distances)


def same_different_ap(
    eval_set: EvalSet, distance: str = "cosine", meta: Optional[Dict[str, Any]] = None
) -> EvalReport:
    if eval_set.vectors is None:
        raise InputError("The evaluation set holds no embeddings.")
    return _report(pair_distances(eval_set.vectors, distance), eval_set, "embedding", distance, meta)


def dtw_same_different_ap(
    eval_set: EvalSet, metric: str = "euclidean", meta: Optional[Dict[str, Any]] = None
) -> EvalReport:
    """
    Same-different AP with pairs scored by their DTW cost normalized by the path length.
    """
    if eval_set.sequences is None:
        raise InputError("The evaluation set holds no frame sequences.")
    if metric not in METRICS:
        raise ConfigurationError(f"Invalid metric `{metric}`, expected one of {METRICS}.")
    first, second = np.triu_indices(len(eval_set), k=1)
    sequences = eval_set.sequences
    distances = np.array(
        [
            dtw_align(sequences[_i], sequences[_j], metric).normalized_cost
            for _i, _j in zip(first, second)
        ]
    )
    return _report(distances, eval_set, "dtw", metric, meta)


# Speaker probe


@serializable
@dataclass(frozen=True)
class ProbeConfig:
    test_fraction: float = 0.25
    l2: float = 1e-4
    steps: int = 500
    lr: float = 0.1

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError(f"Invalid probe test fraction {self.test_fraction}.")


@dataclass
class ProbeResult:
    accuracy: float
    n_train: int
    n_test: int
    n_classes: int
    majority: float
    """ Share of the most frequent training class among the test items. """


def fit_logistic_regression(
    x: np.ndarray, labels: np.ndarray, n_classes: int, config: ProbeConfig = ProbeConfig()
) -> Tuple[np.ndarray, np.ndarray]:
    """
    L2-regularized multinomial logistic regression fitted by full-batch gradient descent from zero weights.
    """
    weights = np.zeros((x.shape[1], n_classes))
    bias = np.zeros(n_classes)
    targets = np.eye(n_classes)[labels]
    for _ in range(config.steps):
        d_logits = (softmax(x @ weights + bias, axis=1) - targets) / len(x)
        weights -= config.lr * (x.T @ d_logits + config.l2 * weights)
        bias -= config.lr * d_logits.sum(axis=0)
    return weights, bias


def logistic_loss(x, labels, weights, bias, l2=0.0) -> float:
    log_p = log_softmax(x @ weights + bias, axis=1)
    return float(-np.mean(log_p[np.arange(len(x)), labels]) + 0.5 * l2 * np.sum(weights**2))


def speaker_probe(
    vectors: np.ndarray,
    speakers: Sequence[str],
    seed: Optional[int] = None,
    config: ProbeConfig = ProbeConfig(),
) -> ProbeResult:
    """
    Test accuracy of a linear speaker classifier trained on a stratified split of the embeddings. Features are standardized with the training statistics.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    names, labels = np.unique(np.asarray(speakers), return_inverse=True)
    if len(names) < 2:
        raise StratificationError(f"The speaker probe needs at least 2 speakers, found {len(names)}.")
    if (counts := np.bincount(labels)).min() < 2:
        raise StratificationError(
            f"Speakers {sorted(names[counts < 2])} have a single embedding and cannot be stratified."
        )
    try:
        x_train, x_test, y_train, y_test = train_test_split(
            vectors, labels, test_size=config.test_fraction, random_state=seed, stratify=labels
        )
    except ValueError as err:
        raise StratificationError(str(err))

    mean, std = x_train.mean(axis=0), x_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    x_train, x_test = (x_train - mean) / std, (x_test - mean) / std
    weights, bias = fit_logistic_regression(x_train, y_train, len(names), config)
    predictions = np.argmax(x_test @ weights + bias, axis=1)
    result = ProbeResult(
        accuracy=float(np.mean(predictions == y_test)),
        n_train=len(y_train),
        n_test=len(y_test),
        n_classes=len(names),
        majority=float(np.mean(y_test == np.argmax(np.bincount(y_train, minlength=len(names))))),
    )
    logger.info(
        "Speaker probe accuracy %.4f on %d test items (%d speakers).",
        result.accuracy,
        result.n_test,
        result.n_classes,
    )
    return result


# Reports


def export_report(report: EvalReport, path: Union[str, Path], fmt: Optional[str] = None):
    """
    Writes the report as JSON, or its precision-recall points as CSV. The format defaults to the file suffix.
    """
    fmt = fmt or Path(path).suffix.lstrip(".") or "json"
    if fmt == "json":
        Serializer().dump(report, path, indent=2)
    elif fmt == "csv":
        with open(path, "w", newline="") as fo:
            writer = csv.writer(fo)
            writer.writerow(["recall", "precision"])
            writer.writerows([[f"{_r:.17g}", f"{_p:.17g}"] for _r, _p in report.pr])
    else:
        raise ConfigurationError(f"Invalid report format `{fmt}`, expected json or csv.")


def read_report(path: Union[str, Path]) -> EvalReport:
    return Serializer().load(path, expected_type=EvalReport)


@dataclass
class SummaryRow:
    features: str
    method: str
    language: str
    aps: List[float] = field(default_factory=list)
    speaker_accuracies: List[float] = field(default_factory=list)

    @staticmethod
    def _stats(values):
        return (float(np.mean(values)), float(np.std(values))) if values else (None, None)

    def as_record(self) -> Dict[str, Any]:
        ap_mean, ap_std = self._stats(self.aps)
        acc_mean, acc_std = self._stats(self.speaker_accuracies)
        return dict(
            features=self.features,
            method=self.method,
            language=self.language,
            ap_mean=ap_mean,
            ap_std=ap_std,
            speaker_acc_mean=acc_mean,
            speaker_acc_std=acc_std,
        )


def summarize(reports: Iterable[EvalReport]) -> List[SummaryRow]:
    """
    Groups reports by the ``features``, ``method`` and ``language`` entries of their metadata, in order of first appearance. Standard deviations are population values.
    """
    rows: Dict[Tuple[str, str, str], SummaryRow] = {}
    for report in reports:
        key = tuple(str(report.meta.get(_k, "")) for _k in ("features", "method", "language"))
        row = rows.setdefault(key, SummaryRow(*key))
        row.aps.append(report.ap)
        if report.speaker_accuracy is not None:
            row.speaker_accuracies.append(report.speaker_accuracy)
    return list(rows.values())


def write_summary(rows: Sequence[SummaryRow], path: Union[str, Path]):
    with open(path, "w", newline="") as fo:
        writer = csv.DictWriter(fo, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    _k: "" if _v is None else (_v if isinstance(_v, str) else f"{_v:.17g}")
                    for _k, _v in row.as_record().items()
                }
            )


def collect_reports(root: Union[str, Path]) -> List[EvalReport]:
    """
    Every ``report.json`` file under ``root``, in sorted path order.
    """
    return [read_report(_p) for _p in sorted(Path(root).rglob("report.json"))]


# Validation


def frame_model_validator(
    archive: FeatureArchive,
    segments: Sequence[LabeledSegment],
    n_keep: int = 10,
    distance: str = "cosine",
) -> Callable[[FrameModel], float]:
    """
    Downstream proxy for frame-model training: encodes the utterances holding ``segments``, downsample-embeds the segments and returns their same-different AP.
    """
    check_segments([_x.segment for _x in segments], archive)
    subset = archive.subset(sorted({_x.segment.utterance_id for _x in segments}))

    def validate(model: FrameModel) -> float:
        embeddings = downsample_segments(encode_archive(model, subset), segments, n_keep)
        return same_different_ap(EvalSet.from_embeddings(embeddings), distance).ap

    return validate


def awe_model_validator(
    archive: FeatureArchive, segments: Sequence[LabeledSegment], distance: str = "cosine"
) -> Callable[[AweModel], float]:
    check_segments([_x.segment for _x in segments], archive)

    def validate(model: AweModel) -> float:
        embeddings = embed_segments(model, archive, segments)
        return same_different_ap(EvalSet.from_embeddings(embeddings), distance).ap

    return validate
