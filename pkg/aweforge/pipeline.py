"""
Experiment pipelines: corpus and features, UTD pairs, frame model, encoding, AWE training and evaluation, repeated over seeds.

Every stage writes to ``<root>/stages/<name>-<key>``, where the key hashes the stage's configuration subset and the contents of its input files. A stage directory holding a completion marker is reused as is. A failed stage keeps its partial outputs and runs again on the next invocation.
"""

import hashlib
import json
import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from functools import cached_property
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import pytz

from .awe import (
    AweConfig,
    AweModel,
    AweSchedule,
    downsample_segments,
    embed_segments,
    embedding_matrix,
    epochs_from,
    fixed_schedule,
    load_awe_model,
    train_awe,
    write_embeddings,
)
from .errors import ConfigurationError, DimensionMismatch, StageError, StratificationError
from .evaluation import (
    DISTANCES,
    EvalReport,
    EvalSet,
    ProbeConfig,
    awe_model_validator,
    collect_reports,
    dtw_same_different_ap,
    export_report,
    frame_model_validator,
    read_report,
    same_different_ap,
    speaker_probe,
    summarize,
    write_summary,
)
from .features import (
    NORMALIZE_MODES,
    FeatureArchive,
    add_deltas,
    normalize,
    read_archive,
    write_archive,
)
from .frame_models import (
    ApcConfig,
    ApcModel,
    ApcSchedule,
    CpcConfig,
    CpcModel,
    CpcSchedule,
    FrameCaeConfig,
    FrameCaeModel,
    FrameCaeSchedule,
    FrameModel,
    encode_archive,
    load_frame_model,
    train_apc,
    train_cpc,
    train_frame_cae,
)
from .pairing import (
    METRICS,
    FramePairs,
    extract_frame_pairs,
    read_frame_pairs,
    read_pairs,
    read_segments,
    write_frame_pairs,
    write_pairs,
    write_segments,
)
from .serialization import Serializer, serializable
from .synth import (
    CorpusSpec,
    CorpusSplit,
    GroundTruth,
    eval_segments,
    generate_corpus,
    read_truth,
    simulate_utd_pairs,
    split_corpus,
    write_truth,
)
from .training import TrainingTrace, write_trace

FEATURE_KINDS = ("mfcc", "cpc", "apc", "cae")
METHODS = ("downsample", "cae-rnn", "dtw")
_METHOD_ALIASES = {"dtw-direct": "dtw"}
DONE_MARKER = ".done"
VERSIONED_PACKAGES = ("aweforge", "numpy", "scipy", "numba", "scikit-learn")

logger = logging.getLogger(__name__)


@serializable
@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    archive: Optional[str] = None
    """ Feature archive used instead of the synthetic corpus. Requires ``truth``. """
    truth: Optional[str] = None
    pairs: Optional[str] = None
    """ Ingested UTD pair list used instead of simulated pairs. """
    features: Tuple[str, ...] = FEATURE_KINDS
    methods: Tuple[str, ...] = METHODS
    seeds: Tuple[int, ...] = (1, 2, 3)
    deltas: bool = True
    normalize: str = "per-speaker"
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    eval_items: Optional[int] = 1000
    pair_budget: int = 2000
    pair_error_rate: float = 0.0
    boundary_jitter: int = 0
    align_metric: str = "euclidean"
    """ Local frame distance of the DTW alignments behind the frame pairs. """
    dtw_metric: str = "euclidean"
    """ Local frame distance of the DTW same-different baseline. """
    distance: str = "cosine"
    n_keep: int = 10
    validation: bool = True
    epochs_from: Tuple[str, ...] = ()
    """ AWE training traces whose averaged best epochs replace early stopping when ``validation`` is off. """
    cpc: CpcConfig = field(default_factory=CpcConfig)
    cpc_schedule: CpcSchedule = field(default_factory=CpcSchedule)
    apc: ApcConfig = field(default_factory=ApcConfig)
    apc_schedule: ApcSchedule = field(default_factory=ApcSchedule)
    cae: FrameCaeConfig = field(default_factory=FrameCaeConfig)
    cae_schedule: FrameCaeSchedule = field(default_factory=FrameCaeSchedule)
    awe: AweConfig = field(default_factory=AweConfig)
    awe_schedule: AweSchedule = field(default_factory=AweSchedule)
    probe: ProbeConfig = field(default_factory=ProbeConfig)

    def __post_init__(self):
        object.__setattr__(
            self, "methods", tuple(_METHOD_ALIASES.get(_x, _x) for _x in self.methods)
        )
        for fld in ["features", "seeds", "split", "epochs_from"]:
            object.__setattr__(self, fld, tuple(getattr(self, fld)))

        if invalid := [_x for _x in self.features if _x not in FEATURE_KINDS]:
            raise ConfigurationError(f"Invalid feature kinds {invalid}, expected {FEATURE_KINDS}.")
        if invalid := [_x for _x in self.methods if _x not in METHODS]:
            raise ConfigurationError(f"Invalid methods {invalid}, expected {METHODS}.")
        if not self.features or not self.methods:
            raise ConfigurationError("At least one feature kind and one method are required.")
        if not self.seeds:
            raise ConfigurationError("The seed list cannot be empty.")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"Repeated seeds in {self.seeds}.")
        if (self.archive is None) != (self.truth is None):
            raise ConfigurationError("A feature archive and its ground truth are given together.")
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigurationError(
                f"Invalid normalization `{self.normalize}`, expected one of {NORMALIZE_MODES}."
            )
        if self.distance not in DISTANCES:
            raise ConfigurationError(
                f"Invalid distance `{self.distance}`, expected one of {DISTANCES}."
            )
        for fld in ["align_metric", "dtw_metric"]:
            if getattr(self, fld) not in METRICS:
                raise ConfigurationError(
                    f"Invalid {fld} `{getattr(self, fld)}`, expected one of {METRICS}."
                )

    @property
    def language(self) -> str:
        return self.corpus.name

    def check_paths(self):
        paths = [self.archive, self.truth, self.pairs, *self.epochs_from]
        if missing := [_x for _x in paths if _x is not None and not Path(_x).exists()]:
            raise ConfigurationError(f"Referenced paths do not exist: {missing}.")

    def awe_training_schedule(self) -> AweSchedule:
        if not self.epochs_from:
            return self.awe_schedule
        if self.validation:
            logger.warning("Ignoring `epochs_from` since validation is enabled.")
            return self.awe_schedule
        return fixed_schedule(self.awe_schedule, epochs_from(list(self.epochs_from)))


@serializable
@dataclass(frozen=True)
class CrosslingualConfig:
    """
    Frame models are trained on ``source``. AWE models are trained and evaluated on ``target``.
    """

    source: ExperimentConfig
    target: ExperimentConfig


# Stages


@serializable
@dataclass(frozen=True)
class StageRecord:
    name: str
    key: str
    outputs: Dict[str, str]
    """ SHA-256 of every output file. """
    seconds: float
    skipped: bool


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fo:
        for chunk in iter(lambda: fo.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _canonical_hash(obj) -> str:
    text = json.dumps(Serializer().as_serializable(obj), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


class StageRunner:
    def __init__(self, root: Union[str, Path]):
        self.stages_dir = Path(root) / "stages"
        self.records: List[StageRecord] = []

    @staticmethod
    def key(name: str, params: Dict[str, Any], inputs: Dict[str, Path]) -> str:
        """
        Hash of the stage name, its parameters and the content of its input files. Inputs are identified by role, not location.
        """
        return _canonical_hash(
            {
                "stage": name,
                "params": params,
                "inputs": {_role: file_sha256(_path) for _role, _path in inputs.items()},
            }
        )

    def run(
        self,
        name: str,
        params: Dict[str, Any],
        inputs: Dict[str, Path],
        build: Callable[[Path], None],
    ) -> Path:
        key = self.key(name, params, inputs)
        out_dir = self.stages_dir / f"{name}-{key}"
        start = time.perf_counter()
        if skipped := (out_dir / DONE_MARKER).exists():
            logger.info("Stage `%s` is up to date, skipping.", name)
        else:
            logger.info("Running stage `%s` in %s.", name, out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            try:
                build(out_dir)
            except Exception as err:
                raise StageError(name, err) from err
            (out_dir / DONE_MARKER).touch()
        record = StageRecord(
            name,
            key,
            {
                _x.name: file_sha256(_x)
                for _x in sorted(out_dir.iterdir())
                if _x.is_file() and _x.name != DONE_MARKER
            },
            time.perf_counter() - start,
            skipped,
        )
        self.records.append(record)
        if not skipped:
            logger.info("Stage `%s` finished in %.1f s.", name, record.seconds)
        return out_dir


@dataclass
class CorpusData:
    """
    Stage outputs describing one corpus. Contents load lazily so that worker processes only receive the paths.
    """

    paths: Dict[str, Path]

    @cached_property
    def archive(self) -> FeatureArchive:
        return read_archive(self.paths["features"])

    @cached_property
    def split(self) -> CorpusSplit:
        portions = Serializer().load(self.paths["split"])
        return CorpusSplit(*(tuple(portions[_x]) for _x in ("train", "validation", "test")))

    @cached_property
    def train(self) -> FeatureArchive:
        return self.archive.subset(self.split.train)

    @cached_property
    def validation(self):
        return read_segments(self.paths["validation"])

    @cached_property
    def test(self):
        return read_segments(self.paths["test"])

    @cached_property
    def pairs(self):
        return read_pairs(self.paths["pairs"])

    @cached_property
    def has_validation(self) -> bool:
        """
        Whether the validation segments hold a same-word pair, which validation AP needs.
        """
        words = [_x.word for _x in self.validation]
        usable = len(set(words)) < len(words)
        if not usable:
            logger.warning("No same-word validation pair, training without validation.")
        return usable

    @property
    def dim(self) -> int:
        return self.archive.dim


def _train_truth(truth: GroundTruth, utterance_ids) -> GroundTruth:
    return GroundTruth(
        {_u: truth.tokens[_u] for _u in utterance_ids if _u in truth.tokens},
        truth.speakers,
        truth.lengths,
    )


def prepare_corpus(config: ExperimentConfig, runner: StageRunner) -> CorpusData:
    """
    Runs the corpus, split and pairs stages of ``config``.
    """
    source = {}
    if config.archive:
        source = {"archive": Path(config.archive), "truth": Path(config.truth)}

    def build_corpus(out_dir):
        if config.archive:
            archive, truth = read_archive(config.archive), read_truth(config.truth)
            truth.validate()
        else:
            archive, truth = generate_corpus(config.corpus)
        if config.deltas:
            archive = archive.map(add_deltas)
        write_archive(normalize(archive, config.normalize), out_dir / "features.farc")
        write_truth(truth, out_dir / "truth.txt")

    corpus_dir = runner.run(
        "corpus",
        {
            "corpus": None if config.archive else config.corpus,
            "deltas": config.deltas,
            "normalize": config.normalize,
        },
        source,
        build_corpus,
    )
    corpus = {"features": corpus_dir / "features.farc", "truth": corpus_dir / "truth.txt"}

    def build_split(out_dir):
        archive, truth = read_archive(corpus["features"]), read_truth(corpus["truth"])
        split = split_corpus(archive, truth, config.split, seed=config.split_seed)
        Serializer().dump(
            {_x: list(getattr(split, _x)) for _x in ["train", "validation", "test"]},
            out_dir / "split.json",
            indent=2,
        )
        for portion in ["validation", "test"]:
            write_segments(
                eval_segments(
                    truth, archive, getattr(split, portion), config.eval_items, config.split_seed
                ),
                out_dir / f"{portion}.txt",
            )

    split_dir = runner.run(
        "split",
        {"split": config.split, "eval_items": config.eval_items, "seed": config.split_seed},
        corpus,
        build_split,
    )
    split = {
        "split": split_dir / "split.json",
        "validation": split_dir / "validation.txt",
        "test": split_dir / "test.txt",
    }
    with_frames = "cae" in config.features

    def build_pairs(out_dir):
        archive = read_archive(corpus["features"])
        if config.pairs:
            pairs = read_pairs(config.pairs)
        else:
            train_ids = Serializer().load(split["split"])["train"]
            pairs = simulate_utd_pairs(
                _train_truth(read_truth(corpus["truth"]), train_ids),
                config.pair_budget,
                config.pair_error_rate,
                config.boundary_jitter,
                seed=config.split_seed,
            )
        write_pairs(pairs, out_dir / "pairs.txt")
        if with_frames:
            write_frame_pairs(
                extract_frame_pairs(pairs, archive, config.align_metric), out_dir / "frames.fprs"
            )

    pairs_dir = runner.run(
        "pairs",
        {
            "budget": config.pair_budget,
            "error_rate": config.pair_error_rate,
            "jitter": config.boundary_jitter,
            "seed": config.split_seed,
            "metric": config.align_metric,
            "frames": with_frames,
        },
        {
            **corpus,
            "split": split["split"],
            **({"pairs": Path(config.pairs)} if config.pairs else {}),
        },
        build_pairs,
    )
    paths = {**corpus, **split, "pairs": pairs_dir / "pairs.txt"}
    if with_frames:
        paths["frames"] = pairs_dir / "frames.fprs"
    return CorpusData(paths)


_FRAME_MODELS = {"cpc": CpcModel, "apc": ApcModel, "cae": FrameCaeModel}


def frame_settings(kind: str, config: ExperimentConfig):
    """
    Model config and schedule of the ``kind`` frame model.
    """
    return {
        "cpc": (config.cpc, config.cpc_schedule),
        "apc": (config.apc, config.apc_schedule),
        "cae": (config.cae, config.cae_schedule),
    }[kind]


def train_frame_model(
    kind: str,
    config: ExperimentConfig,
    archive: FeatureArchive,
    seed: int,
    frame_pairs: Optional[FramePairs] = None,
    validate: Optional[Callable[[FrameModel], float]] = None,
) -> Tuple[FrameModel, TrainingTrace]:
    """
    Builds the ``kind`` frame model of ``config`` for the dimension of ``archive`` and trains it. The frame CAE needs ``frame_pairs`` and ignores ``validate``.
    """
    if kind not in _FRAME_MODELS:
        raise ConfigurationError(
            f"Invalid frame model kind `{kind}`, expected one of {list(_FRAME_MODELS)}."
        )
    model_config, schedule = frame_settings(kind, config)
    model = _FRAME_MODELS[kind](replace(model_config, input_dim=archive.dim), seed=seed)
    if kind == "cae":
        if frame_pairs is None:
            raise ConfigurationError("The frame CAE trains on DTW-aligned frame pairs.")
        return model, train_frame_cae(model, archive, frame_pairs, schedule, seed)
    train = train_cpc if kind == "cpc" else train_apc
    return model, train(model, archive, schedule, seed, validate)


def _frame_model_stage(
    kind: str, config: ExperimentConfig, runner: StageRunner, data: CorpusData, seed: int
) -> Path:
    model_config, schedule = frame_settings(kind, config)
    validated = config.validation and kind != "cae"
    inputs = {_x: data.paths[_x] for _x in ["features", "split", "validation"]}
    if kind == "cae":
        inputs["frames"] = data.paths["frames"]

    def build(out_dir):
        validate = None
        if validated and data.has_validation:
            validate = frame_model_validator(
                data.archive, data.validation, config.n_keep, config.distance
            )
        frame_pairs = read_frame_pairs(data.paths["frames"]) if kind == "cae" else None
        model, trace = train_frame_model(kind, config, data.train, seed, frame_pairs, validate)
        model.save(out_dir / "model.awef")
        write_trace(trace, out_dir / "trace.json")

    params = {
        "model": model_config,
        "schedule": schedule,
        "seed": seed,
        "validation": validated,
        "n_keep": config.n_keep,
        "distance": config.distance,
    }
    return runner.run(f"frame-{kind}", params, inputs, build)


def _encode_stage(kind: str, runner: StageRunner, model_dir: Path, features: Path) -> Path:
    def build(out_dir):
        model = load_frame_model(model_dir / "model.awef")
        write_archive(encode_archive(model, read_archive(features)), out_dir / "features.farc")

    inputs = {"model": model_dir / "model.awef", "features": features}
    return runner.run(f"encode-{kind}", {"kind": kind}, inputs, build) / "features.farc"


def _awe_stage(
    kind: str,
    config: ExperimentConfig,
    schedule: AweSchedule,
    runner: StageRunner,
    features: Path,
    data: CorpusData,
    seed: int,
) -> Path:
    def build(out_dir):
        archive = read_archive(features)
        model = AweModel(replace(config.awe, input_dim=archive.dim), seed=seed)
        validate = None
        if config.validation and data.has_validation:
            validate = awe_model_validator(archive, data.validation, config.distance)
        trace = train_awe(model, archive, data.pairs, schedule, seed, validate)
        model.save(out_dir / "model.awef")
        write_trace(trace, out_dir / "trace.json")

    params = {
        "model": config.awe,
        "schedule": schedule,
        "seed": seed,
        "validation": config.validation,
        "distance": config.distance,
    }
    inputs = {
        "features": features,
        "pairs": data.paths["pairs"],
        "validation": data.paths["validation"],
    }
    return runner.run(f"awe-{kind}", params, inputs, build)


def evaluate_method(
    method: str,
    archive: FeatureArchive,
    segments,
    config: ExperimentConfig,
    seed: int,
    meta: Dict[str, Any],
    model: Optional[AweModel] = None,
    embeddings_path: Optional[Path] = None,
) -> EvalReport:
    """
    Same-different report of ``method`` on ``segments``. Embedding methods also carry the speaker probe accuracy, left empty when the probe cannot be stratified.
    """
    if method == "dtw":
        eval_set = EvalSet.from_archive(archive, segments)
        return dtw_same_different_ap(eval_set, config.dtw_metric, meta)
    if method == "downsample":
        embeddings = downsample_segments(archive, segments, config.n_keep)
    else:
        embeddings = embed_segments(model, archive, segments)
    if embeddings_path is not None:
        write_embeddings(embeddings, embeddings_path)
    report = same_different_ap(EvalSet.from_embeddings(embeddings), config.distance, meta)
    try:
        probe = speaker_probe(
            embedding_matrix(embeddings), [_x.speaker for _x in embeddings], seed, config.probe
        )
    except StratificationError as err:
        logger.warning("Skipping the speaker probe of %s: %s", meta, err)
        return report
    return replace(report, speaker_accuracy=probe.accuracy)


def _eval_stage(
    kind: str,
    method: str,
    config: ExperimentConfig,
    runner: StageRunner,
    features: Path,
    data: CorpusData,
    seed: int,
    meta: Dict[str, Any],
    awe_dir: Optional[Path],
) -> Path:
    def build(out_dir):
        model = load_awe_model(awe_dir / "model.awef") if awe_dir else None
        report = evaluate_method(
            method,
            read_archive(features),
            data.test,
            config,
            seed,
            meta,
            model,
            out_dir / "embeddings.awem",
        )
        export_report(report, out_dir / "report.json")
        export_report(report, out_dir / "pr.csv")

    params = {
        "method": method,
        "distance": config.distance,
        "dtw_metric": config.dtw_metric,
        "n_keep": config.n_keep,
        "probe": config.probe,
        "seed": seed,
        "meta": meta,
    }
    inputs = {"features": features, "test": data.paths["test"]}
    if awe_dir:
        inputs["model"] = awe_dir / "model.awef"
    return runner.run(f"eval-{kind}-{method}", params, inputs, build)


def run_seed(
    source: ExperimentConfig,
    target: ExperimentConfig,
    source_paths: Dict[str, Path],
    target_paths: Dict[str, Path],
    seed: int,
    root: Union[str, Path],
) -> Tuple[List[StageRecord], List[Path]]:
    """
    Every grid cell of one seed. Frame models train on ``source``. Everything else uses ``target``.
    """
    root = Path(root)
    runner = StageRunner(root)
    target_data = CorpusData(target_paths)
    source_data = target_data if source_paths == target_paths else CorpusData(source_paths)
    schedule = target.awe_training_schedule()
    meta_base = {"language": target.language, "seed": seed}
    if source.language != target.language:
        meta_base["source_language"] = source.language

    report_paths = []
    for kind in target.features:
        features = target_data.paths["features"]
        if kind != "mfcc":
            model_dir = _frame_model_stage(kind, source, runner, source_data, seed)
            features = _encode_stage(kind, runner, model_dir, features)
        for method in target.methods:
            awe_dir = None
            if method == "cae-rnn":
                awe_dir = _awe_stage(kind, target, schedule, runner, features, target_data, seed)
            meta = {"features": kind, "method": method, **meta_base}
            eval_dir = _eval_stage(
                kind, method, target, runner, features, target_data, seed, meta, awe_dir
            )

            run_dir = root / "runs" / f"seed-{seed}" / f"{kind}-{method}"
            run_dir.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(eval_dir / "report.json", run_dir / "report.json")
            if awe_dir:
                shutil.copyfile(awe_dir / "trace.json", run_dir / "trace.json")
            report_paths.append(run_dir / "report.json")
    return runner.records, report_paths


def _run_seed_task(args):
    return run_seed(*args)


# Manifest


def package_versions() -> Dict[str, str]:
    out = {}
    for name in VERSIONED_PACKAGES:
        try:
            out[name] = version(name)
        except PackageNotFoundError:
            out[name] = "unknown"
    return out


@serializable
@dataclass
class RunManifest:
    config: Any
    stages: List[StageRecord]
    outputs: Dict[str, str]
    """ SHA-256 of every report and of the summary, keyed by path relative to the run root. """
    versions: Dict[str, str] = field(default_factory=package_versions)
    created: datetime = field(default_factory=lambda: datetime.now(pytz.utc))

    def content_hash(self) -> str:
        """
        Hash of the config, stage keys and every output hash. Timing fields, skip flags and the timestamp are excluded, so identical runs hash identically.
        """
        return _canonical_hash(
            {
                "config": self.config,
                "stages": [[_x.name, _x.key, _x.outputs] for _x in self.stages],
                "outputs": self.outputs,
            }
        )


def write_manifest(manifest: RunManifest, path: Union[str, Path]):
    Serializer().dump(manifest, path, indent=2)


def read_manifest(path: Union[str, Path]) -> RunManifest:
    return Serializer().load(path, expected_type=RunManifest)


def _run(
    source: ExperimentConfig,
    target: ExperimentConfig,
    root: Union[str, Path],
    jobs: int,
    manifest_config,
) -> Tuple[RunManifest, List[EvalReport]]:
    root = Path(root)
    for config in [source, target]:
        config.check_paths()
    runner = StageRunner(root)
    target_data = prepare_corpus(target, runner)
    source_data = target_data if source == target else prepare_corpus(source, runner)
    if any(_x != "mfcc" for _x in target.features) and source_data.dim != target_data.dim:
        raise DimensionMismatch(f"`{target.language}` features", source_data.dim, target_data.dim)

    tasks = [
        (source, target, source_data.paths, target_data.paths, _seed, root)
        for _seed in target.seeds
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_seed_task, tasks))
    else:
        results = [run_seed(*_task) for _task in tasks]

    report_paths = []
    for records, paths in results:
        runner.records.extend(records)
        report_paths.extend(paths)
    reports = [read_report(_x) for _x in report_paths]
    summary_path = root / "summary.csv"
    write_summary(summarize(collect_reports(root / "runs")), summary_path)

    outputs = {
        str(_x.relative_to(root)): file_sha256(_x) for _x in report_paths + [summary_path]
    }
    manifest = RunManifest(manifest_config, runner.records, outputs)
    write_manifest(manifest, root / "manifest.json")
    logger.info("Wrote %d reports and the summary to %s.", len(reports), root)
    return manifest, reports


def run_experiment(
    config: ExperimentConfig, root: Union[str, Path], jobs: int = 1
) -> Tuple[RunManifest, List[EvalReport]]:
    """
    Runs every feature kind and method of ``config`` for every seed and writes ``summary.csv`` and ``manifest.json`` to ``root``. Stages whose inputs did not change since an earlier run are skipped.

    :param jobs: Number of worker processes running seeds in parallel.
    """
    return _run(config, config, root, jobs, config)


def run_crosslingual(
    source: ExperimentConfig,
    target: ExperimentConfig,
    root: Union[str, Path],
    jobs: int = 1,
) -> Tuple[RunManifest, List[EvalReport]]:
    """
    Encodes the ``target`` corpus with frame models trained on ``source``, then trains and evaluates AWE models entirely on ``target``. With ``source == target`` this reuses every stage of :func:`run_experiment`.
    """
    manifest_config = target if source == target else CrosslingualConfig(source, target)
    return _run(source, target, root, jobs, manifest_config)
