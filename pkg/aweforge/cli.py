"""
``awe-forge`` command line interface.

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors and 4 for training errors.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from ._argparse import (
    ARGUMENT_EPOCHS_FROM,
    ARGUMENT_LOG_LEVEL,
    ARGUMENT_MODULES,
    ARGUMENT_OVERRIDES,
    Argument,
    bind_all,
)
from .awe import (
    AweModel,
    downsample_segments,
    embed_segments,
    embedding_matrix,
    epochs_from,
    fixed_schedule,
    load_awe_model,
    read_embeddings,
    train_awe,
    write_embeddings,
)
from .awe.model import KIND as AWE_KIND
from .config import import_parser_modules, load_config
from .errors import AweForgeError, ConfigurationError
from .evaluation import (
    DISTANCES,
    EvalSet,
    awe_model_validator,
    collect_reports,
    dtw_same_different_ap,
    export_report,
    frame_model_validator,
    same_different_ap,
    speaker_probe,
    summarize,
    write_summary,
)
from .features import NORMALIZE_MODES, add_deltas, normalize, read_archive, write_archive
from .frame_models import encode_archive, load_frame_model
from .mfcc import MfccConfig, features_from_wav_dir
from .pairing import (
    METRICS,
    extract_frame_pairs,
    read_frame_pairs,
    read_pairs,
    read_segments,
    write_frame_pairs,
    write_pairs,
)
from .pipeline import (
    FEATURE_KINDS,
    CrosslingualConfig,
    ExperimentConfig,
    run_crosslingual,
    run_experiment,
    train_frame_model,
)
from .synth import CorpusSpec, generate_corpus, read_truth, simulate_utd_pairs, write_truth
from .training import read_trace, write_trace

logger = logging.getLogger(__name__)

ARGUMENT_CONFIG = Argument(
    "--config",
    default="desk",
    help="Experiment config file (*.yaml or *.json) or built-in preset name.",
)
ARGUMENT_SEED = Argument("--seed", type=int, default=0, help="Random seed.")
ARGUMENT_DISTANCE = Argument("--distance", choices=DISTANCES, default="cosine")
ARGUMENT_JOBS = Argument(
    "--jobs", type=int, default=1, help="Number of worker processes running seeds in parallel."
)
ARGUMENT_FEATURES = Argument(
    "--features", type=Path, required=True, help="Feature archive (*.farc)."
)
ARGUMENT_PAIRS = Argument("--pairs", type=Path, required=True, help="UTD pair list.")
ARGUMENT_SEGMENTS = Argument("--segments", type=Path, required=True, help="Labeled segments.")
ARGUMENT_EMBEDDINGS = Argument(
    "--embeddings", type=Path, required=True, help="Embedding file (*.awem)."
)
ARGUMENT_MODEL_OUT = Argument("--out", type=Path, required=True, help="Model file (*.awef).")
ARGUMENT_TRACE = Argument(
    "--trace", type=Path, default=None, help="Training trace. Defaults to <model stem>.trace.json."
)
ARGUMENT_REPORT = Argument(
    "--out", type=Path, default=None, help="Report file (*.json, or *.csv for PR points)."
)


def resolve_traces(paths: Sequence[str]) -> List[str]:
    """
    Trace files given explicitly, plus every AWE ``*trace.json`` under the given directories.
    """
    out = []
    for path in map(Path, paths):
        if path.is_dir():
            out.extend(
                str(_x)
                for _x in sorted(path.rglob("*trace.json"))
                if read_trace(_x).kind == AWE_KIND
            )
        elif path.exists():
            out.append(str(path))
        else:
            raise ConfigurationError(f"Trace path {path} does not exist.")
    if not out:
        raise ConfigurationError(f"No AWE training traces found in {list(paths)}.")
    return out


def _print_json(obj):
    print(json.dumps(obj, indent=2))


def _output(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def trace_path(args) -> Path:
    """
    The ``--trace`` file, or ``<model stem>.trace.json`` next to the model.
    """
    return _output(args.trace or args.out.with_suffix(".trace.json"))


# Verbs


def synth(args):
    spec = load_config(args.spec, CorpusSpec, args.overrides)
    archive, truth = generate_corpus(spec)
    if args.deltas:
        archive = archive.map(add_deltas)
    write_archive(normalize(archive, args.normalize), _output(args.out))
    write_truth(truth, _output(args.truth))
    _print_json({"utterances": len(archive), "dim": archive.dim, "language": spec.name})


def features(args):
    config = load_config(args.config, MfccConfig, args.overrides) if args.config else MfccConfig()
    archive = features_from_wav_dir(args.wav_dir, config, args.deltas, args.normalize)
    write_archive(archive, _output(args.out))
    _print_json({"utterances": len(archive), "dim": archive.dim})


def pairs_simulate(args):
    pairs = simulate_utd_pairs(
        read_truth(args.truth), args.budget, args.error_rate, args.jitter, seed=args.seed
    )
    write_pairs(pairs, _output(args.out))
    _print_json({"pairs": len(pairs)})


def pairs_align(args):
    frame_pairs = extract_frame_pairs(
        read_pairs(args.pairs), read_archive(args.features), args.metric
    )
    write_frame_pairs(frame_pairs, _output(args.out))
    _print_json({"frame_pairs": len(frame_pairs)})


def _experiment_config(args) -> ExperimentConfig:
    return load_config(args.config, ExperimentConfig, args.overrides)


def train_frame(args):
    config = _experiment_config(args)
    archive = read_archive(args.features)
    validate = None
    if args.validation:
        validate = frame_model_validator(
            archive, read_segments(args.validation), config.n_keep, config.distance
        )
    frame_pairs = read_frame_pairs(args.frame_pairs) if args.frame_pairs else None
    model, trace = train_frame_model(args.kind, config, archive, args.seed, frame_pairs, validate)
    model.save(_output(args.out))
    write_trace(trace, trace_path(args))
    _print_json({"epochs": len(trace.epochs), "best_epoch": trace.best_epoch})


def encode(args):
    archive = encode_archive(load_frame_model(args.model), read_archive(args.features))
    write_archive(archive, _output(args.out))
    _print_json({"utterances": len(archive), "dim": archive.dim})


def train_awe_verb(args):
    config = _experiment_config(args)
    schedule = config.awe_schedule
    if args.epochs_from:
        schedule = fixed_schedule(schedule, epochs_from(resolve_traces(args.epochs_from)))
    archive = read_archive(args.features)
    validate = None
    if args.validation:
        validate = awe_model_validator(archive, read_segments(args.validation), config.distance)
    model = AweModel(replace(config.awe, input_dim=archive.dim), seed=args.seed)
    trace = train_awe(model, archive, read_pairs(args.pairs), schedule, args.seed, validate)
    model.save(_output(args.out))
    write_trace(trace, trace_path(args))
    _print_json({"epochs": len(trace.epochs), "phase_best": trace.phase_best})


def embed(args):
    archive, segments = read_archive(args.features), read_segments(args.segments)
    if args.model:
        embeddings = embed_segments(load_awe_model(args.model), archive, segments)
    else:
        embeddings = downsample_segments(archive, segments, args.n_keep)
    write_embeddings(embeddings, _output(args.out))
    _print_json({"embeddings": len(embeddings), "dim": embeddings[0].dim if embeddings else 0})


def _report_summary(report, out: Optional[Path]):
    if out:
        export_report(report, _output(out))
    _print_json({"ap": report.ap, "n_pairs": report.n_pairs, "tie_count": report.tie_count})


def eval_ap(args):
    report = same_different_ap(
        EvalSet.from_embeddings(read_embeddings(args.embeddings)), args.distance
    )
    _report_summary(report, args.out)


def eval_dtw(args):
    eval_set = EvalSet.from_archive(read_archive(args.features), read_segments(args.segments))
    _report_summary(dtw_same_different_ap(eval_set, args.metric), args.out)


def eval_probe(args):
    embeddings = read_embeddings(args.embeddings)
    result = speaker_probe(
        embedding_matrix(embeddings), [_x.speaker for _x in embeddings], args.seed
    )
    _print_json(
        {
            "accuracy": result.accuracy,
            "majority": result.majority,
            "n_test": result.n_test,
            "n_classes": result.n_classes,
        }
    )


def _summary_records(root: Path):
    return [_x.as_record() for _x in summarize(collect_reports(root / "runs"))]


def grid(args):
    config = _experiment_config(args)
    if args.epochs_from:
        config = replace(config, epochs_from=tuple(resolve_traces(args.epochs_from)))
    manifest, _ = run_experiment(config, args.out, args.jobs)
    _print_json({"manifest": manifest.content_hash(), "summary": _summary_records(args.out)})


def crosslingual(args):
    config = load_config(args.config, CrosslingualConfig, args.overrides)
    target = config.target
    if args.epochs_from:
        target = replace(target, epochs_from=tuple(resolve_traces(args.epochs_from)))
    manifest, _ = run_crosslingual(config.source, target, args.out, args.jobs)
    _print_json({"manifest": manifest.content_hash(), "summary": _summary_records(args.out)})


def summarize_verb(args):
    rows = summarize(collect_reports(args.runs))
    if args.out:
        write_summary(rows, _output(args.out))
    _print_json([_x.as_record() for _x in rows])


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awe-forge",
        description="Acoustic word embeddings from self-supervised frame features.",
    )
    bind_all(parser, [ARGUMENT_LOG_LEVEL, ARGUMENT_MODULES])
    verbs = parser.add_subparsers(dest="verb", required=True)

    sub = verbs.add_parser("synth", help="Generate a synthetic corpus and its ground truth.")
    sub.add_argument("--spec", default="corpus", help="Corpus spec file or preset.")
    sub.add_argument("--out", type=Path, required=True, help="Feature archive (*.farc).")
    sub.add_argument("--truth", type=Path, required=True, help="Ground-truth word alignments.")
    sub.add_argument("--deltas", action="store_true", help="Append delta and delta-delta features.")
    sub.add_argument("--normalize", choices=NORMALIZE_MODES, default="none")
    ARGUMENT_OVERRIDES.bind(sub)
    sub.set_defaults(fxn=synth)

    sub = verbs.add_parser("features", help="MFCC archive of a directory of WAV files.")
    sub.add_argument("--wav-dir", type=Path, required=True)
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--config", default=None, help="MFCC config file.")
    sub.add_argument("--deltas", action="store_true")
    sub.add_argument("--normalize", choices=NORMALIZE_MODES, default="per-speaker")
    ARGUMENT_OVERRIDES.bind(sub)
    sub.set_defaults(fxn=features)

    pairs = verbs.add_parser("pairs", help="UTD pair lists.").add_subparsers(
        dest="pairs_verb", required=True
    )
    sub = pairs.add_parser("simulate", help="Simulated UTD pairs from ground truth.")
    sub.add_argument("--truth", type=Path, required=True)
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--budget", type=int, default=2000)
    sub.add_argument("--error-rate", type=float, default=0.0)
    sub.add_argument("--jitter", type=int, default=0, help="Maximum boundary shift in frames.")
    ARGUMENT_SEED.bind(sub)
    sub.set_defaults(fxn=pairs_simulate)

    sub = pairs.add_parser("align", help="DTW-aligned frame pairs of a pair list.")
    bind_all(sub, [ARGUMENT_PAIRS, ARGUMENT_FEATURES])
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--metric", choices=METRICS, default="euclidean")
    sub.set_defaults(fxn=pairs_align)

    sub = verbs.add_parser("train-frame", help="Train a CPC, APC or frame CAE model.")
    sub.add_argument(
        "--kind", choices=[_x for _x in FEATURE_KINDS if _x != "mfcc"], required=True
    )
    bind_all(sub, [ARGUMENT_FEATURES, ARGUMENT_MODEL_OUT, ARGUMENT_TRACE])
    sub.add_argument("--frame-pairs", type=Path, default=None, help="Required by the frame CAE.")
    sub.add_argument("--validation", type=Path, default=None, help="Validation segments.")
    bind_all(sub, [ARGUMENT_CONFIG, ARGUMENT_SEED, ARGUMENT_OVERRIDES])
    sub.set_defaults(fxn=train_frame)

    sub = verbs.add_parser("encode", help="Encode a feature archive with a frame model.")
    sub.add_argument("--model", type=Path, required=True)
    ARGUMENT_FEATURES.bind(sub)
    sub.add_argument("--out", type=Path, required=True)
    sub.set_defaults(fxn=encode)

    sub = verbs.add_parser("train-awe", help="Train a CAE-RNN embedding model.")
    bind_all(sub, [ARGUMENT_FEATURES, ARGUMENT_PAIRS, ARGUMENT_MODEL_OUT, ARGUMENT_TRACE])
    sub.add_argument("--validation", type=Path, default=None, help="Validation segments.")
    bind_all(sub, [ARGUMENT_CONFIG, ARGUMENT_SEED, ARGUMENT_EPOCHS_FROM, ARGUMENT_OVERRIDES])
    sub.set_defaults(fxn=train_awe_verb)

    sub = verbs.add_parser("embed", help="Embed segments with an AWE model or by downsampling.")
    sub.add_argument("--model", type=Path, default=None, help="AWE model. Downsamples when absent.")
    bind_all(sub, [ARGUMENT_FEATURES, ARGUMENT_SEGMENTS])
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--n-keep", type=int, default=10)
    sub.set_defaults(fxn=embed)

    evals = verbs.add_parser("eval", help="Evaluate embeddings.").add_subparsers(
        dest="eval_verb", required=True
    )
    sub = evals.add_parser("ap", help="Same-different AP of an embedding file.")
    bind_all(sub, [ARGUMENT_EMBEDDINGS, ARGUMENT_REPORT, ARGUMENT_DISTANCE])
    sub.set_defaults(fxn=eval_ap)

    sub = evals.add_parser("dtw", help="Same-different AP of direct DTW alignment costs.")
    bind_all(sub, [ARGUMENT_FEATURES, ARGUMENT_SEGMENTS, ARGUMENT_REPORT])
    sub.add_argument("--metric", choices=METRICS, default="euclidean")
    sub.set_defaults(fxn=eval_dtw)

    sub = evals.add_parser("probe", help="Speaker probe accuracy of an embedding file.")
    bind_all(sub, [ARGUMENT_EMBEDDINGS, ARGUMENT_SEED])
    sub.set_defaults(fxn=eval_probe)

    sub = verbs.add_parser("grid", help="Run every feature kind, method and seed of a config.")
    sub.add_argument("--out", type=Path, required=True, help="Run directory.")
    bind_all(sub, [ARGUMENT_CONFIG, ARGUMENT_JOBS, ARGUMENT_EPOCHS_FROM, ARGUMENT_OVERRIDES])
    sub.set_defaults(fxn=grid)

    sub = verbs.add_parser("crosslingual", help="Transfer frame models across languages.")
    sub.add_argument("--out", type=Path, required=True, help="Run directory.")
    sub.add_argument("--config", default="crosslingual", help="Crosslingual config or preset.")
    bind_all(sub, [ARGUMENT_JOBS, ARGUMENT_EPOCHS_FROM, ARGUMENT_OVERRIDES])
    sub.set_defaults(fxn=crosslingual)

    sub = verbs.add_parser("summarize", help="Mean and std over the reports under a directory.")
    sub.add_argument("--runs", type=Path, required=True, help="Directory searched for reports.")
    sub.add_argument("--out", type=Path, default=None, help="Summary CSV file.")
    sub.set_defaults(fxn=summarize_verb)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    logging.captureWarnings(True)
    import_parser_modules(args.modules)
    try:
        args.fxn(args)
    except AweForgeError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
