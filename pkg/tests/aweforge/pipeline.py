import csv
import shutil
from dataclasses import replace
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
import pytest

from aweforge import pipeline as mdl
from aweforge.awe import AweConfig, AweSchedule
from aweforge.config import load_config
from aweforge.errors import ConfigurationError, DimensionMismatch, StageError
from aweforge.evaluation import EvalSet, ProbeConfig, dtw_same_different_ap, read_report
from aweforge.features import write_archive
from aweforge.frame_models import (
    ApcConfig,
    ApcSchedule,
    AuxConfig,
    CpcConfig,
    CpcSchedule,
    FrameCaeConfig,
    FrameCaeSchedule,
)
from aweforge.serialization import Serializer
from aweforge.synth import CorpusSpec, eval_segments, generate_corpus, write_truth
from aweforge.training import read_trace

TINY_CORPUS = CorpusSpec(n_word_types=3, n_speakers=3, n_utterances=24, dim=3)


def tiny_config(**kwargs) -> mdl.ExperimentConfig:
    defaults = dict(
        name="tiny",
        corpus=TINY_CORPUS,
        features=("mfcc",),
        methods=("downsample",),
        seeds=(1,),
        split=(0.5, 0.25, 0.25),
        eval_items=None,
        pair_budget=20,
        cpc=CpcConfig(
            hidden_dim=8, n_hidden=1, dropout_after=1, z_dim=4, c_dim=4, steps=2, n_candidates=4
        ),
        cpc_schedule=CpcSchedule(
            lr=1e-3, max_epochs=2, batch_speakers=3, pool_size=16, eval_every=1, patience=2
        ),
        apc=ApcConfig(
            hidden_dim=6, n_layers=1, aux=AuxConfig(anchors=2, history=4, length=3, shift=2)
        ),
        apc_schedule=ApcSchedule(epochs=2, batch_utterances=4),
        cae=FrameCaeConfig(hidden_dim=6, n_layers=1, latent_dim=4),
        cae_schedule=FrameCaeSchedule(ae_epochs=1, cae_epochs=1, batch_size=64),
        awe=AweConfig(hidden_dim=6, n_layers=1, embedding_dim=4),
        awe_schedule=AweSchedule(
            ae_epochs=2, cae_epochs=2, ae_lr=1e-2, cae_lr=1e-2, batch_size=16
        ),
        probe=ProbeConfig(steps=20),
    )
    return mdl.ExperimentConfig(**{**defaults, **kwargs})


def read_summary(path):
    with open(path) as fo:
        return list(csv.DictReader(fo))


class TestExperimentConfig(TestCase):
    def test_defaults(self):
        config = mdl.ExperimentConfig()
        self.assertEqual(config.features, ("mfcc", "cpc", "apc", "cae"))
        self.assertEqual(config.methods, ("downsample", "cae-rnn", "dtw"))
        self.assertEqual(config.seeds, (1, 2, 3))
        self.assertEqual(config.language, "A")
        self.assertEqual(config.align_metric, "euclidean")
        self.assertEqual(config.dtw_metric, "euclidean")
        self.assertEqual(config.distance, "cosine")

    def test_normalized_fields(self):
        config = mdl.ExperimentConfig(methods=["dtw-direct"], seeds=[3, 4], features=["cpc"])
        self.assertEqual(config.methods, ("dtw",))
        self.assertEqual(config.seeds, (3, 4))
        self.assertEqual(config.features, ("cpc",))

    def test_serialization(self):
        config = tiny_config(features=("mfcc", "apc"))
        srl = Serializer()
        self.assertEqual(srl.deserialize(srl.serialize(config)), config)

    def test_invalid(self):
        for kwargs in [
            {"features": ("wav",)},
            {"methods": ("knn",)},
            {"seeds": ()},
            {"seeds": (1, 1)},
            {"archive": "features.farc"},
            {"normalize": "max"},
            {"distance": "manhattan"},
            {"align_metric": "manhattan"},
            {"dtw_metric": "manhattan"},
        ]:
            with self.assertRaises(ConfigurationError):
                mdl.ExperimentConfig(**kwargs)

    def test_check_paths(self):
        with self.assertRaises(ConfigurationError):
            mdl.ExperimentConfig(pairs="no/such/pairs.txt").check_paths()
        mdl.ExperimentConfig().check_paths()

    def test_awe_training_schedule(self):
        config = tiny_config()
        self.assertEqual(config.awe_training_schedule(), config.awe_schedule)


class TestEvaluateMethod(TestCase):
    def test_dtw_metric(self):
        archive, truth = generate_corpus(TINY_CORPUS)
        segments = eval_segments(truth, archive, max_items=12, seed=0)
        eval_set = EvalSet.from_archive(archive, segments)
        for metric in ["euclidean", "cosine"]:
            config = mdl.ExperimentConfig(dtw_metric=metric, distance="cosine")
            report = mdl.evaluate_method("dtw", archive, segments, config, 1, {})
            self.assertEqual(report.distance, metric)
            self.assertEqual(report.ap, dtw_same_different_ap(eval_set, metric).ap)


class TestStageRunner(TestCase):
    def test_key(self):
        with TemporaryDirectory() as temp_dir:
            temp_dir = Path(temp_dir)
            (temp_dir / "a.txt").write_text("abc")
            (temp_dir / "b.txt").write_text("abc")
            (temp_dir / "c.txt").write_text("abd")
            key = mdl.StageRunner.key("s", {"x": 1}, {"in": temp_dir / "a.txt"})
            self.assertEqual(key, mdl.StageRunner.key("s", {"x": 1}, {"in": temp_dir / "b.txt"}))
            for other in [
                mdl.StageRunner.key("s", {"x": 1}, {"in": temp_dir / "c.txt"}),
                mdl.StageRunner.key("s", {"x": 2}, {"in": temp_dir / "a.txt"}),
                mdl.StageRunner.key("t", {"x": 1}, {"in": temp_dir / "a.txt"}),
                mdl.StageRunner.key("s", {"x": 1}, {"other": temp_dir / "a.txt"}),
            ]:
                self.assertNotEqual(key, other)

    def test_skip(self):
        calls = []

        def build(out_dir):
            calls.append(out_dir)
            (out_dir / "out.txt").write_text("done")

        with TemporaryDirectory() as temp_dir:
            runner = mdl.StageRunner(temp_dir)
            first = runner.run("stage", {"a": (1, 2)}, {}, build)
            second = runner.run("stage", {"a": (1, 2)}, {}, build)
            self.assertEqual(first, second)
            self.assertEqual(len(calls), 1)
            self.assertEqual([_x.skipped for _x in runner.records], [False, True])
            self.assertEqual(runner.records[0].outputs, runner.records[1].outputs)
            self.assertEqual(list(runner.records[0].outputs), ["out.txt"])
            self.assertEqual(
                runner.records[0].outputs["out.txt"], mdl.file_sha256(first / "out.txt")
            )

    def test_failure(self):
        def build(out_dir):
            (out_dir / "partial.txt").write_text("partial")
            raise ValueError("broken")

        with TemporaryDirectory() as temp_dir:
            runner = mdl.StageRunner(temp_dir)
            with self.assertRaises(StageError) as context:
                runner.run("stage", {}, {}, build)
            self.assertEqual(context.exception.stage, "stage")
            self.assertIsInstance(context.exception.cause, ValueError)
            (out_dir,) = (Path(temp_dir) / "stages").iterdir()
            self.assertTrue((out_dir / "partial.txt").is_file())
            self.assertFalse((out_dir / mdl.DONE_MARKER).exists())

            # Runs again after a failure.
            runner.run("stage", {}, {}, lambda _dir: (_dir / "out.txt").write_text("ok"))
            self.assertFalse(runner.records[-1].skipped)
            self.assertEqual(set(runner.records[-1].outputs), {"partial.txt", "out.txt"})

    def test_exit_code(self):
        def build(out_dir):
            raise ConfigurationError("bad")

        with TemporaryDirectory() as temp_dir:
            with self.assertRaises(StageError) as context:
                mdl.StageRunner(temp_dir).run("stage", {}, {}, build)
            self.assertEqual(context.exception.exit_code, 2)


class TestRunExperiment(TestCase):
    def test_grid(self):
        config = tiny_config(
            features=("mfcc", "apc"), methods=("downsample", "cae-rnn", "dtw"), seeds=(1, 2)
        )
        with TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            manifest, reports = mdl.run_experiment(config, root)
            self.assertEqual(len(reports), 12)
            self.assertEqual(
                {(_r.meta["features"], _r.meta["method"], _r.meta["seed"]) for _r in reports},
                {
                    (_f, _m, _s)
                    for _f in ["mfcc", "apc"]
                    for _m in ["downsample", "cae-rnn", "dtw"]
                    for _s in [1, 2]
                },
            )
            for report in reports:
                self.assertTrue(0.0 < report.ap <= 1.0)
                self.assertEqual(report.meta["language"], "A")
                if report.meta["method"] == "dtw":
                    self.assertIsNone(report.speaker_accuracy)

            # Summary rows recount the per-seed reports on disk.
            rows = read_summary(root / "summary.csv")
            self.assertEqual(len(rows), 6)
            for row in rows:
                cell = f"{row['features']}-{row['method']}"
                aps = [
                    read_report(root / "runs" / f"seed-{_s}" / cell / "report.json").ap for _s in [1, 2]
                ]
                self.assertAlmostEqual(float(row["ap_mean"]), np.mean(aps), places=12)
                self.assertAlmostEqual(float(row["ap_std"]), np.std(aps), places=12)

            reloaded = mdl.read_manifest(root / "manifest.json")
            self.assertEqual(reloaded.content_hash(), manifest.content_hash())
            self.assertIn("summary.csv", manifest.outputs)
            self.assertEqual(len(manifest.outputs), 13)
            self.assertIn("numpy", manifest.versions)
            self.assertEqual(manifest.created.tzinfo.zone, "UTC")
            for record in manifest.stages:
                self.assertFalse(record.skipped)

            # Unchanged stages are skipped on re-run.
            summary = (root / "summary.csv").read_bytes()
            rerun, rerun_reports = mdl.run_experiment(config, root)
            self.assertTrue(all(_x.skipped for _x in rerun.stages))
            self.assertEqual(rerun.content_hash(), manifest.content_hash())
            self.assertEqual((root / "summary.csv").read_bytes(), summary)
            self.assertEqual([_x.ap for _x in rerun_reports], [_x.ap for _x in reports])

            # Stages shared across seeds run once, seed-specific ones once per seed.
            names = [_x.name for _x in manifest.stages]
            self.assertEqual(names.count("corpus"), 1)
            self.assertEqual(names.count("frame-apc"), 2)
            self.assertEqual(names.count("awe-mfcc"), 2)

    def test_reproducible(self):
        config = tiny_config(features=("mfcc",), methods=("downsample", "cae-rnn"))
        with TemporaryDirectory() as temp_dir:
            first, first_reports = mdl.run_experiment(config, Path(temp_dir) / "first")
            second, second_reports = mdl.run_experiment(config, Path(temp_dir) / "second")
        self.assertEqual(first.content_hash(), second.content_hash())
        self.assertEqual([_x.ap for _x in first_reports], [_x.ap for _x in second_reports])

    def test_config_changes_invalidate_stages(self):
        config = tiny_config(methods=("cae-rnn",))
        with TemporaryDirectory() as temp_dir:
            mdl.run_experiment(config, temp_dir)
            changed = replace(config, awe=replace(config.awe, embedding_dim=5))
            manifest, _ = mdl.run_experiment(changed, temp_dir)
        skipped = {_x.name: _x.skipped for _x in manifest.stages}
        self.assertTrue(skipped["corpus"])
        self.assertTrue(skipped["pairs"])
        self.assertFalse(skipped["awe-mfcc"])
        self.assertFalse(skipped["eval-mfcc-cae-rnn"])

    def test_ingested_archive(self):
        archive, truth = generate_corpus(TINY_CORPUS)
        with TemporaryDirectory() as temp_dir:
            temp_dir = Path(temp_dir)
            write_archive(archive, temp_dir / "features.farc")
            write_truth(truth, temp_dir / "truth.txt")
            config = tiny_config(
                archive=str(temp_dir / "features.farc"),
                truth=str(temp_dir / "truth.txt"),
                deltas=False,
                methods=("downsample", "dtw"),
            )
            _, reports = mdl.run_experiment(config, temp_dir / "run")
        self.assertEqual(len(reports), 2)
        self.assertEqual(reports[0].n_pairs, reports[1].n_pairs)

    def test_missing_paths(self):
        with TemporaryDirectory() as temp_dir:
            with self.assertRaises(ConfigurationError):
                mdl.run_experiment(tiny_config(pairs="no/such/pairs.txt"), temp_dir)
            self.assertFalse((Path(temp_dir) / "stages").exists())

    def test_epochs_from(self):
        config = tiny_config(methods=("cae-rnn",))
        with TemporaryDirectory() as temp_dir:
            mdl.run_experiment(config, temp_dir)
            trace_path = Path(temp_dir) / "runs" / "seed-1" / "mfcc-cae-rnn" / "trace.json"
            trace = read_trace(trace_path)
            fixed = replace(config, validation=False, epochs_from=(str(trace_path),))
            schedule = fixed.awe_training_schedule()
        self.assertEqual(schedule.ae_epochs, trace.phase_best.get("ae-rnn", 0))
        self.assertEqual(schedule.cae_epochs, trace.phase_best.get("cae-rnn", 0))
        self.assertIsNone(schedule.patience)


class TestRunCrosslingual(TestCase):
    def test_same_language(self):
        config = tiny_config(features=("apc",))
        with TemporaryDirectory() as temp_dir:
            manifest, reports = mdl.run_experiment(config, temp_dir)
            transfer, transfer_reports = mdl.run_crosslingual(config, config, temp_dir)
        self.assertTrue(all(_x.skipped for _x in transfer.stages))
        self.assertEqual(transfer.content_hash(), manifest.content_hash())
        self.assertEqual(transfer_reports, reports)

    def test_transfer(self):
        source = tiny_config(features=("mfcc", "cpc"))
        target = replace(source, corpus=TINY_CORPUS.language(7, "B"), validation=False)
        with TemporaryDirectory() as temp_dir:
            manifest, reports = mdl.run_crosslingual(source, target, temp_dir)
            self.assertIsInstance(
                mdl.read_manifest(Path(temp_dir) / "manifest.json").config, mdl.CrosslingualConfig
            )
        self.assertEqual([_x.meta["language"] for _x in reports], ["B", "B"])
        self.assertEqual([_x.meta["source_language"] for _x in reports], ["A", "A"])
        names = [_x.name for _x in manifest.stages]
        self.assertEqual(names.count("corpus"), 2)
        self.assertEqual(names.count("frame-cpc"), 1)
        self.assertEqual(names.count("encode-cpc"), 1)

    def test_dimension_mismatch(self):
        source = tiny_config(features=("apc",))
        target = replace(source, corpus=replace(TINY_CORPUS, dim=4, name="B"))
        with TemporaryDirectory() as temp_dir:
            with self.assertRaises(DimensionMismatch):
                mdl.run_crosslingual(source, target, temp_dir)
            stages = [_x.name for _x in (Path(temp_dir) / "stages").iterdir()]
        self.assertFalse([_x for _x in stages if _x.startswith("frame-")])


def summary_by_cell(path):
    return {(_r["features"], _r["method"]): _r for _r in read_summary(path)}


@pytest.mark.slow
class TestDeskGrid(TestCase):
    """
    The desk preset over its three seeds on the default corpus. Orderings are checked on seed means.
    """

    @classmethod
    def setUpClass(cls):
        cls.temp_dir = TemporaryDirectory()
        cls.root = Path(cls.temp_dir.name)
        mdl.run_experiment(load_config("desk", mdl.ExperimentConfig), cls.root / "A", jobs=3)
        cls.summary = summary_by_cell(cls.root / "A" / "summary.csv")

    @classmethod
    def tearDownClass(cls):
        cls.temp_dir.cleanup()

    def ap(self, features, method, summary=None):
        return float((summary or self.summary)[(features, method)]["ap_mean"])

    def awe_traces(self):
        return sorted((self.root / "A" / "runs").glob("seed-*/*-cae-rnn/trace.json"))

    def test_training_loss(self):
        traces = {}
        for path in (self.root / "A" / "stages").glob("frame-*/trace.json"):
            traces.setdefault(path.parent.name.split("-")[1], []).append(read_trace(path))
        traces["cae-rnn"] = [read_trace(_x) for _x in self.awe_traces()]
        self.assertEqual(
            {_k: len(_v) for _k, _v in traces.items()},
            {"cpc": 3, "apc": 3, "cae": 3, "cae-rnn": 12},
        )
        for kind, kind_traces in traces.items():
            kept = 0.7 if kind == "cae-rnn" else 0.5
            for trace in kind_traces:
                with self.subTest(kind=kind):
                    self.assertLessEqual(trace.losses[-1], kept * trace.losses[0])

    def test_feature_ordering(self):
        baseline = self.ap("mfcc", "downsample")
        self.assertGreaterEqual(self.ap("cpc", "cae-rnn") - baseline, 0.05)
        self.assertGreater(self.ap("mfcc", "cae-rnn"), baseline)
        self.assertGreaterEqual(
            max(self.ap(_k, "cae-rnn") for _k in ["cpc", "apc", "cae"]),
            self.ap("mfcc", "cae-rnn"),
        )

    def test_speaker_accuracy(self):
        accuracy = {
            _k: float(self.summary[(_k, "cae-rnn")]["speaker_acc_mean"]) for _k in ["cae", "mfcc"]
        }
        self.assertLessEqual(accuracy["cae"], accuracy["mfcc"])

    def test_crosslingual(self):
        config = load_config("crosslingual", mdl.CrosslingualConfig)
        self.assertEqual(config.source, load_config("desk", mdl.ExperimentConfig))
        # Frame models of language A come from the grid's stage cache.
        root = self.root / "B"
        shutil.copytree(self.root / "A" / "stages", root / "stages")
        target = replace(config.target, epochs_from=tuple(str(_x) for _x in self.awe_traces()))
        manifest, _ = mdl.run_crosslingual(config.source, target, root, jobs=3)
        self.assertTrue(all(_x.skipped for _x in manifest.stages if _x.name.startswith("frame-")))

        summary = summary_by_cell(root / "summary.csv")
        baseline = self.ap("mfcc", "downsample", summary)
        for kind in ["cpc", "apc", "cae"]:
            with self.subTest(kind=kind):
                self.assertGreater(self.ap(kind, "cae-rnn", summary), baseline)
