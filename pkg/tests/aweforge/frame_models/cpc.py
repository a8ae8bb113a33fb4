from dataclasses import replace
from unittest import TestCase

import numpy as np
import numpy.testing as npt

from aweforge.config import load_config
from aweforge.errors import ConfigurationError, DataError, TrainingError, UsageError
from aweforge.frame_models import cpc as mdl
from aweforge.nn import grad_check_model
from aweforge.pipeline import ExperimentConfig
from aweforge.synth import CorpusSpec, generate_corpus

TINY = dict(
    input_dim=3, hidden_dim=8, n_hidden=2, dropout_after=1, z_dim=4, c_dim=5, steps=2, n_candidates=4
)


def tiny_model(seed=0, **kwargs):
    return mdl.CpcModel(mdl.CpcConfig(**{**TINY, **kwargs}), seed=seed)


def tiny_corpus(n_speakers=4, n_utterances=24, seed=0):
    return generate_corpus(
        CorpusSpec(
            dim=3,
            n_speakers=n_speakers,
            n_utterances=n_utterances,
            n_word_types=4,
            words_per_utterance=(2, 3),
            seed=seed,
        )
    )[0]


class TestCpcConfig(TestCase):
    def test_descriptors(self):
        model = mdl.CpcModel(mdl.CpcConfig())
        descriptors = model.stack_descriptors()
        encoder = descriptors["encoder"].split("; ")
        self.assertEqual(encoder.count("layer-norm(512)"), 6)
        self.assertEqual(encoder.index("dropout(0.5)"), 9)
        self.assertEqual(encoder[-1], "affine(512,64)")
        self.assertEqual(descriptors["autoregressor"], "lstm(64,356)")
        self.assertEqual(descriptors["predictors"], "affine(356,192)")
        self.assertEqual(model.output_dim, 356)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            mdl.CpcConfig(steps=0)
        with self.assertRaises(ConfigurationError):
            mdl.CpcConfig(n_candidates=1)


class TestScores(TestCase):
    def setUp(self):
        self.model = tiny_model()
        self.frames = np.random.default_rng(0).standard_normal((6, 3))

    def set_predictor_bias(self, bias):
        stack = self.model.stacks["predictors"]
        stack.assign(np.concatenate([np.zeros(stack.layout["0.W"].size), bias]))

    def test_zero_prediction(self):
        self.set_predictor_bias(np.zeros(8))
        candidates = np.random.default_rng(1).standard_normal((5, 4))
        scores = mdl.cpc_scores(self.model, self.frames, 1, 2, candidates)
        npt.assert_array_equal(scores, 1.0)

    def test_arithmetic(self):
        bias = np.zeros(8)
        bias[4] = np.log(2.0)
        self.set_predictor_bias(bias)
        candidates = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        scores = mdl.cpc_scores(self.model, self.frames, 0, 2, candidates)
        npt.assert_allclose(scores, [2.0, 1.0], rtol=1e-12)
        npt.assert_array_equal(mdl.cpc_scores(self.model, self.frames, 0, 1, candidates), 1.0)

    def test_positive(self):
        candidates = np.random.default_rng(2).standard_normal((10, 4))
        scores = mdl.cpc_scores(self.model, self.frames, 2, 1, candidates)
        self.assertTrue(np.all(scores > 0))

    def test_invalid_step(self):
        with self.assertRaises(UsageError):
            mdl.cpc_scores(self.model, self.frames, 0, 3, np.zeros((2, 4)))
        with self.assertRaises(UsageError):
            mdl.cpc_scores(self.model, self.frames, 4, 2, np.zeros((2, 4)))


class TestInfoNce(TestCase):
    def test_uniform(self):
        self.assertAlmostEqual(mdl.info_nce_loss(np.ones(32), 5), 3.4657359, places=7)

    def test_saturation(self):
        self.assertLess(mdl.info_nce_loss([1e9, 1.0, 1.0, 1.0], 0), 1e-8)

    def test_arithmetic(self):
        self.assertAlmostEqual(mdl.info_nce_loss([1, 2, 3, 4], 2), 1.2039728, places=7)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            scores = np.exp(rng.normal(scale=3.0, size=n))
            true_index = int(rng.integers(n))
            self.assertGreaterEqual(mdl.info_nce_loss(scores, true_index), 0.0)
            self.assertLessEqual(
                mdl.info_nce_loss(scores, int(np.argmax(scores))), np.log(n) + 1e-12
            )

    def test_errors(self):
        with self.assertRaises(TrainingError):
            mdl.info_nce_loss([1.0, np.inf], 0)
        with self.assertRaises(TrainingError):
            mdl.info_nce_loss([1.0, 0.0], 0)
        with self.assertRaises(UsageError):
            mdl.info_nce_loss([1.0, 2.0], 2)


class TestCpcModel(TestCase):
    def test_causality(self):
        model = tiny_model()
        rng = np.random.default_rng(3)
        for _ in range(20):
            frames = rng.standard_normal((int(rng.integers(2, 12)), 3))
            t = int(rng.integers(len(frames) - 1))
            modified = frames.copy()
            modified[t + 1 :] = rng.standard_normal(modified[t + 1 :].shape)
            npt.assert_array_equal(
                model._encode(frames)[: t + 1], model._encode(modified)[: t + 1]
            )

    def test_single_frame(self):
        model = tiny_model()
        frames = np.random.default_rng(4).standard_normal((5, 3))
        self.assertEqual(model._encode(frames[:1]).shape, (1, 5))
        npt.assert_allclose(model._encode(frames[:1])[0], model._encode(frames)[0], atol=1e-12)

    def test_grad_check(self):
        rng = np.random.default_rng(5)
        for draw in range(20):
            n_hidden, steps = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            config = mdl.CpcConfig(
                input_dim=int(rng.integers(2, 5)),
                hidden_dim=int(rng.integers(3, 9)),
                n_hidden=n_hidden,
                dropout_after=int(rng.integers(1, n_hidden + 1)),
                z_dim=int(rng.integers(2, 6)),
                c_dim=int(rng.integers(2, 6)),
                steps=steps,
                n_candidates=int(rng.integers(2, 6)),
            )
            model = mdl.CpcModel(config, seed=draw)
            n_utterances = int(rng.integers(1, 4))
            batch = mdl.CpcBatch(
                rng.standard_normal((n_utterances, rng.integers(steps + 1, 9), config.input_dim)),
                rng.standard_normal((n_utterances, rng.integers(1, 7), config.input_dim)),
            )
            with self.subTest(draw=draw, config=config):
                report = grad_check_model(model, batch, seed=draw)
                self.assertTrue(report.passed, str(report))

    def test_step_components(self):
        model = tiny_model(seed=6, dropout=0.0, steps=1)
        rng = np.random.default_rng(6)
        batch = mdl.CpcBatch(rng.standard_normal((1, 3, 3)), rng.standard_normal((1, 4, 3)))
        loss, _, components = model.loss_and_gradients(batch, seed=0)
        self.assertEqual(set(components), {"step1"})
        self.assertGreater(loss, 0.0)


class TestBatching(TestCase):
    def test_speaker_batches(self):
        speakers = {f"s{_k}": [f"s{_k}u{_j}" for _j in range(2 + _k)] for _k in range(4)}
        batches = mdl.speaker_batches(speakers, 3, np.random.default_rng(0))
        self.assertGreater(len(batches), 0)
        for batch in batches:
            self.assertEqual(len(batch), 3)
            self.assertEqual(len({_u.split("u")[0] for _u in batch}), 3)
        used = [_u for _b in batches for _u in _b]
        self.assertEqual(len(used), len(set(used)))

    def test_too_few_speakers(self):
        archive = tiny_corpus(n_speakers=3, n_utterances=9)
        with self.assertRaises(DataError):
            mdl.train_cpc(tiny_model(), archive, mdl.CpcSchedule(batch_speakers=4, max_epochs=1))


class TestTrainCpc(TestCase):
    schedule = mdl.CpcSchedule(lr=1e-2, max_epochs=25, batch_speakers=4, pool_size=16)

    def test_loss_decreases(self):
        archive = tiny_corpus()
        trace = mdl.train_cpc(tiny_model(), archive, self.schedule, seed=0)
        self.assertEqual(len(trace.epochs), 25)
        self.assertLess(np.mean(trace.losses[-5:]), np.mean(trace.losses[:5]))
        self.assertTrue(all(np.isfinite(trace.losses)))

    def test_deterministic(self):
        archive = tiny_corpus()
        schedule = mdl.CpcSchedule(lr=1e-2, max_epochs=3, batch_speakers=4, pool_size=16)
        traces = [mdl.train_cpc(tiny_model(), archive, schedule, seed=1) for _ in range(2)]
        self.assertEqual(traces[0].losses, traces[1].losses)

    def test_frozen(self):
        archive = tiny_corpus()
        model = tiny_model()
        before = {_k: _s.params.copy() for _k, _s in model.stacks.items()}
        schedule = mdl.CpcSchedule(
            lr=0.0, max_epochs=3, batch_speakers=4, pool_size=16, reseed_every_epoch=False
        )
        trace = mdl.train_cpc(model, archive, schedule, seed=2)
        self.assertLess(max(trace.losses) - min(trace.losses), 1e-9)
        for name, params in before.items():
            npt.assert_array_equal(model.stacks[name].params, params)

    def test_early_stopping(self):
        archive = tiny_corpus()
        aps = iter(np.linspace(0.9, 0.1, 50))
        schedule = mdl.CpcSchedule(
            lr=1e-2, max_epochs=50, batch_speakers=4, pool_size=16, eval_every=2, patience=2
        )
        trace = mdl.train_cpc(tiny_model(), archive, schedule, seed=0, validate=lambda _m: next(aps))
        self.assertTrue(trace.stopped_early)
        self.assertEqual(trace.best_epoch, 2)
        self.assertEqual(len(trace.epochs), 6)


class TestDeskPreset(TestCase):
    def test_one_epoch(self):
        config = load_config("desk", ExperimentConfig)
        archive, _ = generate_corpus(config.corpus)
        self.assertLessEqual(config.cpc_schedule.batch_speakers, len(mdl.eligible_speakers(archive)))
        model = mdl.CpcModel(replace(config.cpc, input_dim=archive.dim), seed=1)
        trace = mdl.train_cpc(model, archive, replace(config.cpc_schedule, max_epochs=1), seed=1)
        self.assertEqual(len(trace.epochs), 1)
        self.assertTrue(np.isfinite(trace.losses[0]))
