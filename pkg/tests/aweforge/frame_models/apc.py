from unittest import TestCase

import numpy as np
import numpy.testing as npt

from aweforge.errors import ConfigurationError
from aweforge.features import FeatureArchive, FeatureSequence
from aweforge.frame_models import apc as mdl
from aweforge.nn import grad_check_model

TINY_AUX = dict(anchors=3, history=6, length=3, shift=2, weight=0.1)


def tiny_model(seed=0, weight=0.1, dim=3):
    aux = mdl.AuxConfig(**{**TINY_AUX, "weight": weight})
    config = mdl.ApcConfig(input_dim=dim, hidden_dim=4, n_layers=2, shift=2, aux=aux)
    return mdl.ApcModel(config, seed=seed)


def l1_reference(prediction, target):
    return sum(abs(_p - _t) for _p, _t in zip(prediction, target))


class TestConfig(TestCase):
    def test_defaults(self):
        model = mdl.ApcModel(mdl.ApcConfig(input_dim=13))
        self.assertEqual(
            model.stack_descriptors(),
            {"encoder": "gru(13,512); gru(512,512); gru(512,512)", "predictor": "affine(512,13)"},
        )
        self.assertEqual(mdl.AuxConfig().min_frames, 26)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            mdl.AuxConfig(history=5, length=7)
        with self.assertRaises(ConfigurationError):
            mdl.AuxConfig(weight=-0.1)
        with self.assertRaises(ConfigurationError):
            mdl.ApcConfig(shift=0)


class TestObjective(TestCase):
    def test_perfect(self):
        frames = np.random.default_rng(0).standard_normal((10, 13))
        predictions = np.concatenate([frames[2:], np.zeros((2, 13))])
        loss, _ = mdl.apc_objective(predictions, frames, 2)
        self.assertEqual(loss, 0.0)

    def test_unit_offset(self):
        frames = np.random.default_rng(1).standard_normal((10, 13))
        predictions = np.concatenate([frames[2:] + 1.0, np.zeros((2, 13))])
        loss, grad = mdl.apc_objective(predictions, frames, 2)
        self.assertAlmostEqual(loss, 13.0, places=12)
        npt.assert_array_equal(grad[-2:], 0.0)


class TestApcLoss(TestCase):
    def test_scalar_reference(self):
        model = tiny_model(seed=1)
        frames = np.random.default_rng(2).standard_normal((30, 3))
        aux = model.config.aux
        loss = mdl.apc_loss(model, frames, seed=3)

        predictions = model.predict(frames)
        main = np.mean([l1_reference(predictions[_t], frames[_t + 2]) for _t in range(28)])
        anchors = mdl.apc_anchors(30, aux, np.random.default_rng(3))
        slice_losses = []
        for anchor in anchors:
            start = anchor - aux.history
            slice_predictions = model.predict(frames[start : start + aux.length])
            slice_losses.append(
                np.mean(
                    [
                        l1_reference(slice_predictions[_j], frames[start + _j + aux.shift])
                        for _j in range(aux.length)
                    ]
                )
            )
        expected_aux = np.mean(slice_losses)

        self.assertAlmostEqual(loss.main, main, places=10)
        self.assertAlmostEqual(loss.aux, expected_aux, places=10)
        self.assertAlmostEqual(loss.total, main + 0.1 * expected_aux, places=10)

    def test_short_utterances(self):
        model = tiny_model()
        frames = np.random.default_rng(4).standard_normal((11, 3))
        self.assertIsNone(mdl.apc_loss(model, frames).aux)
        self.assertIsNotNone(mdl.apc_loss(model, np.tile(frames, (2, 1))).aux)
        with self.assertRaises(ConfigurationError):
            mdl.apc_loss(model, frames[:2])

    def test_causality(self):
        model = tiny_model(seed=5)
        rng = np.random.default_rng(5)
        for _ in range(20):
            frames = rng.standard_normal((int(rng.integers(2, 15)), 3))
            t = int(rng.integers(len(frames) - 1))
            modified = frames.copy()
            modified[t + 1 :] += 1.0
            npt.assert_array_equal(model.predict(frames)[: t + 1], model.predict(modified)[: t + 1])

    def test_grad_check(self):
        rng = np.random.default_rng(6)
        for draw in range(20):
            shift = int(rng.integers(1, 4))
            aux = mdl.AuxConfig(**{**TINY_AUX, "weight": float(rng.choice([0.0, 0.1, 0.5]))})
            config = mdl.ApcConfig(
                input_dim=int(rng.integers(2, 5)),
                hidden_dim=int(rng.integers(3, 6)),
                n_layers=int(rng.integers(1, 3)),
                shift=shift,
                aux=aux,
            )
            model = mdl.ApcModel(config, seed=draw)
            batch = [
                rng.standard_normal((rng.integers(shift + 1, 17), config.input_dim))
                for _ in range(rng.integers(1, 3))
            ]
            with self.subTest(draw=draw, config=config):
                report = grad_check_model(model, batch, seed=draw)
                self.assertTrue(report.passed, str(report))


def constant_archive(n=12, length=30, value=0.3):
    return FeatureArchive(
        FeatureSequence(f"u{_k}", f"s{_k % 3}", np.full((length, 2), value)) for _k in range(n)
    )


class TestTrainApc(TestCase):
    def test_constant_corpus(self):
        model = tiny_model(dim=2, weight=0.0)
        schedule = mdl.ApcSchedule(lr=1e-2, epochs=10, batch_utterances=1)
        trace = mdl.train_apc(model, constant_archive(n=24), schedule, seed=0)
        self.assertEqual(len(trace.epochs), 10)
        self.assertLess(trace.losses[-1], 0.5 * trace.losses[0])

    def test_deterministic(self):
        archive = constant_archive(value=0.0)
        archive = archive.map(
            lambda _x: _x.replace_frames(
                np.random.default_rng(int(_x.utterance_id[1:])).standard_normal((30, 2))
            )
        )
        schedule = mdl.ApcSchedule(epochs=2, batch_utterances=4)
        traces = [mdl.train_apc(tiny_model(dim=2), archive, schedule, seed=3) for _ in range(2)]
        self.assertEqual(traces[0].losses, traces[1].losses)

    def test_aux_weight(self):
        archive = constant_archive().map(
            lambda _x: _x.replace_frames(
                np.random.default_rng(int(_x.utterance_id[1:])).standard_normal((30, 2))
            )
        )
        schedule = mdl.ApcSchedule(epochs=1, batch_utterances=4)
        traces = [
            mdl.train_apc(tiny_model(dim=2, weight=_w), archive, schedule, seed=0)
            for _w in [0.0, 0.1]
        ]
        for trace in traces:
            self.assertIn("aux", trace.epochs[0].components)
            self.assertGreater(trace.epochs[0].components["aux"], 0.0)
        self.assertNotEqual(traces[0].losses[0], traces[1].losses[0])

    def test_skips_short(self):
        archive = FeatureArchive(
            [
                FeatureSequence("long", "s", np.random.default_rng(0).standard_normal((20, 2))),
                FeatureSequence("short", "s", np.zeros((2, 2))),
            ]
        )
        with self.assertWarns(UserWarning):
            trace = mdl.train_apc(tiny_model(dim=2), archive, mdl.ApcSchedule(epochs=1), seed=0)
        self.assertEqual(len(trace.epochs), 1)

    def test_dimension(self):
        with self.assertRaises(ConfigurationError):
            mdl.train_apc(tiny_model(dim=3), constant_archive(), mdl.ApcSchedule(epochs=1))
