from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
import numpy.testing as npt

from aweforge.awe import model as mdl
from aweforge.errors import (
    ConfigurationError,
    DataError,
    FormatError,
    InputError,
    UnknownUtterances,
)
from aweforge.nn import LayerStack, grad_check_model, save_checkpoint
from aweforge.pairing import Segment, SegmentPair
from aweforge.synth import CorpusSpec, generate_corpus, simulate_utd_pairs
from aweforge.training import TrainingTrace, write_trace


def tiny_model(seed=0, dim=3):
    return mdl.AweModel(
        mdl.AweConfig(input_dim=dim, hidden_dim=5, n_layers=2, embedding_dim=4), seed=seed
    )


def set_constant_output(model, value):
    """
    Zeroes the decoder output weights so that every reconstructed frame equals ``value``.
    """
    stack = model.stacks["decoder"]
    index = len(stack.layers) - 1
    params = stack.params.copy()
    for name, array in [("W", 0.0), ("b", value)]:
        slot = stack.layout[f"{index}.{name}"]
        params[slot.offset : slot.offset + slot.size] = np.broadcast_to(array, slot.shape).ravel()
    stack.assign(params)


def scalar_loss(output, target):
    return sum(
        sum((output[_t][_j] - target[_t][_j]) ** 2 for _j in range(len(target[_t])))
        for _t in range(len(target))
    ) / len(target)


class TestAweModel(TestCase):
    def test_descriptors(self):
        descriptors = mdl.AweModel(mdl.AweConfig(input_dim=13)).stack_descriptors()
        self.assertEqual(descriptors["encoder"], "gru(13,512); gru(512,512); gru(512,512)")
        self.assertEqual(descriptors["head"], "affine(512,130)")
        self.assertEqual(descriptors["bridge"], "affine(130,1536)")
        self.assertEqual(
            descriptors["decoder"],
            "gru(130,512); gru(512,512); gru(512,512); affine(512,13)",
        )

    def test_replay(self):
        model = tiny_model(seed=1)
        frames = np.random.default_rng(1).standard_normal((9, 3))

        stack = model.stacks["encoder"]
        inputs = frames[None]
        for index, layer in enumerate(stack.layers):
            h = np.zeros((1, layer.hidden))
            outputs = []
            for t in range(inputs.shape[1]):
                step = inputs[:, t : t + 1]
                out, _ = layer.forward(stack.layer_params(index), step, False, None, h0=h)
                h = out[:, 0]
                outputs.append(h)
            inputs = np.stack(outputs, axis=1)
        head = model.stacks["head"].layer_params(0)
        expected = inputs[0, -1] @ head["W"] + head["b"]

        npt.assert_allclose(mdl.awe_encode(model, frames), expected, rtol=1e-10, atol=1e-12)

    def test_decoder_invariance(self):
        model = tiny_model(seed=2)
        frames = np.random.default_rng(2).standard_normal((7, 3))
        before = mdl.awe_encode(model, frames)
        for name in ["bridge", "decoder"]:
            stack = model.stacks[name]
            stack.assign(stack.params + np.random.default_rng(3).standard_normal(stack.n_params))
        npt.assert_array_equal(mdl.awe_encode(model, frames), before)

    def test_single_frame(self):
        model = tiny_model()
        embedding = mdl.awe_encode(model, np.ones((1, 3)))
        self.assertEqual(embedding.shape, (4,))
        self.assertTrue(np.all(np.isfinite(embedding)))
        with self.assertRaises(InputError):
            mdl.awe_encode(model, np.zeros((0, 3)))
        with self.assertRaises(ConfigurationError):
            mdl.awe_encode(model, np.zeros((4, 2)))

    def test_identical_segments(self):
        model = tiny_model(seed=4)
        frames = np.random.default_rng(4).standard_normal((6, 3))
        npt.assert_array_equal(mdl.awe_encode(model, frames), mdl.awe_encode(model, frames.copy()))


class TestLosses(TestCase):
    def test_perfect_reconstruction(self):
        model = tiny_model()
        value = np.array([0.5, -1.0, 2.0])
        set_constant_output(model, value)
        self.assertEqual(mdl.ae_rnn_loss(model, np.tile(value, (6, 1))), 0.0)

    def test_unit_offset(self):
        model = tiny_model()
        value = np.array([0.5, -1.0, 2.0])
        set_constant_output(model, value)
        frames = np.tile(value + np.array([1.0, 0.0, 0.0]), (6, 1))
        self.assertAlmostEqual(mdl.ae_rnn_loss(model, frames), 1.0, places=12)
        frames = np.tile(value + 1.0, (6, 1))
        self.assertAlmostEqual(mdl.ae_rnn_loss(model, frames), 3.0, places=12)

    def test_scalar_reference(self):
        model = tiny_model(seed=5)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((5, 3))
        self.assertAlmostEqual(
            mdl.ae_rnn_loss(model, x), scalar_loss(model.reconstruct(x, 5), x), places=10
        )
        y = rng.standard_normal((8, 3))
        self.assertAlmostEqual(
            mdl.cae_rnn_loss(model, x, y), scalar_loss(model.reconstruct(x, 8), y), places=10
        )

    def test_reduction(self):
        model = tiny_model(seed=6)
        x = np.random.default_rng(6).standard_normal((7, 3))
        self.assertEqual(mdl.cae_rnn_loss(model, x, x), mdl.ae_rnn_loss(model, x))

    def test_padded_batch(self):
        model = tiny_model(seed=7)
        rng = np.random.default_rng(7)
        items = [
            (rng.standard_normal((_n, 3)), rng.standard_normal((_m, 3)))
            for _n, _m in [(4, 9), (11, 2), (1, 5)]
        ]
        batch_loss = model.loss_and_gradients(mdl.AweBatch.from_items(items))[0]
        single = np.mean([mdl.cae_rnn_loss(model, _x, _y) for _x, _y in items])
        self.assertAlmostEqual(batch_loss, single, places=10)

    def test_grad_check(self):
        rng = np.random.default_rng(8)
        for draw in range(20):
            dim = int(rng.integers(2, 5))
            config = mdl.AweConfig(
                input_dim=dim,
                hidden_dim=int(rng.integers(3, 7)),
                n_layers=int(rng.integers(1, 3)),
                embedding_dim=int(rng.integers(2, 6)),
            )
            model = mdl.AweModel(config, seed=draw)
            batch = mdl.AweBatch.from_items(
                [
                    (
                        rng.standard_normal((rng.integers(1, 8), dim)),
                        rng.standard_normal((rng.integers(1, 8), dim)),
                    )
                    for _ in range(rng.integers(1, 4))
                ]
            )
            with self.subTest(draw=draw, config=config):
                report = grad_check_model(model, batch)
                self.assertTrue(report.passed, str(report))


class TestTrainAwe(TestCase):
    @classmethod
    def setUpClass(cls):
        cls.archive, truth = generate_corpus(
            CorpusSpec(dim=3, n_utterances=16, n_speakers=2, n_word_types=3, seed=0)
        )
        cls.pairs = simulate_utd_pairs(truth, 12, seed=0)

    def schedule(self, **kwargs):
        return mdl.AweSchedule(
            **{
                "ae_epochs": 2,
                "cae_epochs": 2,
                "ae_lr": 1e-2,
                "cae_lr": 1e-2,
                "batch_size": 8,
                **kwargs,
            }
        )

    def test_phases(self):
        trace = mdl.train_awe(tiny_model(), self.archive, self.pairs, self.schedule(), seed=0)
        self.assertEqual([_x.phase for _x in trace.epochs], ["ae-rnn"] * 2 + ["cae-rnn"] * 2)
        self.assertEqual(set(trace.start_losses), {"ae-rnn", "cae-rnn"})
        self.assertEqual(trace.phase_best, {"ae-rnn": 2, "cae-rnn": 2})
        self.assertEqual(trace.best_epoch, 4)

    def test_items(self):
        ae_items, cae_items = mdl.training_items(self.archive, self.pairs)
        members = {_s for _p in self.pairs for _s in (_p.first, _p.second)}
        self.assertEqual(len(ae_items), len(members))
        self.assertEqual(len(cae_items), 2 * len(self.pairs))
        for x, y in ae_items:
            self.assertIs(x, y)

    def test_continuity(self):
        ae_only = tiny_model()
        mdl.train_awe(ae_only, self.archive, self.pairs, self.schedule(cae_epochs=0), seed=1)
        cae_items = mdl.training_items(self.archive, self.pairs)[1]
        trace = mdl.train_awe(tiny_model(), self.archive, self.pairs, self.schedule(), seed=1)
        self.assertEqual(trace.start_losses["cae-rnn"], mdl.items_loss(ae_only, cae_items, 8))

    def test_deterministic(self):
        traces = [
            mdl.train_awe(tiny_model(), self.archive, self.pairs, self.schedule(), seed=2)
            for _ in range(2)
        ]
        self.assertEqual(traces[0], traces[1])

    def test_sanity(self):
        schedule = self.schedule(ae_epochs=30, cae_epochs=10)
        trace = mdl.train_awe(tiny_model(), self.archive, self.pairs, schedule, seed=0)
        ae = [_x.loss for _x in trace.phase("ae-rnn")]
        cae = [_x.loss for _x in trace.phase("cae-rnn")]
        self.assertLess(ae[-1], 0.8 * trace.start_losses["ae-rnn"])
        self.assertLess(np.mean(cae[-3:]), trace.start_losses["cae-rnn"])

    def test_early_stopping(self):
        scores = iter([0.3, 0.5, 0.4, 0.2, 0.6, 0.1, 0.1, 0.1])
        schedule = self.schedule(ae_epochs=4, cae_epochs=4, patience=2)
        trace = mdl.train_awe(
            tiny_model(),
            self.archive,
            self.pairs,
            schedule,
            seed=0,
            validate=lambda _m: next(scores),
        )
        self.assertEqual(len(trace.phase("ae-rnn")), 4)
        self.assertEqual(len(trace.phase("cae-rnn")), 3)
        self.assertEqual(trace.phase_best, {"ae-rnn": 2, "cae-rnn": 1})
        self.assertEqual(trace.best_epoch, 5)

    def test_errors(self):
        with self.assertRaises(DataError):
            mdl.train_awe(tiny_model(), self.archive, [], self.schedule())
        missing = SegmentPair(Segment("missing", 0, 3), Segment("missing", 3, 6))
        with self.assertRaises(UnknownUtterances):
            mdl.train_awe(tiny_model(), self.archive, [missing], self.schedule())
        with self.assertRaises(ConfigurationError):
            mdl.train_awe(tiny_model(dim=4), self.archive, self.pairs, self.schedule())


class TestEpochsFrom(TestCase):
    def trace(self, ae, cae):
        return TrainingTrace("awe", phase_best={"ae-rnn": ae, "cae-rnn": cae})

    def test_average(self):
        traces = [self.trace(10, 3), self.trace(14, 6)]
        self.assertEqual(mdl.epochs_from(traces), {"ae-rnn": 12, "cae-rnn": 4})
        with TemporaryDirectory() as temp_dir:
            paths = [Path(temp_dir) / f"trace{_k}.json" for _k in range(2)]
            for trace, path in zip(traces, paths):
                write_trace(trace, path)
            self.assertEqual(mdl.epochs_from(paths), mdl.epochs_from(traces))

    def test_fixed_schedule(self):
        schedule = mdl.fixed_schedule(
            mdl.AweSchedule(patience=3), {"ae-rnn": 12, "cae-rnn": 4}
        )
        self.assertEqual((schedule.ae_epochs, schedule.cae_epochs, schedule.patience), (12, 4, None))

    def test_errors(self):
        with self.assertRaises(ConfigurationError):
            mdl.epochs_from([])
        with self.assertRaises(ConfigurationError):
            mdl.epochs_from([TrainingTrace("cpc")])


class TestCheckpoint(TestCase):
    def test_round_trip(self):
        model = tiny_model(seed=9)
        frames = np.random.default_rng(9).standard_normal((6, 3))
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "awe.awef"
            model.save(path)
            loaded = mdl.load_awe_model(path)
        self.assertEqual(loaded.config, model.config)
        npt.assert_allclose(
            mdl.awe_encode(loaded, frames), mdl.awe_encode(model, frames), rtol=1e-4, atol=1e-5
        )

    def test_wrong_kind(self):
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "other.awef"
            save_checkpoint(path, "apc", None, {"encoder": LayerStack("affine(3,2)")})
            with self.assertRaises(FormatError):
                mdl.load_awe_model(path)
