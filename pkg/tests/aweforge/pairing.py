from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
import numpy.testing as npt

from aweforge import pairing as mdl
from aweforge.errors import FormatError, InputError, SamplingError, UnknownUtterances
from aweforge.features import FeatureArchive, FeatureSequence


def monotone_paths(n_rows, n_cols):
    def extend(path):
        i, j = path[-1]
        if (i, j) == (n_rows - 1, n_cols - 1):
            yield path
            return
        for di, dj in [(1, 1), (1, 0), (0, 1)]:
            if i + di < n_rows and j + dj < n_cols:
                yield from extend(path + [(i + di, j + dj)])

    yield from extend([(0, 0)])


def brute_force_cost(a, b):
    costs = mdl.local_costs(a, b)
    return min(sum(costs[_i, _j] for _i, _j in _path) for _path in monotone_paths(len(a), len(b)))


def assert_valid_path(test, path, n_rows, n_cols):
    test.assertEqual(path[0], (0, 0))
    test.assertEqual(path[-1], (n_rows - 1, n_cols - 1))
    for (i0, j0), (i1, j1) in zip(path[:-1], path[1:]):
        test.assertIn((i1 - i0, j1 - j0), [(1, 0), (0, 1), (1, 1)])


def two_speaker_archive():
    rng = np.random.default_rng(0)
    lengths = {"a1": 5, "a2": 7, "a3": 4, "b1": 6, "b2": 3}
    return FeatureArchive(
        FeatureSequence(_utt, _utt[0], rng.standard_normal((_n, 2)))
        for _utt, _n in lengths.items()
    )


class TestDtw(TestCase):
    def test_identity(self):
        a = np.random.default_rng(0).standard_normal((5, 3))
        alignment = mdl.dtw_align(a, a)
        self.assertEqual(alignment.cost, 0.0)
        self.assertEqual(alignment.path, tuple((_k, _k) for _k in range(5)))

    def test_worked_example(self):
        alignment = mdl.dtw_align(np.array([[0.0], [1.0]]), np.array([[0.0], [0.0], [1.0]]))
        self.assertEqual(alignment.cost, 0.0)
        self.assertEqual(alignment.path, ((0, 0), (0, 1), (1, 2)))

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            d = int(rng.integers(1, 4))
            a = rng.standard_normal((int(rng.integers(1, 7)), d))
            b = rng.standard_normal((int(rng.integers(1, 7)), d))
            alignment = mdl.dtw_align(a, b)
            self.assertAlmostEqual(alignment.cost, brute_force_cost(a, b), delta=1e-9)
            assert_valid_path(self, alignment.path, len(a), len(b))
            costs = mdl.local_costs(a, b)
            self.assertAlmostEqual(
                sum(costs[_i, _j] for _i, _j in alignment.path), alignment.cost, delta=1e-9
            )

    def test_symmetry_and_sanity(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.standard_normal((int(rng.integers(1, 9)), 3))
            b = rng.standard_normal((int(rng.integers(1, 9)), 3))
            for metric in mdl.METRICS:
                cost_ab = mdl.dtw_align(a, b, metric).cost
                self.assertAlmostEqual(cost_ab, mdl.dtw_align(b, a, metric).cost, delta=1e-9)
                self.assertGreaterEqual(cost_ab, 0.0)
                self.assertAlmostEqual(mdl.dtw_align(a, a, metric).cost, 0.0, delta=1e-9)

    def test_cosine_zero_vector(self):
        costs = mdl.local_costs(np.zeros((1, 2)), np.array([[1.0, 0.0]]), "cosine")
        npt.assert_array_equal(costs, [[1.0]])

    def test_errors(self):
        with self.assertRaises(InputError):
            mdl.dtw_align(np.zeros((2, 2)), np.zeros((2, 3)))
        with self.assertRaises(InputError):
            mdl.dtw_align(np.zeros((0, 2)), np.zeros((2, 2)))


class TestFramePairs(TestCase):
    def test_identical_segments(self):
        frames = np.random.default_rng(0).standard_normal((10, 3))
        archive = FeatureArchive(
            [FeatureSequence("u1", "s", frames), FeatureSequence("u2", "s", frames)]
        )
        pairs = [mdl.SegmentPair(mdl.Segment("u1", 2, 6), mdl.Segment("u2", 2, 6))]
        frame_pairs = mdl.extract_frame_pairs(pairs, archive)
        self.assertEqual(len(frame_pairs), 8)
        npt.assert_array_equal(frame_pairs.x, frame_pairs.y)

    def test_unequal_lengths(self):
        archive = FeatureArchive(
            [
                FeatureSequence("u1", "s", np.array([[0.0], [1.0]])),
                FeatureSequence("u2", "s", np.array([[0.0], [0.0], [1.0]])),
            ]
        )
        pairs = [mdl.SegmentPair(mdl.Segment("u1", 0, 2), mdl.Segment("u2", 0, 3))]
        frame_pairs = mdl.extract_frame_pairs(pairs, archive)
        self.assertEqual(len(frame_pairs), 6)
        npt.assert_array_equal(frame_pairs.x[:3, 0], [0.0, 0.0, 1.0])
        npt.assert_array_equal(frame_pairs.y[:3, 0], [0.0, 0.0, 1.0])
        pair_list = list(frame_pairs)
        self.assertEqual(len(pair_list), 6)

    def test_empty_and_unknown(self):
        archive = two_speaker_archive()
        self.assertEqual(len(mdl.extract_frame_pairs([], archive)), 0)
        with self.assertRaises(UnknownUtterances) as ctx:
            mdl.extract_frame_pairs(
                [mdl.SegmentPair(mdl.Segment("zz", 0, 2), mdl.Segment("yy", 0, 2))], archive
            )
        self.assertEqual(ctx.exception.utterance_ids, ["yy", "zz"])
        with self.assertRaises(InputError):
            mdl.segment_frames(archive, mdl.Segment("a1", 3, 9))

    def test_frame_pair_file(self):
        rng = np.random.default_rng(3)
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "pairs.fprs"
            for _ in range(20):
                n, d = int(rng.integers(0, 10)), int(rng.integers(1, 5))
                original = mdl.FramePairs(rng.standard_normal((n, d)), rng.standard_normal((n, d)))
                mdl.write_frame_pairs(original, path)
                loaded = mdl.read_frame_pairs(path)
                npt.assert_array_equal(loaded.x, original.x)
                npt.assert_array_equal(loaded.y, original.y)

            path.write_bytes(path.read_bytes()[:-1])
            with self.assertRaises(FormatError):
                mdl.read_frame_pairs(path)


class TestTextFiles(TestCase):
    def test_pairs(self):
        pairs = [
            mdl.SegmentPair(mdl.Segment("u1", 0, 5), mdl.Segment("u2", 3, 9)),
            mdl.SegmentPair(mdl.Segment("u3", 1, 2), mdl.Segment("u1", 7, 12)),
        ]
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "pairs.txt"
            mdl.write_pairs(pairs, path)
            self.assertEqual(mdl.read_pairs(path), pairs)

            path.write_text("# comment\nu1 0 5 u2 3 9  # trailing\n\nu1 0 5 u2\n")
            with self.assertRaises(FormatError) as ctx:
                mdl.read_pairs(path)
            self.assertEqual(ctx.exception.field, "line 4")

            path.write_text("u1 5 5 u2 3 9\n")
            with self.assertRaises(FormatError):
                mdl.read_pairs(path)

    def test_segments(self):
        segments = [
            mdl.LabeledSegment(mdl.Segment("u1", 0, 5), "w001", "spk00"),
            mdl.LabeledSegment(mdl.Segment("u2", 2, 4)),
        ]
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "segments.txt"
            mdl.write_segments(segments, path)
            self.assertEqual(mdl.read_segments(path), segments)


class TestNegativeSampling(TestCase):
    def test_candidate_set(self):
        archive = two_speaker_archive()
        candidates = mdl.sample_negatives(archive, ("a1", 1, 2), 32, seed=0)
        self.assertEqual(len(candidates.positions), 32)
        self.assertEqual(candidates.target, mdl.FramePosition("a1", 3))
        negatives = [
            _x for _k, _x in enumerate(candidates.positions) if _k != candidates.true_index
        ]
        self.assertEqual(len(negatives), 31)
        self.assertTrue(all(_x.utterance_id in ("a2", "a3") for _x in negatives))

    def test_forced_support(self):
        archive = two_speaker_archive()
        candidates = mdl.sample_negatives(archive, ("b1", 0, 1), 10, seed=1)
        negatives = [
            _x for _k, _x in enumerate(candidates.positions) if _k != candidates.true_index
        ]
        self.assertTrue(all(_x.utterance_id == "b2" for _x in negatives))

    def test_single_utterance_speaker(self):
        archive = FeatureArchive(
            [FeatureSequence("u1", "s1", np.zeros((5, 2))), FeatureSequence("u2", "s2", np.zeros((5, 2)))]
        )
        with self.assertRaises(SamplingError):
            mdl.sample_negatives(archive, ("u1", 0, 1), 4, seed=0)
        with self.assertRaises(SamplingError):
            mdl.sample_negatives(two_speaker_archive(), ("a1", 0, 1), 1, seed=0)

    def test_true_index_randomized(self):
        archive = two_speaker_archive()
        indices = {mdl.sample_negatives(archive, ("a1", 0, 1), 4, seed=_s).true_index for _s in range(50)}
        self.assertEqual(indices, {0, 1, 2, 3})

    def test_uniform(self):
        archive = two_speaker_archive()
        rng = np.random.default_rng(5)
        positions = mdl.same_speaker_positions(archive, "a1", 10_000, rng)
        counts = {}
        for position in positions:
            counts[position] = counts.get(position, 0) + 1
        # 7 + 4 eligible frames in a2 and a3.
        self.assertEqual(len(counts), 11)
        p = 1 / 11
        standard_error = np.sqrt(10_000 * p * (1 - p))
        for count in counts.values():
            self.assertLess(abs(count - 10_000 * p), 3.5 * standard_error)
