from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
import numpy.testing as npt

from aweforge.errors import FormatError
from aweforge.nn import checkpoint as mdl
from aweforge.nn.stack import LayerStack

_DESCRIPTORS = [
    "affine({d},{h}); layer-norm({h}); relu; dropout(0.5); affine({h},2)",
    "gru({d},{h}); gru({h},{h}); affine({h},3)",
    "lstm({d},{h})",
    "relu",
]


class TestCheckpoint(TestCase):
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "model.awef"
            for draw in range(200):
                d, h = (int(_x) for _x in rng.integers(1, 6, size=2))
                stacks = {
                    f"s{_k}": LayerStack(
                        _DESCRIPTORS[int(rng.integers(len(_DESCRIPTORS)))].format(d=d, h=h),
                        seed=draw,
                    )
                    for _k in range(int(rng.integers(1, 4)))
                }
                config = {"draw": draw, "dims": (d, h)}
                mdl.save_checkpoint(path, "cpc", config, stacks)
                loaded = mdl.load_checkpoint(path)

                self.assertEqual(loaded.kind, "cpc")
                self.assertEqual(loaded.config, config)
                self.assertEqual(list(loaded.stacks), list(stacks))
                for name, stack in stacks.items():
                    self.assertEqual(loaded.stacks[name].descriptor, stack.descriptor)
                    npt.assert_array_equal(
                        loaded.stacks[name].params,
                        stack.params.astype(np.float32).astype(np.float64),
                    )

                # Loaded parameters are representable in 32 bits, so a second trip is exact.
                first = path.read_bytes()
                mdl.save_checkpoint(path, loaded.kind, loaded.config, loaded.stacks)
                self.assertEqual(path.read_bytes(), first)

    def test_malformed(self):
        with TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "model.awef"
            mdl.save_checkpoint(path, "apc", None, {"enc": LayerStack("gru(2,3)")})
            good = path.read_bytes()

            for content, field in [
                (b"AWEX" + good[4:], "magic"),
                (good[:4] + b"\x07\x00" + good[6:], "version"),
                (good[:-3], "parameters"),
                (good + b"\x00", "parameters"),
            ]:
                path.write_bytes(content)
                with self.assertRaises(FormatError) as ctx:
                    mdl.load_checkpoint(path)
                self.assertEqual(ctx.exception.field, field)
