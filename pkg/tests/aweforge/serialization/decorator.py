from dataclasses import dataclass
from unittest import TestCase

from aweforge.serialization import Serializer, create_signature_aliases
from aweforge.serialization import decorator as mdl


@mdl.serializable(signature="RenamedSchedule")
@dataclass
class Schedule:
    epochs: int = 10
    lr: float = 1e-3


@mdl.serializable
@dataclass
class Legacy:
    value: int = 0


create_signature_aliases("Legacy", ["LegacyV0"])


class TestSerializable(TestCase):
    def test_signature(self):
        self.assertEqual(Serializer().get_signature(Schedule), "RenamedSchedule")
        self.assertEqual(Serializer().get_signature(Legacy), "Legacy")

    def test_round_trip(self):
        srl = Serializer()
        obj = Schedule(3, 0.5)
        self.assertEqual(
            srl.as_serializable(obj), {"__type__": "RenamedSchedule", "epochs": 3, "lr": 0.5}
        )
        self.assertEqual(srl.deserialize(srl.serialize(obj)), obj)

    def test_aliases(self):
        self.assertEqual(
            Serializer().from_serializable({"__type__": "LegacyV0", "value": 4}), Legacy(4)
        )

    def test_not_a_dataclass(self):
        with self.assertRaises(TypeError):

            @mdl.serializable
            class Plain:
                pass
