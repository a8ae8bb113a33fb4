"""
Builtin plugins: explicit dictionaries, tuples, sets, numpy arrays and timezone-aware datetimes.

Numpy arrays are stored as a dtype string, a shape and a flat list of values. Python floats serialize to their shortest round-trip representation, so float arrays come back bit-identical.
"""

import datetime

import numpy as np
import pytz
from frozendict import frozendict

from .type_serializer import TypeSerializer


class _BuiltinTypeSerializer(TypeSerializer):
    # Registration is done by Serializer.__init__
    register = False

    @property
    def signature(self):
        return self.handled_type.__name__


class DictSerializer(_BuiltinTypeSerializer):
    """
    Dictionaries are serialized implicitly unless they contain the reserved ``'__type__'`` key.
    """

    handled_type = dict
    signature = "dict"

    def _build_typed_dict(self, obj, as_serializable):
        val = {_key: as_serializable(_val) for _key, _val in obj.items()}
        if "__type__" in val:
            return {"__type__": self.signature, "value": val}
        return val

    def _build_obj(self, obj, from_serializable):
        if "__type__" in obj:
            if not set(obj).issubset(valid_keys := {"__type__", "value"}):
                raise ValueError(
                    f"Invalid keys `{list(obj)}` for an explicit dictionary. Valid keys are `{sorted(valid_keys)}`."
                )
            obj = obj.get("value", {})
        return {_key: from_serializable(_val) for _key, _val in obj.items()}

    def as_serializable(self, obj):
        return obj


class TupleSerializer(_BuiltinTypeSerializer):
    handled_type = tuple

    def as_serializable(self, obj):
        return {"value": list(obj)}

    def from_serializable(self, value):
        return self.handled_type(value)


class SetSerializer(TupleSerializer):
    handled_type = set

    def as_serializable(self, obj):
        return {"value": sorted(obj)}


class NDArraySerializer(_BuiltinTypeSerializer):
    handled_type = np.ndarray
    signature = "np.array"

    def as_serializable(self, arr):
        if arr.dtype.kind not in "biuf":
            raise TypeError(f"Unsupported array dtype {arr.dtype}.")
        return {
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "value": arr.ravel().tolist(),
        }

    def from_serializable(self, value, dtype, shape):
        return np.array(value, dtype=np.dtype(dtype)).reshape(shape)


class NumpyScalarSerializer(_BuiltinTypeSerializer):
    """
    Numpy scalars (e.g., entries of a float32 array) are written as an explicit dtype and value.
    """

    handled_type = np.generic
    signature = "np.scalar"
    inheritable = True

    def as_serializable(self, obj):
        return {"dtype": obj.dtype.str, "value": obj.item()}

    def from_serializable(self, dtype, value):
        return np.dtype(dtype).type(value)


class TimezoneSerializer(_BuiltinTypeSerializer):
    signature = "pytz.timezone"
    handled_type = pytz.tzinfo.BaseTzInfo
    inheritable = True

    def as_serializable(self, obj):
        return {"name": str(obj)}

    def from_serializable(self, name):
        return pytz.timezone(name)


class DatetimeSerializer(_BuiltinTypeSerializer):
    signature = "datetime"
    handled_type = datetime.datetime

    def as_serializable(self, obj):
        out = {"value": obj.replace(tzinfo=None).isoformat()}
        if obj.tzinfo:
            out["timezone"] = obj.tzinfo
        return out

    def from_serializable(self, value, timezone=None):
        naive = datetime.datetime.fromisoformat(value)
        return timezone.localize(naive) if timezone else naive


class FrozenDictSerializer(_BuiltinTypeSerializer):
    handled_type = frozendict
    signature = "frozendict"

    def as_serializable(self, obj):
        return {"value": dict(obj)}

    def from_serializable(self, value):
        return frozendict(value)
