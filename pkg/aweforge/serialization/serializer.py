"""
:class:`Serializer` class implementation.
"""

import inspect
import json
from pathlib import Path
from typing import Optional, Type, Union

from . import plugins as builtin_plugins
from .type_serializer import TypeSerializer, _REGISTERED_PLUGINS


class ExtensionMissing(TypeError):
    def __init__(self, signature):
        super().__init__(f"No installed handler for types with signature {signature}.")


class UnserializableType(TypeError):
    def __init__(self, in_obj):
        super().__init__(
            f"Object {in_obj} of type {type(in_obj)} cannot be serialized by the installed extensions."
        )


class DeserializationError(Exception):
    def __init__(self, signature):
        super().__init__(
            f"Error while deserializing object with signature `{signature}`."
        )


def _builtin_serializers():
    return [
        _x()
        for _x in vars(builtin_plugins).values()
        if isinstance(_x, type)
        and issubclass(_x, TypeSerializer)
        and not inspect.isabstract(_x)
    ]


class Serializer:
    """
    JSON serializer that also supports numpy arrays, datetimes and every config class decorated with :func:`~aweforge.serialization.decorator.serializable`, as well as lists, tuples, sets and dictionaries of those. Unlike plain json, tuples are preserved.
    """

    def __init__(self, plugins=None):
        """
        :param plugins: Extra :class:`TypeSerializer` instances. These override builtin and registered serializers handling the same type or signature.
        """
        all_serializers = (
            _builtin_serializers() + list(_REGISTERED_PLUGINS) + list(plugins or [])
        )
        self.as_serializable_plugins = {
            x.handled_type: x for x in all_serializers
        }
        self.from_serializable_plugins = {
            _alias: x
            for x in all_serializers
            for _alias in ([x.signature] + (x.aliases or []))
        }

    def _get_as_serializable_plugin(self, obj):
        for base_type in inspect.getmro(type(obj))[:-1]:
            if (type_serializer := self.as_serializable_plugins.get(base_type)) is None:
                continue
            if base_type is type(obj) or type_serializer.inheritable:
                return type_serializer
        raise KeyError(type(obj))

    def as_serializable(self, obj):
        """
        Takes an object and converts it to its serializable representation.
        """
        if isinstance(obj, (bool, int, float, str, type(None))):
            return obj
        elif type(obj) is list:
            return [self.as_serializable(_val) for _val in obj]
        try:
            type_serializer = self._get_as_serializable_plugin(obj)
        except KeyError:
            raise UnserializableType(obj)
        return type_serializer._build_typed_dict(obj, self.as_serializable)

    def from_serializable(self, obj, expected_type: Optional[Type] = None):
        """
        Takes a serializable representation of an object and converts it to its object form.

        :param expected_type: When given, a root dictionary without a ``'__type__'`` key is built as this type, and a root object of any other type raises a :class:`TypeError`.
        """
        if (
            expected_type is not None
            and isinstance(obj, dict)
            and "__type__" not in obj
            and expected_type is not dict
        ):
            obj = {"__type__": self.get_signature(expected_type), **obj}

        out = self._from_serializable(obj)
        if expected_type is not None and not isinstance(out, expected_type):
            raise TypeError(
                f"Expected {expected_type} but received type-{type(out)} object {out}."
            )
        return out

    def _from_serializable(self, obj):
        if isinstance(obj, (bool, int, float, str, type(None))):
            return obj
        elif isinstance(obj, list):
            return [self._from_serializable(_val) for _val in obj]
        elif isinstance(obj, dict):
            if signature := obj.get("__type__", None):
                try:
                    type_deserializer = self.from_serializable_plugins[signature]
                except KeyError:
                    raise ExtensionMissing(signature)
                try:
                    return type_deserializer._build_obj(obj, self._from_serializable)
                except Exception as err:
                    raise DeserializationError(signature) from err
            # Dictionaries without a '__type__' field are the most common case.
            return self.from_serializable_plugins["dict"]._build_obj(
                obj, self._from_serializable
            )
        raise TypeError(f"Invalid input of type {type(obj)}.")

    def get_signature(self, entity: Type) -> str:
        for key, val in self.from_serializable_plugins.items():
            if val.handled_type is entity:
                return key
        raise UnserializableType(entity)

    def serialize(self, obj, *args, **kwargs) -> str:
        return json.dumps(self.as_serializable(obj), *args, **kwargs)

    def deserialize(self, obj: str, expected_type=None):
        return self.from_serializable(json.loads(obj), expected_type=expected_type)

    # JSON-like interface
    loads = deserialize
    dumps = serialize

    def load(self, path: Union[str, Path], expected_type=None):
        with open(path, "r") as fo:
            return self.from_serializable(json.load(fo), expected_type=expected_type)

    def dump(self, obj, path: Union[str, Path], *args, **kwargs):
        with open(path, "w") as fo:
            json.dump(self.as_serializable(obj), fo, *args, **kwargs)
