"""
Plugin interface of :class:`~aweforge.serialization.serializer.Serializer`.

Concrete :class:`TypeSerializer` subclasses register themselves on class creation unless ``register = False``.
"""

import abc
from inspect import isabstract
from typing import Any, Dict, List, Optional, Type

from jztools.validation import checked_get_unique

_REGISTERED_PLUGINS: List["TypeSerializer"] = []
"""
Type serializers registered by :meth:`TypeSerializer.__init_subclass__` or :func:`register_type_serializer`. Every :class:`Serializer` instantiated afterwards picks them up.
"""


def register_type_serializer(type_serializer: "TypeSerializer"):
    _REGISTERED_PLUGINS.append(type_serializer)


def create_signature_aliases(signature: str, aliases):
    """
    Lets a registered type serializer also deserialize objects tagged with the alias signatures, e.g., configs written by older releases.
    """
    type_serializer = checked_get_unique(
        [x for x in _REGISTERED_PLUGINS if x.signature == signature]
    )
    aliases = [aliases] if isinstance(aliases, str) else aliases
    type_serializer.aliases.extend(aliases)


def default_signature(cls) -> str:
    return cls.__name__


class TypeSerializer(abc.ABC):
    """
    Converts objects of :attr:`handled_type` to and from a dictionary of serializable values. The serialized dictionary carries the key ``'__type__'`` holding :attr:`signature`.
    """

    register: bool = True
    aliases: Optional[List[str]] = None
    inheritable: bool = False
    """
    Whether this serializer also handles types derived from :attr:`handled_type`.
    """

    def __init__(self):
        self.aliases = list(self.aliases or [])

    @property
    @abc.abstractmethod
    def handled_type(self) -> Type:
        """
        The type this serializer handles.
        """

    @property
    def signature(self) -> str:
        return default_signature(self.handled_type)

    @abc.abstractmethod
    def as_serializable(self, obj) -> Dict[str, Any]:
        """
        Returns the keyword arguments that :meth:`from_serializable` takes to rebuild ``obj``. Values can be anything the :class:`Serializer` supports.
        """

    def from_serializable(self, **kwargs):
        return self.handled_type(**kwargs)

    def _build_typed_dict(self, obj, as_serializable) -> Dict[str, Any]:
        kwargs = self.as_serializable(obj)
        if "__type__" in kwargs:
            raise ValueError(
                f"Reserved key '__type__' returned by {type(self).__name__}.as_serializable."
            )
        return {
            "__type__": self.signature,
            **{_key: as_serializable(_val) for _key, _val in kwargs.items()},
        }

    def _build_obj(self, typed_dict, from_serializable):
        kwargs = {
            _key: from_serializable(_val)
            for _key, _val in typed_dict.items()
            if _key != "__type__"
        }
        return self.from_serializable(**kwargs)

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if not isabstract(cls) and cls.register:
            register_type_serializer(cls())
