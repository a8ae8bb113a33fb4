import dataclasses
from typing import Callable, Optional, Type, Union

from .type_serializer import TypeSerializer


class _DataclassTypeSerializer(TypeSerializer):
    """
    Serializes the ``init`` fields of a dataclass. Deserialization calls the dataclass initializer, so its ``__post_init__`` validation runs on every loaded config.
    """

    def as_serializable(self, obj):
        return {
            _fld.name: getattr(obj, _fld.name)
            for _fld in dataclasses.fields(obj)
            if _fld.init
        }

    def from_serializable(self, **kwargs):
        valid = {_fld.name for _fld in dataclasses.fields(self.handled_type) if _fld.init}
        if invalid := set(kwargs) - valid:
            raise TypeError(
                f"Invalid fields {sorted(invalid)} for {self.handled_type.__name__}. Valid fields are {sorted(valid)}."
            )
        return self.handled_type(**kwargs)

    @classmethod
    def create_derived_class(cls, handled_type, **attributes):
        return type(
            f"_{handled_type.__name__}_DataclassTypeSerializer",
            (cls,),
            {"handled_type": handled_type, "__module__": __name__, **attributes},
        )


def serializable(
    _wrapped: Optional[Type] = None, *, signature: Optional[str] = None
) -> Union[Type, Callable[[Type], Type]]:
    """
    Class decorator that makes a dataclass serializable by :class:`~aweforge.serialization.serializer.Serializer`.

    :param signature: [Class name] The ``'__type__'`` string written for objects of this class.

    .. code-block::

      @serializable
      @dataclass(frozen=True)
      class Schedule:
          epochs: int = 10
          lr: float = 1e-3
    """

    def fxn(cls):
        if not dataclasses.is_dataclass(cls):
            raise TypeError(f"@serializable expects a dataclass but received {cls}.")
        attributes = {"signature": signature} if signature else {}
        _DataclassTypeSerializer.create_derived_class(cls, **attributes)
        return cls

    if _wrapped is not None:
        return fxn(_wrapped)
    return fxn
