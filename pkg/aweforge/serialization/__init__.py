from .type_serializer import TypeSerializer, create_signature_aliases
from .decorator import serializable
from .serializer import (
    Serializer,
    ExtensionMissing,
    UnserializableType,
    DeserializationError,
)

__all__ = [
    "Serializer",
    "TypeSerializer",
    "serializable",
    "create_signature_aliases",
    "ExtensionMissing",
    "UnserializableType",
    "DeserializationError",
]
