"""
Model checkpoint file (``*.awef``)::

  b"AWEF"
  u16   format version
  u32   descriptor length, then the UTF-8 JSON descriptor
  u64   parameter count
  f32*  parameters (little endian), stacks concatenated in descriptor order

The descriptor holds the model kind tag, the serialized model config and the layer descriptor of every stack.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .._binary import BinaryReader, BinaryWriter
from ..errors import FormatError
from ..serialization import DeserializationError, Serializer
from .layers import parse_layers
from .stack import LayerStack

MAGIC = b"AWEF"
VERSION = 1

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    kind: str
    config: Any
    stacks: Dict[str, LayerStack]


def save_checkpoint(
    path: Union[str, Path], kind: str, config: Any, stacks: Dict[str, LayerStack]
):
    descriptor = Serializer().serialize(
        {
            "kind": kind,
            "config": config,
            "stacks": [[_name, _stack.descriptor] for _name, _stack in stacks.items()],
        }
    )
    params = np.concatenate(
        [np.zeros(0)] + [_stack.params for _stack in stacks.values()]
    )
    with open(path, "wb") as fo:
        writer = BinaryWriter(fo)
        writer.magic(MAGIC)
        writer.scalar("u16", VERSION)
        writer.text(descriptor, "u32")
        writer.scalar("u64", params.size)
        writer.floats(params)
    logger.debug("Wrote %s checkpoint with %d parameters to %s.", kind, params.size, path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Parameters are stored as 32-bit floats and loaded back as 64-bit floats.
    """
    with open(path, "rb") as fo:
        reader = BinaryReader(fo, path)
        reader.magic(MAGIC)
        reader.version(VERSION)
        try:
            descriptor = Serializer().deserialize(reader.text("descriptor", "u32"))
        except (ValueError, TypeError, DeserializationError) as err:
            raise FormatError(path, "descriptor", str(err))
        n_params = reader.scalar("u64", "parameter count")
        params = reader.floats(n_params, "parameters").astype(np.float64)
        if not reader.at_end():
            raise FormatError(path, "parameters", "trailing bytes")

    stacks, offset = {}, 0
    for name, layers in descriptor["stacks"]:
        layers = parse_layers(layers)
        size = sum(
            int(np.prod(_shape)) for _layer in layers for _shape in _layer.param_shapes().values()
        )
        if offset + size > n_params:
            raise FormatError(path, "parameter count", f"{n_params} too small for the descriptor")
        stack = LayerStack(layers, params=params[offset : offset + size])
        offset += size
        stacks[name] = stack
    if offset != n_params:
        raise FormatError(
            path, "parameter count", f"descriptor needs {offset}, file has {n_params}"
        )
    return Checkpoint(descriptor["kind"], descriptor["config"], stacks)
