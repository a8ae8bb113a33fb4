"""
:class:`LayerStack` container and the stack-level :func:`forward` / :func:`backward` passes.
"""

from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from frozendict import frozendict

from ..errors import ConfigurationError, DimensionMismatch, UsageError
from .layers import Layer, parse_layers


@dataclass(frozen=True)
class ParamSlot:
    layer: int
    name: str
    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=int))


class LayerStack:
    """
    An ordered list of layers and a flat 64-bit parameter store.

    The parameter layout maps ``'<layer index>.<param name>'`` keys to :class:`ParamSlot` entries. Every call to :meth:`assign` increments :attr:`version`, which invalidates caches produced by earlier forward passes.
    """

    def __init__(
        self,
        layers: Union[str, Sequence[Layer]],
        params: Optional[np.ndarray] = None,
        seed: Optional[int] = 0,
    ):
        """
        :param layers: Layer instances or a descriptor string such as ``'affine(13,512); relu'``.
        :param params: Flat parameter vector. Drawn with the initialization scheme of each layer when omitted.
        :param seed: Initialization seed.
        """
        self.layers: Tuple[Layer, ...] = tuple(
            parse_layers(layers) if isinstance(layers, str) else layers
        )
        self.in_dim, self.out_dim = self._check_dims()

        layout, offset = {}, 0
        for index, layer in enumerate(self.layers):
            for name, shape in layer.param_shapes().items():
                slot = ParamSlot(index, name, offset, tuple(shape))
                layout[f"{index}.{name}"] = slot
                offset += slot.size
        self.layout = frozendict(layout)
        self.n_params = offset

        self.version = 0
        if params is None:
            rng = np.random.default_rng(seed)
            chunks = [np.zeros(0)]
            for layer in self.layers:
                initial = layer.init_params(rng)
                chunks.extend(initial[_name].ravel() for _name in layer.param_shapes())
            params = np.concatenate(chunks)
        self.params = np.zeros(self.n_params)
        self.assign(params)

    def _check_dims(self):
        in_dim = current = None
        for index, layer in enumerate(self.layers):
            if layer.in_dim is None:
                continue
            if current is not None and layer.in_dim != current:
                raise ConfigurationError(
                    f"Layer {index} ({layer.descriptor()}) expects input dim {layer.in_dim} but the preceding layers produce {current}."
                )
            in_dim = layer.in_dim if in_dim is None else in_dim
            current = layer.out_dim
        return in_dim, current

    @property
    def descriptor(self) -> str:
        return "; ".join(_layer.descriptor() for _layer in self.layers)

    @property
    def recurrent_indices(self) -> List[int]:
        return [_k for _k, _layer in enumerate(self.layers) if _layer.recurrent]

    def layer_label(self, index: int) -> str:
        return f"{index}:{self.layers[index].descriptor()}"

    def label_of(self, flat_index: int) -> str:
        """
        Label of the layer owning the parameter at ``flat_index``.
        """
        for slot in self.layout.values():
            if slot.offset <= flat_index < slot.offset + slot.size:
                return self.layer_label(slot.layer)
        raise IndexError(flat_index)

    def assign(self, params: np.ndarray):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ConfigurationError(
                f"Stack `{self.descriptor}` has {self.n_params} parameters, received shape {params.shape}."
            )
        self.params = params.copy()
        self.version += 1

    def layer_params(self, index: int) -> dict:
        return {
            _slot.name: self.params[_slot.offset : _slot.offset + _slot.size].reshape(
                _slot.shape
            )
            for _slot in self.layout.values()
            if _slot.layer == index
        }

    def copy(self) -> "LayerStack":
        return LayerStack(self.layers, self.params)

    def __repr__(self):
        return f"LayerStack({self.descriptor!r}, n_params={self.n_params})"


@dataclass
class StackCache:
    stack: LayerStack
    version: int
    layer_caches: List[Any]
    batched: bool
    train_mode: bool


def _as_batch(stack, x):
    x = np.asarray(x, dtype=np.float64)
    promote = bool(stack.recurrent_indices) and x.ndim == 2
    return (x[None] if promote else x), promote


def forward(
    stack: LayerStack,
    x: np.ndarray,
    train_mode: bool = False,
    seed: Optional[int] = None,
    initial_states: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> Tuple[np.ndarray, StackCache]:
    """
    Runs the stack on ``x`` and returns the output and the cache needed by :func:`backward`.

    :param x: ``(T, d)`` or ``(B, T, d)`` input. Stacks with recurrent layers treat a 2-D input as a single sequence.
    :param train_mode: Enables dropout.
    :param seed: Dropout seed. Outputs are deterministic given parameters, input, seed and mode.
    :param initial_states: One optional ``(B, H)`` initial state per recurrent layer, in layer order.
    """
    if (received := np.shape(x)[-1]) != stack.in_dim and stack.in_dim is not None:
        raise DimensionMismatch(f"input of `{stack.descriptor}`", stack.in_dim, received)
    x, promoted = _as_batch(stack, x)
    recurrent = stack.recurrent_indices
    initial_states = list(initial_states or [None] * len(recurrent))
    if len(initial_states) != len(recurrent):
        raise UsageError(
            f"Expected {len(recurrent)} initial states, received {len(initial_states)}."
        )
    h0_of = dict(zip(recurrent, initial_states))

    rng = np.random.default_rng(seed)
    caches = []
    for index, layer in enumerate(stack.layers):
        x, layer_cache = layer.forward(
            stack.layer_params(index), x, train_mode, rng, h0=h0_of.get(index)
        )
        caches.append(layer_cache)

    cache = StackCache(stack, stack.version, caches, promoted, train_mode)
    return (x[0] if promoted else x), cache


def backward(
    stack: LayerStack, upstream_grad: np.ndarray, cache: Optional[StackCache]
) -> Tuple[np.ndarray, np.ndarray, List[Optional[np.ndarray]]]:
    """
    Back-propagates ``upstream_grad`` (the loss gradient with respect to the output of :func:`forward`).

    :return: The flat parameter gradient (same layout as :attr:`LayerStack.params`), the input gradient and one initial-state gradient per recurrent layer.
    """
    if cache is None:
        raise UsageError(f"Missing forward cache for stack `{stack.descriptor}`.")
    if cache.stack is not stack or cache.version != stack.version:
        raise UsageError(
            f"Stale forward cache for stack `{stack.descriptor}`: parameters changed since the forward pass."
        )

    dy = np.asarray(upstream_grad, dtype=np.float64)
    dy = dy[None] if cache.batched else dy
    grads = np.zeros(stack.n_params)
    d_initial = {}
    for index in reversed(range(len(stack.layers))):
        layer = stack.layers[index]
        dy, layer_grads, dh0 = layer.backward(
            stack.layer_params(index), cache.layer_caches[index], dy
        )
        for name, value in layer_grads.items():
            slot = stack.layout[f"{index}.{name}"]
            grads[slot.offset : slot.offset + slot.size] = value.ravel()
        if layer.recurrent:
            d_initial[index] = dh0

    return (
        grads,
        (dy[0] if cache.batched else dy),
        [d_initial[_k] for _k in stack.recurrent_indices],
    )
