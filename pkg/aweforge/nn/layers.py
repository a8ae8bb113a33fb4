"""
Layer types of a :class:`~aweforge.nn.stack.LayerStack`.

Frame-wise layers (affine, layer-norm, relu, dropout) act on the last axis of any input. Recurrent layers take batched sequences of shape ``(B, T, d)`` and return the hidden state of every time step, ``(B, T, H)``.

All computations use 64-bit floats.
"""

import abc
import re
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..errors import ConfigurationError

LAYER_NORM_EPS = 1e-5


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Layer(abc.ABC):
    in_dim: Optional[int] = None
    out_dim: Optional[int] = None
    recurrent = False
    stochastic = False
    """
    Stochastic layers depend on the random generator in train mode and cannot be finite-difference checked.
    """

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {}

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        return {}

    @abc.abstractmethod
    def forward(self, params, x, train, rng, h0=None):
        """
        Returns the output and the cache consumed by :meth:`backward`.
        """

    @abc.abstractmethod
    def backward(self, params, cache, dy):
        """
        Returns ``(dx, grads, dh0)`` where ``grads`` maps parameter names to gradients and ``dh0`` is the initial-state gradient of recurrent layers (``None`` otherwise).
        """

    @abc.abstractmethod
    def descriptor(self) -> str:
        pass

    def __repr__(self):
        return self.descriptor()

    def __eq__(self, other):
        return type(self) is type(other) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(self.descriptor())


class Affine(Layer):
    def __init__(self, in_dim: int, out_dim: int):
        if in_dim < 1 or out_dim < 1:
            raise ConfigurationError(f"Invalid affine dimensions ({in_dim}, {out_dim}).")
        self.in_dim, self.out_dim = in_dim, out_dim

    def param_shapes(self):
        return {"W": (self.in_dim, self.out_dim), "b": (self.out_dim,)}

    def init_params(self, rng):
        return {
            "W": glorot_uniform(rng, self.in_dim, self.out_dim),
            "b": np.zeros(self.out_dim),
        }

    def forward(self, params, x, train, rng, h0=None):
        return x @ params["W"] + params["b"], x

    def backward(self, params, cache, dy):
        x = cache
        x2, dy2 = x.reshape(-1, self.in_dim), dy.reshape(-1, self.out_dim)
        grads = {"W": x2.T @ dy2, "b": dy2.sum(axis=0)}
        return dy @ params["W"].T, grads, None

    def descriptor(self):
        return f"affine({self.in_dim},{self.out_dim})"


class LayerNorm(Layer):
    def __init__(self, dim: int):
        self.in_dim = self.out_dim = dim

    def param_shapes(self):
        return {"gamma": (self.in_dim,), "beta": (self.in_dim,)}

    def init_params(self, rng):
        return {"gamma": np.ones(self.in_dim), "beta": np.zeros(self.in_dim)}

    def forward(self, params, x, train, rng, h0=None):
        mu = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + LAYER_NORM_EPS)
        x_hat = (x - mu) * inv_std
        return params["gamma"] * x_hat + params["beta"], (x_hat, inv_std)

    def backward(self, params, cache, dy):
        x_hat, inv_std = cache
        d = self.in_dim
        grads = {
            "gamma": (dy * x_hat).reshape(-1, d).sum(axis=0),
            "beta": dy.reshape(-1, d).sum(axis=0),
        }
        dx_hat = dy * params["gamma"]
        dx = inv_std * (
            dx_hat
            - dx_hat.mean(axis=-1, keepdims=True)
            - x_hat * (dx_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        return dx, grads, None

    def descriptor(self):
        return f"layer-norm({self.in_dim})"


class ReLU(Layer):
    def forward(self, params, x, train, rng, h0=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, cache, dy):
        return dy * cache, {}, None

    def descriptor(self):
        return "relu"


class Dropout(Layer):
    """
    Inverted dropout: surviving activations are scaled by ``1/(1-rate)`` at train time, so inference is the identity.
    """

    stochastic = True

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"Dropout rate {rate} not in [0, 1).")
        self.rate = rate

    def forward(self, params, x, train, rng, h0=None):
        if not train or self.rate == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, params, cache, dy):
        return (dy if cache is None else dy * cache), {}, None

    def descriptor(self):
        return f"dropout({self.rate!r})"


class _Recurrent(Layer):
    recurrent = True
    n_gates: int

    def __init__(self, in_dim: int, hidden: int):
        if in_dim < 1 or hidden < 1:
            raise ConfigurationError(
                f"Invalid recurrent dimensions ({in_dim}, {hidden})."
            )
        self.in_dim, self.out_dim = in_dim, hidden

    @property
    def hidden(self):
        return self.out_dim

    def init_params(self, rng):
        # One Glorot draw per gate block.
        H = self.hidden
        params = {
            "W_x": np.concatenate(
                [glorot_uniform(rng, self.in_dim, H) for _ in range(self.n_gates)], axis=1
            ),
            "W_h": np.concatenate(
                [glorot_uniform(rng, H, H) for _ in range(self.n_gates)], axis=1
            ),
        }
        for name, shape in self.param_shapes().items():
            params.setdefault(name, np.zeros(shape))
        return params

    def _check_input(self, x):
        if x.ndim != 3:
            raise ConfigurationError(
                f"Recurrent layer {self.descriptor()} expects (B, T, d) input, received shape {x.shape}."
            )


class GRU(_Recurrent):
    """
    Gated recurrent unit with gate order (reset, update, candidate)::

      r = sigmoid(x W_xr + b_xr + h W_hr + b_hr)
      z = sigmoid(x W_xz + b_xz + h W_hz + b_hz)
      n = tanh(x W_xn + b_xn + r * (h W_hn + b_hn))
      h' = (1 - z) * n + z * h
    """

    n_gates = 3

    def param_shapes(self):
        H = self.hidden
        return {
            "W_x": (self.in_dim, 3 * H),
            "W_h": (H, 3 * H),
            "b_x": (3 * H,),
            "b_h": (3 * H,),
        }

    def forward(self, params, x, train, rng, h0=None):
        self._check_input(x)
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H)) if h0 is None else h0
        ax = x @ params["W_x"] + params["b_x"]
        hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            ah = h @ params["W_h"] + params["b_h"]
            r = expit(ax[:, t, :H] + ah[:, :H])
            z = expit(ax[:, t, H : 2 * H] + ah[:, H : 2 * H])
            g = ah[:, 2 * H :]
            n = np.tanh(ax[:, t, 2 * H :] + r * g)
            steps.append((h, r, z, g, n))
            h = (1.0 - z) * n + z * h
            hs[:, t] = h
        return hs, (x, steps)

    def backward(self, params, cache, dy):
        x, steps = cache
        B, T, _ = x.shape
        H = self.hidden
        W_h = params["W_h"]
        d_ax = np.empty((B, T, 3 * H))
        dW_h = np.zeros_like(W_h)
        db_h = np.zeros(3 * H)
        dh_next = np.zeros((B, H))
        for t in reversed(range(T)):
            h_prev, r, z, g, n = steps[t]
            dh = dy[:, t] + dh_next
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            da_n = dn * (1.0 - n * n)
            dr = da_n * g
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            d_ah = np.concatenate([da_r, da_z, da_n * r], axis=1)
            d_ax[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
            dW_h += h_prev.T @ d_ah
            db_h += d_ah.sum(axis=0)
            dh_next = dh * z + d_ah @ W_h.T
        d_ax2 = d_ax.reshape(-1, 3 * H)
        grads = {
            "W_x": x.reshape(-1, self.in_dim).T @ d_ax2,
            "W_h": dW_h,
            "b_x": d_ax2.sum(axis=0),
            "b_h": db_h,
        }
        return d_ax @ params["W_x"].T, grads, dh_next

    def descriptor(self):
        return f"gru({self.in_dim},{self.hidden})"


class LSTM(_Recurrent):
    """
    Long short-term memory layer with gate order (input, forget, cell, output). The initial cell state is zero.
    """

    n_gates = 4

    def param_shapes(self):
        H = self.hidden
        return {"W_x": (self.in_dim, 4 * H), "W_h": (H, 4 * H), "b": (4 * H,)}

    def forward(self, params, x, train, rng, h0=None):
        self._check_input(x)
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H)) if h0 is None else h0
        c = np.zeros((B, H))
        ax = x @ params["W_x"] + params["b"]
        hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            a = ax[:, t] + h @ params["W_h"]
            i = expit(a[:, :H])
            f = expit(a[:, H : 2 * H])
            g = np.tanh(a[:, 2 * H : 3 * H])
            o = expit(a[:, 3 * H :])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((h, c, i, f, g, o, tc))
            h, c = o * tc, c_new
            hs[:, t] = h
        return hs, (x, steps)

    def backward(self, params, cache, dy):
        x, steps = cache
        B, T, _ = x.shape
        H = self.hidden
        W_h = params["W_h"]
        d_a = np.empty((B, T, 4 * H))
        dW_h = np.zeros_like(W_h)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            h_prev, c_prev, i, f, g, o, tc = steps[t]
            dh = dy[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            d_a[:, t] = da
            dW_h += h_prev.T @ da
            dh_next = da @ W_h.T
            dc_next = dc * f
        d_a2 = d_a.reshape(-1, 4 * H)
        grads = {
            "W_x": x.reshape(-1, self.in_dim).T @ d_a2,
            "W_h": dW_h,
            "b": d_a2.sum(axis=0),
        }
        return d_a @ params["W_x"].T, grads, dh_next

    def descriptor(self):
        return f"lstm({self.in_dim},{self.hidden})"


_DESCRIPTOR_PATTERN = re.compile(r"^(?P<name>[a-z\-]+)(\((?P<args>[^)]*)\))?$")
_LAYER_TYPES = {
    "affine": (Affine, int),
    "layer-norm": (LayerNorm, int),
    "relu": (ReLU, int),
    "dropout": (Dropout, float),
    "gru": (GRU, int),
    "lstm": (LSTM, int),
}


def parse_layer(descriptor: str) -> Layer:
    """
    Inverse of :meth:`Layer.descriptor`, e.g., ``parse_layer('gru(64,512)')``.
    """
    if not (match := _DESCRIPTOR_PATTERN.match(descriptor.strip())):
        raise ConfigurationError(f"Invalid layer descriptor `{descriptor}`.")
    try:
        layer_type, cast = _LAYER_TYPES[match["name"]]
    except KeyError:
        raise ConfigurationError(f"Unknown layer type `{match['name']}`.")
    try:
        args = [cast(_x) for _x in match["args"].split(",")] if match["args"] else []
        return layer_type(*args)
    except (ValueError, TypeError) as err:
        raise ConfigurationError(f"Invalid layer descriptor `{descriptor}`: {err}")


def parse_layers(descriptor: str) -> List[Layer]:
    return [parse_layer(_x) for _x in descriptor.split(";") if _x.strip()]
