"""
Frame losses. Each returns the loss and its gradient with respect to the prediction.

Losses sum over the feature axis and average over every leading axis, i.e., over frames.
"""

from typing import Tuple

import numpy as np


def _n_frames(y):
    return max(int(np.prod(y.shape[:-1], dtype=int)), 1)


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean over frames of the squared L2 distance.
    """
    diff = prediction - target
    n = _n_frames(diff)
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n


def mae_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean over frames of the L1 distance.
    """
    diff = prediction - target
    n = _n_frames(diff)
    return float(np.sum(np.abs(diff))) / n, np.sign(diff) / n
