"""
Finite-difference gradient checks for single stacks and for whole model families.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import UsageError
from .losses import mae_loss, mse_loss
from .stack import LayerStack, backward, forward

LossAndGradients = Callable[[], Tuple[float, Mapping[str, np.ndarray]]]

_LOSSES = {"mse": mse_loss, "mae": mae_loss}


@dataclass
class LayerCheck:
    label: str
    status: str
    """ One of ``'pass'``, ``'fail'`` or ``'non-checkable'``. """
    n_checked: int = 0
    max_rel_error: float = 0.0


@dataclass
class GradCheckReport:
    layers: List[LayerCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((_x.max_rel_error for _x in self.layers), default=0.0)

    @property
    def passed(self) -> bool:
        return all(_x.status != "fail" for _x in self.layers)

    @property
    def non_checkable(self) -> List[str]:
        return [_x.label for _x in self.layers if _x.status == "non-checkable"]

    def __str__(self):
        return "\n".join(
            f"{_x.label}: {_x.status} ({_x.n_checked} checked, max rel. error {_x.max_rel_error:.3g})"
            for _x in self.layers
        )


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5
    )


def check_gradients(
    stacks: Mapping[str, LayerStack],
    loss_and_gradients: LossAndGradients,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_params: int = 10_000,
    seed: int = 0,
    non_checkable: Tuple[str, ...] = (),
) -> GradCheckReport:
    """
    Compares the analytic gradients returned by ``loss_and_gradients`` to central differences of its loss, perturbing the parameters of ``stacks`` one at a time.

    Above ``max_params`` parameters in total, a random subsample of that size is checked.

    :param loss_and_gradients: Callable without arguments returning the loss and a mapping from stack name to flat gradient. It must evaluate the current parameters of ``stacks``.
    :param non_checkable: Layer labels reported as non-checkable instead of compared.
    """
    if step <= 0:
        raise UsageError(f"Finite-difference step must be positive, received {step}.")

    report = GradCheckReport()
    report.layers.extend(LayerCheck(_x, "non-checkable") for _x in non_checkable)

    _, analytic = loss_and_gradients()
    analytic = {_name: np.array(analytic[_name]) for _name in stacks}

    total = sum(_stack.n_params for _stack in stacks.values())
    if total == 0:
        return report
    selected = np.arange(total)
    if total > max_params:
        selected = np.sort(
            np.random.default_rng(seed).choice(total, size=max_params, replace=False)
        )

    errors: Dict[str, List[float]] = {}
    base = 0
    for name, stack in stacks.items():
        local = selected[(selected >= base) & (selected < base + stack.n_params)] - base
        base += stack.n_params
        original = stack.params.copy()
        try:
            for index in local:
                losses = []
                for delta in (step, -step):
                    perturbed = original.copy()
                    perturbed[index] += delta
                    stack.assign(perturbed)
                    losses.append(loss_and_gradients()[0])
                numeric = (losses[0] - losses[1]) / (2 * step)
                errors.setdefault(f"{name}/{stack.label_of(int(index))}", []).append(
                    float(relative_error(analytic[name][index], numeric))
                )
        finally:
            stack.assign(original)

    for label, layer_errors in errors.items():
        if label in non_checkable:
            continue
        worst = max(layer_errors)
        report.layers.append(
            LayerCheck(
                label,
                "pass" if worst < tolerance else "fail",
                len(layer_errors),
                worst,
            )
        )
    return report


def grad_check(
    stack: LayerStack,
    loss_spec: Union[str, Callable],
    x: np.ndarray,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    target: Optional[np.ndarray] = None,
    train_mode: bool = False,
    seed: int = 0,
    max_params: int = 10_000,
) -> GradCheckReport:
    """
    Gradient check of a single stack.

    :param loss_spec: ``'mse'``, ``'mae'`` or a callable mapping the stack output to ``(loss, d_loss/d_output)``.
    :param target: Regression target of ``'mse'`` and ``'mae'``. Drawn from a standard normal distribution when omitted.
    :param train_mode: Stochastic layers are reported as non-checkable in train mode. The remaining layers are checked with the dropout masks fixed by ``seed``.
    """
    if isinstance(loss_spec, str):
        loss_fxn = _LOSSES[loss_spec]
        if target is None:
            out, _ = forward(stack, x, train_mode=False)
            target = np.random.default_rng(seed).standard_normal(out.shape)
        loss_spec = lambda _y: loss_fxn(_y, target)

    def loss_and_gradients():
        y, cache = forward(stack, x, train_mode=train_mode, seed=seed)
        loss, dy = loss_spec(y)
        grads, _, _ = backward(stack, dy, cache)
        return loss, {"stack": grads}

    non_checkable = tuple(
        f"stack/{stack.layer_label(_k)}"
        for _k, _layer in enumerate(stack.layers)
        if _layer.stochastic and train_mode and getattr(_layer, "rate", 0.0) > 0
    )
    return check_gradients(
        {"stack": stack},
        loss_and_gradients,
        step=step,
        tolerance=tolerance,
        max_params=max_params,
        seed=seed,
        non_checkable=non_checkable,
    )


def grad_check_model(model, batch, **kwargs) -> GradCheckReport:
    """
    Gradient check of a model family exposing ``stacks`` and ``loss_and_gradients(batch, seed)``.
    """
    seed = kwargs.pop("seed", 0)
    return check_gradients(
        model.stacks,
        lambda: model.loss_and_gradients(batch, seed=seed)[:2],
        seed=seed,
        **kwargs,
    )
