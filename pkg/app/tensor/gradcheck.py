import logging
from dataclasses import dataclass, field

import numpy as np

from app.tensor.engine import DetachedValues, backward, detached_values, no_grad


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


@dataclass
class ParameterCheck:
    name: str
    shape: tuple
    max_abs_grad: float
    max_rel_error: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": list(self.shape),
            "max_abs_grad": self.max_abs_grad,
            "max_rel_error": self.max_rel_error,
        }


@dataclass
class GradCheckReport:
    tolerance: float
    checks: list = field(default_factory=list)

    @property
    def max_rel_error(self):
        return max((check.max_rel_error for check in self.checks), default=0.0)

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "max_rel_error": self.max_rel_error,
            "parameters": [check.to_dict() for check in self.checks],
        }


def relative_error(analytic, numeric, floor=1e-6):
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numerical_gradient(loss_fn, tensor, step=1e-5, store=None):
    """Central differences of `loss_fn()` with respect to `tensor.data`."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = _evaluate(loss_fn, store)
        flat[i] = original - step
        minus = _evaluate(loss_fn, store)
        flat[i] = original
        flat_grad[i] = (plus - minus) / (2.0 * step)
    return grad


def _evaluate(loss_fn, store):
    with no_grad():
        if store is None:
            return float(loss_fn().data)
        with detached_values(store):
            return float(loss_fn().data)


def check_gradients(loss_fn, parameters, step=1e-5, tolerance=1e-5):
    """Compare backward() against central differences for every named parameter.

    Values that cross a stop_gradient edge are frozen at the unperturbed
    point, so the oracle differentiates the same function the tape does.
    """
    store = DetachedValues()
    for tensor in parameters.values():
        tensor.zero_grad()
    with detached_values(store):
        loss = loss_fn()
    backward(loss)

    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in parameters.items():
        numeric = numerical_gradient(loss_fn, tensor, step=step, store=store)
        error = relative_error(tensor.grad, numeric)
        report.checks.append(
            ParameterCheck(
                name=name,
                shape=tensor.shape,
                max_abs_grad=float(np.abs(tensor.grad).max(initial=0.0)),
                max_rel_error=error,
            )
        )
        if error >= tolerance:
            logger.warning(f"Gradient mismatch on {name}: relative error {error:.3e}")
    return report
