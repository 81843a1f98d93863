from dataclasses import dataclass, field

import numpy as np

from app.errors import ShapeError


def lr_schedule(step, config):
    """Linear warm-up from warmup_init_lr to lr_peak, then inverse square root decay."""
    step = max(int(step), 1)
    warmup = config.warmup_steps
    if step < warmup:
        return config.warmup_init_lr + (config.lr_peak - config.warmup_init_lr) * step / warmup
    return config.lr_peak * np.sqrt(warmup / step)


@dataclass
class OptimizerState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step: int = 0

    def state_dict(self):
        state = {}
        for name in self.first_moment:
            state[f"adam.m.{name}"] = self.first_moment[name]
            state[f"adam.v.{name}"] = self.second_moment[name]
        return state

    def load_state_dict(self, state, step):
        self.first_moment = {key[len("adam.m."):]: value.copy() for key, value in state.items() if key.startswith("adam.m.")}
        self.second_moment = {key[len("adam.v."):]: value.copy() for key, value in state.items() if key.startswith("adam.v.")}
        self.step = int(step)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.98, eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update with coupled L2 decay, in place on `params`.

    `params` and `grads` map names to arrays of equal shape. `weight_decay` is
    one coefficient for every parameter or a dict of per-name coefficients
    (missing names are not decayed).
    """
    state.step += 1
    t = state.step
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"adam_step[{name}]", value.shape, grad.shape)
        decay = weight_decay.get(name, 0.0) if isinstance(weight_decay, dict) else weight_decay
        if decay:
            grad = grad + decay * value
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype, copy=False)
    return params


class Adam:
    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.state = OptimizerState()
        routers = set(model.router_parameters())
        self.weight_decay = {
            name: config.router_weight_decay if name in routers else config.weight_decay
            for name in model.named_parameters()
        }

    @property
    def step_count(self):
        return self.state.step

    def step(self):
        """Apply one update from the gradients accumulated on the model's
        parameters and return the learning rate used."""
        lr = lr_schedule(self.state.step + 1, self.config)
        named = self.model.named_parameters()
        adam_step(
            {name: tensor.data for name, tensor in named.items()},
            {name: tensor.grad for name, tensor in named.items()},
            self.state,
            lr,
            beta1=self.config.beta1,
            beta2=self.config.beta2,
            eps=self.config.adam_eps,
            weight_decay=self.weight_decay,
        )
        return lr

    def zero_grad(self):
        self.model.zero_grad()
