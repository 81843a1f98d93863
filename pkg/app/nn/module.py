import contextlib
from collections import OrderedDict

import numpy as np

from app.tensor import Tensor, get_default_dtype


class Module:
    """Parameter container. Tensors and sub-modules assigned as attributes
    are registered in assignment order, which fixes checkpoint order."""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name, module):
        setattr(self, name, module)
        return module

    def named_parameters(self, prefix=""):
        params = OrderedDict()
        for name, tensor in self._parameters.items():
            params[f"{prefix}{name}"] = tensor
        for name, child in self._children.items():
            params.update(child.named_parameters(prefix=f"{prefix}{name}."))
        return params

    def parameters(self):
        return list(self.named_parameters().values())

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def train(self, mode=True):
        for module in self.modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    @contextlib.contextmanager
    def evaluating(self):
        """Evaluation mode for the block; the previous mode comes back on exit."""
        was_training = self.training
        self.eval()
        try:
            yield self
        finally:
            self.train(was_training)

    def state_dict(self):
        return OrderedDict((name, tensor.data) for name, tensor in self.named_parameters().items())

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = [name for name in params if name not in state]
        unexpected = [name for name in state if name not in params]
        if missing or unexpected:
            raise KeyError(f"State mismatch: missing {missing}, unexpected {unexpected}")
        for name, tensor in params.items():
            if tuple(state[name].shape) != tensor.shape:
                raise ValueError(f"{name}: expected shape {tensor.shape}, got {tuple(state[name].shape)}")
            tensor.data[...] = state[name]


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for module in modules:
            self.append(module)

    def append(self, module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]


def parameter(data):
    return Tensor(np.ascontiguousarray(data, dtype=get_default_dtype()), requires_grad=True)


def uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape))


def zeros(shape):
    return parameter(np.zeros(shape))


def ones(shape):
    return parameter(np.ones(shape))
