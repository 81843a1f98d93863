import contextlib
import itertools
import logging
import threading

import numpy as np

from app.errors import DomixError


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

DTYPES = {"f32": np.float32, "f64": np.float64}

_state = threading.local()
_node_ids = itertools.count()
_default_dtype = np.float32


def set_default_dtype(precision):
    global _default_dtype
    if precision not in DTYPES:
        raise DomixError(f"Unknown precision '{precision}', expected one of {sorted(DTYPES)}")
    _default_dtype = DTYPES[precision]
    logger.info(f"Default tensor precision set to {precision}")


def get_default_dtype():
    return _default_dtype


@contextlib.contextmanager
def default_precision(precision):
    """Switch the default dtype for the block and restore the previous one on exit."""
    global _default_dtype
    previous = _default_dtype
    set_default_dtype(precision)
    try:
        yield
    finally:
        _default_dtype = previous


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording backward rules (decoding, evaluation)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_scaling_enabled():
    return getattr(_state, "grad_scaling", True)


@contextlib.contextmanager
def grad_scaling(enabled):
    """With scaling disabled, `scale_grad` is a plain identity so the tape
    computes the true gradient (finite-difference checks)."""
    previous = is_grad_scaling_enabled()
    _state.grad_scaling = enabled
    try:
        yield
    finally:
        _state.grad_scaling = previous


class DetachedValues:
    """Values crossing `stop_gradient` edges, recorded on one forward pass and
    replayed on later passes so finite differences see them as constants."""

    def __init__(self):
        self.values = []
        self.replaying = False
        self.cursor = 0

    def take(self, data):
        if not self.replaying:
            self.values.append(data.copy())
            return data
        value = self.values[self.cursor]
        self.cursor += 1
        return value


def active_detached_values():
    return getattr(_state, "detached_values", None)


@contextlib.contextmanager
def detached_values(store):
    previous = active_detached_values()
    store.cursor = 0
    _state.detached_values = store
    try:
        yield store
    finally:
        _state.detached_values = previous
        if not store.replaying:
            store.replaying = True


class Tensor:
    """Dense array of reals that participates in the gradient tape.

    Leaves are created directly; every other tensor is produced by a
    `Function` and remembers it in `_ctx` so `backward` can walk the graph.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, _ctx=None):
        if not isinstance(data, np.ndarray) or not np.issubdtype(data.dtype, np.floating):
            data = np.asarray(data, dtype=_default_dtype)
        self.data = data
        self.requires_grad = requires_grad
        self.name = name
        self._ctx = _ctx
        self.node_id = next(_node_ids)
        self.grad = np.zeros_like(data) if requires_grad and _ctx is None else None

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._ctx is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        return backward(self)

    def __add__(self, other):
        from app.tensor import ops
        return ops.add(self, ops.as_tensor(other))

    def __radd__(self, other):
        from app.tensor import ops
        return ops.add(ops.as_tensor(other), self)

    def __sub__(self, other):
        from app.tensor import ops
        return ops.add(self, ops.scale(ops.as_tensor(other), -1.0))

    def __neg__(self):
        from app.tensor import ops
        return ops.scale(self, -1.0)

    def __mul__(self, other):
        from app.tensor import ops
        if np.isscalar(other):
            return ops.scale(self, other)
        return ops.mul(self, ops.as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from app.tensor import ops
        if not np.isscalar(other):
            raise DomixError("Tensor division is only defined for scalar divisors")
        return ops.scale(self, 1.0 / other)

    def __matmul__(self, other):
        from app.tensor import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from app.tensor import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from app.tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from app.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from app.tensor import ops
        return ops.transpose(self, axes or None)

    def __getitem__(self, index):
        from app.tensor import ops
        return ops.slice(self, index)


class Function:
    """A primitive op: `forward` on arrays, `backward` maps the output
    gradient to one gradient (or None) per parent."""

    def __init__(self, *parents):
        self.parents = parents

    @classmethod
    def apply(cls, *parents, **kwargs):
        fn = cls(*parents)
        out = np.asarray(fn.forward(*[parent.data for parent in parents], **kwargs))
        if is_grad_enabled() and any(parent.requires_grad for parent in parents):
            return Tensor(out, requires_grad=True, _ctx=fn)
        return Tensor(out)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Tape:
    """Topologically ordered record of the nodes that lead to a root."""

    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def record(cls, root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in visited:
                continue
            visited.add(node.node_id)
            stack.append((node, True))
            if node._ctx is not None:
                for parent in reversed(node._ctx.parents):
                    if parent.requires_grad and parent.node_id not in visited:
                        stack.append((parent, False))
        return cls(order)

    def run_backward(self, root, seed):
        grads = {root.node_id: seed}
        touched = {}
        for node in reversed(self.nodes):
            grad = grads.pop(node.node_id, None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.astype(node.data.dtype, copy=False) if node.grad is None else node.grad + grad
                touched[node] = node.grad
                continue
            parent_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise DomixError(
                        f"{type(node._ctx).__name__} produced gradient {parent_grad.shape} for input {parent.shape}"
                    )
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + parent_grad
                else:
                    grads[parent.node_id] = parent_grad
        return touched


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    Returns a map from leaf tensor to its (accumulated) gradient.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise DomixError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    tape = Tape.record(loss)
    return tape.run_backward(loss, np.ones_like(loss.data))
