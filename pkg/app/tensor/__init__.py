from app.tensor.engine import (
    DTYPES,
    Tape,
    Tensor,
    backward,
    default_precision,
    get_default_dtype,
    grad_scaling,
    is_grad_enabled,
    no_grad,
    set_default_dtype,
)
from app.tensor import ops
from app.tensor.ops import as_tensor, stop_gradient
