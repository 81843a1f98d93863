from app.mixing.context import MixingContext, RouteRecord
from app.mixing.mixed import (
    MixedLinear,
    check_simplex,
    copy_vanilla_weights,
    gradient_multiplier,
    mixed_apply,
    mixed_apply_weight_order,
    proportion_detach_policy,
    router_input,
)
from app.mixing.proportion import DEFAULT_EPSILON, DomainProportionLayer, domain_proportion
