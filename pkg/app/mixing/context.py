from dataclasses import dataclass

import numpy as np

from app.mixing.mixed import proportion_detach_policy, router_input
from app.models import ProportionRecord, ProportionTrace
from app.tensor import Tensor


@dataclass
class RouteRecord:
    stack: str
    layer: int
    sublayer: str
    proportions: Tensor
    token_mask: np.ndarray

    @property
    def tag(self):
        return f"{self.stack}_{self.sublayer}"


class MixingContext:
    """Per-forward-pass bookkeeping for the proportion layers: applies the
    detach policy and keeps every proportion tensor for L_mix and export."""

    def __init__(self, detach_mode="detached"):
        self.detach_mode = detach_mode
        self.records = []
        self.stack = None
        self.layer = None

    def at(self, stack, layer):
        self.stack, self.layer = stack, layer
        return self

    def route(self, router, x, sublayer, token_mask):
        proportions = router(router_input(x, self.detach_mode))
        if token_mask is None:
            token_mask = np.ones(x.shape[:-1], dtype=bool)
        self.records.append(RouteRecord(self.stack, self.layer, sublayer, proportions, np.asarray(token_mask, bool)))
        return proportion_detach_policy(proportions, self.detach_mode)

    def by_tag(self, tag, layer=None):
        return [r for r in self.records if r.tag == tag and (layer is None or r.layer == layer)]

    def traces(self, sources, targets=None, start_id=0):
        """One ProportionTrace per sentence of the batch, pad positions dropped."""
        traces = []
        for row, tokens in enumerate(sources):
            trace = ProportionTrace(
                sentence_id=start_id + row,
                tokens=tokens,
                target_tokens=targets[row] if targets is not None else None,
            )
            for record in self.records:
                values = record.proportions.data[row][record.token_mask[row]]
                trace.records.append(ProportionRecord(
                    stack=record.stack,
                    layer=record.layer,
                    sublayer=record.sublayer,
                    proportions=[[float(v) for v in vector] for vector in values],
                ))
            traces.append(trace)
        return traces
