"""Flow-matching objective and guided ODE sampling."""

from core.flow.infill import (
    FlowSample,
    InfillBatch,
    apply_cfg_dropout,
    cfm_infill_loss,
    make_flow_sample,
    make_infill_batch,
    sample_span_mask,
)
from core.flow.sampler import SamplerConfig, guided_velocity, integrate, ode_sample

__all__ = [
    "FlowSample", "InfillBatch", "apply_cfg_dropout", "cfm_infill_loss", "make_flow_sample",
    "make_infill_batch", "sample_span_mask", "SamplerConfig", "guided_velocity", "integrate", "ode_sample",
]
