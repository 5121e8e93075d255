"""Asynchronous block coordinate descent for time-varying quadratic programs."""

from .errors import BoundRangeError, ConfigError, NonFiniteTraceError, OracleError, PreconditionError, TvqpError
from .qp_model import (
    PAPER_LITERAL,
    SYMMETRIZED,
    AggregateObjective,
    BlockPartition,
    Box,
    ConstantFamily,
    CosineFamily,
    SampleState,
    TimeVaryingQP,
    TrackingFamily,
    build_aggregate,
    eval_block_direction,
    eval_cost,
    make_qp,
    project_box,
)
from .schedule import AsyncSchedule, SamplingPlan, generate_sampling, generate_schedule, validate_schedule
from .engine import RunTrace, estimate_khat, run

__version__ = "0.1.0"
