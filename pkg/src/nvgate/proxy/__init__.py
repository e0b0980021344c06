"""The N-version gateway."""

from .core import (
    CandidateResponse,
    Dispatcher,
    ProxyOutcome,
    RequestPlan,
    SubNodeState,
    rank,
    select_best_degraded,
    update_score,
)

__all__ = [
    "CandidateResponse",
    "Dispatcher",
    "ProxyOutcome",
    "RequestPlan",
    "SubNodeState",
    "rank",
    "select_best_degraded",
    "update_score",
]
