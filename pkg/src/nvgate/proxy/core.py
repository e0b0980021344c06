"""Adaptive dispatch across sub-nodes.

Each sub-node keeps a score, the fraction of its responses classified
AVAILABLE. Requests go to the best-ranked sub-node first and move down the
ranking until one answers AVAILABLE or every sub-node has answered once.
When nobody was fully available the comparison oracle picks the response
to return.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from ..classifier import AvailabilityVerdict, Status, classify
from ..model import ClassifierConfig, RpcExchange, RpcRequest, TransportError


@dataclass(frozen=True, slots=True)
class SubNodeState:
    id: str
    endpoint: str = ""
    successes: int = 0
    attempts: int = 0
    # Most recent outcomes, newest last; only kept when windowed scoring is on.
    recent: tuple[bool, ...] | None = None
    window: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.attempts:
            raise ValueError("need 0 <= successes <= attempts")

    @property
    def score(self) -> float:
        if self.window:
            if not self.recent:
                return 1.0
            return sum(self.recent) / len(self.recent)
        if self.attempts == 0:
            return 1.0
        return self.successes / self.attempts


def update_score(state: SubNodeState, verdict: AvailabilityVerdict) -> SubNodeState:
    ok = verdict.status is Status.AVAILABLE
    recent = state.recent
    if state.window:
        recent = ((recent or ()) + (ok,))[-state.window:]
    return replace(
        state,
        successes=state.successes + ok,
        attempts=state.attempts + 1,
        recent=recent,
    )


def rank(states: Sequence[SubNodeState]) -> list[str]:
    """Ids by descending score; ties keep the given (registration) order."""
    return [s.id for s in sorted(states, key=lambda s: -s.score)]


@dataclass(frozen=True, slots=True)
class CandidateResponse:
    sub_node_id: str
    verdict: AvailabilityVerdict
    raw_response: bytes | None
    error: TransportError | None = None
    exchange: RpcExchange | None = field(default=None, compare=False)

    @property
    def has_body(self) -> bool:
        return self.raw_response is not None


def select_best_degraded(
    candidates: Sequence[CandidateResponse],
    ranking: Sequence[str] | None = None,
) -> CandidateResponse:
    """Pick the response to return when no sub-node was AVAILABLE.

    Compliant beats non-compliant; among compliant, the smallest block lag
    wins, ties going to the better-ranked sub-node. Without a compliant
    candidate the earliest body-bearing one is returned, else the first
    transport error. Candidates that arrived too late to count are only
    considered when nothing timely exists.
    """
    if not candidates:
        raise ValueError("no candidates")
    timely = [c for c in candidates if c.verdict.status is not Status.UNAVAILABLE]
    pool = timely or list(candidates)
    position = {sid: i for i, sid in enumerate(ranking)} if ranking is not None else {}
    order = {id(c): i for i, c in enumerate(pool)}

    compliant = [c for c in pool if c.has_body and c.verdict.c_r]
    if compliant:
        return min(
            compliant,
            key=lambda c: (
                c.verdict.f_r if c.verdict.f_r is not None else 0,
                position.get(c.sub_node_id, len(position) + order[id(c)]),
                order[id(c)],
            ),
        )
    for c in pool:
        if c.has_body:
            return c
    return pool[0]


@dataclass(frozen=True)
class ProxyOutcome:
    """Final answer for one client request."""

    request: RpcRequest
    chosen: CandidateResponse
    attempts: tuple[CandidateResponse, ...]

    @property
    def verdict(self) -> AvailabilityVerdict:
        return self.chosen.verdict

    @property
    def raw_response(self) -> bytes | None:
        return self.chosen.raw_response

    @property
    def error(self) -> TransportError | None:
        return self.chosen.error

    @property
    def sub_node_id(self) -> str:
        return self.chosen.sub_node_id


class Dispatcher:
    """Shared score/ranking state for one N-version deployment.

    Score updates and re-ranking happen under one lock, so concurrent
    requests see linearizable read-modify-write updates.
    """

    def __init__(
        self,
        sub_nodes: Sequence[tuple[str, str]] | Sequence[str],
        config: ClassifierConfig | None = None,
        window: int | None = None,
    ):
        if not sub_nodes:
            raise ValueError("need at least one sub-node")
        self.config = config or ClassifierConfig()
        self._lock = threading.Lock()
        self._states: dict[str, SubNodeState] = {}
        for entry in sub_nodes:
            sid, endpoint = (entry, "") if isinstance(entry, str) else entry
            if sid in self._states:
                raise ValueError(f"duplicate sub-node id {sid!r}")
            self._states[sid] = SubNodeState(sid, endpoint, window=window)
        self._ranking = list(self._states)

    @property
    def ranking(self) -> list[str]:
        with self._lock:
            return list(self._ranking)

    def states(self) -> list[SubNodeState]:
        with self._lock:
            return [self._states[s] for s in self._states]

    def state(self, sid: str) -> SubNodeState:
        return self._states[sid]

    def endpoint(self, sid: str) -> str:
        return self._states[sid].endpoint

    def record(self, sid: str, verdict: AvailabilityVerdict) -> list[str]:
        with self._lock:
            self._states[sid] = update_score(self._states[sid], verdict)
            self._ranking = rank(list(self._states.values()))
            return list(self._ranking)

    def snapshot(self) -> dict:
        """Admin view: scores, ranking and counts."""
        with self._lock:
            return {
                "ranking": list(self._ranking),
                "sub_nodes": [
                    {
                        "id": s.id,
                        "endpoint": s.endpoint,
                        "score": s.score,
                        "successes": s.successes,
                        "attempts": s.attempts,
                    }
                    for s in self._states.values()
                ],
            }

    def begin(self, request: RpcRequest, oracle_head: int) -> "RequestPlan":
        return RequestPlan(self, request, oracle_head)

    def handle(
        self,
        request: RpcRequest,
        send: Callable[[str, RpcRequest], RpcExchange],
        oracle_head: int,
    ) -> ProxyOutcome:
        plan = self.begin(request, oracle_head)
        while (target := plan.next_target()) is not None:
            plan.observe(target, send(target, request))
        return plan.outcome()

    async def handle_async(self, request: RpcRequest, send, oracle_head: int) -> ProxyOutcome:
        plan = self.begin(request, oracle_head)
        while (target := plan.next_target()) is not None:
            plan.observe(target, await send(target, request))
        return plan.outcome()


class RequestPlan:
    """Retry chain for a single request: try, classify, score, move on."""

    def __init__(self, dispatcher: Dispatcher, request: RpcRequest, oracle_head: int):
        self.dispatcher = dispatcher
        self.request = request
        self.oracle_head = oracle_head
        self.tried: list[str] = []
        self.candidates: list[CandidateResponse] = []
        self._ranking = dispatcher.ranking
        self._winner: CandidateResponse | None = None

    def next_target(self) -> str | None:
        if self._winner is not None:
            return None
        for sid in self._ranking:
            if sid not in self.tried:
                return sid
        return None

    def observe(self, sid: str, exchange: RpcExchange) -> AvailabilityVerdict:
        if sid in self.tried:
            raise RuntimeError(f"sub-node {sid!r} already tried for this request")
        self.tried.append(sid)
        verdict = classify(exchange, self.oracle_head, self.dispatcher.config)
        self._ranking = self.dispatcher.record(sid, verdict)
        cand = CandidateResponse(sid, verdict, exchange.raw_response, exchange.error, exchange)
        self.candidates.append(cand)
        if verdict.status is Status.AVAILABLE:
            self._winner = cand
        return verdict

    def outcome(self) -> ProxyOutcome:
        if not self.candidates:
            raise RuntimeError("no attempt was made")
        chosen = self._winner or select_best_degraded(self.candidates, self._ranking)
        return ProxyOutcome(self.request, chosen, tuple(self.candidates))
