"""Fault-injection strategy synthesis from system-call error profiles.

Profiles from several clients are merged key-wise (keeping the smallest
observed frequency for keys seen more than once), sorted by frequency, cut
into nested top-k strategies and amplified. Strategies are then mapped onto
the observable fault modes of a simulated node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .simnode.faults import FaultMode, SimNodeFaultConfig

DEFAULT_AMPLIFICATION = 0.05


class ProfileError(ValueError):
    """Malformed or inconsistent profile input."""


class FaultConfigError(ValueError):
    """A strategy cannot be turned into a node fault configuration."""


@dataclass(frozen=True, slots=True)
class SyscallErrorTuple:
    syscall: str
    err: str
    f: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.f <= 1.0) or math.isnan(self.f):
            raise ProfileError(f"frequency {self.f} for {self.syscall}/{self.err} outside [0, 1]")

    @property
    def key(self) -> tuple[str, str]:
        return (self.syscall, self.err)

    def to_dict(self) -> dict:
        return {"syscall": self.syscall, "errno": self.err, "f": self.f}


@dataclass(frozen=True)
class ErrorProfile:
    client_label: str
    tuples: frozenset[SyscallErrorTuple] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        keys = [t.key for t in self.tuples]
        if len(keys) != len(set(keys)):
            raise ProfileError(f"duplicate (syscall, errno) keys in profile {self.client_label!r}")


@dataclass(frozen=True)
class FaultInjectionStrategy:
    index: int
    tuples: tuple[SyscallErrorTuple, ...]

    def keys(self) -> set[tuple[str, str]]:
        return {t.key for t in self.tuples}

    def to_dict(self) -> dict:
        return {"index": self.index, "tuples": [t.to_dict() for t in self.tuples]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FaultInjectionStrategy":
        return cls(
            int(d["index"]),
            tuple(SyscallErrorTuple(t["syscall"], t["errno"], float(t["f"])) for t in d["tuples"]),
        )


def parse_profile(text: str, client_label: str = "profile") -> ErrorProfile:
    """Parse ``syscall,errno,frequency`` lines; ``#`` starts a comment."""
    seen: dict[tuple[str, str], int] = {}
    tuples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or not parts[0] or not parts[1]:
            raise ProfileError(f"line {lineno}: expected 'syscall,errno,frequency', got {line!r}")
        try:
            f = float(parts[2])
        except ValueError:
            raise ProfileError(f"line {lineno}: frequency {parts[2]!r} is not a number") from None
        if not 0.0 <= f <= 1.0:
            raise ProfileError(f"line {lineno}: frequency {f} outside [0, 1]")
        key = (parts[0], parts[1])
        if key in seen:
            raise ProfileError(f"line {lineno}: duplicate key {key} (first on line {seen[key]})")
        seen[key] = lineno
        tuples.append(SyscallErrorTuple(parts[0], parts[1], f))
    return ErrorProfile(client_label, frozenset(tuples))


def load_profile(source: str | Path, client_label: str | None = None) -> ErrorProfile:
    path = Path(source)
    return parse_profile(path.read_text(encoding="utf-8"), client_label or path.stem)


def _order(t: SyscallErrorTuple):
    return (-t.f, t.syscall, t.err)


def aggregate(profiles: Sequence[ErrorProfile]) -> list[SyscallErrorTuple]:
    """Key-wise merge keeping the minimum frequency, sorted by descending f."""
    if not profiles:
        raise ProfileError("aggregate needs at least one profile")
    best: dict[tuple[str, str], float] = {}
    for profile in profiles:
        for t in profile.tuples:
            prev = best.get(t.key)
            best[t.key] = t.f if prev is None else min(prev, t.f)
    return sorted((SyscallErrorTuple(s, e, f) for (s, e), f in best.items()), key=_order)


def amplify(f: float, amplification: float = DEFAULT_AMPLIFICATION, additive: bool = False) -> float:
    g = f + amplification if additive else f * (1.0 + amplification)
    return min(1.0, g)


def synthesize(
    aggregated: Sequence[SyscallErrorTuple],
    n: int,
    amplification: float = DEFAULT_AMPLIFICATION,
    additive: bool = False,
) -> list[FaultInjectionStrategy]:
    """Nested top-k strategies, k = 1..n, with amplified frequencies."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(aggregated):
        raise ValueError(f"asked for {n} strategies from {len(aggregated)} tuples")
    if not amplification > 0:
        raise ValueError("amplification must be > 0")
    ranked = sorted(aggregated, key=_order)
    amplified = [SyscallErrorTuple(t.syscall, t.err, amplify(t.f, amplification, additive))
                 for t in ranked[:n]]
    return [FaultInjectionStrategy(k, tuple(amplified[:k])) for k in range(1, n + 1)]


def strategies_to_json(
    strategies: Sequence[FaultInjectionStrategy],
    amplification: float = DEFAULT_AMPLIFICATION,
    additive: bool = False,
) -> str:
    doc = {
        "amplification": amplification,
        "amplification_mode": "additive" if additive else "multiplicative",
        "strategies": [s.to_dict() for s in strategies],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def strategies_from_json(text: str) -> list[FaultInjectionStrategy]:
    return [FaultInjectionStrategy.from_dict(d) for d in json.loads(text)["strategies"]]


@dataclass(frozen=True, slots=True)
class BehaviorEntry:
    """Pattern plus the effects it triggers, each a (mode, scale) pair."""

    syscall: str
    errno: str
    effects: tuple[tuple[FaultMode, float], ...]

    def matches(self, key: tuple[str, str]) -> bool:
        return fnmatchcase(key[0], self.syscall) and fnmatchcase(key[1], self.errno)

    @property
    def specificity(self) -> int:
        return (self.syscall != "*") * 2 + (self.errno != "*")


@dataclass(frozen=True)
class FaultBehaviorMap:
    """Maps (syscall, errno) patterns to fault modes with probability scales.

    A tuple with amplified frequency ``f`` fires each of its modes with
    probability ``min(1, f * scale)`` per draw. The most specific matching
    pattern wins; ties go to the earlier entry. Keys with no match fall to
    ``default``.
    """

    entries: tuple[BehaviorEntry, ...]
    default: BehaviorEntry | None = None

    def lookup(self, key: tuple[str, str]) -> BehaviorEntry:
        best = None
        for e in self.entries:
            if e.matches(key) and (best is None or e.specificity > best.specificity):
                best = e
        if best is None:
            best = self.default
        if best is None:
            raise FaultConfigError(f"no behavior mapped for {key[0]}/{key[1]}")
        return best

    def covers(self, keys: Iterable[tuple[str, str]]) -> bool:
        try:
            for k in keys:
                self.lookup(k)
        except FaultConfigError:
            return False
        return True

    @classmethod
    def from_dict(cls, d: Mapping) -> "FaultBehaviorMap":
        def entry(e: Mapping) -> BehaviorEntry:
            if "effects" in e:
                effects = tuple((FaultMode(x["mode"]), float(x.get("scale", 1.0))) for x in e["effects"])
            else:
                effects = ((FaultMode(e["mode"]), float(e.get("scale", 1.0))),)
            return BehaviorEntry(e.get("syscall", "*"), e.get("errno", "*"), effects)

        default = d.get("default")
        return cls(tuple(entry(e) for e in d.get("entries", [])),
                   entry(default) if default else None)

    @classmethod
    def load(cls, path: str | Path) -> "FaultBehaviorMap":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        def enc(e: BehaviorEntry) -> dict:
            return {
                "syscall": e.syscall,
                "errno": e.errno,
                "effects": [{"mode": m.value, "scale": sc} for m, sc in e.effects],
            }

        out: dict = {"entries": [enc(e) for e in self.entries]}
        if self.default is not None:
            out["default"] = enc(self.default)
        return out


def strategy_to_simconfig(
    strategy: FaultInjectionStrategy | None,
    behavior: FaultBehaviorMap,
    seed: int,
    crash_window: float = 30.0,
    sync_lag_window: float = 60.0,
    tick: float = 0.005,
) -> SimNodeFaultConfig:
    """Seeded node fault configuration realizing one strategy.

    Effects landing on the same mode combine as independent causes,
    ``1 - prod(1 - p_i)``. If the per-request modes together exceed
    probability 1 they are rescaled proportionally; likewise crash plus
    sync-lag.
    """
    survive: dict[FaultMode, float] = {}
    for t in strategy.tuples if strategy is not None else ():
        for mode, scale in behavior.lookup(t.key).effects:
            if mode is FaultMode.NONE or scale <= 0:
                continue
            p = min(1.0, t.f * scale)
            survive[mode] = survive.get(mode, 1.0) * (1.0 - p)
    probs = {m: 1.0 - s for m, s in survive.items()}
    lag = probs.pop(FaultMode.SYNC_LAG, 0.0)
    per_req = {m: p for m, p in probs.items() if m.per_request}
    total = sum(per_req.values())
    if total > 1.0:
        for m in per_req:
            probs[m] = per_req[m] / total
    crash = probs.get(FaultMode.CRASH, 0.0)
    if crash + lag > 1.0:
        probs[FaultMode.CRASH], lag = crash / (crash + lag), lag / (crash + lag)
    return SimNodeFaultConfig(
        probs,
        crash_window=crash_window,
        sync_lag_probability=lag,
        sync_lag_window=sync_lag_window,
        tick=tick,
        seed=seed,
    )


# Bundled example data -------------------------------------------------------

def _data(name: str):
    return resources.files("nvgate").joinpath("data").joinpath(name)


def default_profiles() -> list[ErrorProfile]:
    root = resources.files("nvgate").joinpath("data").joinpath("profiles")
    out = []
    for item in sorted(root.iterdir(), key=lambda p: p.name):
        if item.name.endswith(".txt"):
            out.append(parse_profile(item.read_text(encoding="utf-8"), item.name[:-4]))
    return out


def default_behavior_map() -> FaultBehaviorMap:
    return FaultBehaviorMap.from_dict(json.loads(_data("behavior_map.json").read_text(encoding="utf-8")))


def default_strategies(n: int = 20, amplification: float = DEFAULT_AMPLIFICATION) -> list[FaultInjectionStrategy]:
    return synthesize(aggregate(default_profiles()), n, amplification)
