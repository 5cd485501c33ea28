"""Plug-and-play event records: agents joining and leaving the network."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .funnel import TAN, CouplingFunction, EdgeFunnel

__all__ = ["Handshake", "JoinEdge", "Join", "Leave", "EventSchedule"]


@dataclass(frozen=True)
class Handshake:
    """Parameters agreed in advance; ``B`` and ``t_k`` are negotiated at join time."""

    eta: float
    lam: float = 1.0
    margin: float = 0.1
    mu: CouplingFunction = TAN


@dataclass(frozen=True)
class JoinEdge:
    neighbor: int
    funnel: Optional[EdgeFunnel] = None
    handshake: Optional[Handshake] = None

    def __post_init__(self):
        if (self.funnel is None) == (self.handshake is None):
            raise ValueError("a join edge needs exactly one of funnel / handshake")


@dataclass(frozen=True)
class Join:
    t: float
    node: int
    edges: tuple = ()
    y0: Optional[tuple] = None
    z0: Optional[tuple] = None
    agent: object = None  # AgentModel; None means use the run's agent library

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.y0 is not None:
            object.__setattr__(self, "y0", tuple(float(v) for v in self.y0))
        if self.z0 is not None:
            object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))


@dataclass(frozen=True)
class Leave:
    t: float
    node: int


Event = Union[Join, Leave]


@dataclass(frozen=True)
class EventSchedule:
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        events = tuple(self.events)
        for a, b in zip(events, events[1:]):
            if b.t < a.t:
                raise ValueError("event times must be non-decreasing")
        object.__setattr__(self, "events", events)

    @classmethod
    def of(cls, events: Sequence[Event]) -> "EventSchedule":
        # stable sort keeps the given order among simultaneous events
        return cls(tuple(sorted(events, key=lambda e: e.t)))

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def times(self) -> list:
        return sorted({e.t for e in self.events})

    def at(self, t: float) -> list:
        return [e for e in self.events if e.t == t]
