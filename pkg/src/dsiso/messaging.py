"""Communication graph and the in-process message bus shared by setup and runtime."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    """Directed, time-invariant graph; ``neighbors[i]`` lists the senders ``i`` hears."""

    neighbors: tuple

    def __post_init__(self):
        N = len(self.neighbors)
        if N == 0:
            raise GraphError("graph needs at least one node")
        cleaned = []
        for i, nbrs in enumerate(self.neighbors):
            nbrs = sorted(set(int(j) for j in nbrs))
            if any(j < 0 or j >= N for j in nbrs):
                raise GraphError(f"node {i} lists a neighbour outside 0..{N - 1}: {nbrs}")
            if i not in nbrs:
                raise GraphError(f"node {i} is missing its self-loop")
            cleaned.append(tuple(nbrs))
        object.__setattr__(self, "neighbors", tuple(cleaned))

    @property
    def N(self) -> int:
        return len(self.neighbors)

    def ordered_neighbors(self, i) -> tuple:
        """Self first, then ascending index: the tie-break order for intersections."""
        return (i,) + tuple(j for j in self.neighbors[i] if j != i)

    def out_neighbors(self, j) -> tuple:
        return tuple(i for i in range(self.N) if j in self.neighbors[i])

    def edges(self):
        return [(j, i) for i in range(self.N) for j in self.neighbors[i]]

    def csr(self):
        """``(ptr, src)`` arrays over :meth:`ordered_neighbors`."""
        ptr = [0]
        src = []
        for i in range(self.N):
            nb = self.ordered_neighbors(i)
            src.extend(nb)
            ptr.append(len(src))
        return np.asarray(ptr, dtype=np.int64), np.asarray(src, dtype=np.int64)

    @classmethod
    def from_edges(cls, N, edges: Iterable[Sequence[int]], add_self_loops=False):
        nbrs = [set() for _ in range(N)]
        for j, i in edges:
            nbrs[int(i)].add(int(j))
        if add_self_loops:
            for i in range(N):
                nbrs[i].add(i)
        return cls(tuple(tuple(s) for s in nbrs))

    @classmethod
    def complete(cls, N):
        return cls(tuple(tuple(range(N)) for _ in range(N)))

    @classmethod
    def isolated(cls, N):
        return cls(tuple((i,) for i in range(N)))

    @classmethod
    def path(cls, N):
        return cls(tuple(tuple(j for j in (i - 1, i, i + 1) if 0 <= j < N) for i in range(N)))

    @classmethod
    def ring(cls, N):
        return cls(tuple(tuple({(i - 1) % N, i, (i + 1) % N}) for i in range(N)))


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    step: int
    phase: str
    payload: Any


Transport = Callable[[list], list]


def in_process_transport(messages: list) -> list:
    return messages


class MessageBus:
    """Synchronous broadcast rounds over a :class:`CommGraph`.

    ``transport`` receives the outgoing message list and returns what is
    delivered; the default delivers everything unchanged.
    """

    def __init__(self, graph: CommGraph, transport: Transport | None = None):
        self.graph = graph
        self.transport = transport or in_process_transport

    def exchange(self, step: int, phase: str, payloads: Sequence[Any]) -> list:
        """Run one round; returns, per receiver, ``[(sender, payload), ...]`` in tie-break order."""
        g = self.graph
        if len(payloads) != g.N:
            raise ValueError(f"expected {g.N} payloads, got {len(payloads)}")
        outgoing = [Message(j, i, step, phase, payloads[j]) for j in range(g.N) for i in g.out_neighbors(j)]
        delivered = self.transport(outgoing)
        inbox = [{} for _ in range(g.N)]
        for msg in delivered:
            if msg.step != step or msg.phase != phase:
                continue
            if msg.sender in g.neighbors[msg.receiver]:
                inbox[msg.receiver][msg.sender] = msg.payload
        out = []
        for i in range(g.N):
            order = g.ordered_neighbors(i)
            missing = [j for j in order if j not in inbox[i]]
            if missing:
                raise RuntimeError(f"step {step} phase {phase}: node {i} received nothing from {missing}")
            out.append([(j, inbox[i][j]) for j in order])
        return out
