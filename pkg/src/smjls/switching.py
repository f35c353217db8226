"""Admissible switching structures and their finite window languages.

A switching structure describes which infinite symbol sequences the
transition-matrix selector may follow.  Three families are supported:
unconstrained sequences, walks on a directed graph, and a single
eventually-periodic sequence.  The central operation is enumerating the
set of length-M windows that occur somewhere in some admissible sequence;
path-dependent certificates are indexed by these windows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

Word = tuple[int, ...]


class SwitchingError(ValueError):
    """Raised for switching structures that admit no infinite sequence."""


@dataclass(frozen=True)
class AllSequences:
    """Every sequence over the symbol alphabet is admissible."""


@dataclass(frozen=True)
class Graph:
    """Admissible sequences are the infinite walks on a directed graph.

    ``edges`` are ordered pairs (u, v) meaning symbol u may be followed by
    symbol v.  Symbols are 1-based.
    """

    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        norm = tuple(sorted({(int(u), int(v)) for u, v in self.edges}))
        if not norm:
            raise SwitchingError("switching graph has no edges")
        object.__setattr__(self, "edges", norm)


@dataclass(frozen=True)
class EventuallyPeriodic:
    """A single admissible sequence: ``prefix`` followed by ``period`` forever."""

    prefix: Word
    period: Word

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(s) for s in self.prefix))
        object.__setattr__(self, "period", tuple(int(s) for s in self.period))
        if not self.period:
            raise SwitchingError("eventually periodic switching needs a nonempty period")


SwitchingStructure = AllSequences | Graph | EventuallyPeriodic


class WordSplit(NamedTuple):
    prefix: Word
    suffix: Word
    head: int


def split_word(word: Word) -> WordSplit:
    """Split (r1, ..., rM+1) into prefix (r1..rM), suffix (r2..rM+1), head r1."""
    if len(word) == 0:
        raise ValueError("cannot split the empty word")
    return WordSplit(tuple(word[:-1]), tuple(word[1:]), word[0])


def _check_symbols(symbols, J: int, what: str) -> None:
    for s in symbols:
        if not 1 <= s <= J:
            raise SwitchingError(f"{what}: symbol {s} outside alphabet 1..{J}")


def live_adjacency(structure: Graph, J: int) -> dict[int, tuple[int, ...]]:
    """Successor map after removing nodes with no infinite forward extension.

    Nodes whose every walk dead-ends are deleted iteratively (a node dies
    when it has no surviving successor).  Raises if nothing survives,
    since then no infinite walk exists at all.
    """
    nodes = {u for u, _ in structure.edges} | {v for _, v in structure.edges}
    _check_symbols(nodes, J, "switching graph")
    adj = {u: {v for (a, v) in structure.edges if a == u} for u in nodes}
    while True:
        dead = [u for u, vs in adj.items() if not vs]
        if not dead:
            break
        for u in dead:
            del adj[u]
        for u in adj:
            adj[u] = {v for v in adj[u] if v in adj}
    if not adj:
        raise SwitchingError(
            f"switching graph has no infinite extension from node {min(nodes)}"
        )
    return {u: tuple(sorted(vs)) for u, vs in sorted(adj.items())}


def _periodic_sequence(structure: EventuallyPeriodic, length: int) -> Word:
    reps = -(-max(0, length - len(structure.prefix)) // len(structure.period)) + 1
    return structure.prefix + structure.period * reps


def enumerate_words(structure: SwitchingStructure, M: int, J: int) -> frozenset[Word]:
    """All length-M windows occurring in some admissible sequence.

    M = 0 yields the singleton {()} for every structure.
    """
    if M < 0:
        raise ValueError(f"window length must be nonnegative, got {M}")
    if J < 1:
        raise ValueError(f"alphabet size must be positive, got {J}")
    if M == 0:
        return frozenset({()})

    if isinstance(structure, AllSequences):
        return frozenset(itertools.product(range(1, J + 1), repeat=M))

    if isinstance(structure, Graph):
        adj = live_adjacency(structure, J)
        words: set[Word] = set()
        stack: list[Word] = [(u,) for u in adj]
        while stack:
            walk = stack.pop()
            if len(walk) == M:
                words.add(walk)
                continue
            stack.extend(walk + (v,) for v in adj[walk[-1]])
        return frozenset(words)

    if isinstance(structure, EventuallyPeriodic):
        _check_symbols(structure.prefix + structure.period, J, "periodic switching")
        offsets = len(structure.prefix) + len(structure.period)
        seq = _periodic_sequence(structure, offsets + M)
        return frozenset(seq[t : t + M] for t in range(offsets))

    raise TypeError(f"unknown switching structure {type(structure).__name__}")


def is_admissible(structure: SwitchingStructure, word: Word, J: int) -> bool:
    """True iff ``word`` is a window of some admissible infinite sequence."""
    if any(not 1 <= s <= J for s in word):
        return False
    if len(word) == 0 or isinstance(structure, AllSequences):
        return True
    if isinstance(structure, Graph):
        adj = live_adjacency(structure, J)
        if any(s not in adj for s in word):
            return False
        return all(b in adj[a] for a, b in zip(word, word[1:]))
    if isinstance(structure, EventuallyPeriodic):
        offsets = len(structure.prefix) + len(structure.period)
        seq = _periodic_sequence(structure, offsets + len(word))
        return any(seq[t : t + len(word)] == tuple(word) for t in range(offsets))
    raise TypeError(f"unknown switching structure {type(structure).__name__}")


def random_window(
    structure: SwitchingStructure, J: int, length: int, rng: np.random.Generator
) -> Word:
    """Draw one admissible length-``length`` window uniformly step-by-step."""
    if length == 0:
        return ()
    if isinstance(structure, AllSequences):
        return tuple(int(s) for s in rng.integers(1, J + 1, size=length))
    if isinstance(structure, Graph):
        adj = live_adjacency(structure, J)
        nodes = sorted(adj)
        walk = [nodes[rng.integers(len(nodes))]]
        while len(walk) < length:
            succ = adj[walk[-1]]
            walk.append(succ[rng.integers(len(succ))])
        return tuple(walk)
    if isinstance(structure, EventuallyPeriodic):
        offsets = len(structure.prefix) + len(structure.period)
        seq = _periodic_sequence(structure, offsets + length)
        t = int(rng.integers(offsets))
        return seq[t : t + length]
    raise TypeError(f"unknown switching structure {type(structure).__name__}")
