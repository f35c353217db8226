"""Finite-horizon backward recursions and the finite-memory storage family.

The backward recursion propagates X(i, k) = S(i, blend(X(., k+1))) + eps*I
from the zero final condition.  Because the final condition is zero, the
value at offset k depends only on the window symbols strictly between k
and the horizon; this makes the recursion an independent numerical oracle
for the LMI certificates: the storage family built here must satisfy the
same block-negativity inequality the solver asserts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import operators
from .model import SystemDef
from .operators import NotContractiveAtHorizon, PD_TOL
from .switching import Word, enumerate_words, is_admissible, split_word


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward-recursion table over (mode, offset) for one switching window.

    ``table[i-1, k]`` is the matrix at mode i and offset k, 0 <= k <= T+1;
    the final column is identically zero.  ``w_min_eig`` is the smallest
    disturbance-margin eigenvalue encountered anywhere in the run.
    """

    window: Word
    horizon: int
    epsilon: float
    table: np.ndarray  # (N, T+2, n, n)
    w_min_eig: float

    def x(self, i: int, k: int) -> np.ndarray:
        return self.table[i - 1, k]


def _backward_table(system: SystemDef, symbols: Word, T: int, epsilon: float, pd_tol: float):
    """Shared recursion core.  ``symbols[k]`` is the transition choice used
    when stepping from offset k+1 down to k; only indices 0..T-1 are read
    (the step at the horizon blends the zero final condition).
    """
    N, n = system.N, system.n
    table = np.zeros((N, T + 2, n, n))
    w_min = np.inf
    for k in range(T, -1, -1):
        for i in range(1, N + 1):
            if k == T:
                xtil = np.zeros((n, n))
            else:
                xtil = operators.blend(
                    i, symbols[k], {j: table[j - 1, k + 1] for j in range(1, N + 1)},
                    system.transitions,
                )
            w_eig = float(np.linalg.eigvalsh(operators.op_W(i, xtil, system))[0])
            w_min = min(w_min, w_eig)
            if w_eig <= pd_tol:
                raise NotContractiveAtHorizon(i, w_eig, step=k)
            table[i - 1, k] = operators.op_S(i, xtil, system, pd_tol) + epsilon * np.eye(n)
    return table, w_min


def riccati_backward(
    system: SystemDef,
    window: Word,
    T: int,
    epsilon: float = 0.0,
    pd_tol: float = PD_TOL,
) -> RiccatiSolution:
    """Run the backward recursion over an admissible window of length T+1.

    Raises :class:`NotContractiveAtHorizon` at the first offset where the
    disturbance margin loses positive definiteness, which rules out strict
    contractiveness along this window.
    """
    window = tuple(int(s) for s in window)
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    if len(window) != T + 1:
        raise ValueError(f"window must have length T+1={T + 1}, got {len(window)}")
    if not is_admissible(system.switching, window, system.J):
        raise ValueError(f"window {window} is not admissible under the switching structure")
    table, w_min = _backward_table(system, window, T, epsilon, pd_tol)
    return RiccatiSolution(window, T, epsilon, table, w_min)


def finite_memory_storage(
    system: SystemDef,
    i: int,
    word: Word,
    M: int,
    epsilon: float,
    pd_tol: float = PD_TOL,
) -> np.ndarray:
    """Storage matrix for (mode i, window word): the backward recursion over
    horizon M run on exactly the symbols of ``word``, evaluated at offset 0.

    A pure function of (i, word, M, epsilon): reaching the same window at
    different times yields the identical matrix.
    """
    word = tuple(int(s) for s in word)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if len(word) != M:
        raise ValueError(f"word must have length M={M}, got {len(word)}")
    if not is_admissible(system.switching, word, system.J):
        raise ValueError(f"word {word} is not admissible under the switching structure")
    table, _ = _backward_table(system, word, M, epsilon, pd_tol)
    return table[i - 1, 0]


@dataclass(frozen=True)
class DissipationReport:
    """Worst-case block negativity of a storage family.

    ``nu`` is the implied decrement margin: the negative of the largest
    block eigenvalue over every mode and window extension.  The family
    dissipates strictly iff nu > 0.
    """

    nu: float
    worst_eig: float
    worst_mode: int
    worst_word: Word
    blocks_checked: int

    @property
    def satisfied(self) -> bool:
        return self.nu > 0


def check_dissipation(
    system: SystemDef, Y: Mapping[tuple[int, Word], np.ndarray], M: int
) -> DissipationReport:
    """Evaluate the storage-decrement block for every (mode, extension).

    ``Y`` must assign a positive-definite matrix to every (mode, window)
    pair with windows of length M.
    """
    words = enumerate_words(system.switching, M, system.J)
    expected = {(i, w) for i in range(1, system.N + 1) for w in words}
    if set(Y.keys()) != expected:
        missing = sorted(expected - set(Y.keys()))[:3]
        extra = sorted(set(Y.keys()) - expected)[:3]
        raise ValueError(f"storage family index mismatch: missing {missing}, extra {extra}")

    worst = (-np.inf, 0, ())
    count = 0
    for w in sorted(enumerate_words(system.switching, M + 1, system.J)):
        prefix, suffix, head = split_word(w)
        for i in range(1, system.N + 1):
            ytil = operators.blend(
                i, head, {j: Y[(j, suffix)] for j in range(1, system.N + 1)},
                system.transitions,
            )
            block = operators.op_B(i, ytil, Y[(i, prefix)], system)
            top = float(np.linalg.eigvalsh(block)[-1])
            count += 1
            if top > worst[0]:
                worst = (top, i, w)
    return DissipationReport(
        nu=-worst[0], worst_eig=worst[0], worst_mode=worst[1], worst_word=worst[2],
        blocks_checked=count,
    )


@dataclass(frozen=True)
class StorageFamily:
    Y: dict[tuple[int, Word], np.ndarray]
    report: DissipationReport
    M: int
    epsilon: float
    attempts: int

    @property
    def satisfied(self) -> bool:
        return self.report.satisfied


def _suffix_tables(system: SystemDef, M: int, epsilon: float, pd_tol: float):
    """Level-by-level storage values keyed by window suffix.

    The offset-0 value over a word equals one closed update of the value
    over its one-shorter suffix (shift invariance of the recursion), so
    the family over all windows shares work across common suffixes.
    Returns ``levels`` with ``levels[l][word][i]`` for words of length l.
    """
    N, n = system.N, system.n
    eye = np.eye(n)

    def closed_update(i, xtil):
        w_eig = float(np.linalg.eigvalsh(operators.op_W(i, xtil, system))[0])
        if w_eig <= pd_tol:
            raise NotContractiveAtHorizon(i, w_eig)
        return operators.op_S(i, xtil, system, pd_tol) + epsilon * eye

    zero = np.zeros((n, n))
    levels = [{(): {i: closed_update(i, zero) for i in range(1, N + 1)}}]
    for level in range(1, M + 1):
        current: dict[Word, dict[int, np.ndarray]] = {}
        for w in enumerate_words(system.switching, level, system.J):
            vals = levels[level - 1][w[1:]]
            current[w] = {
                i: closed_update(
                    i, operators.blend(i, w[0], vals, system.transitions)
                )
                for i in range(1, N + 1)
            }
        levels.append(current)
    return levels


def storage_family(
    system: SystemDef,
    M: int,
    epsilon: float = 1e-3,
    max_retries: int = 4,
    pd_tol: float = PD_TOL,
) -> StorageFamily:
    """Build the finite-memory storage family over every (mode, window) and
    check its dissipation; on failure retry with epsilon/10, at most
    ``max_retries`` times.  The last attempt is returned even if it fails,
    with ``satisfied`` False.
    """
    eps = epsilon
    last = None
    for attempt in range(max_retries + 1):
        levels = _suffix_tables(system, M, eps, pd_tol)
        Y = {(i, w): x for w, vals in levels[M].items() for i, x in vals.items()}
        report = check_dissipation(system, Y, M)
        last = StorageFamily(Y=Y, report=report, M=M, epsilon=eps, attempts=attempt + 1)
        if report.satisfied:
            return last
        eps /= 10.0
    return last


def shift_invariance_check(
    system: SystemDef, window: Word, T: int, t: int, epsilon: float = 0.0
) -> float:
    """Max entrywise deviation between the offset-t value of the length-T
    recursion and the offset-0 value of the recursion on the shifted window.

    The two sides are computed by independent runs; agreement is an exact
    algebraic identity, so the deviation should sit at round-off level.
    """
    if not 0 <= t <= T:
        raise ValueError(f"need 0 <= t <= T, got t={t}, T={T}")
    window = tuple(int(s) for s in window)
    full = riccati_backward(system, window, T, epsilon)
    shifted = riccati_backward(system, window[t:], T - t, epsilon)
    return float(np.max(np.abs(full.table[:, t] - shifted.table[:, 0])))
