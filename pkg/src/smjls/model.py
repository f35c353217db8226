"""System definition: mode matrices, transition-matrix set, parsing, validation.

The canonical on-disk format is strict JSON with keys ``modes`` (objects
holding row-major ``A``, ``B``, ``C``, ``D``), ``transition_matrices``,
``switching`` and optional ``p0``.  Mode and symbol indices are 1-based in
every external format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .switching import (
    AllSequences,
    EventuallyPeriodic,
    Graph,
    SwitchingError,
    SwitchingStructure,
    enumerate_words,
)

ROW_SUM_TOL = 1e-9
NEG_CLAMP = -1e-12


class SystemFormatError(ValueError):
    """A document does not conform to the system schema; ``path`` names where."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModeMatrices:
    """One mode's state/disturbance/error matrices (A: n*n, B: n*m, C: p*n, D: p*m)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            mat = _freeze(getattr(self, name))
            if mat.ndim != 2:
                raise ValueError(f"matrix {name} must be two-dimensional")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"matrix {name} has non-finite entries")
            object.__setattr__(self, name, mat)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        m = self.B.shape[1]
        p = self.C.shape[0]
        if self.B.shape != (n, m):
            raise ValueError(f"B must be {n}x{m}, got {self.B.shape}")
        if self.C.shape != (p, n):
            raise ValueError(f"C must have {n} columns, got {self.C.shape}")
        if self.D.shape != (p, m):
            raise ValueError(f"D must be {p}x{m}, got {self.D.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class TransitionMatrixSet:
    """The finite family of row-stochastic transition matrices.

    Entries below the clamp floor are rejected; tiny negative round-off in
    [-1e-12, 0) is clamped to zero on construction.  Row sums are checked
    by :func:`validate_system`, not here, so that imperfect documents can
    still be loaded and reported on.
    """

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.matrices) == 0:
            raise ValueError("at least one transition matrix is required")
        cleaned = []
        for s, mat in enumerate(self.matrices, start=1):
            mat = np.array(mat, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"transition matrix {s} must be square")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"transition matrix {s} has non-finite entries")
            if np.any(mat < NEG_CLAMP):
                worst = float(mat.min())
                raise ValueError(
                    f"transition matrix {s} has negative entry {worst}"
                )
            mat[(mat < 0.0)] = 0.0
            cleaned.append(_freeze(mat))
        if len({m.shape for m in cleaned}) != 1:
            raise ValueError("all transition matrices must share one dimension")
        object.__setattr__(self, "matrices", tuple(cleaned))

    @property
    def J(self) -> int:
        return len(self.matrices)

    @property
    def N(self) -> int:
        return self.matrices[0].shape[0]

    def pi(self, s: int) -> np.ndarray:
        """Transition matrix for 1-based symbol ``s``."""
        return self.matrices[s - 1]


@dataclass(frozen=True)
class SystemDef:
    """A switched Markov jump linear system.

    Immutable after construction (all arrays are read-only), hence safe to
    share across threads.
    """

    modes: tuple[ModeMatrices, ...]
    transitions: TransitionMatrixSet
    switching: SwitchingStructure
    p0: np.ndarray | None = None

    def __post_init__(self):
        if len(self.modes) == 0:
            raise ValueError("at least one mode is required")
        object.__setattr__(self, "modes", tuple(self.modes))
        dims = {(md.n, md.m, md.p) for md in self.modes}
        if len(dims) != 1:
            raise ValueError(f"modes disagree on dimensions: {sorted(dims)}")
        if self.transitions.N != len(self.modes):
            raise ValueError(
                f"transition matrices are {self.transitions.N}x{self.transitions.N} "
                f"but there are {len(self.modes)} modes"
            )
        if self.p0 is not None:
            p0 = _freeze(self.p0)
            if p0.shape != (len(self.modes),):
                raise ValueError(
                    f"p0 must have length {len(self.modes)}, got shape {p0.shape}"
                )
            if not np.all(np.isfinite(p0)):
                raise ValueError("p0 has non-finite entries")
            object.__setattr__(self, "p0", p0)
        _validate_switching_symbols(self.switching, self.transitions.J)

    @property
    def N(self) -> int:
        """Number of modes."""
        return len(self.modes)

    @property
    def J(self) -> int:
        """Number of transition matrices."""
        return self.transitions.J

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return self.modes[0].m

    @property
    def p(self) -> int:
        return self.modes[0].p

    def mode(self, i: int) -> ModeMatrices:
        """Matrices of 1-based mode ``i``."""
        return self.modes[i - 1]

    def initial_distribution(self) -> np.ndarray:
        """p0 if given, else the uniform distribution (assumption recorded
        by :func:`validate_system`)."""
        if self.p0 is not None:
            return self.p0
        return np.full(self.N, 1.0 / self.N)


def _validate_switching_symbols(structure: SwitchingStructure, J: int) -> None:
    if isinstance(structure, Graph):
        symbols = {u for u, _ in structure.edges} | {v for _, v in structure.edges}
    elif isinstance(structure, EventuallyPeriodic):
        symbols = set(structure.prefix) | set(structure.period)
    else:
        symbols = set()
    for s in sorted(symbols):
        if not 1 <= s <= J:
            raise ValueError(f"switching symbol {s} outside alphabet 1..{J}")


class Finding(NamedTuple):
    severity: str  # "error" | "warning" | "info"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    findings: tuple[Finding, ...]
    positivity_hypothesis: bool

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]


# ---------------------------------------------------------------------------
# parsing

def _reject_constant(token: str):
    raise SystemFormatError("$", f"non-finite number token {token!r} not accepted")


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SystemFormatError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SystemFormatError(path, f"non-finite value {value!r}")
    return float(value)


def _as_matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise SystemFormatError(path, "expected a nonempty array of rows")
    rows = []
    width = None
    for r, row in enumerate(value):
        if not isinstance(row, list) or not row:
            raise SystemFormatError(f"{path}[{r}]", "expected a nonempty array of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SystemFormatError(
                f"{path}[{r}]", f"row has {len(row)} entries, expected {width}"
            )
        rows.append([_as_number(v, f"{path}[{r}][{c}]") for c, v in enumerate(row)])
    return np.array(rows, dtype=float)


def _as_symbol_list(value, path: str, allow_empty: bool) -> tuple[int, ...]:
    if not isinstance(value, list) or (not value and not allow_empty):
        raise SystemFormatError(path, "expected a nonempty array of symbols")
    out = []
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int):
            raise SystemFormatError(f"{path}[{k}]", f"expected an integer symbol, got {v!r}")
        out.append(v)
    return tuple(out)


def _expect_keys(obj: dict, path: str, required: set[str], optional: set[str] = frozenset()):
    missing = required - obj.keys()
    if missing:
        raise SystemFormatError(path, f"missing key {sorted(missing)[0]!r}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise SystemFormatError(path, f"unexpected key {sorted(unknown)[0]!r}")


def _parse_switching(value, path: str) -> SwitchingStructure:
    if not isinstance(value, dict):
        raise SystemFormatError(path, "expected an object")
    kind = value.get("type")
    if kind == "all":
        _expect_keys(value, path, {"type"})
        return AllSequences()
    if kind == "graph":
        _expect_keys(value, path, {"type", "edges"})
        edges_raw = value["edges"]
        if not isinstance(edges_raw, list) or not edges_raw:
            raise SystemFormatError(f"{path}.edges", "expected a nonempty array of pairs")
        edges = []
        for k, pair in enumerate(edges_raw):
            syms = _as_symbol_list(pair, f"{path}.edges[{k}]", allow_empty=False)
            if len(syms) != 2:
                raise SystemFormatError(f"{path}.edges[{k}]", "expected a pair [u, v]")
            edges.append((syms[0], syms[1]))
        return Graph(tuple(edges))
    if kind == "periodic":
        _expect_keys(value, path, {"type", "prefix", "period"})
        prefix = _as_symbol_list(value["prefix"], f"{path}.prefix", allow_empty=True)
        period = _as_symbol_list(value["period"], f"{path}.period", allow_empty=False)
        try:
            return EventuallyPeriodic(prefix, period)
        except SwitchingError as exc:
            raise SystemFormatError(f"{path}.period", str(exc)) from None
    raise SystemFormatError(
        f"{path}.type", f"expected one of 'all', 'graph', 'periodic', got {kind!r}"
    )


def parse_system(text: str) -> SystemDef:
    """Parse a JSON system document into a :class:`SystemDef`.

    Raises :class:`SystemFormatError` naming the offending path for schema
    violations, dimension mismatches and non-numeric entries.  The only
    numerical mutation applied is the tiny-negative clamp on transition
    matrix entries.
    """
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SystemFormatError("$", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SystemFormatError("$", "top level must be an object")
    _expect_keys(doc, "$", {"modes", "transition_matrices", "switching"}, {"p0"})

    if not isinstance(doc["modes"], list) or not doc["modes"]:
        raise SystemFormatError("modes", "expected a nonempty array of mode objects")
    modes = []
    for k, entry in enumerate(doc["modes"]):
        path = f"modes[{k}]"
        if not isinstance(entry, dict):
            raise SystemFormatError(path, "expected an object with keys A, B, C, D")
        _expect_keys(entry, path, {"A", "B", "C", "D"})
        mats = {name: _as_matrix(entry[name], f"{path}.{name}") for name in "ABCD"}
        try:
            modes.append(ModeMatrices(**mats))
        except ValueError as exc:
            raise SystemFormatError(path, str(exc)) from None

    if not isinstance(doc["transition_matrices"], list) or not doc["transition_matrices"]:
        raise SystemFormatError("transition_matrices", "expected a nonempty array")
    pis = [
        _as_matrix(mat, f"transition_matrices[{s}]")
        for s, mat in enumerate(doc["transition_matrices"])
    ]
    try:
        transitions = TransitionMatrixSet(tuple(pis))
    except ValueError as exc:
        raise SystemFormatError("transition_matrices", str(exc)) from None

    structure = _parse_switching(doc["switching"], "switching")

    p0 = None
    if "p0" in doc:
        if not isinstance(doc["p0"], list) or not doc["p0"]:
            raise SystemFormatError("p0", "expected a nonempty array of numbers")
        p0 = np.array([_as_number(v, f"p0[{k}]") for k, v in enumerate(doc["p0"])])

    try:
        return SystemDef(tuple(modes), transitions, structure, p0)
    except ValueError as exc:
        raise SystemFormatError("$", str(exc)) from None


def load_system(path) -> SystemDef:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())


def _encode_switching(structure: SwitchingStructure) -> dict:
    if isinstance(structure, AllSequences):
        return {"type": "all"}
    if isinstance(structure, Graph):
        return {"type": "graph", "edges": [[u, v] for u, v in structure.edges]}
    if isinstance(structure, EventuallyPeriodic):
        return {
            "type": "periodic",
            "prefix": list(structure.prefix),
            "period": list(structure.period),
        }
    raise TypeError(f"unknown switching structure {type(structure).__name__}")


def serialize_system(system: SystemDef, indent: int | None = 2) -> str:
    """Render a system back to its canonical JSON document.

    Floats are emitted with full round-trip precision, so
    parse -> serialize -> parse is idempotent.
    """
    doc = {
        "modes": [
            {name: getattr(md, name).tolist() for name in "ABCD"}
            for md in system.modes
        ],
        "transition_matrices": [m.tolist() for m in system.transitions.matrices],
        "switching": _encode_switching(system.switching),
    }
    if system.p0 is not None:
        doc["p0"] = system.p0.tolist()
    return json.dumps(doc, indent=indent)


# ---------------------------------------------------------------------------
# validation

def validate_system(system: SystemDef) -> ValidationReport:
    """Check stochasticity, the switching structure, and the occupancy
    positivity needed by the contractiveness tests.

    ``positivity_hypothesis`` is true iff every column of every transition
    matrix reachable under the switching structure is nonzero and the
    initial distribution (when given) is entrywise positive; this is
    exactly the condition for every mode to carry positive probability at
    every time.  Never raises: problems are returned as findings.
    """
    findings: list[Finding] = []
    trans = system.transitions

    for s in range(1, trans.J + 1):
        mat = trans.pi(s)
        for i, row in enumerate(mat, start=1):
            rs = float(row.sum())
            if abs(rs - 1.0) > ROW_SUM_TOL:
                findings.append(
                    Finding(
                        "error",
                        "ROW_SUM",
                        f"transition matrix {s} row {i}: sum {rs:.12g} != 1",
                    )
                )
        if np.any(mat < 0):
            findings.append(
                Finding("error", "NEGATIVE_ENTRY", f"transition matrix {s} has a negative entry")
            )

    if system.p0 is not None:
        if np.any(system.p0 < 0):
            findings.append(Finding("error", "P0_NEGATIVE", "p0 has a negative entry"))
        total = float(system.p0.sum())
        if abs(total - 1.0) > ROW_SUM_TOL:
            findings.append(
                Finding("error", "P0_SUM", f"p0 sums to {total:.12g}, expected 1")
            )

    reachable: frozenset = frozenset()
    try:
        reachable = enumerate_words(system.switching, 1, system.J)
    except SwitchingError as exc:
        findings.append(Finding("error", "SWITCHING_DEAD", str(exc)))

    positive_columns = True
    for (s,) in sorted(reachable):
        mat = trans.pi(s)
        for j in range(system.N):
            if not np.any(mat[:, j] > 0):
                positive_columns = False
                findings.append(
                    Finding(
                        "warning",
                        "ZERO_COLUMN",
                        f"transition matrix {s} column {j + 1} is zero: "
                        f"mode {j + 1} is unreachable after one step, so the "
                        "occupancy positivity needed for contractiveness tests fails",
                    )
                )

    if system.p0 is None:
        findings.append(
            Finding(
                "info",
                "P0_ABSENT",
                "unknown initial distribution: assuming uniform (positive) p0",
            )
        )
        p0_positive = True
    else:
        p0_positive = bool(np.all(system.p0 > 0))
        if not p0_positive:
            findings.append(
                Finding(
                    "warning",
                    "P0_NOT_POSITIVE",
                    "initial distribution has a zero entry: occupancy positivity fails",
                )
            )

    ok = not any(f.severity == "error" for f in findings)
    positivity = ok and positive_columns and p0_positive and bool(reachable)
    return ValidationReport(ok=ok, findings=tuple(findings), positivity_hypothesis=positivity)
