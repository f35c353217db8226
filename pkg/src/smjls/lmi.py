"""Path-dependent LMI families: assembly, feasibility, certificates, gain.

One symmetric matrix variable per (mode, window) pair, one affine block
per (mode, window-extension) pair.  Strict negativity is operationalized
as margin maximization: all variables are bounded below by the identity
(losslessly, by homogeneity, for the stability family) and the largest
feasible t with every block below -t*I is sought.  The margin is capped
at 1, since the stability family is homogeneous in the variables and
would otherwise make the maximization unbounded whenever it is strictly
feasible; the cap leaves the feasibility decision unchanged.

Certificates carry the solved matrices and margins recomputed from them
by direct eigenvalue extraction; nothing is trusted from the solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import operators
from .backend import BackendResult, SdpBackend, default_backend
from .model import SystemDef, validate_system
from .switching import Word, enumerate_words, split_word

MARGIN_THRESHOLD = 1e-7
X_LOWER_DEFAULT = 1.0
X_LOWER_RETRY = 1e-6
MARGIN_CAP = 1.0


class PositivityError(RuntimeError):
    """The occupancy-positivity hypothesis required by the contractiveness
    family does not hold for this system."""


@dataclass(frozen=True)
class LmiProblem:
    """A fully indexed feasibility problem, solver-agnostic.

    ``var_index`` lists the (mode, window) pairs carrying a matrix
    variable; ``block_index`` the (mode, extension) pairs carrying an
    affine block constraint.  The realized block is:

      stability:  A(i)' Xtil A(i) - X(i, prefix)            (n x n)
      brl:        dissipation block of Xtil vs X(i, prefix) (n+m x n+m)

    with Xtil the head-symbol probability blend of the suffix variables.
    For the gain-scaled family C and D are divided by gamma.
    """

    kind: str  # "stability" | "brl"
    M: int
    system: SystemDef
    var_index: tuple[tuple[int, Word], ...]
    block_index: tuple[tuple[int, Word], ...]
    gamma: float | None = None
    margin_cap: float = MARGIN_CAP

    def __post_init__(self):
        if self.kind not in ("stability", "brl"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        words_m = enumerate_words(self.system.switching, self.M, self.system.J)
        words_m1 = enumerate_words(self.system.switching, self.M + 1, self.system.J)
        if len(self.var_index) != self.system.N * len(words_m):
            raise ValueError("variable count does not match modes x windows")
        if len(self.block_index) != self.system.N * len(words_m1):
            raise ValueError("block count does not match modes x extensions")

    @property
    def block_size(self) -> int:
        return self.system.n if self.kind == "stability" else self.system.n + self.system.m


def _indices(system: SystemDef, M: int) -> tuple[tuple, tuple]:
    words = sorted(enumerate_words(system.switching, M, system.J))
    exts = sorted(enumerate_words(system.switching, M + 1, system.J))
    var_index = tuple((i, w) for i in range(1, system.N + 1) for w in words)
    block_index = tuple((i, w) for i in range(1, system.N + 1) for w in exts)
    return var_index, block_index


def build_stability_lmi(system: SystemDef, M: int) -> LmiProblem:
    """Assemble the stability family at window length M."""
    var_index, block_index = _indices(system, M)
    return LmiProblem("stability", M, system, var_index, block_index)


def build_brl_lmi(system: SystemDef, M: int, gamma: float = 1.0) -> LmiProblem:
    """Assemble the contractiveness family at window length M and gain gamma.

    Requires the occupancy-positivity hypothesis (positive initial
    distribution and no reachable transition matrix with a zero column);
    refuses otherwise, since without it the family is not a valid test.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    report = validate_system(system)
    if not report.positivity_hypothesis:
        detail = "; ".join(
            f.message for f in report.findings if f.severity in ("error", "warning")
        )
        raise PositivityError(
            "occupancy positivity fails, so the contractiveness family does not "
            f"apply: {detail or 'see validation report'}"
        )
    var_index, block_index = _indices(system, M)
    return LmiProblem("brl", M, system, var_index, block_index, gamma=gamma)


# ---------------------------------------------------------------------------
# numeric block evaluation (shared by verification and margin recomputation)

def evaluate_blocks(
    system: SystemDef,
    kind: str,
    M: int,
    X: dict[tuple[int, Word], np.ndarray],
    gamma: float | None = None,
) -> Iterator[tuple[tuple[int, Word], np.ndarray]]:
    """Yield every ((mode, extension), block matrix) for a given assignment.

    Plain dense linear algebra through the operator layer; independent of
    any solver expression graph.
    """
    if kind == "brl" and gamma is not None and gamma != 1.0:
        system = _scaled_system(system, gamma)
    for w in sorted(enumerate_words(system.switching, M + 1, system.J)):
        prefix, suffix, head = split_word(w)
        for i in range(1, system.N + 1):
            xtil = operators.blend(
                i, head, {j: X[(j, suffix)] for j in range(1, system.N + 1)},
                system.transitions,
            )
            md = system.mode(i)
            if kind == "stability":
                block = operators.symmetrize(md.A.T @ xtil @ md.A) - X[(i, prefix)]
            else:
                block = operators.op_B(i, xtil, X[(i, prefix)], system)
            yield (i, w), block


def _scaled_system(system: SystemDef, gamma: float) -> SystemDef:
    from .model import ModeMatrices

    modes = tuple(
        ModeMatrices(md.A, md.B, md.C / gamma, md.D / gamma) for md in system.modes
    )
    return SystemDef(modes, system.transitions, system.switching, system.p0)


def _recompute_margins(system, kind, M, X, gamma):
    eta = min(float(np.linalg.eigvalsh(x)[0]) for x in X.values())
    rho = max(float(np.linalg.eigvalsh(x)[-1]) for x in X.values())
    worst = -np.inf
    worst_at = None
    for key, block in evaluate_blocks(system, kind, M, X, gamma):
        top = float(np.linalg.eigvalsh(block)[-1])
        if top > worst:
            worst, worst_at = top, key
    return eta, rho, -worst, worst_at


# ---------------------------------------------------------------------------
# certificates

@dataclass(frozen=True, eq=False)
class Certificate:
    """A feasible assignment with its recomputed margins.

    eta / rho bound the variable eigenvalues below / above; nu is the
    recomputed block-negativity margin.  For stability certificates the
    induced decay constants are c = rho/eta and lambda = 1 - nu/rho.
    """

    kind: str
    M: int
    margin: float  # feasibility threshold this certificate was held to
    X: dict[tuple[int, Word], np.ndarray]
    eta: float
    rho: float
    nu: float
    gamma: float | None = None
    solver: dict = field(default_factory=dict)

    @property
    def c(self) -> float:
        return self.rho / self.eta

    @property
    def lam(self) -> float:
        return 1.0 - self.nu / self.rho


@dataclass(frozen=True)
class Feasible:
    certificate: Certificate


@dataclass(frozen=True)
class Infeasible:
    best_margin: float | None
    status: str


@dataclass(frozen=True)
class SolverFailure:
    reason: str


FeasibilityOutcome = Feasible | Infeasible | SolverFailure


def solve_feasibility(
    problem: LmiProblem,
    margin_threshold: float = MARGIN_THRESHOLD,
    backend: SdpBackend | None = None,
) -> FeasibilityOutcome:
    """Decide the family with a margin: feasible iff the solver reports an
    optimum and both its margin and the recomputed one clear the threshold.

    The contractiveness family is not homogeneous in the variables, so the
    identity lower bound can be conservative there; on a miss it is retried
    once with a 1e-6 lower bound.
    """
    backend = backend or default_backend()

    def attempt(x_lower: float) -> tuple[BackendResult, Certificate | None]:
        res = backend.solve(problem, x_lower)
        if not res.optimal or res.margin is None:
            return res, None
        eta, rho, nu, _ = _recompute_margins(
            problem.system, problem.kind, problem.M, res.values, problem.gamma
        )
        cert = Certificate(
            kind=problem.kind,
            M=problem.M,
            margin=margin_threshold,
            X=res.values,
            eta=eta,
            rho=rho,
            nu=nu,
            gamma=problem.gamma,
            solver={
                "backend": backend.name,
                "status": res.status,
                "solver_margin": res.margin,
                "x_lower_bound": x_lower,
                "margin_cap": problem.margin_cap,
            },
        )
        return res, cert

    res, cert = attempt(X_LOWER_DEFAULT)
    decided = (
        cert is not None
        and res.margin >= margin_threshold
        and cert.nu >= margin_threshold
    )
    if decided:
        return Feasible(cert)
    if res.status.startswith("failure"):
        return SolverFailure(res.status)

    best = res.margin if res.optimal else None
    status = res.status
    if problem.kind == "brl":
        res2, cert2 = attempt(X_LOWER_RETRY)
        if (
            cert2 is not None
            and res2.margin >= margin_threshold
            and cert2.nu >= margin_threshold
        ):
            return Feasible(cert2)
        if res2.status.startswith("failure"):
            return SolverFailure(res2.status)
        if res2.optimal and (best is None or res2.margin > best):
            best, status = res2.margin, res2.status

    return Infeasible(best_margin=best, status=status)


# ---------------------------------------------------------------------------
# window-length search

@dataclass(frozen=True)
class MRecord:
    M: int
    status: str
    best_margin: float | None


@dataclass(frozen=True)
class AllInfeasible:
    """Every window length up to max_M failed.

    ``conclusive`` is set only when the switching structure admits a single
    constant sequence, where the zero-length family is already necessary
    and sufficient; otherwise the result means "undecided up to max_M".
    """

    kind: str
    max_M: int
    records: tuple[MRecord, ...]
    conclusive: bool
    detail: str


def _constant_singleton(system: SystemDef) -> bool:
    words = enumerate_words(system.switching, 2, system.J)
    if len(words) != 1:
        return False
    (w,) = words
    return w[0] == w[1]


def certify(
    system: SystemDef,
    kind: str,
    max_M: int,
    margin: float = MARGIN_THRESHOLD,
    backend: SdpBackend | None = None,
) -> tuple[int, Certificate] | AllInfeasible:
    """Search window lengths M = 0, 1, ..., max_M in order; return the first
    feasible length with its certificate, else the per-length record.
    """
    if max_M < 0:
        raise ValueError(f"max_M must be nonnegative, got {max_M}")
    if kind not in ("stability", "brl"):
        raise ValueError(f"unknown certificate kind {kind!r}")
    build = build_stability_lmi if kind == "stability" else build_brl_lmi
    records = []
    for M in range(max_M + 1):
        outcome = solve_feasibility(build(system, M), margin, backend)
        if isinstance(outcome, Feasible):
            return M, outcome.certificate
        if isinstance(outcome, SolverFailure):
            raise RuntimeError(f"solver failure at window length {M}: {outcome.reason}")
        records.append(MRecord(M, outcome.status, outcome.best_margin))

    conclusive = _constant_singleton(system)
    if conclusive:
        detail = (
            "constant switching sequence: the window-free family is necessary "
            "and sufficient, so infeasibility is conclusive"
        )
    else:
        detail = f"undecided up to max window length {max_M}"
    return AllInfeasible(kind, max_M, tuple(records), conclusive, detail)


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    max_block_eig: float
    worst_block: tuple[int, Word]
    min_x_eig: float
    eta: float
    rho: float
    nu: float
    c: float | None
    lam: float | None
    threshold: float


def verify_certificate(system: SystemDef, cert: Certificate) -> VerificationReport:
    """Recompute every block of a certificate with plain linear algebra.

    Passes iff the worst block eigenvalue is at most -margin/2 and every
    stored matrix is positive definite.  Raises on index mismatch between
    the certificate and the system's window set.
    """
    words = enumerate_words(system.switching, cert.M, system.J)
    expected = {(i, w) for i in range(1, system.N + 1) for w in words}
    got = set(cert.X.keys())
    if got != expected:
        missing = sorted(expected - got)[:3]
        extra = sorted(got - expected)[:3]
        raise ValueError(
            f"certificate index mismatch: missing {missing}, extra {extra}"
        )
    X = {key: operators.symmetrize(val, tol=1e-9) for key, val in cert.X.items()}
    eta, rho, nu, worst_at = _recompute_margins(system, cert.kind, cert.M, X, cert.gamma)
    threshold = -cert.margin / 2.0
    stability = cert.kind == "stability"
    return VerificationReport(
        ok=(-nu <= threshold and eta > 0),
        max_block_eig=-nu,
        worst_block=worst_at,
        min_x_eig=eta,
        eta=eta,
        rho=rho,
        nu=nu,
        c=(rho / eta) if stability else None,
        lam=(1.0 - nu / rho) if stability else None,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# gain search

@dataclass(frozen=True)
class GainResult:
    """Certified upper bound on the zero-state root-mean-square gain.

    ``gamma`` is the best certified bound: a family feasible at gain g
    with block margin nu certifies gain g*sqrt(1-nu) by the telescoping
    dissipation argument, which sharpens the raw bisection endpoint
    ``gamma_feasible`` (the smallest gain actually solved feasible).
    """

    gamma: float
    gamma_feasible: float
    certificate: Certificate
    probes: tuple[tuple[float, bool], ...]


class GainBoundExceeded(RuntimeError):
    pass


def gain_bisection(
    system: SystemDef,
    M: int,
    tol: float = 1e-3,
    gamma_max: float = 1e3,
    margin: float = MARGIN_THRESHOLD,
    backend: SdpBackend | None = None,
) -> GainResult:
    """Bisect log(gamma) for the smallest gain the window-M family certifies.

    The search brackets the feasibility boundary to within ``tol`` in log
    gain and returns the best certified bound over all feasible probes
    (see :class:`GainResult`).  Assumes the system is certifiably stable
    at this window length; otherwise no gamma is feasible and the search
    exhausts gamma_max.
    """
    probes: list[tuple[float, bool]] = []
    certificates: dict[float, Certificate] = {}

    def feasible(gamma: float) -> bool:
        outcome = solve_feasibility(build_brl_lmi(system, M, gamma), margin, backend)
        # A probe the solver cannot settle is treated as infeasible: that
        # only pushes the certified endpoint upward, and the returned gamma
        # is always backed by an actual certificate.
        ok = isinstance(outcome, Feasible)
        probes.append((gamma, ok))
        if ok:
            certificates[gamma] = outcome.certificate
        return ok

    sigma = max(
        float(np.linalg.svd(system.mode(i).D, compute_uv=False)[0]) if system.mode(i).D.size else 0.0
        for i in range(1, system.N + 1)
    )
    lo = max(sigma, 1e-8)

    hi = 1.0 if 1.0 > lo * 1.0000001 else lo * 10.0
    hi = min(hi, gamma_max)
    while not feasible(hi):
        hi *= 10.0
        if hi > gamma_max:
            if gamma_max > probes[-1][0] and feasible(gamma_max):
                hi = gamma_max
                break
            raise GainBoundExceeded(
                f"gain exceeds gamma_max: no feasible gain found at or below {gamma_max}"
            )

    log_lo, log_hi = np.log(lo), np.log(hi)
    while log_hi - log_lo > tol:
        mid = float(np.exp(0.5 * (log_lo + log_hi)))
        if feasible(mid):
            log_hi = np.log(mid)
        else:
            log_lo = np.log(mid)
    endpoint = float(np.exp(log_hi))

    def certified_bound(gamma: float) -> float:
        nu = min(certificates[gamma].nu, 1.0)
        return gamma * float(np.sqrt(1.0 - nu))

    best = min(certificates, key=certified_bound)
    return GainResult(
        gamma=certified_bound(best),
        gamma_feasible=endpoint,
        certificate=certificates[best],
        probes=tuple(probes),
    )


# ---------------------------------------------------------------------------
# certificate files

def certificate_to_json(cert: Certificate, indent: int | None = 2) -> str:
    doc = {
        "kind": cert.kind,
        "M": cert.M,
        "margin": cert.margin,
        "eta": cert.eta,
        "rho": cert.rho,
        "nu": cert.nu,
        "c": cert.c,
        "lambda": cert.lam,
        "X": [
            {"mode": i, "word": list(w), "matrix": cert.X[(i, w)].tolist()}
            for (i, w) in sorted(cert.X.keys())
        ],
        "solver": cert.solver,
    }
    if cert.gamma is not None:
        doc["gamma"] = cert.gamma
    return json.dumps(doc, indent=indent)


def certificate_from_json(text: str) -> Certificate:
    doc = json.loads(text)
    X = {
        (int(entry["mode"]), tuple(int(s) for s in entry["word"])): np.array(
            entry["matrix"], dtype=float
        )
        for entry in doc["X"]
    }
    return Certificate(
        kind=doc["kind"],
        M=int(doc["M"]),
        margin=float(doc["margin"]),
        X=X,
        eta=float(doc["eta"]),
        rho=float(doc["rho"]),
        nu=float(doc["nu"]),
        gamma=float(doc["gamma"]) if "gamma" in doc else None,
        solver=doc.get("solver", {}),
    )


def save_certificate(cert: Certificate, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(certificate_to_json(cert))


def load_certificate(path) -> Certificate:
    with open(path, "r", encoding="utf-8") as fh:
        return certificate_from_json(fh.read())
