"""Per-mode matrix operators underlying the certification inequalities.

All operators act on a single mode's matrices together with a symmetric
matrix argument.  Outputs are symmetrized to suppress floating-point
asymmetry; linear systems in the disturbance-margin matrix are solved via
a positive-definite Cholesky factorization, never an explicit inverse.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import SystemDef, TransitionMatrixSet

PD_TOL = 1e-10
SYM_TOL = 1e-12


class NotContractiveAtHorizon(RuntimeError):
    """The disturbance-margin matrix failed to be positive definite.

    Signals that the system cannot be strictly contractive along the
    window being processed.  ``step`` is filled by the backward recursion
    when the failure occurs mid-run.
    """

    def __init__(self, mode: int, min_eigenvalue: float, step: int | None = None):
        self.mode = mode
        self.min_eigenvalue = min_eigenvalue
        self.step = step
        at = f" at step {step}" if step is not None else ""
        super().__init__(
            f"disturbance margin not positive definite for mode {mode}{at}: "
            f"min eigenvalue {min_eigenvalue:.6g}"
        )


def symmetrize(mat: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Average a nearly-symmetric matrix with its transpose.

    With ``tol`` given, asymmetry beyond it is an error (used on external
    inputs; internal operator outputs are averaged unconditionally).
    """
    mat = np.asarray(mat, dtype=float)
    if tol is not None:
        skew = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
        if skew > tol:
            raise ValueError(f"matrix asymmetry {skew:.3g} exceeds tolerance {tol:.3g}")
    return 0.5 * (mat + mat.T)


def blend(
    i: int, s: int, values: Mapping[int, np.ndarray], transitions: TransitionMatrixSet
) -> np.ndarray:
    """Probability-weighted mixture sum_j pi_ij(s) * values[j].

    ``values`` maps every 1-based mode index to a symmetric matrix.
    """
    row = transitions.pi(s)[i - 1]
    out = None
    for j in range(1, transitions.N + 1):
        try:
            term = row[j - 1] * values[j]
        except KeyError:
            raise ValueError(f"blend: no matrix supplied for mode {j}") from None
        out = term if out is None else out + term
    return symmetrize(out)


def op_L(i: int, X: np.ndarray, system: SystemDef) -> np.ndarray:
    """State-cost update A' X A + C' C."""
    md = system.mode(i)
    return symmetrize(md.A.T @ X @ md.A + md.C.T @ md.C)


def op_R(i: int, X: np.ndarray, system: SystemDef) -> np.ndarray:
    """State-to-disturbance coupling B' X A + D' C."""
    md = system.mode(i)
    return md.B.T @ X @ md.A + md.D.T @ md.C


def op_W(i: int, X: np.ndarray, system: SystemDef) -> np.ndarray:
    """Disturbance margin I - B' X B - D' D."""
    md = system.mode(i)
    return symmetrize(np.eye(system.m) - md.B.T @ X @ md.B - md.D.T @ md.D)


def op_M(i: int, X: np.ndarray, system: SystemDef) -> np.ndarray:
    """Supply-rate block [[L, R'], [R, -W]] of size (n+m)."""
    L = op_L(i, X, system)
    R = op_R(i, X, system)
    W = op_W(i, X, system)
    return symmetrize(np.block([[L, R.T], [R, -W]]))


def _margin_solve(i, X, system, pd_tol):
    """(R, W^-1 R, min eig of W); raises if W is not safely positive definite."""
    W = op_W(i, X, system)
    w_min = float(np.linalg.eigvalsh(W)[0])
    if w_min <= pd_tol:
        raise NotContractiveAtHorizon(i, w_min)
    R = op_R(i, X, system)
    w_inv_r = cho_solve(cho_factor(W), R)
    return R, w_inv_r, w_min


def op_S(i: int, X: np.ndarray, system: SystemDef, pd_tol: float = PD_TOL) -> np.ndarray:
    """Closed one-step update L + R' W^-1 R (worst-case disturbance absorbed)."""
    R, w_inv_r, _ = _margin_solve(i, X, system, pd_tol)
    return symmetrize(op_L(i, X, system) + R.T @ w_inv_r)


def op_F(i: int, X: np.ndarray, system: SystemDef, pd_tol: float = PD_TOL) -> np.ndarray:
    """Closed-loop state matrix A + B W^-1 R under the worst-case disturbance."""
    md = system.mode(i)
    _, w_inv_r, _ = _margin_solve(i, X, system, pd_tol)
    return md.A + md.B @ w_inv_r


def op_B(i: int, X: np.ndarray, Y: np.ndarray, system: SystemDef) -> np.ndarray:
    """Dissipation block of size (n+m):

        [A B; C D]' [X 0; 0 I] [A B; C D] - [Y 0; 0 I]

    Negative definiteness of this block is the storage-function decrement
    the certificates assert.
    """
    md = system.mode(i)
    stacked = np.block([[md.A, md.B], [md.C, md.D]])
    mid = np.zeros((system.n + system.p, system.n + system.p))
    mid[: system.n, : system.n] = X
    mid[system.n :, system.n :] = np.eye(system.p)
    shift = np.zeros((system.n + system.m, system.n + system.m))
    shift[: system.n, : system.n] = Y
    shift[system.n :, system.n :] = np.eye(system.m)
    return symmetrize(stacked.T @ mid @ stacked - shift)
