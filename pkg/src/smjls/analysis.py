"""Exact second-moment propagation, simulation, and decay/gain estimation.

These are the stochastic-semantics oracles that cross-validate LMI
certificates: conditional second moments are propagated exactly (no
sampling) under a fixed switching window, a brute-force path enumeration
validates the propagation, and Monte Carlo simulation provides end-to-end
gain and decay estimates with reproducible seeding.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from .lmi import Certificate
from .model import SystemDef
from .switching import Word, is_admissible, random_window

MAX_EXACT_STEPS = 10_000
MAX_BRUTE_FORCE_STEPS = 8


@dataclass(frozen=True)
class SecondMomentTable:
    """Conditional second moments of the state transition matrix.

    ``table[i-1, k]`` is the exact expectation of the transition matrix
    Gram product over steps 0..k, conditioned on starting in mode i, for
    one fixed switching window.
    """

    window: Word
    table: np.ndarray  # (N, K+1, n, n)

    def H(self, i: int, k: int) -> np.ndarray:
        return self.table[i - 1, k]

    @property
    def K(self) -> int:
        return self.table.shape[1] - 1

    def to_csv(self) -> str:
        n = self.table.shape[-1]
        cols = ["k", "mode"] + [f"h_{a + 1}{b + 1}" for a in range(n) for b in range(n)]
        lines = [", ".join(cols)]
        for k in range(self.K + 1):
            for i in range(self.table.shape[0]):
                cells = [str(k), str(i + 1)]
                cells += [repr(float(v)) for v in self.table[i, k].reshape(-1)]
                lines.append(", ".join(cells))
        return "\n".join(lines) + "\n"


def exact_second_moment(system: SystemDef, window: Word) -> SecondMomentTable:
    """Propagate conditional second moments exactly along a window.

    The per-step update is linear on the stacked mode-indexed matrices, so
    the whole table is obtained by accumulating the step operators; the
    result is exact up to round-off, with no sampling.
    """
    window = tuple(int(s) for s in window)
    K = len(window)
    if K > MAX_EXACT_STEPS:
        raise ValueError(f"window of length {K} exceeds the dense-recursion guard")
    if not is_admissible(system.switching, window, system.J):
        raise ValueError(f"window {window} is not admissible under the switching structure")

    N, n = system.N, system.n
    dim = n * n
    kron_a = [np.kron(system.mode(i).A.T, system.mode(i).A.T) for i in range(1, N + 1)]

    h0 = np.tile(np.eye(n).reshape(dim), N)
    table = np.zeros((N, K + 1, n, n))
    table[:, 0] = np.eye(n)

    acc = np.eye(N * dim)
    for t, s in enumerate(window, start=1):
        pi = system.transitions.pi(s)
        step = np.zeros((N * dim, N * dim))
        for i in range(N):
            for j in range(N):
                if pi[i, j] != 0.0:
                    step[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = (
                        pi[i, j] * kron_a[i]
                    )
        acc = acc @ step
        flat = acc @ h0
        for i in range(N):
            block = flat[i * dim : (i + 1) * dim].reshape(n, n)
            table[i, t] = 0.5 * (block + block.T)
    return SecondMomentTable(window, table)


def brute_force_second_moment(system: SystemDef, window: Word, i: int, K: int) -> np.ndarray:
    """Independent oracle: enumerate every mode path of length K, weight by
    transition products, and sum the transition-matrix Gram products.

    Exponential in K; guarded at K <= 8.  Exists solely to validate
    :func:`exact_second_moment`.
    """
    if K > MAX_BRUTE_FORCE_STEPS:
        raise ValueError(f"brute force limited to K <= {MAX_BRUTE_FORCE_STEPS}, got {K}")
    window = tuple(int(s) for s in window)
    if len(window) < K:
        raise ValueError(f"window must cover K={K} steps, got length {len(window)}")
    n = system.n
    if K == 0:
        return np.eye(n)

    acc = np.zeros((n, n))

    def walk(t: int, mode: int, weight: float, phi: np.ndarray) -> None:
        nonlocal acc
        phi_next = system.mode(mode).A @ phi
        if t + 1 == K:
            acc = acc + weight * (phi_next.T @ phi_next)
            return
        row = system.transitions.pi(window[t])[mode - 1]
        for j in range(1, system.N + 1):
            if row[j - 1] != 0.0:
                walk(t + 1, j, weight * row[j - 1], phi_next)

    walk(0, i, 1.0, np.eye(n))
    return acc


def forward_state_moments(
    system: SystemDef,
    window: Word,
    K: int,
    x0_cov: np.ndarray | None = None,
    p0: np.ndarray | None = None,
) -> np.ndarray:
    """Zero-input mode-indexed state second moments, propagated forward.

    Returns Q with Q[k, i-1] the expectation of x(k)x(k)' restricted to
    mode i; the initial state is independent of the chain with covariance
    ``x0_cov`` (identity by default).
    """
    window = tuple(int(s) for s in window)
    if len(window) < K:
        raise ValueError(f"window must cover K={K} steps, got length {len(window)}")
    N, n = system.N, system.n
    cov = np.eye(n) if x0_cov is None else np.asarray(x0_cov, dtype=float)
    dist = system.initial_distribution() if p0 is None else np.asarray(p0, dtype=float)
    Q = np.zeros((K + 1, N, n, n))
    for i in range(N):
        Q[0, i] = dist[i] * cov
    for k in range(K):
        pi = system.transitions.pi(window[k])
        for j in range(N):
            total = np.zeros((n, n))
            for i in range(N):
                if pi[i, j] != 0.0:
                    A = system.mode(i + 1).A
                    total += pi[i, j] * (A @ Q[k, i] @ A.T)
            Q[k + 1, j] = 0.5 * (total + total.T)
    return Q


# ---------------------------------------------------------------------------
# simulation

@dataclass(frozen=True)
class Trajectory:
    """One sampled run of the jump system; the recursion is recomputable
    from the stored arrays, so the dynamics residual is exactly zero."""

    seed: int
    window: Word
    modes: np.ndarray  # (T+1,)
    x: np.ndarray  # (T+2, n)
    z: np.ndarray  # (T+1, p)
    w: np.ndarray  # (T+1, m)

    def residual(self, system: SystemDef) -> float:
        worst = 0.0
        for k in range(len(self.modes)):
            md = system.mode(int(self.modes[k]))
            dx = self.x[k + 1] - (md.A @ self.x[k] + md.B @ self.w[k])
            dz = self.z[k] - (md.C @ self.x[k] + md.D @ self.w[k])
            worst = max(worst, float(np.max(np.abs(dx))), float(np.max(np.abs(dz))))
        return worst

    def to_csv(self, system: SystemDef) -> str:
        buf = io.StringIO()
        cols = (
            ["k", "mode"]
            + [f"x_{a + 1}" for a in range(system.n)]
            + [f"z_{a + 1}" for a in range(system.p)]
            + [f"w_{a + 1}" for a in range(system.m)]
        )
        buf.write(", ".join(cols) + "\n")
        for k in range(len(self.modes)):
            cells = [str(k), str(int(self.modes[k]))]
            cells += [repr(float(v)) for v in self.x[k]]
            cells += [repr(float(v)) for v in self.z[k]]
            cells += [repr(float(v)) for v in self.w[k]]
            buf.write(", ".join(cells) + "\n")
        return buf.getvalue()


def _fresh_seed() -> int:
    return int.from_bytes(os.urandom(8), "big")


def _pick(cumulative: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cumulative, u, side="right"))
    return min(idx, len(cumulative) - 1) + 1


def simulate(
    system: SystemDef,
    window: Word | None = None,
    *,
    horizon: int,
    disturbance="zero",
    sigma: float = 1.0,
    x0=None,
    seed: int | None = None,
) -> Trajectory:
    """Sample one trajectory over ``horizon`` + 1 steps.

    ``window`` fixes the transition choices; when omitted an admissible
    window is drawn first.  ``disturbance`` is "zero", "white" (iid normal
    with standard deviation ``sigma``) or an explicit (horizon+1, m)
    array.  ``x0`` is a vector, None for the origin, or a tuple
    ("indicator", mode, vector) placing ``vector`` only when the chain
    starts in ``mode``.  Runs are bit-reproducible given the seed; draw
    order is: window (if needed), mode uniforms, disturbance normals.
    """
    if seed is None:
        seed = _fresh_seed()
    rng = np.random.default_rng(seed)
    if window is None:
        window = random_window(system.switching, system.J, horizon, rng)
    else:
        window = tuple(int(s) for s in window)
        if len(window) < horizon:
            raise ValueError(f"window must cover {horizon} steps, got {len(window)}")
        if not is_admissible(system.switching, window, system.J):
            raise ValueError("window is not admissible under the switching structure")

    T, n, m, p = horizon, system.n, system.m, system.p
    u = rng.random(T + 1)
    if isinstance(disturbance, str):
        if disturbance == "zero":
            w = np.zeros((T + 1, m))
        elif disturbance == "white":
            w = sigma * rng.standard_normal((T + 1, m))
        else:
            raise ValueError(f"unknown disturbance kind {disturbance!r}")
    else:
        w = np.asarray(disturbance, dtype=float)
        if w.shape != (T + 1, m):
            raise ValueError(f"disturbance array must have shape {(T + 1, m)}")

    modes = np.zeros(T + 1, dtype=int)
    modes[0] = _pick(np.cumsum(system.initial_distribution()), u[0])
    for k in range(1, T + 1):
        row = system.transitions.pi(window[k - 1])[modes[k - 1] - 1]
        modes[k] = _pick(np.cumsum(row), u[k])

    x = np.zeros((T + 2, n))
    if x0 is None:
        pass
    elif isinstance(x0, tuple) and len(x0) == 3 and x0[0] == "indicator":
        if modes[0] == int(x0[1]):
            x[0] = np.asarray(x0[2], dtype=float)
    else:
        x[0] = np.asarray(x0, dtype=float)

    z = np.zeros((T + 1, p))
    for k in range(T + 1):
        md = system.mode(int(modes[k]))
        x[k + 1] = md.A @ x[k] + md.B @ w[k]
        z[k] = md.C @ x[k] + md.D @ w[k]
    return Trajectory(seed=seed, window=tuple(window[:T]), modes=modes, x=x, z=z, w=w)


# ---------------------------------------------------------------------------
# Monte Carlo estimators

@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of the sampled mean-square state norm against time."""

    c_hat: float
    lambda_hat: float
    slope_stderr: float
    band: tuple[float, float]
    degenerate: bool
    means: np.ndarray
    mean_stderr: np.ndarray


def estimate_decay(
    system: SystemDef,
    window: Word,
    *,
    trials: int,
    horizon: int,
    seed: int | None = None,
) -> DecayFit:
    """Least-squares fit of log mean-square zero-input state norm vs step.

    Initial states are independent unit-norm draws; the chain restarts per
    trial.  All-zero propagation is reported as decay rate 0 rather than a
    fit failure.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials for a fit, got {trials}")
    if seed is None:
        seed = _fresh_seed()
    window = tuple(int(s) for s in window)
    if len(window) < horizon:
        raise ValueError(f"window must cover {horizon} steps, got {len(window)}")

    children = np.random.SeedSequence(seed).spawn(trials)
    sq = np.zeros((trials, horizon + 1))
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        u = rng.random(horizon + 1)
        x0 = rng.standard_normal(system.n)
        x0 /= np.linalg.norm(x0)
        mode = _pick(np.cumsum(system.initial_distribution()), u[0])
        x = x0
        sq[t, 0] = float(x @ x)
        for k in range(1, horizon + 1):
            x = system.mode(mode).A @ x
            sq[t, k] = float(x @ x)
            if k < horizon:
                row = system.transitions.pi(window[k - 1])[mode - 1]
                mode = _pick(np.cumsum(row), u[k])

    means = sq.mean(axis=0)
    stderrs = sq.std(axis=0, ddof=1) / np.sqrt(trials)
    if np.any(means <= 0.0):
        return DecayFit(
            c_hat=float(means[0]), lambda_hat=0.0, slope_stderr=0.0,
            band=(0.0, 0.0), degenerate=True, means=means, mean_stderr=stderrs,
        )
    ks = np.arange(horizon + 1)
    fit = stats.linregress(ks, np.log(means))
    lam = float(np.exp(fit.slope))
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    band = (lam * float(np.exp(-1.96 * stderr)), lam * float(np.exp(1.96 * stderr)))
    return DecayFit(
        c_hat=float(np.exp(fit.intercept)), lambda_hat=lam,
        slope_stderr=stderr, band=band, degenerate=False, means=means,
        mean_stderr=stderrs,
    )


@dataclass(frozen=True)
class GainEstimate:
    """Sample mean of per-trial output/input energy ratios under white noise."""

    mean_square_ratio: float
    std_error: float
    trials: int
    horizon: int
    window: Word
    seed: int
    ratios: np.ndarray


def estimate_gain(
    system: SystemDef,
    window: Word | None = None,
    *,
    trials: int,
    horizon: int,
    sigma: float = 1.0,
    seed: int | None = None,
    chunk: int = 2048,
) -> GainEstimate:
    """Monte Carlo squared-gain estimate from zero initial state.

    Each trial draws its own generator from the spawned seed sequence with
    the same draw order as :func:`simulate` (mode uniforms, then
    disturbance normals), so individual trials are reproducible.  Stepping
    is vectorized across trials in chunks.
    """
    if seed is None:
        seed = _fresh_seed()
    # children[t] seeds trial t; the extra final spawn draws the window
    spawned = np.random.SeedSequence(seed).spawn(trials + 1)
    if window is None:
        window_rng = np.random.default_rng(spawned[-1])
        window = random_window(system.switching, system.J, horizon, window_rng)
    else:
        window = tuple(int(s) for s in window)
        if len(window) < horizon:
            raise ValueError(f"window must cover {horizon} steps, got {len(window)}")

    T, n, m, p = horizon, system.n, system.m, system.p
    modes_list = range(1, system.N + 1)
    cum_rows = {
        s: np.cumsum(system.transitions.pi(s), axis=1) for s in range(1, system.J + 1)
    }
    cum_p0 = np.cumsum(system.initial_distribution())

    ratios = np.zeros(trials)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        size = stop - start
        u = np.zeros((size, T + 1))
        w = np.zeros((size, T + 1, m))
        for t in range(size):
            rng = np.random.default_rng(spawned[start + t])
            u[t] = rng.random(T + 1)
            w[t] = sigma * rng.standard_normal((T + 1, m))

        theta = np.minimum(np.searchsorted(cum_p0, u[:, 0], side="right"), system.N - 1) + 1
        x = np.zeros((size, n))
        z_energy = np.zeros(size)
        w_energy = np.zeros(size)
        for k in range(T + 1):
            z_step = np.zeros((size, p))
            x_next = np.zeros((size, n))
            for i in modes_list:
                mask = theta == i
                if not np.any(mask):
                    continue
                md = system.mode(i)
                x_next[mask] = x[mask] @ md.A.T + w[mask, k] @ md.B.T
                z_step[mask] = x[mask] @ md.C.T + w[mask, k] @ md.D.T
            z_energy += np.einsum("ij,ij->i", z_step, z_step)
            w_energy += np.einsum("ij,ij->i", w[:, k], w[:, k])
            x = x_next
            if k < T:
                cum = cum_rows[window[k]]
                nxt = np.zeros(size, dtype=int)
                for i in modes_list:
                    mask = theta == i
                    if np.any(mask):
                        nxt[mask] = (
                            np.minimum(
                                np.searchsorted(cum[i - 1], u[mask, k + 1], side="right"),
                                system.N - 1,
                            )
                            + 1
                        )
                theta = nxt
        ratios[start:stop] = z_energy / w_energy

    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / np.sqrt(trials))
    return GainEstimate(
        mean_square_ratio=mean, std_error=se, trials=trials, horizon=horizon,
        window=tuple(window[:T]), seed=seed, ratios=ratios,
    )


# ---------------------------------------------------------------------------
# certificate-derived constants and test windows

def decay_constants(cert: Certificate) -> tuple[float, float]:
    """Decay envelope (c, lambda) implied by a stability certificate:
    c = rho/eta and lambda = 1 - nu/rho."""
    if cert.kind != "stability":
        raise ValueError("decay constants require a stability certificate")
    c = cert.rho / cert.eta
    lam = 1.0 - cert.nu / cert.rho
    if lam >= 1.0 - 1e-12:
        import warnings

        warnings.warn(
            f"weak certificate: decay rate {lam} offers no effective contraction",
            stacklevel=2,
        )
    return c, lam


def adversarial_windows(
    system: SystemDef,
    length: int,
    n_random: int = 20,
    max_period: int = 3,
    seed: int = 20240,
) -> list[Word]:
    """The declared test surface over switching behaviour: every admissible
    window generated by repeating a pattern of period <= max_period, plus
    seeded random admissible walks."""
    out: list[Word] = []
    seen: set[Word] = set()
    for L in range(1, max_period + 1):
        for pattern in product(range(1, system.J + 1), repeat=L):
            reps = -(-length // L)
            w = (pattern * reps)[:length]
            if w not in seen and is_admissible(system.switching, w, system.J):
                seen.add(w)
                out.append(w)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        w = random_window(system.switching, system.J, length, rng)
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out
