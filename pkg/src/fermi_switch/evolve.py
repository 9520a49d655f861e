"""Time evolution ``psi(t) = exp(-iHt) psi0`` for sparse Hermitian ``H``.

The production path is a short-iterative Lanczos propagator: each internal step
builds a Krylov basis of size ``krylov_dim`` around the current state, and the
step length is then chosen (without further matrix-vector products) as the
largest one whose a-posteriori error estimate stays below ``tolerance``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, ConvergenceError, ResourceLimitError
from .model import SparseHamiltonian

DENSE_ORACLE_MAX_DIMENSION = 4096


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.01
    tolerance: float = 1e-10
    krylov_dim: int = 20
    min_step: float = 1e-13

    def __post_init__(self):
        if not self.dt > 0:
            raise ArgumentError(f"dt must be > 0, got {self.dt!r}")
        if not 0 < self.tolerance < 1:
            raise ArgumentError(f"tolerance must lie in (0, 1), got {self.tolerance!r}")
        if self.krylov_dim < 2:
            raise ArgumentError(f"krylov_dim must be >= 2, got {self.krylov_dim!r}")


@dataclass
class StepStats:
    steps: int = 0
    matvecs: int = 0
    max_error_estimate: float = 0.0


def _lanczos(matvec, v0: np.ndarray, m: int):
    """Lanczos with full reorthogonalization.

    Returns ``(V, alpha, beta, beta_last, k)``: ``V`` holds ``k <= m``
    orthonormal rows, ``alpha``/``beta`` define the k x k tridiagonal matrix
    and ``beta_last`` is the residual norm coupling it to the rest of the
    space (0 on invariant-subspace breakdown).
    """
    n = v0.shape[0]
    norm0 = np.linalg.norm(v0)
    V = np.empty((m + 1, n), dtype=complex)
    V[0] = v0 / norm0
    alpha = np.zeros(m)
    beta = np.zeros(m)
    breakdown_tol = 1e-14 * max(1.0, norm0)
    k = m
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j:
            w = w - beta[j - 1] * V[j - 1]
        # two passes of classical Gram-Schmidt keep V orthonormal to ~eps
        for _ in range(2):
            w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < breakdown_tol:
            k = j + 1
            beta[j] = 0.0
            break
        V[j + 1] = w / b
    return V[:k], alpha[:k], beta[: k - 1], beta[k - 1], k


class _KrylovStep:
    """Exponential of a Lanczos tridiagonal matrix for arbitrary step lengths."""

    def __init__(self, alpha, beta, beta_last):
        if len(alpha) == 1:
            self.evals = alpha.copy()
            self.evecs = np.ones((1, 1))
        else:
            self.evals, self.evecs = sla.eigh_tridiagonal(alpha, beta)
        self.first = self.evecs[0].copy()
        self.beta_last = beta_last

    def coefficients(self, tau: float) -> np.ndarray:
        return self.evecs @ (np.exp(-1j * tau * self.evals) * self.first)

    def error(self, tau: float) -> float:
        if self.beta_last == 0.0:
            return 0.0
        return float(self.beta_last * abs(self.coefficients(tau)[-1]))


def _propagate(matvec, psi: np.ndarray, duration: float, cfg: PropagatorConfig,
               stats: StepStats, tau_guess: float) -> tuple[np.ndarray, float]:
    remaining = duration
    tau = tau_guess
    while remaining > 0:
        norm = np.linalg.norm(psi)
        V, alpha, beta, beta_last, k = _lanczos(matvec, psi, cfg.krylov_dim)
        stats.matvecs += k
        step = _KrylovStep(alpha, beta, beta_last)
        target = cfg.tolerance / max(norm, 1e-300)
        tau = min(remaining, max(tau, cfg.min_step) * 2.0)
        err = step.error(tau)
        while err > target:
            # error of the truncated exponential grows roughly like tau**k
            shrink = 0.9 * (target / err) ** (1.0 / max(k, 1))
            tau *= min(0.5, max(shrink, 0.05))
            if tau < cfg.min_step:
                raise ConvergenceError(
                    f"step size underflow ({tau:.3e}) at error estimate {err:.3e}")
            err = step.error(tau)
        if tau >= remaining * (1 - 1e-12):
            tau = remaining
        coeffs = step.coefficients(tau)
        psi = norm * (coeffs @ V)
        stats.steps += 1
        stats.max_error_estimate = max(stats.max_error_estimate, err)
        remaining -= tau
        if remaining <= 1e-15 * max(duration, 1.0):
            remaining = 0.0
    return psi, tau


def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ArgumentError("t_grid must be a non-empty 1D sequence")
    if not np.all(np.isfinite(t)) or t[0] < 0:
        raise ArgumentError("t_grid must be finite with t_grid[0] >= 0")
    if np.any(np.diff(t) < 0):
        raise ArgumentError("t_grid must be ascending")
    return t


def _check_state(H: SparseHamiltonian, psi0: np.ndarray) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (H.dimension,):
        raise ArgumentError(
            f"state has shape {psi0.shape}, Hamiltonian dimension is {H.dimension}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ArgumentError(f"initial state is not normalized (norm {np.linalg.norm(psi0)!r})")
    return psi0


def evolve(H: SparseHamiltonian, psi0: np.ndarray, t_grid: Sequence[float],
           cfg: PropagatorConfig | None = None, stats: StepStats | None = None
           ) -> list[np.ndarray]:
    """States ``exp(-i H t_m) psi0`` for every ``t_m`` in ``t_grid``."""
    cfg = cfg or PropagatorConfig()
    t = _check_grid(t_grid)
    psi = _check_state(H, psi0).copy()
    stats = stats if stats is not None else StepStats()
    matrix = H.matrix
    matvec = matrix.dot

    out = []
    now = 0.0
    tau = cfg.dt
    for t_m in t:
        if t_m > now:
            psi, tau = _propagate(matvec, psi, t_m - now, cfg, stats, tau)
            now = t_m
        out.append(psi.copy())
    return out


def dense_oracle(H: SparseHamiltonian, psi0: np.ndarray, t: float) -> np.ndarray:
    """Reference ``exp(-iHt) psi0`` through a dense eigendecomposition."""
    if H.dimension > DENSE_ORACLE_MAX_DIMENSION:
        raise ResourceLimitError(
            f"dense oracle limited to dimension {DENSE_ORACLE_MAX_DIMENSION}, got {H.dimension}")
    if t < 0:
        raise ArgumentError(f"t must be >= 0, got {t!r}")
    psi0 = np.asarray(psi0, dtype=complex)
    if t == 0:
        return psi0.copy()
    evals, evecs = np.linalg.eigh(H.to_dense())
    return evecs @ (np.exp(-1j * t * evals) * (evecs.conj().T @ psi0))


def energy(H: SparseHamiltonian, psi: np.ndarray) -> float:
    return float(np.vdot(psi, H.matrix @ psi).real)


def energy_scale(H: SparseHamiltonian, psi: np.ndarray) -> float:
    """``||H psi||``, the reference for relative energy drift.

    ``<H>`` itself can vanish (both switch components have zero bare energy
    when the gaps are equal), so it is a poor denominator.
    """
    return max(float(np.linalg.norm(H.matrix @ psi)), 1e-300)


def norm_defect(psi: np.ndarray) -> float:
    return abs(float(np.vdot(psi, psi).real) - 1.0)


__all__ = [
    "PropagatorConfig", "StepStats", "evolve", "dense_oracle", "energy", "energy_scale",
    "norm_defect",
    "DENSE_ORACLE_MAX_DIMENSION",
]
