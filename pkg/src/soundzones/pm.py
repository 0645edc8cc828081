"""
Centralized pressure matching.

The update uses the gradient without its factor of two,
``g <- g - mu * H^H (H g - d)``, so ``mu`` here is twice the step size of a
plain steepest descent on ``||H g - d||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .scene import ATFMatrix, DesiredField


class DivergenceError(FloatingPointError):
    """An adaptive filter produced non-finite weights."""

    def __init__(self, iteration, algorithm="cpm", node=None):
        self.iteration = iteration
        self.algorithm = algorithm
        self.node = node
        where = f"{algorithm}" + (f" node {node}" if node is not None else "")
        super().__init__(f"{where} diverged at iteration {iteration}")


class RankDeficientError(np.linalg.LinAlgError):
    pass


class OpCounter:
    """Tally of complex multiplications and additions spent on filter updates."""

    def __init__(self):
        self.multiplications = 0
        self.additions = 0

    def gradient(self, n_rows, L):
        # H^H e over n_rows rows: one product per entry, n_rows - 1 sums per column
        self.multiplications += n_rows * L
        self.additions += (n_rows - 1) * L

    def scale(self, L):
        self.multiplications += L

    def subtract(self, L):
        self.additions += L

    def weighted_sum(self, n_terms, L):
        self.multiplications += n_terms * L
        self.additions += (n_terms - 1) * L

    def reset(self):
        self.multiplications = self.additions = 0


def _entries(H):
    return H.entries if isinstance(H, ATFMatrix) else np.asarray(H)


def _values(d):
    return d.values if isinstance(d, DesiredField) else np.asarray(d)


def render_pressure(H, g) -> np.ndarray:
    """Pressure p = H g at every control point."""
    H, g = _entries(H), np.asarray(g)
    if H.shape[1] != g.shape[0]:
        raise ValueError(f"H has {H.shape[1]} columns but g has length {g.shape[0]}")
    return H @ g


def compute_error(p, d) -> np.ndarray:
    p, d = np.asarray(p), _values(d)
    if p.shape != d.shape:
        raise ValueError(f"pressure shape {p.shape} != target shape {d.shape}")
    return p - d


def mse_cost(e) -> float:
    e = np.asarray(e)
    return float(np.vdot(e, e).real)


@dataclass(frozen=True)
class CpmState:
    filter: np.ndarray
    step_size: float
    iteration: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


def cpm_step(state: CpmState, H_n, d_n, counter: OpCounter | None = None) -> CpmState:
    """One LMS iteration of the centralized filter."""
    H = _entries(H_n)
    with np.errstate(over="ignore", invalid="ignore"):
        e = compute_error(render_pressure(H, state.filter), d_n)
        g = state.filter - state.step_size * (H.conj().T @ e)
    if counter is not None:
        M, L = H.shape
        counter.gradient(M, L)
        counter.scale(L)
        counter.subtract(L)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(state.iteration, "cpm")
    return replace(state, filter=g, iteration=state.iteration + 1)


def least_squares_solution(H, d, diag_load: float = 0.0) -> np.ndarray:
    """
    Minimizer of ||H g - d||^2 + diag_load ||g||^2.

    Solved through a QR factorization of H stacked on sqrt(diag_load) I,
    which avoids squaring the condition number.
    """
    H, d = _entries(H), _values(d)
    if diag_load < 0:
        raise ValueError("diag_load must be non-negative")
    L = H.shape[1]
    A, b = H, d
    if diag_load > 0:
        A = np.vstack([H, np.sqrt(diag_load) * np.eye(L)])
        b = np.concatenate([d, np.zeros(L, dtype=complex)])
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.size < L or diag.min() <= 1e-13 * max(diag.max(), 1e-300):
        raise RankDeficientError(
            "H^H H is singular; pass diag_load > 0 to regularize the solve")
    return solve_triangular(r, q.conj().T @ b)


def stability_bound(H, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """
    LMS mean-convergence bound 2 / lambda_max(H^H H).

    lambda_max is found by power iteration on H^H H, stopped once
    the eigen-residual falls below ``tol`` relative.
    """
    H = _entries(H)
    if not np.any(H):
        raise ValueError("stability bound undefined for H = 0")
    R = H.conj().T @ H
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(R.shape[0]) + 1j * rng.standard_normal(R.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = R @ v
        lam = float(np.vdot(v, w).real)
        # Hermitian residual bound: some eigenvalue lies within ||R v - lam v|| of lam
        if np.linalg.norm(w - lam * v) <= tol * abs(lam):
            break
        v = w / np.linalg.norm(w)
    return 2.0 / lam
