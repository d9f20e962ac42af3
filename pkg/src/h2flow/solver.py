"""Damped Newton with a frozen-coefficient (Picard) fallback."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve


class NonConvergence(RuntimeError):
    def __init__(self, iterations, best_norm):
        super().__init__(f"no convergence after {iterations} iterations (best |R| = {best_norm:.3e})")
        self.iterations = iterations
        self.best_norm = best_norm


class LinearSolveFailure(RuntimeError):
    pass


@dataclass
class SolveStats:
    iterations: int = 0
    residual_norm: float = np.inf
    damping: list = field(default_factory=list)
    method: str = "newton"
    converged: bool = False


def linear_solve(A, b, rtol=1e-10):
    """Sparse direct solve with one step of iterative refinement if needed."""
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    A = sp.csc_matrix(A)
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(A, b)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise LinearSolveFailure(str(exc)) from exc
        x = np.atleast_1d(x)
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure("non-finite solution of the linear system")
        r = b - A @ x
        nb = np.linalg.norm(b)
        if np.linalg.norm(r) > rtol * nb:
            x = x + np.atleast_1d(spsolve(A, r))
            r = b - A @ x
            if np.linalg.norm(r) > rtol * nb:
                raise LinearSolveFailure(f"linear residual {np.linalg.norm(r) / nb:.2e} above {rtol:.0e}")
    return x


def _line_search(F, x, d, f0, n0, stats, max_halvings=12, c=1e-4):
    alpha = 1.0
    for _ in range(max_halvings + 1):
        xn = x + alpha * d
        fn = F(xn)
        nn = np.linalg.norm(fn)
        if np.all(np.isfinite(fn)) and nn <= (1.0 - c * alpha) * n0:
            stats.damping.append(alpha)
            return xn, fn
        alpha *= 0.5
    return None, None


def solve_step(residual_fn, jacobian_fn, guess, tol=1e-9, max_iter=50, picard_jacobian_fn=None):
    """Drive ``residual_fn`` to ``max|R| <= tol`` from ``guess``.

    Newton steps are globalised by Armijo backtracking on |R|_2.  A failed
    line search is retried once with a finer-differenced Jacobian; a second
    consecutive failure switches to the Picard operator
    ``picard_jacobian_fn(x)`` (if given) for the rest of the solve.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(guess, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite initial guess")
    stats = SolveStats()
    f = residual_fn(x)
    best = np.max(np.abs(f))
    method = "newton"
    failures = 0
    for it in range(max_iter + 1):
        res = float(np.max(np.abs(f)))
        best = min(best, res)
        stats.iterations = it
        stats.residual_norm = res
        if res <= tol:
            stats.converged = True
            stats.method = method
            return x, stats
        if it == max_iter:
            break
        if method == "newton":
            fine = failures > 0 and getattr(jacobian_fn, "accepts_fine", False)
            J = jacobian_fn(x, fine=True) if fine else jacobian_fn(x)
        else:
            J = picard_jacobian_fn(x)
        d = linear_solve(J, -f)
        xn, fn = _line_search(residual_fn, x, d, f, np.linalg.norm(f), stats)
        if xn is not None:
            x, f = xn, fn
            failures = 0
            continue
        failures += 1
        if method == "newton" and failures >= 2 and picard_jacobian_fn is not None:
            method = "picard"
            stats.method = method
            failures = 0
        elif failures >= 2:
            break
    stats.method = method
    raise NonConvergence(stats.iterations, float(best))

