"""Dense symmetric eigensolvers: cyclic Jacobi and Lanczos with full reorthogonalization."""

from __future__ import annotations

import numpy as np


class ConvergenceError(RuntimeError):
    pass


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """n-1 rounds of n/2 disjoint (p, q) pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _rotate_rows(M, p, q, c, s):
    Mp, Mq = M[p], M[q]
    M[p] = c * Mp - s * Mq
    M[q] = s * Mp + c * Mq


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so the
    rotations of one round act on disjoint index pairs and are applied together.
    Iterates until the off-diagonal Frobenius norm is <= tol * ||A||_F.

    Returns (eigenvalues ascending, orthogonal Z) with A = Z diag(w) Z^T.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    A = 0.5 * (A + A.T)
    Vt = np.eye(n)  # rows are eigenvectors
    norm = np.linalg.norm(A)
    if n <= 1 or norm == 0.0:
        return np.diag(A).copy(), Vt
    rounds = _round_robin(n)
    target = tol * norm

    def off(M):
        return np.linalg.norm(M - np.diag(np.diag(M)))

    for sweep in range(max_sweeps):
        if off(A) <= target:
            break
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            g = 100.0 * np.abs(apq)
            # after a few sweeps, entries below the diagonal's rounding level are dropped
            negligible = (sweep > 3) & (np.abs(app) + g == np.abs(app)) & (np.abs(aqq) + g == np.abs(aqq))
            nz = (apq != 0.0) & ~negligible
            safe = np.where(nz, apq, 1.0)
            h = aqq - app
            theta = 0.5 * h / safe
            big = np.abs(h) + g == np.abs(h)  # theta^2 would overflow
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                t = np.where(big, apq / np.where(big, h, 1.0),
                             np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            c, s = c[:, None], s[:, None]
            # J^T A J == J^T (J^T A)^T for symmetric A; rotate rows twice
            _rotate_rows(A, p, q, c, s)
            A = np.ascontiguousarray(A.T)
            _rotate_rows(A, p, q, c, s)
            A[p, q] = 0.0
            A[q, p] = 0.0
            _rotate_rows(Vt, p, q, c, s)
        A = 0.5 * (A + A.T)
    else:
        if off(A) > target:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], Vt[order].T.copy()


def lanczos_lowest(A, tol: float = 1e-12, max_iter: int = 400, seed: int = 0) -> float:
    """Lowest eigenvalue of a symmetric matrix by Lanczos with full reorthogonalization."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    k_max = min(n, max_iter)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.zeros((k_max, n))
    alpha, beta = [], []
    theta = None
    for k in range(k_max):
        Q[k] = q
        w = A @ q
        a = float(q @ w)
        alpha.append(a)
        w = w - a * q - (beta[-1] * Q[k - 1] if k > 0 else 0.0)
        for _ in range(2):
            w = w - Q[:k + 1].T @ (Q[:k + 1] @ w)
        b = float(np.linalg.norm(w))
        scale = max(1.0, abs(theta)) if theta is not None else 1.0
        if (k + 1) % 10 == 0 or b <= tol * scale or k == n - 1 or k == k_max - 1:
            T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
            evals, evecs = jacobi_eigh(T)
            theta = evals[0]
            resid = abs(b * evecs[-1, 0])
            if resid <= tol * max(1.0, abs(theta)) or b <= tol * max(1.0, abs(theta)) or k == n - 1:
                return float(theta)
        beta.append(b)
        q = w / b
    raise ConvergenceError(f"Lanczos did not converge in {k_max} iterations (last {theta})")


def lowest_eigenvalue(A, dense_limit: int = 500) -> float:
    A = np.asarray(A, dtype=float)
    if A.shape[0] <= dense_limit:
        return float(jacobi_eigh(A)[0][0])
    return lanczos_lowest(A)
