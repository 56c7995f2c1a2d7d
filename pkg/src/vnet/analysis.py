"""Prediction metrics and the screening analysis of the bare / effective kernels."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .linalg import jacobi_eigh
from .netmodel import KernelMatrix
from .tensors import IndexMask, InteractionTensor2B


@dataclass(frozen=True)
class MetricReport:
    geometry: float
    mae: float
    mse: float
    n_entries: int


def _retained_values(t: InteractionTensor2B | np.ndarray, mask: IndexMask) -> np.ndarray:
    values = t.values if isinstance(t, InteractionTensor2B) else np.asarray(t)
    if values.shape != (mask.n_act,) * 4:
        raise ValueError(f"tensor shape {values.shape} does not match mask n_act={mask.n_act}")
    return values[tuple(mask.retained_keys.T)]


def mae_mse(pred, true, mask: IndexMask) -> MetricReport:
    """Maximum absolute error and mean squared error over retained canonical keys."""
    diff = _retained_values(pred, mask) - _retained_values(true, mask)
    geom = getattr(true, "geometry", float("nan"))
    if diff.size == 0:
        return MetricReport(geom, 0.0, 0.0, 0)
    return MetricReport(geom, float(np.max(np.abs(diff))), float(np.mean(diff * diff)), int(diff.size))


def bare_eff_gap(bare: InteractionTensor2B, eff: InteractionTensor2B, mask: IndexMask) -> float:
    """max |bare - eff| over retained keys at one geometry."""
    if abs(bare.geometry - eff.geometry) > 1e-9:
        warnings.warn(f"comparing tensors at different geometries {bare.geometry} vs {eff.geometry}")
    diff = _retained_values(bare, mask) - _retained_values(eff, mask)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def _as_matrix(W) -> np.ndarray:
    return W.matrix() if isinstance(W, KernelMatrix) else np.asarray(W, dtype=float)


def eig_sym(W):
    """(Z, eigenvalues ascending) of a symmetric kernel."""
    w, Z = jacobi_eigh(_as_matrix(W))
    return Z, w


def congruence_diag(Z: np.ndarray, W_eff) -> tuple[np.ndarray, float]:
    """Diagonal of Z^T W Z and the off-diagonal share of its Frobenius norm."""
    M = Z.T @ _as_matrix(W_eff) @ Z
    d = np.diag(M).copy()
    total = np.linalg.norm(M)
    if total == 0.0:
        return d, 0.0
    return d, float(np.linalg.norm(M - np.diag(d)) / total)


def tau_ratios(eps_b: np.ndarray, eps_d: np.ndarray, eta: float | None = None):
    """Relative screening (eps_D - eps_B) / eps_B, sorted ascending.

    Entries with |eps_B| < eta are dropped (default eta = 1e-6 max|eps_B|).
    Returns (tau sorted, original indices of the kept entries in that order).
    """
    eps_b = np.asarray(eps_b, dtype=float)
    eps_d = np.asarray(eps_d, dtype=float)
    if eps_b.shape != eps_d.shape:
        raise ValueError("eigenvalue lists differ in length")
    if eta is None:
        eta = 1e-6 * float(np.max(np.abs(eps_b), initial=0.0))
    kept = np.flatnonzero(np.abs(eps_b) >= eta)
    if kept.size == 0 or not np.any(eps_b):
        raise ValueError("every eigenvalue falls below the exclusion threshold")
    tau = (eps_d[kept] - eps_b[kept]) / eps_b[kept]
    order = np.argsort(tau, kind="stable")
    return tau[order], kept[order]


@dataclass(frozen=True)
class TanFit:
    alpha: float
    beta: float
    i_c: float
    residual: float  # rms


_DELTA = 1e-3


def _grid_eval(tau, x, alphas, centers):
    best = (np.inf, None)
    lim = math.pi / 2 - _DELTA
    for a in alphas:
        arg = a * (x[None, :] - centers[:, None])
        ok = np.all(np.abs(arg) < lim, axis=1)
        if not ok.any():
            continue
        t = np.tan(arg[ok])
        tt = np.einsum("ij,ij->i", t, t)
        beta = np.where(tt > 0, t @ tau / np.where(tt > 0, tt, 1.0), 0.0)
        rss = np.sum((tau[None, :] - beta[:, None] * t) ** 2, axis=1)
        j = int(np.argmin(rss))
        if rss[j] < best[0]:
            best = (float(rss[j]), (float(a), float(centers[ok][j]), float(beta[j])))
    return best


def tan_fit(tau, kept=None, n_alpha: int = 200, rounds: int = 3) -> TanFit:
    """Least-squares fit tau_i = beta * tan(alpha * (i - i_c)) over the rank i of each entry.

    Coarse grid over (alpha, i_c) with beta in closed form, ``rounds`` rounds of
    grid shrinking by 10x around the best point, then a Gauss-Newton polish.
    alpha * (i - i_c) is kept inside (-pi/2 + 1e-3, pi/2 - 1e-3).
    """
    tau = np.asarray(tau, dtype=float)
    K = len(tau)
    if K < 4:
        raise ValueError("tan_fit needs at least 4 points")
    x = np.arange(K, dtype=float)
    if not np.any(tau):
        return TanFit(0.0, 0.0, (K - 1) / 2, 0.0)
    span = K - 1
    alphas = np.geomspace(1e-4, math.pi / span, n_alpha)
    centers = np.arange(0.0, span + 0.25, 0.5)
    rss, (a, c, _) = _grid_eval(tau, x, alphas, centers)
    ratio = alphas[1] / alphas[0]
    step = 0.5
    for _ in range(rounds):
        ratio = ratio ** 0.1
        step /= 10
        alphas = a * ratio ** np.arange(-10, 11)
        cs = c + step * np.arange(-10, 11)
        r2, best = _grid_eval(tau, x, alphas, cs)
        if best is not None and r2 <= rss:
            rss, (a, c, _) = r2, best

    lim = math.pi / 2 - _DELTA

    def resid(z):
        t = np.tan(z[0] * (x - z[1]))
        tt = t @ t
        beta = (t @ tau) / tt if tt > 0 else 0.0
        return tau - beta * t

    def feasible(z):
        return np.all(np.abs(z[0] * (x - z[1])) < lim)

    sol = least_squares(resid, np.array([a, c]), x_scale=np.array([a, 1.0]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if feasible(sol.x) and np.sum(sol.fun ** 2) <= rss:
        a, c = sol.x
    t = np.tan(a * (x - c))
    beta = float((t @ tau) / (t @ t))
    r = tau - beta * t
    return TanFit(float(a), beta, float(c), float(np.sqrt(np.mean(r * r))))


@dataclass(frozen=True)
class ScreeningReport:
    eps_b: np.ndarray  # eigenvalues of W^B, ascending
    eps_d: np.ndarray  # diagonal of Z^T W^D Z paired with eps_b
    tau: np.ndarray  # length ell, NaN where |eps_B| < eta
    diagonality: float  # off-diagonal Frobenius fraction of Z^T W^D Z
    tau_sorted: np.ndarray
    kept: np.ndarray
    fit: TanFit | None


def screening_analysis(W_bare, W_eff, eta: float | None = None, fit: bool = True) -> ScreeningReport:
    """Eigen-analysis of W^D in the eigenbasis of W^B.

    Both eps_B and eps_D in the ratio are read off the diagonals of Z^T W Z with
    the same Z, so a kernel pair with W^D = c W^B gives tau = c - 1 to rounding.
    """
    Z, lam = eig_sym(W_bare)
    d_b, _ = congruence_diag(Z, W_bare)
    d_d, frac = congruence_diag(Z, W_eff)
    tau_sorted, kept = tau_ratios(d_b, d_d, eta)
    tau = np.full(len(lam), np.nan)
    tau[kept] = tau_sorted
    tf = tan_fit(tau_sorted, kept) if fit and len(tau_sorted) >= 4 else None
    return ScreeningReport(lam, d_d, tau, frac, tau_sorted, kept, tf)


def screening_csv(report: ScreeningReport) -> str:
    lines = ["i,eps_B,eps_D,tau"]
    for i, (b, d, t) in enumerate(zip(report.eps_b, report.eps_d, report.tau)):
        lines.append(f"{i},{float(b)!r},{float(d)!r},{'' if np.isnan(t) else repr(float(t))}")
    return "\n".join(lines) + "\n"


def tanfit_csv(fit: TanFit | None) -> str:
    if fit is None:
        return "alpha,beta,i_c,residual\n"
    return f"alpha,beta,i_c,residual\n{fit.alpha!r},{fit.beta!r},{fit.i_c!r},{fit.residual!r}\n"


def metrics_csv(rows) -> str:
    """rows: iterable of (MetricReport, gap)."""
    lines = ["geometry,mae,mse,gap"]
    for rep, gap in rows:
        lines.append(f"{rep.geometry!r},{rep.mae!r},{rep.mse!r},{'' if gap is None else repr(float(gap))}")
    return "\n".join(lines) + "\n"
