"""
Active-space energies by exact diagonalization in a determinant basis.

Spin orbitals are interleaved: P = 2 p + sigma with sigma = 0 (alpha), 1 (beta).
Determinants are integer bitstrings (bit P set when spin orbital P is occupied)
and stand for a+_{P1} a+_{P2} ... |0> with P1 < P2 < ...

    H = Gamma0 + sum_PQ g_PQ a+_P a_Q + 1/4 sum_PQRS k^{PQ}_{RS} a+_P a+_Q a_S a_R
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .linalg import lowest_eigenvalue
from .tensors import Symmetry, symmetry_error

MAX_DETERMINANTS = 20000


@dataclass(frozen=True)
class SpinHamiltonian:
    n_so: int
    scalar: float
    g: np.ndarray
    k: np.ndarray  # antisymmetrized <PQ||RS>


@dataclass(frozen=True)
class DeterminantBasis:
    n_so: int
    n_elec: int
    ms2: int
    dets: tuple

    def index(self) -> dict:
        return {d: i for i, d in enumerate(self.dets)}

    def __len__(self):
        return len(self.dets)


@dataclass(frozen=True)
class EnergyReport:
    e_ref: float
    e_total: float
    geometry: float | None = None

    @property
    def e_corr(self) -> float:
        return self.e_total - self.e_ref


def spatial_to_spin(scalar: float, h, V, tol: float = 1e-10) -> SpinHamiltonian:
    """Expand spatial one-body h and Mulliken (pq|rs) into spin-orbital g and k."""
    h = np.asarray(h, dtype=float)
    V = np.asarray(V, dtype=float)
    n = h.shape[0]
    if V.shape != (n,) * 4:
        raise ValueError("two-body tensor does not match one-body dimension")
    if symmetry_error(V, Symmetry.FOURFOLD) > tol:
        raise ValueError("two-body tensor is not FOURFOLD symmetric within tolerance")
    if np.max(np.abs(h - h.T), initial=0.0) > tol:
        raise ValueError("one-body tensor is not symmetric")
    n_so = 2 * n
    spin = np.arange(n_so) % 2
    spat = np.arange(n_so) // 2
    same = (spin[:, None] == spin[None, :]).astype(float)
    g = h[np.ix_(spat, spat)] * same
    phys = V.transpose(0, 2, 1, 3)  # <pq|rs> = (pr|qs)
    G = phys[np.ix_(spat, spat, spat, spat)] * same[:, None, :, None] * same[None, :, None, :]
    k = G - G.transpose(0, 1, 3, 2)
    return SpinHamiltonian(n_so, float(scalar), g, k)


def enumerate_determinants(n_so: int, n_elec: int, ms2: int) -> DeterminantBasis:
    if n_so % 2:
        raise ValueError("spin-orbital count must be even")
    if (n_elec + ms2) % 2:
        raise ValueError(f"ms2={ms2} has the wrong parity for {n_elec} electrons")
    n_a, n_b = (n_elec + ms2) // 2, (n_elec - ms2) // 2
    n = n_so // 2
    if not (0 <= n_a <= n and 0 <= n_b <= n):
        raise ValueError(f"infeasible spin projection ms2={ms2} for {n_elec} electrons in {n} orbitals")
    dets = []
    for occ_a in combinations(range(n), n_a):
        a = sum(1 << (2 * p) for p in occ_a)
        for occ_b in combinations(range(n), n_b):
            dets.append(a | sum(1 << (2 * p + 1) for p in occ_b))
    return DeterminantBasis(n_so, n_elec, ms2, tuple(sorted(dets)))


def _sign_below(det: int, P: int) -> int:
    return -1 if bin(det & ((1 << P) - 1)).count("1") % 2 else 1


def build_hamiltonian(ham: SpinHamiltonian, basis: DeterminantBasis) -> np.ndarray:
    """Slater-Condon matrix elements; upper triangle computed, lower mirrored."""
    if basis.n_so != ham.n_so:
        raise ValueError("basis and Hamiltonian disagree on spin-orbital count")
    N = len(basis)
    if N > MAX_DETERMINANTS:
        raise ValueError(f"determinant basis of {N} exceeds the {MAX_DETERMINANTS} limit")
    g, k = ham.g, ham.k
    index = basis.index()
    H = np.zeros((N, N))
    for col, D in enumerate(basis.dets):
        occ = [P for P in range(ham.n_so) if D >> P & 1]
        vir = [P for P in range(ham.n_so) if not D >> P & 1]
        occ_a = np.array(occ)
        H[col, col] = ham.scalar + g[occ_a, occ_a].sum() + 0.5 * k[np.ix_(occ_a, occ_a, occ_a, occ_a)].diagonal(
            axis1=0, axis2=2).diagonal(axis1=0, axis2=1).sum()
        for i in occ:
            s1 = _sign_below(D, i)
            Di = D ^ (1 << i)
            for a in vir:
                Da = Di | (1 << a)
                row = index.get(Da)
                if row is None or row <= col:
                    continue
                val = g[a, i] + sum(k[a, j, i, j] for j in occ if j != i)
                H[row, col] = s1 * _sign_below(Di, a) * val
        for i, j in combinations(occ, 2):
            s = _sign_below(D, i)
            Di = D ^ (1 << i)
            s *= _sign_below(Di, j)
            Dij = Di ^ (1 << j)
            for a, b in combinations(vir, 2):
                sb = _sign_below(Dij, b)
                Db = Dij | (1 << b)
                sa = _sign_below(Db, a)
                Dab = Db | (1 << a)
                row = index.get(Dab)
                if row is None or row <= col:
                    continue
                # a+_a a+_b a_j a_i |D>; the operator is normal-ordered with i<j, a<b
                H[row, col] = s * sb * sa * k[a, b, i, j]
    iu = np.triu_indices(N, 1)
    H[iu] = H.T[iu]
    return H


def ground_energy(H) -> float:
    """Lowest eigenvalue: Jacobi up to 500 determinants, Lanczos above."""
    return lowest_eigenvalue(H, dense_limit=500)


def reference_energy(scalar: float, h, V, n_occ: int) -> float:
    """Closed-shell energy with the n_occ lowest spatial orbitals doubly occupied."""
    h = np.asarray(h)
    V = np.asarray(V)
    occ = np.arange(n_occ)
    J = V[occ[:, None], occ[:, None], occ[None, :], occ[None, :]]  # (ii|jj)
    K = V[occ[:, None], occ[None, :], occ[None, :], occ[:, None]]  # (ij|ji)
    return float(scalar + 2.0 * h[occ, occ].sum() + (2.0 * J - K).sum())


def reference_determinant(n_so: int, n_elec: int) -> int:
    if n_elec % 2:
        raise ValueError("closed-shell reference needs an even electron count")
    return sum(1 << P for P in range(n_elec))


def energy_report(scalar: float, h, V, n_elec: int, geometry: float | None = None) -> EnergyReport:
    if n_elec % 2:
        raise ValueError("closed-shell reference needs an even electron count")
    ham = spatial_to_spin(scalar, h, V)
    basis = enumerate_determinants(ham.n_so, n_elec, 0)
    H = build_hamiltonian(ham, basis)
    e_ref = reference_energy(scalar, h, V, n_elec // 2)
    return EnergyReport(e_ref, ground_energy(H), geometry)


def percent_correlation(report: EnergyReport, baseline: EnergyReport) -> float:
    if baseline.e_corr == 0.0:
        raise ZeroDivisionError("baseline has zero correlation energy")
    return 100.0 * report.e_corr / baseline.e_corr


def energy_csv(rows) -> str:
    """rows: iterable of (EnergyReport, percent or None)."""
    lines = ["geometry,E_ref,E_total,E_corr,pct_corr_vs_baseline"]
    for rep, pct in rows:
        g = "" if rep.geometry is None else repr(float(rep.geometry))
        lines.append(f"{g},{rep.e_ref!r},{rep.e_total!r},{rep.e_corr!r},{'' if pct is None else repr(float(pct))}")
    return "\n".join(lines) + "\n"
