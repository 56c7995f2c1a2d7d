"""
Synthetic bare and screened two-body tensors from 1D model orbitals.

Orbital j is a Hermite-Gaussian of order j // 2 centred at -R/2 (even j) or
+R/2 (odd j), width 1, normalized on the quadrature grid. Integrals use the
tensor-product trapezoid rule on [-X, X]^2 with X = R/2 + 8.

The effective series uses the same orbitals as the bare series and only swaps
the interaction kernel, so bare -> effective is a geometry-independent kernel
change.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite

from .tensors import (
    GeometrySeries,
    InteractionTensor2B,
    Kind,
    OneBodyTensor,
    ScalarTerm,
    SeriesEntry,
    Symmetry,
)

R_RANGE = (0.5, 3.0)
HALF_WIDTH_PAD = 8.0


class KernelKind(enum.Enum):
    SOFT_COULOMB = "soft_coulomb"
    YUKAWA = "yukawa"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    mu: float = 0.0
    delta: float = 0.3
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind in (KernelKind.SOFT_COULOMB, KernelKind.YUKAWA) and not self.delta > 0:
            raise ValueError("softening delta must be > 0")
        if self.kind is KernelKind.YUKAWA and not self.mu > 0:
            raise ValueError("Yukawa screening mu must be > 0")
        if self.kind is KernelKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError("Gaussian kernel width must be > 0")

    @classmethod
    def soft_coulomb(cls, delta=0.3):
        return cls(KernelKind.SOFT_COULOMB, delta=delta)

    @classmethod
    def yukawa(cls, mu, delta=0.3):
        return cls(KernelKind.YUKAWA, mu=mu, delta=delta)

    @classmethod
    def gaussian(cls, sigma):
        return cls(KernelKind.GAUSSIAN, sigma=sigma)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """``soft_coulomb[:delta]``, ``yukawa:mu[,delta]`` or ``gaussian:sigma``."""
        name, _, args = text.strip().partition(":")
        try:
            kind = KernelKind(name.strip().lower())
            vals = [float(a) for a in args.split(",") if a.strip()]
        except ValueError:
            raise ValueError(f"bad kernel spec {text!r}") from None
        if kind is KernelKind.SOFT_COULOMB and len(vals) <= 1:
            return cls.soft_coulomb(*vals)
        if kind is KernelKind.YUKAWA and len(vals) in (1, 2):
            return cls.yukawa(*vals)
        if kind is KernelKind.GAUSSIAN and len(vals) == 1:
            return cls.gaussian(*vals)
        raise ValueError(f"bad kernel spec {text!r}")

    def label(self) -> str:
        if self.kind is KernelKind.SOFT_COULOMB:
            return f"soft_coulomb:{self.delta!r}"
        if self.kind is KernelKind.YUKAWA:
            return f"yukawa:{self.mu!r},{self.delta!r}"
        return f"gaussian:{self.sigma!r}"

    def __call__(self, d: np.ndarray) -> np.ndarray:
        if self.kind is KernelKind.GAUSSIAN:
            return np.exp(-0.5 * (d / self.sigma) ** 2)
        rho = np.sqrt(d * d + self.delta ** 2)
        if self.kind is KernelKind.SOFT_COULOMB:
            return 1.0 / rho
        return np.exp(-self.mu * rho) / rho


@dataclass(frozen=True)
class ModelOrbitalSet:
    n_act: int
    R: float
    centers: np.ndarray
    orders: np.ndarray
    width: float
    half_length: float
    n_q: int
    grid: np.ndarray
    weights: np.ndarray
    values: np.ndarray  # (n_act, n_q) on the grid
    derivs: np.ndarray  # d/dx of values

    def overlap(self) -> np.ndarray:
        return (self.values * self.weights) @ self.values.T


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def model_orbitals(n_act: int, R: float, n_q: int = 256, width: float = 1.0) -> ModelOrbitalSet:
    if not R_RANGE[0] <= R <= R_RANGE[1]:
        raise ValueError(f"geometry R={R} outside supported range {R_RANGE}")
    if n_q < 64:
        raise ValueError("need at least 64 quadrature points per axis")
    X = R / 2 + HALF_WIDTH_PAD
    x = np.linspace(-X, X, n_q)
    w = _trapezoid_weights(n_q, x[1] - x[0])
    j = np.arange(n_act)
    orders = j // 2
    centers = np.where(j % 2 == 0, -R / 2, R / 2)
    vals = np.empty((n_act, n_q))
    ders = np.empty((n_act, n_q))
    for a in range(n_act):
        y = (x - centers[a]) / width
        k = orders[a]
        ck = np.zeros(k + 1)
        ck[k] = 1.0
        Hk = hermite.hermval(y, ck)
        dHk = hermite.hermval(y, hermite.hermder(ck)) if k > 0 else np.zeros_like(y)
        g = np.exp(-0.5 * y * y)
        vals[a] = Hk * g
        ders[a] = (dHk - y * Hk) * g / width
    norm = np.sqrt((vals * vals) @ w)
    vals /= norm[:, None]
    ders /= norm[:, None]
    return ModelOrbitalSet(n_act, float(R), centers, orders, width, X, n_q, x, w, vals, ders)


def _pair_densities(orb: ModelOrbitalSet) -> np.ndarray:
    n = orb.n_act
    return (orb.values[:, None, :] * orb.values[None, :, :]).reshape(n * n, -1)


def quadrature_tensor(orb: ModelOrbitalSet, kernel: KernelSpec) -> np.ndarray:
    """All (pq|rs) at once: sum_ij w_i w_j rho_pq(x_i) K(x_i - x_j) rho_rs(x_j)."""
    n = orb.n_act
    K = kernel(orb.grid[:, None] - orb.grid[None, :])
    A = _pair_densities(orb) * orb.weights
    return (A @ K @ A.T).reshape((n,) * 4)


def quadrature_eri(orb: ModelOrbitalSet, kernel: KernelSpec, p: int, q: int, r: int, s: int) -> float:
    K = kernel(orb.grid[:, None] - orb.grid[None, :])
    bra = orb.values[p] * orb.values[q] * orb.weights
    ket = orb.values[r] * orb.values[s] * orb.weights
    return float(bra @ K @ ket)


def one_body(orb: ModelOrbitalSet, omega: float = 1.0) -> np.ndarray:
    """Kinetic -1/2 d^2/dx^2 (as 1/2 <phi'|phi'>) plus a harmonic well omega^2 x^2 / 2."""
    kin = 0.5 * (orb.derivs * orb.weights) @ orb.derivs.T
    pot = (orb.values * orb.weights * (0.5 * omega ** 2 * orb.grid ** 2)) @ orb.values.T
    h = kin + pot
    return 0.5 * (h + h.T)


@dataclass
class SyntheticData:
    bare: GeometrySeries
    effective: GeometrySeries
    one_body: list
    scalars: list
    bare_kernel: KernelSpec
    eff_kernel: KernelSpec
    n_q: int


def gen_series(geometries, n_act: int, bare_kernel: KernelSpec | None = None,
               eff_kernel: KernelSpec | None = None, n_q: int = 256) -> SyntheticData:
    geoms = [float(g) for g in geometries]
    if not geoms:
        raise ValueError("empty geometry list")
    if len(set(geoms)) != len(geoms):
        raise ValueError("duplicate geometries in request")
    geoms.sort()
    bare_kernel = bare_kernel or KernelSpec.soft_coulomb(0.3)
    eff_kernel = eff_kernel or KernelSpec.yukawa(0.5, 0.3)
    bare, eff, hs, cs = [], [], [], []
    for R in geoms:
        orb = model_orbitals(n_act, R, n_q)
        h_b = OneBodyTensor(one_body(orb), Kind.BARE, R)
        h_d = OneBodyTensor(h_b.values, Kind.EFFECTIVE, R)
        c = ScalarTerm(0.0)
        vb = InteractionTensor2B(quadrature_tensor(orb, bare_kernel), Symmetry.EIGHTFOLD, Kind.BARE, R)
        vd = (vb.values if eff_kernel == bare_kernel else quadrature_tensor(orb, eff_kernel))
        vd = InteractionTensor2B(vd, Symmetry.FOURFOLD, Kind.EFFECTIVE, R)
        bare.append(SeriesEntry(R, vb, h_b, c))
        eff.append(SeriesEntry(R, vd, h_d, c))
        hs.append(h_b)
        cs.append(c)
    return SyntheticData(GeometrySeries(tuple(bare)), GeometrySeries(tuple(eff)), hs, cs,
                         bare_kernel, eff_kernel, n_q)
