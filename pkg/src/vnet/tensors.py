"""
Geometry-tagged interaction tensors, index-permutation symmetry and zero masking.

Two-body tensors are stored dense as ``values[p, q, r, s]`` in Mulliken order
(pq|rs). Two symmetry classes are supported:

* EIGHTFOLD -- real bare integrals, all 8 permutations
  (pq|rs) = (qp|rs) = (pq|sr) = (qp|sr) = (rs|pq) = (sr|pq) = (rs|qp) = (sr|qp)
* FOURFOLD -- effective integrals, the group generated by the pair swap
  (pq|rs) -> (rs|pq) and the simultaneous within-pair swap (pq|rs) -> (qp|sr)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

SYMMETRY_TOL = 1e-10


class Symmetry(enum.Enum):
    EIGHTFOLD = 8
    FOURFOLD = 4


class Kind(enum.Enum):
    BARE = "BARE"
    EFFECTIVE = "EFFECTIVE"


# Each group element is a permutation of tuple positions: image = t[perm].
_GROUPS = {
    Symmetry.FOURFOLD: (
        (0, 1, 2, 3),
        (2, 3, 0, 1),
        (1, 0, 3, 2),
        (3, 2, 1, 0),
    ),
    Symmetry.EIGHTFOLD: (
        (0, 1, 2, 3),
        (1, 0, 2, 3),
        (0, 1, 3, 2),
        (1, 0, 3, 2),
        (2, 3, 0, 1),
        (3, 2, 0, 1),
        (2, 3, 1, 0),
        (3, 2, 1, 0),
    ),
}


def group_elements(sym: Symmetry) -> tuple[tuple[int, int, int, int], ...]:
    return _GROUPS[sym]


def _check_indices(t: Sequence[int], n_act: int | None) -> tuple[int, int, int, int]:
    if len(t) != 4:
        raise ValueError(f"expected a 4-tuple of orbital indices, got {t!r}")
    t = tuple(int(i) for i in t)
    if any(i < 0 for i in t) or (n_act is not None and any(i >= n_act for i in t)):
        raise IndexError(f"orbital index out of range in {t} (n_act={n_act})")
    return t


def symmetry_orbit(key: Sequence[int], sym: Symmetry, n_act: int | None = None) -> set:
    t = _check_indices(key, n_act)
    return {tuple(t[i] for i in g) for g in _GROUPS[sym]}


def canonical_key(p: int, q: int, r: int, s: int, sym: Symmetry, n_act: int | None = None):
    """Lexicographically smallest member of the orbit of (p, q, r, s)."""
    return min(symmetry_orbit((p, q, r, s), sym, n_act))


@lru_cache(maxsize=64)
def _orbit_tables(n_act: int, sym: Symmetry):
    # codes of every tuple under every group element, then min -> canonical code
    idx = np.indices((n_act,) * 4).reshape(4, -1)
    weights = n_act ** np.arange(3, -1, -1)
    images = np.stack([weights @ idx[list(g)] for g in _GROUPS[sym]])
    canon = images.min(axis=0)
    unit_codes, orbit_index, sizes = np.unique(canon, return_inverse=True, return_counts=True)
    keys = np.stack(np.unravel_index(unit_codes, (n_act,) * 4), axis=1)
    for a in (keys, orbit_index, sizes):
        a.setflags(write=False)
    return keys, orbit_index, sizes


def canonical_unit(n_act: int, sym: Symmetry) -> np.ndarray:
    """One representative per orbit, sorted lexicographically, shape (K, 4)."""
    if n_act < 1:
        raise ValueError("n_act must be >= 1")
    return _orbit_tables(n_act, sym)[0]


def orbit_index(n_act: int, sym: Symmetry) -> np.ndarray:
    """For every flattened tuple, the row of its canonical key in canonical_unit."""
    return _orbit_tables(n_act, sym)[1]


def orbit_sizes(n_act: int, sym: Symmetry) -> np.ndarray:
    return _orbit_tables(n_act, sym)[2]


def replicate(unit_values: np.ndarray, n_act: int, sym: Symmetry) -> np.ndarray:
    """Scatter values given on the canonical unit to the full dense tensor."""
    return np.asarray(unit_values, dtype=float)[orbit_index(n_act, sym)].reshape((n_act,) * 4)


def symmetry_error(values: np.ndarray, sym: Symmetry) -> float:
    return max(float(np.max(np.abs(values - values.transpose(g)))) for g in _GROUPS[sym])


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InteractionTensor2B:
    values: np.ndarray
    symmetry: Symmetry
    kind: Kind
    geometry: float
    n_act: int = field(init=False)

    def __post_init__(self):
        v = _freeze(self.values)
        if v.ndim != 4 or len(set(v.shape)) != 1:
            raise ValueError(f"two-body tensor must be n^4, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("two-body tensor contains non-finite values")
        err = symmetry_error(v, self.symmetry)
        if err > SYMMETRY_TOL:
            raise ValueError(f"tensor violates {self.symmetry.name} symmetry (max dev {err:.3e})")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "n_act", v.shape[0])
        object.__setattr__(self, "geometry", float(self.geometry))

    def unit_values(self, sym: Symmetry | None = None) -> np.ndarray:
        keys = canonical_unit(self.n_act, sym or self.symmetry)
        return self.values[tuple(keys.T)]


@dataclass(frozen=True)
class OneBodyTensor:
    values: np.ndarray
    kind: Kind
    geometry: float
    n_act: int = field(init=False)

    def __post_init__(self):
        v = _freeze(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"one-body tensor must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("one-body tensor contains non-finite values")
        if np.max(np.abs(v - v.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("one-body tensor is not symmetric")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "n_act", v.shape[0])


@dataclass(frozen=True)
class ScalarTerm:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("scalar term must be finite")


@dataclass(frozen=True)
class SeriesEntry:
    geometry: float
    two_body: InteractionTensor2B
    one_body: OneBodyTensor | None = None
    scalar: ScalarTerm | None = None


@dataclass(frozen=True)
class GeometrySeries:
    entries: tuple[SeriesEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        geoms = [e.geometry for e in entries]
        if any(b <= a for a, b in zip(geoms, geoms[1:])):
            raise ValueError("geometries must be strictly increasing")
        shapes = {(e.two_body.n_act, e.two_body.symmetry, e.two_body.kind) for e in entries}
        if len(shapes) > 1:
            raise ValueError(f"mixed n_act/symmetry in series: {shapes}")

    @classmethod
    def from_tensors(cls, tensors: Iterable[InteractionTensor2B], one_body=None, scalars=None):
        tensors = list(tensors)
        one_body = list(one_body) if one_body is not None else [None] * len(tensors)
        scalars = list(scalars) if scalars is not None else [None] * len(tensors)
        entries = [SeriesEntry(t.geometry, t, h, c) for t, h, c in zip(tensors, one_body, scalars)]
        return cls(tuple(sorted(entries, key=lambda e: e.geometry)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def geometries(self) -> list[float]:
        return [e.geometry for e in self.entries]

    @property
    def n_act(self) -> int:
        return self.entries[0].two_body.n_act

    def at(self, geometry: float, tol: float = 1e-9) -> SeriesEntry:
        for e in self.entries:
            if abs(e.geometry - geometry) <= tol:
                return e
        raise KeyError(f"no entry at geometry {geometry}")

    def subset(self, geometries: Iterable[float]) -> "GeometrySeries":
        return GeometrySeries(tuple(self.at(g) for g in sorted(geometries)))


@dataclass(frozen=True)
class IndexMask:
    """Partition of the FOURFOLD canonical unit into retained and masked keys."""

    n_act: int
    canonical_keys: np.ndarray
    masked: np.ndarray  # bool per canonical key

    def __post_init__(self):
        keys = np.array(self.canonical_keys, dtype=np.int64)
        masked = np.array(self.masked, dtype=bool)
        if keys.shape != (len(masked), 4):
            raise ValueError("mask flags must align with canonical keys")
        keys.setflags(write=False)
        masked.setflags(write=False)
        object.__setattr__(self, "canonical_keys", keys)
        object.__setattr__(self, "masked", masked)

    @classmethod
    def none_masked(cls, n_act: int) -> "IndexMask":
        keys = canonical_unit(n_act, Symmetry.FOURFOLD)
        return cls(n_act, keys, np.zeros(len(keys), dtype=bool))

    @property
    def retained(self) -> np.ndarray:
        return ~self.masked

    @property
    def retained_keys(self) -> np.ndarray:
        return self.canonical_keys[~self.masked]

    @property
    def masked_keys(self) -> np.ndarray:
        return self.canonical_keys[self.masked]

    def full_mask(self) -> np.ndarray:
        """Dense boolean n^4 array, True where the entry is masked."""
        return self.masked[orbit_index(self.n_act, Symmetry.FOURFOLD)].reshape((self.n_act,) * 4)


def build_zero_mask(series: GeometrySeries, eps1: float = 1e-5, eps2: float = 1e-5) -> IndexMask:
    """Mask FOURFOLD canonical keys whose bare values are negligible at every geometry.

    A key is masked when mean_i |v(R_i)| < eps1 and std_i v(R_i) < eps2
    (population standard deviation over geometries).
    """
    if len(series) == 0:
        raise ValueError("cannot build a zero mask from an empty series")
    n = series.n_act
    keys = canonical_unit(n, Symmetry.FOURFOLD)
    stack = np.stack([e.two_body.values[tuple(keys.T)] for e in series])
    mean_abs = np.abs(stack).mean(axis=0)
    std = stack.std(axis=0)
    return IndexMask(n, keys, (mean_abs < eps1) & (std < eps2))


def symmetrize(tensor: InteractionTensor2B | np.ndarray, sym: Symmetry | None = None):
    """Replace every entry by its orbit average.

    Orbits whose entries are already equal are copied through untouched so the
    projection is bit-exact on symmetric input.
    """
    if isinstance(tensor, InteractionTensor2B):
        out = symmetrize(tensor.values, sym or tensor.symmetry)
        return InteractionTensor2B(out, sym or tensor.symmetry, tensor.kind, tensor.geometry)
    if sym is None:
        raise ValueError("symmetry class required for raw arrays")
    values = np.asarray(tensor, dtype=float)
    n = values.shape[0]
    flat = values.reshape(-1)
    oi = orbit_index(n, sym)
    k = len(orbit_sizes(n, sym))
    mean = np.bincount(oi, weights=flat, minlength=k) / orbit_sizes(n, sym)
    hi = np.full(k, -np.inf)
    lo = np.full(k, np.inf)
    np.maximum.at(hi, oi, flat)
    np.minimum.at(lo, oi, flat)
    keys = canonical_unit(n, sym)
    rep = values[tuple(keys.T)]
    unit = np.where(hi == lo, rep, mean)
    return unit[oi].reshape(values.shape)
