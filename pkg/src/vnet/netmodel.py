"""
VNet: an orbital network phi(i, R, gamma) contracted through a symmetric kernel.

A two-body element is modelled as

    (pq|rs) = [phi_p (.) phi_q]^T W [phi_r (.) phi_s]

with (.) the elementwise product. The bare phase uses gamma = 0 for all four
orbitals and the kernel W^B; the effective phase uses the gamma pattern
(0, 1, 0, 1) and the kernel W^D.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import mlp
from .tensors import (
    IndexMask,
    InteractionTensor2B,
    Kind,
    Symmetry,
    canonical_unit,
    replicate,
)


class Phase(enum.Enum):
    BARE = "BARE"
    EFFECTIVE = "EFFECTIVE"


PHASE_GAMMAS = {Phase.BARE: (0, 0, 0, 0), Phase.EFFECTIVE: (0, 1, 0, 1)}
KERNEL_NAME = {Phase.BARE: "kernel_bare", Phase.EFFECTIVE: "kernel_eff"}


class MissingKernelError(KeyError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_act: int
    ell: int = 300
    hidden: int = 200
    depth: int = 4

    def __post_init__(self):
        if self.n_act < 1 or self.ell < 1 or self.hidden < 1 or self.depth < 2:
            raise ValueError(f"invalid model config {self}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_act + 2] + [self.hidden] * (self.depth - 1) + [self.ell]


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric ell x ell matrix stored as its packed upper triangle (row-major)."""

    packed: np.ndarray
    phase: Phase = Phase.BARE
    ell: int = field(init=False)

    def __post_init__(self):
        packed = np.array(self.packed, dtype=float).reshape(-1)
        m = len(packed)
        ell = int(round((np.sqrt(8 * m + 1) - 1) / 2))
        if ell * (ell + 1) // 2 != m:
            raise ValueError(f"packed length {m} is not triangular")
        object.__setattr__(self, "packed", packed)
        object.__setattr__(self, "ell", ell)

    @classmethod
    def from_matrix(cls, W, phase: Phase = Phase.BARE) -> "KernelMatrix":
        W = np.asarray(W, dtype=float)
        return cls(W[np.triu_indices(W.shape[0])], phase)

    def matrix(self) -> np.ndarray:
        return unpack_symmetric(self.packed, self.ell)


def unpack_symmetric(packed: np.ndarray, ell: int) -> np.ndarray:
    iu = np.triu_indices(ell)
    W = np.empty((ell, ell))
    W[iu] = packed
    W[iu[1], iu[0]] = packed
    return W


def pack_gradient(G: np.ndarray) -> np.ndarray:
    """Packed gradient of a symmetric parameterization: off-diagonals collect both mirrors."""
    iu = np.triu_indices(G.shape[0])
    S = G + G.T
    S[np.diag_indices_from(S)] = np.diag(G)
    return S[iu]


@dataclass
class VNetModel:
    config: ModelConfig
    theta: dict  # W1..WL, b1..bL
    kernel_bare: KernelMatrix
    kernel_eff: KernelMatrix | None = None

    def __post_init__(self):
        sizes = self.config.layer_sizes
        for s, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            if self.theta[f"W{s}"].shape != (fi, fo) or self.theta[f"b{s}"].shape != (fo,):
                raise ValueError(f"layer {s} shape does not match {self.config}")
        for k in (self.kernel_bare, self.kernel_eff):
            if k is not None and k.ell != self.config.ell:
                raise ValueError("kernel dimension does not match config.ell")

    def kernel(self, phase: Phase) -> KernelMatrix:
        k = self.kernel_bare if phase is Phase.BARE else self.kernel_eff
        if k is None:
            raise MissingKernelError(f"model has no {phase.value} kernel")
        return k

    @property
    def phases(self) -> list[Phase]:
        return [Phase.BARE] + ([Phase.EFFECTIVE] if self.kernel_eff is not None else [])

    def params(self) -> dict:
        """Flat name -> array view of every stored parameter."""
        out = dict(self.theta)
        out["kernel_bare"] = self.kernel_bare.packed
        if self.kernel_eff is not None:
            out["kernel_eff"] = self.kernel_eff.packed
        return out

    @classmethod
    def from_params(cls, config: ModelConfig, params: dict) -> "VNetModel":
        theta = {k: np.array(v, dtype=float) for k, v in params.items() if not k.startswith("kernel")}
        eff = params.get("kernel_eff")
        return cls(
            config,
            theta,
            KernelMatrix(params["kernel_bare"], Phase.BARE),
            KernelMatrix(eff, Phase.EFFECTIVE) if eff is not None else None,
        )

    def copy(self) -> "VNetModel":
        return VNetModel.from_params(self.config, {k: v.copy() for k, v in self.params().items()})


def encode_input(i: int, R: float, gamma: int, n_act: int) -> np.ndarray:
    """Input layout [R, gamma, onehot(i)]."""
    if not 0 <= i < n_act:
        raise IndexError(f"orbital index {i} out of range for n_act={n_act}")
    x = np.zeros(n_act + 2)
    x[0] = R
    x[1] = gamma
    x[2 + i] = 1.0
    return x


def orbital_forward(theta: dict, x: np.ndarray) -> np.ndarray:
    return mlp.forward(theta, np.atleast_2d(x))[0].reshape(np.shape(x)[:-1] + (-1,))


def param_count(config: ModelConfig, n_kernels: int = 1) -> int:
    sizes = config.layer_sizes
    mlp_count = sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:]))
    return mlp_count + n_kernels * config.ell * (config.ell + 1) // 2


def init_params(config: ModelConfig, seed: int) -> tuple[dict, KernelMatrix]:
    rng = np.random.default_rng(seed)
    theta = mlp.glorot_init(config.layer_sizes, rng)
    ell = config.ell
    packed = rng.uniform(-1.0 / ell, 1.0 / ell, size=ell * (ell + 1) // 2)
    return theta, KernelMatrix(packed, Phase.BARE)


def init_model(config: ModelConfig, seed: int) -> VNetModel:
    theta, kb = init_params(config, seed)
    return VNetModel(config, theta, kb)


class _Features:
    """Orbital features for a batch, evaluated once per distinct (i, R, gamma)."""

    def __init__(self, theta: dict, n_act: int, geometry: np.ndarray, phase: Phase):
        geoms, gi = np.unique(np.asarray(geometry, dtype=float), return_inverse=True)
        self.n_act = n_act
        self.n_gamma = 2 if phase is Phase.EFFECTIVE else 1
        self.gi = gi.reshape(-1)
        rows = len(geoms) * self.n_gamma * n_act
        X = np.zeros((rows, n_act + 2))
        g, c, i = np.unravel_index(np.arange(rows), (len(geoms), self.n_gamma, n_act))
        X[:, 0] = geoms[g]
        X[:, 1] = c
        X[np.arange(rows), 2 + i] = 1.0
        self.phi, self.cache = mlp.forward(theta, X)

    def rows(self, orbitals: np.ndarray, gamma: int) -> np.ndarray:
        return (self.gi * self.n_gamma + gamma) * self.n_act + orbitals


def _structural_representative(keys: np.ndarray, phase: Phase) -> np.ndarray:
    """Map each key to a fixed member of its structural orbit.

    u^T W v and v^T W u agree mathematically but not in rounding, so evaluating
    every orbit member at one representative makes the invariance bitwise.
    BARE pairs are also sorted (the elementwise product commutes).
    """
    keys = keys.copy()
    if phase is Phase.BARE:
        keys[:, :2].sort(axis=1)
        keys[:, 2:].sort(axis=1)
    swap = (keys[:, 2] < keys[:, 0]) | ((keys[:, 2] == keys[:, 0]) & (keys[:, 3] < keys[:, 1]))
    keys[swap] = keys[swap][:, [2, 3, 0, 1]]
    return keys


def _forward_batch(model: VNetModel, phase: Phase, geometry, keys):
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 4)
    if keys.size and (keys.min() < 0 or keys.max() >= model.config.n_act):
        raise IndexError("orbital index out of range")
    keys = _structural_representative(keys, phase)
    W = model.kernel(phase).matrix()
    feats = _Features(model.theta, model.config.n_act, np.broadcast_to(geometry, len(keys)), phase)
    gam = PHASE_GAMMAS[phase]
    rows = [feats.rows(keys[:, j], gam[j]) for j in range(4)]
    a, b, c, d = (feats.phi[r] for r in rows)
    u = a * b
    v = c * d
    Wv = v @ W
    pred = np.einsum("ij,ij->i", u, Wv)
    return pred, (feats, rows, (a, b, c, d), u, v, Wv, W)


def eval_batch(model: VNetModel, phase: Phase, geometry, keys) -> np.ndarray:
    return _forward_batch(model, phase, geometry, keys)[0]


def eval_element(model: VNetModel, phase: Phase, p: int, q: int, r: int, s: int, R: float) -> float:
    return float(eval_batch(model, phase, [R], [(p, q, r, s)])[0])


def backward_batch(model: VNetModel, phase: Phase, cache, dpred: np.ndarray) -> dict:
    """Gradients of sum_i dpred_i * pred_i w.r.t. theta and the phase kernel."""
    feats, rows, (a, b, c, d), u, v, Wv, W = cache
    G = (u * dpred[:, None]).T @ v
    du = dpred[:, None] * Wv
    dv = dpred[:, None] * (u @ W)
    dphi = scatter_rows(np.concatenate(rows), np.concatenate([du * b, du * a, dv * d, dv * c]),
                        len(feats.phi))
    grads = mlp.backward(model.theta, feats.cache, dphi)
    grads[KERNEL_NAME[phase]] = pack_gradient(G)
    return grads


def scatter_rows(index: np.ndarray, contrib: np.ndarray, n_rows: int) -> np.ndarray:
    """out[i] = sum of contrib rows with index i, accumulated in input order."""
    S = sparse.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))),
                          shape=(n_rows, len(index)))
    return S @ contrib


def _pair_matrix(model: VNetModel, phase: Phase, R: float) -> np.ndarray:
    """Dense (n^2, n^2) matrix of pair-feature contractions at one geometry."""
    n = model.config.n_act
    W = model.kernel(phase).matrix()
    feats = _Features(model.theta, n, np.array([R]), phase)
    phi0 = feats.phi[:n]
    phi1 = feats.phi[n:2 * n] if phase is Phase.EFFECTIVE else phi0
    U = (phi0[:, None, :] * phi1[None, :, :]).reshape(n * n, -1)
    return U @ W @ U.T


def eval_tensor(model: VNetModel, phase: Phase, R: float, mask: IndexMask) -> InteractionTensor2B:
    """Predict the full tensor at geometry R.

    Values are computed at canonical keys and copied to the rest of each orbit,
    so the output is exactly class-symmetric; masked entries are exactly zero.
    """
    n = model.config.n_act
    if mask.n_act != n:
        raise ValueError(f"mask n_act {mask.n_act} != model n_act {n}")
    full = _pair_matrix(model, phase, R).reshape((n,) * 4)
    sym = Symmetry.EIGHTFOLD if phase is Phase.BARE else Symmetry.FOURFOLD
    keys = canonical_unit(n, sym)
    unit = full[tuple(keys.T)]
    dense_mask = mask.full_mask().reshape(-1)
    # a canonical key of the requested class is masked iff its FOURFOLD orbit is
    unit = np.where(dense_mask[np.ravel_multi_index(tuple(keys.T), (n,) * 4)], 0.0, unit)
    values = replicate(unit, n, sym)
    kind = Kind.BARE if phase is Phase.BARE else Kind.EFFECTIVE
    return InteractionTensor2B(values, sym, kind, R)


def with_effective_kernel(model: VNetModel, kernel: KernelMatrix | None = None) -> VNetModel:
    """Copy of ``model`` whose W^D starts as a copy of W^B (or ``kernel``)."""
    out = model.copy()
    src = kernel if kernel is not None else model.kernel_bare
    out.kernel_eff = KernelMatrix(src.packed.copy(), Phase.EFFECTIVE)
    return out


__all__ = [
    "ModelConfig", "KernelMatrix", "VNetModel", "Phase", "MissingKernelError",
    "encode_input", "orbital_forward", "eval_element", "eval_batch", "eval_tensor",
    "param_count", "init_params", "init_model", "with_effective_kernel",
]
