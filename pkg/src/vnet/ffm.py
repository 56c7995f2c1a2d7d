"""Coordinate MLP with random Fourier features, mapping (p, q, r, s, R) to a tensor value.

The frequency matrix B is drawn once from the seed and stays fixed; only the
MLP behind the feature map is trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .netmodel import Phase
from .tensors import GeometrySeries, IndexMask, InteractionTensor2B, Kind, Symmetry, canonical_unit, replicate
from .training import FitState, SampleSet, TrainConfig, TrainPhase, build_samples, fit


@dataclass(frozen=True)
class FFMConfig:
    n_act: int
    n_freq: int = 256
    sigma_f: float = 10.0
    hidden: int = 200
    n_hidden: int = 3
    seed: int = 0
    epochs: int = 200
    lr0: float = 1e-3
    batch_size: int = 4096

    def __post_init__(self):
        if self.n_freq < 1:
            raise ValueError("n_freq must be >= 1")
        if not self.sigma_f > 0:
            raise ValueError("sigma_f must be positive")
        if self.n_act < 1 or self.hidden < 1 or self.n_hidden < 1:
            raise ValueError(f"invalid FFM config {self}")

    @property
    def layer_sizes(self) -> list[int]:
        return [2 * self.n_freq] + [self.hidden] * self.n_hidden + [1]

    def train_config(self) -> TrainConfig:
        return TrainConfig(TrainPhase.FINETUNE, epochs=self.epochs, lr0=self.lr0,
                           batch_size=self.batch_size, seed=self.seed)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FFMParams:
    config: FFMConfig
    B: np.ndarray  # (n_freq, 5), frozen
    theta: dict

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.shape != (self.config.n_freq, 5):
            raise ValueError(f"frequency matrix shape {B.shape} != ({self.config.n_freq}, 5)")
        B.setflags(write=False)
        self.B = B

    def params(self) -> dict:
        return {"B": self.B, **self.theta}

    @classmethod
    def from_params(cls, config: FFMConfig, params: dict) -> "FFMParams":
        return cls(config, params["B"], {k: np.asarray(v, dtype=float) for k, v in params.items() if k != "B"})


def init_ffm(config: FFMConfig) -> FFMParams:
    rng = np.random.default_rng(config.seed)
    B = rng.standard_normal((config.n_freq, 5)) * config.sigma_f
    return FFMParams(config, B, mlp.glorot_init(config.layer_sizes, rng))


def scaled_coords(keys, geometry, n_act: int) -> np.ndarray:
    """(p, q, r, s) / (n_act - 1) next to the raw geometry."""
    keys = np.asarray(keys, dtype=float).reshape(-1, 4)
    scale = max(n_act - 1, 1)
    return np.column_stack([keys / scale, np.broadcast_to(np.asarray(geometry, dtype=float), len(keys))])


def fourier_features(coords, B) -> np.ndarray:
    """[cos(2 pi B v); sin(2 pi B v)] for each row v of ``coords``."""
    coords = np.asarray(coords, dtype=float)
    z = 2.0 * np.pi * (np.atleast_2d(coords) @ np.asarray(B).T)
    out = np.concatenate([np.cos(z), np.sin(z)], axis=-1)
    return out[0] if coords.ndim == 1 else out


def ffm_predict(params: FFMParams, keys, geometry) -> np.ndarray:
    X = fourier_features(scaled_coords(keys, geometry, params.config.n_act), params.B)
    return mlp.forward(params.theta, X)[0][:, 0]


def _loss_grad(params: FFMParams, batch: SampleSet):
    X = fourier_features(scaled_coords(batch.keys, batch.geometry, params.config.n_act), params.B)
    out, cache = mlp.forward(params.theta, X)
    resid = out[:, 0] - batch.target
    grads = mlp.backward(params.theta, cache, (2.0 * resid / len(batch))[:, None])
    return float(np.mean(resid ** 2)), grads


def ffm_mse(params: FFMParams, samples: SampleSet) -> float:
    pred = ffm_predict(params, samples.keys, samples.geometry)
    return float(np.mean((pred - samples.target) ** 2))


@dataclass
class FFMResult:
    params: FFMParams
    history: list
    state: FitState
    samples_digest: str


def ffm_train(effective: GeometrySeries, mask: IndexMask, config: FFMConfig,
              heldout: SampleSet | None = None, init: FFMParams | None = None,
              state: FitState | None = None, stop_epoch: int | None = None,
              callback=None) -> FFMResult:
    """Adam + cosine decay on the same retained canonical samples VNet finetuning sees."""
    if len(effective) == 0:
        raise ValueError("ffm_train needs at least one reference geometry")
    if effective.n_act != config.n_act:
        raise ValueError("series and config disagree on n_act")
    samples = build_samples(effective, mask, Phase.EFFECTIVE)
    p0 = init if init is not None else init_ffm(config)
    trainable = list(p0.theta)

    def wrap(p):
        return FFMParams.from_params(config, p)

    def loss_grad(p, idx):
        return _loss_grad(wrap(p), samples.take(idx))

    held = (lambda p: ffm_mse(wrap(p), heldout)) if heldout is not None and len(heldout) else None
    st = fit(p0.params(), trainable, loss_grad, lambda p: ffm_mse(wrap(p), samples), len(samples),
             config.train_config(), state=state, heldout_eval=held, stop_epoch=stop_epoch,
             callback=callback)
    return FFMResult(wrap(st.params), st.history, st, samples.digest())


def ffm_eval_tensor(params: FFMParams, R: float, mask: IndexMask) -> InteractionTensor2B:
    """Full FOURFOLD tensor at R: canonical keys evaluated, orbits replicated, masked keys zero."""
    n = params.config.n_act
    if mask.n_act != n:
        raise ValueError(f"mask n_act {mask.n_act} != model n_act {n}")
    keys = canonical_unit(n, Symmetry.FOURFOLD)
    unit = np.where(mask.masked, 0.0, ffm_predict(params, keys, R))
    return InteractionTensor2B(replicate(unit, n, Symmetry.FOURFOLD), Symmetry.FOURFOLD, Kind.EFFECTIVE, R)
