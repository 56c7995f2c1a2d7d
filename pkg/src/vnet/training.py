"""Loss, exact gradients, Adam with cosine decay, and the pretrain / finetune phases."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .netmodel import (
    KERNEL_NAME,
    ModelConfig,
    Phase,
    VNetModel,
    _forward_batch,
    backward_batch,
    init_model,
    with_effective_kernel,
)
from .tensors import GeometrySeries, IndexMask, Kind


class TrainPhase(enum.Enum):
    PRETRAIN = "PRETRAIN"
    FINETUNE = "FINETUNE"


_DEFAULTS = {
    TrainPhase.PRETRAIN: dict(epochs=5000, lr0=1e-3),
    TrainPhase.FINETUNE: dict(epochs=500, lr0=2e-4),
}


@dataclass(frozen=True)
class TrainConfig:
    phase: TrainPhase = TrainPhase.PRETRAIN
    epochs: int | None = None
    lr0: float | None = None
    batch_size: int = 4096
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "COSINE"

    def __post_init__(self):
        phase = TrainPhase(self.phase)
        object.__setattr__(self, "phase", phase)
        if self.epochs is None:
            object.__setattr__(self, "epochs", _DEFAULTS[phase]["epochs"])
        if self.lr0 is None:
            object.__setattr__(self, "lr0", _DEFAULTS[phase]["lr0"])
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.schedule != "COSINE":
            raise ValueError(f"unsupported schedule {self.schedule!r}")

    def to_dict(self) -> dict:
        return dict(phase=self.phase.value, epochs=self.epochs, lr0=self.lr0,
                    batch_size=self.batch_size, seed=self.seed, beta1=self.beta1,
                    beta2=self.beta2, eps=self.eps, schedule=self.schedule)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        keys = {"phase", "epochs", "lr0", "batch_size", "seed", "beta1", "beta2", "eps", "schedule"}
        return cls(**{k: v for k, v in d.items() if k in keys})


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimizerState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


@dataclass(frozen=True)
class LossReport:
    epoch: int
    train_mse: float
    heldout_mse: float | None = None


@dataclass(frozen=True)
class SampleSet:
    """Training samples on canonical keys: one row per (geometry, key)."""

    geometry: np.ndarray
    keys: np.ndarray
    target: np.ndarray
    phase: Phase

    def __len__(self):
        return len(self.target)

    def take(self, idx) -> "SampleSet":
        return SampleSet(self.geometry[idx], self.keys[idx], self.target[idx], self.phase)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (np.ascontiguousarray(self.geometry, dtype="<f8"),
                  np.ascontiguousarray(self.keys, dtype="<i8"),
                  np.ascontiguousarray(self.target, dtype="<f8")):
            h.update(a.tobytes())
        return h.hexdigest()


def build_samples(series: GeometrySeries, mask: IndexMask, phase: Phase | None = None) -> SampleSet:
    """Collect retained FOURFOLD canonical entries of every tensor, geometry-major."""
    if phase is None:
        phase = Phase.BARE if series.entries[0].two_body.kind is Kind.BARE else Phase.EFFECTIVE
    keys = mask.retained_keys
    if len(series) == 0 or len(keys) == 0:
        raise ValueError("no training samples: empty series or fully masked index set")
    if series.n_act != mask.n_act:
        raise ValueError("mask and series disagree on n_act")
    geoms, all_keys, targets = [], [], []
    for e in series:
        geoms.append(np.full(len(keys), e.geometry))
        all_keys.append(keys)
        targets.append(e.two_body.values[tuple(keys.T)])
    return SampleSet(np.concatenate(geoms), np.concatenate(all_keys), np.concatenate(targets), phase)


def loss_mse(model: VNetModel, phase: Phase, samples: SampleSet) -> float:
    if len(samples) == 0:
        raise ValueError("loss of an empty sample set")
    pred = _forward_batch(model, phase, samples.geometry, samples.keys)[0]
    return float(np.mean((pred - samples.target) ** 2))


def backward(model: VNetModel, phase: Phase, batch: SampleSet) -> tuple[float, dict]:
    """Mean-squared loss on ``batch`` and its gradient for theta and the phase kernel."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    pred, cache = _forward_batch(model, phase, batch.geometry, batch.keys)
    resid = pred - batch.target
    grads = backward_batch(model, phase, cache, 2.0 * resid / len(batch))
    return float(np.mean(resid ** 2)), grads


def cosine_lr(t: int, T: int, lr0: float) -> float:
    if t < 0 or t > T:
        raise ValueError(f"step {t} outside schedule horizon [0, {T}]")
    if T == 0:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / T))


def adam_step(state: OptimizerState, params: dict, grads: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over the arrays named in ``grads``."""
    t = state.t + 1
    m, v, new = dict(state.m), dict(state.v), dict(params)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, g in grads.items():
        if g.shape != params[k].shape or m[k].shape != g.shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params[k].shape}")
        m[k] = beta1 * m[k] + (1.0 - beta1) * g
        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g
        new[k] = params[k] - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
    return OptimizerState(m, v, t), new


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def n_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


@dataclass
class FitState:
    """Everything needed to continue an interrupted optimization bit-for-bit."""

    params: dict
    opt: OptimizerState
    epoch: int = 0
    history: list = field(default_factory=list)


def fit(params: dict, trainable: list[str], loss_grad: Callable, loss_eval: Callable,
        n_samples: int, config: TrainConfig, state: FitState | None = None,
        heldout_eval: Callable | None = None, stop_epoch: int | None = None,
        callback: Callable | None = None) -> FitState:
    """Mini-batch Adam over ``config.epochs`` epochs with a cosine schedule.

    ``loss_grad(params, idx) -> (loss, grads)`` evaluates a batch of sample rows;
    ``loss_eval(params) -> mse`` scores the full training set after each epoch.
    The schedule horizon is the total number of optimizer steps in the phase.
    """
    if state is None:
        state = FitState(dict(params), OptimizerState.zeros_like({k: params[k] for k in trainable}))
    T = config.epochs * n_batches(n_samples, config.batch_size)
    stop = config.epochs if stop_epoch is None else min(stop_epoch, config.epochs)
    p, opt = state.params, state.opt
    history = list(state.history)
    for epoch in range(state.epoch, stop):
        for idx in epoch_batches(n_samples, config.batch_size, config.seed, epoch):
            _, grads = loss_grad(p, idx)
            grads = {k: grads[k] for k in trainable}
            lr = cosine_lr(opt.t, T, config.lr0)
            opt, p = adam_step(opt, p, grads, lr, config.beta1, config.beta2, config.eps)
        report = LossReport(epoch + 1, loss_eval(p), heldout_eval(p) if heldout_eval else None)
        history.append(report)
        if callback is not None:
            callback(report)
    return FitState(p, opt, max(state.epoch, stop), history)


@dataclass
class TrainResult:
    model: VNetModel
    history: list
    state: FitState
    config: TrainConfig
    samples_digest: str = ""


def _vnet_fit(model: VNetModel, phase: Phase, samples: SampleSet, config: TrainConfig,
              heldout: SampleSet | None, state: FitState | None, stop_epoch, callback) -> FitState:
    cfg = model.config
    trainable = list(model.theta) + [KERNEL_NAME[phase]]

    def as_model(p):
        return VNetModel.from_params(cfg, p)

    def loss_grad(p, idx):
        return backward(as_model(p), phase, samples.take(idx))

    def loss_eval(p):
        return loss_mse(as_model(p), phase, samples)

    held = (lambda p: loss_mse(as_model(p), phase, heldout)) if heldout is not None and len(heldout) else None
    return fit(model.params(), trainable, loss_grad, loss_eval, len(samples), config,
               state=state, heldout_eval=held, stop_epoch=stop_epoch, callback=callback)


def pretrain(bare: GeometrySeries, mask: IndexMask, config: TrainConfig,
             model_config: ModelConfig | None = None, model: VNetModel | None = None,
             heldout: SampleSet | None = None, state: FitState | None = None,
             stop_epoch: int | None = None, callback=None) -> TrainResult:
    """Fit theta and W^B to bare tensors on the retained FOURFOLD canonical keys."""
    samples = build_samples(bare, mask, Phase.BARE)
    if model is None:
        model = init_model(model_config or ModelConfig(bare.n_act), config.seed)
    st = _vnet_fit(model, Phase.BARE, samples, config, heldout, state, stop_epoch, callback)
    return TrainResult(VNetModel.from_params(model.config, st.params), st.history, st, config,
                       samples.digest())


def finetune(model: VNetModel, effective: GeometrySeries, mask: IndexMask, config: TrainConfig,
             heldout: SampleSet | None = None, state: FitState | None = None,
             stop_epoch: int | None = None, callback=None) -> TrainResult:
    """Refine theta and fit W^D on effective tensors at the reference geometries.

    W^D starts as a copy of W^B unless ``model`` already carries one; W^B is frozen.
    """
    if len(effective) == 0:
        raise ValueError("finetune needs at least one reference geometry")
    samples = build_samples(effective, mask, Phase.EFFECTIVE)
    if model.kernel_eff is None:
        model = with_effective_kernel(model)
    st = _vnet_fit(model, Phase.EFFECTIVE, samples, config, heldout, state, stop_epoch, callback)
    return TrainResult(VNetModel.from_params(model.config, st.params), st.history, st, config,
                       samples.digest())


def history_csv(history: list) -> str:
    lines = ["epoch,train_mse,heldout_mse"]
    for r in history:
        held = "" if r.heldout_mse is None else repr(float(r.heldout_mse))
        lines.append(f"{r.epoch},{float(r.train_mse)!r},{held}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GradCheckReport:
    worst: dict  # "<phase>/<array>" -> max relative error over all batches
    n_batches: int

    @property
    def max_error(self) -> float:
        return max(self.worst.values())


def grad_check(config: ModelConfig | None = None, n_batches: int = 20, batch_size: int = 6,
               h: float = 1e-5, seed: int = 0, corrupt: bool = False, order: int = 2) -> GradCheckReport:
    """Compare analytic gradients with central differences on random batches.

    ``order`` 2 is the plain two-point difference; ``order`` 4 the five-point
    stencil, which tolerates a larger step and so suffers less cancellation.

    The error of one array is max|num - ana| / max|num| (norm-relative, so
    near-zero components do not blow up the ratio). ``corrupt`` perturbs the
    analytic gradient and exists only as a negative control.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    config = config or ModelConfig(3, ell=8, hidden=10, depth=3)
    rng = np.random.default_rng(seed)
    worst: dict = {}
    for b in range(n_batches):
        model = with_effective_kernel(init_model(config, seed + b))
        # break the W^D = W^B coincidence so both kernels are exercised independently
        model.kernel_eff.packed[:] += rng.uniform(-0.1, 0.1, size=model.kernel_eff.packed.shape) / config.ell
        for phase in Phase:
            batch = SampleSet(rng.uniform(0.5, 3.0, size=batch_size),
                              rng.integers(0, config.n_act, size=(batch_size, 4)),
                              rng.normal(size=batch_size), phase)
            _, grads = backward(model, phase, batch)
            P = {k: v.copy() for k, v in model.params().items()}
            for name, g in grads.items():
                if corrupt:
                    g = g * 1.01
                flat = P[name].reshape(-1)
                num = np.empty(flat.size)
                for j in range(flat.size):
                    old = flat[j]
                    f = []
                    for step in ((2.0, 1.0, -1.0, -2.0) if order == 4 else (1.0, -1.0)):
                        flat[j] = old + step * h
                        f.append(loss_mse(VNetModel.from_params(config, P), phase, batch))
                    flat[j] = old
                    if order == 4:
                        num[j] = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h)
                    else:
                        num[j] = (f[0] - f[1]) / (2.0 * h)
                scale = max(np.max(np.abs(num)), 1e-300)
                err = float(np.max(np.abs(num - g.reshape(-1))) / scale)
                key = f"{phase.value}/{name}"
                worst[key] = max(worst.get(key, 0.0), err)
    return GradCheckReport(worst, n_batches)
