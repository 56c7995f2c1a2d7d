"""Versioned plain-text checkpoints.

Layout::

    #vnet-checkpoint
    format_version=1
    <key>=<json value>          (model_kind, config, seed, phases, train_config, ...)
    @array <name> <d0> <d1> ...
    <one %.16e value per line>
    ...
    @end

Optimizer moments are stored as arrays named ``adam_m/<param>`` and ``adam_v/<param>``;
model parameters as ``param/<name>``. A missing ``@end`` marks a truncated file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .training import FitState, LossReport, OptimizerState, TrainConfig

FORMAT_VERSION = 1
MAGIC = "#vnet-checkpoint"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_kind: str
    config: dict
    params: dict
    meta: dict = field(default_factory=dict)
    state: FitState | None = None
    train_config: TrainConfig | None = None


def _history_to_json(history) -> list:
    return [[r.epoch, r.train_mse, r.heldout_mse] for r in history]


def _history_from_json(rows) -> list:
    return [LossReport(int(e), float(t), None if h is None else float(h)) for e, t, h in rows]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = {"format_version": FORMAT_VERSION, "model_kind": ckpt.model_kind, "config": ckpt.config}
    header.update(ckpt.meta)
    arrays = {f"param/{k}": v for k, v in ckpt.params.items()}
    if ckpt.train_config is not None:
        header["train_config"] = ckpt.train_config.to_dict()
    if ckpt.state is not None:
        st = ckpt.state
        header["optimizer_t"] = st.opt.t
        header["epoch"] = st.epoch
        header["history"] = _history_to_json(st.history)
        header["trainable"] = list(st.opt.m)
        arrays.update({f"adam_m/{k}": v for k, v in st.opt.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in st.opt.v.items()})
        # live parameters may differ from ckpt.params only in naming; keep the state's copy
        arrays.update({f"param/{k}": v for k, v in st.params.items()})
    lines = [MAGIC, f"format_version={FORMAT_VERSION}"]
    for k, v in header.items():
        if k != "format_version":
            lines.append(f"{k}={json.dumps(v)}")
    for name, a in arrays.items():
        a = np.asarray(a, dtype=float)
        lines.append("@array " + " ".join([name] + [str(d) for d in a.shape]))
        lines.extend(f"{x:.16e}" for x in a.reshape(-1))
    lines.append("@end")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_checkpoint(path, expect_kind: str | None = None) -> Checkpoint:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if not lines or lines[-1] != "@end":
        raise CheckpointError(f"{path}: truncated checkpoint (no @end)")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("@"):
        key, sep, value = lines[i].partition("=")
        if not sep:
            raise CheckpointError(f"{path}: malformed header line {i + 1}")
        try:
            header[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: bad header value for {key}") from exc
        i += 1
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {header.get('format_version')}")
    arrays = {}
    while i < len(lines) - 1:
        tok = lines[i].split()
        if not tok or tok[0] != "@array" or len(tok) < 2:
            raise CheckpointError(f"{path}: expected @array at line {i + 1}")
        name, shape = tok[1], tuple(int(d) for d in tok[2:])
        size = int(np.prod(shape, dtype=np.int64))
        body = lines[i + 1:i + 1 + size]
        if len(body) != size or any(b.startswith("@") for b in body):
            raise CheckpointError(f"{path}: array {name} truncated")
        try:
            arrays[name] = np.array(body, dtype=float).reshape(shape)
        except ValueError as exc:
            raise CheckpointError(f"{path}: array {name} has non-numeric data") from exc
        i += 1 + size
    kind = header.pop("model_kind", None)
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"{path}: model kind {kind!r}, expected {expect_kind!r}")
    config = header.pop("config", {})
    header.pop("format_version")
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param/")}
    tc = header.pop("train_config", None)
    state = None
    if "optimizer_t" in header:
        trainable = header.pop("trainable")
        try:
            m = {k: arrays[f"adam_m/{k}"] for k in trainable}
            v = {k: arrays[f"adam_v/{k}"] for k in trainable}
        except KeyError as exc:
            raise CheckpointError(f"{path}: optimizer moment {exc} missing") from exc
        for k in trainable:
            if k not in params or m[k].shape != params[k].shape or v[k].shape != params[k].shape:
                raise CheckpointError(f"{path}: optimizer moment shape mismatch for {k}")
        state = FitState(dict(params), OptimizerState(m, v, int(header.pop("optimizer_t"))),
                         int(header.pop("epoch")), _history_from_json(header.pop("history")))
    return Checkpoint(kind, config, params, header, state,
                      TrainConfig.from_dict(tc) if tc is not None else None)


# model-specific wrappers

def save_vnet(path, model, state: FitState | None = None, train_config: TrainConfig | None = None,
              meta: dict | None = None) -> None:
    from dataclasses import asdict

    meta = dict(meta or {})
    meta.setdefault("phases", [p.value for p in model.phases])
    save_checkpoint(path, Checkpoint("vnet", asdict(model.config), model.params(), meta, state, train_config))


def load_vnet(path):
    from .netmodel import ModelConfig, VNetModel

    ck = load_checkpoint(path, "vnet")
    cfg = ModelConfig(**ck.config)
    try:
        model = VNetModel.from_params(cfg, ck.params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: parameters do not match the stored config ({exc})") from exc
    return model, ck


def save_ffm(path, params, state: FitState | None = None, meta: dict | None = None) -> None:
    cfg = params.config
    save_checkpoint(path, Checkpoint("ffm", cfg.to_dict(), params.params(), dict(meta or {}), state,
                                     cfg.train_config()))


def load_ffm(path):
    from .ffm import FFMConfig, FFMParams

    ck = load_checkpoint(path, "ffm")
    cfg = FFMConfig(**ck.config)
    try:
        params = FFMParams.from_params(cfg, ck.params)
        sizes = cfg.layer_sizes
        for s, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            if params.theta[f"W{s}"].shape != (fi, fo):
                raise ValueError(f"layer {s} shape")
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: parameters do not match the stored config ({exc})") from exc
    return params, ck
