"""Fully connected SiLU network with hand-written reverse mode.

Layer s computes ``h @ W_s + b_s``; W_s has shape (fan_in, fan_out). Hidden
layers apply SiLU, the output layer is linear.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def layer_names(n_layers: int) -> list[str]:
    names = []
    for s in range(1, n_layers + 1):
        names += [f"W{s}", f"b{s}"]
    return names


def glorot_init(sizes: list[int], rng: np.random.Generator, prefix: str = "") -> dict:
    params = {}
    for s, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{prefix}W{s}"] = rng.uniform(-a, a, size=(fan_in, fan_out))
        params[f"{prefix}b{s}"] = np.zeros(fan_out)
    return params


def n_layers(params: dict, prefix: str = "") -> int:
    s = 0
    while f"{prefix}W{s + 1}" in params:
        s += 1
    return s


def forward(params: dict, x: np.ndarray, prefix: str = ""):
    """Return (output, cache); cache holds layer inputs, pre-activations and sigmoids."""
    L = n_layers(params, prefix)
    h = x
    inputs, pre, sig = [], [], []
    for s in range(1, L + 1):
        W, b = params[f"{prefix}W{s}"], params[f"{prefix}b{s}"]
        if W.shape[0] != h.shape[-1]:
            raise ValueError(f"layer {s}: expected input width {W.shape[0]}, got {h.shape[-1]}")
        inputs.append(h)
        z = h @ W + b
        pre.append(z)
        if s < L:
            sg = expit(z)
            sig.append(sg)
            h = z * sg
        else:
            h = z
    return h, (inputs, pre, sig)


def backward(params: dict, cache, dout: np.ndarray, prefix: str = "") -> dict:
    inputs, pre, sig = cache
    L = len(inputs)
    grads = {}
    d = dout
    for s in range(L, 0, -1):
        if s < L:
            z, sg = pre[s - 1], sig[s - 1]
            d = d * (sg * (1.0 + z * (1.0 - sg)))
        grads[f"{prefix}W{s}"] = inputs[s - 1].T @ d
        grads[f"{prefix}b{s}"] = d.sum(axis=0)
        if s > 1:
            d = d @ params[f"{prefix}W{s}"].T
    return grads
