"""Fully connected autoencoder (ReconstructAD / DNN_AutoEncoder) on torch.

Hidden layers use tanh, the output layer is linear and training minimises the
mean squared reconstruction error with mini-batch Adam. Everything runs in
float64 on the CPU. The raw score of a row is its mean squared reconstruction
error.

Fitted weights are kept as numpy arrays in the model parameters, in
``nn.Linear`` layout ``(out_features, in_features)``.
"""

from __future__ import annotations

import math
from typing import Any, Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn
from loguru import logger

from detectors.errors import NonFiniteLoss, TooFewRows
from utils.deadline import checkpoint

NAME = "DNN_AutoEncoder"
MIN_ROWS = 20
DTYPE = torch.float64


def default_layers(d: int) -> list[int]:
    half = max(2, math.ceil(d / 2))
    quarter = max(1, math.ceil(d / 4))
    return [d, half, quarter, half, d]


def layer_sizes(d: int, hidden: Sequence[int] | None) -> list[int]:
    if hidden is None:
        return default_layers(d)
    return [d, *hidden, d]


def build(sizes: Sequence[int]) -> nn.Sequential:
    """Linear layers with tanh between them; Glorot-uniform weights, zero biases."""
    modules: list[nn.Module] = []
    last = len(sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        linear = nn.Linear(fan_in, fan_out, dtype=DTYPE)
        nn.init.xavier_uniform_(linear.weight)
        nn.init.zeros_(linear.bias)
        modules.append(linear)
        if i < last:
            modules.append(nn.Tanh())
    return nn.Sequential(*modules)


def init_net(sizes: Sequence[int], seed: int) -> nn.Sequential:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build(sizes)


def reconstruction_loss(net: nn.Module, x: torch.Tensor) -> torch.Tensor:
    return nn.functional.mse_loss(net(x), x)


def row_errors(net: nn.Module, x: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
        diff = net(xt) - xt
        return torch.mean(diff * diff, dim=1).numpy()


def train(x: np.ndarray, hp: Mapping[str, Any]) -> tuple[nn.Sequential, list[float]]:
    n, d = x.shape
    if n < MIN_ROWS:
        raise TooFewRows(n, MIN_ROWS, NAME)
    seed = int(hp["seed"])
    sizes = layer_sizes(d, hp.get("hidden_layers"))
    net = init_net(sizes, seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=float(hp["learning_rate"]))
    shuffle = torch.Generator().manual_seed(seed)
    xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))
    batch = int(hp["batch_size"])
    history: list[float] = []

    logger.debug(f"autoencoder layers {sizes}, {hp['epochs']} epochs")
    net.train()
    for epoch in range(int(hp["epochs"])):
        checkpoint(f"{NAME} epoch {epoch}")
        order = torch.randperm(n, generator=shuffle)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            xb = xt[order[start:start + batch]]
            optimizer.zero_grad()
            loss = reconstruction_loss(net, xb)
            value = float(loss.item())
            if not math.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at epoch {epoch}", epoch=epoch)
            loss.backward()
            optimizer.step()
            epoch_loss += value * xb.shape[0]
        history.append(epoch_loss / n)
    net.eval()

    final = float(np.mean(row_errors(net, x)))
    if not math.isfinite(final):
        raise NonFiniteLoss(f"final reconstruction error is {final}")
    return net, history


def linear_layers(net: nn.Sequential) -> list[nn.Linear]:
    return [m for m in net if isinstance(m, nn.Linear)]


def fit_arrays(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    net, history = train(x, hp)
    layers = linear_layers(net)
    params = {
        "weights": [layer.weight.detach().numpy().copy() for layer in layers],
        "biases": [layer.bias.detach().numpy().copy() for layer in layers],
        "loss_history": history,
    }
    scores = row_errors(net, x)
    params["final_loss"] = float(np.mean(scores))
    return params, scores


def net_from(params: Mapping[str, Any]) -> nn.Sequential:
    weights = [np.asarray(w, dtype=np.float64) for w in params["weights"]]
    sizes = [weights[0].shape[1], *(w.shape[0] for w in weights)]
    net = build(sizes)
    with torch.no_grad():
        for layer, w, b in zip(linear_layers(net), weights, params["biases"]):
            layer.weight.copy_(torch.from_numpy(w))
            layer.bias.copy_(torch.from_numpy(np.asarray(b, dtype=np.float64)))
    return net.eval()


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    return row_errors(net_from(params), x)
