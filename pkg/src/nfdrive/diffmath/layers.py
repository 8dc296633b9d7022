"""Dense layers and a gated recurrent cell built on the tensor substrate."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamSet
from .tensor import DiffError, Tensor


def init_affine(params: ParamSet, name: str, n_in: int, n_out: int,
                rng: np.random.Generator, group: str = "default",
                scale: float | None = None) -> None:
    """Register weight/bias for a dense layer (Glorot-style scaling)."""
    if scale is None:
        scale = np.sqrt(2.0 / (n_in + n_out))
    params.add(f"{name}.W", rng.normal(0.0, scale, size=(n_in, n_out)), group=group)
    params.add(f"{name}.b", np.zeros(n_out), group=group)


def affine(params: ParamSet, name: str, x: Tensor) -> Tensor:
    return T.add(T.matmul(x, params[f"{name}.W"]), params[f"{name}.b"])


def init_mlp(params: ParamSet, name: str, sizes: list[int],
             rng: np.random.Generator, group: str = "default") -> None:
    for i in range(len(sizes) - 1):
        init_affine(params, f"{name}.l{i}", sizes[i], sizes[i + 1], rng, group=group)


def mlp(params: ParamSet, name: str, x: Tensor, n_layers: int,
        activation=T.tanh, final_activation=None) -> Tensor:
    """Apply an MLP registered by init_mlp; tanh between hidden layers."""
    h = x
    for i in range(n_layers):
        h = affine(params, f"{name}.l{i}", h)
        if i < n_layers - 1:
            h = activation(h)
        elif final_activation is not None:
            h = final_activation(h)
    return h


def init_gru(params: ParamSet, name: str, n_in: int, n_hidden: int,
             rng: np.random.Generator, group: str = "default") -> None:
    scale_x = np.sqrt(2.0 / (n_in + n_hidden))
    scale_h = np.sqrt(1.0 / n_hidden)
    for gate in ("z", "r", "h"):
        params.add(f"{name}.W{gate}", rng.normal(0.0, scale_x, (n_in, n_hidden)), group=group)
        params.add(f"{name}.U{gate}", rng.normal(0.0, scale_h, (n_hidden, n_hidden)), group=group)
        params.add(f"{name}.b{gate}", np.zeros(n_hidden), group=group)


def gru_step(params: ParamSet, name: str, context: Tensor, x: Tensor) -> Tensor:
    """One update of a gated recurrent cell (update/reset gates).

    context: (..., n_hidden), x: (..., n_in) -> new context (..., n_hidden).
    """
    if context.shape[-1] != params[f"{name}.Uz"].shape[0]:
        raise DiffError(f"context dim {context.shape[-1]} does not match cell "
                        f"{params[f'{name}.Uz'].shape[0]}")
    if x.shape[-1] != params[f"{name}.Wz"].shape[0]:
        raise DiffError(f"input dim {x.shape[-1]} does not match cell "
                        f"{params[f'{name}.Wz'].shape[0]}")
    z = T.sigmoid(T.matmul(x, params[f"{name}.Wz"]) + T.matmul(context, params[f"{name}.Uz"])
                  + params[f"{name}.bz"])
    r = T.sigmoid(T.matmul(x, params[f"{name}.Wr"]) + T.matmul(context, params[f"{name}.Ur"])
                  + params[f"{name}.br"])
    h_tilde = T.tanh(T.matmul(x, params[f"{name}.Wh"])
                     + T.matmul(T.mul(r, context), params[f"{name}.Uh"])
                     + params[f"{name}.bh"])
    one_minus_z = T.sub(1.0, z)
    return T.add(T.mul(z, context), T.mul(one_minus_z, h_tilde))
