"""Planar normalizing-flow stacks with log-determinant accounting.

Each map is s' = s + u_eff * tanh(w's + b) with u_eff reparameterized so
u_eff'w >= -1 + eps, which keeps every map invertible.  The inverse is a
monotone scalar solve; it is exposed as a differentiable op so densities
of flow-transformed priors can be evaluated at arbitrary points.
"""

from __future__ import annotations

import numpy as np

from ..diffmath import tensor as T
from ..diffmath.params import ParamSet
from ..diffmath.tensor import Tensor

INVERTIBILITY_EPS = 1e-6


def init_flow_stack(params: ParamSet, name: str, k_maps: int, dim: int,
                    rng: np.random.Generator, group: str = "model") -> None:
    """Register parameters for K planar maps (near-identity init)."""
    for k in range(k_maps):
        params.add(f"{name}.k{k}.u", rng.normal(0.0, 0.01, size=dim), group=group)
        params.add(f"{name}.k{k}.w", rng.normal(0.0, 0.1, size=dim), group=group)
        params.add(f"{name}.k{k}.b", np.zeros(1), group=group)


def effective_u(u: Tensor, w: Tensor) -> Tensor:
    """Reparameterize u so that u_eff'w >= -1 + eps (map stays invertible)."""
    dot = T.tsum(T.mul(u, w))
    m = T.add(T.add(-1.0 + INVERTIBILITY_EPS, T.softplus(dot)), 0.0)
    w_norm_sq = T.maximum(T.tsum(T.square(w)), 1e-12)
    correction = T.mul(T.div(T.sub(m, dot), w_norm_sq), w)
    return T.add(u, correction)


def flow_forward(params: ParamSet, name: str, k_maps: int, s0: Tensor):
    """Apply the stack in order; return (s_K, sum of log|det|) per row.

    s0: (B, d).  sum_log_det: (B,).
    """
    s = T.as_tensor(s0)
    sum_log_det = T.constant(np.zeros(s.shape[0]))
    for k in range(k_maps):
        u = params[f"{name}.k{k}.u"]
        w = params[f"{name}.k{k}.w"]
        b = params[f"{name}.k{k}.b"]
        u_eff = effective_u(u, w)
        lin = T.add(T.matmul(s, w), b[0])          # (B,)
        h = T.tanh(lin)
        s = T.add(s, T.mul(T.reshape(h, (-1, 1)), u_eff))
        h_prime = T.sub(1.0, T.square(h))
        det = T.add(1.0, T.mul(h_prime, T.tsum(T.mul(u_eff, w))))
        sum_log_det = T.add(sum_log_det, T.log(T.absolute(det)))
    return s, sum_log_det


def _planar_inverse_solve(y: np.ndarray, u: np.ndarray, w: np.ndarray,
                          b: float) -> np.ndarray:
    """Solve a + d*tanh(a+b) = w'y per row by bisection (monotone in a)."""
    d = float(u @ w)
    wy = y @ w
    lo = wy - abs(d) - 1e-9
    hi = wy + abs(d) + 1e-9
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        f = mid + d * np.tanh(mid + b) - wy
        below = f < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def planar_inverse(y: Tensor, u_eff: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Differentiable inverse of one planar map (implicit-function gradients)."""
    y = T.as_tensor(y)
    yd, ud, wd, bd = y.data, u_eff.data, w.data, float(b.data.reshape(-1)[0])
    a = _planar_inverse_solve(yd, ud, wd, bd)       # (B,)
    h = np.tanh(a + bd)
    s = yd - h[:, None] * ud
    d = float(ud @ wd)
    hp = 1.0 - h * h
    J = 1.0 + d * hp                                 # > 0 under invertibility

    def vjp_y(g, ud=ud, wd=wd, h=h, hp=hp, J=J):
        c = g @ ud                                   # (B,)
        return g - ((c * hp / J)[:, None] * wd)

    def vjp_u(g, ud=ud, wd=wd, yd=yd, h=h, hp=hp, J=J):
        c = g @ ud
        term1 = -(h[:, None] * g).sum(axis=0)
        term2 = float(np.sum(c * hp * h / J)) * wd
        return term1 + term2

    def vjp_w(g, ud=ud, yd=yd, h=h, hp=hp, J=J):
        c = g @ ud
        coeff = c * hp / J                           # (B,)
        return (coeff[:, None] * (h[:, None] * ud - yd)).sum(axis=0)

    def vjp_b(g, ud=ud, hp=hp, J=J):
        c = g @ ud
        return np.array([-np.sum(c * hp / J)])

    return Tensor._make(s, [(y, vjp_y), (u_eff, vjp_u), (w, vjp_w), (b, vjp_b)])


def flow_inverse(params: ParamSet, name: str, k_maps: int, y: Tensor) -> Tensor:
    """Invert the whole stack (maps applied in reverse order)."""
    s = T.as_tensor(y)
    for k in reversed(range(k_maps)):
        u = params[f"{name}.k{k}.u"]
        w = params[f"{name}.k{k}.w"]
        b = params[f"{name}.k{k}.b"]
        s = planar_inverse(s, effective_u(u, w), w, b)
    return s


def flow_log_density(params: ParamSet, name: str, k_maps: int,
                     base_log_prob, y: Tensor):
    """log density of the transformed distribution at points y.

    base_log_prob: callable mapping the base-space points (Tensor) to their
    base log density (B,).  Change of variables: inverts the stack, then
    subtracts the forward log-determinant accumulated along the re-applied
    path.
    """
    s0 = flow_inverse(params, name, k_maps, y)
    _, sum_log_det = flow_forward(params, name, k_maps, s0)
    return T.sub(base_log_prob(s0), sum_log_det)
