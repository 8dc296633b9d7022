"""Central finite-difference gradient oracle, independent of the tape."""

import numpy as np

from nfdrive.diffmath import ParamSet, value_and_grad


def fd_grads(loss_fn, params: ParamSet, step: float = 1e-5) -> dict:
    """Central finite differences of loss_fn w.r.t. every parameter entry."""
    grads = {}
    for name in params.names():
        t = params[name]
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn(params).item()
            flat[i] = orig - step
            down = loss_fn(params).item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_grads(loss_fn, params: ParamSet, tol: float = 1e-4, step: float = 1e-5) -> float:
    _, analytic = value_and_grad(loss_fn, params)
    numeric = fd_grads(loss_fn, params, step=step)
    err = max_rel_error(analytic, numeric)
    assert err <= tol, f"gradient mismatch: rel err {err} > {tol}"
    return err
