"""Diagonal Gaussian with reparameterized sampling.

Standard deviations are produced from raw parameters via
softplus(raw) + STDDEV_FLOOR so they stay strictly positive.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import DiffError, Tensor

STDDEV_FLOOR = 1e-4
LOG_2PI = float(np.log(2.0 * np.pi))


def stddev_from_raw(raw: Tensor) -> Tensor:
    return T.add(T.softplus(raw), STDDEV_FLOOR)


class DiagGaussian:
    """Diagonal Gaussian over the last axis of mean/stddev tensors."""

    def __init__(self, mean: Tensor, stddev: Tensor):
        mean = T.as_tensor(mean)
        stddev = T.as_tensor(stddev)
        if mean.shape != stddev.shape:
            raise DiffError(f"mean shape {mean.shape} != stddev shape {stddev.shape}")
        if np.any(stddev.data <= 0.0):
            raise DiffError("stddev must be strictly positive")
        self.mean = mean
        self.stddev = stddev

    def rsample(self, noise: np.ndarray) -> Tensor:
        """mean + stddev * noise; gradient flows into mean and stddev."""
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != self.mean.shape:
            raise DiffError(f"noise shape {noise.shape} != mean shape {self.mean.shape}")
        return T.add(self.mean, T.mul(self.stddev, noise))

    def log_prob(self, x) -> Tensor:
        """Log density summed over the last axis."""
        x = T.as_tensor(x)
        if x.shape != self.mean.shape:
            raise DiffError(f"x shape {x.shape} != mean shape {self.mean.shape}")
        z = T.div(T.sub(x, self.mean), self.stddev)
        per_dim = T.mul(-0.5, T.add(T.square(z), LOG_2PI))
        per_dim = T.sub(per_dim, T.log(self.stddev))
        return T.tsum(per_dim, axis=-1)


def gaussian_kl(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """Analytic KL(q || p) per batch element, summed over the last axis."""
    var_ratio = T.square(T.div(q.stddev, p.stddev))
    mean_term = T.square(T.div(T.sub(q.mean, p.mean), p.stddev))
    per_dim = T.mul(0.5, T.sub(T.add(var_ratio, mean_term),
                               T.add(1.0, T.log(var_ratio))))
    return T.tsum(per_dim, axis=-1)
