"""Named trainable parameter collections and value_and_grad."""

from __future__ import annotations

import numpy as np

from .tensor import DiffError, Tensor


class ParamSet:
    """Ordered, uniquely named collection of trainable tensors.

    Each parameter carries a group tag ("model", "actor", "critic", "bc",
    ...) so optimizers can select a sub-population.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}

    def add(self, name: str, value, group: str = "default") -> Tensor:
        if name in self._params:
            raise DiffError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._groups[name] = group
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self, group: str | None = None) -> list[str]:
        if group is None:
            return list(self._params)
        return [n for n in self._params if self._groups[n] == group]

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def subset(self, group: str) -> "ParamSet":
        """View over one group; tensors are shared, not copied."""
        sub = ParamSet()
        for n in self.names(group):
            sub._params[n] = self._params[n]
            sub._groups[n] = group
        return sub

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for n, v in state.items():
            if n not in self._params:
                raise DiffError(f"unknown parameter in state dict: {n}")
            if self._params[n].data.shape != np.asarray(v).shape:
                raise DiffError(f"shape mismatch loading {n}")
            self._params[n].data = np.asarray(v, dtype=np.float64).copy()

    def copy(self) -> "ParamSet":
        dup = ParamSet()
        for n, t in self._params.items():
            dup.add(n, t.data.copy(), group=self._groups[n])
        return dup


def value_and_grad(loss_fn, params: ParamSet):
    """Evaluate ``loss_fn(params)`` and return (loss value, {name: grad}).

    The loss must be a scalar Tensor built from substrate ops; parameters
    without influence on the loss get a zero gradient.
    """
    params.zero_grad()
    loss = loss_fn(params)
    if not isinstance(loss, Tensor):
        raise DiffError("loss_fn must return a Tensor")
    if loss.data.size != 1:
        raise DiffError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise DiffError("non-finite loss value")
    loss.backward()
    grads = {}
    for name in params.names():
        t = params[name]
        grads[name] = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
    return loss.item(), grads
