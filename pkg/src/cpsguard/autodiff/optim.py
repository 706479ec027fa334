"""Adam with bias correction, plus learning-rate schedules."""
from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError, Param


def adam_step(values, grads, m, v, t, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update on plain arrays.

    ``t`` is the 1-based step index of this update. Returns ``(values, m, v)``
    as new arrays; inputs are left untouched.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if not np.isfinite(grads).all():
        raise NonFiniteError("non-finite gradient passed to adam_step")
    if t < 1:
        raise ValueError("Adam step index t starts at 1")
    return _adam_core(np.asarray(values, dtype=np.float64), grads, m, v, t, lr, beta1, beta2, eps)


class Adam:
    """Adam over a list of :class:`Param`, updated in place.

    With ``n_rows`` set, every parameter's leading axis indexes an independent
    agent: ``step(row=i)`` touches only that slice and advances only that
    agent's step counter, so stacked agents can be optimised one at a time.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, n_rows: int | None = None):
        self.params: list[Param] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.n_rows = n_rows
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = np.zeros(n_rows if n_rows else 1, dtype=np.int64)

    def step(self, row: int | None = None, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        if row is None:
            self.t += 1
            sl = slice(None)
            t = self.t if self.n_rows else self.t[0]
        else:
            if not self.n_rows:
                raise ValueError("row-wise step needs n_rows")
            self.t[row] += 1
            sl = slice(row, row + 1)
            t = self.t[row]
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad[sl]
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient in {p.name}")
            if self.n_rows and row is None:
                tt = np.asarray(t, dtype=np.float64).reshape((-1,) + (1,) * (p.data.ndim - 1))
            else:
                tt = float(t)
            new, m_new, v_new = _adam_core(
                p.data[sl], g, m[sl], v[sl], tt, lr, self.beta1, self.beta2, self.eps
            )
            p.data[sl] = new
            m[sl] = m_new
            v[sl] = v_new

    def state_dict(self) -> dict:
        return {"m": self.m, "v": self.v, "t": self.t.copy()}

    def load_state_dict(self, state: dict) -> None:
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src
        self.t[...] = state["t"]


def _adam_core(values, grads, m, v, t, lr, beta1, beta2, eps):
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return values - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def learning_rate(base: float, schedule: str, update_index: int) -> float:
    """``constant`` or ``robbins_monro`` (base / k for the k-th update, k >= 1)."""
    if schedule == "constant":
        return base
    if schedule == "robbins_monro":
        return base / max(1, update_index)
    raise ValueError(f"unknown lr schedule {schedule!r}")
