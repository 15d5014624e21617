"""Online ridge regression with a maintained inverse Gram matrix.

``RidgeState`` is the per-user view used by the public operations.
``RidgeBank`` stacks many states along a leading user axis so the
simulation loop can update every user with a handful of array ops; both
share the same Sherman-Morrison arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, NumericInputError


@dataclass
class RidgeState:
    a_inv: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    update_count: int = 0

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "RidgeState":
        return RidgeState(self.a_inv.copy(), self.b.copy(), self.theta.copy(), self.update_count)


def new_ridge_state(d: int) -> RidgeState:
    if int(d) < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    d = int(d)
    return RidgeState(np.eye(d), np.zeros(d), np.zeros(d), 0)


def _as_feature(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise InvalidDimensionError(f"expected vector of length {d}, got shape {x.shape}")
    return x


def rank1_update(state: RidgeState, x, r: float) -> RidgeState:
    """A <- A + x x^T, b <- b + r x, theta <- A^-1 b (in place, returns ``state``)."""
    x = _as_feature(x, state.dim)
    if not np.all(np.isfinite(x)) or not np.isfinite(r):
        raise NumericInputError("feature vector and reward must be finite")
    ax = state.a_inv @ x
    state.a_inv -= np.outer(ax, ax) / (1.0 + x @ ax)
    state.b += r * x
    state.theta = state.a_inv @ state.b
    state.update_count += 1
    return state


def quadratic_form(state: RidgeState, x) -> float:
    """x^T A^-1 x."""
    x = _as_feature(x, state.dim)
    return float(x @ state.a_inv @ x)


@dataclass
class RidgeBank:
    """``n`` independent ridge states of dimension ``d``, stacked."""

    a_inv: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    update_count: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.update_count is None:
            self.update_count = np.zeros(self.b.shape[0], dtype=np.int64)

    @classmethod
    def fresh(cls, n: int, d: int) -> "RidgeBank":
        if int(d) < 1:
            raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
        return cls(np.tile(np.eye(d), (n, 1, 1)), np.zeros((n, d)), np.zeros((n, d)))

    @classmethod
    def stack(cls, states: list[RidgeState]) -> "RidgeBank":
        return cls(
            np.stack([s.a_inv for s in states]),
            np.stack([s.b for s in states]),
            np.stack([s.theta for s in states]),
            np.array([s.update_count for s in states], dtype=np.int64),
        )

    def write_back(self, states: list[RidgeState]) -> None:
        for i, s in enumerate(states):
            s.a_inv = self.a_inv[i].copy()
            s.b = self.b[i].copy()
            s.theta = self.theta[i].copy()
            s.update_count = int(self.update_count[i])

    def state(self, i: int) -> RidgeState:
        return RidgeState(self.a_inv[i].copy(), self.b[i].copy(), self.theta[i].copy(),
                          int(self.update_count[i]))

    def __len__(self) -> int:
        return self.b.shape[0]

    def update(self, x: np.ndarray, r: np.ndarray, rows: np.ndarray | None = None) -> None:
        """Rank-1 update of every row (or only ``rows``) with features ``x`` and rewards ``r``."""
        if rows is None:
            a_inv, b = self.a_inv, self.b
        else:
            a_inv, b = self.a_inv[rows], self.b[rows]
        ax = np.einsum("uij,uj->ui", a_inv, x)
        denom = 1.0 + np.einsum("ui,ui->u", x, ax)
        a_inv = a_inv - ax[:, :, None] * ax[:, None, :] / denom[:, None, None]
        b = b + r[:, None] * x
        theta = np.einsum("uij,uj->ui", a_inv, b)
        if rows is None:
            self.a_inv, self.b, self.theta = a_inv, b, theta
            self.update_count += 1
        else:
            self.a_inv[rows], self.b[rows], self.theta[rows] = a_inv, b, theta
            self.update_count[rows] += 1
