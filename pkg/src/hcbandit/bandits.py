"""Base bandit estimators (LinUCB, linear Thompson sampling, epsilon-greedy).

Every routine here works on a leading user axis. The single-user entry
points (``select``, ``sample_candidates``, ``update``) wrap the batched
kernels with one row so both paths share arithmetic and rng consumption.

Per-user rng consumption, in call order:

* candidate sampling, only when the pool exceeds the budget:
  ``rng.random(budget)`` fed to Floyd's subset algorithm;
* thompson: ``rng.standard_normal(d)``;
* epsgreedy: ``rng.random()`` and, when exploring, ``rng.integers(n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, EmptyCandidatesError, InvalidConfigError, InvalidDimensionError
from .ridge import RidgeBank, RidgeState, rank1_update

KINDS = ("linucb", "thompson", "epsgreedy")
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Arm:
    arm_id: int
    feature: np.ndarray


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "linucb"
    alpha: float = 0.5
    v: float = 0.1
    epsilon: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha < 0 or self.v < 0:
            raise InvalidConfigError("alpha and v must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidConfigError("epsilon must lie in [0, 1]")


@dataclass
class BudgetLedger:
    budget_per_round: int = 50
    spent_this_round: int = 0

    def charge(self, n: int) -> None:
        if self.spent_this_round + n > self.budget_per_round:
            raise ConsistencyError(
                f"score budget exceeded: {self.spent_this_round} + {n} > {self.budget_per_round}"
            )
        self.spent_this_round += n

    def reset(self) -> None:
        self.spent_this_round = 0


# -- candidate sampling ------------------------------------------------------

def floyd_subset(n: np.ndarray, k: int, u: np.ndarray) -> np.ndarray:
    """Uniform ``k``-subsets of ``range(n[r])`` per row, driven by uniforms ``u[r, :k]``.

    Robert Floyd's algorithm; every ``n[r]`` must be >= ``k``.
    """
    n = np.asarray(n, dtype=np.int64)
    out = np.empty((n.shape[0], k), dtype=np.int64)
    for i in range(k):
        j = n - k + i
        t = np.minimum(np.floor(u[:, i] * (j + 1)).astype(np.int64), j)
        dup = (out[:, :i] == t[:, None]).any(axis=1)
        out[:, i] = np.where(dup, j, t)
    out.sort(axis=1)
    return out


def sample_positions(counts: np.ndarray, budget: int, rngs) -> tuple[np.ndarray, np.ndarray]:
    """Local candidate indices for pools of size ``counts`` under ``budget``.

    Returns ``(local, mask)`` of shape ``(U, width)``; padded slots hold 0
    and are masked out. Pools within budget are taken whole, without draws.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if budget < 1:
        raise InvalidConfigError("budget must be >= 1")
    if np.any(counts < 1):
        raise EmptyCandidatesError("empty candidate pool")
    width = int(min(budget, counts.max()))
    local = np.broadcast_to(np.arange(width), (len(counts), width)).copy()
    mask = local < counts[:, None]
    local[~mask] = 0
    over = np.flatnonzero(counts > budget)
    if over.size:
        u = np.stack([rngs[r].random(budget) for r in over])
        local[over] = floyd_subset(counts[over], budget, u)
        mask[over] = True
    return local, mask


def sample_candidates(arms: list[Arm], budget: int, rng) -> list[Arm]:
    """All arms if within budget, else a uniform subset of exactly ``budget`` arms."""
    if not arms:
        raise EmptyCandidatesError("no arms to sample from")
    local, mask = sample_positions(np.array([len(arms)]), budget, [rng])
    return [arms[i] for i in local[0][mask[0]]]


# -- scoring and selection -----------------------------------------------------

def _argmax_lowest_id(scores: np.ndarray, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
    s = np.where(mask, scores, -np.inf)
    best = s.max(axis=1, keepdims=True)
    tied = mask & (s >= best - TIE_TOL * np.maximum(1.0, np.abs(best)))
    key = np.where(tied, ids, np.iinfo(np.int64).max)
    return np.argmin(key, axis=1)


def linucb_scores(bank: RidgeBank, feats: np.ndarray, alpha: float) -> np.ndarray:
    """theta^T x + alpha * sqrt(x^T A^-1 x) for ``feats`` of shape (U, K, d)."""
    mean = np.einsum("ukd,ud->uk", feats, bank.theta)
    quad = np.einsum("ukd,ukd->uk", feats @ bank.a_inv, feats)
    return mean + alpha * np.sqrt(np.maximum(quad, 0.0))


def thompson_sample(bank: RidgeBank, v: float, rngs) -> np.ndarray:
    """One draw per row from Normal(theta, v^2 * a_inv)."""
    z = np.stack([rngs[u].standard_normal(bank.b.shape[1]) for u in range(len(bank))])
    if v == 0.0:
        return bank.theta.copy()
    chol = np.linalg.cholesky(bank.a_inv)
    return bank.theta + v * np.einsum("uij,uj->ui", chol, z)


def select_batch(bank: RidgeBank, config: EstimatorConfig, feats: np.ndarray, ids: np.ndarray,
                 mask: np.ndarray, rngs) -> np.ndarray:
    """Pick one candidate per row; returns the chosen column index per row.

    ``feats`` is ``(U, K, d)``, ``ids``/``mask`` are ``(U, K)``.
    """
    n_users = feats.shape[0]
    if feats.shape[-1] != bank.b.shape[1]:
        raise InvalidDimensionError(f"feature length {feats.shape[-1]} != state dimension {bank.b.shape[1]}")
    if np.any(~mask.any(axis=1)):
        raise EmptyCandidatesError("a row has no candidates")
    if config.kind == "linucb":
        return _argmax_lowest_id(linucb_scores(bank, feats, config.alpha), ids, mask)
    if config.kind == "thompson":
        sampled = thompson_sample(bank, config.v, rngs)
        return _argmax_lowest_id(np.einsum("ukd,ud->uk", feats, sampled), ids, mask)
    # epsgreedy
    greedy = _argmax_lowest_id(np.einsum("ukd,ud->uk", feats, bank.theta), ids, mask)
    counts = mask.sum(axis=1)
    for u in range(n_users):
        if rngs[u].random() < config.epsilon:
            # masks are left-aligned, so the first counts[u] columns are live
            greedy[u] = rngs[u].integers(counts[u])
    return greedy


def select(state: RidgeState, config: EstimatorConfig, candidates: list[Arm], rng,
           ledger: BudgetLedger | None = None) -> int:
    """Choose one arm id among ``candidates`` using the configured estimator."""
    if not candidates:
        raise EmptyCandidatesError("no candidates to select from")
    if ledger is not None:
        ledger.charge(len(candidates))
    feats = np.stack([np.asarray(a.feature, dtype=np.float64) for a in candidates])[None]
    ids = np.array([a.arm_id for a in candidates], dtype=np.int64)[None]
    mask = np.ones(ids.shape, dtype=bool)
    j = select_batch(RidgeBank.stack([state]), config, feats, ids, mask, [rng])[0]
    return int(candidates[j].arm_id)


def update(state: RidgeState, chosen: Arm, r: float) -> None:
    rank1_update(state, chosen.feature, r)
