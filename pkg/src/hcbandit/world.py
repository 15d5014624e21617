"""Synthetic linear-payoff world: ground-truth vectors, click model, oracle, regret."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import read_embeddings, write_embeddings
from .errors import ConsistencyError, InvalidConfigError, InvalidDimensionError, NotFoundError
from .tree import ItemEmbedding


def _normalize(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norms == 0.0, 1.0, norms)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class RewardDraw:
    expected: float
    realized: int


@dataclass
class SyntheticWorld:
    user_ids: np.ndarray
    user_vectors: np.ndarray
    item_ids: np.ndarray
    item_vectors: np.ndarray
    reward_scale: float = 5.0
    reward_bias: float = 0.0
    noise_sigma: float = 0.0
    item_blobs: np.ndarray | None = None
    _urow: dict = field(init=False, repr=False)
    _irow: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.user_vectors.shape[1] != self.item_vectors.shape[1]:
            raise InvalidDimensionError(
                f"user dimension {self.user_vectors.shape[1]} != item dimension {self.item_vectors.shape[1]}"
            )
        if not 0.0 <= self.noise_sigma <= 1.0:
            raise InvalidConfigError("noise_sigma must lie in [0, 1]")
        self._urow = {int(u): r for r, u in enumerate(self.user_ids)}
        self._irow = {int(i): r for r, i in enumerate(self.item_ids)}

    @property
    def dim(self) -> int:
        return self.item_vectors.shape[1]

    @property
    def item_embeddings(self) -> list[ItemEmbedding]:
        return [ItemEmbedding(int(i), v) for i, v in zip(self.item_ids, self.item_vectors)]

    def user_row(self, user_id) -> int:
        try:
            return self._urow[int(user_id)]
        except KeyError:
            raise NotFoundError(f"unknown user {user_id}") from None

    def item_rows(self, item_ids) -> np.ndarray:
        try:
            return np.array([self._irow[int(i)] for i in np.atleast_1d(item_ids)], dtype=np.int64)
        except KeyError as exc:
            raise NotFoundError(f"unknown item {exc.args[0]}") from None

    def click_prob(self, user_rows: np.ndarray, item_rows: np.ndarray) -> np.ndarray:
        """Vectorized expected reward for aligned row arrays."""
        dots = np.einsum("ij,ij->i", self.user_vectors[user_rows], self.item_vectors[item_rows])
        return sigmoid(self.reward_scale * dots - self.reward_bias)

    def all_click_probs(self) -> np.ndarray:
        """``(users, items)`` matrix of expected rewards."""
        return sigmoid(self.reward_scale * self.user_vectors @ self.item_vectors.T - self.reward_bias)


def gen_synthetic(num_users: int, num_items: int, d: int, num_interest_clusters: int, seed=0,
                  reward_scale: float = 5.0, reward_bias: float = 0.0, noise_sigma: float = 0.0,
                  item_spread: float = 0.5, user_spread: float = 0.2) -> SyntheticWorld:
    """Items from Gaussian blobs around random unit centers; users mix 1-3 centers."""
    if min(num_users, num_items, d, num_interest_clusters) < 1:
        raise InvalidConfigError("all counts must be >= 1")
    if num_interest_clusters > num_items:
        raise InvalidConfigError("more interest clusters than items")
    rng = np.random.default_rng(seed)
    centers = _normalize(rng.standard_normal((num_interest_clusters, d)))
    # every blob gets at least one item
    blobs = np.concatenate([np.arange(num_interest_clusters),
                            rng.integers(num_interest_clusters, size=num_items - num_interest_clusters)])
    rng.shuffle(blobs)
    items = _normalize(centers[blobs] + item_spread * rng.standard_normal((num_items, d)) / np.sqrt(d))
    users = np.empty((num_users, d))
    for u in range(num_users):
        m = int(rng.integers(1, min(3, num_interest_clusters) + 1))
        picks = rng.choice(num_interest_clusters, size=m, replace=False)
        w = rng.dirichlet(np.ones(m))
        users[u] = w @ centers[picks] + user_spread * rng.standard_normal(d) / np.sqrt(d)
    return SyntheticWorld(np.arange(num_users), _normalize(users), np.arange(num_items), items,
                          reward_scale, reward_bias, noise_sigma, blobs)


def expected_reward(world: SyntheticWorld, user_id, item_id) -> float:
    return float(world.click_prob(np.array([world.user_row(user_id)]), world.item_rows(item_id))[0])


def draw_reward(world: SyntheticWorld, user_id, item_id, rng) -> RewardDraw:
    p = expected_reward(world, user_id, item_id)
    return RewardDraw(p, int(realize(world, np.array([p]), [rng])[0]))


def realize(world: SyntheticWorld, probs: np.ndarray, rngs) -> np.ndarray:
    """Bernoulli clicks, one uniform (plus one normal when noisy) per row from its own rng."""
    if world.noise_sigma > 0.0:
        logit = np.log(probs) - np.log1p(-probs)
        noise = np.array([r.standard_normal() for r in rngs])
        probs = sigmoid(logit + world.noise_sigma * noise)
    u = np.array([r.random() for r in rngs])
    return (u < probs).astype(np.int64)


def oracle_best(world: SyntheticWorld, user_id) -> tuple[int, float]:
    """Best item by expected reward over the whole catalogue; ties to the lowest id."""
    row = world.user_row(user_id)
    probs = sigmoid(world.reward_scale * world.item_vectors @ world.user_vectors[row] - world.reward_bias)
    best = probs.max()
    j = world.item_ids[probs == best].min()
    return int(j), float(best)


def oracle_values(world: SyntheticWorld) -> np.ndarray:
    """Per-user best expected reward, in user-row order."""
    return world.all_click_probs().max(axis=1)


def cumulative_regret(log, world: SyntheticWorld, seed=None, policy=None) -> np.ndarray:
    """Cumulative expected regret per round for one (seed, policy) of ``log``.

    Every round serves each world user once, so the oracle contributes the
    sum of per-user best expected rewards per round.
    """
    rows = log.select(seed, policy)
    if not rows:
        raise ConsistencyError("no log rows for the requested seed/policy")
    n_users = len(world.user_ids)
    if any(r.user_count != n_users for r in rows):
        raise ConsistencyError(f"log rounds serve {rows[0].user_count} users, world has {n_users}")
    best = float(oracle_values(world).sum())
    rounds = np.array([r.round for r in rows], dtype=np.float64)
    expected = np.array([r.cum_reward_expected for r in rows])
    return rounds * best - expected


def export_world(world: SyntheticWorld, item_path, user_path) -> None:
    write_embeddings(item_path, world.item_ids, world.item_vectors, "item_id")
    write_embeddings(user_path, world.user_ids, world.user_vectors, "user_id")


def import_world(embedding_file, user_vector_file, reward_scale: float = 5.0, reward_bias: float = 0.0,
                 noise_sigma: float = 0.0) -> SyntheticWorld:
    item_ids, items = read_embeddings(embedding_file, "item_id")
    user_ids, users = read_embeddings(user_vector_file, "user_id")
    if items.shape[1] != users.shape[1]:
        raise InvalidDimensionError(
            f"item file has dimension {items.shape[1]}, user file has {users.shape[1]}"
        )
    return SyntheticWorld(user_ids, users, item_ids, _normalize(items), reward_scale, reward_bias, noise_sigma)
