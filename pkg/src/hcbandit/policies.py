"""Policies over the item hierarchy: HCB, pHCB and the flat / CB-Leaf /
CB-Category baselines.

Each policy object is stateless apart from its configuration; per-user
memory lives in a bank object returned by ``init_state`` with a leading
user axis. ``select`` and ``update`` process every user of the bank at
once. The per-user functions at the bottom (``hcb_select`` and friends)
run the same code with a bank of one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bandits import EstimatorConfig, BudgetLedger, sample_positions, select_batch
from .errors import ConsistencyError, CorruptTreeError, InvalidConfigError
from .ridge import RidgeBank, RidgeState, new_ridge_state
from .tree import HierarchyTree


# -- per-user state types ------------------------------------------------------

@dataclass
class HcbUserState:
    """``level_states[0]`` scores items, ``level_states[l]`` scores level-l nodes."""

    level_states: list[RidgeState]


@dataclass
class NodeStats:
    node_id: int
    select_count: int = 0
    reward_sum: float = 0.0


@dataclass
class PhcbUserState:
    receptive_field: set[int]
    node_estimator: RidgeState
    item_estimator: RidgeState
    stats: dict[int, NodeStats] = field(default_factory=dict)


@dataclass
class TwoStageUserState:
    """Memory of the flat (item estimator only) and two-stage baselines."""

    node_estimator: RidgeState | None
    item_estimator: RidgeState


@dataclass
class PolicyOutcome:
    chosen_item: int
    node_path_or_node: list[int] | int | None
    scores_charged: int
    stage_charges: list[int] = field(default_factory=list)


@dataclass
class BatchOutcome:
    """Selections for every user of a bank; node and item entries are tree positions."""

    item_pos: np.ndarray
    item_ids: np.ndarray
    nodes: np.ndarray | None  # (U, L+1) path for HCB, (U,) node otherwise
    charges: np.ndarray  # (U, stages)


def hcb_new_user(tree: HierarchyTree) -> HcbUserState:
    return HcbUserState([new_ridge_state(tree.dimension) for _ in range(tree.depth + 1)])


def phcb_new_user(tree: HierarchyTree) -> PhcbUserState:
    d = tree.dimension
    return PhcbUserState({tree.root_id}, new_ridge_state(d), new_ridge_state(d), {})


def item_set_of(node_id: int, tree: HierarchyTree) -> set[int]:
    """Items under ``node_id``: a leaf's own items, else the union over children."""
    if node_id not in tree.nodes:
        raise CorruptTreeError(f"node {node_id} not in tree")
    node = tree.nodes[node_id]
    if node.is_leaf:
        return set(node.item_ids)
    out: set[int] = set()
    for c in node.children_ids:
        if c not in tree.nodes:
            raise CorruptTreeError(f"node {node_id} has dangling child {c}")
        out |= item_set_of(c, tree)
    return out


def check_expansion(stats: NodeStats, level: int, q: float, p: float) -> bool:
    """Expansion test for a visible non-leaf node at 1-based ``level``."""
    threshold = math.log(level)
    if stats.select_count <= 0 or stats.select_count < math.floor(q * threshold):
        return False
    return stats.reward_sum / stats.select_count > p * threshold


def _require_items(tree: HierarchyTree):
    if getattr(tree, "item_vectors", None) is None:
        raise InvalidConfigError("tree has no item vectors attached; call tree.attach_item_vectors")


class _Base:
    stages = 1

    def __init__(self, tree: HierarchyTree, config: EstimatorConfig, budget: int = 50):
        _require_items(tree)
        if budget < self.stages:
            raise InvalidConfigError(f"budget {budget} below the {self.stages} decision stages of {self.name}")
        self.tree = tree
        self.config = config
        self.budget = int(budget)
        self.per_stage = self.budget // self.stages

    def _item_stage(self, bank: RidgeBank, starts, counts, rngs):
        t = self.tree
        local, mask = sample_positions(counts, self.per_stage, rngs)
        pos = starts[:, None] + local
        ids = t.item_order[pos]
        j = select_batch(bank, self.config, t.item_vectors[pos], ids, mask, rngs)
        rows = np.arange(len(starts))
        return pos[rows, j], mask.sum(axis=1)

    def _node_stage(self, bank: RidgeBank, cand: np.ndarray, mask: np.ndarray, rngs):
        t = self.tree
        j = select_batch(bank, self.config, t.features[cand], t.node_ids[cand], mask, rngs)
        return cand[np.arange(len(cand)), j], mask.sum(axis=1)


class HcbPolicy(_Base):
    """Root-to-leaf descent with one ridge estimator per level, then an item pick."""

    name = "hcb"

    def __init__(self, tree, config, budget=50):
        self.stages = tree.depth + 1
        super().__init__(tree, config, budget)

    def init_state(self, n_users: int) -> list[RidgeBank]:
        return [RidgeBank.fresh(n_users, self.tree.dimension) for _ in range(self.stages)]

    def select(self, banks: list[RidgeBank], rngs) -> BatchOutcome:
        t = self.tree
        n = len(banks[0])
        cur = np.zeros(n, dtype=np.int64)
        path = [cur]
        charges = []
        for lv in range(1, t.depth + 1):
            counts = t.child_count[cur]
            if np.any(counts < 1):
                raise CorruptTreeError("descent reached a node without children above the leaf level")
            local, mask = sample_positions(counts, self.per_stage, rngs)
            cand = t.children_pos[cur, 0][:, None] + local
            cur, c = self._node_stage(banks[lv], cand, mask, rngs)
            path.append(cur)
            charges.append(c)
        starts, ends = t.item_start[cur], t.item_end[cur]
        if np.any(ends <= starts):
            raise CorruptTreeError("reached a leaf with an empty item set")
        item, c = self._item_stage(banks[0], starts, ends - starts, rngs)
        charges.append(c)
        return BatchOutcome(item, t.item_order[item], np.stack(path, axis=1), np.stack(charges, axis=1))

    def update(self, banks: list[RidgeBank], outcome: BatchOutcome, rewards: np.ndarray) -> None:
        t = self.tree
        if outcome.nodes.shape[1] != len(banks):
            raise ConsistencyError("path length does not match the number of level states")
        for lv in range(1, len(banks)):
            banks[lv].update(t.features[outcome.nodes[:, lv]], rewards)
        banks[0].update(t.item_vectors[outcome.item_pos], rewards)


@dataclass
class PhcbBank:
    node_bank: RidgeBank
    item_bank: RidgeBank
    select_count: np.ndarray  # (U, M) by node position
    reward_sum: np.ndarray
    fields: list[list[int]]  # sorted node positions per user

    def padded_fields(self) -> tuple[np.ndarray, np.ndarray]:
        lens = np.array([len(f) for f in self.fields], dtype=np.int64)
        arr = np.zeros((len(self.fields), int(lens.max())), dtype=np.int64)
        for u, f in enumerate(self.fields):
            arr[u, : len(f)] = f
        return arr, lens


class PhcbPolicy(_Base):
    """Receptive-field exploration that expands visible nodes into their children."""

    name = "phcb"
    stages = 2

    def __init__(self, tree, config, budget=50, q: float = 10.0, p: float = 0.1):
        super().__init__(tree, config, budget)
        if q < 0 or not 0.0 <= p <= 1.0:
            raise InvalidConfigError("need q >= 0 and 0 <= p <= 1")
        self.q, self.p = float(q), float(p)
        # 1-based level for the expansion thresholds: the root sits on level 1
        lv = tree.levels + 1
        self._min_count = np.floor(self.q * np.log(lv))
        self._min_avg = self.p * np.log(lv)
        self._is_leaf = tree.child_count == 0

    def init_state(self, n_users: int) -> PhcbBank:
        d, m = self.tree.dimension, len(self.tree.node_ids)
        return PhcbBank(RidgeBank.fresh(n_users, d), RidgeBank.fresh(n_users, d),
                        np.zeros((n_users, m), dtype=np.int64), np.zeros((n_users, m)),
                        [[0] for _ in range(n_users)])

    def select(self, bank: PhcbBank, rngs) -> BatchOutcome:
        t = self.tree
        arr, lens = bank.padded_fields()
        if np.any(lens < 1):
            raise ConsistencyError("empty receptive field")
        local, mask = sample_positions(lens, self.per_stage, rngs)
        cand = arr[np.arange(len(arr))[:, None], local]
        node, c1 = self._node_stage(bank.node_bank, cand, mask, rngs)
        starts = t.item_start[node]
        item, c2 = self._item_stage(bank.item_bank, starts, t.item_end[node] - starts, rngs)
        return BatchOutcome(item, t.item_order[item], node, np.stack([c1, c2], axis=1))

    def update(self, bank: PhcbBank, outcome: BatchOutcome, rewards: np.ndarray) -> None:
        t = self.tree
        node = outcome.nodes
        rows = np.arange(len(node))
        bank.node_bank.update(t.features[node], rewards)
        bank.item_bank.update(t.item_vectors[outcome.item_pos], rewards)
        bank.select_count[rows, node] += 1
        bank.reward_sum[rows, node] += rewards
        cnt = bank.select_count[rows, node]
        expand = (
            ~self._is_leaf[node]
            & (cnt > 0)
            & (cnt >= self._min_count[node])
            & (bank.reward_sum[rows, node] / np.maximum(cnt, 1) > self._min_avg[node])
        )
        for u in np.flatnonzero(expand):
            n = int(node[u])
            kids = t.children_pos[n, : t.child_count[n]].tolist()
            f = bank.fields[u]
            f.remove(n)
            bank.fields[u] = sorted(f + kids)


class TwoStagePolicy(_Base):
    """Pick a leaf of ``tree`` by bandit, then an item inside it.

    With a category grouping tree this is CB-Category, with a clustered
    tree CB-Leaf.
    """

    stages = 2

    def __init__(self, tree, config, budget=50, name="cb_leaf"):
        super().__init__(tree, config, budget)
        self.name = name
        leaves = np.flatnonzero(tree.child_count == 0)
        self._leaves = leaves
        self._leaf_ids = tree.node_ids[leaves]

    def init_state(self, n_users: int) -> list[RidgeBank]:
        d = self.tree.dimension
        return [RidgeBank.fresh(n_users, d), RidgeBank.fresh(n_users, d)]

    def select(self, banks, rngs) -> BatchOutcome:
        t = self.tree
        n = len(banks[0])
        local, mask = sample_positions(np.full(n, len(self._leaves)), self.per_stage, rngs)
        node, c1 = self._node_stage(banks[0], self._leaves[local], mask, rngs)
        starts = t.item_start[node]
        item, c2 = self._item_stage(banks[1], starts, t.item_end[node] - starts, rngs)
        return BatchOutcome(item, t.item_order[item], node, np.stack([c1, c2], axis=1))

    def update(self, banks, outcome: BatchOutcome, rewards) -> None:
        banks[0].update(self.tree.features[outcome.nodes], rewards)
        banks[1].update(self.tree.item_vectors[outcome.item_pos], rewards)


class FlatPolicy(_Base):
    """Plain bandit over the whole item set, budget-sampled."""

    name = "flat"
    stages = 1

    def init_state(self, n_users: int) -> list[RidgeBank]:
        return [RidgeBank.fresh(n_users, self.tree.dimension)]

    def select(self, banks, rngs) -> BatchOutcome:
        n = len(banks[0])
        total = len(self.tree.item_order)
        item, c = self._item_stage(banks[0], np.zeros(n, dtype=np.int64), np.full(n, total), rngs)
        return BatchOutcome(item, self.tree.item_order[item], None, c[:, None])

    def update(self, banks, outcome, rewards) -> None:
        banks[0].update(self.tree.item_vectors[outcome.item_pos], rewards)


# -- single-user entry points ----------------------------------------------------

def _charge(ledger: BudgetLedger | None, charges) -> None:
    if ledger is not None:
        for c in charges:
            ledger.charge(int(c))


def _to_outcome(out: BatchOutcome, tree: HierarchyTree, path: bool) -> PolicyOutcome:
    charges = [int(c) for c in out.charges[0]]
    if out.nodes is None:
        nodes = None
    elif path:
        nodes = [int(tree.node_ids[p]) for p in out.nodes[0]]
    else:
        nodes = int(tree.node_ids[out.nodes[0]])
    return PolicyOutcome(int(out.item_ids[0]), nodes, sum(charges), charges)


def _to_batch(outcome: PolicyOutcome, tree: HierarchyTree) -> BatchOutcome:
    item_pos = np.flatnonzero(tree.item_order == outcome.chosen_item)
    if item_pos.size != 1:
        raise ConsistencyError(f"item {outcome.chosen_item} not in tree")
    nodes = outcome.node_path_or_node
    if isinstance(nodes, list):
        nodes = np.array([[tree.pos[n] for n in nodes]])
    elif nodes is not None:
        nodes = np.array([tree.pos[nodes]])
    return BatchOutcome(item_pos, np.array([outcome.chosen_item]), nodes,
                        np.array([outcome.stage_charges]))


def hcb_select(user: HcbUserState, tree, config, budget, rng, ledger=None) -> PolicyOutcome:
    if len(user.level_states) != tree.depth + 1:
        raise ConsistencyError("user state has the wrong number of levels for this tree")
    out = HcbPolicy(tree, config, budget).select([RidgeBank.stack([s]) for s in user.level_states], [rng])
    _charge(ledger, out.charges[0])
    return _to_outcome(out, tree, path=True)


def hcb_update(user: HcbUserState, outcome: PolicyOutcome, r: float, tree) -> None:
    path = outcome.node_path_or_node
    if not isinstance(path, list) or len(path) != len(user.level_states):
        raise ConsistencyError("outcome path does not match the user's level states")
    banks = [RidgeBank.stack([s]) for s in user.level_states]
    policy = HcbPolicy(tree, EstimatorConfig(), budget=tree.depth + 1)
    policy.update(banks, _to_batch(outcome, tree), np.array([float(r)]))
    for bank, s in zip(banks, user.level_states):
        bank.write_back([s])


def _phcb_bank(user: PhcbUserState, tree) -> PhcbBank:
    m = len(tree.node_ids)
    count, rsum = np.zeros((1, m), dtype=np.int64), np.zeros((1, m))
    for nid, st in user.stats.items():
        count[0, tree.pos[nid]] = st.select_count
        rsum[0, tree.pos[nid]] = st.reward_sum
    return PhcbBank(RidgeBank.stack([user.node_estimator]), RidgeBank.stack([user.item_estimator]),
                    count, rsum, [sorted(tree.pos[n] for n in user.receptive_field)])


def phcb_select(user: PhcbUserState, tree, config, budget, rng, ledger=None) -> PolicyOutcome:
    if not user.receptive_field:
        raise ConsistencyError("empty receptive field")
    out = PhcbPolicy(tree, config, budget).select(_phcb_bank(user, tree), [rng])
    _charge(ledger, out.charges[0])
    return _to_outcome(out, tree, path=False)


def phcb_update(user: PhcbUserState, outcome: PolicyOutcome, r: float, tree, q: float = 10.0,
                p: float = 0.1) -> None:
    bank = _phcb_bank(user, tree)
    policy = PhcbPolicy(tree, EstimatorConfig(), budget=2, q=q, p=p)
    policy.update(bank, _to_batch(outcome, tree), np.array([float(r)]))
    bank.node_bank.write_back([user.node_estimator])
    bank.item_bank.write_back([user.item_estimator])
    nid = outcome.node_path_or_node
    k = tree.pos[nid]
    user.stats[nid] = NodeStats(nid, int(bank.select_count[0, k]), float(bank.reward_sum[0, k]))
    field_ids = {int(tree.node_ids[i]) for i in bank.fields[0]}
    for gone in user.receptive_field - field_ids:
        user.receptive_field.discard(gone)
    for new in field_ids - user.receptive_field:
        user.receptive_field.add(new)
        user.stats.setdefault(new, NodeStats(new))


def two_stage_new_user(tree: HierarchyTree, flat: bool = False) -> TwoStageUserState:
    d = tree.dimension
    return TwoStageUserState(None if flat else new_ridge_state(d), new_ridge_state(d))


def _two_stage_select(policy, user: TwoStageUserState, rng, ledger) -> PolicyOutcome:
    if isinstance(policy, FlatPolicy):
        banks = [RidgeBank.stack([user.item_estimator])]
    else:
        banks = [RidgeBank.stack([user.node_estimator]), RidgeBank.stack([user.item_estimator])]
    out = policy.select(banks, [rng])
    _charge(ledger, out.charges[0])
    return _to_outcome(out, policy.tree, path=False)


def flat_select(user: TwoStageUserState, tree, config, budget, rng, ledger=None) -> PolicyOutcome:
    return _two_stage_select(FlatPolicy(tree, config, budget), user, rng, ledger)


def cb_leaf_select(user: TwoStageUserState, tree, config, budget, rng, ledger=None) -> PolicyOutcome:
    return _two_stage_select(TwoStagePolicy(tree, config, budget, "cb_leaf"), user, rng, ledger)


def cb_category_select(user: TwoStageUserState, category_tree, config, budget, rng,
                       ledger=None) -> PolicyOutcome:
    return _two_stage_select(TwoStagePolicy(category_tree, config, budget, "cb_category"), user, rng, ledger)


def two_stage_update(user: TwoStageUserState, outcome: PolicyOutcome, r: float, tree) -> None:
    """Update for flat, CB-Leaf and CB-Category users."""
    batch = _to_batch(outcome, tree)
    rr = np.array([float(r)])
    if user.node_estimator is None:
        bank = RidgeBank.stack([user.item_estimator])
        FlatPolicy(tree, EstimatorConfig(), 1).update([bank], batch, rr)
        bank.write_back([user.item_estimator])
        return
    banks = [RidgeBank.stack([user.node_estimator]), RidgeBank.stack([user.item_estimator])]
    TwoStagePolicy(tree, EstimatorConfig(), 2).update(banks, batch, rr)
    banks[0].write_back([user.node_estimator])
    banks[1].write_back([user.item_estimator])


POLICY_NAMES = ("flat", "hcb", "phcb", "cb_leaf", "cb_category")
