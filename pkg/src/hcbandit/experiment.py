"""Config-driven multi-seed policy comparisons and Table-style reporting."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .bandits import EstimatorConfig
from .embeddings import read_labels
from .errors import ConsistencyError, InvalidConfigError, ParseError
from .policies import POLICY_NAMES, FlatPolicy, HcbPolicy, PhcbPolicy, TwoStagePolicy
from .tree import HierarchyTree, build_category_grouping, build_tree, deserialize_tree
from .world import SyntheticWorld, gen_synthetic, import_world, oracle_values, realize

log = logging.getLogger(__name__)

LOG_COLUMNS = ("seed", "policy", "round", "user_count", "cum_reward_realized",
               "cum_reward_expected", "cum_regret_expected")


@dataclass
class WorldSpec:
    source: str = "generate"
    num_users: int = 100
    num_items: int = 10000
    dim: int = 16
    num_clusters: int = 20
    seed: int = 0
    reward_scale: float = 10.0
    reward_bias: float = 6.0
    noise_sigma: float = 0.0
    item_spread: float = 1.5
    user_spread: float = 0.2
    items: str | None = None
    users: str | None = None
    labels: str | None = None


@dataclass
class TreeSpec:
    level_sizes: list[int] = field(default_factory=lambda: [1, 20, 400])
    max_iter: int = 100
    seed: int = 0
    file: str | None = None


@dataclass
class PolicySpec:
    name: str
    type: str
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)


@dataclass
class ExperimentConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    tree: TreeSpec = field(default_factory=TreeSpec)
    policies: list[PolicySpec] = field(
        default_factory=lambda: [PolicySpec(n, n) for n in POLICY_NAMES])
    rounds: int = 1000
    budget: int = 50
    q: float = 10.0
    p: float = 0.1
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    checkpoints: list[int] = field(default_factory=lambda: [100, 500, 1000, 2000])
    output: str = "out/log.csv"

    def validate(self) -> "ExperimentConfig":
        if self.rounds < 1:
            raise InvalidConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.q < 0:
            raise InvalidConfigError("q must be >= 0")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidConfigError("p must lie in [0, 1]")
        if not self.seeds:
            raise InvalidConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidConfigError("seeds must be distinct")
        if not self.policies:
            raise InvalidConfigError("at least one policy is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise InvalidConfigError(f"duplicate policy names in {names}")
        depth = len(self.tree.level_sizes) - 1
        for p in self.policies:
            if p.type not in POLICY_NAMES:
                raise InvalidConfigError(f"policy {p.name!r}: unknown type {p.type!r}; expected one of {POLICY_NAMES}")
            stages = {"flat": 1, "hcb": depth + 1}.get(p.type, 2)
            if self.budget < stages:
                raise InvalidConfigError(f"budget {self.budget} below the {stages} decision stages of {p.name}")
        if self.world.source not in ("generate", "import"):
            raise InvalidConfigError("world.source must be 'generate' or 'import'")
        if self.world.source == "import" and not (self.world.items and self.world.users):
            raise InvalidConfigError("imported worlds need world.items and world.users paths")
        if any(c < 1 for c in self.checkpoints):
            raise InvalidConfigError("checkpoints must be >= 1")
        return self


def _take(section: dict, cls, where: str):
    known = set(cls.__dataclass_fields__)
    extra = set(section) - known
    if extra:
        raise InvalidConfigError(f"[{where}]: unknown keys {sorted(extra)}")
    try:
        return cls(**section)
    except TypeError as exc:
        raise InvalidConfigError(f"[{where}]: {exc}") from None


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    data = dict(data)
    cfg = ExperimentConfig()
    if "world" in data:
        cfg.world = _take(data.pop("world"), WorldSpec, "world")
    if "tree" in data:
        cfg.tree = _take(data.pop("tree"), TreeSpec, "tree")
    if "policy" in data:
        specs = []
        for k, raw in enumerate(data.pop("policy")):
            raw = dict(raw)
            ptype = raw.pop("type", raw.get("name"))
            name = raw.pop("name", ptype)
            base = raw.pop("base", "linucb")
            try:
                est = EstimatorConfig(kind=base, **raw)
            except TypeError as exc:
                raise InvalidConfigError(f"[[policy]] #{k + 1}: {exc}") from None
            specs.append(PolicySpec(name, ptype, est))
        cfg.policies = specs
    run = data.pop("run", {})
    extra = set(run) - {"rounds", "budget", "q", "p", "seeds", "checkpoints", "output"}
    if extra or data:
        raise InvalidConfigError(f"unknown config keys {sorted(extra | set(data))}")
    for key, val in run.items():
        setattr(cfg, key, val)
    if base_dir is not None:
        w = cfg.world
        for attr in ("items", "users", "labels"):
            if getattr(w, attr):
                setattr(w, attr, str(base_dir / getattr(w, attr)))
        if cfg.tree.file:
            cfg.tree.file = str(base_dir / cfg.tree.file)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)


# -- world / tree construction -------------------------------------------------

def make_world(spec: WorldSpec) -> SyntheticWorld:
    if spec.source == "import":
        return import_world(spec.items, spec.users, spec.reward_scale, spec.reward_bias, spec.noise_sigma)
    return gen_synthetic(spec.num_users, spec.num_items, spec.dim, spec.num_clusters, spec.seed,
                         spec.reward_scale, spec.reward_bias, spec.noise_sigma,
                         spec.item_spread, spec.user_spread)


def make_tree(spec: TreeSpec, world: SyntheticWorld) -> HierarchyTree:
    if spec.file:
        return deserialize_tree(spec.file).attach_item_vectors(world.item_ids, world.item_vectors)
    return build_tree(world.item_embeddings, spec.level_sizes, spec.max_iter, spec.seed)


def category_labels(spec: WorldSpec, world: SyntheticWorld) -> dict:
    if spec.labels:
        return read_labels(spec.labels)
    if world.item_blobs is None:
        raise InvalidConfigError("cb_category needs world.labels for imported worlds")
    return {int(i): int(b) for i, b in zip(world.item_ids, world.item_blobs)}


# -- running -------------------------------------------------------------------

@dataclass
class LogRow:
    seed: int
    policy: str
    round: int
    user_count: int
    cum_reward_realized: float
    cum_reward_expected: float
    cum_regret_expected: float


@dataclass
class BudgetTrace:
    """Per-round maxima over users of charged scores (total and per stage)."""

    max_total: np.ndarray
    max_stage: np.ndarray  # (rounds, stages)
    budget: int
    per_stage_budget: int

    @property
    def violations(self) -> int:
        return int((self.max_total > self.budget).sum() + (self.max_stage > self.per_stage_budget).sum())


@dataclass
class ExperimentLog:
    rows: list[LogRow] = field(default_factory=list)
    budget: dict = field(default_factory=dict)

    def select(self, seed=None, policy=None) -> list[LogRow]:
        return [r for r in self.rows
                if (seed is None or r.seed == seed) and (policy is None or r.policy == policy)]

    def final(self, seed, policy, at_round: int | None = None) -> LogRow:
        rows = self.select(seed, policy)
        if at_round is None:
            return rows[-1]
        for r in rows:
            if r.round == at_round:
                return r
        raise ConsistencyError(f"no row for seed={seed} policy={policy} round={at_round}")

    def policies(self) -> list[str]:
        return list(dict.fromkeys(r.policy for r in self.rows))

    def seeds(self) -> list[int]:
        return list(dict.fromkeys(r.seed for r in self.rows))

    def extend(self, other: "ExperimentLog") -> None:
        self.rows.extend(other.rows)
        self.budget.update(other.budget)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r.seed, r.policy, r.round, r.user_count, repr(float(r.cum_reward_realized)),
                            repr(float(r.cum_reward_expected)), repr(float(r.cum_regret_expected))])

    @classmethod
    def from_csv(cls, path) -> "ExperimentLog":
        path = Path(path)
        out = cls()
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != LOG_COLUMNS:
                raise ParseError(f"{path}: line 1: expected header {','.join(LOG_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(LOG_COLUMNS):
                    raise ParseError(f"{path}: line {lineno}: expected {len(LOG_COLUMNS)} fields")
                try:
                    out.rows.append(LogRow(int(row[0]), row[1], int(row[2]), int(row[3]),
                                           float(row[4]), float(row[5]), float(row[6])))
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: {exc}") from None
        return out


def make_policy(spec: PolicySpec, tree: HierarchyTree, category_tree: HierarchyTree | None,
                budget: int, q: float, p: float):
    if spec.type == "hcb":
        return HcbPolicy(tree, spec.estimator, budget)
    if spec.type == "phcb":
        return PhcbPolicy(tree, spec.estimator, budget, q, p)
    if spec.type == "cb_leaf":
        return TwoStagePolicy(tree, spec.estimator, budget, spec.name)
    if spec.type == "cb_category":
        return TwoStagePolicy(category_tree, spec.estimator, budget, spec.name)
    return FlatPolicy(tree, spec.estimator, budget)


def user_rngs(seed: int, user_ids, stream: int) -> list[np.random.Generator]:
    """One generator per user, keyed by (seed, user id, stream)."""
    return [np.random.default_rng([int(seed), int(u), stream]) for u in user_ids]


def run_cell(world: SyntheticWorld, policy, seed: int, rounds: int, name: str | None = None,
             oracle: np.ndarray | None = None) -> ExperimentLog:
    """Run one (seed, policy) for ``rounds`` full passes over all users."""
    name = name or policy.name
    n = len(world.user_ids)
    users = np.arange(n)
    world_rows = world.item_rows(policy.tree.item_order)
    best = float((oracle if oracle is not None else oracle_values(world)).sum())
    state = policy.init_state(n)
    prngs = user_rngs(seed, world.user_ids, 0)
    rrngs = user_rngs(seed, world.user_ids, 1)
    out = ExperimentLog()
    max_total = np.zeros(rounds, dtype=np.int64)
    max_stage = np.zeros((rounds, policy.stages), dtype=np.int64)
    cum_real = cum_exp = 0.0
    for t in range(rounds):
        sel = policy.select(state, prngs)
        probs = world.click_prob(users, world_rows[sel.item_pos])
        rewards = realize(world, probs, rrngs)
        policy.update(state, sel, rewards.astype(np.float64))
        totals = sel.charges.sum(axis=1)
        max_total[t] = totals.max()
        max_stage[t] = sel.charges.max(axis=0)
        if max_total[t] > policy.budget:
            raise ConsistencyError(f"{name}: round {t + 1} charged {max_total[t]} > budget {policy.budget}")
        cum_real += float(rewards.sum())
        cum_exp += float(probs.sum())
        out.rows.append(LogRow(seed, name, t + 1, n, cum_real, cum_exp, (t + 1) * best - cum_exp))
    out.budget[(seed, name)] = BudgetTrace(max_total, max_stage, policy.budget, policy.per_stage)
    return out


def run_experiment(config: ExperimentConfig, world: SyntheticWorld | None = None,
                   tree: HierarchyTree | None = None) -> ExperimentLog:
    config.validate()
    world = world if world is not None else make_world(config.world)
    tree = tree if tree is not None else make_tree(config.tree, world)
    category_tree = None
    if any(p.type == "cb_category" for p in config.policies):
        category_tree = build_category_grouping(world.item_embeddings, category_labels(config.world, world))
    policies = [(s.name, make_policy(s, tree, category_tree, config.budget, config.q, config.p))
                for s in config.policies]
    oracle = oracle_values(world)
    result = ExperimentLog()
    for seed in config.seeds:
        for name, policy in policies:
            t0 = time.perf_counter()
            result.extend(run_cell(world, policy, seed, config.rounds, name, oracle))
            log.info("seed %s policy %s: %d rounds in %.1fs", seed, name, config.rounds,
                     time.perf_counter() - t0)
    return result


# -- reporting -------------------------------------------------------------------

@dataclass
class SummaryRow:
    policy: str
    round: int
    seeds: int
    reward_mean: float
    reward_std: float
    regret_mean: float
    regret_std: float


def report(logs, checkpoints=(100, 500, 1000, 2000)) -> list[SummaryRow]:
    """Mean and (population) std across seeds at each reachable checkpoint."""
    merged = ExperimentLog()
    for lg in logs if isinstance(logs, (list, tuple)) else [logs]:
        merged.extend(lg)
    if not merged.rows:
        raise ConsistencyError("no log rows to report")
    seeds = merged.seeds()
    policies = merged.policies()
    table: dict = {}
    for r in merged.rows:
        table[(r.policy, r.seed, r.round)] = r
    for s in seeds:
        have = {r.policy for r in merged.rows if r.seed == s}
        if have != set(policies):
            raise ConsistencyError(f"seed {s} has policies {sorted(have)}, expected {sorted(policies)}")
    last = min(max(r.round for r in merged.select(s, p)) for s in seeds for p in policies)
    marks = [c for c in checkpoints if c <= last] or [last]
    out = []
    for p in policies:
        for c in marks:
            rows = [table.get((p, s, c)) for s in seeds]
            if any(r is None for r in rows):
                raise ConsistencyError(f"policy {p} lacks round {c} for some seed")
            rew = np.array([r.cum_reward_realized for r in rows])
            reg = np.array([r.cum_regret_expected for r in rows])
            out.append(SummaryRow(p, c, len(rows), float(rew.mean()), float(rew.std()),
                                  float(reg.mean()), float(reg.std())))
    return out


SUMMARY_COLUMNS = ("policy", "round", "seeds", "reward_mean", "reward_std", "regret_mean", "regret_std")


def write_summary_csv(rows: list[SummaryRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.policy, r.round, r.seeds, f"{r.reward_mean:.4f}", f"{r.reward_std:.4f}",
                        f"{r.regret_mean:.4f}", f"{r.regret_std:.4f}"])


def format_table(rows: list[SummaryRow]) -> str:
    """Policies down, checkpoints across: ``mean ± std`` cumulative realized reward."""
    policies = list(dict.fromkeys(r.policy for r in rows))
    marks = list(dict.fromkeys(r.round for r in rows))
    cell = {(r.policy, r.round): f"{r.reward_mean:.2f} ± {r.reward_std:.2f}" for r in rows}
    header = ["policy"] + [str(m) for m in marks]
    body = [[p] + [cell[(p, m)] for m in marks] for p in policies]
    widths = [max(len(row[j]) for row in [header] + body) for j in range(len(header))]
    fmt = lambda row: "  ".join(v.ljust(w) if j == 0 else v.rjust(w) for j, (v, w) in enumerate(zip(row, widths)))
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
    return "\n".join(lines)


def with_overrides(config: ExperimentConfig, seeds=None, policies=None, budget=None) -> ExperimentConfig:
    cfg = replace(config)
    if seeds is not None:
        cfg.seeds = list(seeds)
    if budget is not None:
        cfg.budget = int(budget)
    if policies is not None:
        known = {p.name: p for p in config.policies}
        picked = []
        for name in policies:
            if name in known:
                picked.append(known[name])
            elif name in POLICY_NAMES:
                picked.append(PolicySpec(name, name))
            else:
                raise InvalidConfigError(f"unknown policy {name!r}")
        cfg.policies = picked
    return cfg.validate()
