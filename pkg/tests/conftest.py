import numpy as np
import pytest

from hcbandit.tree import ItemEmbedding, build_tree
from hcbandit.world import gen_synthetic

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


def unit_items(n, d, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return [ItemEmbedding(i, v[i]) for i in range(n)]


@pytest.fixture(scope="session")
def small_world():
    return gen_synthetic(12, 300, 6, 5, seed=3, reward_scale=8.0, reward_bias=3.0, item_spread=1.0)


@pytest.fixture(scope="session")
def small_tree(small_world):
    return build_tree(small_world.item_embeddings, [1, 4, 20], seed=1)
