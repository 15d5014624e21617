"""Item hierarchy: bottom-up K-Means construction, category grouping, JSON I/O.

Nodes are kept in a canonical breadth-first order in which the children of
every node are contiguous and every node's item set is a contiguous slice of
``HierarchyTree.item_order``. Policies rely on that layout to gather
candidates with plain slicing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptTreeError, InvalidConfigError, MissingLabelError, ParseError
from .kmeans import kmeans


@dataclass
class ItemEmbedding:
    item_id: int
    vector: np.ndarray


@dataclass
class TreeNode:
    node_id: int
    level: int
    parent_id: int | None
    children_ids: list[int]
    item_ids: list[int]
    feature: np.ndarray

    @property
    def is_leaf(self) -> bool:
        return not self.children_ids


class HierarchyTree:
    """Immutable L-level partition of the item set."""

    def __init__(self, nodes: dict[int, TreeNode], level_sizes: list[int], dimension: int):
        self.nodes = nodes
        self.level_sizes = list(level_sizes)
        self.dimension = int(dimension)
        self.item_vectors = None
        self._index()

    def attach_item_vectors(self, ids, vectors) -> "HierarchyTree":
        """Store item vectors aligned with ``item_order`` (needed by policies)."""
        ids = np.asarray(ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        row = {int(i): r for r, i in enumerate(ids)}
        missing = [int(i) for i in self.item_order if int(i) not in row]
        if missing:
            raise CorruptTreeError(f"{len(missing)} tree items lack vectors, e.g. {missing[:5]}")
        if vectors.shape[1] != self.dimension:
            raise CorruptTreeError(f"item vectors have dimension {vectors.shape[1]}, tree has {self.dimension}")
        self.item_vectors = vectors[[row[int(i)] for i in self.item_order]]
        return self

    @property
    def depth(self) -> int:
        """Number of node levels below the root (L)."""
        return len(self.level_sizes) - 1

    @property
    def root_id(self) -> int:
        return int(self.node_ids[0])

    def _index(self):
        roots = [n for n in self.nodes.values() if n.parent_id is None]
        if len(roots) != 1:
            raise CorruptTreeError(f"expected exactly one root, found {len(roots)}")
        order, items, item_start, item_end = [], [], {}, {}
        seen = set()

        def visit(nid):
            # recursion depth is bounded by the tree depth
            node = self.nodes[nid]
            item_start[nid] = len(items)
            if node.is_leaf:
                items.extend(sorted(node.item_ids))
            for c in node.children_ids:
                if c not in self.nodes:
                    raise CorruptTreeError(f"node {nid} lists missing child {c}")
                visit(c)
            item_end[nid] = len(items)

        # breadth-first node order, children kept in listed order
        frontier = [roots[0].node_id]
        while frontier:
            nxt = []
            for nid in frontier:
                if nid in seen:
                    raise CorruptTreeError(f"node {nid} reachable twice")
                seen.add(nid)
                order.append(nid)
                for c in self.nodes[nid].children_ids:
                    if c not in self.nodes:
                        raise CorruptTreeError(f"node {nid} lists missing child {c}")
                    nxt.append(c)
            frontier = nxt
        if len(order) != len(self.nodes):
            raise CorruptTreeError("tree has unreachable nodes")
        visit(roots[0].node_id)

        self.node_ids = np.array(order, dtype=np.int64)
        self.pos = {nid: i for i, nid in enumerate(order)}
        m = len(order)
        self.features = np.stack([np.asarray(self.nodes[n].feature, dtype=np.float64) for n in order])
        self.levels = np.array([self.nodes[n].level for n in order], dtype=np.int64)
        self.item_order = np.array(items, dtype=np.int64)
        self.item_start = np.array([item_start[n] for n in order], dtype=np.int64)
        self.item_end = np.array([item_end[n] for n in order], dtype=np.int64)
        self.parent_pos = np.array(
            [-1 if self.nodes[n].parent_id is None else self.pos[self.nodes[n].parent_id] for n in order],
            dtype=np.int64,
        )
        child_count = np.array([len(self.nodes[n].children_ids) for n in order], dtype=np.int64)
        self.child_count = child_count
        self.max_children = int(child_count.max()) if m else 0
        table = np.full((m, max(self.max_children, 1)), -1, dtype=np.int64)
        for i, n in enumerate(order):
            kids = [self.pos[c] for c in self.nodes[n].children_ids]
            if kids and kids != list(range(kids[0], kids[0] + len(kids))):
                raise CorruptTreeError(f"children of node {n} are not contiguous in breadth-first order")
            table[i, : len(kids)] = kids
        self.children_pos = table

    # -- queries ---------------------------------------------------------
    def item_set(self, node_id: int) -> np.ndarray:
        i = self.pos[node_id]
        return self.item_order[self.item_start[i] : self.item_end[i]]

    def leaves(self) -> list[TreeNode]:
        return [self.nodes[int(n)] for n in self.node_ids if self.nodes[int(n)].is_leaf]

    def nodes_at_level(self, level: int) -> list[TreeNode]:
        return [self.nodes[int(n)] for n, lv in zip(self.node_ids, self.levels) if lv == level]

    def __eq__(self, other) -> bool:
        if not isinstance(other, HierarchyTree):
            return NotImplemented
        return tree_equal(self, other, tol=0.0)


def tree_equal(a: HierarchyTree, b: HierarchyTree, tol: float = 1e-9) -> bool:
    if a.level_sizes != b.level_sizes or a.dimension != b.dimension or a.nodes.keys() != b.nodes.keys():
        return False
    for nid, na in a.nodes.items():
        nb = b.nodes[nid]
        if (na.level, na.parent_id, list(na.children_ids), list(na.item_ids)) != (
            nb.level, nb.parent_id, list(nb.children_ids), list(nb.item_ids)
        ):
            return False
        if np.max(np.abs(np.asarray(na.feature) - np.asarray(nb.feature)), initial=0.0) > tol:
            return False
    return True


def _as_matrix(items: list[ItemEmbedding]) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([it.item_id for it in items], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise InvalidConfigError("item ids must be unique")
    vecs = np.stack([np.asarray(it.vector, dtype=np.float64) for it in items])
    return ids, vecs


def build_tree(items: list[ItemEmbedding], level_sizes, max_iter: int = 100, seed=0) -> HierarchyTree:
    """Cluster items into ``level_sizes[-1]`` leaves, then cluster node features upward."""
    sizes = [int(k) for k in level_sizes]
    if not items:
        raise InvalidConfigError("no items to build a tree from")
    if len(sizes) < 2 or sizes[0] != 1:
        raise InvalidConfigError(f"level_sizes must start with 1 and have >= 2 levels, got {sizes}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidConfigError(f"level_sizes must strictly increase from root to leaves, got {sizes}")
    if sizes[-1] > len(items):
        raise InvalidConfigError(f"{sizes[-1]} leaves requested for {len(items)} items")
    ids, vecs = _as_matrix(items)
    rng = np.random.default_rng(seed)
    depth = len(sizes) - 1

    # bottom-up: members[l][c] lists the clusters (or items) of level l+1 grouped under c
    assign, _ = kmeans(vecs, sizes[-1], max_iter, rng)
    leaf_feats = np.stack([vecs[assign == c].mean(axis=0) for c in range(sizes[-1])])
    level_feats = {depth: leaf_feats}
    parent_of = {depth: None}
    leaf_items = [sorted(ids[assign == c].tolist()) for c in range(sizes[-1])]
    for lv in range(depth - 1, 0, -1):
        child = level_feats[lv + 1]
        a, _ = kmeans(child, sizes[lv], max_iter, rng)
        parent_of[lv + 1] = a
        level_feats[lv] = np.stack([child[a == c].mean(axis=0) for c in range(sizes[lv])])
    parent_of[1] = np.zeros(sizes[1], dtype=np.int64)
    level_feats[0] = level_feats[1].mean(axis=0, keepdims=True)

    # canonical breadth-first numbering
    nodes: dict[int, TreeNode] = {}
    nodes[0] = TreeNode(0, 0, None, [], [], level_feats[0][0])
    prev_ids = [0]  # new ids of level lv clusters, indexed by cluster number
    next_id = 1
    for lv in range(1, depth + 1):
        pa = parent_of[lv]
        order = sorted(range(sizes[lv]), key=lambda c: (prev_ids[pa[c]], c))
        cur_ids = [0] * sizes[lv]
        for c in order:
            nid = next_id
            next_id += 1
            cur_ids[c] = nid
            parent = prev_ids[pa[c]]
            nodes[parent].children_ids.append(nid)
            members = leaf_items[c] if lv == depth else []
            nodes[nid] = TreeNode(nid, lv, parent, [], members, level_feats[lv][c])
        prev_ids = cur_ids
    return HierarchyTree(nodes, sizes, vecs.shape[1]).attach_item_vectors(ids, vecs)


def build_category_grouping(items: list[ItemEmbedding], labels: dict) -> HierarchyTree:
    """One-level tree: root plus one leaf per distinct category label."""
    ids, vecs = _as_matrix(items)
    missing = [int(i) for i in ids if int(i) not in labels]
    if missing:
        raise MissingLabelError(f"{len(missing)} items have no category label, e.g. {missing[:5]}")
    groups: dict = {}
    for row, iid in enumerate(ids):
        groups.setdefault(labels[int(iid)], []).append(row)
    cats = sorted(groups, key=lambda c: (str(type(c)), c))
    nodes = {}
    feats = []
    for j, cat in enumerate(cats, start=1):
        rows = groups[cat]
        f = vecs[rows].mean(axis=0)
        feats.append(f)
        nodes[j] = TreeNode(j, 1, 0, [], sorted(ids[rows].tolist()), f)
    nodes[0] = TreeNode(0, 0, None, list(range(1, len(cats) + 1)), [], np.mean(feats, axis=0))
    tree = HierarchyTree(nodes, [1, len(cats)], vecs.shape[1]).attach_item_vectors(ids, vecs)
    tree.categories = {j: cat for j, cat in enumerate(cats, start=1)}
    return tree


# -- serialization ---------------------------------------------------------

def tree_to_dict(tree: HierarchyTree) -> dict:
    return {
        "level_sizes": tree.level_sizes,
        "dimension": tree.dimension,
        "nodes": [
            {
                "node_id": int(n.node_id),
                "level": int(n.level),
                "parent_id": None if n.parent_id is None else int(n.parent_id),
                "children_ids": [int(c) for c in n.children_ids],
                "item_ids": [int(i) for i in n.item_ids],
                "feature": [float(v) for v in n.feature],
            }
            for n in (tree.nodes[int(i)] for i in tree.node_ids)
        ],
    }


def serialize_tree(tree: HierarchyTree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree), indent=1) + "\n")


_NODE_FIELDS = ("node_id", "level", "parent_id", "children_ids", "item_ids", "feature")


def tree_from_dict(data) -> HierarchyTree:
    if not isinstance(data, dict):
        raise ParseError("tree file: top level must be an object")
    for key in ("level_sizes", "dimension", "nodes"):
        if key not in data:
            raise ParseError(f"tree file: missing field '{key}'")
    dim = data["dimension"]
    if not isinstance(dim, int) or dim < 1:
        raise ParseError("tree file: field 'dimension' must be a positive integer")
    if not isinstance(data["nodes"], list) or not data["nodes"]:
        raise ParseError("tree file: field 'nodes' must be a non-empty list")
    nodes = {}
    for k, raw in enumerate(data["nodes"]):
        where = f"tree file: nodes[{k}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: must be an object")
        for f in _NODE_FIELDS:
            if f not in raw:
                raise ParseError(f"{where}: missing field '{f}'")
        feat = raw["feature"]
        if not isinstance(feat, list) or len(feat) != dim:
            raise ParseError(f"{where}.feature: expected {dim} numbers")
        try:
            feature = np.array(feat, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}.feature: {exc}") from None
        nid = raw["node_id"]
        if nid in nodes:
            raise ParseError(f"{where}.node_id: duplicate id {nid}")
        nodes[nid] = TreeNode(nid, raw["level"], raw["parent_id"], list(raw["children_ids"]),
                              list(raw["item_ids"]), feature)
    for nid, node in nodes.items():
        if node.parent_id is not None and node.parent_id not in nodes:
            raise ParseError(f"tree file: node {nid}.parent_id references missing node {node.parent_id}")
    for nid, node in nodes.items():
        if node.parent_id is not None:
            if nid not in nodes[node.parent_id].children_ids:
                raise ParseError(f"tree file: node {nid} not listed among children of {node.parent_id}")
        for c in node.children_ids:
            if c not in nodes:
                raise ParseError(f"tree file: node {nid}.children_ids references missing node {c}")
            if nodes[c].parent_id != nid:
                raise ParseError(f"tree file: node {c}.parent_id does not point back to {nid}")
    try:
        return HierarchyTree(nodes, data["level_sizes"], dim)
    except CorruptTreeError as exc:
        raise ParseError(f"tree file: {exc}") from None


def deserialize_tree(path) -> HierarchyTree:
    text = Path(path).read_text()
    if not text.strip():
        raise ParseError(f"{path}: empty tree file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return tree_from_dict(data)
