"""Tree-ensemble models: canonical parsing, XGBoost dump import, prediction,
structural statistics, and random generation for benchmarks.

The canonical model document is JSON with top-level fields
``{num_features, base_score, trees: [{nodes: [...]}]}``.  Each node carries
``{id, kind, cover}`` plus ``{feature, threshold, default_side, left, right}``
for internal nodes and ``{value}`` for leaves.  Routing follows XGBoost dump
semantics: a sample goes left iff ``x[feature] < threshold``; a missing value
follows ``default_side``.  Covers are real-valued (they may be Hessian sums
rather than raw counts); the edge weight cover(child)/cover(parent) must lie
in (0, 1], so zero-cover children are rejected at parse time.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "TreeNode",
    "Tree",
    "TreeEnsemble",
    "EnsembleStats",
    "parse_canonical",
    "emit_canonical",
    "import_xgboost_dump",
    "predict",
    "stats",
    "generate_random_tree",
]


class ModelError(ValueError):
    """A model document violates the schema or a structural invariant."""


@dataclass(frozen=True)
class TreeNode:
    id: int
    kind: str  # "internal" | "leaf"
    cover: float
    feature: int | None = None
    threshold: float | None = None
    default_side: str | None = None  # "left" | "right"
    left: int | None = None
    right: int | None = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"


@dataclass(frozen=True)
class Tree:
    """One decision tree: a root id plus an arena of nodes keyed by id."""

    root: int
    nodes: dict[int, TreeNode]

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def leaves(self) -> Iterator[TreeNode]:
        for node in self.nodes.values():
            if node.is_leaf:
                yield node


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    num_features: int
    base_score: float


@dataclass(frozen=True)
class EnsembleStats:
    """Structural statistics: D (max depth), d (max distinct features on a
    path), and total node / leaf counts."""

    max_depth: int
    max_unique_features: int
    node_count: int
    leaf_count: int


# ---------------------------------------------------------------------------
# canonical format
# ---------------------------------------------------------------------------

def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ModelError(f"missing field '{key}' in {where}")
    return mapping[key]


def _as_float(value, what: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ModelError(f"{what} is not a number: {value!r}") from None
    if not math.isfinite(out):
        raise ModelError(f"{what} is not finite: {value!r}")
    return out


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelError(f"{what} must be an integer, got {value!r}")
    return value


def _validate_tree(tree: Tree, num_features: int, tree_index: int) -> None:
    nodes = tree.nodes
    where = f"tree {tree_index}"
    root = nodes[tree.root]
    if root.cover <= 0.0:
        raise ModelError(f"{where}: root cover must be positive, got {root.cover}")

    seen: set[int] = set()
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise ModelError(f"{where}: node {nid} reached twice (cycle or multiple parents)")
        seen.add(nid)
        node = nodes[nid]
        if node.cover < 0.0:
            raise ModelError(f"{where}: node {nid} has negative cover {node.cover}")
        if node.is_leaf:
            continue
        if not 0 <= node.feature < num_features:
            raise ModelError(
                f"{where}: node {nid} splits on feature {node.feature}, "
                f"but the ensemble declares num_features={num_features}"
            )
        for child_id in (node.left, node.right):
            child = nodes.get(child_id)
            if child is None:
                raise ModelError(f"{where}: node {nid} references missing child {child_id}")
            if child.cover > node.cover:
                raise ModelError(
                    f"{where}: cover monotonicity violated at node {child_id}: "
                    f"cover {child.cover} exceeds parent {nid} cover {node.cover}"
                )
            if child.cover == 0.0:
                raise ModelError(
                    f"{where}: node {child_id} has zero cover; a zero-weight edge "
                    "has no well-defined marginal multiplier and is rejected"
                )
            stack.append(child_id)
    if len(seen) != len(nodes):
        unreachable = sorted(set(nodes) - seen)
        raise ModelError(f"{where}: nodes {unreachable} are unreachable from the root")


def _node_from_dict(raw: Mapping, tree_index: int) -> TreeNode:
    where = f"tree {tree_index} node"
    nid = _as_int(_require(raw, "id", where), f"{where} id")
    where = f"tree {tree_index} node {nid}"
    kind = _require(raw, "kind", where)
    cover = _as_float(_require(raw, "cover", where), f"{where} cover")
    if kind == "leaf":
        value = _as_float(_require(raw, "value", where), f"{where} value")
        return TreeNode(id=nid, kind="leaf", cover=cover, value=value)
    if kind == "internal":
        default_side = _require(raw, "default_side", where)
        if default_side not in ("left", "right"):
            raise ModelError(f"{where}: default_side must be 'left' or 'right', got {default_side!r}")
        return TreeNode(
            id=nid,
            kind="internal",
            cover=cover,
            feature=_as_int(_require(raw, "feature", where), f"{where} feature"),
            threshold=_as_float(_require(raw, "threshold", where), f"{where} threshold"),
            default_side=default_side,
            left=_as_int(_require(raw, "left", where), f"{where} left"),
            right=_as_int(_require(raw, "right", where), f"{where} right"),
        )
    raise ModelError(f"{where}: unknown kind {kind!r}")


def _tree_from_nodes(node_list: Sequence[TreeNode], tree_index: int) -> Tree:
    nodes: dict[int, TreeNode] = {}
    for node in node_list:
        if node.id in nodes:
            raise ModelError(f"tree {tree_index}: duplicate node id {node.id}")
        nodes[node.id] = node
    child_ids = set()
    for node in nodes.values():
        if not node.is_leaf:
            child_ids.update((node.left, node.right))
    roots = [nid for nid in nodes if nid not in child_ids]
    if len(roots) != 1:
        raise ModelError(
            f"tree {tree_index}: expected exactly one root, found {sorted(roots)}"
        )
    return Tree(root=roots[0], nodes=nodes)


def parse_canonical(model_document: str | bytes | Mapping) -> TreeEnsemble:
    """Parse and validate a canonical model document (JSON text or mapping)."""
    if isinstance(model_document, (str, bytes)):
        doc = json.loads(model_document)
    else:
        doc = model_document
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be a JSON object")

    num_features = _as_int(_require(doc, "num_features", "model document"), "num_features")
    if num_features < 0:
        raise ModelError(f"num_features must be nonnegative, got {num_features}")
    base_score = _as_float(_require(doc, "base_score", "model document"), "base_score")
    raw_trees = _require(doc, "trees", "model document")
    if not isinstance(raw_trees, Sequence) or isinstance(raw_trees, (str, bytes)):
        raise ModelError("'trees' must be a list")

    trees = []
    for index, raw_tree in enumerate(raw_trees):
        raw_nodes = _require(raw_tree, "nodes", f"tree {index}")
        if not raw_nodes:
            raise ModelError(f"tree {index}: empty node list")
        tree = _tree_from_nodes(
            [_node_from_dict(r, index) for r in raw_nodes], index
        )
        _validate_tree(tree, num_features, index)
        trees.append(tree)
    return TreeEnsemble(trees=tuple(trees), num_features=num_features, base_score=base_score)


def emit_canonical(ensemble: TreeEnsemble) -> str:
    """Serialize to the canonical JSON format.

    Output is deterministic: nodes are listed in ascending id order and
    floats use shortest round-trip notation, so equal ensembles serialize
    to identical bytes.
    """
    doc = {
        "num_features": ensemble.num_features,
        "base_score": ensemble.base_score,
        "routing": "left iff value < threshold; missing follows default_side",
        "trees": [],
    }
    for tree in ensemble.trees:
        nodes = []
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            if node.is_leaf:
                nodes.append({"id": node.id, "kind": "leaf", "cover": node.cover, "value": node.value})
            else:
                nodes.append(
                    {
                        "id": node.id,
                        "kind": "internal",
                        "feature": node.feature,
                        "threshold": node.threshold,
                        "default_side": node.default_side,
                        "left": node.left,
                        "right": node.right,
                        "cover": node.cover,
                    }
                )
        doc["trees"].append({"nodes": nodes})
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------------------
# XGBoost dump import
# ---------------------------------------------------------------------------

_FEATURE_NAME_RE = re.compile(r"^f?(\d+)$")


def _xgb_feature_index(split, feature_map: Mapping[str, int] | None) -> int:
    if isinstance(split, int):
        return split
    name = str(split)
    if feature_map is not None and name in feature_map:
        return int(feature_map[name])
    match = _FEATURE_NAME_RE.match(name)
    if match is None:
        raise ModelError(
            f"cannot map split name {name!r} to a feature index; "
            "pass feature_map with an explicit name -> index mapping"
        )
    return int(match.group(1))


def _xgb_node(raw: Mapping, out: list[TreeNode], feature_map) -> int:
    nid = _as_int(_require(raw, "nodeid", "xgboost node"), "nodeid")
    if "leaf" in raw:
        out.append(
            TreeNode(
                id=nid,
                kind="leaf",
                cover=_as_float(_require(raw, "cover", f"xgboost leaf {nid}"), "cover"),
                value=_as_float(raw["leaf"], f"xgboost leaf {nid} value"),
            )
        )
        return nid
    condition = _require(raw, "split_condition", f"xgboost node {nid}")
    if isinstance(condition, (list, tuple)) or "categories" in raw:
        raise ModelError(
            f"xgboost node {nid}: categorical splits unsupported "
            "(set-membership split conditions cannot be expressed as thresholds)"
        )
    left_id = _as_int(_require(raw, "yes", f"xgboost node {nid}"), "yes")
    right_id = _as_int(_require(raw, "no", f"xgboost node {nid}"), "no")
    missing = raw.get("missing", left_id)
    if missing == left_id:
        default_side = "left"
    elif missing == right_id:
        default_side = "right"
    else:
        raise ModelError(
            f"xgboost node {nid}: 'missing' ({missing}) is neither child ({left_id}/{right_id})"
        )
    out.append(
        TreeNode(
            id=nid,
            kind="internal",
            cover=_as_float(_require(raw, "cover", f"xgboost node {nid}"), "cover"),
            feature=_xgb_feature_index(_require(raw, "split", f"xgboost node {nid}"), feature_map),
            threshold=_as_float(condition, f"xgboost node {nid} split_condition"),
            default_side=default_side,
            left=left_id,
            right=right_id,
        )
    )
    for child in _require(raw, "children", f"xgboost node {nid}"):
        _xgb_node(child, out, feature_map)
    return nid


def import_xgboost_dump(
    dump_document: str | bytes | Sequence,
    *,
    num_features: int | None = None,
    base_score: float = 0.0,
    feature_map: Mapping[str, int] | None = None,
) -> TreeEnsemble:
    """Import the per-tree JSON dump XGBoost produces (with statistics).

    Accepts the dump as one JSON array, a list of per-tree JSON strings (the
    shape ``Booster.get_dump(dump_format="json", with_stats=True)`` returns),
    or a list of parsed tree objects.  ``num_features`` defaults to one past
    the largest feature index referenced by any split.
    """
    if isinstance(dump_document, (str, bytes)):
        raw_trees = json.loads(dump_document)
    else:
        raw_trees = list(dump_document)
    if isinstance(raw_trees, Mapping):
        raw_trees = [raw_trees]

    trees = []
    for index, raw_tree in enumerate(raw_trees):
        if isinstance(raw_tree, (str, bytes)):
            raw_tree = json.loads(raw_tree)
        node_list: list[TreeNode] = []
        try:
            _xgb_node(raw_tree, node_list, feature_map)
        except ModelError as err:
            raise ModelError(f"tree {index}: {err}") from None
        trees.append(_tree_from_nodes(node_list, index))

    max_feature = -1
    for tree in trees:
        for node in tree.nodes.values():
            if not node.is_leaf:
                max_feature = max(max_feature, node.feature)
    if num_features is None:
        num_features = max_feature + 1
    for index, tree in enumerate(trees):
        _validate_tree(tree, num_features, index)
    return TreeEnsemble(trees=tuple(trees), num_features=num_features, base_score=base_score)


# ---------------------------------------------------------------------------
# prediction and statistics
# ---------------------------------------------------------------------------

def routed_child(node: TreeNode, value: float) -> int:
    """Child id the sample is routed to at an internal node.

    NaN means the feature is missing and routing follows default_side.
    """
    if math.isnan(value):
        return node.left if node.default_side == "left" else node.right
    return node.left if value < node.threshold else node.right


def predict(ensemble: TreeEnsemble, sample: Sequence[float]) -> float:
    """Score one sample: base_score plus each tree's reached leaf value."""
    x = np.asarray(sample, dtype=np.float64)
    if x.shape != (ensemble.num_features,):
        raise ValueError(
            f"sample has shape {x.shape}, expected ({ensemble.num_features},)"
        )
    score = ensemble.base_score
    for tree in ensemble.trees:
        node = tree.nodes[tree.root]
        while not node.is_leaf:
            node = tree.nodes[routed_child(node, x[node.feature])]
        score += node.value
    return score


def stats(ensemble: TreeEnsemble) -> EnsembleStats:
    """Compute max depth, max distinct-features-per-path, node and leaf counts."""
    max_depth = 0
    max_unique = 0
    node_count = 0
    leaf_count = 0
    for tree in ensemble.trees:
        node_count += len(tree.nodes)
        counts: dict[int, int] = {}

        def walk(nid: int, depth: int) -> None:
            nonlocal max_depth, max_unique, leaf_count
            node = tree.nodes[nid]
            if node.is_leaf:
                leaf_count += 1
                max_depth = max(max_depth, depth)
                max_unique = max(max_unique, len(counts))
                return
            counts[node.feature] = counts.get(node.feature, 0) + 1
            walk(node.left, depth + 1)
            walk(node.right, depth + 1)
            counts[node.feature] -= 1
            if counts[node.feature] == 0:
                del counts[node.feature]

        walk(tree.root, 0)
    return EnsembleStats(
        max_depth=max_depth,
        max_unique_features=max_unique,
        node_count=node_count,
        leaf_count=leaf_count,
    )


# ---------------------------------------------------------------------------
# random generation
# ---------------------------------------------------------------------------

class _TreeBuilder:
    """Grows one randomly pruned binary tree.

    One randomly chosen root-to-leaf spine is extended to the full target
    depth (cover permitting); side branches receive random smaller depth
    budgets and stop early, which keeps deep trees sparse the way
    depth-first-grown boosted trees are.  Child covers partition the parent
    cover with both sides >= 1, so every edge weight lies in (0, 1).
    """

    def __init__(self, rng: np.random.Generator, num_features: int,
                 repeat_prob: float, max_leaves: int):
        self.rng = rng
        self.num_features = num_features
        self.repeat_prob = repeat_prob
        self.nodes: list[TreeNode] = []
        self.splits_left = max_leaves - 1
        self.realized_depth = 0
        self.realized_unique = 0

    def _next_id(self) -> int:
        return len(self.nodes)

    def _pick_feature(self, path_features: list[int]) -> int:
        if path_features and self.rng.random() < self.repeat_prob:
            return int(path_features[self.rng.integers(len(path_features))])
        return int(self.rng.integers(self.num_features))

    def grow(self, depth_left: int, cover: float, path_features: list[int],
             depth: int) -> int:
        nid = self._next_id()
        self.nodes.append(None)  # reserve the slot; filled below
        if depth_left == 0 or cover < 2.0 or self.splits_left == 0:
            self.realized_depth = max(self.realized_depth, depth)
            self.realized_unique = max(self.realized_unique, len(set(path_features)))
            value = float(self.rng.uniform(-1.0, 1.0))
            self.nodes[nid] = TreeNode(id=nid, kind="leaf", cover=cover, value=value)
            return nid
        self.splits_left -= 1
        feature = self._pick_feature(path_features)
        threshold = float(self.rng.uniform(0.05, 0.95))
        # the spine child keeps a 70-95% cover share so covers stay >= 2
        # long enough to realize the target depth
        share = float(self.rng.uniform(0.7, 0.95))
        big = float(np.clip(np.floor(share * cover), 1.0, cover - 1.0))
        small = cover - big
        spine_side = int(self.rng.integers(2))  # 0 = left child continues deep
        covers = (big, small) if spine_side == 0 else (small, big)
        off_budget = int(self.rng.integers(0, depth_left))

        path_features.append(feature)
        children = [0, 0]
        # grow the deep side first so the leaf budget cannot starve the spine
        deep_first = (spine_side, 1 - spine_side)
        for side in deep_first:
            budget = depth_left - 1 if side == spine_side else min(off_budget, depth_left - 1)
            children[side] = self.grow(budget, covers[side], path_features, depth + 1)
        path_features.pop()

        self.nodes[nid] = TreeNode(
            id=nid,
            kind="internal",
            cover=cover,
            feature=feature,
            threshold=threshold,
            default_side="left" if self.rng.integers(2) == 0 else "right",
            left=children[0],
            right=children[1],
        )
        return nid


def generate_random_tree(
    depth: int,
    num_features: int,
    repeat_prob: float = 0.0,
    seed: int = 0,
    *,
    num_trees: int = 1,
    max_leaves: int = 256,
    root_cover: float = 1_000_000.0,
    base_score: float = 0.0,
    with_stats: bool = False,
) -> TreeEnsemble | tuple[TreeEnsemble, EnsembleStats]:
    """Generate a random ensemble for tests and benchmarks.

    Deterministic for a fixed seed.  Leaf values are uniform in [-1, 1];
    thresholds and the intended sample space are the unit interval.  With
    ``with_stats=True`` also returns the stats the generator itself realized
    while growing (an independent cross-check for :func:`stats`).
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if num_features < 1:
        raise ValueError(f"num_features must be >= 1, got {num_features}")
    if not 0.0 <= repeat_prob <= 1.0:
        raise ValueError(f"repeat_prob must be in [0, 1], got {repeat_prob}")

    seeds = np.random.SeedSequence(seed).spawn(num_trees)
    trees = []
    realized_depth = 0
    realized_unique = 0
    node_count = 0
    leaf_count = 0
    for tree_seed in seeds:
        builder = _TreeBuilder(
            np.random.default_rng(tree_seed), num_features, repeat_prob, max_leaves
        )
        root = builder.grow(depth, float(root_cover), [], 0)
        tree = Tree(root=root, nodes={node.id: node for node in builder.nodes})
        trees.append(tree)
        realized_depth = max(realized_depth, builder.realized_depth)
        realized_unique = max(realized_unique, builder.realized_unique)
        node_count += len(builder.nodes)
        leaf_count += sum(1 for node in builder.nodes if node.is_leaf)

    ensemble = TreeEnsemble(
        trees=tuple(trees), num_features=num_features, base_score=base_score
    )
    if with_stats:
        generated = EnsembleStats(
            max_depth=realized_depth,
            max_unique_features=realized_unique,
            node_count=node_count,
            leaf_count=leaf_count,
        )
        return ensemble, generated
    return ensemble
