"""The production attribution path: one depth-first traversal per tree
computes every order-s Shapley interaction value at fixed quadrature nodes.

Per tree, the traversal carries a length-n vector ``c`` holding the running
path polynomial evaluated at the rule's nodes.  Each edge multiplies in the
linear factor of its own accumulated multiplier and, when the feature was
seen higher up the path, divides out the stale ancestor factor, so the trace
always reflects one factor per distinct feature.  Interaction increments are
accumulated at every edge, for every (s-1)-subset of the other active-path
features; summing the increments over all edges telescopes the rational
terms away, leaving each key's total equal to the integral of its
interaction polynomial.

Every factor 1 + (p - 1) t is positive for multipliers p >= 0 and nodes
t in (0, 1), so the trace never cancels catastrophically; this is what keeps
the computation stable at depths where coefficient-based schemes blow up.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import TreeEnsemble, Tree, stats
from .quadrature import DEFAULT_POINTS, QuadratureRule, gauss_legendre, min_points

__all__ = [
    "AttributionResult",
    "explain",
    "explain_values",
    "explain_interactions_matrix",
    "efficiency_residuals",
    "efficiency_error",
]

# Skip the trace division when the live multiplier is this close to 1: the
# correction factor is then 1 to machine precision.  No other guard is
# needed; 1 + (p - 1) t never vanishes for p >= 0 and interior t.
DIVISION_GUARD_EPS = 1e-12


@dataclass
class AttributionResult:
    """Order-s interaction values for one explained sample.

    ``values`` maps strictly increasing feature tuples of length ``order``
    to interaction values; features appearing on no path are simply absent.
    ``bias`` is the ensemble's base score plus the expected value of the
    trees under the path-weight distribution, so for order 1 the values and
    the bias sum to the prediction.  ``inexact_rule`` flags a rule with
    fewer points than the exactness bound requires; ``diagnostic`` is set
    when the requested order exceeds the ensemble's unique-feature depth
    (all values are then zero and ``values`` is empty).
    """

    order: int
    values: dict[tuple[int, ...], float] = field(default_factory=dict)
    bias: float = 0.0
    inexact_rule: bool = False
    diagnostic: str | None = None

    def dense_first_order(self, num_features: int) -> np.ndarray:
        """Scatter order-1 values into a length F+1 vector, bias last."""
        if self.order != 1:
            raise ValueError(f"dense layout is defined for order 1, got {self.order}")
        out = np.zeros(num_features + 1, dtype=np.float64)
        for (feature,), value in self.values.items():
            out[feature] = value
        out[num_features] = self.bias
        return out


class _FlatTree:
    """Arrays of one tree in preorder, with per-node parent-edge weights."""

    __slots__ = ("feature", "threshold", "default_left", "left", "right",
                 "edge_weight", "value", "is_leaf", "bias")

    def __init__(self, tree: Tree):
        order: list[int] = []
        index: dict[int, int] = {}
        stack = [tree.root]
        while stack:
            nid = stack.pop()
            index[nid] = len(order)
            order.append(nid)
            node = tree.nodes[nid]
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        size = len(order)
        self.feature = [0] * size
        self.threshold = [0.0] * size
        self.default_left = [True] * size
        self.left = [-1] * size
        self.right = [-1] * size
        self.edge_weight = [1.0] * size
        self.value = [0.0] * size
        self.is_leaf = [False] * size
        for nid in order:
            node = tree.nodes[nid]
            pos = index[nid]
            if node.is_leaf:
                self.is_leaf[pos] = True
                self.value[pos] = node.value
            else:
                self.feature[pos] = node.feature
                self.threshold[pos] = node.threshold
                self.default_left[pos] = node.default_side == "left"
                self.left[pos] = index[node.left]
                self.right[pos] = index[node.right]
                for child in (node.left, node.right):
                    self.edge_weight[index[child]] = tree.nodes[child].cover / node.cover
        self.bias = self._bias(0, 1.0)

    def _bias(self, pos: int, w_prod: float) -> float:
        if self.is_leaf[pos]:
            return self.value[pos] * w_prod
        return (
            self._bias(self.left[pos], w_prod * self.edge_weight[self.left[pos]])
            + self._bias(self.right[pos], w_prod * self.edge_weight[self.right[pos]])
        )


def _explain_sample(
    flats: list[_FlatTree],
    x: list[float],
    order: int,
    rule: QuadratureRule,
    check_state: bool,
) -> dict[tuple[int, ...], float]:
    t = rule.nodes
    wq = rule.weights
    k = order - 1
    merged: dict[tuple[int, ...], float] = {}

    for flat in flats:
        phi: dict[tuple[int, ...], float] = {}
        p: dict[int, float] = {}  # absent key == feature not on the active path
        active: list[int] = []  # insertion-ordered view of p's keys
        gcache: dict[int, tuple[float, np.ndarray]] = {}

        def gfactor(feature: int) -> np.ndarray:
            live = p[feature]
            cached = gcache.get(feature)
            if cached is not None and cached[0] == live:
                return cached[1]
            g = (live - 1.0) / (1.0 + (live - 1.0) * t)
            gcache[feature] = (live, g)
            return g

        def accumulate(f: int, base: np.ndarray) -> None:
            if k == 0:
                key = (f,)
                inc = float(np.sum(base))
                phi[key] = phi.get(key, 0.0) + inc
                return
            others = [j for j in active if j != f]
            m = len(others)
            if m < k:
                return
            # iterative lexicographic walk over k-subsets of `others`, with a
            # prefix-product stack so each step costs O(1) vector ops
            idx = list(range(k))
            prefix: list[np.ndarray] = [None] * k  # type: ignore[list-item]

            def fill(start: int) -> None:
                for i in range(start, k):
                    g = gfactor(others[idx[i]])
                    prefix[i] = g if i == 0 else prefix[i - 1] * g

            fill(0)
            while True:
                inc = float(np.dot(base, prefix[k - 1]))
                key = tuple(sorted([f] + [others[i] for i in idx]))
                phi[key] = phi.get(key, 0.0) + inc
                pos = k - 1
                while pos >= 0 and idx[pos] == m - k + pos:
                    pos -= 1
                if pos < 0:
                    break
                idx[pos] += 1
                for i in range(pos + 1, k):
                    idx[i] = idx[i - 1] + 1
                fill(pos)

        def dfs(v: int, c: np.ndarray, w_prod: float) -> np.ndarray:
            if flat.is_leaf[v]:
                return c * (flat.value[v] * w_prod)
            f = flat.feature[v]
            xv = x[f]
            if xv != xv:  # NaN: missing value routes by default side
                go_left = flat.default_left[v]
            else:
                go_left = xv < flat.threshold[v]
            if check_state:
                snapshot = (dict(p), list(active))
            h_total = None
            for u, sat in ((flat.left[v], go_left), (flat.right[v], not go_left)):
                w_e = flat.edge_weight[u]
                pf = p.get(f)
                if pf is None:
                    p_e = 1.0 / w_e if sat else 0.0
                    p_up = 1.0
                elif pf == 0.0:
                    p_e = 0.0
                    p_up = 0.0
                else:
                    p_e = pf / w_e if sat else 0.0
                    p_up = pf
                alpha_e = p_e - 1.0
                c_child = c * (1.0 + alpha_e * t)
                if pf is not None and abs(pf - 1.0) > DIVISION_GUARD_EPS:
                    c_child = c_child / (1.0 + (pf - 1.0) * t)
                p[f] = p_e
                if pf is None:
                    active.append(f)
                h_u = dfs(u, c_child, w_prod * w_e)
                delta = alpha_e / (1.0 + alpha_e * t) - (p_up - 1.0) / (1.0 + (p_up - 1.0) * t)
                accumulate(f, wq * h_u * delta)
                if pf is None:
                    removed = active.pop()
                    del p[f]
                    if check_state:
                        assert removed == f
                else:
                    p[f] = pf
                h_total = h_u if h_total is None else h_total + h_u
            if check_state:
                assert (dict(p), list(active)) == snapshot, "path state not restored"
            return h_total

        dfs(0, np.ones_like(t), 1.0)
        if check_state:
            assert not p and not active
        for key, value in phi.items():
            if key in merged:
                merged[key] += value
            else:
                merged[key] = value
    return merged


def _flatten(ensemble: TreeEnsemble) -> list[_FlatTree]:
    return [_FlatTree(tree) for tree in ensemble.trees]


def _as_matrix(samples, num_features: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != num_features:
        raise ValueError(
            f"samples must have {num_features} columns, got shape {x.shape}"
        )
    return x


def explain(
    ensemble: TreeEnsemble,
    samples,
    order: int = 1,
    rule: QuadratureRule | None = None,
    *,
    workers: int = 1,
    check_state: bool = False,
) -> list[AttributionResult]:
    """All order-s interaction values for each sample.

    With a rule of at least ``min_points(d, order)`` points the output is
    exact up to floating error; a smaller rule is still computed but flagged
    ``inexact_rule``.  Requesting an order above the ensemble's
    unique-feature depth yields empty values with a diagnostic (every such
    interaction is identically zero), never an exception.
    """
    if order < 1:
        raise ValueError(f"interaction order must be >= 1, got {order}")
    if rule is None:
        rule = gauss_legendre(DEFAULT_POINTS)
    x = _as_matrix(samples, ensemble.num_features)
    flats = _flatten(ensemble)
    bias = ensemble.base_score + sum(flat.bias for flat in flats)
    depth = stats(ensemble).max_unique_features

    if order > depth:
        diagnostic = (
            f"order {order} exceeds the ensemble's unique-feature depth {depth}; "
            "all interactions of this order are exactly zero"
        )
        return [
            AttributionResult(order=order, values={}, bias=bias, diagnostic=diagnostic)
            for _ in range(x.shape[0])
        ]

    inexact = rule.n < min_points(depth, order)
    rows = [row.tolist() for row in x]

    def run(row: list[float]) -> dict[tuple[int, ...], float]:
        return _explain_sample(flats, row, order, rule, check_state)

    if workers <= 1:
        phis = [run(row) for row in rows]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            phis = list(pool.map(run, rows))
    return [
        AttributionResult(order=order, values=phi, bias=bias, inexact_rule=inexact)
        for phi in phis
    ]


def explain_values(
    ensemble: TreeEnsemble,
    samples,
    rule: QuadratureRule | None = None,
    *,
    workers: int = 1,
) -> np.ndarray:
    """First-order values in dense layout: one row per sample, F feature
    columns then the bias column."""
    results = explain(ensemble, samples, order=1, rule=rule, workers=workers)
    return np.vstack([r.dense_first_order(ensemble.num_features) for r in results])


def explain_interactions_matrix(
    ensemble: TreeEnsemble,
    samples,
    rule: QuadratureRule | None = None,
    *,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise interactions packed as per-sample F x F matrices.

    Each off-diagonal pair (i, j) and (j, i) carries half the pairwise
    interaction value; the diagonal holds the first-order value minus the
    feature's half-interactions, so the whole matrix sums to the prediction
    minus the bias.  Returns (matrices of shape (M, F, F), biases of shape
    (M,)).
    """
    first = explain(ensemble, samples, order=1, rule=rule, workers=workers)
    second = explain(ensemble, samples, order=2, rule=rule, workers=workers)
    num_features = ensemble.num_features
    matrices = np.zeros((len(first), num_features, num_features), dtype=np.float64)
    biases = np.empty(len(first), dtype=np.float64)
    for row, (r1, r2) in enumerate(zip(first, second)):
        mat = matrices[row]
        for (i, j), value in r2.values.items():
            mat[i, j] = mat[j, i] = 0.5 * value
        off_sums = mat.sum(axis=1)
        for (i,), value in r1.values.items():
            mat[i, i] = value - off_sums[i]
        biases[row] = r1.bias
    return matrices, biases


def efficiency_residuals(
    ensemble: TreeEnsemble,
    samples,
    rule: QuadratureRule | None = None,
    *,
    workers: int = 1,
) -> np.ndarray:
    """Per-sample signed residual of the additivity identity:
    (sum of first-order values + bias) - prediction."""
    from .model import predict

    x = _as_matrix(samples, ensemble.num_features)
    dense = explain_values(ensemble, x, rule=rule, workers=workers)
    residuals = np.empty(x.shape[0], dtype=np.float64)
    for i in range(x.shape[0]):
        residuals[i] = dense[i].sum() - predict(ensemble, x[i])
    return residuals


def efficiency_error(
    ensemble: TreeEnsemble,
    samples,
    rule: QuadratureRule | None = None,
    *,
    workers: int = 1,
) -> float:
    """Largest absolute additivity residual over the samples."""
    residuals = efficiency_residuals(ensemble, samples, rule=rule, workers=workers)
    return float(np.max(np.abs(residuals))) if residuals.size else 0.0
