"""Exact, exponential-time reference implementations of the per-leaf
cooperative game and its attribution indices.

Every leaf of a tree induces a game over feature subsets: the leaf's value
scaled by the training mass of its path when no feature is known, multiplied
by a per-feature marginal multiplier for each known feature.  This module
evaluates that game and its discrete derivatives, probability-weighted
interaction values, and Shapley interaction indices by literal enumeration.
It is the ground truth the fast engine is tested against; nothing here is
meant to be fast.

Two independent routes exist for most quantities (alternating-sum vs closed
form, expectation enumeration vs product polynomial, factorial weights vs
integral) so that each can check the other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import Tree, TreeEnsemble, routed_child
from .quadrature import QuadratureRule, gauss_legendre

__all__ = [
    "PathGame",
    "extract_path_games",
    "game_value",
    "discrete_derivative",
    "discrete_derivative_closed",
    "weighted_banzhaf_exact",
    "banzhaf_poly",
    "sii_exact",
    "sii_exact_all",
    "sii_exact_full_universe",
    "shapley_exact",
    "bias_value",
]

MAX_DERIVATIVE_SET = 25
MAX_EXPECTATION_REST = 20
MAX_FULL_UNIVERSE_FEATURES = 12

# 64 points integrate polynomials up to degree 127 exactly, far beyond any
# per-leaf integrand at oracle scale
_REFERENCE_RULE: QuadratureRule = gauss_legendre(64)


@dataclass(frozen=True)
class PathGame:
    """The cooperative game induced by one leaf for one sample.

    ``r_empty`` is the leaf value times the product of edge weights on its
    path (the leaf's share when no feature is known).  ``q`` maps each
    distinct path feature to its marginal multiplier: the inverse product of
    that feature's edge weights when the sample satisfies all of the
    feature's splits on the path, and exactly 0.0 otherwise.  Features
    absent from ``q`` multiply the game by 1 and receive no attribution.
    """

    leaf_id: int
    r_empty: float
    q: dict[int, float]
    features: frozenset[int] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "features", frozenset(self.q))

    def alpha(self, feature: int) -> float:
        return self.q.get(feature, 1.0) - 1.0


def extract_path_games(ensemble: TreeEnsemble, sample: Sequence[float]) -> list[PathGame]:
    """One game per leaf per tree, in depth-first (left-first) leaf order.

    A feature split several times along one path folds into a single
    multiplier: the product of the inverses of its edge weights, zeroed if
    the sample violates any of those splits.  A missing feature value routes
    by default_side and counts as satisfying the splits along that route.
    """
    x = np.asarray(sample, dtype=np.float64)
    games: list[PathGame] = []
    for tree in ensemble.trees:
        _collect_games(tree, tree.root, x, 1.0, {}, games)
    return games


def _collect_games(
    tree: Tree,
    node_id: int,
    x: np.ndarray,
    weight_product: float,
    per_feature: dict[int, tuple[float, bool]],
    out: list[PathGame],
) -> None:
    node = tree.nodes[node_id]
    if node.is_leaf:
        q = {
            f: (1.0 / w if satisfied else 0.0)
            for f, (w, satisfied) in per_feature.items()
        }
        out.append(PathGame(leaf_id=node.id, r_empty=node.value * weight_product, q=q))
        return
    taken = routed_child(node, x[node.feature])
    previous = per_feature.get(node.feature)
    for child_id in (node.left, node.right):
        child = tree.nodes[child_id]
        w_edge = child.cover / node.cover
        w_prev, sat_prev = previous if previous is not None else (1.0, True)
        per_feature[node.feature] = (w_prev * w_edge, sat_prev and child_id == taken)
        _collect_games(tree, child_id, x, weight_product * w_edge, per_feature, out)
    if previous is None:
        del per_feature[node.feature]
    else:
        per_feature[node.feature] = previous


def game_value(game: PathGame, coalition: Iterable[int]) -> float:
    """Game value of a coalition: r_empty times the members' multipliers."""
    value = game.r_empty
    for feature in coalition:
        value *= game.q.get(feature, 1.0)
    return value


def discrete_derivative(game: PathGame, s_set: Iterable[int], t_set: Iterable[int]) -> float:
    """Alternating-sign sum of game values over all subsets of ``s_set``
    unioned with ``t_set``, enumerated literally."""
    s_tuple = tuple(dict.fromkeys(s_set))
    t_tuple = tuple(dict.fromkeys(t_set))
    if set(s_tuple) & set(t_tuple):
        raise ValueError("derivative set and context set must be disjoint")
    if len(s_tuple) > MAX_DERIVATIVE_SET:
        raise ValueError(
            f"refusing alternating sum over 2^{len(s_tuple)} subsets "
            f"(limit {MAX_DERIVATIVE_SET})"
        )
    size = len(s_tuple)
    total = 0.0
    for r in range(size + 1):
        sign = -1.0 if (size - r) % 2 else 1.0
        for subset in itertools.combinations(s_tuple, r):
            total += sign * game_value(game, t_tuple + subset)
    return total


def discrete_derivative_closed(game: PathGame, s_set: Iterable[int], t_set: Iterable[int]) -> float:
    """Closed form of :func:`discrete_derivative`: zero unless every member
    of ``s_set`` lies on the path; otherwise r_empty times (q_j - 1) over
    ``s_set`` times q_j over the path members of ``t_set``."""
    s_tuple = tuple(dict.fromkeys(s_set))
    t_tuple = tuple(dict.fromkeys(t_set))
    if set(s_tuple) & set(t_tuple):
        raise ValueError("derivative set and context set must be disjoint")
    if not set(s_tuple) <= game.features:
        return 0.0
    value = game.r_empty
    for feature in s_tuple:
        value *= game.q[feature] - 1.0
    for feature in t_tuple:
        if feature in game.features:
            value *= game.q[feature]
    return value


def weighted_banzhaf_exact(game: PathGame, s_set: Iterable[int], p: float) -> float:
    """Expectation of the discrete derivative when each non-member path
    feature joins the context independently with probability ``p``,
    enumerated over all contexts.

    Features off the path are null players: including them changes no game
    value, so the expectation over the full feature universe collapses to
    the path features (a test verifies this rather than assuming it).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"inclusion probability must be in [0, 1], got {p}")
    s_tuple = tuple(dict.fromkeys(s_set))
    rest = sorted(game.features - set(s_tuple))
    if len(rest) > MAX_EXPECTATION_REST:
        raise ValueError(
            f"refusing expectation over 2^{len(rest)} contexts "
            f"(limit {MAX_EXPECTATION_REST})"
        )
    total = 0.0
    for r in range(len(rest) + 1):
        prob = p**r * (1.0 - p) ** (len(rest) - r)
        if prob == 0.0:
            continue
        for t_subset in itertools.combinations(rest, r):
            total += prob * discrete_derivative(game, s_tuple, t_subset)
    return total


def banzhaf_poly(game: PathGame, s_set: Iterable[int], p):
    """Closed-form interaction polynomial in the inclusion probability.

    Zero unless every member of ``s_set`` is on the path; otherwise
    r_empty times (q_j - 1) over the members times the product of
    (1 + (q_j - 1) p) over the remaining path features.  The product form
    cancels the members' linear factors outright, so no division occurs and
    every remaining factor is positive for p in (0, 1).

    ``p`` may be a scalar or an ndarray of probabilities.
    """
    s_tuple = tuple(dict.fromkeys(s_set))
    scalar = np.isscalar(p)
    p_arr = np.asarray(p, dtype=np.float64)
    if not set(s_tuple) <= game.features:
        out = np.zeros_like(p_arr)
        return float(out) if scalar else out
    coeff = game.r_empty
    for feature in s_tuple:
        coeff *= game.q[feature] - 1.0
    out = np.full_like(p_arr, coeff)
    for feature in game.features - set(s_tuple):
        out = out * (1.0 + (game.q[feature] - 1.0) * p_arr)
    return float(out) if scalar else out


def _factorial_weight(t_size: int, universe_size: int) -> float:
    return (
        math.factorial(t_size)
        * math.factorial(universe_size - t_size)
        / math.factorial(universe_size + 1)
    )


def _leaf_sii_factorial(game: PathGame, s_tuple: tuple[int, ...]) -> float:
    """Per-leaf Shapley interaction by factorial-weighted enumeration.

    The context sum runs over the leaf's own path features rather than the
    declared feature universe; null players drop out of the weighted sum
    without changing it, which shrinks the enumeration from 2^F to
    2^(path size).  The full-universe variant below validates this
    reduction on small inputs.
    """
    rest = sorted(game.features - set(s_tuple))
    total = 0.0
    for r in range(len(rest) + 1):
        weight = _factorial_weight(r, len(rest))
        for t_subset in itertools.combinations(rest, r):
            total += weight * discrete_derivative(game, s_tuple, t_subset)
    return total


def sii_exact(games: Iterable[PathGame], s_set: Iterable[int]) -> float:
    """Shapley interaction index of a feature set, summed over leaf games.

    Factorial-weighted enumeration per leaf (see :func:`_leaf_sii_factorial`);
    exponential in the path size and intended purely as a test oracle.
    """
    s_tuple = tuple(dict.fromkeys(s_set))
    if not s_tuple:
        raise ValueError("interaction set must be nonempty")
    total = 0.0
    for game in games:
        if set(s_tuple) <= game.features:
            total += _leaf_sii_factorial(game, s_tuple)
    return total


def sii_exact_all(games: Iterable[PathGame], order: int) -> dict[tuple[int, ...], float]:
    """Every order-``order`` Shapley interaction with a nonzero-capable key.

    Integrates the closed-form interaction polynomial with a 64-point rule
    per (leaf, key); keys are sorted feature tuples drawn from each leaf's
    path features.  This is the bulk companion to :func:`sii_exact` (the
    equivalence of the two routes is itself under test).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    nodes = _REFERENCE_RULE.nodes
    weights = _REFERENCE_RULE.weights
    out: dict[tuple[int, ...], float] = {}
    for game in games:
        feats = sorted(game.features)
        if len(feats) < order:
            continue
        factors = {f: 1.0 + (game.q[f] - 1.0) * nodes for f in feats}
        for key in itertools.combinations(feats, order):
            coeff = game.r_empty
            for f in key:
                coeff *= game.q[f] - 1.0
            prod = np.ones_like(nodes)
            excluded = set(key)
            for f in feats:
                if f not in excluded:
                    prod = prod * factors[f]
            value = coeff * float(np.dot(weights, prod))
            out[key] = out.get(key, 0.0) + value
    return out


def sii_exact_full_universe(
    games: Iterable[PathGame], s_set: Iterable[int], num_features: int
) -> float:
    """Shapley interaction by factorial-weighted enumeration over the whole
    declared feature universe, null players included.

    Exponential in ``num_features``; exists only to validate that dropping
    null players from the enumeration (as :func:`sii_exact` does) is sound.
    """
    if num_features > MAX_FULL_UNIVERSE_FEATURES:
        raise ValueError(
            f"refusing full-universe enumeration over 2^{num_features} contexts "
            f"(limit {MAX_FULL_UNIVERSE_FEATURES})"
        )
    s_tuple = tuple(dict.fromkeys(s_set))
    rest = [f for f in range(num_features) if f not in s_tuple]
    total = 0.0
    for game in games:
        for r in range(len(rest) + 1):
            weight = _factorial_weight(r, len(rest))
            for t_subset in itertools.combinations(rest, r):
                total += weight * discrete_derivative(game, s_tuple, t_subset)
    return total


def shapley_exact(games: Iterable[PathGame], feature: int) -> float:
    """First-order Shapley value of one feature."""
    return sii_exact(games, (feature,))


def bias_value(ensemble: TreeEnsemble, games: Iterable[PathGame]) -> float:
    """The attribution offset: base score plus every leaf's empty-coalition
    share."""
    return ensemble.base_score + sum(game.r_empty for game in games)
