"""Desk-scale benchmark harness: stability-versus-depth curves, interaction
order scaling, and plot-ready CSV output.

The published runtime tables for trained benchmark models are out of scope
here (they need the trained ensembles and competitor implementations); the
harness instead measures this implementation on synthetic random ensembles
and reports efficiency-violation and timing curves whose shapes can be
compared against the published ones.  Every CSV notes this in its comment
header.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import efficiency_residuals, explain, explain_values
from .model import TreeEnsemble, generate_random_tree
from .quadrature import QuadratureRule, gauss_legendre

__all__ = [
    "StabilityRow",
    "StabilityReport",
    "ScalingRow",
    "ScalingReport",
    "run_stability",
    "run_scaling",
    "make_samples",
]

_HEADER_NOTE = (
    "synthetic desk-scale benchmark; published runtime tables for trained "
    "models are out of scope and not reproduced here"
)

MAX_STABILITY_DEPTH = 64
TIMING_REPEATS = 5
TIMING_WARMUP = 1


@dataclass(frozen=True)
class StabilityRow:
    depth: int
    points: int
    max_efficiency_error: float
    mean_efficiency_error: float
    wall_time_s: float
    model_seed: int
    sample_seed: int


@dataclass(frozen=True)
class StabilityReport:
    rows: tuple[StabilityRow, ...]
    workers: int
    samples_per_depth: int
    num_features: int

    COLUMNS = (
        "depth", "points", "max_efficiency_error", "mean_efficiency_error",
        "wall_time_s", "model_seed", "sample_seed",
    )

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# {_HEADER_NOTE}\n")
        out.write(
            f"# workers={self.workers} samples_per_depth={self.samples_per_depth} "
            f"num_features={self.num_features}\n"
        )
        out.write(",".join(self.COLUMNS) + "\n")
        for r in self.rows:
            out.write(
                f"{r.depth},{r.points},{r.max_efficiency_error!r},"
                f"{r.mean_efficiency_error!r},{r.wall_time_s!r},"
                f"{r.model_seed},{r.sample_seed}\n"
            )
        return out.getvalue()


@dataclass(frozen=True)
class ScalingRow:
    order: int
    points: int
    wall_time_s: float
    nonzero_keys: int


@dataclass(frozen=True)
class ScalingReport:
    rows: tuple[ScalingRow, ...]
    workers: int

    COLUMNS = ("order", "points", "wall_time_s", "nonzero_keys")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# {_HEADER_NOTE}\n")
        out.write(f"# workers={self.workers}\n")
        out.write(",".join(self.COLUMNS) + "\n")
        for r in self.rows:
            out.write(f"{r.order},{r.points},{r.wall_time_s!r},{r.nonzero_keys}\n")
        return out.getvalue()


def make_samples(
    num_samples: int,
    num_features: int,
    seed: int,
    missing_fraction: float = 0.1,
) -> np.ndarray:
    """Uniform samples on the unit cube with a seeded share of missing
    (NaN) entries, matching the generated trees' threshold range."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(num_samples, num_features))
    if missing_fraction > 0.0:
        mask = rng.random(size=x.shape) < missing_fraction
        x[mask] = np.nan
    return x


def _timed(fn: Callable[[], object], repeats: int, warmup: int) -> float:
    """Median wall-clock seconds over ``repeats`` runs after ``warmup``."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def _derive_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([seed, *parts]).generate_state(1)[0])


def run_stability(
    depths: Sequence[int],
    rule_sizes: Sequence[int],
    num_features: int,
    samples_per_depth: int,
    seed: int,
    *,
    num_trees: int = 3,
    max_leaves: int = 256,
    repeat_prob: float = 0.15,
    workers: int = 1,
    repeats: int = TIMING_REPEATS,
    warmup: int = TIMING_WARMUP,
) -> StabilityReport:
    """Efficiency-violation and timing curve over tree depth.

    For each requested depth a random sparse ensemble is generated, a seeded
    batch of samples is explained at order 1 with each rule size, and the
    max/mean absolute additivity residuals are recorded.  Error fields are a
    pure function of (model seed, sample seed, rule size), so any row can be
    recomputed from the stored seeds; wall times are medians and are
    excluded from determinism guarantees.
    """
    for depth in depths:
        if depth > MAX_STABILITY_DEPTH:
            raise ValueError(
                f"depth {depth} exceeds the harness cap {MAX_STABILITY_DEPTH}"
            )
    rows = []
    for depth in depths:
        model_seed = _derive_seed(seed, depth, 0)
        sample_seed = _derive_seed(seed, depth, 1)
        ensemble = generate_random_tree(
            depth, num_features, repeat_prob, model_seed,
            num_trees=num_trees, max_leaves=max_leaves,
        )
        samples = make_samples(samples_per_depth, num_features, sample_seed)
        for points in rule_sizes:
            rule = gauss_legendre(points)
            residuals = efficiency_residuals(ensemble, samples, rule, workers=workers)
            wall = _timed(
                lambda: explain_values(ensemble, samples, rule, workers=workers),
                repeats, warmup,
            )
            rows.append(
                StabilityRow(
                    depth=depth,
                    points=points,
                    max_efficiency_error=float(np.max(np.abs(residuals))),
                    mean_efficiency_error=float(np.mean(np.abs(residuals))),
                    wall_time_s=wall,
                    model_seed=model_seed,
                    sample_seed=sample_seed,
                )
            )
    return StabilityReport(
        rows=tuple(rows),
        workers=workers,
        samples_per_depth=samples_per_depth,
        num_features=num_features,
    )


def run_scaling(
    orders: Sequence[int],
    ensemble: TreeEnsemble,
    sample,
    rule: QuadratureRule,
    *,
    workers: int = 1,
    repeats: int = TIMING_REPEATS,
    warmup: int = TIMING_WARMUP,
) -> ScalingReport:
    """Wall time and key counts for a single explained row across orders."""
    orders = list(orders)
    if any(b <= a for a, b in zip(orders, orders[1:])):
        raise ValueError(f"orders must be strictly increasing, got {orders}")
    sample = np.asarray(sample, dtype=np.float64)
    rows = []
    for order in orders:
        result = explain(ensemble, sample, order=order, rule=rule, workers=workers)[0]
        wall = _timed(
            lambda: explain(ensemble, sample, order=order, rule=rule, workers=workers),
            repeats, warmup,
        )
        nonzero = sum(1 for v in result.values.values() if v != 0.0)
        rows.append(
            ScalingRow(order=order, points=rule.n, wall_time_s=wall, nonzero_keys=nonzero)
        )
    return ScalingReport(rows=tuple(rows), workers=workers)
