"""Gradient coherence: how do per-example gradients of a subset compare to the
whole training set?

For each condition (a named id subset) we compute the per-example gradient
matrix at a fixed model, its mean, and the total variance (the trace of the
per-example gradient covariance, population normalization). Distances between
condition means quantify how much a subset's preferred direction deviates
from the exact empirical gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ParameterError
from .trainer import Model


@dataclass(frozen=True)
class GradientSet:
    grads: np.ndarray  # (n, P) per-example flat gradients
    segments: tuple[tuple[str, int, int], ...]
    condition: str

    def __post_init__(self):
        g = np.asarray(self.grads, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] == 0:
            raise ParameterError("gradient set must be a non-empty (n, P) matrix")
        if not np.isfinite(g).all():
            raise ParameterError("gradient set contains non-finite values")
        object.__setattr__(self, "grads", g)


def per_example_gradients(model: Model, ids, ds: Dataset,
                          condition: str = "") -> GradientSet:
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ParameterError("ids must be non-empty")
    return GradientSet(grads=model.per_example_grads(ds.X[ids], ds.y[ids]),
                       segments=model.segments, condition=condition)


def mean_gradient(gs: GradientSet) -> np.ndarray:
    return gs.grads.mean(axis=0)


def total_variance(gs: GradientSet) -> tuple[float, dict[str, float]]:
    """Trace of the per-example gradient covariance (divide-by-n), plus the
    per-layer breakdown, which sums to the whole-model value."""
    var = gs.grads.var(axis=0)  # population variance per coordinate
    per_layer = {name: float(var[start:stop].sum()) for name, start, stop in gs.segments}
    return float(var.sum()), per_layer


def distance_matrix(sets: list[GradientSet]) -> dict:
    """Pairwise Euclidean distances between condition mean gradients.

    Returns whole-model distances plus one matrix per layer segment.
    """
    if not sets:
        raise ParameterError("need at least one gradient set")
    segs = sets[0].segments
    for gs in sets:
        if gs.segments != segs:
            raise ParameterError("gradient sets come from different model layouts")
    means = np.stack([mean_gradient(gs) for gs in sets])
    m = len(sets)

    def pairwise(block: np.ndarray) -> np.ndarray:
        out = np.zeros((m, m))
        for a in range(m):
            for b in range(a + 1, m):
                out[a, b] = out[b, a] = float(np.linalg.norm(block[a] - block[b]))
        return out

    return {
        "conditions": [gs.condition for gs in sets],
        "whole_model": pairwise(means),
        "per_layer": {name: pairwise(means[:, start:stop]) for name, start, stop in segs},
    }


def coherence_report(model: Model, ds: Dataset, conditions: dict) -> dict:
    """Mean gradient, total variance, and pairwise distances per condition.

    `conditions` maps a label to the id subset whose gradients it contributes
    (e.g. an easiest prefix, a random subset, and all training points).
    """
    if not conditions:
        raise ParameterError("need at least one condition")
    sets = [per_example_gradients(model, ids, ds, condition=name)
            for name, ids in conditions.items()]
    dm = distance_matrix(sets)
    report = {"conditions": {}, "distance_matrix": {
        "conditions": dm["conditions"],
        "whole_model": dm["whole_model"].tolist(),
        "per_layer": {k: v.tolist() for k, v in dm["per_layer"].items()},
    }}
    for gs in sets:
        total, per_layer = total_variance(gs)
        report["conditions"][gs.condition] = {
            "n_examples": int(gs.grads.shape[0]),
            "mean_gradient": mean_gradient(gs).tolist(),
            "total_variance": total,
            "total_variance_per_layer": per_layer,
        }
    return report
