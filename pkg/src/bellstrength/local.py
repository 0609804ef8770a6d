"""Deterministic local strategies and the local polytope.

A deterministic strategy assigns one outcome to each setting of each
party; the local polytope is the convex hull of the behaviors those
strategies induce under a shared settings distribution.  Strategies are
indexed canonically: with K_A = n^m single-party assignments in
lexicographic order, vertex lambda = k_B * K_A + k_A, so the Alice
assignment varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ResourceLimitError, ShapeError
from .quantum import Behavior, SettingsDistribution

VERTEX_CAP = 10 ** 7


@dataclass(frozen=True)
class DeterministicStrategy:
    """One fixed outcome per setting for each party."""

    alice_map: tuple
    bob_map: tuple

    def __post_init__(self):
        object.__setattr__(self, "alice_map", tuple(int(x) for x in self.alice_map))
        object.__setattr__(self, "bob_map", tuple(int(x) for x in self.bob_map))


@dataclass(frozen=True)
class LocalModel:
    """Mixture over deterministic strategies.

    ``weights`` align with the canonical vertex order when ``support`` is
    None, otherwise with the vertex indices listed in ``support``.
    """

    weights: np.ndarray
    support: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ShapeError("model weights must be a probability vector")
        object.__setattr__(self, "weights", w)
        if self.support is not None:
            s = np.asarray(self.support, dtype=int)
            if s.shape != w.shape:
                raise ShapeError("support indices must align with weights")
            object.__setattr__(self, "support", s)


def vertex_count(m: int, n: int) -> int:
    """Number of deterministic strategies, n^(2m)."""
    return n ** (2 * m)


def setting_maps(m: int, n: int) -> np.ndarray:
    """All n^m single-party assignments, lexicographic, as an (n^m, m) array."""
    return np.array(list(product(range(n), repeat=m)), dtype=np.intp).reshape(n ** m, m)


def enumerate_vertices(m: int, n: int, cap: int = VERTEX_CAP) -> list[DeterministicStrategy]:
    """All deterministic strategies in canonical order.

    Canonical order: the Alice assignment varies fastest, each party's
    assignments in lexicographic order.  Materializes the full list;
    guard large scenarios with the cap and use the factored helpers
    (``setting_maps`` plus ``strategy_scores``) instead.
    """
    total = vertex_count(m, n)
    if total > cap:
        raise ResourceLimitError(
            f"{total} vertices exceed cap {cap}; use the conjectured large-d path"
        )
    maps = setting_maps(m, n)
    return [
        DeterministicStrategy(tuple(maps[ka]), tuple(maps[kb]))
        for kb in range(len(maps))
        for ka in range(len(maps))
    ]


def vertex_behavior(
    strategy: DeterministicStrategy,
    settings: SettingsDistribution,
    num_outcomes: int,
) -> Behavior:
    """Behavior of a single deterministic strategy under a settings draw."""
    m = settings.num_settings
    if len(strategy.alice_map) != m or len(strategy.bob_map) != m:
        raise ShapeError("strategy does not match the number of settings")
    n = num_outcomes
    probs = np.zeros((m, m, n, n))
    for ia in range(m):
        for ib in range(m):
            probs[ia, ib, strategy.alice_map[ia], strategy.bob_map[ib]] = (
                settings.probs[ia, ib]
            )
    return Behavior(m, n, probs, settings)


def model_behavior(
    model: LocalModel,
    vertices: list[DeterministicStrategy],
    settings: SettingsDistribution,
    num_outcomes: int,
) -> Behavior:
    """Mixture behavior of a local model over an aligned vertex list."""
    if len(vertices) != len(model.weights):
        raise ShapeError(
            f"{len(model.weights)} weights for {len(vertices)} vertices"
        )
    m, n = settings.num_settings, num_outcomes
    cond = np.zeros((m, m, n, n))
    ia = np.arange(m)[:, None]
    ib = np.arange(m)[None, :]
    for w, v in zip(model.weights, vertices):
        if w == 0.0:
            continue
        amap = np.asarray(v.alice_map, dtype=np.intp)
        bmap = np.asarray(v.bob_map, dtype=np.intp)
        np.add.at(cond, (ia, ib, amap[:, None], bmap[None, :]), w)
    probs = cond * settings.probs[:, :, None, None]
    return Behavior(m, n, probs, settings)


def strategy_scores(cells: np.ndarray, amaps: np.ndarray, bmaps: np.ndarray) -> np.ndarray:
    """Evaluate sum_{i_A,i_B} cells[i_A, i_B, a(i_A), b(i_B)] for every map pair.

    ``cells`` is any (m, m, n, n) array of per-cell values; the result has
    shape (len(amaps), len(bmaps)).  This is the workhorse for local bounds
    and optimality certificates: it scores every deterministic strategy
    without materializing its behavior.
    """
    m = cells.shape[0]
    idx = np.arange(m)[None, :]
    # (i_A, j_A, i_B, j_B) layout, pick each Alice assignment, sum over i_A.
    byrow = cells.transpose(0, 2, 1, 3)
    mid = byrow[idx, amaps].sum(axis=1)          # (K_A, m, n)
    mid = mid.transpose(1, 2, 0)                 # (i_B, j_B, K_A)
    return mid[idx, bmaps].sum(axis=1).T         # (K_A, K_B)


def strategy_scores_for(
    cells: np.ndarray, strategies: list[DeterministicStrategy]
) -> np.ndarray:
    """Like ``strategy_scores`` but for an explicit list of strategies."""
    if not strategies:
        return np.zeros(0)
    m = cells.shape[0]
    amaps = np.array([s.alice_map for s in strategies], dtype=np.intp)
    bmaps = np.array([s.bob_map for s in strategies], dtype=np.intp)
    if amaps.shape[1] != m or bmaps.shape[1] != m:
        raise ShapeError("strategy length does not match cells")
    idx = np.arange(m)[None, :]
    byrow = cells.transpose(0, 2, 1, 3)
    mid = byrow[idx, amaps].sum(axis=1)          # (L, m, n)
    take = mid[np.arange(len(strategies))[:, None], idx, bmaps]
    return take.sum(axis=1)
