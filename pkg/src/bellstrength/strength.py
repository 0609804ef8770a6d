"""Statistical strength of a behavior against local hidden-variable models.

The strength of a behavior q is the Kullback-Leibler divergence, in bits
per trial, from q to the closest point of the local polytope.  Finding
that point is a convex mixture fit, solved here with multiplicative EM
updates on the vertex weights:

    w_lambda <- w_lambda * sum_i q_i V_{lambda,i} / p_i

where p is the current mixture.  Each update can only decrease the
divergence, and first-order optimality doubles as a global certificate:
at the optimum no deterministic strategy scores above 1 under
sum_i q_i V_{lambda,i} / p_i.  The certificate gap (max score - 1) is
reported with every result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ResourceLimitError, ShapeError
from .local import LocalModel, setting_maps, strategy_scores, strategy_scores_for, vertex_count
from .quantum import Behavior

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERATIONS = 10 ** 6
VERTEX_CAP = 10 ** 7
PRUNE_MASS = 1e-15
STARVED_WEIGHT = 1e-20
REVIVE_WEIGHT = 1e-12


@dataclass(frozen=True)
class StrengthResult:
    """Outcome of a strength computation.

    ``certificate_gap`` below the solve tolerance certifies that
    ``local_model`` is the global best fit; ``local_behavior`` is its
    behavior under the shared settings distribution.
    """

    divergence_bits: float
    local_model: LocalModel
    certificate_gap: float
    iterations: int
    local_behavior: Behavior
    trace: tuple = ()


def kl_divergence(q: Behavior, p: Behavior) -> float:
    """KL divergence D(q || p) in bits; +inf if p misses part of q's support."""
    if q.m != p.m or q.n != p.n:
        raise ShapeError("behaviors are indexed by different scenarios")
    qv = q.vector
    pv = p.vector
    mask = qv > 0
    if np.any(pv[mask] <= 0):
        return float("inf")
    return float(np.sum(qv[mask] * np.log2(qv[mask] / pv[mask])))


def _one_hot(maps: np.ndarray, n: int) -> np.ndarray:
    """(m*n, K) selector matrix with rows indexed i*n + j."""
    k, m = maps.shape
    sel = np.zeros((m * n, k))
    rows = (np.arange(m)[None, :] * n + maps).ravel()
    sel[rows, np.repeat(np.arange(k), m)] = 1.0
    return sel


def _mixture_conditionals(w: np.ndarray, sel_a: np.ndarray, sel_b: np.ndarray,
                          m: int, n: int) -> np.ndarray:
    """Conditional behavior of the mixture with weight matrix w."""
    joint = (sel_a @ w) @ sel_b.T            # rows (i_A, j_A), cols (i_B, j_B)
    return joint.reshape(m, n, m, n).transpose(0, 2, 1, 3)


def min_kl_local(
    q: Behavior,
    tol: float = DEFAULT_TOL,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    vertex_cap: int = VERTEX_CAP,
    initial_weights: np.ndarray | None = None,
    prune: bool = False,
    accelerate: bool = True,
    record_trace: bool = False,
) -> StrengthResult:
    """Minimize D(q || p) over local models sharing q's settings distribution.

    Args:
      q: the behavior whose strength is wanted.
      tol: certificate tolerance; the solve stops once no vertex scores
        above 1 + tol.
      max_iterations: EM update cap; exceeded raises ConvergenceError
        carrying the best iterate.
      vertex_cap: refuse scenarios with more than this many vertices.
      initial_weights: optional warm start, a weight vector in canonical
        vertex order (or a K_A x K_B matrix).  Default is uniform.
      prune: drop assignment rows/columns whose total weight falls below
        1e-15; the certificate is always re-checked against every vertex.
      accelerate: take safeguarded over-relaxed steps (w * s^alpha) when
        they decrease the divergence at least as much as a plain step.
      record_trace: keep the divergence after every update in the result.
    """
    m, n = q.m, q.n
    total = vertex_count(m, n)
    if total > vertex_cap:
        raise ResourceLimitError(
            f"{total} vertices exceed cap {vertex_cap}; use the conjectured path"
        )
    p_m = q.settings.probs
    q_c = q.conditionals()
    q_joint = q_c * p_m[:, :, None, None]
    qpos = q_joint > 0
    h_q = float(np.sum(q_joint[qpos] * np.log2(q_c[qpos])))

    amaps = setting_maps(m, n)
    ka_full = amaps.shape[0]
    sel_full = _one_hot(amaps, n)

    if initial_weights is None:
        w = np.full((ka_full, ka_full), 1.0 / total)
    else:
        w = np.asarray(initial_weights, dtype=float)
        if w.ndim == 1:
            if w.size != total:
                raise ShapeError(f"expected {total} weights, got {w.size}")
            w = w.reshape(ka_full, ka_full).T.copy()
        elif w.shape != (ka_full, ka_full):
            raise ShapeError(f"expected weight matrix {(ka_full, ka_full)}, got {w.shape}")
        else:
            w = w.copy()
        w = np.maximum(w, 0.0)
        w /= w.sum()

    act_a = np.arange(ka_full)
    act_b = np.arange(ka_full)
    sel_a = sel_full
    sel_b = sel_full
    pruned = False

    def divergence(p_c: np.ndarray) -> float:
        if np.any(qpos & (p_c <= 0)):
            return float("inf")
        return h_q - float(np.sum(q_joint[qpos] * np.log2(p_c[qpos])))

    def ratio_cells(p_c: np.ndarray) -> np.ndarray:
        r = np.zeros_like(q_joint)
        np.divide(q_joint, p_c, out=r, where=qpos)
        return r

    p_c = _mixture_conditionals(w, sel_a, sel_b, m, n)
    d_cur = divergence(p_c)
    trace = [d_cur] if record_trace else None
    iterations = 0
    gap = float("inf")
    alpha_hi = 32.0

    while True:
        ratio = ratio_cells(p_c)
        scores = strategy_scores(ratio, amaps, amaps)
        gap = float(scores.max() - 1.0)
        if gap <= tol:
            break
        if iterations >= max_iterations:
            raise ConvergenceError(
                f"no certificate after {iterations} iterations (gap {gap:.3e})",
                best=_pack_result(d_cur, w, act_a, act_b, ka_full, total,
                                  gap, iterations, p_c, p_m, q, trace),
            )
        if pruned:
            # Re-admit any outside assignment that now scores above the bar.
            row_max = scores.max(axis=1)
            col_max = scores.max(axis=0)
            need_a = np.setdiff1d(np.nonzero(row_max > 1.0 + tol)[0], act_a)
            need_b = np.setdiff1d(np.nonzero(col_max > 1.0 + tol)[0], act_b)
            if need_a.size or need_b.size:
                w_big = np.zeros((ka_full, ka_full))
                w_big[np.ix_(act_a, act_b)] = w
                act_a = np.union1d(act_a, need_a)
                act_b = np.union1d(act_b, need_b)
                w = w_big[np.ix_(act_a, act_b)]
                w = 0.99 * w / w.sum() + 0.01 / (act_a.size * act_b.size)
                sel_a = sel_full[:, act_a]
                sel_b = sel_full[:, act_b]
                p_c = _mixture_conditionals(w, sel_a, sel_b, m, n)
                d_cur = divergence(p_c)
                ratio = ratio_cells(p_c)
                scores = strategy_scores(ratio, amaps, amaps)
        s_act = scores[np.ix_(act_a, act_b)]
        # Multiplicative updates cannot regrow a weight that underflowed to
        # zero, and long warm-started runs do drive weights below the
        # denormal floor.  Any strategy still scoring above the bar with a
        # collapsed weight gets a small revival so it stays reachable; the
        # divergence baseline restarts from the perturbed mixture.
        starved = (s_act > 1.0 + tol) & (w < STARVED_WEIGHT)
        if starved.any():
            w = w.copy()
            w[starved] = REVIVE_WEIGHT / w.size
            w /= w.sum()
            p_c = _mixture_conditionals(w, sel_a, sel_b, m, n)
            d_cur = divergence(p_c)
        w_plain = w * s_act
        w_plain /= w_plain.sum()
        p_plain = _mixture_conditionals(w_plain, sel_a, sel_b, m, n)
        d_plain = divergence(p_plain)
        stepped = False
        if accelerate and iterations % 2 == 1:
            # Over-relaxed steps with an adaptive exponent: slow EM tails are
            # sublinear, so the exponent escalates geometrically while the
            # biggest step keeps winning and backs off once it stops.  The
            # divergence safeguard keeps every accepted step monotone.
            for alpha in (alpha_hi, max(alpha_hi / 4.0, 4.0), 2.0):
                w_try = w * np.power(s_act, alpha)
                tot = w_try.sum()
                if not np.isfinite(tot) or tot <= 0:
                    continue
                w_try /= tot
                p_try = _mixture_conditionals(w_try, sel_a, sel_b, m, n)
                d_try = divergence(p_try)
                if d_try <= d_plain:
                    w, p_c, d_new = w_try, p_try, d_try
                    stepped = True
                    alpha_hi = min(alpha_hi * 4.0, 65536.0) if alpha == alpha_hi else max(
                        alpha_hi / 4.0, 32.0
                    )
                    break
            else:
                alpha_hi = max(alpha_hi / 4.0, 32.0)
        if not stepped:
            w, p_c, d_new = w_plain, p_plain, d_plain
        if d_new > d_cur + 1e-9 * max(1.0, abs(d_cur)):
            raise ConvergenceError(
                f"divergence increased from {d_cur} to {d_new}",
                best=_pack_result(d_cur, w, act_a, act_b, ka_full, total,
                                  gap, iterations, p_c, p_m, q, trace),
            )
        d_cur = d_new
        iterations += 1
        if trace is not None:
            trace.append(d_cur)
        if prune and iterations % 50 == 0 and act_a.size * act_b.size > 4:
            keep_a = w.sum(axis=1) > PRUNE_MASS
            keep_b = w.sum(axis=0) > PRUNE_MASS
            if not keep_a.all() or not keep_b.all():
                keep_a |= ~keep_a.any()  # never empty
                keep_b |= ~keep_b.any()
                act_a = act_a[keep_a]
                act_b = act_b[keep_b]
                w = w[np.ix_(keep_a, keep_b)]
                w /= w.sum()
                sel_a = sel_full[:, act_a]
                sel_b = sel_full[:, act_b]
                pruned = True
                p_c = _mixture_conditionals(w, sel_a, sel_b, m, n)
                d_cur = divergence(p_c)

    return _pack_result(d_cur, w, act_a, act_b, ka_full, total, gap,
                        iterations, p_c, p_m, q, trace)


def _pack_result(d_cur, w, act_a, act_b, ka_full, total, gap, iterations,
                 p_c, p_m, q, trace) -> StrengthResult:
    if act_a.size == ka_full and act_b.size == ka_full:
        weights = w.T.ravel()
        weights = weights / weights.sum()
        model = LocalModel(weights)
    else:
        support = (act_b[None, :] * ka_full + act_a[:, None]).T.ravel()
        weights = w.T.ravel()
        model = LocalModel(weights / weights.sum(), support=support)
    local = Behavior(q.m, q.n, p_c * p_m[:, :, None, None], q.settings)
    return StrengthResult(
        divergence_bits=max(d_cur, 0.0),
        local_model=model,
        certificate_gap=gap,
        iterations=iterations,
        local_behavior=local,
        trace=tuple(trace) if trace else (),
    )


def kkt_certificate(q: Behavior, p: Behavior, vertices=None) -> float:
    """Maximum vertex score sum_i q_i V_{lambda,i} / p_i at the candidate p.

    A value of at most 1 (up to tolerance) certifies that p minimizes
    D(q || .) over the whole local polytope.  ``vertices`` restricts the
    check to an explicit strategy list; by default every deterministic
    strategy is scored.
    """
    if q.m != p.m or q.n != p.n:
        raise ShapeError("behaviors are indexed by different scenarios")
    q_c = q.conditionals()
    p_c = p.conditionals()
    p_m = q.settings.probs
    cells = np.zeros_like(q_c)
    mask = q_c > 0
    if np.any(mask & (p_c <= 0)):
        return float("inf")
    np.divide(q_c, p_c, out=cells, where=mask)
    cells *= p_m[:, :, None, None]
    if vertices is None:
        amaps = setting_maps(q.m, q.n)
        return float(strategy_scores(cells, amaps, amaps).max())
    return float(strategy_scores_for(cells, list(vertices)).max())
