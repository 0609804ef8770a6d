"""Finite-trial simulation: sample a behavior, then measure empirical support.

After N trials the recorded frequencies approach the behavior that
produced them, and the best-fit local divergence of the frequency table
approaches the asymptotic strength.  Sampling draws settings and
outcomes jointly (the settings distribution is part of the behavior)
from a counter-based Philox stream keyed by an explicit seed; large runs
can be split into independently seeded blocks without changing the
result for a fixed (seed, blocks) pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .quantum import Behavior, SettingsDistribution
from .strength import StrengthResult, min_kl_local


@dataclass(frozen=True)
class TrialCounts:
    """Outcome tally of a finite run, indexed like ``Behavior.probs``.

    ``counts[i_A, i_B, j_A, j_B]`` is how many of the ``total`` trials
    used settings (i_A, i_B) and produced outcomes (j_A, j_B).
    """

    m: int
    n: int
    counts: np.ndarray
    total: int

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (self.m, self.m, self.n, self.n):
            raise ShapeError(
                f"expected counts of shape {(self.m, self.m, self.n, self.n)},"
                f" got {c.shape}"
            )
        if not np.issubdtype(c.dtype, np.integer):
            raise ShapeError(f"counts must be integers, got dtype {c.dtype}")
        if np.any(c < 0):
            raise InvalidParameterError("counts must be nonnegative")
        if int(c.sum()) != self.total:
            raise InvalidParameterError(
                f"counts sum to {int(c.sum())}, expected total {self.total}"
            )
        object.__setattr__(self, "counts", c)

    def frequencies(self) -> Behavior:
        """Empirical behavior counts/N, settings marginal as observed."""
        freq = self.counts / self.total
        return Behavior(self.m, self.n, freq,
                        SettingsDistribution(freq.sum(axis=(2, 3))))


def sample_trials(q: Behavior, trials: int, seed: int,
                  blocks: int = 1) -> TrialCounts:
    """Tally ``trials`` independent draws from the joint behavior ``q``.

    Every trial picks a settings pair and an outcome pair together from
    the joint vector of ``q``.  The work is divided over ``blocks``
    independently seeded Philox streams (block b handles an equal share,
    leftovers going to the earliest blocks), so blocks can run in any
    order or in parallel; the tally depends only on (seed, blocks).
    """
    if trials != int(trials) or trials < 1:
        raise InvalidParameterError(f"need at least one trial, got {trials}")
    if blocks != int(blocks) or blocks < 1:
        raise InvalidParameterError(f"need at least one block, got {blocks}")
    trials, blocks = int(trials), int(blocks)

    pv = q.vector
    pv = pv / pv.sum()
    share, extra = divmod(trials, blocks)
    out = np.zeros(pv.size, dtype=np.int64)
    for b, ss in enumerate(np.random.SeedSequence(seed).spawn(blocks)):
        rng = np.random.Generator(np.random.Philox(ss))
        out += rng.multinomial(share + (1 if b < extra else 0), pv)
    return TrialCounts(q.m, q.n, out.reshape(q.probs.shape), trials)


def empirical_strength(counts: TrialCounts, tol: float = 1e-9,
                       **solver_options) -> StrengthResult:
    """Best-fit local divergence of an observed frequency table.

    Settings pairs that never occurred carry no weight, so they do not
    constrain the fit.  Extra keyword arguments go to ``min_kl_local``.
    """
    return min_kl_local(counts.frequencies(), tol, **solver_options)
