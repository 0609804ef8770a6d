"""Bipartite pure states, projective measurement families, and behaviors.

Index conventions used throughout the package: a pure state of two
d-level systems is a length d*d complex vector whose entry for basis
ket |i>|j> sits at position i*d + j.  A behavior is the joint
distribution q(i_A, i_B, j_A, j_B) over measurement settings and
outcomes, stored as an (m, m, n, n) array that includes the settings
distribution p_M(i_A, i_B) as a factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import (
    InvalidCoefficientError,
    InvalidDimensionError,
    ResourceLimitError,
    ShapeError,
)

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
BEHAVIOR_TOL = 1e-10
TENSOR_DIM_CAP = 4096


@dataclass(frozen=True)
class SchmidtState:
    """Pure state given by its Schmidt coefficients in the computational basis.

    The state is sum_i coeffs[i] |i>|i> with real nonnegative coefficients
    whose squares sum to one.
    """

    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvalidDimensionError(f"local dimension must be >= 2, got {self.dim}")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.dim,):
            raise ShapeError(f"expected {self.dim} coefficients, got shape {c.shape}")
        if np.any(c < -NORM_TOL):
            raise InvalidCoefficientError("Schmidt coefficients must be nonnegative")
        c = np.maximum(c, 0.0)
        if abs(float(c @ c) - 1.0) > 1e-10:
            raise InvalidCoefficientError("squared Schmidt coefficients must sum to 1")
        object.__setattr__(self, "coeffs", c)

    def to_pure(self) -> "PureState":
        amp = np.zeros((self.dim, self.dim), dtype=complex)
        np.fill_diagonal(amp, self.coeffs)
        return PureState(self.dim, amp.ravel())


@dataclass(frozen=True)
class PureState:
    """Arbitrary bipartite pure state as a length d*d amplitude vector."""

    dim: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvalidDimensionError(f"local dimension must be >= 2, got {self.dim}")
        a = np.asarray(self.amplitudes, dtype=complex).ravel()
        if a.shape != (self.dim * self.dim,):
            raise ShapeError(
                f"expected {self.dim * self.dim} amplitudes, got shape {a.shape}"
            )
        nrm = float(np.vdot(a, a).real)
        if abs(nrm - 1.0) > 1e-10:
            raise InvalidCoefficientError(f"state norm^2 is {nrm}, expected 1")
        object.__setattr__(self, "amplitudes", a)

    @property
    def matrix(self) -> np.ndarray:
        """Amplitudes reshaped to a (d, d) matrix indexed (i_A, i_B)."""
        return self.amplitudes.reshape(self.dim, self.dim)


@dataclass(frozen=True)
class MeasurementSettings:
    """A family of projective measurements for one party.

    ``bases[a]`` is a d x d unitary whose columns are the measurement
    eigenvectors of setting ``a``; outcome j corresponds to column j.
    """

    dim: int
    num_settings: int
    bases: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bases, dtype=complex)
        if b.shape != (self.num_settings, self.dim, self.dim):
            raise ShapeError(
                f"expected bases of shape {(self.num_settings, self.dim, self.dim)},"
                f" got {b.shape}"
            )
        eye = np.eye(self.dim)
        for a in range(self.num_settings):
            if not np.allclose(b[a].conj().T @ b[a], eye, atol=UNITARY_TOL):
                raise ShapeError(f"basis {a} is not unitary")
        object.__setattr__(self, "bases", b)


@dataclass(frozen=True)
class SettingsDistribution:
    """Distribution p_M(i_A, i_B) over joint measurement settings."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ShapeError(f"settings distribution must be square, got {p.shape}")
        if np.any(p < -NORM_TOL):
            raise InvalidCoefficientError("settings probabilities must be nonnegative")
        p = np.maximum(p, 0.0)
        if abs(float(p.sum()) - 1.0) > NORM_TOL:
            raise InvalidCoefficientError("settings probabilities must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def num_settings(self) -> int:
        return self.probs.shape[0]


def uniform_settings(m: int) -> SettingsDistribution:
    """Uniform distribution over the m x m joint settings."""
    return SettingsDistribution(np.full((m, m), 1.0 / (m * m)))


@dataclass(frozen=True)
class Behavior:
    """Joint distribution over settings and outcomes of a two-party test.

    ``probs[i_A, i_B, j_A, j_B]`` is the probability that the parties use
    settings (i_A, i_B) and obtain outcomes (j_A, j_B); marginalizing the
    outcomes recovers ``settings.probs``.
    """

    m: int
    n: int
    probs: np.ndarray
    settings: SettingsDistribution

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.m, self.m, self.n, self.n):
            raise ShapeError(
                f"expected probs of shape {(self.m, self.m, self.n, self.n)}, got {p.shape}"
            )
        if np.any(p < -BEHAVIOR_TOL):
            raise InvalidCoefficientError("behavior probabilities must be nonnegative")
        p = np.maximum(p, 0.0)
        if abs(float(p.sum()) - 1.0) > BEHAVIOR_TOL:
            raise InvalidCoefficientError("behavior probabilities must sum to 1")
        if self.settings.num_settings != self.m:
            raise ShapeError("settings distribution does not match number of settings")
        marg = p.sum(axis=(2, 3))
        if np.max(np.abs(marg - self.settings.probs)) > BEHAVIOR_TOL:
            raise ShapeError("settings marginal of probs disagrees with settings")
        object.__setattr__(self, "probs", p)

    @property
    def vector(self) -> np.ndarray:
        """Flat view indexed (i_A, i_B, j_A, j_B), row-major."""
        return self.probs.ravel()

    def conditionals(self) -> np.ndarray:
        """Outcome distributions q(j_A, j_B | i_A, i_B); zero rows where p_M = 0."""
        pm = self.settings.probs
        out = np.zeros_like(self.probs)
        np.divide(self.probs, pm[:, :, None, None], out=out,
                  where=pm[:, :, None, None] > 0)
        return out


def reweight_settings(behavior: Behavior, settings: SettingsDistribution) -> Behavior:
    """Same conditional statistics under a different settings distribution."""
    if settings.num_settings != behavior.m:
        raise ShapeError("settings distribution does not match behavior")
    cond = behavior.conditionals()
    probs = cond * settings.probs[:, :, None, None]
    return Behavior(behavior.m, behavior.n, probs, settings)


def no_signaling_gap(behavior: Behavior) -> float:
    """Largest dependence of one party's outcome marginal on the other's setting."""
    cond = behavior.conditionals()
    # Alice's marginal given (i_A, i_B), compared across i_B; and symmetrically.
    alice = cond.sum(axis=3)  # (i_A, i_B, j_A)
    bob = cond.sum(axis=2)    # (i_A, i_B, j_B)
    gap_a = np.max(alice.max(axis=1) - alice.min(axis=1))
    gap_b = np.max(bob.max(axis=0) - bob.min(axis=0))
    return float(max(gap_a, gap_b))


def maximally_entangled(d: int) -> SchmidtState:
    """The state (1/sqrt(d)) sum_i |i>|i>."""
    if d < 2:
        raise InvalidDimensionError(f"local dimension must be >= 2, got {d}")
    return SchmidtState(d, np.full(d, 1.0 / np.sqrt(d)))


def three_level_state(gamma: float) -> SchmidtState:
    """Two-qutrit state with a pair of equal Schmidt coefficients gamma.

    The residual coefficient sqrt(1 - 2 gamma^2) sits on the middle basis
    level, i.e. the state is gamma (|00> + |22>) + sqrt(1 - 2 gamma^2) |11>.
    Under the fixed measurement family of ``cglmp_measurements(3)`` this
    placement of the unequal coefficient is the one that realizes the
    known maximal CGLMP violation near gamma = 0.617; moving it to an
    outer level produces a strictly weaker test, so the ordering is part
    of the contract, not a presentation choice.
    """
    if not 0.0 <= gamma <= 1.0 / np.sqrt(2.0) + NORM_TOL:
        raise InvalidCoefficientError(
            f"gamma must lie in [0, 1/sqrt(2)], got {gamma}"
        )
    rest = max(1.0 - 2.0 * gamma * gamma, 0.0)
    return SchmidtState(3, np.array([gamma, np.sqrt(rest), gamma]))


def fourier_matrix(d: int) -> np.ndarray:
    """Discrete Fourier transform with entries exp(2*pi*i*j*k/d)/sqrt(d)."""
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def cglmp_measurements(d: int, party: str) -> MeasurementSettings:
    """The standard two-setting measurement family used in CGLMP tests.

    Each setting applies a diagonal phase, then a Fourier transform
    (conjugated for Bob), and reads out the computational basis.  The
    returned basis columns are the back-transformed eigenvectors, so
    outcome probabilities follow directly from the state amplitudes.

    Args:
      d: local dimension, at least 2.
      party: "alice" or "bob"; the two parties use different phases.
    """
    if d < 2:
        raise InvalidDimensionError(f"local dimension must be >= 2, got {d}")
    who = party.lower()
    j = np.arange(d)
    ft = fourier_matrix(d)
    if who == "alice":
        phases = [np.zeros(d), np.pi * j / d]
        transform = ft
    elif who == "bob":
        phases = [np.pi * j / (2 * d), -np.pi * j / (2 * d)]
        transform = ft.conj()
    else:
        raise ShapeError(f"party must be 'alice' or 'bob', got {party!r}")
    bases = np.empty((2, d, d), dtype=complex)
    for a, phi in enumerate(phases):
        applied = transform @ np.diag(np.exp(1j * phi))
        bases[a] = applied.conj().T
    return MeasurementSettings(d, 2, bases)


def conditional_probabilities(
    state: PureState | SchmidtState,
    alice: MeasurementSettings,
    bob: MeasurementSettings,
) -> np.ndarray:
    """Outcome probabilities q(j_A, j_B | i_A, i_B) as an (m, m, n, n) array."""
    if isinstance(state, SchmidtState):
        state = state.to_pure()
    d = state.dim
    if alice.dim != d or bob.dim != d:
        raise ShapeError("measurement dimension does not match the state")
    if alice.num_settings != bob.num_settings:
        raise ShapeError("both parties must have the same number of settings")
    m = alice.num_settings
    psi = state.matrix
    cond = np.empty((m, m, d, d))
    for ia in range(m):
        left = alice.bases[ia].conj().T @ psi
        for ib in range(m):
            amp = left @ bob.bases[ib].conj()
            cond[ia, ib] = np.abs(amp) ** 2
    return cond


def quantum_behavior(
    state: PureState | SchmidtState,
    alice: MeasurementSettings,
    bob: MeasurementSettings,
    settings: SettingsDistribution,
) -> Behavior:
    """Behavior of a pure state under projective measurements and a settings draw."""
    cond = conditional_probabilities(state, alice, bob)
    m = alice.num_settings
    if settings.num_settings != m:
        raise ShapeError("settings distribution does not match measurement family")
    probs = cond * settings.probs[:, :, None, None]
    return Behavior(m, alice.dim, probs, settings)


def schmidt_decompose(state: PureState) -> tuple[SchmidtState, np.ndarray, np.ndarray]:
    """Schmidt decomposition of a bipartite pure state.

    Returns the coefficients (descending) together with the two local
    unitaries: column k of each holds the k-th Schmidt vector, so the
    amplitude matrix factors as basis_a @ diag(coeffs) @ basis_b.T.
    """
    u, s, vh = np.linalg.svd(state.matrix)
    total = float(s @ s)
    coeffs = s / np.sqrt(total)
    return SchmidtState(state.dim, coeffs), u, vh.T


def entropy_of_entanglement(state: SchmidtState) -> float:
    """Von Neumann entropy of either reduced state, in bits."""
    p = state.coeffs ** 2
    p = p[p > 0]
    return float(-(p @ np.log2(p)))


def tensor_copies(
    state: SchmidtState,
    alice: MeasurementSettings,
    bob: MeasurementSettings,
    copies: int,
    dim_cap: int = TENSOR_DIM_CAP,
) -> tuple[SchmidtState, MeasurementSettings, MeasurementSettings]:
    """Product test made of ``copies`` independent runs of a base test.

    The combined test has d^k-level parties, m^k settings per party
    (every combination of per-copy settings, lexicographic), and n^k
    outcomes given by tensor products of the per-copy bases.
    """
    if copies < 1:
        raise InvalidDimensionError(f"copies must be >= 1, got {copies}")
    d, m = state.dim, alice.num_settings
    big_d = d ** copies
    if big_d > dim_cap:
        raise ResourceLimitError(
            f"product dimension {big_d} exceeds cap {dim_cap}"
        )
    coeffs = state.coeffs
    for _ in range(copies - 1):
        coeffs = np.kron(coeffs, state.coeffs)
    big_state = SchmidtState(big_d, coeffs)

    def expand(ms: MeasurementSettings) -> MeasurementSettings:
        combos = list(product(range(ms.num_settings), repeat=copies))
        bases = np.empty((len(combos), big_d, big_d), dtype=complex)
        for idx, combo in enumerate(combos):
            acc = np.array([[1.0 + 0j]])
            for a in combo:
                acc = np.kron(acc, ms.bases[a])
            bases[idx] = acc
        return MeasurementSettings(big_d, len(combos), bases)

    return big_state, expand(alice), expand(bob)
