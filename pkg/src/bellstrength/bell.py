"""Bell functionals, their local bounds, and log-ratio Bell operators.

A Bell functional is a linear form on conditional behaviors,
sum_{a,b,j,k} coeffs[a,b,j,k] P(j,k | a,b), together with the exact bound
its value satisfies over all deterministic local strategies.  The log-ratio
operator turns a pair of behaviors (quantum q, local model p) into a
Hermitian operator whose expectation on the generating state is the KL
divergence in bits; its top eigenvector is the best state for that local
model, which is what the state optimizer iterates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidDimensionError,
    InvalidParameterError,
    ResourceLimitError,
    ShapeError,
    SingularRatioError,
)
from .local import setting_maps, strategy_scores, vertex_count
from .quantum import (
    Behavior,
    MeasurementSettings,
    PureState,
    SchmidtState,
    SettingsDistribution,
    conditional_probabilities,
)

HERMITIAN_TOL = 1e-10
BOUND_CHECK_CAP = 10**6
DENSE_EIG_LIMIT = 4096
POWER_TOL = 1e-9
POWER_MAX_ITERATIONS = 10**5
DEGENERACY_GAP = 1e-10


def _vertex_values(coeffs: np.ndarray, m: int, n: int) -> np.ndarray:
    """Functional value on every deterministic strategy pair, as (KA, KB)."""
    maps = setting_maps(m, n)
    return strategy_scores(coeffs, maps, maps)


@dataclass(frozen=True)
class BellFunctional:
    """Linear functional on conditional behaviors with its exact local bound.

    ``direction`` records which side local models are confined to: "min"
    means every local behavior satisfies value >= bound (violations go
    downward), "max" the reverse.  The bound is verified by exhaustive
    vertex enumeration on construction whenever the strategy count is
    small enough to afford it.
    """

    m: int
    n: int
    coeffs: np.ndarray
    bound: float
    direction: str

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidDimensionError("need at least one setting and one outcome")
        if self.direction not in ("min", "max"):
            raise InvalidParameterError(
                f"direction must be 'min' or 'max', got {self.direction!r}"
            )
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.m, self.m, self.n, self.n):
            raise ShapeError(
                f"coefficients must have shape {(self.m, self.m, self.n, self.n)},"
                f" got {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)
        if vertex_count(self.m, self.n) <= BOUND_CHECK_CAP:
            values = _vertex_values(c, self.m, self.n)
            exact = float(values.min() if self.direction == "min" else values.max())
            if abs(exact - self.bound) > 1e-9:
                raise InvalidParameterError(
                    f"stated bound {self.bound} is not the exact vertex optimum {exact}"
                )

    def vertex_values(self) -> np.ndarray:
        """Value of the functional on every strategy pair, shape (KA, KB)."""
        return _vertex_values(self.coeffs, self.m, self.n)


_CGLMP_CACHE: dict[int, BellFunctional] = {}


def cglmp_functional(d: int) -> BellFunctional:
    """Two-setting d-outcome functional in compact modular form, bound d - 1.

    Written with the bracket [x] = x mod d and expectations
    <X> = sum_k k P(X = k), the four terms assign to the settings pair
    (i_A, i_B) the coefficients

        (1,1): [j_A - j_B]      (2,1): [j_B - j_A - 1]
        (2,2): [j_A - j_B]      (1,2): [j_B - j_A]

    and every deterministic assignment gives total exactly d - 1 plus a
    multiple of d, so local behaviors satisfy value >= d - 1 while the
    accompanying measurement family pushes quantum values below it
    (2 - sqrt(2) at d = 2).
    """
    if d != int(d) or d < 2:
        raise InvalidDimensionError(f"outcome count must be an integer >= 2, got {d}")
    d = int(d)
    cached = _CGLMP_CACHE.get(d)
    if cached is not None:
        return cached
    ja = np.arange(d)[:, None]
    jb = np.arange(d)[None, :]
    coeffs = np.empty((2, 2, d, d))
    coeffs[0, 0] = (ja - jb) % d
    coeffs[1, 0] = (jb - ja - 1) % d
    coeffs[1, 1] = (ja - jb) % d
    coeffs[0, 1] = (jb - ja) % d
    functional = BellFunctional(2, d, coeffs, float(d - 1), "min")
    _CGLMP_CACHE[d] = functional
    return functional


def local_bound(f: BellFunctional, cap: int = BOUND_CHECK_CAP) -> float:
    """Exact optimum of the functional over all deterministic strategies."""
    count = vertex_count(f.m, f.n)
    if count > cap:
        raise ResourceLimitError(
            f"{count} strategies exceed the enumeration cap {cap}"
        )
    values = f.vertex_values()
    return float(values.min() if f.direction == "min" else values.max())


def quantum_value(
    f: BellFunctional,
    state: PureState | SchmidtState,
    alice: MeasurementSettings,
    bob: MeasurementSettings,
) -> float:
    """Functional value on the conditional quantum probabilities of a state."""
    if alice.num_settings != f.m or bob.num_settings != f.m:
        raise ShapeError("measurement family does not match the functional")
    if alice.dim != f.n or bob.dim != f.n:
        raise ShapeError("outcome count does not match the functional")
    cond = conditional_probabilities(state, alice, bob)
    return float(np.sum(f.coeffs * cond))


class BellOperator:
    """Hermitian operator on the joint d*d Hilbert space.

    Built either from an explicit matrix or, lazily, from per-cell weights
    w[a, b, j, k] over a measurement family, representing
    sum w[a,b,j,k] |A^a_j><A^a_j| (x) |B^b_k><B^b_k|.  The weighted form
    supports matrix-vector products in O(m^2 d^3) without materializing
    the d^2 x d^2 matrix, which is what the power-iteration eigensolver
    uses at large dimension.
    """

    def __init__(
        self,
        dim: int,
        *,
        matrix: np.ndarray | None = None,
        weights: np.ndarray | None = None,
        alice: MeasurementSettings | None = None,
        bob: MeasurementSettings | None = None,
    ):
        if (matrix is None) == (weights is None):
            raise InvalidParameterError(
                "provide exactly one of matrix= or weights= (with measurements)"
            )
        self._dim = int(dim)
        self._matrix = None
        self._weights = None
        self._alice = alice
        self._bob = bob
        if matrix is not None:
            mat = np.asarray(matrix, dtype=complex)
            if mat.shape != (self._dim, self._dim):
                raise ShapeError(f"matrix must be {self._dim}x{self._dim}, got {mat.shape}")
            if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
                raise InvalidParameterError("operator matrix is not Hermitian")
            self._matrix = mat
        else:
            if alice is None or bob is None:
                raise InvalidParameterError("weighted form needs both measurement families")
            w = np.asarray(weights, dtype=float)
            m, n = alice.num_settings, alice.dim
            if bob.num_settings != m or bob.dim != n:
                raise ShapeError("measurement families disagree in shape")
            if w.shape != (m, m, n, n):
                raise ShapeError(f"weights must have shape {(m, m, n, n)}, got {w.shape}")
            if self._dim != n * n:
                raise ShapeError(f"dim must be {n * n} for {n}-level parties")
            self._weights = w

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def matrix(self) -> np.ndarray:
        """Dense Hermitian matrix; assembled on first access for weighted form."""
        if self._matrix is None:
            w = self._weights
            alice, bob = self._alice, self._bob
            m, d = alice.num_settings, alice.dim
            out = np.zeros((d, d, d, d), dtype=complex)
            for a in range(m):
                pa = np.einsum("xj,yj->jxy", alice.bases[a], alice.bases[a].conj())
                for b in range(m):
                    pb = np.einsum("uk,vk->kuv", bob.bases[b], bob.bases[b].conj())
                    mixed = np.einsum("jk,kuv->juv", w[a, b], pb)
                    out += np.einsum("jxy,juv->xuyv", pa, mixed)
            self._matrix = out.reshape(self._dim, self._dim)
        return self._matrix

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        """Apply the operator to a joint-space vector of length dim."""
        v = np.asarray(vec, dtype=complex)
        if v.shape != (self._dim,):
            raise ShapeError(f"vector must have length {self._dim}")
        if self._matrix is not None:
            return self._matrix @ v
        alice, bob = self._alice, self._bob
        m, d = alice.num_settings, alice.dim
        grid = v.reshape(d, d)
        out = np.zeros((d, d), dtype=complex)
        for a in range(m):
            va = alice.bases[a]
            for b in range(m):
                vb = bob.bases[b]
                amp = va.conj().T @ grid @ vb.conj()
                out += va @ (self._weights[a, b] * amp) @ vb.T
        return out.ravel()

    def norm_bound(self) -> float:
        """Cheap upper bound on the operator norm."""
        if self._weights is not None:
            return float(np.abs(self._weights).max(axis=(2, 3)).sum())
        return float(np.abs(self._matrix).sum(axis=1).max())

    def expectation(self, state: PureState | SchmidtState) -> float:
        """Real expectation value <psi| M |psi>."""
        if isinstance(state, SchmidtState):
            state = state.to_pure()
        if state.dim * state.dim != self._dim:
            raise ShapeError("state dimension does not match the operator")
        amp = state.amplitudes
        return float(np.real(np.vdot(amp, self.matvec(amp))))


def log_ratio_operator(
    q: Behavior,
    p: Behavior,
    alice: MeasurementSettings,
    bob: MeasurementSettings,
    settings: SettingsDistribution | None = None,
) -> BellOperator:
    """Operator whose expectation on q's generating state is D(q || p) in bits.

    Cell (a, b, j, k) carries weight p_M(a, b) log2(q/p) on the projector
    pair for outcome (j, k) under settings (a, b).  Requires q and p to
    share the settings distribution and p to be strictly positive wherever
    a projector carries weight (p_M > 0); a zero quantum probability there
    is rejected as well, since its log-ratio weight would be infinite.
    """
    if settings is None:
        settings = q.settings
    pm = settings.probs
    m, n = q.m, q.n
    if p.m != m or p.n != n:
        raise ShapeError("behaviors disagree in shape")
    if alice.num_settings != m or alice.dim != n or bob.num_settings != m or bob.dim != n:
        raise ShapeError("measurement family does not match the behaviors")
    if not np.allclose(q.settings.probs, pm, atol=1e-10) or not np.allclose(
        p.settings.probs, pm, atol=1e-10
    ):
        raise ShapeError("q, p, and settings must share one settings distribution")
    active = pm > 0.0
    qc = q.conditionals()
    pc = p.conditionals()
    if np.any((pc[active] <= 0.0)):
        raise SingularRatioError(
            "local model assigns zero probability to a cell with projector weight"
        )
    if np.any((qc[active] <= 0.0)):
        raise SingularRatioError(
            "quantum behavior assigns zero probability to a weighted cell;"
            " the log-ratio weight would be infinite"
        )
    weights = np.zeros((m, m, n, n))
    weights[active] = np.log2(qc[active] / pc[active]) * pm[active][:, None, None]
    return BellOperator(n * n, weights=weights, alice=alice, bob=bob)


class TopEigenpair(NamedTuple):
    """Dominant eigenpair; unpacks as (state, value) with diagnostics behind."""

    state: PureState
    value: float
    residual: float
    degenerate: bool


def top_eigenpair(
    op: BellOperator,
    tol: float = POWER_TOL,
    max_iterations: int = POWER_MAX_ITERATIONS,
    dense_limit: int = DENSE_EIG_LIMIT,
    seed: int = 7,
) -> TopEigenpair:
    """Largest eigenvalue and a matching eigenvector of a Hermitian operator.

    Uses the dense symmetric solver up to ``dense_limit`` total dimension
    and a spectrally shifted power iteration above it (the shift makes the
    most positive eigenvalue dominant in magnitude).  The returned residual
    is ||M v - lambda v||; the pair is flagged degenerate when the dense
    path sees a spectral gap below 1e-10.

    Raises ConvergenceError (with the best iterate attached) if the power
    iteration fails to reach the residual tolerance.
    """
    local_dim = math.isqrt(op.dim)
    if local_dim * local_dim != op.dim:
        raise ShapeError("operator dimension is not a product of two equal factors")
    if op.dim <= dense_limit:
        evals, evecs = np.linalg.eigh(op.matrix)
        value = float(evals[-1])
        vec = np.ascontiguousarray(evecs[:, -1])
        residual = float(np.linalg.norm(op.matvec(vec) - value * vec))
        degenerate = op.dim > 1 and (evals[-1] - evals[-2]) < DEGENERACY_GAP
        return TopEigenpair(PureState(local_dim, vec), value, residual, degenerate)

    shift = op.norm_bound()
    rng = np.random.Generator(np.random.Philox(seed))
    vec = rng.normal(size=op.dim) + 1j * rng.normal(size=op.dim)
    vec /= np.linalg.norm(vec)
    value = 0.0
    residual = np.inf
    for _ in range(max_iterations):
        image = op.matvec(vec)
        value = float(np.real(np.vdot(vec, image)))
        residual = float(np.linalg.norm(image - value * vec))
        if residual <= tol:
            return TopEigenpair(PureState(local_dim, vec), value, residual, False)
        shifted = image + shift * vec
        norm = np.linalg.norm(shifted)
        if norm == 0.0:
            raise ConvergenceError(
                "power iteration collapsed to the zero vector",
                best=TopEigenpair(PureState(local_dim, vec), value, residual, False),
            )
        vec = shifted / norm
    raise ConvergenceError(
        f"power iteration did not reach residual {tol:g} in {max_iterations}"
        f" iterations (residual {residual:.3e}); the top of the spectrum may"
        " be degenerate",
        best=TopEigenpair(PureState(local_dim, vec), value, residual, False),
    )


def tilted_cglmp_ratios(d: int, b: float) -> np.ndarray:
    """One-parameter likelihood-ratio family riding on the d-outcome functional.

    Returns r[a, b, j, k] = amp - b * c[a, b, j, k] with c the functional
    coefficients and amp = 1 + b (d - 1) / 4, normalized so that the best
    local strategy satisfies sum_i r_i V_i = 1 exactly under uniformly
    weighted settings — the certificate saturation that makes q_i = r_i p_i
    a self-consistent optimum candidate.  Valid for 0 < b < 4 / (3 (d - 1));
    outside that range some ratio would go nonpositive.
    """
    functional = cglmp_functional(d)
    if not b > 0.0:
        raise InvalidParameterError(f"tilt must be positive, got {b}")
    amp = 1.0 + b * (d - 1) / 4.0
    ratios = amp - b * functional.coeffs
    if np.any(ratios <= 0.0):
        raise InvalidParameterError(
            f"tilt {b} drives a ratio nonpositive; need b < {4.0 / (3.0 * (d - 1)):g}"
        )
    return ratios
