"""
Semilab - Matrix Semigroup Asymptotics Module

Long-time behaviour of T(t)x = x e^{tQ} for finite generator matrices:
rank-one limits from the dominant eigenvalue, polynomially corrected growth
driven by Jordan blocks, and the decomposition of e^{tQ} into pole parts plus a
decaying remainder.

Key Features:
- Conditions (P) sign and (I) irreducibility checks
- Perron limit with normalized left/right eigenvectors and spectral gap
- Jordan block order from an SVD rank ladder of (Q - rI)^j
- Spectral projections from generalized-eigenspace bases with a conditioning guard
- Fitted remainder bound (M, epsilon) as one admissible witness
"""

import logging
import math
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.sparse import csgraph, csr_matrix

from ._default import CLUSTER_TOL, DEFAULT_JORDAN_LADDER, ILL_CONDITIONED, RANK_TOL, REMAINDER_MARGIN
from .chains import IntensityMatrix
from .errors import IllConditionedError, PeriodicRegimeError, PreconditionError, ShapeError, ValidationError
from .outputs import ConditionsReport, JordanGrowth, RankOneLimit, SpectralSplit

logger = logging.getLogger(__name__)


class GeneratorMatrix:
    """Finite real square matrix with no sign constraints."""

    def __init__(self, q: Union[np.ndarray, Sequence[Sequence[float]]]):
        try:
            q = np.array(q, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ShapeError("generator rows must be numbers of equal length") from exc
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ShapeError(f"generator must be square, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValidationError("generator has non-finite entries")
        q.setflags(write=False)
        self.q = q
        self.n = q.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.q, 2)) if self.n else 0.0


MatrixLike = Union[GeneratorMatrix, IntensityMatrix, np.ndarray, Sequence[Sequence[float]]]


def as_generator(Q: MatrixLike) -> GeneratorMatrix:
    if isinstance(Q, GeneratorMatrix):
        return Q
    if isinstance(Q, IntensityMatrix):
        return GeneratorMatrix(Q.q)
    return GeneratorMatrix(Q)


def check_conditions_P_I(Q: MatrixLike) -> ConditionsReport:
    """
    (P): q_ij >= 0 for i != j. (I): the graph {(i, j): q_ij > 0, i != j} is
    strongly connected.
    """
    G = as_generator(Q)
    off = G.q - np.diag(np.diag(G.q))
    positive = bool(np.all(off >= 0))
    n_comp, _ = csgraph.connected_components(csr_matrix(off > 0), directed=True, connection="strong")
    return ConditionsReport(P=positive, I=bool(n_comp == 1))


def perron_limit(Q: MatrixLike) -> RankOneLimit:
    """
    Dominant eigenvalue r with positive eigenvectors x* (x* Q = r x*, sum 1) and
    y* (Q y* = r y*, <y*, x*> = 1).

    Raises:
        PreconditionError: (P) or (I) fails
    """
    G = as_generator(Q)
    conditions = check_conditions_P_I(G)
    if not (conditions.P and conditions.I):
        raise PreconditionError("perron_limit needs conditions (P) and (I)", P=conditions.P, I=conditions.I)
    w, vl, vr = linalg.eig(G.q, left=True, right=True)
    k = int(np.argmax(w.real))
    r = float(w[k].real)
    x_star = np.real(vl[:, k].conj())
    x_star = x_star / x_star.sum()
    y_star = np.real(vr[:, k])
    y_star = y_star / float(np.dot(y_star, x_star))
    if np.any(x_star < -1e-12) or np.any(y_star < -1e-12):
        logger.warning("Perron eigenvectors have negative entries beyond rounding")
    others = np.delete(w.real, k)
    gap = float(r - others.max()) if others.size else math.inf
    return RankOneLimit(r=r, x_star=x_star, y_star=y_star, gap=gap)


def rank_one_residual(Q: MatrixLike, t: float, x: Sequence[float], limit: RankOneLimit = None) -> float:
    """
    ||e^{-rt} x e^{tQ} - x* <y*, x>||_1.

    The exponential is taken of t (Q - r I), so large r t never overflows.
    """
    G = as_generator(Q)
    limit = limit if limit is not None else perron_limit(G)
    x = np.asarray(x, dtype=float)
    shifted = linalg.expm(t * (G.q - limit.r * np.eye(G.n)))
    return float(np.abs(x @ shifted - limit.apply(x)).sum())


def _rank(A: np.ndarray, tol: float) -> int:
    if A.size == 0:
        return 0
    s = linalg.svdvals(A)
    return int(np.sum(s > tol))


def _dominant_cluster(w: np.ndarray, scale: float) -> np.ndarray:
    top = w[np.argmax(w.real)]
    return w[np.abs(w - top) <= CLUSTER_TOL * scale]


def _periodic_profile(G: GeneratorMatrix, w: np.ndarray, x: np.ndarray, scale: float) -> dict:
    r = float(w.real.max())
    tops = w[np.abs(w.real - r) <= CLUSTER_TOL * scale]
    imag = sorted({round(float(abs(v.imag)), 12) for v in tops if abs(v.imag) > CLUSTER_TOL * scale})
    base = imag[0]
    ratios = []
    for value in imag[1:]:
        ratio = value / base
        approx = Fraction(ratio).limit_denominator(100)
        ratios.append({"ratio": ratio, "rational": f"{approx.numerator}/{approx.denominator}", "error": abs(ratio - float(approx))})
    times = np.linspace(0.0, 4.0 * 2.0 * math.pi / base, 33)
    shifted = G.q - r * np.eye(G.n)
    profile = [float(np.abs(x @ linalg.expm(t * shifted)).sum()) for t in times]
    return {
        "r": r,
        "imaginary_parts": imag,
        "period": 2.0 * math.pi / base,
        "commensurability": ratios,
        "times": times.tolist(),
        "scaled_norm_profile": profile,
    }


def jordan_growth(Q: MatrixLike, x: Sequence[float], ladder: Sequence[float] = DEFAULT_JORDAN_LADDER) -> JordanGrowth:
    """
    r, k and lim e^{-rt} t^{1-k} x e^{tQ}.

    k is the index at which rank((Q - rI)^j) stabilizes (SVD tolerance
    1e-8 ||Q||^j). The limit is x (Q - rI)^{k-1} P_r / (k-1)!, with P_r the
    projection onto the generalized eigenspace of r; a Richardson value
    2 g(2T) - g(T) from the last two ladder times is reported alongside.

    Raises:
        PeriodicRegimeError: dominant eigenvalues are a complex pair; the
            payload holds the period, commensurability data and a norm profile
    """
    G = as_generator(Q)
    x = np.asarray(x, dtype=float)
    scale = max(1.0, G.norm)
    w = linalg.eigvals(G.q)
    cluster = _dominant_cluster(w, scale)
    tops = w[np.abs(w.real - w.real.max()) <= CLUSTER_TOL * scale]
    if np.any(np.abs(tops.imag) > CLUSTER_TOL * scale):
        profile = _periodic_profile(G, w, x, scale)
        raise PeriodicRegimeError(
            f"dominant eigenvalues are complex; oscillation period {profile['period']:.6g}",
            **profile,
        )
    r = float(np.mean(cluster.real))
    A = G.q - r * np.eye(G.n)

    ranks = [G.n]
    power = np.eye(G.n)
    for j in range(1, G.n + 1):
        power = power @ A
        ranks.append(_rank(power, RANK_TOL * scale ** j))
    m = G.n - ranks[-1]
    if m == 0:
        logger.warning("rank ladder found no null space for the dominant eigenvalue; using k = 1")
        m, k = len(cluster), 1
    else:
        k = next(j for j in range(1, G.n + 1) if ranks[j] == ranks[-1])

    projection = _generalized_projection(A, m)
    limit = x @ np.linalg.matrix_power(A, k - 1) @ projection / math.factorial(k - 1)

    def scaled(T: float) -> np.ndarray:
        return (x @ linalg.expm(T * A)) * T ** (1 - k)

    T_small, T_large = ladder[-2], ladder[-1]
    ladder_estimate = 2.0 * scaled(T_large) - scaled(T_small) if T_large == 2 * T_small else scaled(T_large)
    return JordanGrowth(r=r, k=k, limit=np.real(limit), ladder_estimate=np.real(ladder_estimate))


def _generalized_projection(A: np.ndarray, m: int) -> np.ndarray:
    """Projection onto ker A^m along ran A^m, from the SVD of A^m."""
    n = A.shape[0]
    Am = np.linalg.matrix_power(A, m)
    U, _, Vh = linalg.svd(Am)
    kernel = Vh[n - m:].conj().T
    image = U[:, :n - m]
    basis = np.hstack([kernel, image])
    selector = np.zeros((n, n))
    selector[:m, :m] = np.eye(m)
    return basis @ selector @ linalg.inv(basis)


def _clusters(w: np.ndarray, tol: float) -> List[Tuple[complex, int]]:
    remaining = list(sorted(w, key=lambda v: (-v.real, v.imag)))
    groups = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed] + [v for v in remaining if abs(v - seed) <= tol]
        remaining = [v for v in remaining if abs(v - seed) > tol]
        groups.append((complex(np.mean(members)), len(members)))
    return groups


def _row_norm(R: np.ndarray) -> float:
    return float(np.abs(R).sum(axis=1).max()) if R.size else 0.0


def quasicompact_split(Q: MatrixLike, cutoff: float = 0.0) -> SpectralSplit:
    """
    e^{tQ} = sum_n T_n(t) + R(t) over the eigenvalues with Re >= cutoff.

    T_n(t) = e^{lambda_n t} sum_{j < k_n} t^j / j! N_n^j P_n with P_n the
    spectral projection and N_n = (Q - lambda_n I) P_n. The remainder bound is
    ||R(t)|| <= M e^{(cutoff - epsilon) t} (operator norm for row vectors in l1)
    with epsilon = 0.9 (cutoff - max Re of the remaining spectrum) and M the
    largest ratio on a dense time grid, inflated by 5%.

    Raises:
        PreconditionError: an eigenvalue lies on the cutoff line
        IllConditionedError: generalized eigenbasis condition number above 1e10
    """
    G = as_generator(Q)
    n = G.n
    scale = max(1.0, G.norm)
    w = linalg.eigvals(G.q)
    if np.any(np.abs(w.real - cutoff) <= 1e-12 * scale):
        raise PreconditionError("an eigenvalue lies on the cutoff line; perturb the cutoff", cutoff=cutoff)
    groups = _clusters(w, CLUSTER_TOL * scale)

    bases, owners = [], []
    for index, (value, multiplicity) in enumerate(groups):
        A = G.q - value * np.eye(n)
        Am = np.linalg.matrix_power(A, multiplicity)
        _, _, Vh = linalg.svd(Am)
        bases.append(Vh[n - multiplicity:].conj().T)
        owners.extend([index] * multiplicity)
    V = np.hstack(bases)
    condition = float(np.linalg.cond(V))
    if condition > ILL_CONDITIONED:
        raise IllConditionedError(f"generalized eigenbasis condition number {condition:.3e}", condition=condition)
    V_inv = linalg.inv(V)
    owners = np.asarray(owners)

    poles, residues, nilpotents, orders, multiplicities = [], [], [], [], []
    for index, (value, multiplicity) in enumerate(groups):
        if value.real < cutoff:
            continue
        cols = owners == index
        P = V[:, cols] @ V_inv[cols, :]
        N = (G.q - value * np.eye(n)) @ P
        order, power = 1, N.copy()
        while order < multiplicity and np.abs(power).max() > RANK_TOL * scale ** order:
            power = power @ N
            order += 1
        poles.append(value)
        residues.append(P)
        nilpotents.append(N)
        orders.append(order)
        multiplicities.append(multiplicity)

    P_rem = np.eye(n) - (sum(residues) if residues else np.zeros((n, n)))
    Q_rem = G.q @ P_rem
    rest = [value for value, _ in groups if value.real < cutoff]
    remainder_dimension = n - sum(multiplicities)
    if not rest:
        bound = (0.0, None)
    else:
        rho = max(v.real for v in rest)
        epsilon = (1.0 - REMAINDER_MARGIN) * (cutoff - rho)
        decay = cutoff - epsilon
        k_max = max(m for v, m in groups if v.real < cutoff)
        t_max = (k_max + 10) / (REMAINDER_MARGIN * (cutoff - rho))
        if abs(rho) > 0:
            t_max = min(t_max, 500.0 / abs(rho))
        grid = np.concatenate([[0.0], np.geomspace(1e-4, t_max, 2000)])
        ratios = [_row_norm(np.real(linalg.expm(t * Q_rem) @ P_rem)) * math.exp(-decay * t) for t in grid]
        bound = (1.05 * max(ratios), epsilon)
    logger.info(f"quasicompact_split: {len(poles)} poles above cutoff {cutoff}, remainder bound {bound}")
    return SpectralSplit(
        poles=np.asarray(poles, dtype=complex),
        residues=residues,
        nilpotents=nilpotents,
        orders=orders,
        multiplicities=multiplicities,
        remainder_projection=P_rem,
        remainder_generator=Q_rem,
        remainder_bound=bound,
        cutoff=cutoff,
        remainder_dimension=remainder_dimension,
    )


def pole_part(split: SpectralSplit, t: float) -> np.ndarray:
    """Sum of T_n(t) over the listed poles (real part)."""
    n = split.remainder_projection.shape[0]
    total = np.zeros((n, n), dtype=complex)
    for value, P, N, order in zip(split.poles, split.residues, split.nilpotents, split.orders):
        term = P.astype(complex)
        power = np.eye(n, dtype=complex)
        for j in range(1, order):
            power = power @ N
            term = term + (t ** j / math.factorial(j)) * power @ P
        total += np.exp(value * t) * term
    return np.real(total)


def remainder_part(split: SpectralSplit, t: float) -> np.ndarray:
    """R(t) = exp(t Q P_rem) P_rem."""
    return np.real(linalg.expm(t * split.remainder_generator) @ split.remainder_projection)


def remainder_norm(split: SpectralSplit, t: float) -> float:
    return _row_norm(remainder_part(split, t))
