"""
Semilab - Markov Chain Semigroups Module

Continuous-time Markov chains on finite (or truncated countable) state spaces.
Row-vector convention throughout: a distribution x evolves as x e^{tQ}.

Key Features:
- Intensity-matrix validation with the first violated invariant reported
- Dense Q-matrix CSV reader (header row optional)
- Uniformization with a certified Poisson-tail truncation
- Dyson-Phillips perturbation series with composite Simpson convolutions
- Jukes-Cantor transition law and evolutionary distance
- Stationary laws (linear solve / birth-death recursion) with reducibility detection
- Explosivity semi-decision for birth-death rates and mass-in-window profiles
"""

import logging
import math
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg, special, stats
from scipy.sparse import csgraph, csr_matrix

from ._default import (
    DEFAULT_DP_PANELS,
    DEFAULT_UNIFORMIZATION_TOL,
    EXPLOSIVITY_KWARGS,
    RENORMALIZE_SLACK,
)
from .errors import (
    AbsorbingBoundaryError,
    BlowUpError,
    DomainError,
    ReducibleChainError,
    SaturationError,
    ShapeError,
    ValidationError,
)
from .outputs import ExplosivityReport
from .utils import progress

logger = logging.getLogger(__name__)


class IntensityMatrix:
    """
    Validated Q-matrix: nonnegative off-diagonal entries, zero row sums.

    Construct through `validate_intensity`.
    """

    def __init__(self, q: np.ndarray):
        q = np.array(q, dtype=float)
        q.setflags(write=False)
        self.q = q
        self.n = q.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.q)

    def __repr__(self) -> str:
        return f"IntensityMatrix(n={self.n})"


def validate_intensity(q: Union[np.ndarray, Sequence[Sequence[float]]]) -> IntensityMatrix:
    """
    Check the Q-matrix invariants and wrap the matrix.

    Row sums must vanish within 1e-12 times max(1, max |q_ij|).

    Raises:
        ShapeError: matrix not square
        ValidationError: negative off-diagonal entry or nonzero row sum
            (payload carries the offending indices)
    """
    try:
        q = np.asarray(q, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ShapeError("intensity matrix rows must be numbers of equal length") from exc
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ShapeError(f"intensity matrix must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValidationError("intensity matrix has non-finite entries")
    off = q - np.diag(np.diag(q))
    negative = np.argwhere(off < 0)
    if negative.size:
        i, j = (int(v) for v in negative[0])
        raise ValidationError(f"negative off-diagonal entry at ({i}, {j})", row=i, column=j, value=float(q[i, j]))
    scale = max(1.0, float(np.abs(q).max()) if q.size else 1.0)
    sums = q.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > 1e-12 * scale)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"row-sum violation at row {i}", row=i, row_sum=float(sums[i]))
    return IntensityMatrix(q)


def read_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """
    Dense matrix from a CSV file. A first row with non-numeric entries is
    treated as a header and dropped.

    Args:
        path: CSV file, one matrix row per line

    Returns:
        Float array (shape not checked; validators decide)

    Raises:
        ValidationError: missing file or non-numeric entry
        ShapeError: empty file or rows of different lengths
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise ValidationError(f"matrix file not found: {path}", path=str(path)) from exc
    except pd.errors.EmptyDataError as exc:
        raise ShapeError(f"matrix file is empty: {path}", path=str(path)) from exc
    except pd.errors.ParserError as exc:
        raise ShapeError(f"rows of different lengths in {path}", path=str(path)) from exc
    values = raw.apply(pd.to_numeric, errors="coerce")
    if len(raw) and (values.iloc[0].isna() & raw.iloc[0].notna()).any():
        raw, values = raw.iloc[1:], values.iloc[1:]
    if raw.isna().to_numpy().any():
        raise ShapeError(f"rows of different lengths in {path}", path=str(path))
    bad = np.argwhere(values.isna().to_numpy())
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise ValidationError(f"non-numeric entry at ({i}, {j}) in {path}", row=i, column=j, path=str(path))
    if values.empty:
        raise ShapeError(f"matrix file has no rows: {path}", path=str(path))
    logger.debug(f"read {values.shape[0]}x{values.shape[1]} matrix from {path}")
    return values.to_numpy(dtype=float)


class UniformizedChain:
    """
    Q = lam (P - I) with P = I + Q / lam row-stochastic.

    Attributes:
        lam: Uniformization rate (>= max exit rate)
        jump_matrix: Row-stochastic P
    """

    def __init__(self, lam: float, jump_matrix: np.ndarray):
        self.lam = lam
        self.jump_matrix = jump_matrix


def uniformize(Q: IntensityMatrix, lam: Optional[float] = None) -> UniformizedChain:
    rate = float(Q.exit_rates.max()) if Q.n else 0.0
    lam = rate if lam is None else lam
    if lam < rate:
        raise DomainError(f"uniformization rate {lam} below max exit rate {rate}")
    if lam == 0.0:
        return UniformizedChain(0.0, np.eye(Q.n))
    P = np.eye(Q.n) + Q.q / lam
    return UniformizedChain(lam, np.clip(P, 0.0, None))


def poisson_truncation(mean: float, tol: float) -> int:
    """
    Smallest K with the Chernoff bound on P(N > K), N ~ Poisson(mean), below tol.

    Uses P(N >= k) <= exp(-m) (e m / k)^k for k > m.
    """
    if mean <= 0:
        return 0
    log_tol = math.log(tol)
    k = max(1, int(math.ceil(mean)) + 1)
    while -mean + k * (1.0 + math.log(mean) - math.log(k)) >= log_tol:
        k += 1
    return k - 1


def _uniformized_apply(Q: IntensityMatrix, t: float, X: np.ndarray, tol: float) -> np.ndarray:
    chain = uniformize(Q)
    if chain.lam == 0.0 or t == 0.0:
        return np.array(X, dtype=float, copy=True)
    mean = chain.lam * t
    K = poisson_truncation(mean, tol)
    weights = stats.poisson.pmf(np.arange(K + 1), mean)
    term = np.array(X, dtype=float, copy=True)
    out = weights[0] * term
    P = chain.jump_matrix
    for k in range(1, K + 1):
        term = term @ P
        out = out + weights[k] * term
    return out


def evolve(Q: IntensityMatrix, t: float, x: Sequence[float], tol: float = DEFAULT_UNIFORMIZATION_TOL) -> np.ndarray:
    """
    x e^{tQ} by uniformization.

    The Poisson series is truncated where the Chernoff tail bound drops below
    tol; the result is rescaled to total mass one only when the deficit is
    within tol plus 1e-12.

    Args:
        Q: Intensity matrix
        t: Duration (>= 0)
        x: Row probability vector
        tol: Truncation tolerance (> 0)

    Raises:
        DomainError: tol <= 0, t < 0 or x not a probability vector
    """
    if not (tol > 0):
        raise DomainError("tol must be positive", tol=tol)
    if t < 0 or not math.isfinite(t):
        raise DomainError("t must be finite and nonnegative", t=t)
    x = np.asarray(x, dtype=float)
    if x.shape != (Q.n,):
        raise ShapeError(f"vector of length {Q.n} expected, got shape {x.shape}")
    if np.any(x < -1e-14) or abs(x.sum() - 1.0) > 1e-10:
        raise DomainError("x must be a probability vector", total=float(x.sum()))
    y = _uniformized_apply(Q, t, x, tol)
    y = np.clip(y, 0.0, None)
    deficit = abs(y.sum() - 1.0)
    if deficit <= tol + RENORMALIZE_SLACK:
        y = y / y.sum()
    else:
        logger.warning(f"evolve: mass deficit {deficit:.2e} exceeds slack, output left unnormalized")
    return y


def transition_matrix(Q: IntensityMatrix, t: float, tol: float = DEFAULT_UNIFORMIZATION_TOL) -> np.ndarray:
    """e^{tQ} by uniformization applied to the identity rows."""
    return _uniformized_apply(Q, t, np.eye(Q.n), tol)


def _convolution_weights(panels: int, h: float) -> np.ndarray:
    """
    W[j, i]: weights of a rule integrating over [0, j h] from nodes i h, i <= j.

    Trapezoid for j = 1, Simpson for even j, Simpson 3/8 on the first three
    panels plus Simpson on the rest for odd j >= 3.
    """
    W = np.zeros((panels + 1, panels + 1))
    for j in range(1, panels + 1):
        if j == 1:
            W[1, :2] = [h / 2, h / 2]
            continue
        start = 0
        if j % 2 == 1:
            W[j, 0:4] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
            start = 3
        for i in range(start, j, 2):
            W[j, i:i + 3] += np.array([1.0, 4.0, 1.0]) * h / 3.0
    return W


def dyson_phillips(
        A0: IntensityMatrix,
        K: np.ndarray,
        lam: float,
        t: float,
        f: Sequence[float],
        n_terms: int,
        panels: int = DEFAULT_DP_PANELS,
) -> Tuple[np.ndarray, float]:
    """
    Partial Dyson-Phillips sum for the generator A0 + lam K - lam I.

    With S(t) = e^{t A0} and S_{n+1}(t) = int_0^t S(s) K S_n(t - s) ds (row
    convention), returns e^{-lam t} sum_{n < n_terms} lam^n f S_n(t). The
    convolutions are evaluated on a uniform grid of `panels` panels; S on the
    grid is built from powers of S(t / panels).

    Returns:
        (vector, tail_bound) where tail_bound = e^{-lam t} sum_{n >= n_terms} (lam t)^n / n!

    Raises:
        DomainError: lam <= 0, n_terms < 1 or K not row-stochastic
    """
    if not (lam > 0):
        raise DomainError("lambda must be positive", lam=lam)
    if n_terms < 1:
        raise DomainError("n_terms must be at least 1", n_terms=n_terms)
    K = np.asarray(K, dtype=float)
    if K.shape != (A0.n, A0.n) or np.any(K < 0) or np.any(np.abs(K.sum(axis=1) - 1.0) > 1e-12):
        raise DomainError("K must be a row-stochastic matrix of matching size")
    f = np.asarray(f, dtype=float)
    if panels % 2 == 1:
        panels += 1
    h = t / panels
    step = transition_matrix(A0, h)
    E = np.empty((panels + 1, A0.n, A0.n))
    E[0] = np.eye(A0.n)
    for j in range(1, panels + 1):
        E[j] = E[j - 1] @ step
    G = E @ K
    W = _convolution_weights(panels, h)

    M = E.copy()
    total = M[panels].copy()
    coefficient = 1.0
    for n in progress(range(1, n_terms), desc="dyson-phillips"):
        nxt = np.zeros_like(M)
        for j in range(1, panels + 1):
            nxt[j] = np.einsum("i,iab,ibc->ac", W[j, :j + 1], G[:j + 1], M[j::-1])
        M = nxt
        coefficient *= lam
        total = total + coefficient * M[panels]
    tail = float(stats.poisson.sf(n_terms - 1, lam * t))
    return math.exp(-lam * t) * (f @ total), tail


def jc_intensity(lam: float) -> IntensityMatrix:
    """Jukes-Cantor intensity matrix: rate lam to each of the three other bases."""
    q = np.full((4, 4), lam)
    np.fill_diagonal(q, -3.0 * lam)
    return validate_intensity(q)


def jc_transition(lam: float, t: float) -> np.ndarray:
    """Closed-form Jukes-Cantor transition matrix."""
    if not (lam > 0) or t < 0:
        raise DomainError("need lam > 0 and t >= 0", lam=lam, t=t)
    decay = math.exp(-4.0 * lam * t)
    P = np.full((4, 4), 0.25 - 0.25 * decay)
    np.fill_diagonal(P, 0.25 + 0.75 * decay)
    return P


def jc_distance(p_hat: float, pairwise: bool = False) -> float:
    """
    Jukes-Cantor distance -3/4 ln(1 - 4 p / 3).

    Args:
        p_hat: Observed fraction of differing sites
        pairwise: Halve the result for two contemporary sequences diverging from
            a common ancestor

    Raises:
        DomainError: p_hat < 0
        SaturationError: p_hat >= 3/4
    """
    if p_hat < 0 or not math.isfinite(p_hat):
        raise DomainError(f"p out of domain [0, 0.75): {p_hat}", p=p_hat)
    if p_hat >= 0.75:
        raise SaturationError(f"p out of domain [0, 0.75): {p_hat}", p=p_hat)
    distance = -0.75 * math.log(1.0 - 4.0 * p_hat / 3.0)
    return 0.5 * distance if pairwise else distance


def jc_distance_from_sequences(first: str, second: str, pairwise: bool = True) -> float:
    """Distance from two aligned nucleotide sequences, p = mismatches / sites."""
    if len(first) != len(second) or not first:
        raise ShapeError("sequences must be non-empty and of equal length")
    alphabet = set("ACGT")
    if set(first.upper()) - alphabet or set(second.upper()) - alphabet:
        raise DomainError("sequences must use the alphabet ACGT")
    mismatches = sum(a != b for a, b in zip(first.upper(), second.upper()))
    return jc_distance(mismatches / len(first), pairwise=pairwise)


def closed_classes(Q: IntensityMatrix) -> List[np.ndarray]:
    """Strongly connected components of the transition graph with no outgoing edge."""
    adjacency = (Q.q > 0) & ~np.eye(Q.n, dtype=bool)
    n_comp, labels = csgraph.connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    classes = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(Q.n, dtype=bool)
        outside[members] = False
        if not adjacency[np.ix_(members, outside)].any():
            classes.append(members)
    return classes


def _solve_on_class(Q: IntensityMatrix, members: np.ndarray) -> np.ndarray:
    sub = Q.q[np.ix_(members, members)]
    A = sub.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(len(members))
    rhs[-1] = 1.0
    local = linalg.solve(A, rhs)
    if np.any(local < -1e-12):
        logger.warning(f"stationary solve produced negatives down to {local.min():.2e}")
    local = np.clip(local, 0.0, None)
    x = np.zeros(Q.n)
    x[members] = local / local.sum()
    return x


def stationary(Q: IntensityMatrix) -> np.ndarray:
    """
    Probability solution of x Q = 0.

    Irreducibility is checked on the support graph; transient states get zero
    mass (logged). The closed class is solved as Q^T x = 0 with the last
    equation replaced by sum x = 1.

    Raises:
        ReducibleChainError: several closed classes; `solutions` holds one law per class
    """
    classes = closed_classes(Q)
    if len(classes) > 1:
        solutions = [_solve_on_class(Q, members) for members in classes]
        raise ReducibleChainError(
            f"chain has {len(classes)} closed classes; stationary law is not unique",
            solutions=solutions,
        )
    members = classes[0]
    if len(members) < Q.n:
        logger.warning(f"{Q.n - len(members)} transient states receive zero stationary mass")
    return _solve_on_class(Q, members)


class BirthDeathSpec:
    """
    Birth-death rates on 0..N (N = None for the unbounded chain).

    Args:
        birth: i -> b_i
        death: i -> d_i (d_0 must be 0)
        N: Truncation level
    """

    def __init__(self, birth: Callable[[int], float], death: Callable[[int], float], N: Optional[int] = None):
        self.birth = birth
        self.death = death
        self.N = N
        if death(0) != 0:
            raise ValidationError("death rate at 0 must vanish")
        if N is not None:
            for i in range(N + 1):
                b, d = birth(i), death(i)
                if not (math.isfinite(b) and math.isfinite(d)) or b < 0 or d < 0:
                    raise ValidationError(f"rates must be finite and nonnegative, failed at i={i}", i=i)

    @classmethod
    def erythrocyte(cls, b: float, d: float, N: Optional[int] = None) -> "BirthDeathSpec":
        """Constant production b, per-cell removal d: b_i = b, d_i = d i."""
        return cls(lambda i: b, lambda i: d * i, N)

    @classmethod
    def pure_birth(cls, growth: str = "geometric", b: float = 1.0, N: Optional[int] = None) -> "BirthDeathSpec":
        """Pure birth with b_i = b 2^i (geometric) or b_i = b (constant)."""
        if growth == "geometric":
            return cls(lambda i: b * 2.0 ** i, lambda i: 0.0, N)
        if growth == "constant":
            return cls(lambda i: b, lambda i: 0.0, N)
        raise DomainError(f"unknown growth law {growth!r}")


def intensity_from_birth_death(spec: BirthDeathSpec) -> IntensityMatrix:
    """Truncated chain on 0..N; births from N are suppressed (reflecting top)."""
    if spec.N is None:
        raise DomainError("truncation level N required")
    n = spec.N + 1
    q = np.zeros((n, n))
    for i in range(n):
        if i + 1 < n:
            q[i, i + 1] = spec.birth(i)
        if i > 0:
            q[i, i - 1] = spec.death(i)
        q[i, i] = -q[i].sum()
    return validate_intensity(q)


def erythrocyte_intensity(b: float, d: float, N: int) -> IntensityMatrix:
    return intensity_from_birth_death(BirthDeathSpec.erythrocyte(b, d, N))


def birth_death_stationary(spec: BirthDeathSpec) -> np.ndarray:
    """
    Detailed-balance law pi_{i+1} = pi_i b_i / d_{i+1} on 0..N, in log space.

    Raises:
        DomainError: missing truncation, b_i = 0 or d_{i+1} = 0
        BlowUpError: weights still non-finite after log-space normalization
    """
    if spec.N is None:
        raise DomainError("truncation level N required")
    log_w = np.zeros(spec.N + 1)
    for i in range(spec.N):
        b, d = spec.birth(i), spec.death(i + 1)
        if not (b > 0 and d > 0):
            raise DomainError(f"recursion undefined at i={i}: b_i={b}, d_(i+1)={d}", i=i)
        log_w[i + 1] = log_w[i] + math.log(b) - math.log(d)
    pi = np.exp(log_w - special.logsumexp(log_w))
    if not np.all(np.isfinite(pi)):
        raise BlowUpError("non-finite stationary weights")
    return pi


def truncated_poisson(mean: float, N: int) -> np.ndarray:
    """Poisson(mean) restricted to 0..N and renormalized."""
    pmf = stats.poisson.pmf(np.arange(N + 1), mean)
    return pmf / pmf.sum()


def explosivity_check(
        spec: BirthDeathSpec,
        lam: float = 1.0,
        horizon: int = EXPLOSIVITY_KWARGS["horizon"],
        divergence: float = EXPLOSIVITY_KWARGS["divergence"],
        cauchy: float = EXPLOSIVITY_KWARGS["cauchy"],
        patience: int = EXPLOSIVITY_KWARGS["patience"],
) -> ExplosivityReport:
    """
    Semi-decision on explosivity of the unbounded birth-death chain.

    Builds the minimal solution of Q x = lam x from x_0 = 1:
    x_{i+1} = x_i + (lam / b_i) x_i + (d_i / b_i)(x_i - x_{i-1}).
    An unbounded solution (x > divergence) means no bounded solution exists
    and the minimal semigroup is stochastic; `patience` consecutive increments
    below cauchy * max(1, x) indicate a bounded solution (explosion).

    Raises:
        DomainError: lam <= 0
        AbsorbingBoundaryError: b_i = 0 reached before a verdict
    """
    if not (lam > 0):
        raise DomainError("lambda must be positive", lam=lam)
    thresholds = {"divergence": divergence, "cauchy": cauchy, "horizon": float(horizon), "patience": float(patience)}
    x_prev, x = 0.0, 1.0
    quiet = 0
    for i in range(horizon):
        b, d = spec.birth(i), spec.death(i)
        if b == 0:
            raise AbsorbingBoundaryError(f"birth rate vanishes at i={i}", i=i)
        x_next = x + (lam / b) * x + (d / b) * (x - x_prev)
        if x_next > divergence or not math.isfinite(x_next):
            return ExplosivityReport(verdict="non_explosive", steps=i + 1, last_value=float(x_next), thresholds=thresholds)
        quiet = quiet + 1 if (x_next - x) < cauchy * max(1.0, x_next) else 0
        x_prev, x = x, x_next
        if quiet >= patience:
            return ExplosivityReport(verdict="explosive", steps=i + 1, last_value=float(x), thresholds=thresholds)
    return ExplosivityReport(verdict="inconclusive", steps=horizon, last_value=float(x), thresholds=thresholds)


def foguel_profile(
        Q: IntensityMatrix,
        x0: Sequence[float],
        times: Sequence[float],
        window: Iterable[int],
        tol: float = DEFAULT_UNIFORMIZATION_TOL,
        truncated: bool = False,
) -> np.ndarray:
    """
    Mass of x0 e^{tQ} on a set of states along increasing times.

    Args:
        Q: Intensity matrix
        x0: Initial probability vector
        times: Nondecreasing times (>= 0)
        window: State indices
        truncated: Q is a truncation of a countable chain; the profile is then
            an illustration only and this is logged
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise DomainError("times must be nonnegative and nondecreasing")
    if truncated:
        logger.warning("profile computed on a truncated chain: illustration, not a verification")
    index = np.asarray(sorted(set(int(i) for i in window)))
    x = np.asarray(x0, dtype=float)
    current = 0.0
    out = np.empty(times.size)
    for k, t in enumerate(times):
        if t > current:
            x = evolve(Q, t - current, x, tol)
            current = t
        out[k] = x[index].sum()
    return out
