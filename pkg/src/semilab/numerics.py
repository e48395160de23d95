"""
Semilab - Numerical Kernels Module

Deterministic kernels shared by all simulation modules: fixed-step RK4 flows,
adaptive quadrature with improper and endpoint-singular support, bracketed root
finding and a reproducible, stream-splittable random source.

Key Features:
- FlowField / LinearFlowField with exact flows when a closed form is declared
- Fixed-step classical RK4 (replay-exact, no adaptivity)
- scipy-backed quadrature with u/(1-u) and square-root substitutions
- Counter-based Philox streams addressed by (seed, stream path)
"""

import logging
import math
import warnings
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, optimize

from ._default import DEFAULT_BISECT_TOL, DEFAULT_QUAD_TOL
from .errors import (
    BracketError,
    DomainError,
    IntegrationError,
    ToleranceNotMetError,
    ValidationError,
)
from .outputs import QuadratureResult

logger = logging.getLogger(__name__)

Vector = np.ndarray


class FlowField:
    """
    Autonomous vector field x' = b(x).

    Args:
        dimension: State dimension
        evaluate: Map from position array to velocity array
        solution: Optional exact flow (x0, t) -> x(t); when given, `flow` uses it
    """

    def __init__(
            self,
            dimension: int,
            evaluate: Callable[[Vector], Vector],
            solution: Optional[Callable[[Vector, float], Vector]] = None,
    ):
        if dimension < 1:
            raise ValidationError("flow dimension must be positive", dimension=dimension)
        self.dimension = dimension
        self.evaluate = evaluate
        self.solution = solution

    def __call__(self, x: Vector) -> Vector:
        return np.asarray(self.evaluate(x), dtype=float)

    def flow(self, x0: Vector, t: float, dt: float = 1e-3, on_step: Optional[Callable[[Vector], None]] = None) -> Vector:
        """
        Position after time t: exact when a solution is declared, RK4 otherwise.

        on_step sees the state after every RK4 step (once, at t, for exact flows).
        """
        x0 = np.asarray(x0, dtype=float)
        if self.solution is not None:
            x = np.asarray(self.solution(x0, t), dtype=float)
            if on_step is not None:
                on_step(x)
            return x
        return rk4_flow(self, x0, t, dt, on_step)


class LinearFlowField(FlowField):
    """
    Affine field x' = A x + c with the exact flow from the augmented exponential.

    Args:
        A: n x n matrix
        c: Constant forcing vector (defaults to zero)
    """

    def __init__(self, A: np.ndarray, c: Optional[np.ndarray] = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)
        self._augmented = np.zeros((n + 1, n + 1))
        self._augmented[:n, :n] = self.A
        self._augmented[:n, n] = self.c
        super().__init__(n, self._evaluate, self._solve)

    def _evaluate(self, x: Vector) -> Vector:
        return self.A @ x + self.c

    def _solve(self, x0: Vector, t: float) -> Vector:
        n = self.dimension
        E = linalg.expm(t * self._augmented)
        return E[:n, :n] @ x0 + E[:n, n]


def _steps(t: float, dt: float) -> Tuple[int, float]:
    if dt <= 0 or not math.isfinite(dt):
        raise DomainError("step dt must be positive", dt=dt)
    if t < 0 or not math.isfinite(t):
        raise DomainError("duration t must be finite and nonnegative", t=t)
    n = int(math.ceil(t / dt - 1e-12)) if t > 0 else 0
    return n, (t / n if n else 0.0)


def _rk4_step(field: Callable[[Vector], Vector], x: Vector, h: float) -> Vector:
    k1 = field(x)
    k2 = field(x + 0.5 * h * k1)
    k3 = field(x + 0.5 * h * k2)
    k4 = field(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_flow(
        field: Union[FlowField, Callable],
        x0: Vector,
        t: float,
        dt: float,
        on_step: Optional[Callable[[Vector], None]] = None,
) -> Vector:
    """
    Classical RK4 approximation of the flow pi_t x0.

    The step is h = t / ceil(t / dt) so the final time is hit exactly.

    Args:
        field: FlowField (or plain callable) giving the velocity
        x0: Initial position
        t: Duration (>= 0)
        dt: Maximal step (> 0)
        on_step: Called with the state after each step

    Returns:
        Position at time t

    Raises:
        DomainError: dt <= 0 or t < 0
        IntegrationError: Non-finite field value; payload carries last valid state
    """
    n, h = _steps(t, dt)
    x = np.array(x0, dtype=float, copy=True)
    for k in range(n):
        x_next = _rk4_step(field, x, h)
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError(
                f"non-finite state at t={k * h + h:.6g}",
                last_state=x, last_time=k * h,
            )
        x = x_next
        if on_step is not None:
            on_step(x)
    return x


def rk4_path(field: Union[FlowField, Callable], x0: Vector, t: float, dt: float, record_every: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """RK4 trajectory sampled every `record_every` steps (endpoints always included)."""
    n, h = _steps(t, dt)
    x = np.array(x0, dtype=float, copy=True)
    times, states = [0.0], [x.copy()]
    for k in range(n):
        x_next = _rk4_step(field, x, h)
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError(f"non-finite state at t={(k + 1) * h:.6g}", last_state=x, last_time=k * h)
        x = x_next
        if (k + 1) % record_every == 0 or k == n - 1:
            times.append((k + 1) * h)
            states.append(x.copy())
    return np.asarray(times), np.asarray(states)


def _quad_piece(g: Callable[[float], float], lo: float, hi: float, tol: float, limit: int):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, error = integrate.quad(g, lo, hi, epsabs=tol, epsrel=tol, limit=limit)
    failed = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    return value, error, failed


def adaptive_quad(
        f: Callable[[float], float],
        a: float,
        b: float,
        tol: float = DEFAULT_QUAD_TOL,
        endpoint_singular: bool = False,
        limit: int = 200,
) -> QuadratureResult:
    """
    Integrate f over [a, b] with scipy's adaptive Gauss-Kronrod rule.

    Tolerance is absolute-or-relative: a piece is accepted when its error
    estimate is below max(tol, tol * |value|).

    Args:
        f: Scalar integrand
        a: Lower limit (finite)
        b: Upper limit, may be +inf (requires decay; mapped by x = a + u/(1-u))
        tol: Requested tolerance (> 0)
        endpoint_singular: Apply x = a + s^2 / x = b - s^2 on the two halves to
            remove integrable power singularities at finite endpoints
        limit: Maximal number of subintervals per piece

    Returns:
        QuadratureResult with value and summed error estimate

    Raises:
        DomainError: tol <= 0 or a >= b
        ToleranceNotMetError: Refinement exhausted; payload carries best estimate
    """
    if tol <= 0:
        raise DomainError("quadrature tolerance must be positive", tol=tol)
    if not (a < b) or not math.isfinite(a):
        raise DomainError("quadrature requires finite a < b", a=a, b=b)

    pieces = []
    if math.isinf(b):
        def mapped(u: float) -> float:
            one_minus = 1.0 - u
            return f(a + u / one_minus) / (one_minus * one_minus)
        pieces.append((mapped, 0.0, 1.0))
    elif endpoint_singular:
        m = 0.5 * (a + b)
        pieces.append((lambda s: 2.0 * s * f(a + s * s), 0.0, math.sqrt(m - a)))
        pieces.append((lambda s: 2.0 * s * f(b - s * s), 0.0, math.sqrt(b - m)))
    else:
        pieces.append((f, a, b))

    value, error, failed = 0.0, 0.0, False
    for g, lo, hi in pieces:
        v, e, bad = _quad_piece(g, lo, hi, tol, limit)
        value += v
        error += e
        failed = failed or bad
    if failed or not math.isfinite(value):
        raise ToleranceNotMetError(
            f"quadrature on [{a}, {b}] did not reach tol={tol:g}",
            best_estimate=value, error_estimate=error,
        )
    return QuadratureResult(value=value, error_estimate=abs(error))


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float = DEFAULT_BISECT_TOL) -> float:
    """
    Root of f in a sign-changing bracket.

    Raises:
        BracketError: f(lo) and f(hi) do not have opposite signs
    """
    f_lo, f_hi = f(lo), f(hi)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
        raise BracketError("non-finite value at bracket end", lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if f_lo * f_hi > 0:
        raise BracketError("no sign change on bracket", lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
    return float(optimize.bisect(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=1000))


class RandomStream:
    """
    Counter-based random source addressed by (seed, stream path).

    The underlying Philox generator is keyed by a SeedSequence whose spawn key
    is the stream path, so `child(k)` streams are independent and the draws of
    any stream depend only on its address and on how many values it has
    produced. A stream is single-owner; hand each worker its own child.

    Args:
        seed: Root seed (64-bit nonnegative integer)
        stream_id: Integer id or tuple path
    """

    def __init__(self, seed: int, stream_id: Union[int, Sequence[int]] = 0):
        if seed < 0:
            raise DomainError("seed must be nonnegative", seed=seed)
        path = (stream_id,) if isinstance(stream_id, (int, np.integer)) else tuple(stream_id)
        self.seed = int(seed)
        self.path: Tuple[int, ...] = tuple(int(p) for p in path)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    @property
    def stream_id(self) -> Tuple[int, ...]:
        return self.path

    @property
    def counter(self) -> int:
        """Philox block counter (low word)."""
        return int(self.generator.bit_generator.state["state"]["counter"][0])

    def child(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + (int(index),))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, path={self.path})"


def sample_exponential(stream: RandomStream, rate: float, size: Optional[int] = None):
    if not (rate > 0) or not math.isfinite(rate):
        raise DomainError("exponential rate must be positive and finite", rate=rate)
    return stream.generator.exponential(1.0 / rate, size)


def sample_poisson_count(stream: RandomStream, mean: float, size: Optional[int] = None):
    if not (mean >= 0) or not math.isfinite(mean):
        raise DomainError("Poisson mean must be finite and nonnegative", mean=mean)
    draws = stream.generator.poisson(mean, size)
    return int(draws) if size is None else draws


def sample_normal(stream: RandomStream, size: Optional[int] = None):
    return stream.generator.standard_normal(size)


def sample_uniform(stream: RandomStream, size: Optional[int] = None):
    return stream.generator.random(size)


def sample_categorical(stream: RandomStream, weights: np.ndarray) -> int:
    """Index drawn with probability proportional to nonnegative weights."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not (total > 0) or np.any(weights < 0):
        raise DomainError("categorical weights must be nonnegative with positive sum", weights=weights)
    u = stream.generator.random() * total
    index = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    return min(index, len(weights) - 1)
