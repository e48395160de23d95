"""
Semilab - Jump Process Module

Pure jump and flow-with-jumps processes: kangaroo movement with state-dependent
holding rates, its semi-Markov extension with age-dependent jumps, and
dynamical systems with random jumps such as the immune-status and catastrophe
models.

Key Features:
- Kangaroo paths with exact exponential holding times
- Semi-Markov holding times by inverse-CDF bisection, age coordinate recorded
- Hazard p(x, a) = q(x, a) / int_a^inf q(x, r) dr
- Flow-with-jumps engine (thinning) and the immune-status preset
"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np

from .._default import MAX_BRACKET_DOUBLINGS
from ..errors import BoundViolationError, BracketError, DomainError, SamplerError, ValidationError
from ..numerics import FlowField, RandomStream, adaptive_quad, bisect_root, sample_exponential
from .switching import _thinned_jump
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

JumpSampler = Callable[[np.ndarray, RandomStream], np.ndarray]


def _require_bound(Lambda: float) -> None:
    if not (0 < Lambda < math.inf):
        raise DomainError("declared jump-rate bound must be finite and positive", Lambda=Lambda)


def kangaroo_simulate(
        psi: Callable[[np.ndarray], float],
        jump_sampler: JumpSampler,
        x0,
        T: float,
        stream: RandomStream,
        Lambda: float,
        max_jumps: Optional[int] = None,
) -> Trajectory:
    """
    Pure jump path: constant between jumps, holding Exp(psi(x)), relocation by
    the jump sampler.

    Args:
        psi: Jump rate (bounded by Lambda)
        jump_sampler: (x, stream) -> new position
        x0: Starting position
        T: Horizon
        stream: Random source
        Lambda: Declared bound on psi
        max_jumps: Stop early after this many jumps (horizon shortened to the last jump)

    Raises:
        DomainError: Lambda not finite and positive
        BoundViolationError: psi outside [0, Lambda]
    """
    _require_bound(Lambda)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    t = 0.0
    times, positions = [0.0], [x.copy()]
    while True:
        rate = float(psi(x))
        if rate < 0 or rate > Lambda:
            raise BoundViolationError(f"jump rate {rate:.6g} outside [0, {Lambda}]", x=x, rate=rate)
        if rate == 0:
            break
        t_next = t + float(sample_exponential(stream, rate))
        if t_next > T:
            break
        t = t_next
        x = np.atleast_1d(np.asarray(jump_sampler(x, stream), dtype=float))
        times.append(t)
        positions.append(x.copy())
        if max_jumps is not None and len(times) - 1 >= max_jumps:
            T = t
            break
    times.append(T)
    positions.append(x.copy())
    return Trajectory(times, positions, np.zeros(len(times), dtype=int))


class SemiMarkovKangaroo:
    """
    Jump process whose holding time in x has density q(x, a).

    Args:
        q: Holding density q(x, a)
        jump_sampler: (x, stream) -> new position
        cdf: Optional closed form of a -> int_0^a q(x, r) dr (quadrature otherwise)
        support: Optional x -> (a_lo, a_hi) containing the holding-time support
    """

    def __init__(
            self,
            q: Callable[[np.ndarray, float], float],
            jump_sampler: JumpSampler,
            cdf: Optional[Callable[[np.ndarray, float], float]] = None,
            support: Optional[Callable[[np.ndarray], Tuple[float, float]]] = None,
    ):
        self.q = q
        self.jump_sampler = jump_sampler
        self._cdf = cdf
        self.support = support

    def cdf(self, x: np.ndarray, a: float) -> float:
        if a <= 0:
            return 0.0
        if self._cdf is not None:
            return float(self._cdf(x, a))
        lo = 0.0
        if self.support is not None:
            lo = self.support(x)[0]
            if a <= lo:
                return 0.0
        return adaptive_quad(lambda r: self.q(x, r), lo, a, tol=1e-12).value

    def survival(self, x: np.ndarray, a: float) -> float:
        return max(0.0, 1.0 - self.cdf(x, a))

    def hazard(self, x: np.ndarray, a: float) -> float:
        """p(x, a) = q(x, a) / int_a^inf q(x, r) dr."""
        tail = self.survival(x, a)
        if tail <= 0:
            raise DomainError("hazard undefined where the survival function vanishes", a=a)
        return float(self.q(x, a)) / tail

    def check_normalization(self, xs, tol: float = 1e-8) -> None:
        """
        Raises:
            ValidationError: int_0^inf q(x, a) da differs from 1 by more than tol at some x
        """
        for x in xs:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            if self.support is not None and math.isfinite(self.support(x)[1]):
                total = self.cdf(x, self.support(x)[1])
            else:
                lo = self.support(x)[0] if self.support is not None else 0.0
                total = adaptive_quad(lambda r: self.q(x, r), lo, math.inf, tol=1e-12).value
            if abs(total - 1.0) > tol:
                raise ValidationError(f"holding density at x={x} integrates to {total}", x=x, total=total)

    def sample_holding(self, x: np.ndarray, stream: RandomStream) -> float:
        """Inverse-CDF draw of the holding time at x."""
        u = float(stream.generator.random())
        if self.support is not None:
            lo, hi = self.support(x)
        else:
            lo, hi = 0.0, 1.0
        doublings = 0
        while not math.isfinite(hi) or self.cdf(x, hi) < u:
            hi = max(1.0, 2.0 * lo) if not math.isfinite(hi) else 2.0 * hi
            doublings += 1
            if doublings > MAX_BRACKET_DOUBLINGS:
                raise SamplerError("holding-time CDF never reached the drawn level", u=u, x=x)
        try:
            return bisect_root(lambda a: self.cdf(x, a) - u, lo, hi)
        except BracketError as exc:
            raise SamplerError(f"inverse-CDF bracketing failed: {exc}", u=u, x=x) from exc


def semi_markov_simulate(model: SemiMarkovKangaroo, x0, T: float, stream: RandomStream) -> Trajectory:
    """
    Path of (position at last jump, age since last jump) on [0, T].

    Ages reset to 0 at each jump; the age at time t is t minus the last jump time.

    Raises:
        SamplerError: inverse-CDF bracketing failure
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    t = 0.0
    times, positions, ages = [0.0], [x.copy()], [0.0]
    while True:
        t_next = t + model.sample_holding(x, stream)
        if t_next > T:
            break
        t = t_next
        x = np.atleast_1d(np.asarray(model.jump_sampler(x, stream), dtype=float))
        times.append(t)
        positions.append(x.copy())
        ages.append(0.0)
    times.append(T)
    positions.append(x.copy())
    ages.append(T - t)
    return Trajectory(times, positions, np.zeros(len(times), dtype=int), ages=ages)


def jump_flow_simulate(
        flow: FlowField,
        psi: Callable[[np.ndarray], float],
        jump_sampler: JumpSampler,
        x0,
        T: float,
        stream: RandomStream,
        Lambda: float,
        dt: float = 1e-3,
) -> Trajectory:
    """
    Dynamical system x' = b(x) with jumps at rate psi(x) to jump_sampler(x).

    Jump times come from thinning against Lambda along the flow.

    Raises:
        DomainError: Lambda not finite and positive
        BoundViolationError: psi outside [0, Lambda] at a proposal
    """
    _require_bound(Lambda)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    t = 0.0
    times, positions = [0.0], [x.copy()]
    while True:
        tau, x = _thinned_jump(flow, psi, x, stream, Lambda, T - t, dt)
        if math.isinf(tau):
            break
        t += tau
        x = np.atleast_1d(np.asarray(jump_sampler(x, stream), dtype=float))
        times.append(t)
        positions.append(x.copy())
    times.append(T)
    positions.append(np.atleast_1d(x).copy())
    return Trajectory(times, positions, np.zeros(len(times), dtype=int), flows=[flow], dt=dt)


def decay_flow(mu: float) -> FlowField:
    """x' = -mu x with its exact solution."""
    return FlowField(1, lambda x: -mu * np.asarray(x), lambda x0, t: np.asarray(x0) * math.exp(-mu * t))


def immune_status_simulate(
        mu: float,
        lam: float,
        boost: Callable[[np.ndarray], np.ndarray],
        x0: float,
        T: float,
        stream: RandomStream,
) -> Trajectory:
    """
    Antibody level waning as x' = -mu x, boosted to boost(x) > x at infections
    arriving as a Poisson process of intensity lam.

    With boost(x) = x + beta the stationary mean level is lam beta / mu.
    """
    if not (mu > 0 and lam > 0):
        raise DomainError("decay and infection rates must be positive", mu=mu, lam=lam)
    return jump_flow_simulate(decay_flow(mu), lambda x: lam, lambda x, _: boost(x), x0, T, stream, Lambda=lam)


def additive_boost(beta: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.asarray(x) + beta


def catastrophe_simulate(
        growth: FlowField,
        psi: Callable[[np.ndarray], float],
        survivors: Callable[[np.ndarray, RandomStream], np.ndarray],
        x0: float,
        T: float,
        stream: RandomStream,
        Lambda: float,
) -> Trajectory:
    """Population growing along a flow, cut to survivors(x) at catastrophes of intensity psi(x)."""
    return jump_flow_simulate(growth, psi, survivors, x0, T, stream, Lambda)
