"""
Semilab - Gene Expression Presets Module

Gene expression models as dynamical systems with switching: the one-gene
protein model, the mRNA/protein model and the three-stage pre-mRNA model, each
with random activation or with automatic activation when the protein level
falls to a threshold.

Key Features:
- Linear regime flows with exact matrix-exponential solutions
- Invariant boxes and default thinning bounds from a rate scan
- Threshold variants with guard crossings located by bisection on the flow
- Closed-form inactive duration (1/mu) ln(x0/theta) for the one-gene model
- Active-duration distribution function for the normalized one-gene model
"""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from .._default import DEFAULT_GUARD_STEP, DEFAULT_STALL_HORIZON, GUARD_TIME_TOL
from ..errors import DomainError, StallError
from ..numerics import LinearFlowField, RandomStream, adaptive_quad, bisect_root
from .switching import SwitchingModel, _thinned_jump, constant_rate, simulate_switching
from .trajectory import HybridState, Trajectory

logger = logging.getLogger(__name__)

Rate = Union[float, Callable[[np.ndarray], float]]


def _as_rate(rate: Rate) -> Callable[[np.ndarray], float]:
    return rate if callable(rate) else constant_rate(float(rate))


def _default_bound(rates, lo, hi, points: int = 21) -> float:
    axes = np.meshgrid(*[np.linspace(a, b, points) for a, b in zip(lo, hi)], indexing="ij")
    grid = np.stack([axis.ravel() for axis in axes], axis=1)
    worst = max((max(float(q(x)) for x in grid) for q in rates), default=0.0)
    return 1.05 * worst


def _build(flows, q01: Rate, q10: Rate, lo, hi, Lambda: Optional[float]) -> SwitchingModel:
    q01, q10 = _as_rate(q01), _as_rate(q10)
    if Lambda is None:
        Lambda = _default_bound([q01, q10], lo, hi)
    return SwitchingModel(flows, {(0, 1): q01, (1, 0): q10}, Lambda, region=(lo, hi))


def gene_1d_model(P: float = 1.0, mu: float = 1.0, q01: Rate = 1.0, q10: Rate = 1.0, Lambda: Optional[float] = None) -> SwitchingModel:
    """x' = P i - mu x on the invariant interval [0, P/mu]."""
    flows = [LinearFlowField([[-mu]]), LinearFlowField([[-mu]], [P])]
    return _build(flows, q01, q10, [0.0], [P / mu], Lambda)


def gene_2d_model(
        R: float = 1.0, P: float = 1.0, mu_R: float = 1.0, mu_P: float = 1.0,
        q01: Rate = 1.0, q10: Rate = 1.0, Lambda: Optional[float] = None,
) -> SwitchingModel:
    """mRNA x1' = R i - mu_R x1, protein x2' = P x1 - mu_P x2."""
    A = [[-mu_R, 0.0], [P, -mu_P]]
    flows = [LinearFlowField(A), LinearFlowField(A, [R, 0.0])]
    return _build(flows, q01, q10, [0.0, 0.0], [R / mu_R, P * R / (mu_P * mu_R)], Lambda)


def gene_3stage_model(
        A: float = 1.0, R: float = 1.0, P: float = 1.0,
        mu_pR: float = 1.0, mu_R: float = 1.0, mu_P: float = 1.0,
        q01: Rate = 1.0, q10: Rate = 1.0, Lambda: Optional[float] = None,
) -> SwitchingModel:
    """Pre-mRNA, mRNA and protein with synthesis speed A of the pre-mRNA."""
    M = [[-(R + mu_pR), 0.0, 0.0], [R, -mu_R, 0.0], [0.0, P, -mu_P]]
    flows = [LinearFlowField(M), LinearFlowField(M, [A, 0.0, 0.0])]
    x1 = A / (R + mu_pR)
    x2 = R * x1 / mu_R
    hi = [x1, x2, P * x2 / mu_P]
    return _build(flows, q01, q10, [0.0, 0.0, 0.0], hi, Lambda)


GENE_VARIANTS: Dict[str, Callable[..., SwitchingModel]] = {
    "1d": gene_1d_model,
    "2d": gene_2d_model,
    "3stage": gene_3stage_model,
}


def active_duration_cdf(q10: Callable[[float], float], x0: float, t: float) -> float:
    """
    F1(t) = 1 - exp(-int_0^t q10(1 + (x0 - 1) e^{-s}) ds) for the one-gene model
    normalized to P = mu = 1.
    """
    if t <= 0:
        return 0.0
    exposure = adaptive_quad(lambda s: q10(1.0 + (x0 - 1.0) * math.exp(-s)), 0.0, t).value
    return 1.0 - math.exp(-exposure)


def _guard_time(flow: LinearFlowField, x: np.ndarray, theta: float, step: float, horizon: float) -> float:
    """First time the protein (last coordinate) falls to theta along the flow."""
    def gap(s: float) -> float:
        return float(flow.flow(x, s)[-1]) - theta

    if gap(0.0) <= 0:
        return 0.0
    lo = 0.0
    while lo < horizon:
        hi = lo + step
        if gap(hi) <= 0:
            return bisect_root(gap, lo, hi, tol=GUARD_TIME_TOL)
        lo = hi
    raise StallError(f"protein did not reach theta={theta} within {horizon}", theta=theta, horizon=horizon)


def simulate_threshold_gene(
        variant: str,
        params: Dict[str, float],
        theta: float,
        stream: RandomStream,
        T: float,
        x0: Optional[Sequence[float]] = None,
        q10: Rate = 1.0,
        guard_step: float = DEFAULT_GUARD_STEP,
        stall_horizon: float = DEFAULT_STALL_HORIZON,
) -> Trajectory:
    """
    Threshold variant: random inactivation with rate q10, automatic activation
    when the protein falls to theta.

    The inactivation rate is held at zero while the protein is at or below
    theta, so the gene stays active until the protein exceeds theta strictly.
    For the one-gene model the inactive duration is (1/mu) ln(x/theta) in
    closed form; the other variants bisect the guard on the flow to 1e-10.

    Args:
        variant: "1d", "2d" or "3stage"
        params: Model constants for the variant's builder
        theta: Protein threshold (> 0)
        stream: Random source
        T: Horizon
        x0: Initial concentrations (default: protein at theta, rest zero)
        q10: Inactivation rate (constant or function of the state)

    Returns:
        Trajectory starting in the active regime

    Raises:
        DomainError: unknown variant or theta <= 0
        StallError: theta above the active equilibrium protein level, or a guard
            not reached within stall_horizon
    """
    if variant not in GENE_VARIANTS:
        raise DomainError(f"unknown gene variant {variant!r}", known=list(GENE_VARIANTS))
    if not (theta > 0):
        raise DomainError("threshold must be positive", theta=theta)
    rate = _as_rate(q10)

    def masked(x: np.ndarray) -> float:
        return float(rate(x)) if x[-1] > theta else 0.0

    model = GENE_VARIANTS[variant](q01=0.0, q10=masked, **params)
    ceiling = float(model.region[1][-1])
    if theta > ceiling * (1 + 1e-12):
        raise StallError(
            f"theta={theta} above the active equilibrium protein level {ceiling}; the guard is unreachable",
            theta=theta, ceiling=ceiling,
        )
    dimension = model.flows[0].dimension
    x = np.zeros(dimension) if x0 is None else np.asarray(x0, dtype=float).reshape(dimension)
    if x0 is None:
        x[-1] = theta
    mu = params.get("mu", 1.0)

    t, regime = 0.0, 1
    times, positions, regimes = [0.0], [x.copy()], [regime]
    while True:
        if regime == 0:
            if variant == "1d":
                s = max(0.0, math.log(x[0] / theta) / mu)
            else:
                s = _guard_time(model.flows[0], x, theta, guard_step, stall_horizon)
            if t + s >= T:
                x = model.flows[0].flow(x, T - t)
                break
            x = model.flows[0].flow(x, s)
            x[-1] = theta
            t += s
            regime = 1
        else:
            tau, x = _thinned_jump(model.flows[1], masked, x, stream, model.Lambda, T - t, model.dt)
            if math.isinf(tau):
                break
            t += tau
            regime = 0
        times.append(t)
        positions.append(x.copy())
        regimes.append(regime)
    times.append(T)
    positions.append(np.asarray(x, dtype=float).copy())
    regimes.append(regime)
    logger.info(f"threshold gene {variant}: {len(times) - 2} switches on [0, {T}]")
    return Trajectory(times, positions, regimes, flows=model.flows)


def simulate_gene(
        variant: str,
        params: Dict[str, float],
        stream: RandomStream,
        T: float,
        x0: Optional[Sequence[float]] = None,
        regime: int = 0,
) -> Trajectory:
    """Random-switching gene path from x0 (default: origin, inactive)."""
    model = GENE_VARIANTS[variant](**params)
    dimension = model.flows[0].dimension
    x = np.zeros(dimension) if x0 is None else np.asarray(x0, dtype=float).reshape(dimension)
    return simulate_switching(model, HybridState(x=x, i=regime), T, stream)
