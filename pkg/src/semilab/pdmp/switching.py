"""
Semilab - Random Switching Module

Dynamical systems with random switching: one flow per regime, state-dependent
switching intensities q_kl(x) and first-jump times sampled by thinning against
a declared bound on the total exit rate.

Key Features:
- SwitchingModel with bound verification by grid scan over the declared region
- Thinned first-jump sampling along a flow (bound-independent law)
- Exact-in-law switching paths with invariant-region checks after entry
"""

import itertools
import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .._default import REGION_TOL
from ..errors import BoundViolationError, DomainError, RegionViolationError, ValidationError
from ..numerics import FlowField, RandomStream, sample_categorical, sample_exponential, sample_uniform
from .trajectory import HybridState, Trajectory

logger = logging.getLogger(__name__)

RateFunction = Callable[[np.ndarray], float]


def constant_rate(value: float) -> RateFunction:
    return lambda x: value


class SwitchingModel:
    """
    Regime flows with switching intensities.

    Args:
        flows: One FlowField per regime
        rates: {(k, l): q_kl} for k != l; missing pairs are zero
        Lambda: Declared bound on every total exit rate sum_l q_kl(x)
        region: Optional box (lo, hi) that paths stay in after entering it
        dt: RK4 step for flows without a closed form
        scan_points: Grid points per axis for the bound scan over the region
    """

    def __init__(
            self,
            flows: Sequence[FlowField],
            rates: Dict[Tuple[int, int], RateFunction],
            Lambda: float,
            region: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
            dt: float = 1e-3,
            scan_points: int = 21,
    ):
        self.flows = list(flows)
        self.n_regimes = len(self.flows)
        for k, l in rates:
            if k == l or not (0 <= k < self.n_regimes and 0 <= l < self.n_regimes):
                raise ValidationError(f"invalid switching pair ({k}, {l})")
        if not (Lambda >= 0) or not math.isfinite(Lambda):
            raise ValidationError("rate bound must be finite and nonnegative", Lambda=Lambda)
        self.rates = dict(rates)
        self.Lambda = float(Lambda)
        self.region = None if region is None else (
            np.atleast_1d(np.asarray(region[0], dtype=float)),
            np.atleast_1d(np.asarray(region[1], dtype=float)),
        )
        self.dt = dt
        if self.region is not None:
            self._scan_bound(scan_points)

    def _scan_bound(self, scan_points: int) -> None:
        lo, hi = self.region
        axes = [np.linspace(a, b, scan_points) for a, b in zip(lo, hi)]
        for point in itertools.product(*axes):
            x = np.asarray(point)
            for k in range(self.n_regimes):
                total = self.exit_rate(k, x)
                if total > self.Lambda * (1 + 1e-12):
                    raise BoundViolationError(
                        f"exit rate {total:.6g} of regime {k} exceeds bound {self.Lambda}",
                        x=x, regime=k, rate=total,
                    )

    def targets(self, k: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Target regimes and their intensities from regime k at x."""
        pairs = [(l, float(q(x))) for (j, l), q in self.rates.items() if j == k]
        if not pairs:
            return np.empty(0, dtype=int), np.empty(0)
        labels, values = zip(*pairs)
        return np.asarray(labels), np.asarray(values)

    def exit_rate(self, k: int, x: np.ndarray) -> float:
        return float(self.targets(k, x)[1].sum())

    def in_region(self, x: np.ndarray) -> bool:
        if self.region is None:
            return True
        lo, hi = self.region
        return bool(np.all(x >= lo - REGION_TOL) and np.all(x <= hi + REGION_TOL))


def _thinned_jump(
        flow: FlowField,
        psi: Callable[[np.ndarray], float],
        x: np.ndarray,
        stream: RandomStream,
        Lambda: float,
        horizon: float = math.inf,
        dt: float = 1e-3,
        check: Optional[Callable[[np.ndarray], None]] = None,
) -> Tuple[float, np.ndarray]:
    """
    First accepted thinning proposal before `horizon`.

    `check`, when given, sees the state after every flow step, including the
    final stretch up to the horizon.

    Returns:
        (tau, x_tau); tau is inf when no jump happens before the horizon, and
        x_tau is then the position at the horizon
    """
    if Lambda <= 0:
        x_end = flow.flow(x, horizon, dt, check) if math.isfinite(horizon) else x
        return math.inf, x_end
    t = 0.0
    while True:
        step = float(sample_exponential(stream, Lambda))
        if t + step > horizon:
            return math.inf, flow.flow(x, horizon - t, dt, check)
        x = flow.flow(x, step, dt, check)
        t += step
        rate = float(psi(x))
        if rate > Lambda * (1 + 1e-12) or rate < 0:
            raise BoundViolationError(
                f"jump rate {rate:.6g} outside [0, {Lambda}]",
                x=x, rate=rate, Lambda=Lambda, time=t,
            )
        if sample_uniform(stream) * Lambda < rate:
            return t, x


def next_jump_time(
        flow: FlowField,
        psi: Callable[[np.ndarray], float],
        state: HybridState,
        stream: RandomStream,
        Lambda: float,
        horizon: float = math.inf,
        dt: float = 1e-3,
) -> float:
    """
    First-jump time with survival exp(-int_0^t psi(pi_s x) ds), by thinning.

    Exp(Lambda) proposals are accepted with probability psi / Lambda evaluated
    on the flowed state, so the law does not depend on the bound chosen.

    Args:
        flow: Flow of the current regime
        psi: Jump rate as a function of position
        state: Starting state
        stream: Random source
        Lambda: Declared bound on psi along the path
        horizon: Give up (return inf) past this time

    Raises:
        BoundViolationError: psi exceeds Lambda (or is negative) at a proposal
    """
    tau, _ = _thinned_jump(flow, psi, np.asarray(state.x, dtype=float), stream, Lambda, horizon, dt)
    return tau


def simulate_switching(model: SwitchingModel, initial: HybridState, T: float, stream: RandomStream) -> Trajectory:
    """
    Switching path on [0, T]: flow between jumps, jump times by thinning, new
    regime drawn proportionally to q_kl at the jump position.

    Raises:
        DomainError: T <= 0 or an unknown initial regime
        RegionViolationError: the path leaves the region after entering it
            (checked after every flow step)
    """
    if not (T > 0):
        raise DomainError("horizon T must be positive", T=T)
    if not (0 <= initial.i < model.n_regimes):
        raise DomainError(f"unknown regime {initial.i}")
    t = float(initial.t)
    end = t + T
    x = np.asarray(initial.x, dtype=float)
    regime = int(initial.i)
    entered = model.in_region(x)

    def check(position: np.ndarray) -> None:
        nonlocal entered
        inside = model.in_region(position)
        if entered and not inside:
            raise RegionViolationError("path left the invariant region", x=position, regime=regime)
        entered = entered or inside

    times, positions, regimes = [t], [x.copy()], [regime]
    while True:
        tau, x = _thinned_jump(
            model.flows[regime],
            lambda p, k=regime: model.exit_rate(k, p),
            x, stream, model.Lambda, end - t, model.dt, check,
        )
        if math.isinf(tau):
            break
        t += tau
        labels, values = model.targets(regime, x)
        regime = int(labels[sample_categorical(stream, values)])
        times.append(t)
        positions.append(x.copy())
        regimes.append(regime)
    times.append(end)
    positions.append(x.copy())
    regimes.append(regime)
    return Trajectory(np.asarray(times) - initial.t, positions, regimes, flows=model.flows, dt=model.dt)
