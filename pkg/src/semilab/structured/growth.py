"""
Semilab - Population Growth Module

Shared pieces of the structured-population solvers: the run record returned by
every time stepper, the Malthusian-rate fit of the total population, the
rank-one (asynchronous exponential growth) residual of normalized profiles and
the bracketed root search behind the Lotka and renewal oracles.

Key Features:
- StructuredRun with totals every step and profiles at recorded times
- Least-squares log-slope with R^2 over a time window
- Residual ||d_t - d_T||_1 of normalized profiles
- Characteristic-equation roots with bracket doubling
"""

import logging
import math
import warnings
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .._default import DEFAULT_LOTKA_BRACKET, MAX_BRACKET_DOUBLINGS
from ..errors import BracketError, DegenerateInputError, DomainError, ShapeError
from ..numerics import bisect_root
from ..outputs import MalthusEstimate

logger = logging.getLogger(__name__)


class StructuredRun:
    """
    Trajectory of a structured-population solver.

    Args:
        times: Step times (including 0)
        totals: Total population at each step time
        profile_times: Times at which the full state was recorded
        profiles: Recorded states, shape (n_records, *state_shape)
        grids: Named Grid1D objects describing the state axes
        extra: Per-step bookkeeping arrays (e.g. removed/injected mass)
    """

    def __init__(
            self,
            times: Sequence[float],
            totals: Sequence[float],
            profile_times: Sequence[float],
            profiles: Sequence[np.ndarray],
            grids: Optional[Dict[str, object]] = None,
            extra: Optional[Dict[str, np.ndarray]] = None,
    ):
        self.times = np.asarray(times, dtype=float)
        self.totals = np.asarray(totals, dtype=float)
        if self.times.shape != self.totals.shape:
            raise ShapeError("times and totals must have the same length")
        self.profile_times = np.asarray(profile_times, dtype=float)
        self.profiles = np.asarray(profiles, dtype=float)
        if len(self.profile_times) != len(self.profiles):
            raise ShapeError("one profile per recorded time")
        self.grids = dict(grids or {})
        self.extra = {k: np.asarray(v) for k, v in (extra or {}).items()}

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]

    def map_profiles(self, fn: Callable[[np.ndarray], np.ndarray], grids: Optional[Dict[str, object]] = None) -> "StructuredRun":
        """Same run with every recorded profile replaced by fn(profile)."""
        mapped = [np.asarray(fn(p), dtype=float) for p in self.profiles]
        return StructuredRun(self.times, self.totals, self.profile_times, mapped, grids or self.grids, self.extra)

    def totals_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "total": self.totals})

    def __repr__(self) -> str:
        return f"StructuredRun(steps={len(self.times) - 1}, records={len(self.profile_times)}, T={self.times[-1]:g})"


def _window_mask(times: np.ndarray, window: Optional[Tuple[float, float]]) -> np.ndarray:
    if window is None:
        return np.ones_like(times, dtype=bool)
    t0, t1 = window
    return (times >= t0 - 1e-12) & (times <= t1 + 1e-12)


def malthus_estimate(
        times: Sequence[float],
        totals: Sequence[float],
        window: Optional[Tuple[float, float]] = None,
) -> MalthusEstimate:
    """
    Least-squares slope of log total mass over a time window.

    Args:
        times: Sample times
        totals: Total population at those times
        window: (t0, t1); the whole trajectory when omitted

    Returns:
        MalthusEstimate with the slope and R^2 (R^2 = 1 for an exactly
        constant series)

    Raises:
        DomainError: nonpositive mass inside the window
        DegenerateInputError: fewer than two samples in the window
    """
    times = np.asarray(times, dtype=float)
    totals = np.asarray(totals, dtype=float)
    mask = _window_mask(times, window)
    t, m = times[mask], totals[mask]
    if t.size < 2 or np.ptp(t) == 0:
        raise DegenerateInputError("need at least two distinct times in the window", n=int(t.size))
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise DomainError("total mass must be positive on the fit window", minimum=float(m.min()))
    y = np.log(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = stats.linregress(t, y)
    residual = y - (fit.intercept + fit.slope * t)
    ss_res = float(np.dot(residual, residual))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return MalthusEstimate(lambda_hat=float(fit.slope), r_squared=r_squared)


def window_rates(run: StructuredRun, windows: Sequence[Tuple[float, float]]) -> np.ndarray:
    """Malthus estimates over successive windows, for stability checks."""
    return np.array([malthus_estimate(run.times, run.totals, w).lambda_hat for w in windows])


def aeg_residual(run: StructuredRun, lambda_hat: float) -> np.ndarray:
    """
    Residuals r_t = ||d_t - d_T||_1 of the normalized recorded profiles.

    d_t is e^{-lambda_hat t} u(t) scaled to unit mass; the scaling cancels in
    the normalization, so lambda_hat only enters through the scaled totals
    logged for inspection.
    """
    flat = run.profiles.reshape(len(run.profiles), -1)
    mass = flat.sum(axis=1)
    if np.any(mass <= 0):
        raise DegenerateInputError("a recorded profile has no mass", index=int(np.argmin(mass)))
    scaled = np.exp(-lambda_hat * run.profile_times) * mass
    logger.info(f"scaled totals range [{scaled.min():.6g}, {scaled.max():.6g}]")
    normalized = flat / mass[:, None]
    return np.abs(normalized - normalized[-1]).sum(axis=1)


def characteristic_root(
        F: Callable[[float], float],
        bracket: Tuple[float, float] = DEFAULT_LOTKA_BRACKET,
) -> float:
    """
    Root of a decreasing characteristic function F(lambda).

    The bracket is widened by doubling its half-width until F changes sign.

    Raises:
        BracketError: no sign change within the doubling budget
    """
    lo, hi = bracket
    for _ in range(MAX_BRACKET_DOUBLINGS):
        try:
            f_lo, f_hi = F(lo), F(hi)
        except OverflowError as exc:
            raise BracketError(f"characteristic function overflowed on [{lo}, {hi}]", lo=lo, hi=hi) from exc
        if math.isfinite(f_lo) and math.isfinite(f_hi) and f_lo * f_hi <= 0:
            return bisect_root(F, lo, hi)
        if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
            break
        centre, half = 0.5 * (lo + hi), hi - lo
        lo, hi = centre - half, centre + half
    raise BracketError("characteristic function has no sign change on the search bracket", lo=lo, hi=hi)
