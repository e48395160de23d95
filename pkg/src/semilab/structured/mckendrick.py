"""
Semilab - Age Structure Module

The McKendrick age-structured population model
u_t + u_a = -mu(a) u with renewal boundary u(t, 0) = int psi(a) u(t, a) da,
solved by upwind transport in age, and its Lotka characteristic equation.

Key Features:
- Exact shift when dt equals the age step, upwind otherwise
- Pointwise decay factor exp(-mu dt) and half-step decay for newborns
- Birth flux by the trapezoidal rule in time, solved implicitly
- Lotka root int e^{-lambda a} psi(a) e^{-int_0^a mu} da = 1 by bisection
"""

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate

from ..density import Grid1D, GridDensity
from ..errors import DomainError, ShapeError, StepSizeError, ValidationError
from ..numerics import _steps, adaptive_quad
from ..utils import progress
from .growth import StructuredRun, characteristic_root

logger = logging.getLogger(__name__)


class McKendrickModel:
    """
    Death and birth rates on the age interval [0, a_max].

    Args:
        mu: Death rate mu(a) >= 0
        psi: Birth rate psi(a) >= 0, zero beyond a_max
        a_max: Maximal age (finite); mass ageing past it leaves the population
        n_cells: Number of age cells
        breakpoints: Ages where psi or mu may jump (used by the Lotka quadrature)
    """

    def __init__(
            self,
            mu: Callable[[float], float],
            psi: Callable[[float], float],
            a_max: float,
            n_cells: int,
            breakpoints: Sequence[float] = (),
    ):
        if not (0 < a_max < math.inf):
            raise ValidationError("maximal age must be positive and finite", a_max=a_max)
        self.mu = mu
        self.psi = psi
        self.grid = Grid1D(lo=0.0, hi=float(a_max), n_cells=n_cells)
        self.breakpoints = sorted({0.0, float(a_max), *(b for b in breakpoints if 0 < b < a_max)})
        centers = self.grid.centers
        self.mu_cells = np.array([float(mu(a)) for a in centers])
        self.psi_cells = np.array([float(psi(a)) for a in centers])
        if np.any(self.mu_cells < 0) or np.any(self.psi_cells < 0):
            raise ValidationError("death and birth rates must be nonnegative")
        if not (np.all(np.isfinite(self.mu_cells)) and np.all(np.isfinite(self.psi_cells))):
            raise ValidationError("death and birth rates must be finite on the grid")

    @property
    def a_max(self) -> float:
        return self.grid.hi

    def cumulative_mortality(self) -> Callable[[float], float]:
        """Spline of M(a) = int_0^a mu on a fine grid."""
        a = np.linspace(0.0, self.a_max, 4001)
        values = integrate.cumulative_simpson(np.array([float(self.mu(x)) for x in a]), x=a, initial=0.0)
        spline = interpolate.CubicSpline(a, values)
        return lambda x: float(spline(x))


def lotka_rate(model: McKendrickModel) -> float:
    """
    Malthusian rate from the Lotka characteristic equation.

    Raises:
        DomainError: psi vanishes on the whole grid
        BracketError: no sign change on the search bracket
    """
    if not np.any(model.psi_cells > 0):
        raise DomainError("birth rate is identically zero; no Lotka root")
    M = model.cumulative_mortality()
    pieces = list(zip(model.breakpoints[:-1], model.breakpoints[1:]))

    def F(lam: float) -> float:
        total = 0.0
        for lo, hi in pieces:
            total += adaptive_quad(lambda a: math.exp(-lam * a - M(a)) * model.psi(a), lo, hi, tol=1e-12).value
        return total - 1.0

    root = characteristic_root(F)
    logger.info(f"Lotka root {root:.10g}")
    return root


def mckendrick_evolve(
        model: McKendrickModel,
        u0: GridDensity,
        dt: float,
        T: float,
        record_every: Optional[int] = None,
) -> StructuredRun:
    """
    Upwind solution of the McKendrick equation.

    Each step moves mass one Courant fraction c = h/da up the age grid, applies
    exp(-mu h) per cell and adds h (B_n + B_{n+1}) / 2 newborns to the first
    cell, where B = sum psi_j u_j and B_{n+1} is solved from the linear
    implicit relation. Newborns carry a half-step decay factor.

    Args:
        model: Rates and age grid
        u0: Initial age masses on the model grid
        dt: Maximal step, at most the age cell width
        T: Horizon
        record_every: Record the profile every k steps (default: about 100 records)

    Returns:
        StructuredRun with totals every step and age profiles at recorded times

    Raises:
        StepSizeError: dt > da, or a step so large that the birth relation is singular
        ShapeError: u0 not on the model grid
        DomainError: negative initial masses
    """
    if u0.grid != model.grid:
        raise ShapeError("initial profile must live on the model age grid")
    if np.any(u0.masses < 0):
        raise DomainError("initial masses must be nonnegative", minimum=float(u0.masses.min()))
    da = model.grid.width
    if dt > da * (1 + 1e-12):
        raise StepSizeError(f"CFL violated: dt={dt} > da={da}", dt=dt, da=da)
    n_steps, h = _steps(T, dt)
    c = min(1.0, h / da) if h > 0 else 0.0
    decay = np.exp(-model.mu_cells * h)
    newborn_decay = math.exp(-0.5 * model.mu_cells[0] * h)
    psi = model.psi_cells
    gain = 0.5 * h * newborn_decay * psi[0]
    if gain >= 1.0:
        raise StepSizeError("step too large for the implicit birth relation", dt=dt, psi0=float(psi[0]))
    every = record_every or max(1, n_steps // 100)

    u = np.array(u0.masses, dtype=float)
    births = float(psi @ u)
    times, totals = [0.0], [u.sum()]
    profile_times, profiles = [0.0], [u.copy()]
    for step in progress(range(1, n_steps + 1), desc="mckendrick", total=n_steps):
        out = c * u
        u = u - out
        u[1:] += out[:-1]
        u *= decay
        transported = float(psi @ u)
        new_births = (transported + gain * births) / (1.0 - gain)
        u[0] += 0.5 * h * newborn_decay * (births + new_births)
        births = new_births
        times.append(step * h)
        totals.append(u.sum())
        if step % every == 0 or step == n_steps:
            profile_times.append(step * h)
            profiles.append(u.copy())
    return StructuredRun(times, totals, profile_times, profiles, grids={"age": model.grid})
