"""
Semilab - Size Structure Module

Size-structured population with binary fission into equal halves:

    u_t = -(g u)_x - lambda(x) u + 4 lambda(2x) u(t, 2x)

A cell of size x divides at rate lambda(x) into two cells of size x/2. The loss
term removes the mother; integrating the gain term over x gives
2 int lambda u, so the total population obeys d/dt int u = int lambda u.

Key Features:
- Conservative upwind flux with a zero-flux wall at x_max
- Mass-exact daughter placement: cell j of [0, x_max] halves into cell j // 2
- Explicit Euler for the division terms
"""

import logging
from typing import Callable, Optional

import numpy as np

from ..density import Grid1D, GridDensity
from ..errors import DomainError, ShapeError, StepSizeError, ValidationError
from ..numerics import _steps
from ..utils import progress
from .growth import StructuredRun

logger = logging.getLogger(__name__)


class SizeDivisionModel:
    """
    Growth speed g(x) > 0 and division rate lambda(x) >= 0 on [0, x_max].

    Division of cells in the upper half of the grid still places daughters
    inside the grid; the gain term at x > x_max / 2 is zero because u(2x) lives
    beyond x_max.
    """

    def __init__(self, g: Callable[[float], float], lambda_div: Callable[[float], float], x_max: float, n_cells: int):
        self.g = g
        self.lambda_div = lambda_div
        self.grid = Grid1D(lo=0.0, hi=float(x_max), n_cells=n_cells)
        self.g_edges = np.array([float(g(x)) for x in self.grid.edges])
        self.lambda_cells = np.array([float(lambda_div(x)) for x in self.grid.centers])
        if np.any(self.g_edges[1:] <= 0):
            raise ValidationError("growth speed must be positive on (0, x_max]")
        if np.any(self.lambda_cells < 0):
            raise ValidationError("division rate must be nonnegative")


def size_division_evolve(
        model: SizeDivisionModel,
        u0: GridDensity,
        dt: float,
        T: float,
        record_every: Optional[int] = None,
) -> StructuredRun:
    """
    Explicit upwind solution of the size-division equation.

    Args:
        model: Growth and division rates on the size grid
        u0: Initial size masses on the model grid
        dt: Time step, subject to dt max g <= dx
        T: Horizon
        record_every: Record the profile every k steps (default: about 100 records)

    Raises:
        StepSizeError: CFL violated
        ShapeError: u0 not on the model grid
        DomainError: negative initial masses
    """
    if u0.grid != model.grid:
        raise ShapeError("initial profile must live on the model size grid")
    if np.any(u0.masses < 0):
        raise DomainError("initial masses must be nonnegative", minimum=float(u0.masses.min()))
    dx = model.grid.width
    speed = float(model.g_edges.max())
    if dt * speed > dx * (1 + 1e-12):
        raise StepSizeError(f"CFL violated: dt * max g = {dt * speed:.6g} > dx = {dx:.6g}", dt=dt, dx=dx)
    n_steps, h = _steps(T, dt)
    courant = h * model.g_edges[1:-1] / dx
    loss_rate = h * model.lambda_cells
    if np.any(loss_rate > 1):
        logger.warning("division step h * lambda exceeds 1; explicit Euler will go negative")
    daughters = np.arange(model.grid.n_cells) // 2
    every = record_every or max(1, n_steps // 100)

    u = np.array(u0.masses, dtype=float)
    times, totals = [0.0], [u.sum()]
    profile_times, profiles = [0.0], [u.copy()]
    for step in progress(range(1, n_steps + 1), desc="size-division", total=n_steps):
        flux = courant * u[:-1]
        u[:-1] -= flux
        u[1:] += flux
        divided = loss_rate * u
        u -= divided
        np.add.at(u, daughters, 2.0 * divided)
        times.append(step * h)
        totals.append(u.sum())
        if step % every == 0 or step == n_steps:
            profile_times.append(step * h)
            profiles.append(u.copy())
    return StructuredRun(times, totals, profile_times, profiles, grids={"size": model.grid})
