"""
Semilab - Velocity Jump Module

Velocity jump processes on the line: the symmetric telegraph process with its
Kac system cross-check, and the three-state vesicle transport model with a
capture region around a target point.

Key Features:
- Exact telegraph sampling from Poisson jump times
- Upwind transport with exact regime exchange (Lie splitting) for the Kac system
- Vesicle cycles with elastic end at 0, restart at L and capture intensity kappa
"""

import logging
import math
from typing import Sequence, Tuple, Union

import numpy as np

from .._default import DEFAULT_ENSEMBLE_CHUNK
from ..density import ProductDensity
from ..errors import DomainError, ShapeError, StepSizeError
from ..numerics import RandomStream, _steps, sample_categorical, sample_exponential, sample_poisson_count
from ..outputs import VesicleReport
from ..utils import chunk_sizes, progress, run_parallel

logger = logging.getLogger(__name__)

VESICLE_STATES = (-1, 0, 1)


def telegraph_simulate(lam: float, x0: float, v0: int, T: float, stream: RandomStream) -> Tuple[float, int]:
    """
    Exact telegraph endpoint: v_t = v0 (-1)^{N_t}, x_t = x0 + v0 int_0^t (-1)^{N_s} ds.

    Raises:
        DomainError: lam <= 0, T < 0 or v0 not in {-1, 1}
    """
    if not (lam > 0):
        raise DomainError("telegraph rate must be positive", lam=lam)
    if v0 not in (-1, 1):
        raise DomainError("initial velocity must be -1 or 1", v0=v0)
    if T < 0:
        raise DomainError("horizon must be nonnegative", T=T)
    n = sample_poisson_count(stream, lam * T)
    if n == 0:
        return x0 + v0 * T, v0
    jumps = np.sort(stream.generator.random(n)) * T
    edges = np.concatenate([[0.0], jumps, [T]])
    signs = (-1.0) ** np.arange(n + 1)
    x = x0 + v0 * float(np.dot(signs, np.diff(edges)))
    return x, int(v0 * (-1) ** n)


def telegraph_ensemble(
        lam: float,
        x0: Sequence[float],
        v0: Sequence[int],
        T: float,
        stream: RandomStream,
        threads: int = 1,
        chunk: int = DEFAULT_ENSEMBLE_CHUNK,
) -> Tuple[np.ndarray, np.ndarray]:
    """Endpoints of telegraph paths started at (x0[i], v0[i]); chunk k uses stream.child(k)."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=int)
    if x0.shape != v0.shape:
        raise ShapeError("x0 and v0 must have the same length")
    sizes = chunk_sizes(len(x0), chunk)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else []

    def _run(item):
        index, (start, size) = item
        child = stream.child(index)
        return [telegraph_simulate(lam, x0[k], int(v0[k]), T, child) for k in range(start, start + size)]

    parts = run_parallel(_run, list(enumerate(zip(starts, sizes))), threads=threads, desc="telegraph")
    pairs = [pair for part in parts for pair in part]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs], dtype=int)


def kac_pde_solve(lam: float, u0: ProductDensity, dt: float, T: float) -> ProductDensity:
    """
    Kac system u_t = -v u_x - lam u + lam u(-v) for v in {-1, 1}.

    Each step moves mass upwind with Courant number c = h/dx (exact shift when
    c = 1), then exchanges mass between the two velocities with the exact
    two-state solution. Mass reaching a grid end reverses velocity in the end
    cell, so total mass is conserved.

    Args:
        lam: Switching rate (>= 0)
        u0: Density with states (-1, 1) on a spatial grid
        dt: Maximal step, at most the cell width
        T: Horizon

    Raises:
        StepSizeError: dt > dx
        ShapeError: state labels other than (-1, 1)
    """
    if sorted(u0.states) != [-1, 1]:
        raise ShapeError("Kac system needs states (-1, 1)", states=u0.states)
    if lam < 0:
        raise DomainError("switching rate must be nonnegative", lam=lam)
    dx = u0.grid.width
    if dt > dx * (1 + 1e-12):
        raise StepSizeError(f"CFL violated: dt={dt} > dx={dx}", dt=dt, dx=dx)
    n_steps, h = _steps(T, dt)
    c = min(1.0, h / dx) if h > 0 else 0.0
    decay = math.exp(-2.0 * lam * h)
    right = np.array(u0.state(1), dtype=float)
    left = np.array(u0.state(-1), dtype=float)
    total = right.sum() + left.sum()
    for _ in progress(range(n_steps), desc="kac", total=n_steps):
        out_r = c * right
        out_l = c * left
        right = right - out_r
        left = left - out_l
        right[1:] += out_r[:-1]
        left[:-1] += out_l[1:]
        left[-1] += out_r[-1]
        right[0] += out_l[0]
        mean = 0.5 * (right + left)
        half = 0.5 * (right - left) * decay
        right, left = mean + half, mean - half
        drift = abs(right.sum() + left.sum() - total)
        if drift > 1e-12 * max(1.0, total):
            logger.warning(f"Kac step lost mass {drift:.3e}")
    masses = np.zeros_like(u0.masses)
    masses[:, u0.states.index(1)] = right
    masses[:, u0.states.index(-1)] = left
    return ProductDensity(u0.grid, masses, states=u0.states)


def _vesicle_cycle(
        L: float,
        target: Tuple[float, float],
        kappa: float,
        rates: np.ndarray,
        stream: RandomStream,
) -> Tuple[bool, float]:
    """One cycle from (0, +1); returns (captured, duration)."""
    x, state, t = 0.0, 2, 0.0
    exits = rates.sum(axis=1)
    while True:
        velocity = VESICLE_STATES[state]
        if velocity == 0:
            inside = target[0] <= x <= target[1]
            if inside and math.isinf(kappa):
                return True, t
            capture = kappa if inside else 0.0
            total = exits[state] + capture
            if total <= 0:
                raise DomainError("vesicle stuck in the resting state with no exit", x=x)
            t += float(sample_exponential(stream, total))
            if stream.generator.random() * total < capture:
                return True, t
            state = int(sample_categorical(stream, rates[state]))
            continue
        to_wall = (L - x) if velocity > 0 else x
        switch = float(sample_exponential(stream, exits[state])) if exits[state] > 0 else math.inf
        if switch >= to_wall:
            t += to_wall
            if velocity > 0:
                return False, t
            x, state = 0.0, 2
            continue
        t += switch
        x += velocity * switch
        state = int(sample_categorical(stream, rates[state]))


def vesicle_preset(
        L: float,
        x0_target: float,
        U: Tuple[float, float],
        kappa: float,
        q_rates: Union[np.ndarray, Sequence[Sequence[float]]],
        stream: RandomStream,
        n_runs: int,
        threads: int = 1,
        chunk: int = DEFAULT_ENSEMBLE_CHUNK,
) -> VesicleReport:
    """
    Capture-vs-escape statistics of the three-state vesicle model on [0, L].

    The particle moves with velocity i in state i of (-1, 0, 1), switches with
    rates q_rates (rows and columns in that order), is reflected from (0, -1)
    to (0, 1), restarts when it reaches L, and in state 0 inside U is captured
    with intensity kappa (kappa = inf captures at once).

    Raises:
        DomainError: target outside (0, L) or U not around the target
    """
    if not (0 < x0_target < L):
        raise DomainError("target must lie in (0, L)", target=x0_target, L=L)
    if not (U[0] <= x0_target <= U[1]):
        raise DomainError("capture region must contain the target", U=U, target=x0_target)
    if kappa < 0:
        raise DomainError("capture intensity must be nonnegative", kappa=kappa)
    rates = np.array(q_rates, dtype=float)
    if rates.shape != (3, 3) or np.any(rates < 0):
        raise ShapeError("q_rates must be a nonnegative 3x3 matrix over states (-1, 0, 1)")
    np.fill_diagonal(rates, 0.0)
    sizes = chunk_sizes(n_runs, chunk)

    def _run(item):
        index, size = item
        child = stream.child(index)
        return [_vesicle_cycle(L, U, kappa, rates, child) for _ in range(size)]

    parts = run_parallel(_run, list(enumerate(sizes)), threads=threads, desc="vesicle")
    outcomes = [o for part in parts for o in part]
    captured = np.array([o[0] for o in outcomes], dtype=float)
    durations = np.array([o[1] for o in outcomes])
    p = float(captured.mean())
    return VesicleReport(
        n_runs=n_runs,
        capture_fraction=p,
        escape_fraction=1.0 - p,
        capture_stderr=math.sqrt(p * (1 - p) / n_runs),
        mean_cycle_time=float(durations.mean()),
        std_cycle_time=float(durations.std(ddof=1)) if n_runs > 1 else 0.0,
    )
