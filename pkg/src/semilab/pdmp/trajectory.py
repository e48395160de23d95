"""
Semilab - PDMP Trajectory Module

Event-recorded sample paths of piecewise-deterministic processes. A path is
stored as the state right after each event (start, jumps, end); positions in
between are recovered by flowing from the last event.

Key Features:
- HybridState (position, regime, time)
- Trajectory with exact state lookup, sojourn extraction and CSV frames
- Time-weighted occupation of regimes, positions and ages
- Ensemble runner with per-path child streams
- Window occupancy profile with hit indicator and empirical liminf
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .._default import DEFAULT_ENSEMBLE_CHUNK
from ..density import Grid1D, GridDensity, normalize
from ..errors import DegenerateInputError, DomainError
from ..numerics import FlowField, RandomStream
from ..outputs import ArrayModel, OccupancyProfile
from ..utils import chunk_sizes, run_parallel

logger = logging.getLogger(__name__)


class HybridState(ArrayModel):
    """
    Attributes:
        x: Position vector
        i: Regime index
        t: Current time
    """
    x: np.ndarray
    i: int = 0
    t: float = 0.0


class Trajectory:
    """
    Event-recorded PDMP path on [0, T].

    Args:
        times: Event times, starting at 0 and ending at T
        positions: State right after each event, shape (n_events, d)
        regimes: Regime right after each event
        flows: Per-regime flows (None for pure jump paths)
        ages: Age coordinate right after each event (semi-Markov paths)
        dt: RK4 step used when a flow has no closed form
    """

    def __init__(
            self,
            times: Sequence[float],
            positions: Sequence[Sequence[float]],
            regimes: Sequence[int],
            flows: Optional[Sequence[FlowField]] = None,
            ages: Optional[Sequence[float]] = None,
            dt: float = 1e-3,
    ):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float).reshape(len(self.times), -1)
        self.regimes = np.asarray(regimes, dtype=int)
        self.flows = flows
        self.ages = None if ages is None else np.asarray(ages, dtype=float)
        self.dt = dt

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_jumps(self) -> int:
        return len(self.times) - 2

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def state_at(self, t: float) -> HybridState:
        """State at time t, flowing from the preceding event."""
        if t < 0 or t > self.horizon + 1e-12:
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        n = int(np.searchsorted(self.times, t, side="right") - 1)
        n = min(n, len(self.times) - 1)
        x = self.positions[n]
        regime = int(self.regimes[n])
        elapsed = t - self.times[n]
        if self.flows is not None and elapsed > 0:
            x = self.flows[regime].flow(x, elapsed, self.dt)
        return HybridState(x=np.asarray(x, dtype=float), i=regime, t=float(t))

    def restrict(self, t0: float, t1: float) -> "Trajectory":
        """The path on [t0, t1], re-timed to start at 0."""
        if not (0 <= t0 < t1 <= self.horizon + 1e-12):
            raise DomainError(f"window [{t0}, {t1}] not inside [0, {self.horizon}]")
        start, end = self.state_at(t0), self.state_at(t1)
        inner = (self.times > t0) & (self.times < t1)
        times = np.concatenate([[t0], self.times[inner], [t1]]) - t0
        positions = [start.x, *self.positions[inner], end.x]
        regimes = [start.i, *self.regimes[inner], end.i]
        ages = None
        if self.ages is not None:
            def age_at(t: float) -> float:
                n = int(np.searchsorted(self.times, t, side="right") - 1)
                return float(self.ages[n] + t - self.times[n])
            ages = [age_at(t0), *self.ages[inner], age_at(t1)]
        return Trajectory(times, positions, regimes, flows=self.flows, ages=ages, dt=self.dt)

    def sojourns(self, regime: int) -> np.ndarray:
        """Lengths of completed stays in a regime (the final, censored stay is dropped)."""
        lengths = np.diff(self.times)
        segment_regimes = self.regimes[:-1]
        out, current = [], 0.0
        for n, (length, label) in enumerate(zip(lengths, segment_regimes)):
            if label != regime:
                current = 0.0
                continue
            current += length
            if n + 1 < len(segment_regimes) and segment_regimes[n + 1] != regime:
                out.append(current)
                current = 0.0
        return np.asarray(out)

    def holding_times(self) -> np.ndarray:
        """Inter-event times, the censored final interval excluded."""
        return np.diff(self.times)[:-1]

    def occupation_fraction(self, regime: int) -> float:
        """Fraction of [0, T] spent in a regime."""
        lengths = np.diff(self.times)
        return float(lengths[self.regimes[:-1] == regime].sum() / self.horizon)

    def occupation_histogram(self, grid: Grid1D, coordinate: int = 0, samples_per_segment: int = 16) -> GridDensity:
        """
        Time-weighted histogram of one coordinate.

        Pure jump paths are constant between events and are weighted exactly;
        flowing paths are sampled at midpoints of equal sub-intervals.
        """
        lengths = np.diff(self.times)
        if self.flows is None:
            values = self.positions[:-1, coordinate]
            weights = lengths
        else:
            values, weights = [], []
            for n, length in enumerate(lengths):
                if length <= 0:
                    continue
                h = length / samples_per_segment
                flow = self.flows[int(self.regimes[n])]
                x = self.positions[n]
                for k in range(samples_per_segment):
                    values.append(flow.flow(x, (k + 0.5) * h, self.dt)[coordinate])
                    weights.append(h)
            values, weights = np.asarray(values), np.asarray(weights)
        counts, _ = np.histogram(values, bins=grid.n_cells, range=(grid.lo, grid.hi), weights=weights)
        return normalize(counts, grid)

    def age_occupation(self, grid: Grid1D) -> GridDensity:
        """
        Time-weighted age histogram: each stay of length h contributes the
        uniform measure on ages [0, h], cut exactly at cell edges.
        """
        lengths = np.diff(self.times)
        edges = grid.edges
        covered = np.clip(lengths[:, None], edges[None, :-1], edges[None, 1:]) - edges[None, :-1]
        masses = np.clip(covered, 0.0, None).sum(axis=0)
        return normalize(masses, grid)

    def time_average(self, coordinate: int = 0, samples_per_segment: int = 16) -> float:
        """Time average of one coordinate (Simpson on each inter-event segment)."""
        total = 0.0
        lengths = np.diff(self.times)
        for n, length in enumerate(lengths):
            if length <= 0:
                continue
            x = self.positions[n]
            if self.flows is None:
                total += x[coordinate] * length
                continue
            flow = self.flows[int(self.regimes[n])]
            s = np.linspace(0.0, length, samples_per_segment + 1)
            values = np.array([flow.flow(x, v, self.dt)[coordinate] for v in s])
            weights = np.ones_like(s)
            weights[1:-1:2], weights[2:-1:2] = 4.0, 2.0
            total += float(weights @ values) * (length / samples_per_segment) / 3.0
        return total / self.horizon

    def to_frame(self) -> pd.DataFrame:
        """Event table with columns t, x0..x{d-1}, regime (and age when present)."""
        frame = pd.DataFrame({"t": self.times})
        for k in range(self.dimension):
            frame[f"x{k}"] = self.positions[:, k]
        frame["regime"] = self.regimes
        if self.ages is not None:
            frame["age"] = self.ages
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    def __repr__(self) -> str:
        return f"Trajectory(T={self.horizon}, jumps={self.n_jumps}, dim={self.dimension})"


class Window:
    """
    Box [lo, hi] in position space, optionally restricted to one regime.

    Attributes:
        lo: Lower corner
        hi: Upper corner
        regime: Required regime, or None for any
    """

    def __init__(self, lo: Sequence[float], hi: Sequence[float], regime: Optional[int] = None):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise DomainError("window needs matching corners with lo <= hi")
        self.regime = regime

    def contains(self, state: HybridState) -> bool:
        if self.regime is not None and state.i != self.regime:
            return False
        x = np.atleast_1d(state.x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


def run_ensemble(
        simulate: Callable[[RandomStream, int], object],
        n_paths: int,
        stream: RandomStream,
        threads: int = 1,
        chunk: int = DEFAULT_ENSEMBLE_CHUNK,
) -> List[object]:
    """
    Run simulate(stream.child(i), i) for i < n_paths.

    Paths are grouped in fixed chunks handed to worker threads; results come
    back in path order whatever the thread count.
    """
    sizes = chunk_sizes(n_paths, chunk)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else []

    def _run(item):
        start, size = item
        return [simulate(stream.child(i), i) for i in range(start, start + size)]

    parts = run_parallel(_run, list(zip(starts, sizes)), threads=threads, desc="paths")
    return [result for part in parts for result in part]


def occupancy_profile(
        trajectories: Sequence[Trajectory],
        window: Window,
        times: Sequence[float],
) -> OccupancyProfile:
    """
    Fraction of the ensemble inside the window at each grid time.

    Also reports whether any member was ever seen in the window and the minimum
    fraction over the second half of the grid.

    Raises:
        DegenerateInputError: empty ensemble
    """
    if len(trajectories) == 0:
        raise DegenerateInputError("occupancy profile needs a nonempty ensemble")
    times = np.asarray(times, dtype=float)
    inside = np.array([
        [window.contains(path.state_at(t)) for t in times]
        for path in trajectories
    ])
    fractions = inside.mean(axis=0)
    tail = fractions[len(fractions) // 2:]
    return OccupancyProfile(
        times=times,
        fractions=fractions,
        hit=bool(inside.any()),
        liminf=float(tail.min()) if tail.size else float(fractions.min()),
    )
