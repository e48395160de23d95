"""
Semilab - Population Diffusion Module

One-dimensional population models with environmental noise
dx = b(x) dt + sigma x dw: Euler-Maruyama simulation, the closed-form
stationary Fokker-Planck density, its existence test and the long-time regime
classification.

Key Features:
- GrowthModel registry (logistic, malthus, polynomial, piecewise-polynomial file)
- Vectorized Euler-Maruyama with reflection at zero and blocked normal draws
- Stationary density with endpoint-exponent existence test and analytic tails
- Regime classification from the thresholds 2b'(0) and 2b'(inf)
- Time-average histogram compared with the stationary density
"""

import json
import logging
import math
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from ._default import DEFAULT_ENSEMBLE_CHUNK, DEFAULT_QUAD_TOL, SDE_CROSSCHECK_RANGE, SDE_QUAD_RANGE
from .density import Grid1D, GridDensity, histogram_from_samples, l1_distance
from .errors import (
    BlowUpError,
    CriticalCaseError,
    DomainError,
    PreconditionError,
    ValidationError,
)
from .numerics import RandomStream, _steps, adaptive_quad
from .outputs import Classification
from .utils import chunk_sizes, progress, run_parallel

logger = logging.getLogger(__name__)

_NORMAL_BLOCK = 1 << 16
_CRITICAL_TOL = 1e-12


class GrowthModel:
    """
    Drift b with b(0) = 0 and multiplicative noise intensity sigma.

    Args:
        b: Vectorized drift on [0, inf)
        sigma2: Noise variance sigma^2 (0 accepted as the deterministic limit)
        b_prime_0: b'(0)
        b_prime_inf: lim b(x)/x, may be -inf
        K: Declared constant with b(x) <= K x (spot-checked on a log grid)
        name: Registry label
    """

    def __init__(
            self,
            b: Callable[[np.ndarray], np.ndarray],
            sigma2: float,
            b_prime_0: float,
            b_prime_inf: float,
            K: Optional[float] = None,
            name: str = "custom",
    ):
        if not (sigma2 >= 0) or not math.isfinite(sigma2):
            raise DomainError("sigma2 must be finite and nonnegative", sigma2=sigma2)
        if b_prime_inf == math.inf:
            raise ValidationError("b'(inf) = +inf violates the linear growth bound b(x) <= K x")
        if abs(float(b(np.array([0.0]))[0])) > 1e-12:
            raise ValidationError("drift must vanish at zero", b0=float(b(np.array([0.0]))[0]))
        grid = np.geomspace(1e-6, 1e6, 241)
        ratio = np.asarray(b(grid), dtype=float) / grid
        if K is None:
            K = float(ratio.max())
        elif np.any(ratio > K * (1 + 1e-12) + 1e-12):
            raise ValidationError("drift exceeds the declared bound K x", K=K, worst=float(ratio.max()))
        self.b = b
        self.sigma2 = float(sigma2)
        self.b_prime_0 = float(b_prime_0)
        self.b_prime_inf = float(b_prime_inf)
        self.K = K
        self.name = name

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @classmethod
    def logistic(cls, sigma2: float, rate: float = 1.0, capacity: float = 1.0) -> "GrowthModel":
        return cls(lambda x: rate * x * (1.0 - x / capacity), sigma2, rate, -math.inf, K=rate, name="logistic")

    @classmethod
    def malthus(cls, sigma2: float, rate: float = 1.0) -> "GrowthModel":
        return cls(lambda x: rate * x, sigma2, rate, rate, K=rate, name="malthus")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], sigma2: float) -> "GrowthModel":
        """b(x) = sum c_k x^k with c_0 = 0; the leading coefficient fixes b'(inf)."""
        poly = Polynomial(np.asarray(coefficients, dtype=float)).trim()
        coef = poly.coef
        if abs(coef[0]) > 1e-12:
            raise ValidationError("polynomial drift needs c_0 = 0", c0=float(coef[0]))
        b_prime_0 = float(coef[1]) if len(coef) > 1 else 0.0
        if poly.degree() <= 1:
            b_prime_inf = b_prime_0
        else:
            b_prime_inf = -math.inf if coef[-1] < 0 else math.inf
        return cls(poly, sigma2, b_prime_0, b_prime_inf, name="polynomial")

    @classmethod
    def from_file(cls, path: Union[str, Path], sigma2: float) -> "GrowthModel":
        """
        Piecewise-polynomial drift from JSON
        {"breakpoints": [0, x1, ...], "pieces": [[c0, c1, ...], ...], "b_prime_inf": ...}.
        The last piece extends to infinity; coefficients are in the absolute x variable.
        """
        spec = json.loads(Path(path).read_text())
        breaks = np.asarray(spec["breakpoints"], dtype=float)
        pieces = [Polynomial(np.asarray(c, dtype=float)) for c in spec["pieces"]]
        if len(pieces) != len(breaks) or breaks[0] != 0.0 or np.any(np.diff(breaks) <= 0):
            raise ValidationError("drift file needs increasing breakpoints from 0, one piece per breakpoint")

        def drift(x):
            x = np.asarray(x, dtype=float)
            index = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, len(pieces) - 1)
            out = np.empty_like(x)
            for k, piece in enumerate(pieces):
                mask = index == k
                out[mask] = piece(x[mask])
            return out

        last = pieces[-1].trim()
        if "b_prime_inf" in spec:
            b_prime_inf = float(spec["b_prime_inf"])
        elif last.degree() <= 1:
            b_prime_inf = float(last.coef[1]) if len(last.coef) > 1 else 0.0
        else:
            b_prime_inf = -math.inf if last.coef[-1] < 0 else math.inf
        first = pieces[0]
        b_prime_0 = float(first.deriv()(0.0))
        return cls(drift, sigma2, b_prime_0, b_prime_inf, name=spec.get("name", "custom"))

    def __repr__(self) -> str:
        return f"GrowthModel({self.name}, sigma2={self.sigma2})"


MODEL_REGISTRY = {
    "logistic": GrowthModel.logistic,
    "malthus": GrowthModel.malthus,
}


def em_simulate(
        model: GrowthModel,
        x0: Union[float, Sequence[float]],
        dt: float,
        T: float,
        stream: RandomStream,
        sample_every: Optional[float] = None,
        burn_in: float = 0.0,
):
    """
    Euler-Maruyama iterates x_{k+1} = x_k + b(x_k) h + sigma x_k sqrt(h) xi_k.

    Paths given as an array of starting points advance together; iterates that
    fall to or below zero are reflected to |x|. The step is h = T / ceil(T / dt).

    Args:
        model: Drift and noise
        x0: Starting point(s) >= 0
        dt: Maximal step (> 0)
        T: Horizon
        stream: Random source, consumed in blocks of normals
        sample_every: When given, record states every this much time after burn_in
        burn_in: Time before the first recorded sample

    Returns:
        Endpoint(s) when sample_every is None, else (times, samples) with samples
        of shape (n_times, n_paths)

    Raises:
        DomainError: dt <= 0 or negative start
        BlowUpError: non-finite iterate; payload carries the time stamp
    """
    scalar = np.isscalar(x0)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if np.any(x < 0):
        raise DomainError("starting population must be nonnegative", x0=x0)
    n_steps, h = _steps(T, dt)
    sigma_sqrt_h = model.sigma * math.sqrt(h)
    stride = None
    if sample_every is not None:
        stride = max(1, int(round(sample_every / h))) if h > 0 else 1
    times, samples = [], []
    block = max(1, _NORMAL_BLOCK // x.size)
    normals = np.empty((0, x.size))
    for k in progress(range(n_steps), desc="euler-maruyama", total=n_steps, mininterval=1.0):
        row = k % block
        if row == 0:
            normals = stream.generator.standard_normal((min(block, n_steps - k), x.size))
        x = x + model.b(x) * h + sigma_sqrt_h * x * normals[row]
        if not np.all(np.isfinite(x)):
            raise BlowUpError(f"Euler-Maruyama blew up at t={(k + 1) * h:.6g}", time=(k + 1) * h)
        x = np.abs(x)
        t = (k + 1) * h
        if stride is not None and (k + 1) % stride == 0 and t >= burn_in - 1e-12:
            times.append(t)
            samples.append(x.copy())
    if stride is not None:
        return np.asarray(times), np.asarray(samples).reshape(len(times), x.size)
    return float(x[0]) if scalar else x


def em_ensemble(
        model: GrowthModel,
        x0: float,
        dt: float,
        T: float,
        n_paths: int,
        stream: RandomStream,
        threads: int = 1,
        chunk: int = DEFAULT_ENSEMBLE_CHUNK,
) -> np.ndarray:
    """
    Endpoints of n_paths independent paths from x0.

    Chunk k (fixed size `chunk`) draws from stream.child(k), so the result does
    not depend on `threads`.
    """
    sizes = chunk_sizes(n_paths, chunk)

    def _run(item: Tuple[int, int]) -> np.ndarray:
        index, size = item
        return em_simulate(model, np.full(size, float(x0)), dt, T, stream.child(index))

    parts = run_parallel(_run, list(enumerate(sizes)), threads=threads, desc="em chunks")
    return np.concatenate(parts) if parts else np.empty(0)


def _endpoint_exponents(model: GrowthModel) -> Tuple[float, float]:
    """Power-law exponents of the stationary density at 0 and at infinity."""
    s2 = model.sigma2
    p0 = 2.0 * model.b_prime_0 / s2 - 2.0
    p_inf = -math.inf if model.b_prime_inf == -math.inf else 2.0 * model.b_prime_inf / s2 - 2.0
    return p0, p_inf


def _check_critical(model: GrowthModel) -> None:
    s2 = model.sigma2
    scale = max(1.0, s2)
    for label, rate in (("b'(0)", model.b_prime_0), ("b'(inf)", model.b_prime_inf)):
        if math.isfinite(rate) and abs(s2 - 2.0 * rate) <= _CRITICAL_TOL * scale:
            raise CriticalCaseError(
                f"sigma^2 = 2 {label}: critical case, no verdict",
                sigma2=s2, threshold=2.0 * rate,
            )


class StationaryDensity:
    """
    f*(x) = (C / x^2) exp(int_1^x 2 b(s) / (sigma^2 s^2) ds).

    Attributes:
        model: The growth model
        exists: Whether f* is integrable on (0, inf)
        normalizer: C, or None when no density exists
        p0, p_inf: Endpoint power-law exponents
    """

    def __init__(self, model: GrowthModel, exists: bool, p0: float, p_inf: float, quad_tol: float):
        self.model = model
        self.exists = exists
        self.p0 = p0
        self.p_inf = p_inf
        self.quad_tol = quad_tol
        self.normalizer: Optional[float] = None
        self._table: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def _inner_segment(self, lo: float, hi: float) -> float:
        """int_lo^hi 2 b(e^u) / (sigma^2 e^u) du for lo <= hi."""
        s2 = self.model.sigma2

        def integrand(u: float) -> float:
            s = math.exp(u)
            return 2.0 * float(self.model.b(np.array([s]))[0]) / (s2 * s)

        if hi <= lo:
            return 0.0
        return adaptive_quad(integrand, lo, hi, tol=self.quad_tol).value

    def _inner_log(self, v: float) -> float:
        """int_1^{e^v} 2 b(s) / (sigma^2 s^2) ds in the variable u = ln s."""
        return self._inner_segment(0.0, v) if v >= 0 else -self._inner_segment(v, 0.0)

    def _log_unnormalized(self, x: float) -> float:
        v = math.log(x)
        return self._inner_log(v) - 2.0 * v

    def _mass_log(self, v_lo: float, v_hi: float) -> float:
        """Unnormalized mass of [e^v_lo, e^v_hi]."""
        return adaptive_quad(lambda v: math.exp(self._inner_log(v) - v), v_lo, v_hi, tol=self.quad_tol).value

    def _mass(self, a: float, b: float) -> float:
        """Unnormalized mass of [a, b] including analytic tails beyond the quadrature range."""
        x_lo, x_hi = SDE_QUAD_RANGE
        total = 0.0
        if a < x_lo:
            total += math.exp(self._log_unnormalized(x_lo)) * x_lo / (self.p0 + 1.0) * (1.0 - (max(a, 0.0) / x_lo) ** (self.p0 + 1.0))
            a = x_lo
        if b > x_hi:
            if math.isfinite(self.p_inf):
                upper = 0.0 if math.isinf(b) else (b / x_hi) ** (self.p_inf + 1.0)
                total += math.exp(self._log_unnormalized(x_hi)) * x_hi / (-self.p_inf - 1.0) * (1.0 - upper)
            b = x_hi
        if a < b:
            v_lo, v_hi = math.log(a), math.log(b)
            if v_lo < 0.0 < v_hi:
                total += self._mass_log(v_lo, 0.0) + self._mass_log(0.0, v_hi)
            else:
                total += self._mass_log(v_lo, v_hi)
        return total

    def _require(self) -> None:
        if not self.exists:
            raise PreconditionError("no stationary density for this model", model=self.model.name)

    def evaluate(self, x: Union[float, Sequence[float]]):
        """Normalized density values (0 at x <= 0)."""
        self._require()
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self.normalizer * math.exp(self._log_unnormalized(v)) if v > 0 else 0.0 for v in xs])
        return float(out[0]) if np.isscalar(x) else out

    def log_derivative(self, x: np.ndarray) -> np.ndarray:
        """(ln f*)'(x) = 2 b(x) / (sigma^2 x^2) - 2 / x."""
        x = np.asarray(x, dtype=float)
        return 2.0 * self.model.b(x) / (self.model.sigma2 * x * x) - 2.0 / x

    def flux(self, x: np.ndarray) -> np.ndarray:
        """(sigma^2 x^2 f*)'/2 - b f*, from the analytic log-derivative."""
        x = np.asarray(x, dtype=float)
        f = self.evaluate(x)
        s2 = self.model.sigma2
        return 0.5 * s2 * (2.0 * x * f + x * x * f * self.log_derivative(x)) - self.model.b(x) * f

    def cdf(self, x: float) -> float:
        self._require()
        if x <= 0:
            return 0.0
        return min(1.0, self.normalizer * self._mass(0.0, x))

    def cell_masses(self, grid: Grid1D) -> GridDensity:
        """Exact cell masses of f* on a grid (cells left of 0 get nothing)."""
        self._require()
        edges = grid.edges
        masses = [
            self.normalizer * self._mass(max(lo, 0.0), hi) if hi > 0 else 0.0
            for lo, hi in zip(edges[:-1], edges[1:])
        ]
        return GridDensity(grid, masses)

    def _inverse_table(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._table is None:
            x_lo, x_hi = SDE_QUAD_RANGE
            v = np.union1d(np.linspace(math.log(x_lo), math.log(x_hi), 8001), [0.0])
            anchor = int(np.searchsorted(v, 0.0))
            inner = np.zeros_like(v)
            for k in range(anchor + 1, len(v)):
                inner[k] = inner[k - 1] + self._inner_segment(v[k - 1], v[k])
            for k in range(anchor - 1, -1, -1):
                inner[k] = inner[k + 1] - self._inner_segment(v[k], v[k + 1])
            weight = np.exp(inner - v) * self.normalizer
            head = self.normalizer * self._mass(0.0, x_lo)
            cumulative = head + integrate.cumulative_simpson(weight, x=v, initial=0.0)
            self._table = (np.maximum.accumulate(cumulative), v)
        return self._table

    def sample(self, stream: RandomStream, size: int) -> np.ndarray:
        """Inverse-CDF draws from a tabulated distribution function on the log grid."""
        self._require()
        cumulative, v = self._inverse_table()
        u = stream.generator.random(size)
        return np.exp(np.interp(u, cumulative, v))


def stationary_density(model: GrowthModel, quad_tol: float = DEFAULT_QUAD_TOL) -> StationaryDensity:
    """
    Closed-form stationary Fokker-Planck density and its existence verdict.

    f* is integrable at 0 iff sigma^2 < 2 b'(0) and at infinity iff
    sigma^2 > 2 b'(inf). When it exists, C comes from quadrature over
    [1e-8, 1e4] in log variable with power-law tails beyond, and a second
    quadrature over [1e-6, 1e6] is compared against it.

    Raises:
        DomainError: sigma^2 = 0
        CriticalCaseError: sigma^2 equals 2 b'(0) or 2 b'(inf)
    """
    if model.sigma2 <= 0:
        raise DomainError("stationary density needs sigma2 > 0", sigma2=model.sigma2)
    _check_critical(model)
    p0, p_inf = _endpoint_exponents(model)
    exists = p0 > -1.0 and p_inf < -1.0
    density = StationaryDensity(model, exists, p0, p_inf, quad_tol)
    if not exists:
        logger.info(f"{model.name}: no stationary density (p0={p0:.4g}, p_inf={p_inf:.4g})")
        return density

    total = density._mass(0.0, math.inf)
    density.normalizer = 1.0 / total
    lo, hi = SDE_CROSSCHECK_RANGE
    direct = density._mass_log(math.log(lo), 0.0) + density._mass_log(0.0, math.log(hi))
    if abs(direct - total) > 1e-3 * total:
        logger.warning(
            f"{model.name}: quadrature cross-check on [{lo:g}, {hi:g}] differs by "
            f"{abs(direct - total) / total:.2e} (relative)"
        )
    return density


def classify(model: GrowthModel) -> Classification:
    """
    grows if sigma^2 < min(2b'(0), 2b'(inf)); extinct if sigma^2 > max(...);
    bistable if 2b'(0) < sigma^2 < 2b'(inf); stationary otherwise, which is
    exactly when the stationary density exists.

    Raises:
        CriticalCaseError: sigma^2 at a threshold
    """
    _check_critical(model)
    s2 = model.sigma2
    low, high = 2.0 * model.b_prime_0, 2.0 * model.b_prime_inf
    if s2 < min(low, high):
        regime = "grows"
    elif s2 > max(low, high):
        regime = "extinct"
    elif low < s2 < high:
        regime = "bistable"
    else:
        regime = "stationary"
    return Classification(
        regime=regime,
        sigma2=s2,
        b0=model.b_prime_0 - s2 / 2.0,
        b_inf=model.b_prime_inf - s2 / 2.0,
    )


def empirical_vs_stationary(
        model: GrowthModel,
        x0: float,
        dt: float,
        T: float,
        burn_in: float,
        sample_every: float,
        grid: Grid1D,
        stream: RandomStream,
        n_paths: int = 1,
) -> float:
    """
    L1 distance between the time-sampled histogram of n_paths independent paths
    (after burn_in) and the stationary cell masses on grid.

    All paths advance together on one stream, pooled into one histogram.

    Raises:
        PreconditionError: model is not in the stationary regime
        BlowUpError: propagated from the simulation
    """
    if classify(model).regime != "stationary":
        raise PreconditionError("empirical comparison needs the stationary regime", model=model.name)
    density = stationary_density(model)
    _, values = em_simulate(
        model, np.full(n_paths, float(x0)), dt, T, stream, sample_every=sample_every, burn_in=burn_in,
    )
    histogram = histogram_from_samples(values.ravel(), grid)
    return l1_distance(histogram, density.cell_masses(grid))
