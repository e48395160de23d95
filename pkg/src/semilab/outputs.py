"""
Semilab - Output Data Models Module

Pydantic models for the structured results returned by the solver modules and
for the run bookkeeping written by the CLI. Array-valued fields hold numpy
arrays; `report()` gives the JSON-ready view emitted by the CLI.

Key Models:
- QuadratureResult: integral value with error estimate
- ConditionsReport / RankOneLimit / JordanGrowth / SpectralSplit: matrix asymptotics
- ExplosivityReport: semi-decision verdict for birth-death chains
- Classification / MalthusEstimate / GrowthReport / VesicleReport / OccupancyProfile
- AssumptionReport: cell-cycle model assumption checks
- RunConfig / RunManifest: reproducible run records
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"real": value.real.tolist(), "imag": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    if isinstance(value, BaseModel):
        return {k: _plain(v) for k, v in value.__dict__.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


class ArrayModel(BaseModel):
    """Base for frozen result models that may hold numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def report(self) -> Dict[str, Any]:
        return {name: _plain(value) for name, value in self.__dict__.items()}


class QuadratureResult(ArrayModel):
    """
    Integral estimate.

    Attributes:
        value: Estimated integral
        error_estimate: Nonnegative absolute error estimate
    """
    value: float
    error_estimate: float = Field(ge=0.0)


class ConditionsReport(ArrayModel):
    """Sign condition (P) and irreducibility condition (I) of a generator matrix."""
    P: bool
    I: bool


class RankOneLimit(ArrayModel):
    """
    Dominant-eigenvalue rank-one limit of x e^{tQ}.

    Attributes:
        r: Dominant (real, simple) eigenvalue
        x_star: Positive left eigenvector, sums to 1
        y_star: Positive right eigenvector, <y*, x*> = 1
        gap: r minus the largest real part of the remaining spectrum
    """
    r: float
    x_star: np.ndarray
    y_star: np.ndarray
    gap: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Limit x* <y*, x> for a row vector x."""
        return self.x_star * float(np.dot(self.y_star, x))


class JordanGrowth(ArrayModel):
    """
    Polynomially corrected growth limit lim e^{-rt} t^{1-k} x e^{tQ}.

    Attributes:
        r: Dominant eigenvalue
        k: Largest Jordan block order for r
        limit: Exact limit vector from the spectral projection
        ladder_estimate: Richardson-stabilized value from large-t evaluations
    """
    r: float
    k: int
    limit: np.ndarray
    ladder_estimate: np.ndarray


class SpectralSplit(ArrayModel):
    """
    Finite-dimensional quasi-compact decomposition e^{tQ} = sum T_n(t) + R(t).

    Attributes:
        poles: Eigenvalues with real part >= cutoff (complex)
        residues: Spectral projections, one per pole
        nilpotents: (Q - lambda I) P for each pole
        orders: Pole orders (nilpotency index of the nilpotent part, >= 1)
        multiplicities: Algebraic multiplicities
        remainder_projection: I - sum of residues
        remainder_bound: Fitted witness (M, epsilon) with ||R(t)|| <= M e^{(cutoff - epsilon) t}
        cutoff: Real-part cutoff used
        remainder_dimension: n minus the summed multiplicities
    """
    poles: np.ndarray
    residues: List[np.ndarray]
    nilpotents: List[np.ndarray]
    orders: List[int]
    multiplicities: List[int]
    remainder_projection: np.ndarray
    remainder_generator: np.ndarray
    remainder_bound: Optional[tuple]
    cutoff: float
    remainder_dimension: int
    witness_note: str = "fitted (M, epsilon) is one witness, not a canonical constant"

    def report(self) -> Dict[str, Any]:
        return {
            "poles": _plain(self.poles),
            "orders": self.orders,
            "multiplicities": self.multiplicities,
            "remainder_bound": None if self.remainder_bound is None else list(self.remainder_bound),
            "remainder_dimension": self.remainder_dimension,
            "cutoff": self.cutoff,
            "note": self.witness_note,
        }


class ExplosivityReport(ArrayModel):
    """
    Outcome of the minimal-solution recursion for Qx = lambda x.

    Attributes:
        verdict: non_explosive, explosive or inconclusive
        steps: Recursion steps taken
        last_value: Last iterate x_i
        thresholds: Divergence/Cauchy/horizon values used
    """
    verdict: Literal["non_explosive", "explosive", "inconclusive"]
    steps: int
    last_value: float
    thresholds: Dict[str, float]


class Classification(ArrayModel):
    """
    Long-time regime of a 1-D population diffusion.

    Attributes:
        regime: grows, extinct, bistable or stationary
        sigma2: Noise variance sigma^2
        b0: Growth rate near zero, b'(0) - sigma^2/2
        b_inf: Growth rate near infinity, b'(inf) - sigma^2/2 (may be -inf)
    """
    regime: Literal["grows", "extinct", "bistable", "stationary"]
    sigma2: float
    b0: float
    b_inf: float


class MalthusEstimate(ArrayModel):
    lambda_hat: float
    r_squared: float


class GrowthReport(ArrayModel):
    """
    Growth summary of a structured-population run.

    Attributes:
        lambda_hat: Fitted Malthusian rate
        r_squared: Goodness of the log-linear fit
        window: Fit window (t0, t1)
        oracle: Independent rate (Lotka or renewal root) when one applies
        residual_final: Last rank-one residual of the normalized profiles
    """
    lambda_hat: float
    r_squared: float
    window: List[float]
    oracle: Optional[float] = None
    residual_final: Optional[float] = None


class VesicleReport(ArrayModel):
    """
    Arrival statistics of the three-state vesicle model.

    Attributes:
        n_runs: Cycles simulated
        capture_fraction: Fraction of cycles ending in capture
        escape_fraction: Fraction ending at the far end L
        capture_stderr: Binomial standard error of capture_fraction
        mean_cycle_time: Mean cycle duration
        std_cycle_time: Standard deviation of the cycle duration
    """
    n_runs: int
    capture_fraction: float
    escape_fraction: float
    capture_stderr: float
    mean_cycle_time: float
    std_cycle_time: float


class OccupancyProfile(ArrayModel):
    """
    Fraction of an ensemble inside a window over a time grid.

    Attributes:
        times: Time grid
        fractions: In-window fraction at each time
        hit: Whether any member was ever observed in the window
        liminf: Minimum fraction over the second half of the grid
    """
    times: np.ndarray
    fractions: np.ndarray
    hit: bool
    liminf: float


class AssumptionReport(ArrayModel):
    """Per-assumption checks of a cell-cycle model on its grid."""
    checks: Dict[str, bool]
    details: Dict[str, str] = Field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return all(self.checks.values())


class RunConfig(BaseModel):
    """
    Fully resolved CLI invocation.

    Attributes:
        command: Module and subcommand, e.g. ["chains", "jc-distance"]
        argv: Argument vector that reproduces the run
        parameters: Resolved parameters including defaults
        seed: Root seed
        threads: Worker threads (never affects outputs)
        out: Output directory
        format: csv or json for array outputs
    """
    command: List[str]
    argv: List[str]
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class ManifestEntry(BaseModel):
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    """
    Record written last in a run directory.

    Attributes:
        config_hash: sha256 of the canonical config JSON (threads excluded)
        version: Artifact version
        wall_time: Seconds spent in the run
        files: Output files with content digests
    """
    config_hash: str
    version: str
    wall_time: float
    files: List[ManifestEntry] = Field(default_factory=list)
