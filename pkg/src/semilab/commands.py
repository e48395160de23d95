"""
Semilab - CLI Commands Module

One handler per `<module> <subcommand>` pair. Handlers receive the parsed
parameters, the root random stream and the thread count, and return the
RunOutputs to emit; they never touch the file system.

Key Features:
- Registry filled by the @command decorator with the argparse arguments
- Handlers for transfer, chains, spectral, sde, pdmp and structured
- Stream discipline: each random consumer gets its own child of the root stream
"""

import json
import logging
import math
from argparse import Namespace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from . import chains, sde, spectral, transfer
from .density import Grid1D, GridDensity, PiecewisePoly, ProductDensity, chain_grid, histogram_from_samples, l1_distance
from .emit import RunOutputs
from .errors import DomainError, ShapeError
from .numerics import RandomStream, sample_uniform
from .outputs import GrowthReport
from .pdmp import (
    additive_boost,
    immune_status_simulate,
    kac_pde_solve,
    simulate_gene,
    simulate_threshold_gene,
    telegraph_ensemble,
    vesicle_preset,
)
from .structured import (
    McKendrickModel,
    SizeDivisionModel,
    aeg_residual,
    benchmark_cellcycle,
    cellcycle_evolve,
    cellcycle_frame,
    check_assumptions,
    lotka_rate,
    malthus_estimate,
    mckendrick_evolve,
    renewal_rate,
    size_age_pushforward,
    size_division_evolve,
    stable_age_profile,
    uniform_birth_sizes,
)

logger = logging.getLogger(__name__)

Handler = Callable[[Namespace, RandomStream, int], RunOutputs]
Argument = Tuple[Tuple[str, ...], Dict[str, Any]]


class Command:
    def __init__(
            self,
            module: str,
            name: str,
            help: str,
            arguments: List[Argument],
            handler: Handler,
            aliases: Sequence[str] = (),
    ):
        self.module = module
        self.name = name
        self.help = help
        self.arguments = arguments
        self.handler = handler
        self.aliases = list(aliases)


COMMANDS: Dict[str, Dict[str, Command]] = {}


def arg(*flags: str, **kwargs: Any) -> Argument:
    return flags, kwargs


def json_value(text: str) -> Any:
    """argparse type for JSON literals such as matrices."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON literal: {text}") from exc


def command(module: str, name: str, help: str, *arguments: Argument, aliases: Sequence[str] = ()):
    def register(handler: Handler) -> Handler:
        COMMANDS.setdefault(module, {})[name] = Command(module, name, help, list(arguments), handler, aliases)
        return handler
    return register


def _random_intensity(n: int, stream: RandomStream) -> np.ndarray:
    """Irreducible intensity matrix with off-diagonal rates in [0.1, 1)."""
    if n < 1:
        raise DomainError("matrix size must be positive", n=n)
    Q = 0.1 + 0.9 * np.asarray(sample_uniform(stream, n * n)).reshape(n, n)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def _matrix(args: Namespace, stream: RandomStream) -> spectral.GeneratorMatrix:
    """Generator from --q (CSV file), else --matrix (JSON), else a random intensity matrix."""
    if args.q is not None:
        return spectral.as_generator(chains.read_matrix_csv(args.q))
    if args.matrix is not None:
        return spectral.as_generator(args.matrix)
    return spectral.as_generator(_random_intensity(args.states, stream.child(0)))


def _vector(value: Any) -> np.ndarray:
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ShapeError("expected a flat list of numbers", value=value) from exc


def _start_vector(value: Any, n: int) -> np.ndarray:
    """A state index becomes the point mass at that state; a list is taken as the distribution."""
    if isinstance(value, int) and not isinstance(value, bool):
        if not 0 <= value < n:
            raise DomainError(f"start state {value} outside 0..{n - 1}", state=value)
        start = np.zeros(n)
        start[value] = 1.0
        return start
    return _vector(value)


def _growth_report(run, window: Tuple[float, float], oracle: Optional[float]) -> GrowthReport:
    estimate = malthus_estimate(run.times, run.totals, window)
    residual = aeg_residual(run, estimate.lambda_hat)
    return GrowthReport(
        lambda_hat=estimate.lambda_hat,
        r_squared=estimate.r_squared,
        window=list(window),
        oracle=oracle,
        residual_final=float(residual[-2]) if len(residual) > 1 else 0.0,
    )


def _window(args: Namespace) -> Tuple[float, float]:
    return tuple(args.window) if args.window else (0.5 * args.T, args.T)


# transfer

@command(
    "transfer", "ulam", "Invariant density of a map by Ulam's method",
    arg("--map", choices=["tent", "logistic", "doubling"], default="tent"),
    arg("--n", type=int, default=1024),
    arg("--tol", type=float, default=1e-13),
)
def ulam_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    phi = transfer.MAP_REGISTRY[args.map]()
    U = transfer.ulam_matrix(phi, args.n)
    f = transfer.invariant_density(U, tol=args.tol)
    if args.map == "logistic":
        oracle = GridDensity.from_cdf(U.grid, transfer.logistic_invariant_cdf)
    else:
        oracle = GridDensity.uniform(U.grid)
    outputs = RunOutputs()
    outputs.add_density("density", f)
    outputs.add_report("report", {"map": args.map, "n": args.n, "l1_to_oracle": l1_distance(f, oracle)})
    return outputs


@command(
    "transfer", "tent-exact", "Exact transfer-operator iterates of 3x^2 under the tent map",
    arg("--T", type=int, default=20),
)
def tent_exact_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    f0 = PiecewisePoly([0.0, 1.0], [[0.0, 0.0, 3.0]])
    distances, lipschitz = transfer.tent_iterate_profile(f0, args.T)
    outputs = RunOutputs()
    outputs.add_profile("profile", np.arange(args.T + 1), {"distance": distances, "lipschitz": lipschitz})
    return outputs


@command(
    "transfer", "conjugacy", "Logistic invariant density by transporting the uniform density",
    arg("--n", type=int, default=1000),
)
def conjugacy_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    alpha, alpha_inverse = transfer.logistic_conjugacy()
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=args.n)
    f = transfer.conjugate_transport(alpha, GridDensity.uniform(grid), alpha_inverse, target_grid=grid)
    oracle = GridDensity.from_cdf(grid, transfer.logistic_invariant_cdf)
    outputs = RunOutputs()
    outputs.add_density("density", f)
    outputs.add_report("report", {"n": args.n, "l1_to_oracle": l1_distance(f, oracle)})
    return outputs


_START_CDFS = {
    "uniform": lambda x: np.clip(x, 0.0, 1.0),
    "quadratic": lambda x: np.clip(x, 0.0, 1.0) ** 3,
    "left-half": lambda x: np.clip(2.0 * x, 0.0, 1.0),
}


@command(
    "transfer", "exactness", "L1 distance of Ulam iterates to the invariant density",
    arg("--map", choices=["tent", "logistic", "doubling"], default="logistic"),
    arg("--f0", choices=sorted(_START_CDFS), default="uniform", help="start density (quadratic is 3x^2)"),
    arg("--steps", type=int, default=30),
    arg("--n", type=int, default=4096),
    arg("--tol", type=float, default=1e-11),
)
def exactness_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    if args.steps < 0:
        raise DomainError("steps must be nonnegative", steps=args.steps)
    U = transfer.ulam_matrix(transfer.MAP_REGISTRY[args.map](), args.n)
    f_star = transfer.invariant_density(U, tol=args.tol)
    f0 = GridDensity.from_cdf(U.grid, _START_CDFS[args.f0])
    distances = transfer.exactness_profile(U, f0, args.steps, f_star)
    outputs = RunOutputs()
    outputs.add_density("invariant", f_star)
    outputs.add_profile("profile", np.arange(args.steps + 1), distances, column="distance")
    outputs.add_report("report", {
        "map": args.map,
        "f0": args.f0,
        "n": args.n,
        "steps": args.steps,
        "final_distance": float(distances[-1]),
    })
    return outputs


# chains

@command(
    "chains", "jc-distance", "Jukes-Cantor distance from an observed mismatch fraction",
    arg("--p", type=float, required=True),
    arg("--pairwise", action="store_true"),
)
def jc_distance_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    outputs = RunOutputs()
    outputs.stdout = {"distance": chains.jc_distance(args.p, pairwise=args.pairwise)}
    outputs.add_report("distance", outputs.stdout)
    return outputs


@command(
    "chains", "erythrocyte", "Truncated erythrocyte chain: stationary law, evolution and explosivity",
    arg("--b", type=float, default=5.0),
    arg("--d", type=float, default=1.0),
    arg("--N", type=int, default=100),
    arg("--t", type=float, default=20.0),
)
def erythrocyte_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    spec = chains.BirthDeathSpec.erythrocyte(args.b, args.d, args.N)
    Q = chains.intensity_from_birth_death(spec)
    grid = chain_grid(args.N + 1)
    pi = GridDensity(grid, chains.stationary(Q))
    poisson = GridDensity(grid, chains.truncated_poisson(args.b / args.d, args.N))
    start = np.zeros(args.N + 1)
    start[0] = 1.0
    evolved = GridDensity(grid, chains.evolve(Q, args.t, start))
    verdict = chains.explosivity_check(chains.BirthDeathSpec.erythrocyte(args.b, args.d))
    outputs = RunOutputs()
    outputs.add_density("stationary", pi)
    outputs.add_density("evolved", evolved)
    outputs.add_report("report", {
        "l1_stationary_vs_poisson": l1_distance(pi, poisson),
        "l1_evolved_vs_stationary": l1_distance(evolved, pi),
        "explosivity": verdict.report(),
    })
    return outputs


@command(
    "chains", "evolve", "Distribution x0 e^{tQ} of a chain given as a CSV Q-matrix",
    arg("--q", required=True, help="CSV Q-matrix, dense, header row optional"),
    arg("--x0", type=json_value, default=0, help="start state index or JSON distribution"),
    arg("--t", type=float, required=True),
)
def evolve_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    Q = chains.validate_intensity(chains.read_matrix_csv(args.q))
    distribution = chains.evolve(Q, args.t, _start_vector(args.x0, Q.n))
    outputs = RunOutputs()
    outputs.add_density("distribution", GridDensity(chain_grid(Q.n), distribution))
    outputs.add_report("report", {"t": args.t, "states": Q.n, "distribution": distribution.tolist()})
    return outputs


@command(
    "chains", "explosive", "Explosivity semi-decision for an unbounded birth-death chain",
    arg("--preset", "--model", dest="model", choices=["erythrocyte", "pure-birth"], default="pure-birth"),
    arg("--b", type=float, default=1.0),
    arg("--d", type=float, default=1.0),
    arg("--growth", choices=["geometric", "constant"], default="geometric"),
    aliases=("explosivity",),
)
def explosivity_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    if args.model == "erythrocyte":
        spec = chains.BirthDeathSpec.erythrocyte(args.b, args.d)
    else:
        spec = chains.BirthDeathSpec.pure_birth(args.growth, args.b)
    outputs = RunOutputs()
    outputs.add_report("explosivity", chains.explosivity_check(spec))
    return outputs


# spectral

_MATRIX_ARGS = (
    arg("--q", default=None, help="CSV generator matrix, dense, header row optional"),
    arg("--matrix", type=json_value, default=None, help="JSON matrix; random when neither is given"),
    arg("--states", type=int, default=5),
)


@command(
    "spectral", "perron", "Perron rank-one limit and residual profile",
    *_MATRIX_ARGS,
    arg("--t-max", type=float, default=30.0),
)
def perron_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    Q = _matrix(args, stream)
    limit = spectral.perron_limit(Q)
    x = np.full(Q.n, 1.0 / Q.n)
    x[0] += 0.5
    x /= x.sum()
    times = np.linspace(1.0, args.t_max, 30)
    residuals = np.array([spectral.rank_one_residual(Q, t, x, limit) for t in times])
    positive = residuals > 1e-13
    slope = float(np.polyfit(times[positive], np.log(residuals[positive]), 1)[0]) if positive.sum() > 1 else math.nan
    outputs = RunOutputs()
    outputs.add_profile("residual", times, residuals)
    outputs.add_report("limit", {**limit.report(), "residual_log_slope": slope})
    return outputs


@command(
    "spectral", "jordan", "Polynomial correction of the growth for a nontrivial Jordan block",
    arg("--q", default=None, help="CSV generator matrix (overrides --matrix)"),
    arg("--matrix", type=json_value, default=[[1.0, 1.0], [0.0, 1.0]]),
    arg("--x", type=json_value, default=[1.0, 1.0]),
)
def jordan_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    outputs = RunOutputs()
    outputs.add_report("growth", spectral.jordan_growth(_matrix(args, stream), _vector(args.x)))
    return outputs


@command(
    "spectral", "split", "Pole parts and remainder of a generator around a cutoff",
    *_MATRIX_ARGS,
    arg("--cutoff", type=float, default=-1.0),
)
def split_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    Q = _matrix(args, stream)
    split = spectral.quasicompact_split(Q, cutoff=args.cutoff)
    times = np.array([0.0, 1.0, 5.0, 10.0])
    errors = [
        float(np.abs(spectral.pole_part(split, t) + spectral.remainder_part(split, t) - linalg.expm(t * Q.q)).max())
        for t in times
    ]
    outputs = RunOutputs()
    outputs.add_profile("reconstruction", times, errors, column="max_error")
    outputs.add_report("split", split.report())
    return outputs


# sde

_GROWTH_ARGS = (
    arg("--model", choices=sorted(sde.MODEL_REGISTRY), default="logistic"),
    arg("--drift-file", default=None, help="JSON piecewise-polynomial drift (overrides --model)"),
    arg("--sigma2", type=float, default=1.0),
)


def _growth_model(args: Namespace) -> sde.GrowthModel:
    if args.drift_file:
        return sde.GrowthModel.from_file(args.drift_file, args.sigma2)
    return sde.MODEL_REGISTRY[args.model](args.sigma2)


@command(
    "sde", "stationary", "Stationary Fokker-Planck density on a grid",
    *_GROWTH_ARGS,
    arg("--hi", type=float, default=5.0),
    arg("--n-cells", type=int, default=200),
)
def stationary_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    model = _growth_model(args)
    density = sde.stationary_density(model)
    outputs = RunOutputs()
    outputs.add_density("density", density.cell_masses(Grid1D(lo=0.0, hi=args.hi, n_cells=args.n_cells)))
    outputs.add_report("report", {"classification": sde.classify(model).report(), "normalizer": density.normalizer})
    return outputs


@command("sde", "classify", "Long-time regime of the diffusion", *_GROWTH_ARGS)
def classify_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    outputs = RunOutputs()
    outputs.stdout = sde.classify(_growth_model(args)).report()
    outputs.add_report("classification", outputs.stdout)
    return outputs


@command(
    "sde", "time-average", "Time-sampled Euler-Maruyama histogram against the stationary density",
    *_GROWTH_ARGS,
    arg("--x0", type=float, default=1.0),
    arg("--dt", type=float, default=1e-3),
    arg("--burn-in", type=float, default=50.0),
    arg("--T", type=float, default=2050.0),
    arg("--sample-every", type=float, default=0.1),
    arg("--paths", type=int, default=16),
    arg("--hi", type=float, default=5.0),
    arg("--n-cells", type=int, default=50),
)
def time_average_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    model = _growth_model(args)
    grid = Grid1D(lo=0.0, hi=args.hi, n_cells=args.n_cells)
    distance = sde.empirical_vs_stationary(
        model, args.x0, args.dt, args.T, args.burn_in, args.sample_every, grid, stream.child(0), n_paths=args.paths,
    )
    outputs = RunOutputs()
    outputs.add_report("report", {"l1_to_stationary": distance, "paths": args.paths})
    return outputs


@command(
    "sde", "ensemble", "Histogram of Euler-Maruyama endpoints",
    *_GROWTH_ARGS,
    arg("--x0", type=float, default=1.0),
    arg("--dt", type=float, default=1e-3),
    arg("--T", type=float, default=10.0),
    arg("--paths", type=int, default=10_000),
    arg("--hi", type=float, default=5.0),
    arg("--n-cells", type=int, default=50),
)
def ensemble_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    model = _growth_model(args)
    endpoints = sde.em_ensemble(model, args.x0, args.dt, args.T, args.paths, stream.child(0), threads=threads)
    histogram = histogram_from_samples(endpoints, Grid1D(lo=0.0, hi=args.hi, n_cells=args.n_cells))
    outputs = RunOutputs()
    outputs.add_density("endpoints", histogram)
    outputs.add_report("report", {
        "mean": float(np.mean(endpoints)),
        "std": float(np.std(endpoints, ddof=1)) if args.paths > 1 else 0.0,
        "out_of_range": histogram.out_of_range,
    })
    return outputs


@command(
    "sde", "em", "Euler-Maruyama path sampled on a time grid; endpoint histogram with --paths > 1",
    *_GROWTH_ARGS,
    arg("--x0", type=float, default=1.0),
    arg("--dt", type=float, default=1e-3),
    arg("--T", type=float, default=10.0),
    arg("--sample-every", type=float, default=0.1),
    arg("--paths", type=int, default=1),
    arg("--hi", type=float, default=5.0),
    arg("--n-cells", type=int, default=50),
)
def em_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    if args.paths < 1:
        raise DomainError("at least one path is needed", paths=args.paths)
    if args.paths > 1:
        return ensemble_command(args, stream, threads)
    model = _growth_model(args)
    times, samples = sde.em_simulate(model, args.x0, args.dt, args.T, stream.child(0), sample_every=args.sample_every)
    t = np.concatenate([[0.0], times])
    x = np.concatenate([[args.x0], samples[:, 0]])
    outputs = RunOutputs()
    outputs.add_profile("path", t, x, column="x")
    outputs.add_report("report", {
        "x_T": float(x[-1]),
        "time_average": float(np.mean(x)),
        "samples": len(x),
    })
    return outputs


# pdmp

def _gene_rates(args: Namespace) -> Dict[str, float]:
    rates = {"q01": args.q01, "q10": args.q10}
    if args.rates is not None:
        if not isinstance(args.rates, dict) or set(args.rates) - set(rates):
            raise DomainError("--rates takes a JSON object with keys q01 and q10", rates=args.rates)
        rates.update(args.rates)
    try:
        return {key: float(value) for key, value in rates.items()}
    except (TypeError, ValueError) as exc:
        raise DomainError("switching rates must be numbers", rates=rates) from exc


@command(
    "pdmp", "gene", "Gene expression path with random switching or a protein threshold",
    arg("--variant", choices=["1d", "2d", "3stage"], default="1d"),
    arg("--theta", type=float, default=None, help="activation threshold; random switching when omitted"),
    arg("--q01", type=float, default=1.0),
    arg("--q10", type=float, default=1.0),
    arg("--rates", type=json_value, default=None, help='JSON {"q01": .., "q10": ..}; overrides --q01/--q10'),
    arg("--T", type=float, default=100.0),
)
def gene_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    rates = _gene_rates(args)
    if args.theta is None:
        path = simulate_gene(args.variant, rates, stream.child(0), args.T)
    else:
        path = simulate_threshold_gene(args.variant, {}, args.theta, stream.child(0), args.T, q10=rates["q10"])
    protein = path.dimension - 1
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=10)
    early = path.restrict(0.5 * args.T, 0.75 * args.T).occupation_histogram(grid, protein, samples_per_segment=4)
    late = path.restrict(0.75 * args.T, args.T).occupation_histogram(grid, protein, samples_per_segment=4)
    outputs = RunOutputs()
    outputs.add_frame("trajectory", path.to_frame())
    outputs.add_density("protein_late", late)
    outputs.add_report("report", {
        "switches": path.n_jumps,
        "active_fraction": path.occupation_fraction(1),
        "mean_protein": path.time_average(coordinate=protein),
        "window_l1": l1_distance(early, late),
    })
    return outputs


def _kac_grids(T: float, half_width: float, dx: float, coarsen: int) -> Tuple[Grid1D, Grid1D]:
    """Fine grid reaching past every point the process can visit by T, and its coarsening."""
    if not (dx > 0 and half_width > 0 and coarsen >= 1):
        raise DomainError("dx and half-width must be positive, coarsen at least 1", dx=dx, half_width=half_width)
    block = coarsen * dx
    extent = math.ceil((T + half_width) / block - 1e-9) * block
    n_fine = int(round(2.0 * extent / dx))
    fine = Grid1D(lo=-extent, hi=extent, n_cells=n_fine)
    return fine, Grid1D(lo=-extent, hi=extent, n_cells=n_fine // coarsen)


def _kac_start(grid: Grid1D, half_width: float) -> ProductDensity:
    """Uniform on [-half_width, half_width], split evenly between the two velocities."""
    start = GridDensity.from_cdf(grid, lambda x: np.clip((x + half_width) / (2.0 * half_width), 0.0, 1.0)).masses
    return ProductDensity(grid, 0.5 * np.column_stack([start, start]), states=(-1, 1))


@command(
    "pdmp", "telegraph", "Telegraph process: Monte Carlo marginal against the Kac system",
    arg("--lam", "--lambda", dest="lam", type=float, default=1.0),
    arg("--T", type=float, default=2.0),
    arg("--paths", type=int, default=100_000),
    arg("--dx", type=float, default=0.01),
    arg("--half-width", type=float, default=0.25),
    arg("--coarsen", type=int, default=10),
)
def telegraph_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    fine, coarse = _kac_grids(args.T, args.half_width, args.dx, args.coarsen)
    hw = args.half_width
    pde = kac_pde_solve(args.lam, _kac_start(fine, hw), args.dx, args.T).marginal()
    pde_coarse = GridDensity(coarse, pde.masses.reshape(-1, args.coarsen).sum(axis=1))

    x0 = -hw + 2.0 * hw * np.asarray(sample_uniform(stream.child(0), args.paths))
    v0 = np.where(np.arange(args.paths) % 2 == 0, 1, -1)
    x_T, v_T = telegraph_ensemble(args.lam, x0, v0, args.T, stream.child(1), threads=threads)
    mc = histogram_from_samples(x_T, coarse)

    outputs = RunOutputs()
    outputs.add_density("monte_carlo", mc)
    outputs.add_density("kac", pde_coarse)
    outputs.add_report("report", {
        "l1": l1_distance(mc, pde_coarse),
        "pde_mass": pde.total,
        "velocities": sorted(int(v) for v in np.unique(v_T)),
    })
    return outputs


@command(
    "pdmp", "kac", "Upwind solution of the Kac system from a centred box",
    arg("--lam", "--lambda", dest="lam", type=float, default=1.0),
    arg("--dx", type=float, default=0.01),
    arg("--T", type=float, default=2.0),
    arg("--half-width", type=float, default=0.25),
)
def kac_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    grid, _ = _kac_grids(args.T, args.half_width, args.dx, 1)
    u = kac_pde_solve(args.lam, _kac_start(grid, args.half_width), args.dx, args.T)
    outputs = RunOutputs()
    outputs.add_density("kac", u)
    outputs.add_density("marginal", u.marginal())
    outputs.add_report("report", {"lambda": args.lam, "mass": u.total, "mass_error": abs(u.total - 1.0)})
    return outputs


@command(
    "pdmp", "vesicle", "Capture statistics of the three-state vesicle model",
    arg("--L", type=float, default=10.0),
    arg("--target", type=float, default=5.0),
    arg("--U", type=float, nargs=2, default=None, help="capture window; target +- L/20 when omitted"),
    arg("--kappa", type=float, default=1.0),
    arg("--rates", type=json_value, default=[[0, 1, 1], [1, 0, 1], [1, 1, 0]]),
    arg("--runs", type=int, default=1000),
)
def vesicle_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    U = tuple(args.U) if args.U else (args.target - 0.05 * args.L, args.target + 0.05 * args.L)
    report = vesicle_preset(args.L, args.target, U, args.kappa, args.rates, stream, args.runs, threads=threads)
    outputs = RunOutputs()
    outputs.add_report("vesicle", report)
    return outputs


@command(
    "pdmp", "immune", "Antibody level with exponential waning and infection boosts",
    arg("--mu", type=float, default=1.0),
    arg("--lam", type=float, default=2.0),
    arg("--beta", type=float, default=1.0),
    arg("--x0", type=float, default=0.0),
    arg("--T", type=float, default=1000.0),
)
def immune_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    path = immune_status_simulate(args.mu, args.lam, additive_boost(args.beta), args.x0, args.T, stream.child(0))
    outputs = RunOutputs()
    outputs.add_frame("trajectory", path.to_frame())
    outputs.add_report("report", {
        "time_average": path.time_average(),
        "stationary_mean": args.lam * args.beta / args.mu,
        "infections": path.n_jumps,
    })
    return outputs


# structured

def step_function(text: str) -> List[float]:
    """argparse type for level,lo,hi step functions."""
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3 or not parts[1] < parts[2]:
        raise ValueError(f"expected level,lo,hi with lo < hi: {text}")
    return parts


@command(
    "structured", "mckendrick", "McKendrick age model with Malthus fit and Lotka oracle",
    arg("--mu", type=float, default=0.1),
    arg("--psi", type=step_function, default=[2.0, 1.0, 2.0], help="level,lo,hi"),
    arg("--a-max", type=float, default=2.0),
    arg("--n-cells", type=int, default=400),
    arg("--T", type=float, default=40.0),
    arg("--window", type=float, nargs=2, default=None),
)
def mckendrick_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    level, lo, hi = args.psi
    model = McKendrickModel(
        mu=lambda a: args.mu,
        psi=lambda a: level if lo <= a <= hi else 0.0,
        a_max=args.a_max,
        n_cells=args.n_cells,
        breakpoints=(lo, hi),
    )
    u0 = GridDensity.uniform(model.grid)
    run = mckendrick_evolve(model, u0, model.grid.width, args.T)
    outputs = RunOutputs()
    outputs.add_profile("totals", run.times, run.totals)
    outputs.add_density("final", GridDensity(model.grid, run.final))
    outputs.add_report("growth", _growth_report(run, _window(args), lotka_rate(model)))
    return outputs


@command(
    "structured", "size-division", "Size-structured population with equal binary fission",
    arg("--g", type=float, default=1.0),
    arg("--lambda-div", type=float, default=0.5),
    arg("--x-max", type=float, default=20.0),
    arg("--n-cells", type=int, default=2000),
    arg("--T", type=float, default=5.0),
    arg("--window", type=float, nargs=2, default=None),
)
def size_division_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    model = SizeDivisionModel(lambda x: args.g, lambda x: args.lambda_div, args.x_max, args.n_cells)
    u0 = GridDensity.from_cdf(model.grid, lambda x: np.clip((x - 1.0) / 1.0, 0.0, 1.0))
    run = size_division_evolve(model, u0, model.grid.width / args.g, args.T)
    outputs = RunOutputs()
    outputs.add_profile("totals", run.times, run.totals)
    outputs.add_density("final", GridDensity(model.grid, run.final))
    outputs.add_report("growth", _growth_report(run, _window(args), args.lambda_div))
    return outputs


@command(
    "structured", "cellcycle", "Age and birth-size cell-cycle model",
    arg("--preset", choices=["benchmark"], default="benchmark"),
    arg("--T", type=float, default=60.0),
    arg("--xb-range", type=float, nargs=2, default=[0.9, 1.3]),
    arg("--window", type=float, nargs=2, default=None),
)
def cellcycle_command(args: Namespace, stream: RandomStream, threads: int) -> RunOutputs:
    model = benchmark_cellcycle()
    assumptions = check_assumptions(model)
    oracle = renewal_rate(model)
    u0 = stable_age_profile(model, uniform_birth_sizes(model, *args.xb_range), oracle)
    run = cellcycle_evolve(model, u0, model.age_grid.width, args.T)
    outputs = RunOutputs()
    outputs.add_profile("totals", run.times, {
        "total": run.totals,
        "removed": run.extra["removed"],
        "injected": run.extra["injected"],
    })
    outputs.add_frame("u", cellcycle_frame(run.final, model))
    outputs.add_density("size", size_age_pushforward(run.final, model))
    outputs.add_report("growth", _growth_report(run, _window(args), oracle))
    outputs.add_report("assumptions", assumptions)
    return outputs
