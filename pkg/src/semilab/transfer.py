"""
Semilab - Transfer Operator Module

Frobenius-Perron (transfer) operators of piecewise monotone interval maps:
pointwise action through the inverse branches, the exact polynomial engine for
the tent map, Ulam discretization with exact interval arithmetic, conjugacy
transport and the exactness (strong convergence) profile.

Key Features:
- MonotoneBranch / PiecewiseExpandingMap with tent, logistic, doubling and identity factories
- Ulam matrices as scipy sparse CSR, rows stochastic by construction
- Power iteration for the invariant density with non-convergence reporting
- Mass-exact rebinning through monotone maps (shared with the cell-cycle solver)
"""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import sparse

from ._default import BRANCH_CHECK_TOL, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL, DENSITY_TOL
from .density import Grid1D, GridDensity, PiecewisePoly, l1_distance, normalize
from .errors import BoundaryPointError, DomainError, GeometryError, NonConvergenceError, ValidationError
from .numerics import bisect_root
from .utils import progress

logger = logging.getLogger(__name__)


class MonotoneBranch:
    """
    One monotone piece of an interval map.

    Args:
        domain: (a, b) branch domain U_i
        forward: phi restricted to U_i
        inverse: psi_i, defined on the image phi(U_i)
        inverse_derivative: psi_i'
    """

    def __init__(
            self,
            domain: Tuple[float, float],
            forward: Callable[[float], float],
            inverse: Callable[[float], float],
            inverse_derivative: Callable[[float], float],
    ):
        self.domain = (float(domain[0]), float(domain[1]))
        self.forward = forward
        self.inverse = inverse
        self.inverse_derivative = inverse_derivative
        ends = (forward(self.domain[0]), forward(self.domain[1]))
        self.increasing = ends[1] > ends[0]
        self.image = (float(min(ends)), float(max(ends)))


class PiecewiseExpandingMap:
    """
    Interval map given by its monotone branches.

    Branch inverses are checked on sample points: phi(psi(y)) = y within 1e-10
    and psi'(y) != 0.

    Args:
        name: Label used in reports
        lo: Left end of the interval
        hi: Right end of the interval
        branches: Branches whose domains tile [lo, hi]
    """

    def __init__(self, name: str, lo: float, hi: float, branches: Sequence[MonotoneBranch]):
        self.name = name
        self.lo = float(lo)
        self.hi = float(hi)
        self.branches: List[MonotoneBranch] = list(branches)
        self._validate()

    def _validate(self) -> None:
        domains = sorted(b.domain for b in self.branches)
        if abs(domains[0][0] - self.lo) > BRANCH_CHECK_TOL or abs(domains[-1][1] - self.hi) > BRANCH_CHECK_TOL:
            raise ValidationError(f"{self.name}: branch domains do not cover [{self.lo}, {self.hi}]")
        for (_, b), (a, _) in zip(domains[:-1], domains[1:]):
            if abs(a - b) > BRANCH_CHECK_TOL:
                raise ValidationError(f"{self.name}: gap or overlap between branch domains at {b}")
        for k, branch in enumerate(self.branches):
            c, d = branch.image
            for y in np.linspace(c, d, 9)[1:-1]:
                x = branch.inverse(y)
                if abs(branch.forward(x) - y) > BRANCH_CHECK_TOL:
                    raise ValidationError(f"{self.name}: branch {k} inverse fails at y={y}")
                if branch.inverse_derivative(y) == 0:
                    raise ValidationError(f"{self.name}: branch {k} has zero inverse derivative at y={y}")

    def __call__(self, x: float) -> float:
        for branch in self.branches:
            a, b = branch.domain
            if a <= x <= b:
                return branch.forward(x)
        raise DomainError(f"{x} outside [{self.lo}, {self.hi}]")


def tent_map() -> PiecewiseExpandingMap:
    return PiecewiseExpandingMap("tent", 0.0, 1.0, [
        MonotoneBranch((0.0, 0.5), lambda x: 2.0 * x, lambda y: 0.5 * y, lambda y: 0.5),
        MonotoneBranch((0.5, 1.0), lambda x: 2.0 - 2.0 * x, lambda y: 1.0 - 0.5 * y, lambda y: -0.5),
    ])


def _logistic_inverse_derivative(y: float) -> float:
    root = math.sqrt(max(0.0, 1.0 - y))
    return math.inf if root == 0.0 else 0.25 / root


def logistic_map() -> PiecewiseExpandingMap:
    """x -> 4x(1-x) with inverse branches (1 -/+ sqrt(1-y))/2."""
    forward = lambda x: 4.0 * x * (1.0 - x)
    return PiecewiseExpandingMap("logistic", 0.0, 1.0, [
        MonotoneBranch(
            (0.0, 0.5), forward,
            lambda y: 0.5 * (1.0 - math.sqrt(max(0.0, 1.0 - y))),
            _logistic_inverse_derivative,
        ),
        MonotoneBranch(
            (0.5, 1.0), forward,
            lambda y: 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - y))),
            lambda y: -_logistic_inverse_derivative(y),
        ),
    ])


def doubling_map() -> PiecewiseExpandingMap:
    return PiecewiseExpandingMap("doubling", 0.0, 1.0, [
        MonotoneBranch((0.0, 0.5), lambda x: 2.0 * x, lambda y: 0.5 * y, lambda y: 0.5),
        MonotoneBranch((0.5, 1.0), lambda x: 2.0 * x - 1.0, lambda y: 0.5 * y + 0.5, lambda y: 0.5),
    ])


def identity_map(lo: float = 0.0, hi: float = 1.0) -> PiecewiseExpandingMap:
    return PiecewiseExpandingMap("identity", lo, hi, [
        MonotoneBranch((lo, hi), lambda x: x, lambda y: y, lambda y: 1.0),
    ])


MAP_REGISTRY = {
    "tent": tent_map,
    "logistic": logistic_map,
    "doubling": doubling_map,
    "identity": identity_map,
}


def logistic_conjugacy() -> Tuple[Callable[[float], float], Callable[[float], float]]:
    """alpha(x) = 1/2 - cos(pi x)/2 conjugating the tent map to the logistic map, with its inverse."""
    alpha = lambda x: 0.5 - 0.5 * math.cos(math.pi * x)
    alpha_inverse = lambda y: math.acos(min(1.0, max(-1.0, 1.0 - 2.0 * y))) / math.pi
    return alpha, alpha_inverse


def logistic_invariant_cdf(x: np.ndarray) -> np.ndarray:
    """Distribution function of [pi sqrt(x(1-x))]^{-1}."""
    return 2.0 / math.pi * np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))


def fp_apply_pointwise(phi: PiecewiseExpandingMap, f: Callable[[float], float], x: float) -> float:
    """
    Evaluate (P f)(x) = sum over branches with x in their image of f(psi_i(x)) |psi_i'(x)|.

    Points at the ends of [lo, hi] are accepted with one-sided branch
    membership.

    Raises:
        DomainError: x outside [lo, hi]
        BoundaryPointError: x on a branch-image boundary interior to [lo, hi],
            or where an inverse derivative is not finite
    """
    if not (phi.lo <= x <= phi.hi):
        raise DomainError(f"x={x} outside [{phi.lo}, {phi.hi}]")
    total = 0.0
    for branch in phi.branches:
        c, d = branch.image
        if x < c or x > d:
            continue
        on_edge = x == c or x == d
        if on_edge and phi.lo < x < phi.hi:
            raise BoundaryPointError(f"x={x} is a branch-image boundary of {phi.name}")
        slope = branch.inverse_derivative(x)
        if not math.isfinite(slope):
            raise BoundaryPointError(f"inverse derivative of {phi.name} not finite at x={x}")
        total += f(branch.inverse(x)) * abs(slope)
    return total


def _on_unit_interval(f: PiecewisePoly) -> PiecewisePoly:
    if f.lo < 0.0 or f.hi > 1.0:
        raise DomainError(f"tent engine needs support in [0, 1], got [{f.lo}, {f.hi}]")
    bp = list(f.breakpoints)
    pieces = list(f.pieces)
    if f.lo > 0.0:
        bp.insert(0, 0.0)
        pieces.insert(0, Polynomial([0.0]))
    if f.hi < 1.0:
        bp.append(1.0)
        pieces.append(Polynomial([0.0]))
    return PiecewisePoly(bp, pieces)


_TENT_FORM_ANNOUNCED = False


def _announce_tent_form() -> None:
    global _TENT_FORM_ANNOUNCED
    if not _TENT_FORM_ANNOUNCED:
        logger.warning("tent operator uses f(x/2)/2 + f(1 - x/2)/2 from the inverse branches x/2 and 1 - x/2")
        _TENT_FORM_ANNOUNCED = True


def fp_tent_exact(f: PiecewisePoly) -> PiecewisePoly:
    """
    Exact transfer operator of the tent map on polynomial pieces.

    (P f)(x) = f(x/2)/2 + f(1 - x/2)/2, assembled by polynomial composition
    on the merged breakpoint set {2b : b <= 1/2} and {2 - 2b : b >= 1/2}.

    Raises:
        DomainError: f supported outside [0, 1]
    """
    f = _on_unit_interval(f)
    _announce_tent_form()
    cuts = {0.0, 1.0}
    for b in f.breakpoints:
        if b <= 0.5:
            cuts.add(2.0 * b)
        if b >= 0.5:
            cuts.add(2.0 - 2.0 * b)
    new_bp = np.array(sorted(c for c in cuts if 0.0 <= c <= 1.0))
    left_arg = Polynomial([0.0, 0.5])
    right_arg = Polynomial([1.0, -0.5])
    pieces = []
    for a, b in zip(new_bp[:-1], new_bp[1:]):
        m = 0.5 * (a + b)
        p_left = f.pieces[int(f.piece_index(np.array([0.5 * m]))[0])]
        p_right = f.pieces[int(f.piece_index(np.array([1.0 - 0.5 * m]))[0])]
        pieces.append(0.5 * p_left(left_arg) + 0.5 * p_right(right_arg))
    return PiecewisePoly(new_bp, pieces)


def tent_iterate_profile(f0: PiecewisePoly, T: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact distances ||P^t f0 - 1||_1 and Lipschitz constants of P^t f0, t = 0..T.

    Returns:
        (distances, lipschitz_constants), each of length T + 1
    """
    distances, lipschitz = [], []
    f = _on_unit_interval(f0)
    for _ in range(T + 1):
        distances.append((f - 1.0).l1_norm())
        lipschitz.append(f.lipschitz())
        f = fp_tent_exact(f)
    return np.array(distances), np.array(lipschitz)


class UlamOperator:
    """
    Row-stochastic Ulam matrix M[i, j] = l(C_i and phi^{-1}(C_j)) / l(C_i).

    Densities are row vectors: (f M)_j = sum_i f_i M[i, j].
    """

    def __init__(self, grid: Grid1D, matrix: sparse.csr_matrix):
        self.grid = grid
        self.n = grid.n_cells
        self.matrix = matrix
        self._transposed = matrix.T.tocsr()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def apply(self, f: GridDensity) -> GridDensity:
        return GridDensity(self.grid, self._transposed @ f.masses)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _interval_cells(grid: Grid1D, edges: np.ndarray, u: float, v: float):
    w = grid.width
    i0 = max(0, int(math.floor((u - grid.lo) / w)))
    i1 = min(grid.n_cells - 1, int(math.ceil((v - grid.lo) / w)) - 1)
    for i in range(i0, max(i0, i1) + 1):
        overlap = min(v, edges[i + 1]) - max(u, edges[i])
        if overlap > 0:
            yield i, overlap


def ulam_matrix(phi: PiecewiseExpandingMap, n: int) -> UlamOperator:
    """
    Ulam discretization on n uniform cells by exact interval intersection.

    For each branch and target cell the preimage interval is obtained from the
    inverse branch at the cell edges; at the ends of the branch image the exact
    branch-domain endpoints are used, so row sums telescope to one.

    Raises:
        DomainError: n < 2
        GeometryError: an inverse branch value leaves its branch domain
        ValidationError: a row does not sum to one within 1e-12
    """
    if n < 2:
        raise DomainError("Ulam partition needs n >= 2", n=n)
    grid = Grid1D(lo=phi.lo, hi=phi.hi, n_cells=n)
    edges = grid.edges
    rows, cols, vals = [], [], []
    for k, branch in enumerate(phi.branches):
        a, b = branch.domain
        c, d = branch.image
        slack = BRANCH_CHECK_TOL * max(1.0, b - a)
        j_lo = max(0, int(math.floor((c - grid.lo) / grid.width)))
        j_hi = min(n - 1, int(math.ceil((d - grid.lo) / grid.width)) - 1)
        for j in range(j_lo, j_hi + 1):
            y0, y1 = max(edges[j], c), min(edges[j + 1], d)
            if y1 <= y0:
                continue
            ends = []
            for y, is_image_end in ((y0, y0 == c), (y1, y1 == d)):
                if is_image_end:
                    x = a if (y == c) == branch.increasing else b
                else:
                    x = branch.inverse(y)
                    if x < a - slack or x > b + slack:
                        raise GeometryError(
                            f"{phi.name}: branch {k} inverse at {y} gives {x} outside [{a}, {b}]"
                        )
                    x = min(max(x, a), b)
                ends.append(x)
            u, v = min(ends), max(ends)
            for i, overlap in _interval_cells(grid, edges, u, v):
                rows.append(i)
                cols.append(j)
                vals.append(overlap / grid.width)
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    operator = UlamOperator(grid, matrix)
    worst = float(np.max(np.abs(operator.row_sums() - 1.0)))
    if worst > DENSITY_TOL:
        raise ValidationError(f"{phi.name}: Ulam row sums off by {worst:.3e}", worst=worst)
    logger.debug(f"ulam_matrix({phi.name}, n={n}): nnz={matrix.nnz}, worst row error {worst:.2e}")
    return operator


def invariant_density(
        U: UlamOperator,
        tol: float = DEFAULT_POWER_TOL,
        max_iter: int = DEFAULT_POWER_MAX_ITER,
) -> GridDensity:
    """
    Fixed density of an Ulam matrix by power iteration from the uniform density.

    Iterates f <- normalize(f M) until ||f_{k+1} - f_k||_1 < tol.

    Raises:
        DomainError: tol <= 0
        NonConvergenceError: max_iter reached; payload carries last iterate and residual
    """
    if tol <= 0:
        raise DomainError("tol must be positive", tol=tol)
    f = GridDensity.uniform(U.grid)
    residual = math.inf
    for iteration in progress(range(max_iter), desc="power iteration"):
        g = normalize(U._transposed @ f.masses, U.grid)
        residual = l1_distance(f, g)
        f = g
        if residual < tol:
            logger.info(f"invariant density converged after {iteration + 1} iterations, residual {residual:.2e}")
            return f
    raise NonConvergenceError(
        f"power iteration did not reach tol={tol:g} in {max_iter} iterations",
        last_iterate=f.masses, residual=residual,
    )


def rebin_by_preimage(
        masses: np.ndarray,
        source_grid: Grid1D,
        preimage_edges: np.ndarray,
) -> np.ndarray:
    """
    Target cell masses of a monotone transport, mass uniform within source cells.

    Target cell j receives |F(z_{j+1}) - F(z_j)| where F is the piecewise-linear
    cumulative mass over the source edges and z are the preimages of the target
    edges (increasing or decreasing).
    """
    cumulative = np.concatenate([[0.0], np.cumsum(masses)])
    F = np.interp(preimage_edges, source_grid.edges, cumulative)
    return np.abs(np.diff(F))


def conjugate_transport(
        alpha: Callable[[float], float],
        f: GridDensity,
        alpha_inverse: Optional[Callable[[float], float]] = None,
        target_grid: Optional[Grid1D] = None,
) -> GridDensity:
    """
    Density of alpha(X) for X ~ f under a strictly monotone alpha.

    Args:
        alpha: Monotone map on the support grid of f
        f: Source density
        alpha_inverse: Inverse of alpha; found by bisection when omitted
        target_grid: Grid for the result (defaults to the image interval with
            the same number of cells)

    Raises:
        DomainError: alpha not strictly monotone on the grid
    """
    grid = f.grid
    probe = np.linspace(grid.lo, grid.hi, 4 * grid.n_cells + 1)
    values = np.array([alpha(x) for x in probe])
    steps = np.diff(values)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise DomainError("alpha is not strictly monotone on the grid")
    increasing = steps[0] > 0
    lo_img, hi_img = (values[0], values[-1]) if increasing else (values[-1], values[0])
    if target_grid is None:
        target_grid = Grid1D(lo=float(lo_img), hi=float(hi_img), n_cells=grid.n_cells)

    def invert(y: float) -> float:
        if y <= lo_img:
            return grid.lo if increasing else grid.hi
        if y >= hi_img:
            return grid.hi if increasing else grid.lo
        if alpha_inverse is not None:
            return alpha_inverse(y)
        return bisect_root(lambda x: alpha(x) - y, grid.lo, grid.hi)

    preimages = np.array([invert(y) for y in target_grid.edges])
    return GridDensity(target_grid, rebin_by_preimage(f.masses, grid, preimages))


def exactness_profile(
        U: UlamOperator,
        f0: GridDensity,
        T: int,
        f_star: Optional[GridDensity] = None,
) -> np.ndarray:
    """
    Distances d_t = ||f0 M^t - f*||_1 for t = 0..T.

    Args:
        U: Ulam operator
        f0: Starting density
        T: Number of steps
        f_star: Invariant density (computed by power iteration when omitted)
    """
    if f_star is None:
        f_star = invariant_density(U)
    distances = np.empty(T + 1)
    f = f0
    for t in range(T + 1):
        distances[t] = l1_distance(f, f_star)
        if t < T:
            f = U.apply(f)
    return distances
