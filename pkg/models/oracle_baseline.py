"""
Reference computations that the string-averaging engines are checked against.

- ``project_intersection``: Dykstra's cyclic projection scheme, which converges
  to the metric projection P_C onto the whole intersection.
- ``classical_psm``: the projected subgradient method with that P_C.
- ``brute_force_minimize``: grid search with local refinement for J <= 3,
  used to certify the solution set SOL(φ, C) of small instances.
"""

import logging
from dataclasses import dataclass

import numpy as np

from models.convex_sets import DEFAULT_MEMBERSHIP_TOL, as_vector
from models.exceptions import InvalidParameterError, OracleConvergenceError, OracleError
from models.objectives import DEFAULT_ZERO_TOL
from models.sa_psm import StepInfo, run_minimization

logger = logging.getLogger(__name__)

DEFAULT_PROJ_TOL = 1e-12
DEFAULT_MAX_SWEEPS = 100000
DEFAULT_GRID_STEP = 1e-2
DEFAULT_REFINE_ROUNDS = 3
REFINE_FACTOR = 10
REFINE_HALF_WIDTH = 2 * REFINE_FACTOR
UNIQUE_GRID_CELLS = 64


def dykstra_projection(problem, x, tol=DEFAULT_PROJ_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Dykstra's scheme over C_1..C_m; returns (point, sweeps)"""
    if not tol > 0:
        raise InvalidParameterError("tol must be > 0")
    y = as_vector(x, problem.dim)
    increments = [np.zeros(problem.dim) for _ in problem.sets]
    best, best_proximity = y, np.inf

    for sweep in range(1, max_sweeps + 1):
        previous = y
        moved = 0.0
        for i, s in enumerate(problem.sets):
            z = y + increments[i]
            y = s._project(z)
            update = z - y
            moved += float(np.sum((update - increments[i]) ** 2))
            increments[i] = update
        prox = float(problem.distances(y).max())
        if prox < best_proximity:
            best, best_proximity = y, prox
        # the corrections must settle too, or y is feasible but not P_C(x)
        if prox <= tol and np.linalg.norm(y - previous) <= tol and moved <= tol ** 2:
            return y, sweep

    raise OracleConvergenceError(best, max_sweeps, best_proximity, tol)


def project_intersection(problem, x, tol=DEFAULT_PROJ_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """High-accuracy P_C(x)"""
    y, sweeps = dykstra_projection(problem, x, tol, max_sweeps)
    logger.debug(f"Dykstra projection converged in {sweeps} sweeps")
    return y


def distance_to_intersection(problem, x, tol=DEFAULT_PROJ_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """d(x, C) through the Dykstra projector"""
    x = as_vector(x, problem.dim)
    return float(np.linalg.norm(x - project_intersection(problem, x, tol, max_sweeps)))


def regularity_ratio(problem, x, tol=DEFAULT_PROJ_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """d(x, C) / max_i d(x, C_i); 0 for points of C"""
    prox = float(problem.distances(x).max())
    if prox == 0.0:
        return 0.0
    return distance_to_intersection(problem, x, tol, max_sweeps) / prox


def classical_psm(problem, obj, rule, x0, max_iters, proj_tol=DEFAULT_PROJ_TOL,
                  max_sweeps=DEFAULT_MAX_SWEEPS, tol=DEFAULT_ZERO_TOL, report_threshold=None,
                  log_every=1000):
    """
    x^{k+1} = P_C(x^k - α_k s^k/||s^k||) with P_C from Dykstra's scheme.

    The step t_k = α_k/||s^k|| makes every displacement match SA-PSM's.
    """
    if report_threshold is None:
        report_threshold = max(10 * proj_tol, DEFAULT_MEMBERSHIP_TOL)

    def step_fn(k, a, x, alpha):
        if obj.has_zero_subgradient(x, tol):
            info = StepInfo(zero_branch=True, s=np.zeros(problem.dim), snorm=0.0,
                            displaced=x, displacement=0.0)
            return project_intersection(problem, x, proj_tol, max_sweeps), info
        s = obj.subgradient(x)
        snorm = float(np.linalg.norm(s))
        displaced = x - (alpha / snorm) * s
        info = StepInfo(zero_branch=False, s=s, snorm=snorm, displaced=displaced,
                        displacement=float(np.linalg.norm(x - displaced)))
        return project_intersection(problem, displaced, proj_tol, max_sweeps), info

    return run_minimization(problem, obj, None, x0, max_iters, rule, step_fn,
                            report_threshold, 'PSM', log_every)


# Brute-force minimization

@dataclass
class OracleSolution:
    """Certified minimizer of φ over C for a small instance"""

    minimizer: np.ndarray
    min_value: float
    method: str
    accuracy: float
    unique: bool

    def to_record(self):
        return {
            'minimizer': self.minimizer.tolist(),
            'min_value': self.min_value,
            'certificate': {'method': self.method, 'accuracy': self.accuracy, 'unique': self.unique},
        }

    @classmethod
    def from_record(cls, record):
        certificate = record['certificate']
        return cls(minimizer=as_vector(record['minimizer']), min_value=float(record['min_value']),
                   method=certificate['method'], accuracy=float(certificate['accuracy']),
                   unique=bool(certificate['unique']))


def _axis(lo, hi, step):
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _window_axis(center, lo, hi, step):
    axis = center + step * np.arange(-REFINE_HALF_WIDTH, REFINE_HALF_WIDTH + 1)
    return axis[(axis >= lo) & (axis <= hi)]


def _grid_chunks(axes):
    """Grid points in lexicographic order; three-dimensional grids come one slice at a time"""
    if len(axes) < 3:
        mesh = np.meshgrid(*axes, indexing='ij')
        yield np.column_stack([g.ravel() for g in mesh])
        return
    for first in axes[0]:
        mesh = np.meshgrid(*axes[1:], indexing='ij')
        rest = np.column_stack([g.ravel() for g in mesh])
        yield np.column_stack([np.full(len(rest), first), rest])


def _scan(problem, obj, axes, feas_tol):
    """Lowest-value feasible grid point; ties go to the lexicographically first"""
    best, best_value = None, np.inf
    for X in _grid_chunks(axes):
        feasible = problem.proximity_batch(X) <= feas_tol
        if not np.any(feasible):
            continue
        candidates = X[feasible]
        values = obj.evaluate_batch(candidates)
        i = int(np.argmin(values))
        if values[i] < best_value:
            best, best_value = candidates[i], float(values[i])
    return best, best_value


def _is_unique(problem, obj, center, value, lo, hi, step, feas_tol):
    """
    Spread of feasible grid points tied with the incumbent, on a coarse window.

    On a curved boundary the points whose value is within one fine cell of the
    minimum fill a cap of width about 2*sqrt(2*R*step*sqrt(J)), so only ties
    spreading beyond that cap (plus one coarse cell) count as a second minimizer.
    """
    J = problem.dim
    radius = 0.5 * float(np.max(hi - lo))
    coarse = max(step, radius / UNIQUE_GRID_CELLS)
    cap = 2 * np.sqrt(2 * radius * step * np.sqrt(J)) + 2 * coarse * np.sqrt(J)
    axes = [_window_axis(center[j], lo[j], hi[j], coarse) for j in range(J)]
    tie_tol = 1e-12 * max(1.0, abs(value))
    spread = 0.0
    for X in _grid_chunks(axes):
        feasible = problem.proximity_batch(X) <= feas_tol
        tied = X[feasible][obj.evaluate_batch(X[feasible]) <= value + tie_tol]
        if len(tied):
            spread = max(spread, float(np.linalg.norm(tied - center, axis=1).max()))
    return spread <= cap


def brute_force_minimize(problem, obj, bounds=None, grid_step=DEFAULT_GRID_STEP,
                         refine_rounds=DEFAULT_REFINE_ROUNDS, feas_tol=0.0):
    """
    Minimize φ over C by grid search on a box enclosing C (J <= 3).

    Each refinement round re-grids a window of ±2 old steps around the
    incumbent at a tenth of the step. The reported accuracy is the final step;
    the solution is flagged non-unique when near-tied feasible points spread
    beyond a grid cell.
    """
    J = problem.dim
    if J > 3:
        raise OracleError(f"brute-force oracle supports J <= 3 (got J={J})")
    if not grid_step > 0:
        raise InvalidParameterError("grid_step must be > 0")
    if bounds is None:
        radii = [s.enclosing_radius() for s in problem.sets]
        radii = [r for r in radii if r is not None]
        if not radii:
            raise OracleError("bounds are required when no constraint set is bounded")
        M = min(radii)
        bounds = (-M * np.ones(J), M * np.ones(J))
    lo = as_vector(bounds[0], J)
    hi = as_vector(bounds[1], J)

    step = float(grid_step)
    best, value = _scan(problem, obj, [_axis(lo[j], hi[j], step) for j in range(J)], feas_tol)
    if best is None:
        raise OracleError(f"no feasible grid point at grid step {step}; try a finer grid")
    for _ in range(refine_rounds):
        step /= REFINE_FACTOR
        axes = [_window_axis(best[j], lo[j], hi[j], step) for j in range(J)]
        candidate, candidate_value = _scan(problem, obj, axes, feas_tol)
        if candidate is not None and candidate_value <= value:
            best, value = candidate, candidate_value

    unique = _is_unique(problem, obj, best, value, lo, hi, step, feas_tol)
    logger.info(f"Oracle minimum {value:.10g} at {best.tolist()} (step {step:g}, unique={unique})")
    return OracleSolution(minimizer=best, min_value=obj.evaluate(best), method='grid',
                          accuracy=step, unique=unique)


def distance_to_solution_set(oracle, obj, problem, x, value_tol=1e-6):
    """d(x, SOL(φ, C)) = ||x - minimizer|| for a certified unique minimizer"""
    if not oracle.unique:
        raise OracleError("oracle solution is not unique; d(x, SOL) is not available")
    if abs(obj.evaluate(oracle.minimizer) - oracle.min_value) > value_tol:
        raise OracleError("oracle certificate does not match this objective")
    x = as_vector(x, problem.dim)
    return float(np.linalg.norm(x - oracle.minimizer))
