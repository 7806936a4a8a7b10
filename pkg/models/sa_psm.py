"""
String-averaging projected subgradient method (SA-PSM).

Each iteration moves x^k by a normalized subgradient step of length α_k and
then applies one string-averaging step:

    x^{k+1} = P_{Ω_k,w_k}(x^k - α_k s^k / ||s^k||)

When 0 ∈ ∂φ(x^k) the subgradient step is skipped and s^k = 0.
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.convex_sets import DEFAULT_MEMBERSHIP_TOL, as_vector
from models.dsap import RunTrace, check_scheduler, dsap_run, make_record
from models.exceptions import InvalidParameterError, NonFiniteIterateError, PreconditionError
from models.objectives import DEFAULT_ZERO_TOL
from models.strings_weights import apply_amalgamator, is_m_fit

logger = logging.getLogger(__name__)

DESCENT_SLACK_TOL = 1e-9


# Step-size rules

class StepSizeRule:
    kind = None

    def alpha(self, k):
        raise NotImplementedError

    def sequence(self, n):
        return [self.alpha(k) for k in range(n)]

    def to_record(self):
        raise NotImplementedError


class Harmonic(StepSizeRule):
    """α_k = min(1, a/(k+1))"""

    kind = 'harmonic'

    def __init__(self, a=1.0):
        if not a > 0:
            raise InvalidParameterError(f"harmonic rule needs a > 0 (got {a})")
        self.a = float(a)

    def alpha(self, k):
        return min(1.0, self.a / (k + 1))

    def to_record(self):
        return {'type': self.kind, 'a': self.a}


class PowerLaw(StepSizeRule):
    """α_k = min(1, a/(k+1)^p) with 0 < p <= 1"""

    kind = 'power'

    def __init__(self, a, p):
        if not a > 0:
            raise InvalidParameterError(f"power-law rule needs a > 0 (got {a})")
        if not 0 < p <= 1:
            raise InvalidParameterError(f"power-law rule needs 0 < p <= 1 (got {p})")
        self.a = float(a)
        self.p = float(p)

    def alpha(self, k):
        return min(1.0, self.a / (k + 1) ** self.p)

    def to_record(self):
        return {'type': self.kind, 'a': self.a, 'p': self.p}


class Explicit(StepSizeRule):
    """Caller-supplied step sizes, each in (0, 1]"""

    kind = 'explicit'

    def __init__(self, values):
        values = [float(v) for v in values]
        if not values:
            raise InvalidParameterError("explicit rule needs at least one step size")
        bad = [v for v in values if not 0 < v <= 1]
        if bad:
            raise InvalidParameterError(f"explicit step sizes must lie in (0, 1] (got {bad[:3]})")
        self.values = values
        logger.warning("Explicit step sizes: alpha_k -> 0 and sum alpha_k = inf "
                       "are the caller's responsibility")

    def alpha(self, k):
        if k >= len(self.values):
            raise InvalidParameterError(f"explicit rule has {len(self.values)} step sizes, "
                                        f"iteration {k} requested")
        return self.values[k]

    def to_record(self):
        return {'type': self.kind, 'values': list(self.values)}


def step_rule_from_record(record):
    kind = record.get('type', 'harmonic')
    if kind == 'harmonic':
        return Harmonic(record.get('a', 1.0))
    if kind == 'power':
        return PowerLaw(record.get('a', 1.0), record.get('p', 0.5))
    if kind == 'explicit':
        return Explicit(record.get('values', []))
    raise InvalidParameterError(
        f"unknown step-size rule {kind!r}; expected one of ['explicit', 'harmonic', 'power']")


# Single step

@dataclass
class StepInfo:
    zero_branch: bool
    s: np.ndarray
    snorm: float
    displaced: np.ndarray
    displacement: float


def sapsm_step(problem, obj, a, x, alpha, tol=DEFAULT_ZERO_TOL, executor=None):
    """One SA-PSM step from x; returns (x_next, StepInfo)"""
    if not 0 < alpha <= 1:
        raise InvalidParameterError(f"alpha must satisfy 0 < alpha <= 1 (got {alpha})")
    x = as_vector(x, problem.dim)
    if obj.has_zero_subgradient(x, tol):
        info = StepInfo(zero_branch=True, s=np.zeros(problem.dim), snorm=0.0,
                        displaced=x, displacement=0.0)
        return apply_amalgamator(problem, a, x, executor), info

    s = obj.subgradient(x)
    snorm = float(np.linalg.norm(s))
    if snorm == 0.0:
        raise PreconditionError("zero subgradient selected in the descent branch")
    displaced = x - (alpha / snorm) * s
    info = StepInfo(zero_branch=False, s=s, snorm=snorm, displaced=displaced,
                    displacement=float(np.linalg.norm(x - displaced)))
    return apply_amalgamator(problem, a, displaced, executor), info


# Runs

@dataclass
class MinimizationResult:
    trace: RunTrace
    final: np.ndarray
    best: Optional[np.ndarray]
    best_phi: Optional[float]
    best_k: Optional[int]
    report_threshold: float
    zero_branch_count: int
    descent_count: int

    def summary(self):
        last = self.trace.final
        return {
            'iterations': last.k,
            'proximity': last.proximity,
            'phi': last.step.get('phi'),
            'best_phi': self.best_phi,
            'best_k': self.best_k,
            'zero_branch_count': self.zero_branch_count,
            'descent_count': self.descent_count,
        }


def select_best(trace, threshold):
    """Iterate with the smallest φ among those with proximity <= threshold"""
    best = None
    for record in trace.records:
        if record.proximity > threshold:
            continue
        if best is None or record.step['phi'] < best.step['phi']:
            best = record
    return best


def default_report_threshold(problem, scheduler, x0, max_iters, executor=None):
    """10 × the terminal proximity of a pure DSAP run with the same budget"""
    reference = dsap_run(problem, scheduler, x0, max_iters, eps=0.0, executor=executor, log_every=0)
    return max(10.0 * reference.final.proximity, DEFAULT_MEMBERSHIP_TOL)


def run_minimization(problem, obj, scheduler, x0, max_iters, rule, step_fn, report_threshold,
                     label, log_every=1000):
    """Shared loop for SA-PSM and the classical baseline; step_fn(k, a, x, alpha) -> (x, StepInfo)"""
    x = as_vector(x0, problem.dim)
    if max_iters < 0:
        raise InvalidParameterError("max_iters must be >= 0")
    if obj.dim != problem.dim:
        raise InvalidParameterError(f"objective dimension {obj.dim} differs from problem dimension {problem.dim}")
    if scheduler is not None:
        check_scheduler(problem, scheduler)

    logger.info(f"{label} run: m={problem.m}, J={problem.dim}, "
                f"scheduler={getattr(scheduler, 'kind', None)}, "
                f"rule={rule.kind}, max_iters={max_iters}")
    start_ns = time.perf_counter_ns()
    trace = RunTrace(m=problem.m)
    trace.append(make_record(problem, 0, x, start_ns, {'phi': obj.evaluate(x)}))
    zero_count = 0

    for k in range(max_iters):
        alpha = rule.alpha(k)
        a = scheduler.emit(k) if scheduler is not None else None
        x, info = step_fn(k, a, x, alpha)
        trace.final.step.update({
            'alpha': alpha,
            'snorm': info.snorm,
            'zero_branch': info.zero_branch,
            'displacement': info.displacement,
            'displaced': info.displaced,
        })
        zero_count += int(info.zero_branch)
        if not np.all(np.isfinite(x)):
            trace.stop_reason = 'non-finite'
            raise NonFiniteIterateError(k + 1, trace)
        trace.append(make_record(problem, k + 1, x, start_ns, {'phi': obj.evaluate(x)}))
        if log_every and (k + 1) % log_every == 0:
            logger.debug(f"{label} iteration {k + 1}: phi={trace.final.step['phi']:.6g}, "
                         f"proximity={trace.final.proximity:.3e}")

    trace.stop_reason = 'budget'
    best = select_best(trace, report_threshold)
    logger.info(f"{label} finished {max_iters} iterations: phi={trace.final.step['phi']:.6g}, "
                f"proximity={trace.final.proximity:.3e}")
    return MinimizationResult(
        trace=trace,
        final=trace.final.x,
        best=None if best is None else best.x,
        best_phi=None if best is None else best.step['phi'],
        best_k=None if best is None else best.k,
        report_threshold=report_threshold,
        zero_branch_count=zero_count,
        descent_count=max_iters - zero_count,
    )


def sapsm_run(problem, obj, scheduler, rule, x0, max_iters, tol=DEFAULT_ZERO_TOL,
              report_threshold=None, executor=None, log_every=1000):
    """Run SA-PSM for max_iters iterations; the trace holds x^0 .. x^{max_iters}"""
    if report_threshold is None:
        report_threshold = default_report_threshold(problem, scheduler, x0, max_iters, executor)

    def step_fn(k, a, x, alpha):
        return sapsm_step(problem, obj, a, x, alpha, tol, executor)

    return run_minimization(problem, obj, scheduler, x0, max_iters, rule, step_fn,
                            report_threshold, 'SA-PSM', log_every)


# Descent inequality

def descent_slack(problem, obj, xbar, x, alpha, a, Delta, Lbar, oracle=None, executor=None):
    """
    Slack of ||y - x̄||² <= ||x - x̄||² - 2α(4L̄)⁻¹Δ + α² for
    y = P_{Ω,w}(x - α v/||v||), v the selected subgradient at x.

    Raises PreconditionError unless ||x|| <= 3M+2, φ(x) > φ(x̄) + Δ,
    0 < Δ <= 1, L̄ > 1, x̄ feasible and (Ω, w) M-fit. With an oracle solution
    the solution-set form d(y,SOL)² <= d(x,SOL)² - 2α(4L̄)⁻¹Δ + α² is
    reported as well.
    """
    M = problem.bound
    if M is None:
        raise PreconditionError("the descent inequality needs a bounded witness set C_s ⊆ B(0, M)")
    x = as_vector(x, problem.dim)
    xbar = as_vector(xbar, problem.dim)
    if not alpha > 0:
        raise PreconditionError(f"alpha must be > 0 (got {alpha})")
    if not 0 < Delta <= 1:
        raise PreconditionError(f"Delta must satisfy 0 < Delta <= 1 (got {Delta})")
    if not Lbar > 1:
        raise PreconditionError(f"Lbar must be > 1 (got {Lbar})")
    if np.linalg.norm(x) > 3 * M + 2:
        raise PreconditionError(f"||x|| = {np.linalg.norm(x):.6g} exceeds 3M+2 = {3 * M + 2:.6g}")
    phi_x = obj.evaluate(x)
    phi_bar = obj.evaluate(xbar)
    if not phi_x > phi_bar + Delta:
        raise PreconditionError(f"phi(x) = {phi_x:.6g} is not above phi(xbar) + Delta = {phi_bar + Delta:.6g}")
    if float(problem.distances(xbar).max()) > 1e-8:
        raise PreconditionError("xbar is not feasible")
    if not is_m_fit(a.strings, problem, M):
        raise PreconditionError(f"amalgamator strings are not M-fit for M={M}")

    v = obj.subgradient(x)
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        raise PreconditionError("selected subgradient at x is zero")
    y = apply_amalgamator(problem, a, x - (alpha / vnorm) * v, executor)
    decrease = 2 * alpha * Delta / (4 * Lbar) - alpha ** 2

    slacks = {'point': float(np.sum((x - xbar) ** 2) - decrease - np.sum((y - xbar) ** 2))}
    if oracle is not None:
        minimizer = as_vector(oracle.minimizer, problem.dim)
        slacks['solution_set'] = float(np.sum((x - minimizer) ** 2) - decrease
                                       - np.sum((y - minimizer) ** 2))
    return slacks


def check_descent_inequality(problem, obj, xbar, x, alpha, a, Delta, Lbar, oracle=None, executor=None):
    """True when every descent-inequality slack is >= -1e-9"""
    slacks = descent_slack(problem, obj, xbar, x, alpha, a, Delta, Lbar, oracle, executor)
    return all(value >= -DESCENT_SLACK_TOL for value in slacks.values())
