"""
Index vectors, string operators and amalgamators.

A string t = (t_1, ..., t_q) maps x to P[t](x) = P_{t_q} ... P_{t_1}(x). An
amalgamator (Ω, w) averages the end-points of its strings with positive
weights summing to one. The class M*(Δ, q̄) bounds string lengths by q̄ and
weights from below by Δ.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from models.convex_sets import as_vector
from models.exceptions import IndexOutOfRangeError, InvalidParameterError

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
RENORMALIZE_WINDOW = 1e-9


@dataclass(frozen=True)
class IndexVector:
    """Ordered tuple of 1-based constraint indices"""

    indices: tuple

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        if not indices:
            raise InvalidParameterError("an index vector needs length >= 1")
        if min(indices) < 1:
            raise IndexOutOfRangeError(f"index vector {indices} has entries below 1")
        object.__setattr__(self, 'indices', indices)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def check_range(self, m):
        if max(self.indices) > m:
            raise IndexOutOfRangeError(f"index vector {self.indices} has entries above m={m}")


def as_index_vector(t):
    return t if isinstance(t, IndexVector) else IndexVector(tuple(t))


@dataclass(frozen=True)
class MStarParams:
    """Parameters (Δ, q̄) of the amalgamator class M*(Δ, q̄) for m sets"""

    delta: float
    q_bar: int
    m: int

    def __post_init__(self):
        if int(self.m) < 1:
            raise InvalidParameterError("m must satisfy m >= 1")
        if not 0.0 < self.delta < 1.0 / self.m:
            raise InvalidParameterError(
                f"delta must satisfy 0 < delta < 1/m (m={self.m}, got {self.delta})")
        if int(self.q_bar) < self.m:
            raise InvalidParameterError(f"q_bar must satisfy q_bar >= m (m={self.m}, got {self.q_bar})")
        object.__setattr__(self, 'q_bar', int(self.q_bar))
        object.__setattr__(self, 'm', int(self.m))

    @classmethod
    def default_for(cls, m):
        return cls(delta=1.0 / (2 * m), q_bar=m, m=m)


@dataclass(frozen=True, eq=False)
class Amalgamator:
    """
    Pair (Ω, w): strings and their positive weights.

    Weights whose sum is within 1e-9 of one are renormalized; a larger
    deviation is rejected.
    """

    strings: tuple
    weights: tuple

    def __post_init__(self):
        strings = tuple(as_index_vector(t) for t in self.strings)
        weights = np.array(self.weights, dtype=float)
        if not strings:
            raise InvalidParameterError("an amalgamator needs at least one string")
        if weights.ndim != 1 or weights.size != len(strings):
            raise InvalidParameterError(
                f"got {weights.size} weights for {len(strings)} strings")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise InvalidParameterError("weights must be strictly positive")
        total = float(np.sum(weights))
        if abs(total - 1.0) > RENORMALIZE_WINDOW:
            raise InvalidParameterError(f"weights must sum to 1 (got {total!r})")
        if total != 1.0:
            logger.warning(f"Renormalizing amalgamator weights (sum {total!r})")
            weights = weights / total
        object.__setattr__(self, 'strings', strings)
        object.__setattr__(self, 'weights', tuple(float(w) for w in weights))

    def __len__(self):
        return len(self.strings)

    def to_record(self):
        return {'strings': [list(t.indices) for t in self.strings], 'weights': list(self.weights)}

    @classmethod
    def from_record(cls, record):
        return cls(strings=tuple(tuple(t) for t in record['strings']), weights=tuple(record['weights']))


def sequential_amalgamator(m):
    """Single string (1, 2, ..., m) with weight 1: classical cyclic projections"""
    return Amalgamator(strings=(tuple(range(1, m + 1)),), weights=(1.0,))


def simultaneous_amalgamator(m, anchor=None):
    """
    One string per set with equal weights.

    With an anchor index s every string other than (s) becomes (i, s), so each
    string ends in the bounded set C_s.
    """
    if anchor is None:
        strings = tuple((i,) for i in range(1, m + 1))
    else:
        strings = tuple((i, anchor) if i != anchor else (anchor,) for i in range(1, m + 1))
    return Amalgamator(strings=strings, weights=(1.0 / m,) * m)


def apply_string(problem, t, x):
    """P[t](x): project onto C_{t_1} first and C_{t_q} last"""
    t = as_index_vector(t)
    t.check_range(problem.m)
    y = as_vector(x, problem.dim)
    for i in t:
        y = problem.sets[i - 1]._project(y)
    return y


def is_fit(strings, m):
    """True when every index 1..m occurs in some string"""
    seen = set()
    for t in strings:
        seen.update(as_index_vector(t).indices)
    return all(i in seen for i in range(1, m + 1))


def is_m_fit(strings, problem, M):
    """Fit, and every string holds an index whose set has enclosing radius <= M"""
    if not is_fit(strings, problem.m):
        return False
    for t in strings:
        radii = [problem.set_at(i).enclosing_radius() for i in as_index_vector(t)]
        if not any(r is not None and r <= M for r in radii):
            return False
    return True


def amalgamator_violations(a, params):
    """List of reasons why (Ω, w) is outside M*(Δ, q̄); empty when valid"""
    violations = []
    if not is_fit(a.strings, params.m):
        missing = sorted(set(range(1, params.m + 1)) - {i for t in a.strings for i in t})
        violations.append(f"strings are not fit: indices {missing} never appear")
    for t in a.strings:
        if max(t.indices) > params.m:
            violations.append(f"string {t.indices} has indices above m={params.m}")
        if len(t) > params.q_bar:
            violations.append(f"string {t.indices} has length {len(t)} > q_bar={params.q_bar}")
    total = sum(a.weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        violations.append(f"weights sum to {total!r}, not 1")
    for t, w in zip(a.strings, a.weights):
        if w < params.delta:
            violations.append(f"weight {w!r} of string {t.indices} is below delta={params.delta}")
    return violations


def validate_amalgamator(a, params):
    return not amalgamator_violations(a, params)


def string_endpoints(problem, a, x, executor=None):
    """End-points P[t](x) for every string, in stored order"""
    x = as_vector(x, problem.dim)
    if executor is None:
        return [apply_string(problem, t, x) for t in a.strings]
    return list(executor.map(lambda t: apply_string(problem, t, x), a.strings))


def apply_amalgamator(problem, a, x, executor=None):
    """
    P_{Ω,w}(x) = Σ w(t) P[t](x).

    End-points may come from a thread pool; the weighted sum is always
    accumulated sequentially in stored string order.
    """
    endpoints = string_endpoints(problem, a, x, executor)
    result = np.zeros(problem.dim)
    for w, endpoint in zip(a.weights, endpoints):
        result = result + w * endpoint
    return result


def parallel_executor(max_workers=None):
    """Thread pool for concurrent end-point evaluation"""
    return ThreadPoolExecutor(max_workers=max_workers)
