"""
Dynamic string-averaging projections (DSAP).

Each iteration picks an amalgamator (Ω_k, w_k) from a scheduler and sets
x^{k+1} = P_{Ω_k,w_k}(x^k), optionally displaced by a seeded perturbation of
norm γ_{k+1}. Runs stop once the proximity max_i d(x^k, C_i) drops to eps or
the iteration budget is spent.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from models.convex_sets import as_vector
from models.exceptions import (
    InvalidParameterError,
    NonFiniteIterateError,
    PreconditionError,
    SchedulerError,
)
from models.strings_weights import (
    Amalgamator,
    MStarParams,
    amalgamator_violations,
    apply_amalgamator,
    is_m_fit,
    sequential_amalgamator,
    simultaneous_amalgamator,
)

logger = logging.getLogger(__name__)

STEP_COLUMNS = ['alpha', 'phi', 'snorm', 'zero_branch']


# Schedulers

class Scheduler:
    """Source of one amalgamator per iteration, validated against M*(Δ, q̄)"""

    kind = None

    def __init__(self, params):
        self.params = params

    @property
    def m(self):
        return self.params.m

    def amalgamator(self, k):
        raise NotImplementedError

    def emit(self, k):
        """Amalgamator for iteration k; raises SchedulerError naming k if invalid"""
        a = self.amalgamator(k)
        violations = amalgamator_violations(a, self.params)
        if violations:
            raise SchedulerError(k, violations)
        return a

    def to_record(self):
        return {'type': self.kind, 'delta': self.params.delta, 'q_bar': self.params.q_bar}


class CyclicSingleton(Scheduler):
    """Ω = {(1, 2, ..., m)}: the classical cyclic projection method"""

    kind = 'cyclic'

    def __init__(self, m, params=None):
        super().__init__(params or MStarParams.default_for(m))
        self._amalgamator = sequential_amalgamator(m)

    def amalgamator(self, k):
        return self._amalgamator


class FullySimultaneous(Scheduler):
    """Ω = {(1), ..., (m)} with equal weights, optionally anchored at a bounded set"""

    kind = 'simultaneous'

    def __init__(self, m, params=None, anchor=None):
        super().__init__(params or MStarParams.default_for(m))
        if anchor is not None and not 1 <= anchor <= m:
            raise InvalidParameterError(f"anchor must lie in 1..{m} (got {anchor})")
        self.anchor = anchor
        self._amalgamator = simultaneous_amalgamator(m, anchor)

    def amalgamator(self, k):
        return self._amalgamator

    def to_record(self):
        record = super().to_record()
        if self.anchor is not None:
            record['anchor'] = self.anchor
        return record


class Blocks(Scheduler):
    """Consecutive strings (1..b), (b+1..2b), ... averaged with equal weights"""

    kind = 'blocks'

    def __init__(self, m, block_size, params=None):
        super().__init__(params or MStarParams.default_for(m))
        if not 1 <= block_size <= self.params.q_bar:
            raise InvalidParameterError(
                f"block_size must satisfy 1 <= block_size <= q_bar={self.params.q_bar}")
        self.block_size = int(block_size)
        strings = tuple(tuple(range(start, min(start + block_size, m + 1)))
                        for start in range(1, m + 1, block_size))
        self._amalgamator = Amalgamator(strings=strings, weights=(1.0 / len(strings),) * len(strings))

    def amalgamator(self, k):
        return self._amalgamator

    def to_record(self):
        record = super().to_record()
        record['block_size'] = self.block_size
        return record


class FixedPlan(Scheduler):
    """A fixed list of amalgamators used cyclically"""

    kind = 'fixed'

    def __init__(self, plan, params):
        super().__init__(params)
        self.plan = list(plan)
        if not self.plan:
            raise InvalidParameterError("a fixed plan needs at least one amalgamator")

    def amalgamator(self, k):
        return self.plan[k % len(self.plan)]

    def to_record(self):
        record = super().to_record()
        record['plan'] = [a.to_record() for a in self.plan]
        return record


class RandomDynamic(Scheduler):
    """
    Random strings and weights, drawn as a deterministic function of (seed, k).

    A random permutation of the indices is cut into strings of length <= q̄.
    With an anchor s, the other indices are cut into strings of length
    <= q̄ - 1 and s is inserted at a random position of every string, which
    keeps each string M-fit. Weights are equal ("equal") or
    Δ + (1 - |Ω|Δ)·Dirichlet(1) ("random").
    """

    kind = 'random'

    def __init__(self, m, seed, params=None, anchor=None, weights='equal'):
        super().__init__(params or MStarParams.default_for(m))
        if anchor is not None and not 1 <= anchor <= m:
            raise InvalidParameterError(f"anchor must lie in 1..{m} (got {anchor})")
        if anchor is not None and m > 1 and self.params.q_bar < 2:
            raise InvalidParameterError("an anchored random schedule needs q_bar >= 2")
        if int(seed) < 0:
            raise InvalidParameterError(f"seed must be >= 0 (got {seed})")
        if weights not in ('equal', 'random'):
            raise InvalidParameterError(f"weights must be 'equal' or 'random' (got {weights!r})")
        self.seed = int(seed)
        self.anchor = anchor
        self.weight_mode = weights

    def _sizes(self, rng, n, cap):
        count = int(rng.integers(math.ceil(n / cap), n + 1))
        sizes = [1] * count
        for _ in range(n - count):
            open_parts = [i for i, size in enumerate(sizes) if size < cap]
            sizes[int(rng.choice(open_parts))] += 1
        return sizes

    def amalgamator(self, k):
        rng = np.random.default_rng([self.seed, k])
        m = self.m
        if self.anchor is None:
            pool = [int(i) for i in rng.permutation(np.arange(1, m + 1))]
            cap = self.params.q_bar
        else:
            others = np.array([i for i in range(1, m + 1) if i != self.anchor])
            pool = [int(i) for i in rng.permutation(others)]
            cap = self.params.q_bar - 1
        if not pool:
            return Amalgamator(strings=((self.anchor,),), weights=(1.0,))

        strings = []
        start = 0
        for size in self._sizes(rng, len(pool), cap):
            string = pool[start:start + size]
            start += size
            if self.anchor is not None:
                string.insert(int(rng.integers(0, len(string) + 1)), self.anchor)
            strings.append(tuple(string))

        count = len(strings)
        delta = self.params.delta
        if self.weight_mode == 'random':
            w = delta + (1.0 - count * delta) * rng.dirichlet(np.ones(count))
        else:
            w = np.maximum(np.full(count, 1.0 / count), delta)
        w = w / w.sum()
        return Amalgamator(strings=tuple(strings), weights=tuple(w))

    def to_record(self):
        record = super().to_record()
        record.update({'seed': self.seed, 'weights': self.weight_mode})
        if self.anchor is not None:
            record['anchor'] = self.anchor
        return record


def scheduler_from_record(record, m, seed=0):
    """Build a scheduler from its problem-file record"""
    kind = record.get('type', 'cyclic')
    delta = record.get('delta')
    q_bar = record.get('q_bar')
    defaults = MStarParams.default_for(m)
    params = MStarParams(delta=defaults.delta if delta is None else delta,
                         q_bar=defaults.q_bar if q_bar is None else q_bar, m=m)
    if kind == 'cyclic':
        return CyclicSingleton(m, params)
    if kind == 'simultaneous':
        return FullySimultaneous(m, params, anchor=record.get('anchor'))
    if kind == 'blocks':
        return Blocks(m, record.get('block_size', params.q_bar), params)
    if kind == 'fixed':
        return FixedPlan([Amalgamator.from_record(a) for a in record.get('plan', [])], params)
    if kind == 'random':
        return RandomDynamic(m, record.get('seed', seed), params, anchor=record.get('anchor'),
                             weights=record.get('weights', 'equal'))
    raise InvalidParameterError(
        f"unknown scheduler type {kind!r}; expected one of "
        "['blocks', 'cyclic', 'fixed', 'random', 'simultaneous']")


# Perturbations

@dataclass(frozen=True)
class PerturbationPlan:
    """Displacements of norm exactly γ_k = gamma0 / (k+1)^decay in seeded uniform directions"""

    gamma0: float = 1.0
    decay: float = 1.0
    noise_seed: int = 0

    def __post_init__(self):
        if int(self.noise_seed) < 0:
            raise InvalidParameterError(f"noise_seed must be >= 0 (got {self.noise_seed})")
        if not 0.0 < self.gamma0 <= 1.0:
            raise InvalidParameterError(f"gamma0 must satisfy 0 < gamma0 <= 1 (got {self.gamma0})")
        if not self.decay > 0.0:
            raise InvalidParameterError(f"decay must be > 0 so that gamma_k -> 0 (got {self.decay})")

    def gamma(self, k):
        return self.gamma0 / (k + 1) ** self.decay

    def displacement(self, k, dim):
        rng = np.random.default_rng([self.noise_seed, k])
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        while norm == 0.0:
            direction = rng.standard_normal(dim)
            norm = np.linalg.norm(direction)
        return (self.gamma(k) / norm) * direction

    def to_record(self):
        return {'gamma0': self.gamma0, 'decay': self.decay}


# Traces

@dataclass
class TraceRecord:
    k: int
    x: np.ndarray
    distances: np.ndarray
    proximity: float
    elapsed_ns: int
    step: dict = field(default_factory=dict)

    @property
    def norm_x(self):
        return float(np.linalg.norm(self.x))


@dataclass
class RunTrace:
    """Per-iteration records of a run, k = 0, 1, 2, ..."""

    m: int
    records: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ''
    first_hit: Optional[int] = None

    def append(self, record):
        if self.records and record.k <= self.records[-1].k:
            raise ValueError(f"trace records must have strictly increasing k "
                             f"({record.k} after {self.records[-1].k})")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    @property
    def iterations(self):
        return self.records[-1].k if self.records else 0

    def iterates(self):
        return np.array([r.x for r in self.records])

    def proximities(self):
        return np.array([r.proximity for r in self.records])

    def to_frame(self, record_timing=True):
        """Trace table with columns k, proximity, d_1..d_m, norm_x, elapsed_ns[, alpha, phi, snorm, zero_branch]"""
        columns = {
            'k': [r.k for r in self.records],
            'proximity': [r.proximity for r in self.records],
        }
        for i in range(self.m):
            columns[f'd_{i + 1}'] = [float(r.distances[i]) for r in self.records]
        columns['norm_x'] = [r.norm_x for r in self.records]
        columns['elapsed_ns'] = [r.elapsed_ns if record_timing else 0 for r in self.records]
        if any('alpha' in r.step for r in self.records):
            for name in STEP_COLUMNS:
                columns[name] = [r.step.get(name) for r in self.records]
        return pd.DataFrame(columns)


# Engine

def proximity(problem, x):
    """max_i d(x, C_i); zero exactly on C"""
    return float(problem.distances(x).max())


def dsap_step(problem, a, x, executor=None):
    """x^{k+1} = P_{Ω,w}(x^k)"""
    return apply_amalgamator(problem, a, x, executor)


def make_record(problem, k, x, start_ns, step=None):
    distances = problem.distances(x)
    return TraceRecord(k=k, x=x, distances=distances, proximity=float(distances.max()),
                       elapsed_ns=time.perf_counter_ns() - start_ns, step=step or {})


def check_scheduler(problem, scheduler):
    if scheduler.m != problem.m:
        raise InvalidParameterError(f"scheduler is built for m={scheduler.m} sets, problem has {problem.m}")


def dsap_run(problem, scheduler, x0, max_iters, eps, perturbation=None, executor=None,
             require_m_fit=False, log_every=1000, stop_at_eps=True):
    """
    Iterate DSAP from x0 until proximity <= eps or max_iters steps are done.

    With ``stop_at_eps=False`` the whole budget is spent; ``first_hit`` still
    records the first iteration within eps and ``converged`` reflects the
    final iterate.

    With a perturbation plan the problem must carry a bounded witness set; a
    non-M-fit amalgamator is then logged once, or rejected when
    ``require_m_fit`` is set.
    """
    x = as_vector(x0, problem.dim)
    if max_iters < 0:
        raise InvalidParameterError("max_iters must be >= 0")
    if eps < 0:
        raise InvalidParameterError("eps must be >= 0")
    check_scheduler(problem, scheduler)
    if perturbation is not None and problem.bounded_index_witness is None:
        raise PreconditionError("perturbed runs need a bounded witness set C_s ⊆ B(0, M)")

    logger.info(f"DSAP run: m={problem.m}, J={problem.dim}, scheduler={scheduler.kind}, "
                f"max_iters={max_iters}, eps={eps}, perturbed={perturbation is not None}")
    start_ns = time.perf_counter_ns()
    trace = RunTrace(m=problem.m)
    trace.append(make_record(problem, 0, x, start_ns))
    warned = False

    k = 0
    while True:
        within = trace.final.proximity <= eps
        if within and trace.first_hit is None:
            trace.first_hit = k
        if within and stop_at_eps:
            trace.converged = True
            trace.stop_reason = 'converged'
            break
        if k >= max_iters:
            trace.converged = within
            trace.stop_reason = 'budget'
            break

        a = scheduler.emit(k)
        if perturbation is not None and not is_m_fit(a.strings, problem, problem.bound):
            if require_m_fit:
                raise SchedulerError(k, [f"strings are not M-fit for M={problem.bound}"])
            if not warned:
                logger.warning(f"Amalgamator at iteration {k} is not M-fit; "
                               "the boundedness guarantee does not apply")
                warned = True

        x = dsap_step(problem, a, x, executor)
        step = {}
        if perturbation is not None:
            x = x + perturbation.displacement(k + 1, problem.dim)
            step['gamma'] = perturbation.gamma(k + 1)
        k += 1
        if not np.all(np.isfinite(x)):
            trace.stop_reason = 'non-finite'
            raise NonFiniteIterateError(k, trace)
        trace.append(make_record(problem, k, x, start_ns, step))
        if log_every and k % log_every == 0:
            logger.debug(f"DSAP iteration {k}: proximity={trace.final.proximity:.3e}")

    logger.info(f"DSAP stopped ({trace.stop_reason}) at iteration {k}, "
                f"proximity={trace.final.proximity:.3e}")
    return trace
