import copy
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.convex_sets import Problem, as_vector, set_from_record
from models.dsap import FixedPlan, PerturbationPlan, Scheduler, scheduler_from_record
from models.exceptions import ProblemFileError, ProjectionToolkitError
from models.objectives import Objective, objective_from_record
from models.sa_psm import Harmonic, StepSizeRule, step_rule_from_record
from models.strings_weights import Amalgamator, MStarParams, amalgamator_violations
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0
SCHEDULER_FIELDS = {'type', 'delta', 'q_bar', 'anchor', 'block_size', 'plan', 'seed', 'weights'}


@dataclass
class ProblemFile:
    """A validated problem file: the resolved configuration and the objects built from it"""

    config: dict
    problem: Problem
    scheduler: Scheduler
    objective: Optional[Objective]
    step_rule: StepSizeRule
    perturbation: Optional[PerturbationPlan]
    x0: np.ndarray
    max_iters: int
    eps: float
    seed: int


class ProblemFileProcessor:
    """Parse and validate problem files"""

    def __init__(self):
        self.required_fields = ['dimension', 'sets', 'x0', 'max_iters', 'eps']
        self.optional_fields = ['bounded_index', 'bound', 'objective', 'scheduler', 'step_size',
                                'seed', 'perturbation']
        self.algorithm_fields = {
            'dsap': [],
            'sapsm': ['objective'],
            'psm-baseline': ['objective'],
        }

    def process_file(self, path, algorithm=None, overrides=()):
        """Read, override and validate a problem file; returns a result dictionary"""
        try:
            with open(path, encoding='utf-8') as f:
                text = f.read()
            data = self.apply_overrides(self.load(text), overrides)
            problem_file = self.build(data, algorithm)
            return {
                'success': True,
                'problem_file': problem_file,
                'message': f'Problem file {path} is valid '
                           f'(m={problem_file.problem.m}, J={problem_file.problem.dim})'
            }
        except ProblemFileError as e:
            logger.error(f"Error processing problem file {path}: {e}")
            return {'error': str(e), 'errors': e.errors, 'line': e.line, 'column': e.column}
        except OSError as e:
            logger.error(f"Error reading problem file {path}: {e}")
            return {'error': str(e), 'errors': [str(e)], 'line': None, 'column': None}

    def parse(self, text, algorithm=None):
        return self.build(self.load(text), algorithm)

    def load(self, text):
        """JSON text to a dictionary; syntax errors carry line and column"""
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ProblemFileError([f"syntax error at line {e.lineno} column {e.colno}: {e.msg}"],
                                   line=e.lineno, column=e.colno)
        if not isinstance(data, dict):
            raise ProblemFileError(["problem file must be a JSON object"])
        return data

    def serialize(self, problem_file):
        """Resolved configuration as JSON; floats keep full round-trip precision"""
        return json.dumps(problem_file.config, indent=2, sort_keys=True) + '\n'

    def apply_overrides(self, data, overrides):
        """Apply dotted KEY=VALUE overrides, e.g. 'scheduler.delta=0.1' or 'sets.0.radius=2'"""
        data = copy.deepcopy(data)
        for item in overrides:
            key, sep, raw = item.partition('=')
            if not sep or not key:
                raise ProblemFileError([f"override {item!r}: expected KEY=VALUE"])
            try:
                value = json.loads(raw)
            except ValueError:
                value = raw
            parts = key.split('.')
            try:
                node = data
                for part in parts[:-1]:
                    node = node[int(part)] if isinstance(node, list) else node.setdefault(part, {})
                if isinstance(node, list):
                    node[int(parts[-1])] = value
                else:
                    node[parts[-1]] = value
            except (IndexError, ValueError, TypeError, AttributeError) as e:
                raise ProblemFileError([f"override {item!r}: cannot set {key} ({e})"])
        return data

    def build(self, data, algorithm=None):
        """Validate every field and build the run objects; all errors are reported together"""
        errors = []
        for name in self._validate_fields(data):
            errors.append(f"{name}: required field is missing")
        for name in sorted(set(data) - set(self.required_fields) - set(self.optional_fields)):
            errors.append(f"{name}: unknown field")
        if algorithm is not None:
            if algorithm not in self.algorithm_fields:
                errors.append(f"algorithm: unknown algorithm {algorithm!r}; expected one of "
                              f"{sorted(self.algorithm_fields)}")
            else:
                for name in self.algorithm_fields[algorithm]:
                    if name not in data:
                        errors.append(f"{name}: required by algorithm {algorithm}")

        dimension = self._integer(data, 'dimension', errors, minimum=1)
        seed = self._integer(data, 'seed', errors, minimum=0, default=DEFAULT_SEED)
        max_iters = self._integer(data, 'max_iters', errors, minimum=0)
        eps = self._number(data, 'eps', errors, minimum=0.0)
        problem = self._problem(data, dimension, errors)
        m = len(data['sets']) if isinstance(data.get('sets'), list) and data['sets'] else None
        scheduler, scheduler_config = self._scheduler(data, m, seed, errors)
        objective = self._objective(data, dimension, errors)
        step_rule = self._step_rule(data, errors)
        perturbation = self._perturbation(data, seed, errors)
        x0 = None
        if 'x0' in data and dimension is not None:
            try:
                x0 = as_vector(data['x0'], dimension)
            except (ProjectionToolkitError, ValueError, TypeError) as e:
                errors.append(f"x0: {e}")

        if errors:
            raise ProblemFileError(errors)

        config = {'dimension': dimension, 'seed': seed, 'max_iters': max_iters, 'eps': eps,
                  'x0': x0.tolist(), 'scheduler': scheduler_config,
                  'step_size': step_rule.to_record()}
        config.update(problem.to_record())
        if objective is not None:
            config['objective'] = objective.to_record()
        if perturbation is not None:
            config['perturbation'] = perturbation.to_record()
        return ProblemFile(config=config, problem=problem, scheduler=scheduler,
                           objective=objective, step_rule=step_rule, perturbation=perturbation,
                           x0=x0, max_iters=max_iters, eps=eps, seed=seed)

    def _validate_fields(self, data):
        """Required fields absent from the file"""
        return [name for name in self.required_fields if name not in data]

    def _integer(self, data, name, errors, minimum, default=None):
        if name not in data:
            return default
        value = data[name]
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{name}: must be an integer (got {value!r})")
            return default
        if value < minimum:
            errors.append(f"{name}: must be >= {minimum} (got {value})")
            return default
        return value

    def _number(self, data, name, errors, minimum):
        if name not in data:
            return None
        value = data[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            errors.append(f"{name}: must be a finite number (got {value!r})")
            return None
        if value < minimum:
            errors.append(f"{name}: must be >= {minimum} (got {value})")
            return None
        return float(value)

    def _problem(self, data, dimension, errors):
        records = data.get('sets')
        if records is None:
            return None
        if not isinstance(records, list) or not records:
            errors.append("sets: must be a non-empty list of set records")
            return None

        sets = []
        for i, record in enumerate(records):
            if not isinstance(record, dict):
                errors.append(f"sets[{i}]: must be an object with a 'type' field")
                continue
            try:
                s = set_from_record(record, dimension)
            except (ProjectionToolkitError, ValueError, TypeError) as e:
                errors.append(f"sets[{i}]: {e}")
                continue
            if dimension is not None and s.dim != dimension:
                errors.append(f"sets[{i}]: set dimension {s.dim} differs from dimension {dimension}")
                continue
            sets.append(s)
        if len(sets) != len(records):
            return None

        witness = data.get('bounded_index')
        bound = data.get('bound')
        if witness is not None and (isinstance(witness, bool) or not isinstance(witness, int)):
            errors.append(f"bounded_index: must be an integer (got {witness!r})")
            return None
        try:
            return Problem(sets=tuple(sets), bounded_index_witness=witness, witness_radius=bound)
        except (ProjectionToolkitError, ValueError, TypeError) as e:
            field = 'bound' if witness is None else 'bounded_index'
            errors.append(f"{field}: {e}")
            return None

    def _scheduler(self, data, m, seed, errors):
        record = data.get('scheduler', {'type': 'cyclic'})
        if not isinstance(record, dict):
            errors.append("scheduler: must be an object with a 'type' field")
            return None, None
        if m is None:
            return None, None
        before = len(errors)
        for key in sorted(set(record) - SCHEDULER_FIELDS):
            errors.append(f"scheduler.{key}: unknown field")
        for key, minimum in (('seed', 0), ('anchor', 1), ('block_size', 1)):
            self._integer(record, key, errors, minimum)
        errors[before:] = [e if e.startswith('scheduler.') else f"scheduler.{e}" for e in errors[before:]]
        if len(errors) > before:
            return None, None

        defaults = MStarParams.default_for(m)
        delta = record.get('delta', defaults.delta)
        q_bar = record.get('q_bar', defaults.q_bar)
        try:
            params = MStarParams(delta=delta, q_bar=q_bar, m=m)
        except (ProjectionToolkitError, TypeError) as e:
            errors.append(f"scheduler: {e}")
            return None, None

        kind = record.get('type', 'cyclic')
        config = dict(record)
        config.update({'type': kind, 'delta': params.delta, 'q_bar': params.q_bar})
        if kind == 'fixed':
            plan = self._plan(record.get('plan'), params, errors)
            if plan is None:
                return None, None
            config['plan'] = [a.to_record() for a in plan]
            return FixedPlan(plan, params), config

        scheduler_seed = record.get('seed')
        if scheduler_seed is None and seed is not None:
            scheduler_seed = derive_seed(seed, 'scheduler')
        try:
            scheduler = scheduler_from_record({**record, 'delta': params.delta, 'q_bar': params.q_bar},
                                              m, seed=scheduler_seed or 0)
        except (ProjectionToolkitError, TypeError, ValueError) as e:
            errors.append(f"scheduler: {e}")
            return None, None
        return scheduler, config

    def _plan(self, entries, params, errors):
        if not isinstance(entries, list) or not entries:
            errors.append("scheduler.plan: a fixed scheduler needs a non-empty list of amalgamators")
            return None
        plan = []
        for j, entry in enumerate(entries):
            try:
                a = Amalgamator.from_record(entry)
            except (ProjectionToolkitError, KeyError, TypeError) as e:
                errors.append(f"scheduler.plan[{j}]: {e}")
                continue
            violations = amalgamator_violations(a, params)
            errors.extend(f"scheduler.plan[{j}]: {v}" for v in violations)
            if not violations:
                plan.append(a)
        return plan if len(plan) == len(entries) else None

    def _objective(self, data, dimension, errors):
        record = data.get('objective')
        if record is None:
            return None
        if not isinstance(record, dict):
            errors.append("objective: must be an object with a 'type' field")
            return None
        try:
            objective = objective_from_record(record)
        except (ProjectionToolkitError, TypeError) as e:
            errors.append(f"objective: {e}")
            return None
        if dimension is not None and objective.dim != dimension:
            errors.append(f"objective: objective dimension {objective.dim} differs from "
                          f"dimension {dimension}")
            return None
        return objective

    def _step_rule(self, data, errors):
        record = data.get('step_size')
        if record is None:
            return Harmonic(1.0)
        if not isinstance(record, dict):
            errors.append("step_size: must be an object with a 'type' field")
            return None
        try:
            return step_rule_from_record(record)
        except (ProjectionToolkitError, TypeError) as e:
            errors.append(f"step_size: {e}")
            return None

    def _perturbation(self, data, seed, errors):
        record = data.get('perturbation')
        if record is None:
            return None
        if not isinstance(record, dict):
            errors.append("perturbation: must be an object with gamma0 and decay")
            return None
        if data.get('bounded_index') is None:
            errors.append("perturbation: requires bounded_index (a set inside B(0, M))")
        try:
            return PerturbationPlan(gamma0=float(record.get('gamma0', 1.0)),
                                    decay=float(record.get('decay', 1.0)),
                                    noise_seed=derive_seed(seed or 0, 'perturbation'))
        except (ProjectionToolkitError, TypeError, ValueError) as e:
            errors.append(f"perturbation: {e}")
            return None


def parse_problem_file(text, algorithm=None):
    """Validated ProblemFile from JSON text; raises ProblemFileError listing every violation"""
    return ProblemFileProcessor().parse(text, algorithm)
