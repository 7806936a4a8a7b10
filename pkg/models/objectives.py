"""
Convex objectives φ: R^J → R with deterministic subgradient selection.

Subgradients at kinks are fixed by convention so runs are reproducible: the
lowest-index maximizing piece for MaxAffine and sign(x) (with sign(0) = 0)
for OneNorm.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from models.convex_sets import as_vector
from models.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

DEFAULT_ZERO_TOL = 1e-12
PSD_FLOOR = -1e-10
LIPSCHITZ_FLOOR = 1.0 + 1e-9


@dataclass(frozen=True)
class LipschitzBound:
    """L̄ > 1 with |φ(z1) - φ(z2)| <= L̄ ||z1 - z2|| on B(0, ball_radius)"""

    value: float
    ball_radius: float


def _floored(value, radius):
    return LipschitzBound(value=max(float(value), LIPSCHITZ_FLOOR), ball_radius=float(radius))


class Objective:
    kind = None

    @property
    def dim(self):
        raise NotImplementedError

    def evaluate(self, x):
        raise NotImplementedError

    def evaluate_batch(self, X):
        """φ at every row of X"""
        raise NotImplementedError

    def subgradient(self, x):
        raise NotImplementedError

    def has_zero_subgradient(self, x, tol=DEFAULT_ZERO_TOL):
        raise NotImplementedError

    def lipschitz_on_ball(self, radius):
        raise NotImplementedError

    def to_record(self):
        raise NotImplementedError

    def _vector(self, x):
        return as_vector(x, self.dim)


def _check_tol(tol):
    if tol < 0:
        raise InvalidParameterError("tol must satisfy tol >= 0")


def _check_radius(radius):
    if not radius > 0:
        raise InvalidParameterError("radius must be > 0")


class Linear(Objective):
    """φ(x) = <c, x>"""

    kind = 'linear'

    def __init__(self, c):
        self.c = as_vector(c)

    @property
    def dim(self):
        return self.c.size

    def evaluate(self, x):
        return float(self.c @ self._vector(x))

    def evaluate_batch(self, X):
        return X @ self.c

    def subgradient(self, x):
        self._vector(x)
        return self.c.copy()

    def has_zero_subgradient(self, x, tol=DEFAULT_ZERO_TOL):
        _check_tol(tol)
        self._vector(x)
        return float(np.linalg.norm(self.c)) <= tol

    def lipschitz_on_ball(self, radius):
        _check_radius(radius)
        return _floored(np.linalg.norm(self.c), radius)

    def to_record(self):
        return {'type': self.kind, 'c': self.c.tolist()}


class Quadratic(Objective):
    """φ(x) = ½ xᵀQx + cᵀx with Q symmetric positive semidefinite"""

    kind = 'quadratic'

    def __init__(self, Q, c):
        Q = np.array(Q, dtype=float)
        c = as_vector(c)
        if Q.shape != (c.size, c.size):
            raise InvalidParameterError(f"Q must have shape ({c.size}, {c.size}), got {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise InvalidParameterError("Q must have finite entries")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise InvalidParameterError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < PSD_FLOOR:
            raise InvalidParameterError("Q must be positive semidefinite")
        self.Q = Q
        self.c = c

    @property
    def dim(self):
        return self.c.size

    def evaluate(self, x):
        x = self._vector(x)
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def evaluate_batch(self, X):
        return 0.5 * np.einsum('ij,jk,ik->i', X, self.Q, X) + X @ self.c

    def subgradient(self, x):
        x = self._vector(x)
        return self.Q @ x + self.c

    def has_zero_subgradient(self, x, tol=DEFAULT_ZERO_TOL):
        _check_tol(tol)
        return float(np.linalg.norm(self.subgradient(x))) <= tol

    def lipschitz_on_ball(self, radius):
        _check_radius(radius)
        value = np.linalg.norm(self.Q, 2) * radius + np.linalg.norm(self.c)
        return _floored(value, radius)

    def to_record(self):
        return {'type': self.kind, 'Q': self.Q.tolist(), 'c': self.c.tolist()}


class MaxAffine(Objective):
    """φ(x) = max_i (<a_i, x> + b_i)"""

    kind = 'max_affine'

    def __init__(self, pieces):
        pieces = list(pieces)
        if not pieces:
            raise InvalidParameterError("a max-affine objective needs at least one piece")
        A = np.array([as_vector(a) for a, _ in pieces])
        self.A = A
        self.b = np.array([float(b) for _, b in pieces])

    @property
    def dim(self):
        return self.A.shape[1]

    def _values(self, x):
        return self.A @ x + self.b

    def evaluate(self, x):
        return float(self._values(self._vector(x)).max())

    def evaluate_batch(self, X):
        return (X @ self.A.T + self.b).max(axis=1)

    def subgradient(self, x):
        # np.argmax returns the first maximizer
        values = self._values(self._vector(x))
        return self.A[int(np.argmax(values))].copy()

    def active_pieces(self, x, tol=DEFAULT_ZERO_TOL):
        values = self._values(self._vector(x))
        return np.nonzero(values >= values.max() - tol)[0]

    def has_zero_subgradient(self, x, tol=DEFAULT_ZERO_TOL):
        """
        0 ∈ conv{a_i : piece i active at x}, up to tol in the sup norm.

        An LP finds the convex combination with the smallest residual, which
        is then recomputed from the returned weights.
        """
        _check_tol(tol)
        active = self.active_pieces(x, tol)
        G = self.A[active]
        n = len(active)
        if n == 1:
            return float(np.abs(G[0]).max()) <= tol
        # variables (λ, t): min t s.t. -t <= Gᵀλ <= t, Σλ = 1, λ >= 0
        ones = np.ones((self.dim, 1))
        A_ub = np.vstack([np.hstack([G.T, -ones]), np.hstack([-G.T, -ones])])
        A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
        c = np.zeros(n + 1)
        c[-1] = 1.0
        result = linprog(c=c, A_ub=A_ub, b_ub=np.zeros(2 * self.dim), A_eq=A_eq, b_eq=[1.0],
                         bounds=(0, None), method='highs')
        if result.status != 0:
            return False
        weights = np.clip(result.x[:n], 0.0, None)
        weights /= weights.sum()
        return float(np.abs(G.T @ weights).max()) <= tol

    def lipschitz_on_ball(self, radius):
        _check_radius(radius)
        return _floored(np.linalg.norm(self.A, axis=1).max(), radius)

    def to_record(self):
        return {'type': self.kind, 'pieces': [{'a': a.tolist(), 'b': float(b)}
                                              for a, b in zip(self.A, self.b)]}


class OneNorm(Objective):
    """φ(x) = Σ_j w_j |x_j| with w >= 0"""

    kind = 'one_norm'

    def __init__(self, weights):
        weights = as_vector(weights)
        if np.any(weights < 0):
            raise InvalidParameterError("one-norm weights must be >= 0")
        self.weights = weights

    @property
    def dim(self):
        return self.weights.size

    def evaluate(self, x):
        return float(self.weights @ np.abs(self._vector(x)))

    def evaluate_batch(self, X):
        return np.abs(X) @ self.weights

    def subgradient(self, x):
        return self.weights * np.sign(self._vector(x))

    def has_zero_subgradient(self, x, tol=DEFAULT_ZERO_TOL):
        _check_tol(tol)
        x = self._vector(x)
        weighted = self.weights > 0
        return bool(np.all(np.abs(x[weighted]) <= tol))

    def lipschitz_on_ball(self, radius):
        _check_radius(radius)
        return _floored(self.weights.sum(), radius)

    def to_record(self):
        return {'type': self.kind, 'weights': self.weights.tolist()}


def objective_from_record(record):
    """Build an Objective from a tagged record such as {'type': 'linear', 'c': [...]}"""
    kind = record.get('type')
    try:
        if kind == 'linear':
            return Linear(record['c'])
        if kind == 'quadratic':
            return Quadratic(record['Q'], record['c'])
        if kind == 'max_affine':
            return MaxAffine([(p['a'], p['b']) for p in record['pieces']])
        if kind == 'one_norm':
            return OneNorm(record['weights'])
    except KeyError as e:
        raise InvalidParameterError(f"{kind} objective is missing field {e.args[0]!r}")
    raise InvalidParameterError(
        f"unknown objective type {kind!r}; expected one of "
        "['linear', 'max_affine', 'one_norm', 'quadratic']")


def evaluate(obj, x):
    return obj.evaluate(x)


def subgradient(obj, x):
    return obj.subgradient(x)


def has_zero_subgradient(obj, x, tol=DEFAULT_ZERO_TOL):
    return obj.has_zero_subgradient(x, tol)


def lipschitz_on_ball(obj, radius):
    return obj.lipschitz_on_ball(radius)
