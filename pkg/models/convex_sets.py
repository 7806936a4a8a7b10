"""
Closed convex sets in R^J with exact metric projections.

Every set in the catalog (halfspace, hyperplane, box, ball, simplex) has a
closed-form or sort-based projection, so the individual projections P_i used
by the string operators are exact. A ``Problem`` bundles the constraint sets
C_1, ..., C_m whose intersection is the feasible region.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.exceptions import (
    DimensionMismatchError,
    IndexOutOfRangeError,
    InvalidParameterError,
    InvalidSetError,
    NonFiniteInputError,
)

logger = logging.getLogger(__name__)

DEFAULT_MEMBERSHIP_TOL = 1e-9


def as_vector(x, dim=None):
    """Return x as a finite 1-D float array, checking its length when dim is given"""
    v = np.array(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"expected a vector of length {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError("vector has non-finite coordinates")
    return v


def _frozen_array(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidSetError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidSetError(f"{name} must have finite coordinates")
    arr.setflags(write=False)
    return arr


class ConvexSet:
    """Base class for a nonempty closed convex subset of R^J"""

    kind = None

    @property
    def dim(self):
        raise NotImplementedError

    def _project(self, x):
        raise NotImplementedError

    def project(self, x):
        """Nearest point of the set to x"""
        return self._project(as_vector(x, self.dim))

    def distance(self, x):
        x = as_vector(x, self.dim)
        return float(np.linalg.norm(x - self._project(x)))

    def contains(self, x, tol=DEFAULT_MEMBERSHIP_TOL):
        if tol < 0:
            raise InvalidParameterError("tol must satisfy tol >= 0")
        return self.distance(x) <= tol

    def distance_batch(self, X):
        """Distances of the rows of X to the set"""
        return np.array([np.linalg.norm(x - self._project(x)) for x in X])

    def enclosing_radius(self):
        """Radius M with set ⊆ B(0, M), or None when the set is unbounded"""
        return None

    def to_record(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """{x : <a, x> <= b}"""

    a: np.ndarray
    b: float

    kind = 'halfspace'

    def __post_init__(self):
        a = _frozen_array(self.a, 'a')
        norm_sq = float(a @ a)
        if norm_sq == 0.0:
            raise InvalidSetError("halfspace normal a must be nonzero")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', float(self.b))
        object.__setattr__(self, '_norm_sq', norm_sq)

    @property
    def dim(self):
        return self.a.size

    def _project(self, x):
        violation = float(self.a @ x) - self.b
        if violation <= 0.0:
            return x
        return x - (violation / self._norm_sq) * self.a

    def distance_batch(self, X):
        return np.maximum(X @ self.a - self.b, 0.0) / np.sqrt(self._norm_sq)

    def to_record(self):
        return {'type': self.kind, 'a': self.a.tolist(), 'b': self.b}


@dataclass(frozen=True, eq=False)
class Hyperplane(ConvexSet):
    """{x : <a, x> = b}"""

    a: np.ndarray
    b: float

    kind = 'hyperplane'

    def __post_init__(self):
        a = _frozen_array(self.a, 'a')
        norm_sq = float(a @ a)
        if norm_sq == 0.0:
            raise InvalidSetError("hyperplane normal a must be nonzero")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', float(self.b))
        object.__setattr__(self, '_norm_sq', norm_sq)

    @property
    def dim(self):
        return self.a.size

    def _project(self, x):
        residual = float(self.a @ x) - self.b
        if residual == 0.0:
            return x
        return x - (residual / self._norm_sq) * self.a

    def distance_batch(self, X):
        return np.abs(X @ self.a - self.b) / np.sqrt(self._norm_sq)

    def to_record(self):
        return {'type': self.kind, 'a': self.a.tolist(), 'b': self.b}


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """{x : lo <= x <= hi} coordinatewise"""

    lo: np.ndarray
    hi: np.ndarray

    kind = 'box'

    def __post_init__(self):
        lo = _frozen_array(self.lo, 'lo')
        hi = _frozen_array(self.hi, 'hi')
        if lo.size != hi.size:
            raise InvalidSetError(f"box bounds differ in length ({lo.size} vs {hi.size})")
        if np.any(lo > hi):
            raise InvalidSetError("box bounds must satisfy lo_j <= hi_j for all j")
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)

    @property
    def dim(self):
        return self.lo.size

    def _project(self, x):
        return np.clip(x, self.lo, self.hi)

    def distance_batch(self, X):
        return np.linalg.norm(X - np.clip(X, self.lo, self.hi), axis=1)

    def enclosing_radius(self):
        corner = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(corner))

    def to_record(self):
        return {'type': self.kind, 'lo': self.lo.tolist(), 'hi': self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    """Closed Euclidean ball B(center, radius)"""

    center: np.ndarray
    radius: float

    kind = 'ball'

    def __post_init__(self):
        center = _frozen_array(self.center, 'center')
        radius = float(self.radius)
        if not np.isfinite(radius) or radius <= 0.0:
            raise InvalidSetError("ball radius must be a finite number > 0")
        object.__setattr__(self, 'center', center)
        object.__setattr__(self, 'radius', radius)

    @property
    def dim(self):
        return self.center.size

    def _project(self, x):
        offset = x - self.center
        norm = float(np.linalg.norm(offset))
        if norm <= self.radius:
            return x
        return self.center + (self.radius / norm) * offset

    def distance_batch(self, X):
        return np.maximum(np.linalg.norm(X - self.center, axis=1) - self.radius, 0.0)

    def enclosing_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def to_record(self):
        return {'type': self.kind, 'center': self.center.tolist(), 'radius': self.radius}


@dataclass(frozen=True, eq=False)
class Simplex(ConvexSet):
    """{x : x >= 0, sum(x) = scale}"""

    scale: float
    size: int

    kind = 'simplex'

    def __post_init__(self):
        scale = float(self.scale)
        if not np.isfinite(scale) or scale <= 0.0:
            raise InvalidSetError("simplex scale must be a finite number > 0")
        if int(self.size) < 1:
            raise InvalidSetError("simplex dimension must be >= 1")
        object.__setattr__(self, 'scale', scale)
        object.__setattr__(self, 'size', int(self.size))

    @property
    def dim(self):
        return self.size

    def _project(self, x):
        # sort-and-threshold: largest rho with u_rho > (cumsum_rho - scale) / rho
        u = np.sort(x)[::-1]
        cssv = np.cumsum(u)
        ranks = np.arange(1, x.size + 1)
        rho = np.nonzero(u * ranks > (cssv - self.scale))[0][-1]
        theta = (cssv[rho] - self.scale) / (rho + 1.0)
        return np.maximum(x - theta, 0.0)

    def enclosing_radius(self):
        return self.scale

    def to_record(self):
        return {'type': self.kind, 'scale': self.scale, 'dim': self.size}


SET_TYPES = {
    'halfspace': Halfspace,
    'hyperplane': Hyperplane,
    'box': Box,
    'ball': Ball,
    'simplex': Simplex,
}


def set_from_record(record, dim=None):
    """Build a ConvexSet from a tagged record such as {'type': 'ball', ...}"""
    kind = record.get('type')
    if kind not in SET_TYPES:
        raise InvalidSetError(f"unknown set type {kind!r}; expected one of {sorted(SET_TYPES)}")
    try:
        if kind in ('halfspace', 'hyperplane'):
            return SET_TYPES[kind](a=record['a'], b=record['b'])
        if kind == 'box':
            return Box(lo=record['lo'], hi=record['hi'])
        if kind == 'ball':
            return Ball(center=record['center'], radius=record['radius'])
        return Simplex(scale=record['scale'], size=record.get('dim', dim))
    except KeyError as e:
        raise InvalidSetError(f"{kind} record is missing field {e.args[0]!r}")
    except TypeError as e:
        raise InvalidSetError(f"{kind} record is malformed: {e}")


@dataclass(frozen=True, eq=False)
class Problem:
    """
    Constraint family C_1, ..., C_m with C = ∩ C_i.

    ``bounded_index_witness`` is a 1-based index s with C_s ⊆ B(0, M); M is
    taken from ``witness_radius`` or, when omitted, from the witness set's own
    enclosing radius.
    """

    sets: tuple
    bounded_index_witness: Optional[int] = None
    witness_radius: Optional[float] = None

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise InvalidSetError("a problem needs at least one constraint set")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise DimensionMismatchError(f"constraint sets have differing dimensions {sorted(dims)}")
        object.__setattr__(self, 'sets', sets)

        s = self.bounded_index_witness
        if s is None:
            if self.witness_radius is not None:
                raise InvalidParameterError("witness_radius given without bounded_index_witness")
            return
        if not 1 <= int(s) <= len(sets):
            raise IndexOutOfRangeError(f"bounded_index_witness {s} outside 1..{len(sets)}")
        radius = sets[int(s) - 1].enclosing_radius()
        if radius is None:
            raise InvalidSetError(f"witness set {s} ({sets[int(s) - 1].kind}) is unbounded")
        if self.witness_radius is None:
            object.__setattr__(self, 'witness_radius', radius)
        elif radius > float(self.witness_radius) * (1 + 1e-12):
            raise InvalidSetError(f"witness set {s} is not inside B(0, {self.witness_radius}) "
                                  f"(enclosing radius {radius})")
        object.__setattr__(self, 'bounded_index_witness', int(s))
        object.__setattr__(self, 'witness_radius', float(self.witness_radius))

    @property
    def m(self):
        return len(self.sets)

    @property
    def dim(self):
        return self.sets[0].dim

    @property
    def bound(self):
        """M of the boundedness hypothesis, or None without a witness"""
        return self.witness_radius

    def set_at(self, i):
        """Constraint C_i for a 1-based index i"""
        if not 1 <= i <= self.m:
            raise IndexOutOfRangeError(f"constraint index {i} outside 1..{self.m}")
        return self.sets[i - 1]

    def distances(self, x):
        """Per-set distances d(x, C_i), i = 1..m"""
        x = as_vector(x, self.dim)
        return np.array([np.linalg.norm(x - s._project(x)) for s in self.sets])

    def proximity_batch(self, X):
        """max_i d(x, C_i) for every row x of X"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(f"expected rows of length {self.dim}, got {X.shape[1]}")
        return np.max([s.distance_batch(X) for s in self.sets], axis=0)

    def to_record(self):
        record = {'sets': [s.to_record() for s in self.sets]}
        if self.bounded_index_witness is not None:
            record['bounded_index'] = self.bounded_index_witness
            record['bound'] = self.witness_radius
        return record
