"""Convex feasibility problems and their proximity measure.

A problem is a finite family of closed convex sets in a common space.  A
point solves the problem when it lies in every set; the residual notion
used throughout is the proximity

    Pr(x) = sqrt( sum_i d(x, C_i)^2 ),

the root of the summed squared Euclidean distances to the individual
sets.  Proximity is zero exactly on the intersection, and iterative
projection methods are judged by how fast they drive it down.

Families consisting purely of sparse hyperplanes carry a packed CSR
representation so the compiled kernels can sweep them without touching
Python per row.  Reductions are compensated, so the reported proximity
does not depend on set order beyond roundoff.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .convexsets import (
    DimensionMismatchError,
    Hyperplane,
    InvalidSetError,
    as_point,
)

DEFAULT_MAX_OUTER_ITERATIONS = 10_000


@dataclass(frozen=True)
class HyperplanePack:
    """CSR-packed family of sparse hyperplanes sharing one ambient space.

    Row ``i`` occupies ``indices[indptr[i]:indptr[i+1]]`` and the matching
    slice of ``data``; ``offset[i]`` and ``norm_sq[i]`` complete the row.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    offset: np.ndarray
    norm_sq: np.ndarray
    dim: int

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int32)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        norm_sq = np.ascontiguousarray(self.norm_sq, dtype=np.float64)
        if indptr.ndim != 1 or indptr.size < 2 or indptr[0] != 0:
            raise InvalidSetError("indptr must be 1-D, start at 0 and cover >= 1 row")
        if np.any(np.diff(indptr) <= 0):
            raise InvalidSetError("every packed row needs at least one entry")
        if indptr[-1] != indices.size or indices.size != data.size:
            raise InvalidSetError("indptr, indices and data sizes disagree")
        n_rows = indptr.size - 1
        if offset.shape != (n_rows,) or norm_sq.shape != (n_rows,):
            raise InvalidSetError("offset and norm_sq must have one entry per row")
        if np.any(norm_sq <= 0.0):
            raise InvalidSetError("rows must have nonzero normals")
        if indices.size and (indices.min() < 0 or indices.max() >= self.dim):
            raise InvalidSetError("column indices out of range")
        for name, arr in (("indptr", indptr), ("indices", indices),
                          ("data", data), ("offset", offset), ("norm_sq", norm_sq)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_hyperplanes(cls, planes, dim):
        counts = np.fromiter((p.indices.size for p in planes), dtype=np.int64,
                             count=len(planes))
        indptr = np.zeros(len(planes) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.concatenate([p.indices for p in planes]).astype(np.int32)
        data = np.concatenate([p.values for p in planes])
        offset = np.fromiter((p.offset for p in planes), dtype=np.float64,
                             count=len(planes))
        norm_sq = np.fromiter((p.norm_sq for p in planes), dtype=np.float64,
                              count=len(planes))
        return cls(indptr, indices, data, offset, norm_sq, dim)

    def __len__(self):
        return self.indptr.size - 1

    def row(self, i):
        """Materialize row ``i`` as a standalone hyperplane descriptor."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return Hyperplane(self.indices[lo:hi].astype(np.int64),
                          self.data[lo:hi].copy(),
                          float(self.offset[i]), dim=self.dim)

    def residuals(self, x):
        """Vector of signed constraint values ``<a_i, x> - b_i``."""
        prod = self.data * x[self.indices]
        sums = np.add.reduceat(prod, self.indptr[:-1])
        return sums - self.offset

    def proximity(self, x):
        return math.sqrt(_kernels.proximity_sq(
            x, self.indptr, self.indices, self.data, self.offset, self.norm_sq))


class FeasibilityProblem:
    """A finite family of closed convex sets over one coordinate space."""

    def __init__(self, sets, dim=None):
        sets = tuple(sets)
        if not sets:
            raise InvalidSetError("a feasibility problem needs at least one set")
        dims = {c.dim for c in sets}
        if len(dims) != 1:
            raise DimensionMismatchError(f"sets live in different dimensions: {sorted(dims)}")
        (set_dim,) = dims
        if dim is not None and dim != set_dim:
            raise DimensionMismatchError(f"declared dimension {dim} != set dimension {set_dim}")
        self._sets = sets
        self.dim = set_dim
        self._pack = None
        self._pack_built = False

    @classmethod
    def from_packed(cls, pack):
        problem = cls.__new__(cls)
        problem._sets = None
        problem.dim = pack.dim
        problem._pack = pack
        problem._pack_built = True
        problem._pack_len = len(pack)
        return problem

    @property
    def sets(self):
        if self._sets is None:
            self._sets = tuple(self._pack.row(i) for i in range(len(self._pack)))
        return self._sets

    def __len__(self):
        if self._sets is None:
            return self._pack_len
        return len(self._sets)

    @property
    def packed(self):
        """CSR pack when every set is a hyperplane, else ``None``."""
        if not self._pack_built:
            self._pack_built = True
            if all(isinstance(c, Hyperplane) for c in self._sets):
                self._pack = HyperplanePack.from_hyperplanes(self._sets, self.dim)
        return self._pack

    def distances(self, x):
        """Per-set Euclidean distances as a float64 vector."""
        x = as_point(x, self.dim)
        pack = self.packed
        if pack is not None:
            return np.abs(pack.residuals(x)) / np.sqrt(pack.norm_sq)
        return np.array([c.distance(x) for c in self.sets], dtype=np.float64)

    def proximity(self, x):
        """Root of the compensated sum of squared set distances."""
        x = as_point(x, self.dim)
        pack = self.packed
        if pack is not None:
            return pack.proximity(x)
        return math.sqrt(math.fsum(c.distance(x) ** 2 for c in self.sets))

    def is_solution(self, x, tol=None):
        """Whether ``x`` lies in every set, up to a scale-aware tolerance."""
        x = as_point(x, self.dim)
        if tol is None:
            tol = 1e-9 * (1.0 + float(np.linalg.norm(x)))
        return self.proximity(x) <= tol


def proximity(problem, x):
    """Root of the summed squared distances from ``x`` to the problem's sets."""
    return problem.proximity(x)


def is_solution(problem, x, tol=None):
    """Whether ``x`` lies in every set of the problem, up to tolerance."""
    return problem.is_solution(x, tol)


@dataclass(frozen=True)
class StoppingCriterion:
    """Strictly positive proximity target plus an outer iteration budget."""

    epsilon: float
    max_outer_iterations: int = DEFAULT_MAX_OUTER_ITERATIONS

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise InvalidSetError("epsilon must be finite and strictly positive")
        if self.max_outer_iterations < 1:
            raise InvalidSetError("iteration budget must be positive")


@dataclass(frozen=True)
class Iterate:
    """One point of an iterative run, with its index and proximity."""

    k: int
    x: np.ndarray
    proximity: float

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        x.flags.writeable = False
        object.__setattr__(self, "x", x)


def output_operator(problem, stopping, iterates):
    """First iterate whose proximity reaches the target, or ``None``.

    Walks the points of ``iterates`` in order, indexing from zero, and
    returns the earliest :class:`Iterate` whose proximity is at most
    ``stopping.epsilon``; every earlier point sits strictly above the
    target by construction of the scan.  Returns ``None`` (the output is
    undefined, a legal outcome rather than an error) when the sequence
    ends, or the budget caps the scan at index
    ``stopping.max_outer_iterations``, before any point qualifies.
    """
    if not isinstance(stopping, StoppingCriterion):
        stopping = StoppingCriterion(float(stopping))
    for k, x in enumerate(iterates):
        if k > stopping.max_outer_iterations:
            return None
        if isinstance(x, Iterate):
            x = x.x
        pr = problem.proximity(x)
        if pr <= stopping.epsilon:
            return Iterate(k=k, x=np.array(x, dtype=np.float64), proximity=pr)
    return None
