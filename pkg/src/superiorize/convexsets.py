"""Closed convex set descriptors with exact orthogonal projections.

Three set types are supported: hyperplanes ``<a, x> = b``, half-spaces
``<a, x> <= b`` and axis-aligned boxes.  Hyperplane and half-space normals
are stored sparsely as (index, value) pairs because at tomographic scale a
row touches only a few hundred of tens of thousands of coordinates.

Descriptors are immutable after construction; projections are pure
functions returning fresh arrays.
"""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MEMBERSHIP_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Point dimension does not match the descriptor's ambient dimension."""


class InvalidSetError(ValueError):
    """Descriptor data violates a construction invariant."""


def as_point(x, dim=None):
    """Coerce to a finite 1-D float64 vector, optionally checking dimension."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidSetError("a point must be a nonempty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise InvalidSetError("point entries must be finite")
    if dim is not None and x.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {x.size}")
    return x


def _frozen(a):
    a.flags.writeable = False
    return a


def _prepare_sparse_normal(indices, values, dim):
    idx = np.ascontiguousarray(indices, dtype=np.int64)
    val = np.ascontiguousarray(values, dtype=np.float64)
    if idx.ndim != 1 or val.ndim != 1 or idx.size != val.size:
        raise InvalidSetError("indices and values must be 1-D and equally long")
    if idx.size == 0:
        raise InvalidSetError("normal vector must have at least one nonzero entry")
    if idx[0] < 0 or (dim is not None and idx[-1] >= dim):
        raise InvalidSetError("normal indices out of range")
    if idx.size > 1 and not np.all(np.diff(idx) > 0):
        raise InvalidSetError("normal indices must be strictly increasing")
    if not np.all(np.isfinite(val)):
        raise InvalidSetError("normal values must be finite")
    if np.any(val == 0.0):
        raise InvalidSetError("sparse normals must store only nonzero entries")
    return _frozen(idx), _frozen(val)


@dataclass(frozen=True)
class Hyperplane:
    """The set ``{x : <a, x> = b}`` with a sparsely stored normal ``a``."""

    indices: np.ndarray
    values: np.ndarray
    offset: float
    dim: int
    tol: float = DEFAULT_MEMBERSHIP_TOL
    norm_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        idx, val = _prepare_sparse_normal(self.indices, self.values, self.dim)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "norm_sq", float(val @ val))
        if not (self.dim >= 1 and idx[-1] < self.dim):
            raise InvalidSetError("ambient dimension too small for normal indices")
        if self.norm_sq == 0.0:
            raise InvalidSetError("normal vector must be nonzero")
        if self.tol <= 0.0:
            raise InvalidSetError("membership tolerance must be positive")

    @classmethod
    def from_dense(cls, normal, offset, tol=DEFAULT_MEMBERSHIP_TOL):
        normal = np.asarray(normal, dtype=np.float64)
        idx = np.nonzero(normal)[0]
        return cls(idx, normal[idx], offset, dim=normal.size, tol=tol)

    def residual(self, x):
        """Signed constraint value ``<a, x> - b``."""
        return float(self.values @ x[self.indices]) - self.offset

    def project(self, x):
        if self.norm_sq == 0.0:
            raise InvalidSetError("normal vector must be nonzero")
        y = x.copy()
        c = self.residual(x) / self.norm_sq
        y[self.indices] -= c * self.values
        return y

    def distance(self, x):
        return abs(self.residual(x)) / np.sqrt(self.norm_sq)

    def contains(self, x):
        return abs(self.residual(x)) <= self.tol


@dataclass(frozen=True)
class HalfSpace:
    """The set ``{x : <a, x> <= b}`` with a sparsely stored normal ``a``."""

    indices: np.ndarray
    values: np.ndarray
    offset: float
    dim: int
    tol: float = DEFAULT_MEMBERSHIP_TOL
    norm_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        idx, val = _prepare_sparse_normal(self.indices, self.values, self.dim)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "norm_sq", float(val @ val))
        if not (self.dim >= 1 and idx[-1] < self.dim):
            raise InvalidSetError("ambient dimension too small for normal indices")
        if self.norm_sq == 0.0:
            raise InvalidSetError("normal vector must be nonzero")
        if self.tol <= 0.0:
            raise InvalidSetError("membership tolerance must be positive")

    @classmethod
    def from_dense(cls, normal, offset, tol=DEFAULT_MEMBERSHIP_TOL):
        normal = np.asarray(normal, dtype=np.float64)
        idx = np.nonzero(normal)[0]
        return cls(idx, normal[idx], offset, dim=normal.size, tol=tol)

    def residual(self, x):
        return float(self.values @ x[self.indices]) - self.offset

    def project(self, x):
        if self.norm_sq == 0.0:
            raise InvalidSetError("normal vector must be nonzero")
        y = x.copy()
        r = self.residual(x)
        if r > 0.0:
            y[self.indices] -= (r / self.norm_sq) * self.values
        return y

    def distance(self, x):
        return max(self.residual(x), 0.0) / np.sqrt(self.norm_sq)

    def contains(self, x):
        return self.residual(x) <= self.tol


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``{x : lower <= x <= upper}``; bounds may be infinite."""

    lower: np.ndarray
    upper: np.ndarray
    tol: float = DEFAULT_MEMBERSHIP_TOL

    def __post_init__(self):
        lo = np.ascontiguousarray(self.lower, dtype=np.float64)
        hi = np.ascontiguousarray(self.upper, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise InvalidSetError("box bounds must be equally sized 1-D vectors")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise InvalidSetError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise InvalidSetError("box requires lower <= upper in every coordinate")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))
        if self.tol <= 0.0:
            raise InvalidSetError("membership tolerance must be positive")

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def distance(self, x):
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x):
        return bool(np.all(x >= self.lower - self.tol) and np.all(x <= self.upper + self.tol))


ConvexSetDescriptor = Hyperplane | HalfSpace | Box


def _check_dim(x, c):
    if x.shape[0] != c.dim:
        raise DimensionMismatchError(
            f"point has dimension {x.shape[0]}, descriptor expects {c.dim}"
        )


def project(x, c):
    """Orthogonal projection of ``x`` onto the set described by ``c``.

    Returns the unique nearest point of the set; the input is never mutated.
    """
    x = as_point(x)
    _check_dim(x, c)
    return c.project(x)


def distance(x, c):
    """Euclidean distance from ``x`` to the set described by ``c``."""
    x = as_point(x)
    _check_dim(x, c)
    return float(c.distance(x))
