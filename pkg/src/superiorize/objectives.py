"""Convex objectives and the grid-image total variation.

An objective exposes ``value(x)`` and ``subgradient_at(x)`` on flat
coordinate vectors.  Values must be convex and the returned vectors must
satisfy the subgradient inequality everywhere; the engine normalizes
them into unit perturbation directions, so only the direction matters.

Images are small immutable wrappers over row-major pixel grids; the
total variation of an image sums, over every pixel that has both a
lower and a right neighbor,

    sqrt( (down difference)^2 + (right difference)^2 ),

so the last row and last column anchor differences of their neighbors
but contribute no terms of their own.
"""

from dataclasses import dataclass

import numpy as np

from .convexsets import InvalidSetError


@dataclass(frozen=True)
class GridImage:
    """A ``height x width`` grid of pixel values, row-major, immutable."""

    values: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        q = np.ascontiguousarray(self.values, dtype=np.float64)
        if q.ndim != 2 or q.size < 1:
            raise InvalidSetError("image values must form a nonempty 2-D grid")
        if not np.all(np.isfinite(q)):
            raise InvalidSetError("image values must be finite")
        if not (self.pixel_size > 0.0 and np.isfinite(self.pixel_size)):
            raise InvalidSetError("pixel size must be finite and positive")
        q.flags.writeable = False
        object.__setattr__(self, "values", q)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def vectorize(img):
    """Flatten an image to a point, row-major; always a fresh array."""
    return _image_values(img).ravel().copy()


def devectorize(x, width, height, pixel_size=1.0):
    """Rebuild the image a point came from; inverse of :func:`vectorize`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != width * height:
        raise InvalidSetError(
            f"need a flat vector of length {width * height} for a "
            f"{height}x{width} image, got shape {x.shape}")
    return GridImage(x.reshape(height, width), pixel_size)


def _image_values(img):
    if isinstance(img, GridImage):
        return img.values
    q = np.asarray(img, dtype=np.float64)
    if q.ndim != 2:
        raise InvalidSetError("expected a GridImage or a 2-D value array")
    return q


def _tv_terms(q, smoothing):
    dv = q[1:, :-1] - q[:-1, :-1]
    dh = q[:-1, 1:] - q[:-1, :-1]
    return dv, dh, np.sqrt(dv * dv + dh * dh + smoothing)


def tv_value(img, smoothing=0.0):
    """Total variation of the image; zero for single-row/column grids."""
    q = _image_values(img)
    if min(q.shape) < 2:
        return 0.0
    _, _, r = _tv_terms(q, smoothing)
    return float(np.sum(r))


def tv_subgradient(img, smoothing=0.0):
    """A subgradient of :func:`tv_value` at the image, as a flat point.

    Wherever a term's root is positive the term is differentiable and
    contributes its gradient to the three pixels it touches; a term
    whose root vanishes contributes nothing, which is a valid selection
    because the zero vector is a subgradient of the Euclidean norm at
    the origin.  With positive ``smoothing`` no root vanishes and the
    result is the exact gradient of the smoothed value.
    """
    q = _image_values(img)
    g = np.zeros(q.shape, dtype=np.float64)
    if min(q.shape) >= 2:
        dv, dh, r = _tv_terms(q, smoothing)
        inv = np.zeros_like(r)
        np.divide(1.0, r, out=inv, where=r > 0.0)
        gv = dv * inv
        gh = dh * inv
        g[:-1, :-1] -= gv + gh
        g[1:, :-1] += gv
        g[:-1, 1:] += gh
    return g.ravel()


class TotalVariation:
    """Total variation as an engine objective over flat pixel vectors.

    The grid shape is fixed at construction since flat points carry no
    layout.  ``smoothing`` switches to the rounded-kink variant; it
    changes the objective's value, so the exact function with the
    zero-contribution subgradient selection stays the default.
    """

    def __init__(self, shape, smoothing=0.0):
        height, width = shape
        if height < 1 or width < 1:
            raise InvalidSetError("image shape must be positive in both axes")
        if not (smoothing >= 0.0 and np.isfinite(smoothing)):
            raise InvalidSetError("smoothing must be finite and nonnegative")
        self.shape = (int(height), int(width))
        self.smoothing = float(smoothing)

    @property
    def dim(self):
        return self.shape[0] * self.shape[1]

    def _grid(self, x):
        q = np.asarray(x, dtype=np.float64)
        if q.ndim == 1:
            if q.size != self.dim:
                raise InvalidSetError(f"expected {self.dim} pixel values, got {q.size}")
            q = q.reshape(self.shape)
        if q.shape != self.shape:
            raise InvalidSetError(f"expected an image of shape {self.shape}")
        return q

    def value(self, x):
        return tv_value(self._grid(x), self.smoothing)

    def subgradient_at(self, x):
        return tv_subgradient(self._grid(x), self.smoothing)


class Zero:
    """The constant-zero objective; superiorizing with it changes nothing."""

    def value(self, x):
        return 0.0

    def subgradient_at(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64)).ravel()
