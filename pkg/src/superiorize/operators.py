"""Algorithmic operators over a feasibility problem's sets.

Two operator families are provided, both assembled from exact orthogonal
projections onto the individual sets:

* String averaging: an :class:`Amalgamator` holds index strings and
  positive weights summing to one; each string sends ``x`` through the
  named projections in order (first index first) and the operator
  returns the weighted average of the string end points.  A single
  string listing every set once is the classical sequential sweep.

* Block iterative: a :class:`BlockScheme` partitions the set indices
  into ordered blocks; each block step moves the point by the average
  of its sets' projection displacements, damped by the largest block
  size, and the operator composes the block steps first block first.

Both operators are nonexpansive, keep feasible points fixed, and pull
the proximity of non-solutions strictly down, which makes their orbits
resilient to summable bounded perturbations.  The perturbed-iteration
harness at the bottom exercises that resilience empirically:
``x^{k+1} = op(x^k + beta_k v_k)`` with bounded directions and summable
sizes still converges into the intersection.
"""

import math

import numpy as np

from . import _kernels
from .convexsets import InvalidSetError, as_point

WEIGHT_SUM_TOL = 1e-12
DIRECTION_NORM_TOL = 1e-12


def _as_index_vector(t, allow_repeats):
    t = np.ascontiguousarray(t, dtype=np.int64)
    if t.ndim != 1 or t.size == 0:
        raise InvalidSetError("an index vector must be a nonempty 1-D sequence")
    if t.min() < 0:
        raise InvalidSetError("set indices must be nonnegative")
    if not allow_repeats and np.unique(t).size != t.size:
        raise InvalidSetError("a block may name each set at most once")
    t.flags.writeable = False
    return t


class Amalgamator:
    """Index strings with positive weights summing to one.

    Strings may repeat indices and their order matters.  The amalgamator
    is fit for a problem when the strings jointly name every one of its
    sets; fitness is checked against a concrete problem size, since the
    same amalgamator data can be declared before the problem exists.
    """

    def __init__(self, strings, weights=None):
        if len(strings) == 0:
            raise InvalidSetError("at least one string is required")
        self.strings = tuple(_as_index_vector(t, allow_repeats=True) for t in strings)
        if weights is None:
            weights = np.full(len(self.strings), 1.0 / len(self.strings))
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.shape != (len(self.strings),):
            raise InvalidSetError("need exactly one weight per string")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise InvalidSetError("string weights must be strictly positive")
        if abs(math.fsum(w.tolist()) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidSetError("string weights must sum to one")
        w.flags.writeable = False
        self.weights = w

    @classmethod
    def sweep(cls, n_sets):
        """Single string visiting every index once, in order, weight one."""
        return cls([np.arange(n_sets, dtype=np.int64)], [1.0])

    @classmethod
    def singletons(cls, n_sets):
        """One single-index string per set, equal weights."""
        return cls([[i] for i in range(n_sets)])

    def validate_for(self, n_sets):
        if max(int(t.max()) for t in self.strings) >= n_sets:
            raise InvalidSetError(f"string indices must lie in [0, {n_sets})")
        covered = np.unique(np.concatenate(self.strings))
        if covered.size != n_sets:
            raise InvalidSetError("the strings together must name every set")


class BlockScheme:
    """Ordered blocks of set indices, jointly covering every set.

    Within a block each index appears at most once; across blocks
    overlaps are allowed.  The derived damping constant ``r_max`` is the
    size of the largest block.
    """

    def __init__(self, blocks):
        if len(blocks) == 0:
            raise InvalidSetError("at least one block is required")
        self.blocks = tuple(_as_index_vector(b, allow_repeats=False) for b in blocks)
        self.r_max = max(b.size for b in self.blocks)

    @classmethod
    def singletons(cls, n_sets):
        """One block per set, in index order; the scheme of plain sweeps."""
        return cls([[i] for i in range(n_sets)])

    def validate_for(self, n_sets):
        if max(int(b.max()) for b in self.blocks) >= n_sets:
            raise InvalidSetError(f"block indices must lie in [0, {n_sets})")
        covered = np.unique(np.concatenate(self.blocks))
        if covered.size != n_sets:
            raise InvalidSetError("the blocks together must cover every set")


class PerturbationStep:
    """One bounded perturbation: a nonnegative size and a direction.

    The direction's Euclidean norm may not exceed one (up to roundoff);
    sizes are nonnegative, zero included.
    """

    def __init__(self, beta, direction):
        self.beta = float(beta)
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise InvalidSetError("perturbation size must be finite and nonnegative")
        v = as_point(direction)
        if float(np.linalg.norm(v)) > 1.0 + DIRECTION_NORM_TOL:
            raise InvalidSetError("perturbation direction must have norm at most one")
        v.flags.writeable = False
        self.direction = v


def compose_projections(x, t, problem):
    """Apply the projections named by ``t`` to ``x``, first index first."""
    x = as_point(x, problem.dim)
    t = _as_index_vector(t, allow_repeats=True)
    if int(t.max()) >= len(problem):
        raise InvalidSetError(f"set indices must lie in [0, {len(problem)})")
    pack = problem.packed
    if pack is not None:
        y = x.copy()
        _kernels.sweep_rows(y, t, pack.indptr, pack.indices, pack.data,
                            pack.offset, pack.norm_sq)
        return y
    y = x
    for i in t:
        y = problem.sets[i].project(y)
    return y


class StringAveragingOperator:
    """An amalgamator bound to a problem, ready for repeated application."""

    def __init__(self, problem, amalgamator=None):
        if amalgamator is None:
            amalgamator = Amalgamator.sweep(len(problem))
        amalgamator.validate_for(len(problem))
        self.problem = problem
        self.amalgamator = amalgamator

    def apply(self, x):
        x = as_point(x, self.problem.dim)
        A = self.amalgamator
        pack = self.problem.packed
        if pack is not None:
            if len(A.strings) == 1:
                y = x.copy()
                _kernels.sweep_rows(y, A.strings[0], pack.indptr, pack.indices,
                                    pack.data, pack.offset, pack.norm_sq)
                return y
            out = np.zeros_like(x)
            for w, t in zip(A.weights, A.strings):
                y = x.copy()
                _kernels.sweep_rows(y, t, pack.indptr, pack.indices,
                                    pack.data, pack.offset, pack.norm_sq)
                out += w * y
            return out
        out = np.zeros_like(x)
        for w, t in zip(A.weights, A.strings):
            y = x
            for i in t:
                y = self.problem.sets[i].project(y)
            out = out + w * y
        return out

    __call__ = apply


def sap_apply(x, amalgamator, problem):
    """Weighted average of the string compositions applied to ``x``."""
    return StringAveragingOperator(problem, amalgamator).apply(x)


def _apply_block(problem, block, x, r):
    pack = problem.packed
    if pack is not None:
        y = x.copy()
        resid = np.empty(block.shape[0])
        _kernels.block_step(y, resid, block, pack.indptr, pack.indices,
                            pack.data, pack.offset, pack.norm_sq, float(r))
        return y
    shift = np.zeros_like(x)
    for i in block:
        shift += problem.sets[i].project(x) - x
    return x + shift / r


def bip_block_apply(x, u, scheme, problem):
    """One damped averaged-projection step over block ``u`` of the scheme.

    Moves ``x`` by ``1/r_max`` times the summed projection displacements
    of the block's sets, which equals the convex combination of the
    block's projections and the unmoved point weighted by the size
    deficit against the largest block.
    """
    x = as_point(x, problem.dim)
    scheme.validate_for(len(problem))
    if not 0 <= u < len(scheme.blocks):
        raise InvalidSetError(f"block index {u} out of range [0, {len(scheme.blocks)})")
    return _apply_block(problem, scheme.blocks[u], x, scheme.r_max)


class BlockIterativeOperator:
    """A block scheme bound to a problem, ready for repeated application."""

    def __init__(self, problem, scheme=None):
        if scheme is None:
            scheme = BlockScheme.singletons(len(problem))
        scheme.validate_for(len(problem))
        self.problem = problem
        self.scheme = scheme
        ptr = np.zeros(len(scheme.blocks) + 1, dtype=np.int64)
        np.cumsum([b.size for b in scheme.blocks], out=ptr[1:])
        rows = np.concatenate(scheme.blocks)
        ptr.flags.writeable = False
        rows.flags.writeable = False
        self._block_ptr = ptr
        self._block_rows = rows

    def apply(self, x):
        x = as_point(x, self.problem.dim)
        pack = self.problem.packed
        if pack is not None:
            y = x.copy()
            resid = np.empty(self.scheme.r_max)
            _kernels.block_pass(y, resid, self._block_ptr, self._block_rows,
                                pack.indptr, pack.indices, pack.data,
                                pack.offset, pack.norm_sq, float(self.scheme.r_max))
            return y
        y = x
        for b in self.scheme.blocks:
            y = _apply_block(self.problem, b, y, self.scheme.r_max)
        return y

    __call__ = apply


def bip_apply(x, scheme, problem):
    """All block steps applied once, first block first."""
    return BlockIterativeOperator(problem, scheme).apply(x)


def perturbed_iterate(x, step, op):
    """One resilient iteration: shift ``x`` by the step, then apply ``op``.

    With a zero size this is exactly ``op(x)``.
    """
    x = as_point(x)
    if step.direction.shape != x.shape:
        raise InvalidSetError("perturbation direction does not match the point")
    apply = getattr(op, "apply", op)
    return apply(x + step.beta * step.direction)


class ResilienceReport:
    """Proximity trace of a perturbed run and its verdict against a target.

    ``proximities[k]`` is the proximity of the k-th visited point, the
    starting point first.  ``reached`` is ``None`` when no target was
    set, else whether any visited point fell to the target or below.
    """

    def __init__(self, proximities, target=None):
        self.proximities = np.asarray(proximities, dtype=np.float64)
        self.target = target

    @property
    def final_proximity(self):
        return float(self.proximities[-1])

    def first_below(self, target=None):
        """Index of the first point at or below ``target``, or ``None``."""
        if target is None:
            target = self.target
        hits = np.nonzero(self.proximities <= target)[0]
        return int(hits[0]) if hits.size else None

    @property
    def reached(self):
        if self.target is None:
            return None
        return self.first_below() is not None


def resilience_trial(problem, op, x0, perturbation_generator, budget, target=None):
    """Run the perturbed iteration for ``budget`` steps and report the trace.

    ``perturbation_generator`` is called as ``generator(k, x)`` before
    step ``k`` and must return a :class:`PerturbationStep` or a
    ``(beta, direction)`` pair; sizes must be nonnegative and directions
    bounded by one, anything else is rejected.  The full budget is spent
    regardless of when (or whether) the optional ``target`` is reached,
    so the trace also shows whether the orbit stays near the
    intersection once inside.
    """
    if budget < 1:
        raise InvalidSetError("budget must be positive")
    x = as_point(x0, problem.dim)
    trace = [problem.proximity(x)]
    for k in range(budget):
        step = perturbation_generator(k, x)
        if not isinstance(step, PerturbationStep):
            step = PerturbationStep(*step)
        x = perturbed_iterate(x, step, op)
        trace.append(problem.proximity(x))
    return ResilienceReport(trace, target)
