"""Superiorized iteration around a proximity-reducing operator.

Given an operator whose plain orbit drives the proximity of a
feasibility problem down, the engine interleaves objective-reducing
perturbations ahead of every application:

    y = x^k + beta_k v^k,   x^{k+1} = op(y),

where ``v^k`` is the normalized negative subgradient of the objective
at ``x^k`` (or the zero vector where the subgradient vanishes) and
``beta_k`` is drawn from a summable, strictly positive trial sequence.
A trial step is accepted only when it does not increase the objective
and the operator applied to it still strictly reduces proximity;
otherwise the next, smaller, trial size is taken.  The trial index only
ever moves forward, also across outer iterations, so the accepted sizes
form a subsequence of the trial sequence and inherit its summability.
The perturbations are therefore bounded and summable, and resilience of
the operator guarantees the perturbed orbit still solves the
feasibility problem; the objective reduction is a heuristic bonus on
top, not a minimization guarantee.  Note that the objective test
compares the perturbed point ``y``, not ``op(y)``: the objective value
of the accepted next iterate may well sit above the current one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .convexsets import InvalidSetError, as_point
from .feasibility import Iterate, StoppingCriterion

DEFAULT_INNER_BUDGET = 500


class InnerStall(RuntimeError):
    """No acceptable trial step existed within the inner budget.

    Near feasibility, or at the floating-point noise floor, the strict
    proximity-decrease test can become unsatisfiable; burning the whole
    trial budget without an acceptance surfaces as this error rather
    than as a silent infinite loop.  Carries the outer index, the last
    trial index, and the proximity at the stall.
    """

    def __init__(self, message, k=None, ell=None, proximity=None):
        super().__init__(message)
        self.k = k
        self.ell = ell
        self.proximity = proximity


class GammaSequence:
    """Strictly positive, summable trial step sizes, indexed from zero.

    Two constructions are provided: :meth:`geometric` for
    ``base ** ell``, and :meth:`table` for an explicit finite prefix
    continued by a geometric tail (the declared tail is what keeps the
    sum finite).  Arbitrary callables are accepted too; every value is
    checked to be finite and strictly positive on the way out.
    """

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, ell):
        if ell < 0:
            raise InvalidSetError("trial index must be nonnegative")
        value = float(self._fn(ell))
        if not (value > 0.0 and math.isfinite(value)):
            raise InvalidSetError(
                f"gamma({ell}) = {value!r}; sizes must be finite and strictly positive")
        return value

    @classmethod
    def geometric(cls, base):
        if not (0.0 < base < 1.0):
            raise InvalidSetError("geometric base must lie strictly between 0 and 1")
        return cls(lambda ell: base ** ell)

    @classmethod
    def table(cls, values, tail_base):
        values = tuple(float(v) for v in values)
        if not values or any(v <= 0.0 or not math.isfinite(v) for v in values):
            raise InvalidSetError("table values must be finite and strictly positive")
        if not (0.0 < tail_base < 1.0):
            raise InvalidSetError("tail base must lie strictly between 0 and 1")

        def fn(ell, _n=len(values), _v=values, _a=tail_base):
            if ell < _n:
                return _v[ell]
            return _v[-1] * _a ** (ell - _n + 1)

        return cls(fn)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the problem and the operator.

    ``objective`` and ``gamma`` matter only to superiorized runs; the
    plain runner uses ``objective``, when present, purely to annotate
    its trace.  ``inner_budget`` caps how many trial sizes one outer
    iteration may consume.
    """

    initial_point: np.ndarray
    stop: StoppingCriterion
    objective: object = None
    gamma: object = None
    inner_budget: int = DEFAULT_INNER_BUDGET

    def __post_init__(self):
        x = as_point(self.initial_point)
        x.flags.writeable = False
        object.__setattr__(self, "initial_point", x)
        stop = self.stop
        if not isinstance(stop, StoppingCriterion):
            stop = StoppingCriterion(float(stop))
        object.__setattr__(self, "stop", stop)
        if self.inner_budget < 1:
            raise InvalidSetError("inner budget must be positive")
        if self.gamma is not None and not isinstance(self.gamma, GammaSequence):
            if not callable(self.gamma):
                raise InvalidSetError("gamma must be callable on the trial index")
            object.__setattr__(self, "gamma", GammaSequence(self.gamma))


@dataclass(frozen=True)
class StepRecord:
    """Bookkeeping for one accepted outer step ``x^k -> x^{k+1}``."""

    k: int
    ell: int
    beta: float
    v_norm: float
    phi_before: float
    phi_trial: float
    proximity_before: float
    proximity_after: float
    trials: int


@dataclass(frozen=True)
class SuperiorizationState:
    """One point of a superiorized run with its loop counters.

    ``ell`` is the index of the last consumed trial size (-1 before the
    first); it never decreases across the run.  ``step`` records how the
    state was reached and is ``None`` for the initial state.
    """

    k: int
    ell: int
    x: np.ndarray
    proximity: float
    objective_value: float
    step: StepRecord = field(default=None, repr=False)

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        x.flags.writeable = False
        object.__setattr__(self, "x", x)


def initial_state(problem, objective, x0):
    """State at the starting point: counters zeroed, nothing consumed."""
    x = as_point(x0, problem.dim)
    return SuperiorizationState(
        k=0, ell=-1, x=x,
        proximity=problem.proximity(x),
        objective_value=float(objective.value(x)),
    )


def superiorized_step(state, op, problem, cfg):
    """One accepted outer step of the superiorized iteration.

    Draws trial sizes from ``cfg.gamma`` at ever-increasing indices,
    perturbs along the normalized negative subgradient, and accepts the
    first trial whose perturbed point does not increase the objective
    and whose image under ``op`` strictly reduces proximity.  Raises
    :class:`InnerStall` when ``cfg.inner_budget`` trials all fail, which
    is expected only at (numerical) feasibility, where the strict
    decrease has nothing left to cut.
    """
    gamma = cfg.gamma
    objective = cfg.objective
    if gamma is None or objective is None:
        raise InvalidSetError("superiorized steps need an objective and a gamma sequence")
    x = state.x
    phi = state.objective_value
    pr = state.proximity

    g = np.ascontiguousarray(objective.subgradient_at(x), dtype=np.float64).ravel()
    if g.shape != x.shape:
        raise InvalidSetError("subgradient shape does not match the iterate")
    g_norm = float(np.linalg.norm(g))
    v = -g / g_norm if g_norm > 0.0 else g

    ell = state.ell
    for trial in range(1, cfg.inner_budget + 1):
        ell += 1
        beta = gamma(ell)
        y = x + beta * v
        phi_y = float(objective.value(y))
        if phi_y > phi:
            continue
        z = op.apply(y)
        pr_z = problem.proximity(z)
        if pr_z < pr:
            return SuperiorizationState(
                k=state.k + 1, ell=ell, x=z,
                proximity=pr_z,
                objective_value=float(objective.value(z)),
                step=StepRecord(
                    k=state.k, ell=ell, beta=beta,
                    v_norm=1.0 if g_norm > 0.0 else 0.0,
                    phi_before=phi, phi_trial=phi_y,
                    proximity_before=pr, proximity_after=pr_z,
                    trials=trial,
                ),
            )
    raise InnerStall(
        f"no acceptable trial step at k={state.k} "
        f"(proximity {pr:.3e}, {cfg.inner_budget} trials, last ell {ell})",
        k=state.k, ell=ell, proximity=pr)


class PlainRun:
    """Trace of an unperturbed run.

    ``proximities`` is aligned with the visited iterates, the starting
    point first; ``objective_values`` is parallel to it when the config
    carried an objective, else ``None``.  ``output`` is the first
    visited iterate at or below the proximity target, or ``None`` when
    the budget ran out first (the output is then undefined).
    """

    def __init__(self, output, proximities, objective_values=None):
        self.output = output
        self.proximities = np.asarray(proximities, dtype=np.float64)
        self.objective_values = (None if objective_values is None
                                 else np.asarray(objective_values, dtype=np.float64))

    @property
    def status(self):
        return "ok" if self.output is not None else "undefined"

    @property
    def iterations(self):
        return self.proximities.size - 1


class SuperiorizedRun(PlainRun):
    """Trace of a superiorized run; adds the accepted step records."""

    def __init__(self, output, proximities, objective_values, steps):
        super().__init__(output, proximities, objective_values)
        self.steps = tuple(steps)


def run_plain(problem, op, cfg, observer=None):
    """Iterate ``op`` from the configured start until target or budget.

    The proximity target is checked on every visited point, the start
    included, so at most ``cfg.stop.max_outer_iterations`` applications
    run.  ``observer``, when given, is called as
    ``observer(k, x, proximity)`` per visited point.
    """
    if not isinstance(cfg, RunConfig):
        raise InvalidSetError("cfg must be a RunConfig")
    stop = cfg.stop
    x = as_point(cfg.initial_point, problem.dim)
    prox_trace = []
    phi_trace = [] if cfg.objective is not None else None
    output = None
    for k in range(stop.max_outer_iterations + 1):
        pr = problem.proximity(x)
        prox_trace.append(pr)
        if phi_trace is not None:
            phi_trace.append(float(cfg.objective.value(x)))
        if observer is not None:
            observer(k, x, pr)
        if pr <= stop.epsilon:
            output = Iterate(k=k, x=x.copy(), proximity=pr)
            break
        if k == stop.max_outer_iterations:
            break
        x = op.apply(x)
    return PlainRun(output, prox_trace, phi_trace)


def run_superiorized(problem, op, cfg, observer=None):
    """Drive ``op`` to the proximity target while nudging the objective.

    Stopping mirrors :func:`run_plain` exactly: the target is checked on
    every visited iterate starting with the initial point, so a run with
    the constant-zero objective retraces the plain orbit step for step.
    An :class:`InnerStall` from the step routine propagates to the
    caller.  ``observer``, when given, receives each visited
    :class:`SuperiorizationState`.
    """
    if not isinstance(cfg, RunConfig):
        raise InvalidSetError("cfg must be a RunConfig")
    if cfg.objective is None or cfg.gamma is None:
        raise InvalidSetError("superiorized runs need an objective and a gamma sequence")
    stop = cfg.stop
    state = initial_state(problem, cfg.objective, cfg.initial_point)
    prox_trace = []
    phi_trace = []
    steps = []
    output = None
    while True:
        prox_trace.append(state.proximity)
        phi_trace.append(state.objective_value)
        if state.step is not None:
            steps.append(state.step)
        if observer is not None:
            observer(state)
        if state.proximity <= stop.epsilon:
            output = Iterate(k=state.k, x=state.x.copy(), proximity=state.proximity)
            break
        if state.k == stop.max_outer_iterations:
            break
        state = superiorized_step(state, op, problem, cfg)
    return SuperiorizedRun(output, prox_trace, phi_trace, steps)
