"""Gauss-Newton smoother with Armijo backtracking.

Each iteration solves the block-tridiagonal system ``C d = -a`` exactly,
records the model decrease ``delta = a.d + d.C.d / 2`` and backtracks
along ``d`` by powers of ``gamma`` until the sufficient-decrease test
``K(x + t d) <= K(x) + beta t delta`` holds.
"""
import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NotPositiveDefinite
from .linalg import factor, solve
from .model import _check_state
from .objective import evaluate, objective_value

__all__ = [
    "SmootherConfig",
    "Status",
    "IterationRecord",
    "SmootherResult",
    "direction",
    "line_search",
    "run",
    "write_trace_csv",
]


@dataclass(frozen=True)
class SmootherConfig:
    """Algorithm parameters.

    ``epsilon=None`` means ``1e-5 * (1 + K(x0))``. ``eta`` is accepted for
    completeness only: directions come from exact subproblem solves, which
    lie in the admissible direction set for every ``eta`` in (0, 1).
    """

    epsilon: float = None
    beta: float = 1e-4
    gamma: float = 0.5
    eta: float = 0.5
    max_iter: int = 100
    max_backtrack: int = 50

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        for name in ("beta", "gamma", "eta"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if self.max_iter < 0 or self.max_backtrack < 0:
            raise ValueError("iteration caps must be non-negative")


class Status(str, Enum):
    CONVERGED = "ConvergedDelta"
    MAX_ITER = "MaxIterations"
    STALLED = "LineSearchStalled"


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    objective: float
    delta: float
    step: float
    grad_norm: float
    backtracks: int

    def __post_init__(self):
        for name in ("objective", "delta", "step", "grad_norm"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass
class SmootherResult:
    x_hat: np.ndarray
    status: Status
    trace: list = field(default_factory=list)
    epsilon: float = 0.0

    @property
    def iterations(self):
        """Number of accepted steps."""
        return sum(1 for rec in self.trace if rec.step > 0)

    @property
    def objective(self):
        return self.trace[-1].objective if self.trace else np.nan


def direction(ev):
    """Exact minimizer ``d = -C^-1 a`` of the quadratic model and its value.

    Returns ``(d, delta)`` with ``d`` shaped like the gradient.
    """
    a = ev.gradient
    if not np.any(a):
        return np.zeros_like(a), 0.0
    fac = factor(ev.hessian)
    d = -solve(fac, a)
    delta = float(np.vdot(a, d) + 0.5 * np.vdot(d, ev.hessian.matvec(d)))
    return d, min(delta, 0.0)


def line_search(spec, x, d, delta, config, k0=None):
    """Backtracking search along ``d``.

    Returns ``(t, x_new, backtracks, accepted)``. When no trial step passes
    the sufficient-decrease test within ``config.max_backtrack`` reductions,
    ``accepted`` is False and the best trial is returned if it lowered the
    objective; otherwise ``t = 0`` and ``x_new`` is ``x``.
    """
    k0 = objective_value(spec, x) if k0 is None else k0
    best_t, best_k = 0.0, k0
    t = 1.0
    for i in range(config.max_backtrack + 1):
        trial = objective_value(spec, x + t * d)
        if trial <= k0 + config.beta * t * delta:
            return t, x + t * d, i, True
        if trial < best_k:
            best_t, best_k = t, trial
        t *= config.gamma
    return best_t, x + best_t * d, config.max_backtrack, False


def run(spec, x0=None, config=None):
    """Minimize the smoothing objective from ``x0`` (null sequence by default).

    Raises
    ------
    NotPositiveDefinite
        If the curvature matrix cannot be factored at some iterate; the
        iterate is attached to the exception as ``iterate``.
    """
    config = config or SmootherConfig()
    x = spec.null_state() if x0 is None else _check_state(spec, np.array(x0, dtype=float))
    ev = evaluate(spec, x)
    if not np.isfinite(ev.value):
        raise ValueError("objective is not finite at the initial point")
    eps = 1e-5 * (1.0 + ev.value) if config.epsilon is None else config.epsilon

    trace = []
    status = Status.MAX_ITER
    for nu in range(config.max_iter + 1):
        try:
            d, delta = direction(ev)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(str(exc), block=exc.block, iterate=x.copy()) from exc
        gnorm = float(np.abs(ev.gradient).max())
        if delta >= -eps:
            trace.append(IterationRecord(nu, ev.value, delta, 0.0, gnorm, 0))
            status = Status.CONVERGED
            break
        if nu == config.max_iter:
            trace.append(IterationRecord(nu, ev.value, delta, 0.0, gnorm, 0))
            break
        t, x_new, nback, ok = line_search(spec, x, d, delta, config, k0=ev.value)
        trace.append(IterationRecord(nu, ev.value, delta, t, gnorm, nback))
        if t > 0:
            x = x_new
            ev = evaluate(spec, x)
        if not ok:
            if t > 0:
                _, delta = direction(ev)
            trace.append(IterationRecord(nu + 1, ev.value, delta, 0.0,
                                         float(np.abs(ev.gradient).max()), 0))
            status = Status.STALLED
            break
    return SmootherResult(x_hat=x, status=status, trace=trace, epsilon=eps)


def write_trace_csv(result, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iter", "objective", "delta", "step", "grad_norm", "backtracks"])
        for rec in result.trace:
            out.writerow([rec.iter, repr(rec.objective), repr(rec.delta), repr(rec.step),
                          repr(rec.grad_norm), rec.backtracks])
