"""State-space problem description.

A state sequence is an ``(N, n)`` float array whose row ``k`` is the state
at time step ``k`` (0-based). The process model predicts row ``k`` from row
``k - 1``; row 0 is predicted by the known constant ``g0``. Measurements are
``(N, m)`` arrays.

Noise is described by precisions (inverse covariances) rather than
covariances, so a missing measurement component is simply a zero row and
column of the measurement precision at that step.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatch, NotPositiveDefinite

__all__ = [
    "ProcessModel",
    "LinearProcess",
    "FunctionProcess",
    "MeasurementModel",
    "LinearMeasurement",
    "FunctionMeasurement",
    "NoisePartition",
    "PrecisionSpec",
    "ProblemSpec",
    "residuals",
    "student_log_density",
    "cauchy_tail_ratio",
    "fd_jacobian",
]


# ---------------------------------------------------------------- process

class ProcessModel:
    """Base class for process models ``x[k] = g(k, x[k-1]) + w[k]``.

    Subclasses implement :meth:`g` and :meth:`jacobian` for a single step;
    :meth:`predict` and :meth:`jacobians` are vectorized hooks that default
    to looping and may be overridden for speed.
    """

    n: int
    g0: np.ndarray

    def g(self, k, x_prev):
        raise NotImplementedError

    def jacobian(self, k, x_prev):
        raise NotImplementedError

    def predict(self, x):
        """Predictions for rows ``1..N-1`` of ``x``, shape ``(N - 1, n)``."""
        return np.array([self.g(k, x[k - 1]) for k in range(1, len(x))]).reshape(-1, self.n)

    def jacobians(self, x):
        """Jacobians for rows ``1..N-1`` of ``x``, shape ``(N - 1, n, n)``."""
        return np.array([self.jacobian(k, x[k - 1])
                         for k in range(1, len(x))]).reshape(-1, self.n, self.n)


class LinearProcess(ProcessModel):
    """``g(k, x) = G_k x`` with ``G`` shared ``(n, n)`` or per step ``(N, n, n)``.

    For per-step matrices, ``G[k]`` maps ``x[k-1]`` to the prediction of
    ``x[k]``; ``G[0]`` is unused.
    """

    def __init__(self, G, g0):
        self.G = np.asarray(G, dtype=float)
        self.g0 = np.asarray(g0, dtype=float).ravel()
        self.n = self.g0.size
        if self.G.shape[-2:] != (self.n, self.n):
            raise DimensionMismatch(f"G has shape {self.G.shape}, expected (..., {self.n}, {self.n})")

    def _G(self, k):
        return self.G if self.G.ndim == 2 else self.G[k]

    def g(self, k, x_prev):
        return self._G(k) @ x_prev

    def jacobian(self, k, x_prev):
        return self._G(k).copy()

    def predict(self, x):
        if self.G.ndim == 2:
            return x[:-1] @ self.G.T
        return np.einsum("kij,kj->ki", self.G[1:len(x)], x[:-1])

    def jacobians(self, x):
        if self.G.ndim == 2:
            return np.broadcast_to(self.G, (len(x) - 1, self.n, self.n)).copy()
        return self.G[1:len(x)].copy()


class FunctionProcess(ProcessModel):
    """Process model from plain callables ``g(k, x_prev)`` and ``jac(k, x_prev)``."""

    def __init__(self, g, jac, g0):
        self._g = g
        self._jac = jac
        self.g0 = np.asarray(g0, dtype=float).ravel()
        self.n = self.g0.size

    def g(self, k, x_prev):
        return np.asarray(self._g(k, x_prev), dtype=float)

    def jacobian(self, k, x_prev):
        return np.asarray(self._jac(k, x_prev), dtype=float)


# ---------------------------------------------------------------- measurement

class MeasurementModel:
    """Base class for measurement models ``z[k] = h(k, x[k]) + v[k]``.

    ``z`` is an ``(N, m)`` array of measurements. Entries for missing
    components can hold any finite value; they are disabled through the
    precision, not here.
    """

    m: int
    z: np.ndarray

    def h(self, k, x):
        raise NotImplementedError

    def jacobian(self, k, x):
        raise NotImplementedError

    def predict(self, x):
        return np.array([self.h(k, x[k]) for k in range(len(x))]).reshape(-1, self.m)

    def jacobians(self, x):
        return np.array([self.jacobian(k, x[k])
                         for k in range(len(x))]).reshape(-1, self.m, x.shape[1])


class LinearMeasurement(MeasurementModel):
    """``h(k, x) = H_k x`` with ``H`` shared ``(m, n)`` or per step ``(N, m, n)``."""

    def __init__(self, H, z):
        self.H = np.asarray(H, dtype=float)
        self.m = self.H.shape[-2]
        self.z = np.asarray(z, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z.reshape(-1, self.m)
        if self.z.ndim != 2 or self.z.shape[1] != self.m:
            raise DimensionMismatch(f"z has {self.z.shape[1]} columns, H has {self.m} rows")

    def _H(self, k):
        return self.H if self.H.ndim == 2 else self.H[k]

    def h(self, k, x):
        return self._H(k) @ x

    def jacobian(self, k, x):
        return self._H(k).copy()

    def predict(self, x):
        if self.H.ndim == 2:
            return x @ self.H.T
        return np.einsum("kij,kj->ki", self.H[:len(x)], x)

    def jacobians(self, x):
        if self.H.ndim == 2:
            return np.broadcast_to(self.H, (len(x),) + self.H.shape).copy()
        return self.H[:len(x)].copy()


class FunctionMeasurement(MeasurementModel):
    """Measurement model from callables ``h(k, x)`` and ``jac(k, x)``."""

    def __init__(self, h, jac, z):
        self._h = h
        self._jac = jac
        self.z = np.asarray(z, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        self.m = self.z.shape[1]

    def h(self, k, x):
        return np.atleast_1d(np.asarray(self._h(k, x), dtype=float))

    def jacobian(self, k, x):
        return np.atleast_2d(np.asarray(self._jac(k, x), dtype=float))


# ---------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoisePartition:
    """Which residual components follow a Student's t law.

    Indices are 0-based. Every component not listed as Student is Gaussian.
    ``r`` and ``s`` are the process and measurement degrees of freedom.
    """

    n: int
    m: int
    proc_student: tuple = ()
    meas_student: tuple = ()
    r: float = 4.0
    s: float = 4.0

    def __post_init__(self):
        ps = tuple(sorted(set(int(i) for i in self.proc_student)))
        ms = tuple(sorted(set(int(i) for i in self.meas_student)))
        if any(i < 0 or i >= self.n for i in ps):
            raise DimensionMismatch(f"process Student indices {ps} out of range for n={self.n}")
        if any(i < 0 or i >= self.m for i in ms):
            raise DimensionMismatch(f"measurement Student indices {ms} out of range for m={self.m}")
        if ps and not self.r > 0:
            raise ValueError("process degrees of freedom must be positive")
        if ms and not self.s > 0:
            raise ValueError("measurement degrees of freedom must be positive")
        object.__setattr__(self, "proc_student", ps)
        object.__setattr__(self, "meas_student", ms)

    @property
    def proc_gauss(self):
        return tuple(i for i in range(self.n) if i not in self.proc_student)

    @property
    def meas_gauss(self):
        return tuple(i for i in range(self.m) if i not in self.meas_student)

    def proc_mask(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.proc_student)] = True
        return mask

    def meas_mask(self):
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.meas_student)] = True
        return mask


def _as_stack(a, N, d, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0 and d == 1:
        a = a.reshape(1, 1)
    if a.ndim == 2:
        a = np.broadcast_to(a, (N, d, d))
    if a.shape != (N, d, d):
        raise DimensionMismatch(f"{name} must be ({d}, {d}) or ({N}, {d}, {d}), got {a.shape}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class PrecisionSpec:
    """Per-step process and measurement precisions, shapes ``(N, n, n)`` and ``(N, m, m)``."""

    Qinv: np.ndarray
    Rinv: np.ndarray

    @classmethod
    def build(cls, Qinv, Rinv, N, n, m):
        """Broadcast shared ``(n, n)`` / ``(m, m)`` precisions to all steps."""
        return cls(_as_stack(Qinv, N, n, "Qinv"), _as_stack(Rinv, N, m, "Rinv"))


def _check_partitioned(P, student, name, definite):
    d = P.shape[-1]
    S = np.zeros(d, dtype=bool)
    S[list(student)] = True
    cross = P[:, S][:, :, ~S]
    if cross.size and np.abs(cross).max() > 0:
        raise ValueError(f"{name} couples Student and Gaussian components")
    if np.abs(P - np.swapaxes(P, 1, 2)).max() > 1e-12 * max(np.abs(P).max(), 1.0):
        raise ValueError(f"{name} is not symmetric")
    for idx in (S, ~S):
        if not idx.any():
            continue
        blocks = P[:, idx][:, :, idx]
        eig = np.linalg.eigvalsh(blocks)
        scale = np.maximum(np.abs(eig).max(axis=1), 1e-300)
        if definite:
            bad = np.nonzero(eig.min(axis=1) <= 1e-14 * scale)[0]
        else:
            bad = np.nonzero(eig.min(axis=1) < -1e-12 * scale)[0]
        if bad.size:
            kind = "positive definite" if definite else "positive semidefinite"
            raise NotPositiveDefinite(f"{name}[{bad[0]}] is not {kind} on a partition block",
                                      block=int(bad[0]) + 1)


@dataclass(frozen=True)
class ProblemSpec:
    """A complete smoothing problem: models, noise partition and precisions."""

    process: ProcessModel
    measurement: MeasurementModel
    partition: NoisePartition
    precisions: PrecisionSpec = field(repr=False)

    def __post_init__(self):
        N, m = self.measurement.z.shape
        n = self.process.n
        if (self.partition.n, self.partition.m) != (n, m):
            raise DimensionMismatch(
                f"partition is for (n, m) = {(self.partition.n, self.partition.m)}, problem has {(n, m)}")
        if self.precisions.Qinv.shape != (N, n, n) or self.precisions.Rinv.shape != (N, m, m):
            raise DimensionMismatch("precision stacks do not match (N, n, m)")
        if not np.all(np.isfinite(self.measurement.z)):
            raise ValueError("measurements must be finite (use zero precision for missing values)")
        _check_partitioned(self.precisions.Qinv, self.partition.proc_student, "Qinv", True)
        _check_partitioned(self.precisions.Rinv, self.partition.meas_student, "Rinv", False)

    @classmethod
    def build(cls, process, measurement, partition, Qinv, Rinv):
        N, m = measurement.z.shape
        return cls(process, measurement, partition,
                   PrecisionSpec.build(Qinv, Rinv, N, process.n, m))

    @property
    def N(self):
        return self.measurement.z.shape[0]

    @property
    def n(self):
        return self.process.n

    @property
    def m(self):
        return self.measurement.m

    def with_partition(self, partition):
        return ProblemSpec(self.process, self.measurement, partition, self.precisions)

    def null_state(self):
        return np.zeros((self.N, self.n))


def _check_state(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.N, spec.n):
        raise DimensionMismatch(f"state sequence has shape {x.shape}, expected {(spec.N, spec.n)}")
    return x


def residuals(spec, x):
    """Process residuals ``w`` ``(N, n)`` and measurement residuals ``v`` ``(N, m)``."""
    x = _check_state(spec, x)
    w = x.copy()
    w[0] -= spec.process.g0
    if spec.N > 1:
        w[1:] -= spec.process.predict(x)
    v = spec.measurement.z - spec.measurement.predict(x)
    return w, v


# ---------------------------------------------------------------- densities

def student_log_density(v, mu, Rinv, s):
    """Log density of the multivariate Student's t with scale ``R = Rinv^-1``.

    The normalization uses ``det(pi s R)``; ``log det R`` is taken as
    ``-log det Rinv`` so only the precision is needed.
    """
    diff = np.atleast_1d(np.asarray(v, dtype=float) - np.asarray(mu, dtype=float))
    Rinv = np.atleast_2d(np.asarray(Rinv, dtype=float))
    m = diff.size
    try:
        c = np.linalg.cholesky(Rinv)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("Rinv is not positive definite") from None
    logdet_rinv = 2.0 * np.log(np.diag(c)).sum()
    q = diff @ Rinv @ diff
    return (gammaln((s + m) / 2.0) - gammaln(s / 2.0)
            - 0.5 * (m * np.log(np.pi * s) - logdet_rinv)
            - 0.5 * (s + m) * np.log1p(q / s))


def cauchy_tail_ratio(t):
    """``P(|y| > 2t | |y| > t)`` for a standard Cauchy variable.

    Evaluated as ``arctan(1/2t) / arctan(1/t)``, algebraically equal to
    ``(pi/2 - arctan 2t) / (pi/2 - arctan t)`` but free of cancellation.
    """
    t = float(t)
    if not t > 0:
        raise ValueError("t must be positive")
    return np.arctan(0.5 / t) / np.arctan(1.0 / t)


def fd_jacobian(f, x, step=None):
    """Central finite-difference Jacobian of ``f`` at ``x``.

    Default step is ``1e-6 * (1 + max|x|)``.
    """
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.abs(x).max()) if step is None else step
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)
