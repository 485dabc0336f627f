"""Mixed Gaussian / Student's t negative log likelihood of a state sequence.

For process residuals ``w_k`` and measurement residuals ``v_k`` the
objective is::

    K(x) = 1/2 sum_k [ s log(1 + |v_k^S|^2 / s) + |v_k^G|^2
                     + r log(1 + |w_k^S|^2 / r) + |w_k^G|^2 ]

where ``S``/``G`` select the Student and Gaussian components and each norm
uses the matching restriction of the step's precision matrix.

Curvature of each Student term is approximated by its Gaussian-form
curvature scaled by ``dof / (dof + q)`` (``q`` the squared Mahalanobis norm
of that block). This keeps the Gauss-Newton matrix positive definite while
shrinking the influence of large residuals.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .linalg import BlockTridiagonalSystem
from .model import _check_state, residuals

__all__ = [
    "ObjectiveEval",
    "ConvexCompositeSplit",
    "student_weight",
    "objective_value",
    "evaluate",
    "gradient_check",
]


@dataclass(frozen=True)
class ConvexCompositeSplit:
    """``K = f_value + gauss_quad``: Student part plus Gaussian quadratic."""

    f_value: float
    gauss_quad: float


@dataclass(frozen=True)
class ObjectiveEval:
    """Objective value, gradient ``(N, n)`` and Gauss-Newton matrix at a state sequence.

    ``proc_weights[k]`` and ``meas_weights[k]`` are the Student weights of
    step ``k``; they are 1 where the corresponding Student set is empty.
    """

    value: float
    gradient: np.ndarray
    hessian: BlockTridiagonalSystem
    proc_weights: np.ndarray
    meas_weights: np.ndarray
    split: ConvexCompositeSplit
    w: np.ndarray
    v: np.ndarray


def student_weight(q, dof):
    """``dof / (dof + q)``, the curvature scale applied to a Student block."""
    return dof / (dof + np.asarray(q, dtype=float))


def _split_precisions(P, mask):
    outer_s = mask[:, None] & mask[None, :]
    outer_g = ~mask[:, None] & ~mask[None, :]
    return P * outer_s, P * outer_g


def _terms(spec, w, v):
    part = spec.partition
    Qs, Qg = _split_precisions(spec.precisions.Qinv, part.proc_mask())
    Rs, Rg = _split_precisions(spec.precisions.Rinv, part.meas_mask())
    qws = np.einsum("ki,kij,kj->k", w, Qs, w)
    qwg = np.einsum("ki,kij,kj->k", w, Qg, w)
    qvs = np.einsum("ki,kij,kj->k", v, Rs, v)
    qvg = np.einsum("ki,kij,kj->k", v, Rg, v)
    return (Qs, Qg, qws, qwg), (Rs, Rg, qvs, qvg)


def _student_sum(q, dof, present):
    if not present:
        return 0.0
    return float(dof * np.log1p(q / dof).sum())


def objective_value(spec, x):
    """``K(x)`` alone, without gradient or curvature."""
    w, v = residuals(spec, x)
    (_, _, qws, qwg), (_, _, qvs, qvg) = _terms(spec, w, v)
    part = spec.partition
    f = _student_sum(qws, part.r, part.proc_student) + _student_sum(qvs, part.s, part.meas_student)
    return 0.5 * (f + qwg.sum() + qvg.sum())


def evaluate(spec, x, hessian=True):
    """Value, analytic gradient and block-tridiagonal curvature of ``K`` at ``x``.

    Parameters
    ----------
    spec : ProblemSpec
    x : ndarray, shape (N, n)
    hessian : bool
        Skip assembling the curvature matrix when False (``hessian`` field
        is then None).
    """
    x = _check_state(spec, x)
    part = spec.partition
    w, v = residuals(spec, x)
    (Qs, Qg, qws, qwg), (Rs, Rg, qvs, qvg) = _terms(spec, w, v)

    omega = student_weight(qws, part.r) if part.proc_student else np.ones(spec.N)
    tau = student_weight(qvs, part.s) if part.meas_student else np.ones(spec.N)
    f = _student_sum(qws, part.r, part.proc_student) + _student_sum(qvs, part.s, part.meas_student)
    gq = qwg.sum() + qvg.sum()

    # weighted precisions: Student blocks scaled, Gaussian blocks untouched
    wq = omega[:, None, None] * Qs + Qg
    wr = tau[:, None, None] * Rs + Rg

    gjac = spec.process.jacobians(x) if spec.N > 1 else np.zeros((0, spec.n, spec.n))
    hjac = spec.measurement.jacobians(x)

    ew = np.einsum("kij,kj->ki", wq, w)
    ev = np.einsum("kij,kj->ki", wr, v)
    grad = ew - np.einsum("kji,kj->ki", hjac, ev)
    if spec.N > 1:
        grad[:-1] -= np.einsum("kji,kj->ki", gjac, ew[1:])

    C = None
    if hessian:
        diag, sub = kernels.assemble_blocks(
            np.ascontiguousarray(wq), np.ascontiguousarray(gjac),
            np.ascontiguousarray(hjac), np.ascontiguousarray(wr))
        C = BlockTridiagonalSystem(diag, sub)

    return ObjectiveEval(
        value=0.5 * (f + gq),
        gradient=grad,
        hessian=C,
        proc_weights=omega,
        meas_weights=tau,
        split=ConvexCompositeSplit(0.5 * f, 0.5 * gq),
        w=w,
        v=v,
    )


def gradient_check(spec, x, step=None):
    """Largest ``|analytic - central FD| / (1 + |analytic|)`` over all coordinates.

    The default step is ``1e-5 * (1 + max|x|)``, a compromise between
    truncation and round-off for objectives of size up to ~1e4.
    """
    x = np.array(x, dtype=float)
    a = evaluate(spec, x, hessian=False).gradient
    h = 1e-5 * (1.0 + np.abs(x).max()) if step is None else step
    fd = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd[idx] = (objective_value(spec, xp) - objective_value(spec, xm)) / (2 * h)
    return float(np.max(np.abs(a - fd) / (1.0 + np.abs(a))))
