import numpy as np
import pytest

from conftest import scenario_problem
from tksmooth import (LinearMeasurement, LinearProcess, NoisePartition, ProblemSpec, evaluate,
                      factor, gradient_check, objective_value)
from tksmooth.objective import student_weight


def scalar_instance(partition):
    """n = m = N = 1, g = 0, g0 = 0, h(x) = x, z = 2, unit precisions."""
    return ProblemSpec.build(LinearProcess([[0.0]], [0.0]), LinearMeasurement([[1.0]], [[2.0]]),
                             partition, [[1.0]], [[1.0]])


def test_scalar_student_instance():
    ev = evaluate(scalar_instance(NoisePartition(1, 1, meas_student=(0,), s=4.0)), np.zeros((1, 1)))
    assert ev.value == pytest.approx(2 * np.log(2), rel=1e-15)
    assert ev.gradient.item() == pytest.approx(-1.0, rel=1e-15)
    assert ev.meas_weights.item() == pytest.approx(0.5, rel=1e-15)
    assert ev.proc_weights.item() == 1.0
    assert ev.hessian.diag.item() == pytest.approx(1.5, rel=1e-15)


def test_scalar_gaussian_instance():
    ev = evaluate(scalar_instance(NoisePartition(1, 1)), np.zeros((1, 1)))
    assert ev.value == 2.0
    assert ev.gradient.item() == -2.0
    assert ev.hessian.diag.item() == 2.0


def test_scalar_fd_gradient():
    spec = scalar_instance(NoisePartition(1, 1, meas_student=(0,), s=4.0))
    h = 1e-6
    fd = (objective_value(spec, np.array([[h]])) - objective_value(spec, np.array([[-h]]))) / (2 * h)
    assert fd == pytest.approx(-1.0, abs=1e-9)


def zero_residual_spec(partition):
    G = np.array([[1.0, 0.0], [0.1, 1.0]])
    g0 = np.array([0.3, -1.0])
    x = np.empty((6, 2))
    prev = g0
    for k in range(6):
        x[k] = prev
        prev = G @ prev
    H = np.array([[0.0, 1.0]])
    spec = ProblemSpec.build(LinearProcess(G, g0), LinearMeasurement(H, x @ H.T), partition,
                             np.diag([2.0, 3.0]), [[4.0]])
    return spec, x


@pytest.mark.parametrize("part", [NoisePartition(2, 1), NoisePartition(2, 1, (0, 1), (0,))])
def test_zero_residuals(part):
    spec, x = zero_residual_spec(part)
    ev = evaluate(spec, x)
    assert ev.value == 0.0
    assert np.abs(ev.gradient).max() < 1e-14
    np.testing.assert_array_equal(ev.proc_weights, 1.0)
    np.testing.assert_array_equal(ev.meas_weights, 1.0)
    gauss = evaluate(spec.with_partition(NoisePartition(2, 1)), x).hessian
    np.testing.assert_allclose(ev.hessian.diag, gauss.diag, rtol=1e-15)
    assert gradient_check(spec, x, step=1e-6) < 1e-8


def test_split_adds_up(rng):
    scen, truth, spec = scenario_problem("jump-two-sensor", "trend-robust")
    x = rng.standard_normal(truth.shape)
    ev = evaluate(spec, x)
    assert ev.split.f_value >= 0 and ev.split.gauss_quad >= 0
    assert ev.split.f_value + ev.split.gauss_quad == pytest.approx(ev.value, rel=1e-14)
    assert ev.value == pytest.approx(objective_value(spec, x), rel=1e-15)


def test_curvature_is_gauss_newton_matrix(rng):
    """Dense J^T W J built from explicit residual Jacobians equals the assembled blocks."""
    scen, truth, spec = scenario_problem("vdp", "double-t")
    x = truth + 0.3 * rng.standard_normal(truth.shape)
    ev = evaluate(spec, x)
    N, n, m = spec.N, spec.n, spec.m
    Jw = np.zeros((N * n, N * n))
    Jv = np.zeros((N * m, N * n))
    gj = spec.process.jacobians(x)
    hj = spec.measurement.jacobians(x)
    for k in range(N):
        Jw[k * n:(k + 1) * n, k * n:(k + 1) * n] = np.eye(n)
        if k:
            Jw[k * n:(k + 1) * n, (k - 1) * n:k * n] = -gj[k - 1]
        Jv[k * m:(k + 1) * m, k * n:(k + 1) * n] = -hj[k]
    from scipy.linalg import block_diag
    Wq = block_diag(*(om * Q for om, Q in zip(ev.proc_weights, spec.precisions.Qinv)))
    Wr = block_diag(*(ta * R for ta, R in zip(ev.meas_weights, spec.precisions.Rinv)))
    dense = Jw.T @ Wq @ Jw + Jv.T @ Wr @ Jv
    np.testing.assert_allclose(ev.hessian.to_dense(), dense, rtol=1e-12, atol=1e-10)
    w = ev.w.ravel()
    v = ev.v.ravel()
    np.testing.assert_allclose(ev.gradient.ravel(), Jw.T @ Wq @ w + Jv.T @ Wr @ v,
                               rtol=1e-12, atol=1e-10)


def test_student_weight_examples():
    assert student_weight(0.0, 4.0) == 1.0
    assert student_weight(4.0, 4.0) == 0.5
    q = np.logspace(-3, 12, 50)
    w = student_weight(q, 4.0)
    assert np.all(np.diff(w) < 0) and w[-1] < 1e-11


@pytest.mark.parametrize("name", ["spline", "vdp", "jump", "jump-two-sensor"])
def test_curvature_factorizes_at_random_states(name):
    preset = "trend-robust" if name == "jump-two-sensor" else "double-t"
    scen, truth, spec = scenario_problem(name, preset)
    gen = np.random.default_rng(7)
    for _ in range(10):
        factor(evaluate(spec, 2.0 * gen.standard_normal(truth.shape)).hessian)


def test_missing_measurement_contributes_nothing(rng):
    G = np.array([[1.0, 0.0], [0.2, 1.0]])
    H = np.array([[0.0, 1.0]])
    z = rng.standard_normal((8, 1))
    Rinv = np.ones((8, 1, 1))
    Rinv[3] = 0.0
    part = NoisePartition(2, 1, (), (0,))
    base = ProblemSpec.build(LinearProcess(G, [0.0, 0.0]), LinearMeasurement(H, z), part, np.eye(2), Rinv)
    z2 = z.copy()
    z2[3] = 1e6
    moved = ProblemSpec.build(LinearProcess(G, [0.0, 0.0]), LinearMeasurement(H, z2), part, np.eye(2), Rinv)
    x = rng.standard_normal((8, 2))
    a, b = evaluate(base, x), evaluate(moved, x)
    assert a.value == b.value
    np.testing.assert_array_equal(a.gradient, b.gradient)
    np.testing.assert_array_equal(a.hessian.diag, b.hessian.diag)


def _permuted(spec, perm):
    """Relabel state components: x' = x[:, perm]."""
    P = np.eye(spec.n)[perm]
    G = spec.process.G
    H = spec.measurement.H
    Q = spec.precisions.Qinv[:, perm][:, :, perm]
    part = spec.partition
    inv = np.argsort(perm)
    new_part = NoisePartition(part.n, part.m, tuple(sorted(int(inv[i]) for i in part.proc_student)),
                              part.meas_student, part.r, part.s)
    return ProblemSpec.build(LinearProcess(P @ G @ P.T, P @ spec.process.g0),
                             LinearMeasurement(H @ P.T, spec.measurement.z), new_part, Q,
                             spec.precisions.Rinv)


def test_permutation_of_student_components(rng):
    n = 3
    A = rng.standard_normal((n, n)) * 0.3 + np.eye(n)
    M = rng.standard_normal((n, n))
    Q = M @ M.T + n * np.eye(n)
    z = rng.standard_normal((6, 1))
    spec = ProblemSpec.build(LinearProcess(A, rng.standard_normal(n)),
                             LinearMeasurement(rng.standard_normal((1, n)), z),
                             NoisePartition(n, 1, (0, 1, 2), (), r=3.0), Q, [[2.0]])
    perm = [2, 0, 1]
    x = rng.standard_normal((6, n))
    other = _permuted(spec, perm)
    assert objective_value(other, x[:, perm]) == pytest.approx(objective_value(spec, x), rel=1e-13)
    np.testing.assert_allclose(evaluate(other, x[:, perm]).gradient, evaluate(spec, x).gradient[:, perm],
                               rtol=1e-12, atol=1e-12)


def test_permutation_within_student_block(rng):
    # two Student components swapped, one Gaussian left in place
    n = 3
    Q = np.zeros((n, n))
    Q[:2, :2] = [[3.0, 0.4], [0.4, 2.0]]
    Q[2, 2] = 1.5
    spec = ProblemSpec.build(LinearProcess(np.eye(n), np.zeros(n)),
                             LinearMeasurement(np.ones((1, n)), rng.standard_normal((5, 1))),
                             NoisePartition(n, 1, (0, 1), (), r=2.5), Q, [[1.0]])
    x = 3 * rng.standard_normal((5, n))
    other = _permuted(spec, [1, 0, 2])
    assert objective_value(other, x[:, [1, 0, 2]]) == pytest.approx(objective_value(spec, x), rel=1e-13)


def test_gaussian_limit_per_block(rng):
    spec, _ = zero_residual_spec(NoisePartition(2, 1))
    big = spec.with_partition(NoisePartition(2, 1, (0, 1), (0,), r=1e9, s=1e9))
    x = rng.standard_normal((6, 2))
    assert objective_value(big, x) == pytest.approx(objective_value(spec, x), rel=1e-6)
