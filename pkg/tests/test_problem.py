#!/usr/bin/python3

import numpy as np
import pytest
from trace_ratio.linalg import leading_columns, polar_orthogonal_factor, sym_eig_topk, trace_norm
from trace_ratio.problem import TraceRatioProblem
from trace_ratio.scf import SolverOptions, scf_solve
from trace_ratio.synthetic import SynthSpec, generate
from trace_ratio.util import DenominatorError, DimensionError, NormMode, ProblemError


def _random_orthonormal(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return Q


@pytest.fixture
def small_problem() -> TraceRatioProblem:
    return generate(SynthSpec(n=8, k=2, seed=11, theta=0.5))


def test_residual_of_known_point() -> None:
    problem = TraceRatioProblem(np.diag([1.0, 2.0]), np.eye(2), None, 0.0, k=1)
    X = np.array([[1.0], [1.0]]) / np.sqrt(2)
    assert problem.nepv_residual(X) == pytest.approx(0.25)
    assert problem.objective(X) == pytest.approx(1.5)


def test_residual_vanishes_at_eigenbasis() -> None:
    A = np.diag([1.0, 2.0, 5.0, 7.0])
    problem = TraceRatioProblem(A, np.eye(4), None, 0.0, k=2)
    X = sym_eig_topk(A, 2).basis
    assert problem.nepv_residual(X) < 1e-15
    assert problem.nepv_residual(X, NormMode.ONE) < 1e-15


def test_objective_breakdown(small_problem) -> None:
    X = leading_columns(8, 2)
    parts = small_problem.evaluate(X)
    assert parts.f_theta == pytest.approx(parts.g_theta + parts.h_theta)
    assert parts.numerator == pytest.approx(
        np.trace(X.T @ small_problem.A @ X) + np.trace(X.T @ small_problem.D)
    )
    assert parts.denominator == pytest.approx(np.trace(X.T @ small_problem.B @ X))


def test_matrices_are_read_only_copies() -> None:
    A = np.diag([1.0, 2.0, 3.0])
    problem = TraceRatioProblem(A, np.eye(3), None, 0.0, k=1)
    A[0, 0] = 10.0
    assert problem.A[0, 0] == 1.0
    with pytest.raises(ValueError):
        problem.A[0, 0] = 5.0


@pytest.mark.parametrize(
    "A,B,theta,error",
    [
        (np.eye(3), np.eye(3), 1.5, ProblemError),
        (np.eye(3), -np.eye(3), 0.5, ProblemError),
        (np.eye(3), np.diag([1.0, 0.0, 0.0]), 0.5, ProblemError),
        (np.triu(np.ones((3, 3))), np.eye(3), 0.5, DimensionError),
    ],
)
def test_invalid_problems(A, B, theta, error) -> None:
    with pytest.raises(error):
        TraceRatioProblem(A, B, None, theta, k=1)


def test_symmetrize_option() -> None:
    problem = TraceRatioProblem(np.triu(np.ones((3, 3))), np.eye(3), None, 0.5, k=1, symmetrize=True)
    assert np.array_equal(problem.A, problem.A.T)


def test_denominator_guard() -> None:
    B = np.diag([0.0, 1.0, 1.0])
    with pytest.raises(ProblemError):
        TraceRatioProblem(np.eye(3), B, None, 0.5, k=1)
    problem = TraceRatioProblem(np.eye(3), B, None, 0.5, k=1, check=False)
    with pytest.raises(DenominatorError):
        problem.objective(leading_columns(3, 1))


def test_shift_numerator(small_problem) -> None:
    X = leading_columns(8, 2)
    shifted = small_problem.shift_numerator(3.0)
    assert shifted.numerator(X) == pytest.approx(small_problem.numerator(X) + 3.0)


@pytest.mark.parametrize(
    "problems,rotations", [(20, 20), pytest.param(100, 100, marks=pytest.mark.slow)]
)
def test_best_rotation_beats_random_rotations(problems, rotations) -> None:
    rng = np.random.default_rng(5)
    for seed in range(problems):
        problem = generate(SynthSpec(n=10, k=3, seed=seed, theta=0.3))
        Xt = _random_orthonormal(10, 3, rng)
        best, rank = problem.best_rotation(Xt)
        f_best = problem.objective(best)
        assert rank == 3
        assert f_best == pytest.approx(problem.rotation_bound(Xt), rel=1e-12)
        for _ in range(rotations):
            Q = _random_orthonormal(3, 3, rng)
            assert f_best >= problem.objective(Xt @ Q) - 1e-10


@pytest.mark.parametrize("theta", [0.0, 0.5, 1.0])
def test_objective_is_rotation_invariant_without_linear_term(theta) -> None:
    rng = np.random.default_rng(9)
    base = generate(SynthSpec(n=12, k=4, seed=2, theta=theta))
    problem = base.replace(D=np.zeros((12, 4)))
    for _ in range(20):
        X = _random_orthonormal(12, 4, rng)
        f = problem.objective(X)
        Q = _random_orthonormal(4, 4, rng)
        assert problem.objective(X @ Q) == pytest.approx(f, rel=1e-12, abs=1e-12)
        best, rank = problem.best_rotation(X)
        assert rank == 0
        assert np.array_equal(best, X)


def test_rotation_maximum_is_trace_norm() -> None:
    rng = np.random.default_rng(13)
    for _ in range(50):
        S = rng.standard_normal((4, 4))
        Q, _ = polar_orthogonal_factor(S)
        assert np.trace(Q.T @ S) == pytest.approx(trace_norm(S), rel=1e-12)
        for _ in range(10):
            W = _random_orthonormal(4, 4, rng)
            assert np.trace(W.T @ S) <= trace_norm(S) + 1e-12


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.7, 1.0])
def test_solution_attains_trace_norm(theta) -> None:
    problem = generate(SynthSpec(n=30, k=4, seed=8, theta=theta))
    report = scf_solve(problem)
    H = report.X.T @ problem.D
    assert np.trace(H) == pytest.approx(trace_norm(H), rel=1e-10)
    assert report.f_theta == pytest.approx(problem.rotation_bound(report.X), rel=1e-10)


def test_riemannian_gradient_is_tangent(small_problem) -> None:
    X = leading_columns(8, 2)
    G = small_problem.riemannian_gradient(X)
    XtG = X.T @ G
    assert np.linalg.norm(XtG + XtG.T) < 1e-12


def test_riemannian_gradient_matches_finite_difference(small_problem) -> None:
    rng = np.random.default_rng(2)
    X = _random_orthonormal(8, 2, rng)
    G = small_problem.riemannian_gradient(X)
    # Curve along the tangent direction G retracted by QR
    h = 1e-6

    def f(t):
        Q, R = np.linalg.qr(X + t * G)
        return small_problem.objective(Q * np.sign(np.diag(R)))

    slope = (f(h) - f(-h)) / (2 * h)
    assert slope == pytest.approx(np.sum(G * G), rel=1e-5)


@pytest.mark.parametrize("theta", [0.0, 1.0])
def test_gamma_vanishes_at_endpoints(theta) -> None:
    problem = generate(SynthSpec(n=6, k=2, seed=4, theta=theta))
    rng = np.random.default_rng(0)
    mono = problem.lemma_mono_quantities(
        _random_orthonormal(6, 2, rng), _random_orthonormal(6, 2, rng)
    )
    assert mono.gamma == 0.0


@pytest.mark.parametrize("theta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_monotonicity_estimate(theta) -> None:
    rng = np.random.default_rng(int(theta * 100))
    for seed in range(200):
        problem = generate(SynthSpec(n=7, k=2, seed=seed, theta=theta))
        X = _random_orthonormal(7, 2, rng)
        if problem.numerator(X) < 0:
            continue
        Xt = sym_eig_topk(problem.build_E(X), 2).basis
        mono = problem.lemma_mono_quantities(X, Xt)
        assert mono.hypothesis_holds
        assert mono.gamma >= 0
        assert mono.rhs >= mono.lhs - 1e-10 * max(1.0, abs(mono.lhs))


def test_fixed_point_bound() -> None:
    problem = generate(SynthSpec(n=10, k=2, seed=8, theta=0.5))
    report = scf_solve(problem, opts=SolverOptions(tol=1e-12))
    assert report.converged
    rng = np.random.default_rng(1)
    for _ in range(20):
        rhs, lhs = problem.fixed_point_bound(report.X, _random_orthonormal(10, 2, rng))
        assert rhs <= lhs + 1e-8 * max(1.0, abs(lhs))


def test_certificate_at_solution() -> None:
    problem = generate(SynthSpec(n=12, k=3, seed=2, theta=0.5))
    report = scf_solve(problem, opts=SolverOptions(tol=1e-10))
    cert = report.certificate
    assert cert.failures(tol=1e-7) == []
    assert cert.kkt_gradient_norm < 1e-6
    assert cert.rank_xtd == 3


def test_certificate_failures_at_arbitrary_point(small_problem) -> None:
    cert = small_problem.certify(leading_columns(8, 2))
    assert "nepv_residual" in cert.failures(tol=1e-7)
