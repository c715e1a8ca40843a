#!/usr/bin/python3

import numpy as np
import pytest
from trace_ratio.baselines import dinkelbach_ratio
from trace_ratio.linalg import (
    SpectrumSlice,
    leading_columns,
    sin_theta_distance,
    sym_eig_topk,
    trace_norm,
)
from trace_ratio.problem import TraceRatioProblem
from trace_ratio.scf import (
    SolverOptions,
    SolveStatus,
    bootstrap,
    estimate_linear_rate,
    scf_solve,
    scf_step,
    solve_iterate,
)
from trace_ratio.synthetic import (
    SynthSpec,
    generate,
    generate_sphere_oracle_instance,
    sphere_grid_maximum,
)
from trace_ratio.util import (
    BootstrapError,
    EigensolverContractError,
    NonFiniteError,
    NotOrthonormalError,
    theta_grid,
)


def _assert_monotone(report) -> None:
    f = [r.f_theta for r in report.trajectory]
    for before, after in zip(f, f[1:]):
        assert after >= before - 1e-12 * max(1.0, abs(before))


def test_procrustes_closed_form() -> None:
    base = generate(SynthSpec(n=50, k=5, seed=1))
    problem = base.replace(A=np.zeros((50, 50)), B=np.eye(50), theta=0.0)
    report = scf_solve(problem, opts=SolverOptions(tol=1e-12))
    assert report.converged
    assert report.f_theta == pytest.approx(trace_norm(problem.D), abs=1e-9)
    U, _, Vt = np.linalg.svd(problem.D, full_matrices=False)
    assert sin_theta_distance(report.X, U @ Vt) < 1e-8


def test_eigen_reduction() -> None:
    base = generate(SynthSpec(n=100, k=10, seed=2))
    problem = base.replace(D=np.zeros((100, 10)), theta=0.0)
    report = scf_solve(problem)
    assert report.converged
    assert report.iterations <= 2
    top = sym_eig_topk(problem.A, 10).eigenvalues.sum()
    assert report.f_theta == pytest.approx(top, abs=1e-10)


def test_lda_matches_dinkelbach() -> None:
    base = generate(SynthSpec(n=30, k=3, seed=3))
    problem = base.replace(D=np.zeros((30, 3)), theta=1.0)
    report = scf_solve(problem, opts=SolverOptions(tol=1e-12))
    oracle = dinkelbach_ratio(problem.A, problem.B, 3)
    assert report.converged
    assert report.f_theta == pytest.approx(oracle.rho, abs=1e-8)


@pytest.mark.parametrize("theta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_sphere_grid_global_check(theta) -> None:
    hits = 0
    for seed in range(20):
        problem = generate_sphere_oracle_instance(seed, theta)
        report = scf_solve(problem)
        if report.f_theta >= sphere_grid_maximum(problem) - 1e-3:
            hits += 1
    assert hits >= 18


@pytest.mark.parametrize("theta", theta_grid())
def test_objective_is_monotone(theta) -> None:
    for seed in range(4):
        problem = generate(SynthSpec(n=50, k=5, seed=seed, theta=theta))
        report = scf_solve(problem)
        _assert_monotone(report)
        if report.converged:
            assert report.certificate.failures(tol=1e-7) == []


@pytest.mark.slow
@pytest.mark.parametrize("n,k", [(50, 5), (50, 20), (200, 5), (200, 20)])
def test_objective_is_monotone_full_suite(n, k) -> None:
    for seed in range(25):
        for theta in theta_grid():
            report = scf_solve(generate(SynthSpec(n=n, k=k, seed=seed, theta=theta)))
            _assert_monotone(report)
            if report.converged:
                assert report.certificate.failures(tol=1e-7) == []


@pytest.mark.slow
@pytest.mark.parametrize("n", [500, 1000])
@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 0.8])
def test_desk_scale_convergence(n, theta) -> None:
    report = scf_solve(generate(SynthSpec(n=n, k=50, seed=0, theta=theta)))
    assert report.converged
    assert report.residual <= 1e-7


def test_trajectory_records() -> None:
    report = scf_solve(generate(SynthSpec(n=20, k=3, seed=5, theta=0.5)))
    assert report.status == SolveStatus.CONVERGED
    assert len(report.trajectory) == report.iterations
    assert [r.iteration for r in report.trajectory] == list(range(1, report.iterations + 1))
    last = report.trajectory[-1]
    assert last.f_theta == report.f_theta
    assert last.residual <= 1e-7
    assert all(0 <= r.step_sintheta <= 1 for r in report.trajectory)


def test_zero_linear_term_converges_in_one_step() -> None:
    problem = TraceRatioProblem(np.diag([1.0, 4.0, 2.0, 3.0]), np.eye(4), None, 0.0, k=2)
    report = scf_solve(problem)
    assert report.iterations == 1
    assert report.f_theta == pytest.approx(7.0)
    assert report.trajectory[0].rank_xtd == 0
    assert report.estimated_rate is None


def test_max_iter_status() -> None:
    problem = generate(SynthSpec(n=20, k=3, seed=6, theta=0.5))
    report = scf_solve(problem, opts=SolverOptions(tol=1e-30, max_iter=1))
    assert report.status == SolveStatus.MAX_ITER
    assert not report.converged
    assert report.iterations == 1


def test_bootstrap_phase() -> None:
    problem = TraceRatioProblem(np.diag([-1.0, 1.0, 2.0, 3.0]), np.eye(4), None, 0.5, k=1)
    report = scf_solve(problem)
    assert report.bootstrap_iterations >= 1
    assert report.converged
    assert report.f_theta == pytest.approx(3.0)


def test_bootstrap_failure() -> None:
    problem = TraceRatioProblem(-np.eye(3), np.eye(3), None, 0.5, k=1)
    with pytest.raises(BootstrapError):
        scf_solve(problem, opts=SolverOptions(max_iter=5))


def test_custom_eigensolver_contract() -> None:
    def bottom_k(E: np.ndarray, k: int) -> SpectrumSlice:
        w, V = np.linalg.eigh(E)
        return SpectrumSlice(eigenvalues=w[:k], basis=V[:, :k], gap=0.0)

    problem = generate(SynthSpec(n=10, k=2, seed=0, theta=0.5))
    with pytest.raises(EigensolverContractError):
        scf_solve(problem, opts=SolverOptions(eigensolver=bottom_k))


def test_custom_eigensolver_accepted() -> None:
    problem = generate(SynthSpec(n=10, k=2, seed=0, theta=0.5))
    reference = scf_solve(problem)
    report = scf_solve(problem, opts=SolverOptions(eigensolver=sym_eig_topk))
    assert report.f_theta == pytest.approx(reference.f_theta, rel=1e-10)


@pytest.mark.parametrize(
    "residuals,rate",
    [
        ([1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], 0.1),
        ([2.0**-i for i in range(20)], 0.5),
        ([1e-1, 1e-2, 1e-3, 1e-4, 1e-5], None),
        ([1e-1, 0.0, 1e-3, 1e-4, 1e-5, 1e-6], None),
    ],
)
def test_estimate_linear_rate(residuals, rate) -> None:
    estimate = estimate_linear_rate(residuals)
    if rate is None:
        assert estimate is None
    else:
        assert estimate == pytest.approx(rate)


def test_solver_options_validation() -> None:
    with pytest.raises(ValueError):
        SolverOptions(tol=0.0).validate()
    with pytest.raises(ValueError):
        SolverOptions(bootstrap_theta=0.5).validate()


def _iterates(problem: TraceRatioProblem, steps: int):
    """(X, E, Xhat, X_next) for the first SCF steps after bootstrapping"""
    opts = SolverOptions()
    X, _ = bootstrap(problem, leading_columns(problem.n, problem.k), opts)
    for _ in range(steps):
        E = problem.build_E(X)
        Xhat = sym_eig_topk(E, problem.k).basis
        X_next = scf_step(problem, X, E, opts).X
        yield X, E, Xhat, X_next
        X = X_next


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 1.0])
def test_iterates_make_xtd_symmetric_psd(theta) -> None:
    problem = generate(SynthSpec(n=40, k=4, seed=3, theta=theta))
    norm_f = np.linalg.norm(problem.D, "fro")
    norm_2 = np.linalg.norm(problem.D, 2)
    report = scf_solve(problem)
    assert report.trajectory
    for record in report.trajectory:
        assert record.xtd_symmetry_defect <= 1e-10 * norm_f
        assert record.xtd_min_eigenvalue >= -1e-10 * norm_2
    for _, _, _, X in _iterates(problem, 10):
        H = X.T @ problem.D
        assert np.trace(H) == pytest.approx(trace_norm(H), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("rotations", [10, pytest.param(100, marks=pytest.mark.slow)])
@pytest.mark.parametrize("theta", [0.0, 0.5, 1.0])
def test_each_step_is_best_rotation(theta, rotations) -> None:
    rng = np.random.default_rng(31)
    problem = generate(SynthSpec(n=20, k=3, seed=7, theta=theta))
    for _, _, _, X in _iterates(problem, 8):
        f = problem.objective(X)
        for _ in range(rotations):
            Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            assert f >= problem.objective(X @ Q) - 1e-10


@pytest.mark.parametrize("theta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_strict_increase_on_eigenvalue_gain(theta) -> None:
    gains = 0
    for seed in range(5):
        problem = generate(SynthSpec(n=30, k=3, seed=seed, theta=theta))
        for X, E, Xhat, X_next in _iterates(problem, 6):
            before = np.trace(X.T @ E @ X)
            if np.trace(Xhat.T @ E @ Xhat) > before + 1e-10:
                gains += 1
                assert problem.objective(X_next) > problem.objective(X)
    assert gains > 0


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 0.8, 1.0])
def test_final_step_is_small(theta) -> None:
    converged = 0
    for seed in range(3):
        problem = generate(SynthSpec(n=50, k=5, seed=seed, theta=theta))
        report = scf_solve(problem, opts=SolverOptions(tol=1e-9))
        if report.converged and report.trajectory:
            converged += 1
            assert report.trajectory[-1].step_sintheta < 1e-6
    assert converged > 0


def test_start_must_be_orthonormal() -> None:
    problem = generate(SynthSpec(n=400, k=2, seed=0, theta=0.0))
    X0 = leading_columns(400, 2)
    X0[0, 0] += 5e-12
    with pytest.raises(NotOrthonormalError):
        scf_solve(problem, X0)
    with pytest.raises(NotOrthonormalError):
        bootstrap(problem, X0, SolverOptions())
    # Solver iterates at this size are orthonormal to O(n eps) only
    report = solve_iterate(problem, X0, SolverOptions(max_iter=5))
    assert report.iterations <= 5


def test_overflow_is_reported() -> None:
    A = np.diag([1e308, 1e308, 1.0, 0.0])
    problem = TraceRatioProblem(A, np.eye(4), None, 0.0, k=2)
    with pytest.raises(NonFiniteError):
        scf_solve(problem)


def test_nan_input_is_rejected() -> None:
    A = np.eye(4)
    A[2, 2] = np.nan
    with pytest.raises(NonFiniteError):
        TraceRatioProblem(A, np.eye(4), None, 0.5, k=2)
    D = np.ones((4, 2))
    D[0, 1] = np.inf
    with pytest.raises(NonFiniteError):
        TraceRatioProblem(np.eye(4), np.eye(4), D, 0.5)
