import numpy as np
import pytest

from sgbh.config import settings
from sgbh.core.exceptions import ConvergenceError, GridMismatchError, NonFiniteError, ValidationError
from sgbh.schemas.fields import FieldPath
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import ModelParams, TruncationLevel
from sgbh.schemas.solver import GalerkinConfig, PicardConfig
from sgbh.services.integrations.presets import ConstantNoise, LipschitzSinNoise, ZeroNoise
from sgbh.services.model_service import truncate_field
from sgbh.services.noise_service import sample_sheet, zero_sheet
from sgbh.services.solver_service import (
    GalerkinSolver,
    MildSolver,
    build_solver,
    contraction_bracket,
    lipschitz_estimate,
    solve_path,
)
from sgbh.services.study_service import exact_picard


def heat_exact(tgrid, sgrid):
    return np.exp(-np.pi ** 2 * tgrid.nodes)[:, None] * np.sin(np.pi * sgrid.nodes)[None, :]


def test_picard_matches_heat_solution(heat_params, tgrid, sgrid, trunc):
    solver = MildSolver(heat_params, tgrid, sgrid, ZeroNoise())
    path, trace = solver.picard_solve(np.sin(np.pi * sgrid.nodes), zero_sheet(tgrid, sgrid), PicardConfig(trunc=trunc))
    assert trace.converged
    assert trace.lam == pytest.approx(1.0 / tgrid.T)
    assert np.max(np.abs(path.values - heat_exact(tgrid, sgrid))) < 5e-3


def test_galerkin_exponential_is_exact_on_heat(heat_params, tgrid, sgrid):
    solver = GalerkinSolver(heat_params, tgrid, sgrid, ZeroNoise())
    path = solver.galerkin_solve(np.sin(np.pi * sgrid.nodes), zero_sheet(tgrid, sgrid), GalerkinConfig(n_modes=sgrid.m))
    assert np.max(np.abs(path.values - heat_exact(tgrid, sgrid))) < 1e-6


def test_galerkin_implicit_is_first_order(heat_params, sgrid):
    errors = []
    for N in (20, 40):
        tgrid = TimeGrid(N=N, T=0.5)
        solver = GalerkinSolver(heat_params, tgrid, sgrid, ZeroNoise())
        config = GalerkinConfig(n_modes=sgrid.m, stepping="implicit")
        path = solver.galerkin_solve(np.sin(np.pi * sgrid.nodes), zero_sheet(tgrid, sgrid), config)
        errors.append(np.max(np.abs(path.values - heat_exact(tgrid, sgrid))))
    assert errors[0] < 0.05
    assert 1.5 < errors[0] / errors[1] < 2.5


def test_galerkin_rejects_too_many_modes(heat_params, tgrid, sgrid, sheet):
    solver = GalerkinSolver(heat_params, tgrid, sgrid, ZeroNoise())
    with pytest.raises(ValidationError):
        solver.galerkin_solve(np.zeros(sgrid.m), sheet, GalerkinConfig(n_modes=sgrid.m + 1))


def test_picard_contracts(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    path, trace = solver.picard_solve(sine_u0, sheet, PicardConfig(trunc=trunc))
    assert trace.converged
    assert all(r < 1.0 for r in trace.ratios)
    assert path.metadata["iterations"] == trace.iterations
    assert np.all(np.isfinite(path.values))


def test_picard_reports_non_convergence(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    with pytest.raises(ConvergenceError) as exc:
        solver.picard_solve(sine_u0, sheet, PicardConfig(trunc=trunc, max_iters=1))
    assert exc.value.exit_code == 3
    assert len(exc.value.residuals) == 1


def test_inactive_truncation_does_not_change_path(params, tgrid, sgrid, sheet, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    lam = solver.choose_lambda(TruncationLevel(n=10.0, p=3.0))
    paths = []
    for n in (5.0, 10.0):
        config = exact_picard(PicardConfig(trunc=TruncationLevel(n=n, p=3.0), lam=lam), tgrid)
        path, trace = solver.picard_solve(sine_u0, sheet, config)
        assert trace.converged
        paths.append(path.values)
    np.testing.assert_array_equal(paths[0], paths[1])


def test_global_solve_raises_level_until_unreached(heat_params, tgrid, sgrid):
    solver = MildSolver(heat_params, tgrid, sgrid, ZeroNoise())
    u0 = 1.5 * np.sin(np.pi * sgrid.nodes)
    config = PicardConfig(trunc=TruncationLevel(n=1.0, p=3.0))
    path, record = solver.global_solve(u0, zero_sheet(tgrid, sgrid), config, [1.0, 2.0])
    assert record.levels == [1.0, 2.0]
    assert record.taus[0] == 0.0 and record.taus[1] == tgrid.T
    assert record.achieved_n == 2.0
    assert not record.capped and not record.blowup
    assert record.consistency[0] == 0.0
    assert path.scheme == "picard-global"
    assert path.metadata["lambda"] == pytest.approx(1.0 / tgrid.T)


def test_global_solve_flags_exhausted_schedule(heat_params, tgrid, sgrid):
    solver = MildSolver(heat_params, tgrid, sgrid, ZeroNoise())
    u0 = 1.5 * np.sin(np.pi * sgrid.nodes)
    config = PicardConfig(trunc=TruncationLevel(n=0.5, p=3.0))
    _, record = solver.global_solve(u0, zero_sheet(tgrid, sgrid), config, [0.5, 1.0])
    assert record.capped
    assert record.achieved_n == 1.0


def test_global_solve_first_level_failure_returns_capped_record(params, tgrid, sgrid, sheet, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    config = PicardConfig(trunc=TruncationLevel(n=1.0, p=3.0), tol=1e-14, max_iters=2)
    path, record = solver.global_solve(sine_u0, sheet, config, [1.0, 5.0])
    assert record.blowup and record.capped
    assert record.levels == [] and record.taus == []
    assert record.achieved_n == 0.0
    np.testing.assert_array_equal(path.values[0], sine_u0)
    assert np.isnan(path.values[1:]).all()
    assert path.metadata["resolved_rows"] == 1 and path.metadata["capped"]


@pytest.mark.parametrize("schedule", [[], [2.0, 1.0], [1.0, 1.0]])
def test_global_solve_schedule_validation(heat_params, tgrid, sgrid, schedule):
    solver = MildSolver(heat_params, tgrid, sgrid, ZeroNoise())
    config = PicardConfig(trunc=TruncationLevel(n=1.0, p=3.0))
    with pytest.raises(ValidationError):
        solver.global_solve(np.zeros(sgrid.m), zero_sheet(tgrid, sgrid), config, schedule)


def test_solution_is_fixed_point_of_mild_map(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    lam = solver.choose_lambda(trunc)
    path, _ = solver.picard_solve(sine_u0, sheet, exact_picard(PicardConfig(trunc=trunc, lam=lam), tgrid))
    image = solver.apply_A(path, sheet, trunc)
    np.testing.assert_allclose(image.values, path.values, rtol=0, atol=1e-14)


def test_solution_splits_into_initial_drift_and_noise_terms(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    lam = solver.choose_lambda(trunc)
    path, _ = solver.picard_solve(sine_u0, sheet, exact_picard(PicardConfig(trunc=trunc, lam=lam), tgrid))
    smooth = solver.table.smooth_initial(sine_u0)
    drift = solver.drift(truncate_field(path.values, trunc, sgrid.h))
    phi = solver.stochastic_convolution(sheet, path, trunc=trunc)
    np.testing.assert_allclose(smooth + drift + phi.values, path.values, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(smooth[0], sine_u0)


def test_picard_residuals_halve_under_chosen_lambda(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    lam = solver.choose_lambda(trunc)
    _, trace = solver.picard_solve(sine_u0, sheet, PicardConfig(trunc=trunc, lam=lam, tol=1e-13, max_iters=40))
    r = trace.residuals
    ratios = [r[k + 1] / r[k] for k in range(len(r) - 1) if r[k] > 1e-12]
    assert ratios
    assert max(ratios) < settings.CONTRACTION_TARGET


def test_apply_A_input_checks(params, tgrid, sgrid, sheet, trunc):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    bad_shape = FieldPath(values=np.zeros((tgrid.N, sgrid.m)), u0=np.zeros(sgrid.m),
                          tgrid=tgrid, sgrid=sgrid, scheme="test")
    with pytest.raises(GridMismatchError):
        solver.apply_A(bad_shape, sheet, trunc)
    values = np.zeros((tgrid.N + 1, sgrid.m))
    values[3, 2] = np.nan
    with pytest.raises(NonFiniteError) as exc:
        solver.apply_A(FieldPath(values=values, u0=np.zeros(sgrid.m), tgrid=tgrid, sgrid=sgrid, scheme="test"),
                       sheet, trunc)
    assert exc.value.time_index == 3


def test_choose_lambda(params, heat_params, tgrid, sgrid, trunc):
    assert MildSolver(heat_params, tgrid, sgrid, ZeroNoise()).choose_lambda(trunc) == pytest.approx(1.0 / tgrid.T)

    cap = settings.LAMBDA_MAX_T / tgrid.T
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    assert solver.choose_lambda(TruncationLevel(n=50.0, p=3.0)) == pytest.approx(cap)

    # weak multiplicative noise only: the bracket crosses the target below the cap
    weak = MildSolver(heat_params, tgrid, sgrid, LipschitzSinNoise(0.02))
    lam = weak.choose_lambda(trunc)
    assert 0 < lam < cap
    C = lipschitz_estimate(heat_params, trunc, weak.noise)
    bracket = contraction_bracket(lam, heat_params.delta, trunc.p, settings.HOLDER_EXPONENT)
    assert C * bracket == pytest.approx(settings.CONTRACTION_TARGET, rel=1e-6)


def test_choose_lambda_rejects_low_exponent(params, tgrid, sgrid):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    with pytest.raises(ValidationError):
        solver.choose_lambda(TruncationLevel(n=1.0, p=2.0))


def test_stochastic_convolution_is_the_solution_without_drift(heat_params, tgrid, sgrid, sheet, trunc):
    solver = MildSolver(heat_params, tgrid, sgrid, LipschitzSinNoise(0.2))
    lam = solver.choose_lambda(trunc)
    path, _ = solver.picard_solve(np.zeros(sgrid.m), sheet, exact_picard(PicardConfig(trunc=trunc, lam=lam), tgrid))
    phi = solver.stochastic_convolution(sheet, path, trunc=trunc)
    np.testing.assert_allclose(phi.values, path.values, rtol=0, atol=1e-14)
    assert np.all(phi.values[0] == 0.0)


def test_stochastic_convolution_variance(heat_params):
    tgrid, sgrid = TimeGrid(N=8, T=0.5), SpatialGrid(m=7)
    solver = MildSolver(heat_params, tgrid, sgrid, ConstantNoise(1.0))
    base = FieldPath(values=np.zeros((tgrid.N + 1, sgrid.m)), u0=np.zeros(sgrid.m),
                     tgrid=tgrid, sgrid=sgrid, scheme="zero")
    j = 3
    finals = np.array([
        solver.stochastic_convolution(sample_sheet(seed, tgrid, sgrid), base).values[-1, j]
        for seed in range(400)
    ])
    expected = np.sum(solver.table.mid[:, j, :] ** 2) * tgrid.dt * sgrid.h
    assert finals.var() == pytest.approx(expected, rel=0.3)


def test_transformed_scheme_reproduces_picard(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = build_solver("transformed", params, tgrid, sgrid, LipschitzSinNoise(0.2))
    config = PicardConfig(trunc=trunc, tol=1e-10, max_iters=tgrid.N + 2)
    path = solve_path(solver, "transformed", sine_u0, sheet, picard=config)
    assert path.scheme == "transformed"
    assert path.metadata["split_error"] < 1e-6


def test_picard_and_galerkin_agree_roughly(params, tgrid, sgrid, sheet, trunc, sine_u0):
    noise = LipschitzSinNoise(0.1)
    picard = solve_path(build_solver("picard", params, tgrid, sgrid, noise), "picard", sine_u0, sheet,
                        picard=PicardConfig(trunc=trunc))
    galerkin = solve_path(build_solver("galerkin", params, tgrid, sgrid, noise), "galerkin", sine_u0, sheet)
    assert np.max(np.abs(picard.values - galerkin.values)) < 0.1


def test_build_solver_and_solve_path_errors(params, tgrid, sgrid, sheet, sine_u0):
    with pytest.raises(ValidationError):
        build_solver("euler", params, tgrid, sgrid, ZeroNoise())
    solver = build_solver("picard", params, tgrid, sgrid, ZeroNoise())
    with pytest.raises(ValidationError):
        solve_path(solver, "picard", sine_u0, sheet)


def test_grid_checks(params, tgrid, sgrid, sheet, trunc):
    with pytest.raises(ValidationError):
        MildSolver(params, TimeGrid(N=20, T=1.0), sgrid, ZeroNoise())
    solver = MildSolver(params, tgrid, sgrid, ZeroNoise())
    config = PicardConfig(trunc=trunc)
    with pytest.raises(GridMismatchError):
        solver.picard_solve(np.zeros(sgrid.m), sample_sheet(0, TimeGrid(N=10, T=0.5), sgrid), config)
    with pytest.raises(GridMismatchError):
        solver.picard_solve(np.zeros(sgrid.m + 1), sheet, config)


def test_kernel_table_shared_across_solvers(params, tgrid, sgrid):
    first = MildSolver(params, tgrid, sgrid, ZeroNoise())
    second = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2), table=first.table)
    assert second.table is first.table
    with pytest.raises(GridMismatchError):
        MildSolver(ModelParams(T=0.5), TimeGrid(N=10, T=0.5), sgrid, ZeroNoise(), table=first.table)
