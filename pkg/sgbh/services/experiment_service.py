"""
Experiment service - runs one configured experiment and writes its artifacts.

A run always ends with a manifest on disk, whatever the outcome:
exit 0 when every invoked check passes, 1 on a failed check, 2 on invalid
configuration and 3 on numerical blow-up.
"""
import hashlib
import json
import logging
import os
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError
from sqlalchemy.exc import SQLAlchemyError

from sgbh.config import settings
from sgbh.core.exceptions import CheckFailedError, SGBHException, ValidationError
from sgbh.models.run import RunStatus
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import TruncationLevel
from sgbh.schemas.run import ExperimentOutcome, RunConfig, RunManifest
from sgbh.schemas.solver import GalerkinConfig, PicardConfig
from sgbh.services.analysis_service import BANDWIDTH_STABILITY_TOL, energy_inequality_check, kde_density
from sgbh.services.ensemble_service import EnsembleRunner, seed_range
from sgbh.services.export_service import ExportService, write_json
from sgbh.services.integrations.presets import get_initial_condition, get_noise_coefficient
from sgbh.services.kernel_service import KernelService
from sgbh.services.malliavin_service import MalliavinService, observed_orders, positivity_fraction
from sgbh.services.noise_service import sample_sheet
from sgbh.services.solver_service import MildSolver, build_solver, solve_path
from sgbh.services.study_service import StudyService, convergence_study, exact_picard

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
DENSITY_INTEGRAL_TOL = 1e-6
POSITIVITY_DELAY_STEPS = 5
FD_ORDER_RANGE = (0.5, 1.5)
FD_EXACT_TOL = 1e-9
CLOSED_FORM_TOL = 1e-8
SPLIT_TOL = 1e-6


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file {path} not found", field="config")
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"config file {path} is not valid TOML: {e}", field="config")


def parse_run_config(raw: Dict[str, Any]) -> RunConfig:
    """Validate a raw config mapping; the error names the first offending field."""
    try:
        return RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ValidationError(first["msg"], field=field)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    return parse_run_config(read_config_file(path))


def config_hash(config: RunConfig) -> str:
    echo = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(echo.encode("utf-8")).hexdigest()


def prepare_output(directory: Union[str, Path]) -> Path:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create {out}: {e}", field="output.directory")
    if not os.access(out, os.W_OK):
        raise ValidationError(f"{out} is not writable", field="output.directory")
    return out


def _relative_l2(reference: np.ndarray, other: np.ndarray) -> float:
    scale = float(np.linalg.norm(reference))
    diff = float(np.linalg.norm(reference - other))
    return diff / scale if scale > 0 else diff


class ExperimentService:
    """Service for resolving a RunConfig and executing its experiment."""

    def __init__(self, config: RunConfig, runner: Optional[EnsembleRunner] = None):
        self.config = config
        self.runner = runner or EnsembleRunner()
        self.params = config.model
        self.tgrid = TimeGrid(N=config.grid.N, T=self.params.T)
        self.sgrid = SpatialGrid(m=config.grid.m)
        self.scheme = config.scheme.name
        self.noise = get_noise_coefficient(config.noise.preset, **config.noise.params)
        self.initial = get_initial_condition(config.initial.preset, **config.initial.params)
        self.u0 = self.initial.evaluate(self.sgrid.nodes)
        self.seeds = seed_range(config.seeds.base, config.seeds.count)

        pc = config.picard
        if pc.lambda_mode == "fixed" and pc.lam is None:
            raise ValidationError("lambda_mode 'fixed' needs a value for lam", field="picard.lam")
        self.trunc = TruncationLevel(n=pc.n, p=pc.p or self.params.min_exponent).check_exponent(self.params.delta)
        self.picard = PicardConfig(trunc=self.trunc, lam=pc.lam if pc.lambda_mode == "fixed" else None,
                                   tol=pc.tol, max_iters=pc.max_iters)
        gc = config.galerkin
        if gc.n_modes is not None and gc.n_modes > self.sgrid.m:
            raise ValidationError(f"n_modes must not exceed m={self.sgrid.m}", field="galerkin.n_modes")
        self.galerkin = GalerkinConfig(n_modes=gc.n_modes or self.sgrid.m, stepping=gc.stepping,
                                       cutoff_level=gc.cutoff_level)
        self._check_experiment()
        self.kernels = KernelService()
        self.solver = build_solver(self.scheme, self.params, self.tgrid, self.sgrid, self.noise, kernels=self.kernels)
        self._mild: Optional[MildSolver] = None

    # -- validation -------------------------------------------------------

    def _check_experiment(self) -> None:
        exp = self.config.experiment
        kind = exp.kind
        if kind == "compare":
            if exp.upper is None:
                raise ValidationError("compare needs an upper initial condition", field="experiment.upper")
            self.v0 = get_initial_condition(exp.upper.preset, **exp.upper.params).evaluate(self.sgrid.nodes)
            self.w0 = None
            if exp.middle is not None:
                self.w0 = get_initial_condition(exp.middle.preset, **exp.middle.params).evaluate(self.sgrid.nodes)
            ordered = [self.u0] + ([self.w0] if self.w0 is not None else []) + [self.v0]
            for lower, upper in zip(ordered, ordered[1:]):
                bad = np.nonzero(lower > upper)[0]
                if bad.size:
                    raise ValidationError(
                        f"initial data must be ordered pointwise (fails at x={self.sgrid.nodes[bad[0]]:.4g})",
                        field="experiment.upper",
                    )
        elif kind == "malliavin":
            if exp.r_index >= self.tgrid.N:
                raise ValidationError(f"r_index must be < N={self.tgrid.N}", field="experiment.r_index")
            if exp.z_index is not None and exp.z_index >= self.sgrid.m:
                raise ValidationError(f"z_index must be < m={self.sgrid.m}", field="experiment.z_index")
            if not exp.epsilons or any(e <= 0 for e in exp.epsilons):
                raise ValidationError("epsilons must be non-empty and positive", field="experiment.epsilons")
            if len(set(exp.epsilons)) != len(exp.epsilons):
                raise ValidationError("epsilons must be distinct", field="experiment.epsilons")
            if exp.interval is not None and (len(exp.interval) != 2 or not 0 < exp.interval[0] < exp.interval[1] < 1):
                raise ValidationError("interval must be [a, b] with 0 < a < b < 1", field="experiment.interval")
        elif kind in ("density", "dichotomy"):
            if not exp.t_obs or any(not 0 <= t <= self.params.T for t in exp.t_obs):
                raise ValidationError(f"t_obs must be non-empty within [0, {self.params.T}]", field="experiment.t_obs")
        elif kind == "convergence" and exp.exact == "heat":
            heat_only = self.noise.bound_K == 0 and self.params.alpha == 0 and self.params.beta == 0
            if not heat_only or self.initial.name != "sine":
                raise ValidationError(
                    "exact heat reference needs zero noise, alpha = beta = 0 and a sine initial condition",
                    field="experiment.exact",
                )

    # -- helpers ----------------------------------------------------------

    @property
    def mild(self) -> MildSolver:
        """Mild-equation solver, shared with `solver` when the scheme already is one."""
        if isinstance(self.solver, MildSolver):
            return self.solver
        if self._mild is None:
            self._mild = MildSolver(self.params, self.tgrid, self.sgrid, self.noise,
                                    table=self.kernels.table(self.params, self.tgrid, self.sgrid))
        return self._mild

    def _lambda(self) -> Optional[float]:
        if self.scheme == "galerkin":
            return None
        return self.picard.lam if self.picard.lam is not None else self.solver.choose_lambda(self.trunc)

    def _study(self) -> StudyService:
        return StudyService(self.params, self.tgrid, self.sgrid, self.noise, scheme=self.scheme,
                            picard=self.picard, galerkin=self.galerkin, runner=self.runner, kernels=self.kernels)

    # -- experiments ------------------------------------------------------

    def execute(self, out: Path) -> ExperimentOutcome:
        kind = self.config.experiment.kind
        logger.info(f"Running '{kind}' experiment ({self.scheme}, m={self.sgrid.m}, N={self.tgrid.N}, "
                    f"{len(self.seeds)} seeds)")
        self.export = ExportService(out, self.config.output.formats)
        outcome = getattr(self, f"_run_{kind}")()
        outcome.artifacts.update(self.export.artifacts)
        return outcome

    def _run_solve(self) -> ExperimentOutcome:
        schedule = self.config.picard.n_schedule

        def worker(seed: int):
            sheet = sample_sheet(seed, self.tgrid, self.sgrid)
            if schedule and self.scheme != "galerkin":
                return self.solver.global_solve(self.u0, sheet, self.picard, schedule)
            return solve_path(self.solver, self.scheme, self.u0, sheet, self.picard, self.galerkin), None

        outcome = ExperimentOutcome()
        paths = {}
        for seed, (path, record) in self.runner.map(worker, self.seeds):
            self.export.field(path, f"path_seed{seed}")
            entry = {"sup": float(np.nanmax(np.abs(path.values))), **path.metadata}
            if record is not None:
                entry["stopping"] = record.model_dump()
                outcome.blowup = outcome.blowup or record.blowup
            paths[str(seed)] = entry
        outcome.summary = {"paths": paths}
        outcome.lambda_chosen = next(iter(paths.values())).get("lambda")
        return outcome

    def _run_compare(self) -> ExperimentOutcome:
        exp = self.config.experiment
        report = self._study().comparison_check(self.u0, self.v0, self.seeds, tol=exp.tol, middle=self.w0)
        outcome = ExperimentOutcome(summary=report.model_dump(), lambda_chosen=self._lambda())
        self.export.json(report, "comparison.json")
        outcome.checks["comparison"] = report.violation_cells == 0
        return outcome

    def _run_energy(self) -> ExperimentOutcome:
        p = self.config.experiment.energy_p or self.trunc.p
        mild = self.mild
        lam = self.picard.lam if self.picard.lam is not None else mild.choose_lambda(self.trunc)
        config = exact_picard(PicardConfig(trunc=self.trunc, lam=lam), self.tgrid)

        def worker(seed: int):
            sheet = sample_sheet(seed, self.tgrid, self.sgrid)
            u, _ = mild.picard_solve(self.u0, sheet, config)
            phi = mild.stochastic_convolution(sheet, u, trunc=self.trunc)
            v, _ = mild.transformed_solve(self.u0, phi, config)
            split = float(np.max(np.abs(v.values - (u.values - phi.values))))
            return energy_inequality_check(v, phi, self.params, p), split

        outcome = ExperimentOutcome(lambda_chosen=lam)
        margins, splits = {}, {}
        for seed, (report, split) in self.runner.map(worker, self.seeds):
            self.export.json(report, f"energy_seed{seed}.json")
            margins[str(seed)] = report.min_margin
            splits[str(seed)] = split
            K = (report.K1, report.K2, report.K3)
        outcome.summary = {"p": p, "K1": K[0], "K2": K[1], "K3": K[2], "min_margin": margins,
                           "split_error": splits}
        outcome.checks["energy"] = bool(all(m > 0 for m in margins.values()))
        outcome.checks["transformed_split"] = bool(max(splits.values()) < SPLIT_TOL)
        return outcome

    def _run_malliavin(self) -> ExperimentOutcome:
        exp = self.config.experiment
        mild = self.mild
        service = MalliavinService(mild)
        lam = self.picard.lam if self.picard.lam is not None else mild.choose_lambda(self.trunc)
        exact = exact_picard(PicardConfig(trunc=self.trunc, lam=lam), self.tgrid)
        r, z = exp.r_index, exp.z_index if exp.z_index is not None else self.sgrid.m // 2

        seed = self.seeds[0]
        sheet = sample_sheet(seed, self.tgrid, self.sgrid)
        base, _ = mild.picard_solve(self.u0, sheet, exact)
        derivative = service.derivative_solve(base, sheet, self.trunc, r, z)
        outcome = ExperimentOutcome(lambda_chosen=lam)
        self.export.field(derivative, "derivative")

        errors, forward = [], []
        for eps in exp.epsilons:
            fd = service.fd_oracle(self.u0, sheet, self.trunc, r, z, eps, central=True, lam=lam)
            errors.append(_relative_l2(derivative.values, fd.values))
            fd = service.fd_oracle(self.u0, sheet, self.trunc, r, z, eps, lam=lam)
            forward.append(_relative_l2(derivative.values, fd.values))
        outcome.summary = {
            "seed": seed, "r_index": r, "z_index": z, "method": derivative.method,
            "epsilons": list(exp.epsilons), "fd_relative_l2": errors, "fd_forward_relative_l2": forward,
        }
        outcome.checks["fd_agreement"] = bool(min(errors) < exp.fd_tol)

        if len(exp.epsilons) > 1:
            if max(forward) < FD_EXACT_TOL:
                outcome.summary["fd_forward_orders"] = None
                outcome.checks["fd_order"] = True
            else:
                orders = observed_orders(exp.epsilons, forward)
                outcome.summary["fd_forward_orders"] = orders
                lo, hi = FD_ORDER_RANGE
                outcome.checks["fd_order"] = all(lo <= q <= hi for q in orders)

        if self.params.alpha == 0 and self.params.beta == 0 and self.noise.lipschitz_L == 0:
            closed = service.additive_closed_form(r, z)
            gap = _relative_l2(closed.values, derivative.values)
            outcome.summary["closed_form_relative_l2"] = gap
            outcome.checks["linear_closed_form"] = bool(gap < CLOSED_FORM_TOL)

        if exp.interval is not None:
            a, b = exp.interval
            s_range = (self.tgrid.nodes[r] + POSITIVITY_DELAY_STEPS * self.tgrid.dt, self.params.T)

            def worker(seed: int):
                sheet = sample_sheet(seed, self.tgrid, self.sgrid)
                base, _ = mild.picard_solve(self.u0, sheet, exact)
                v = service.integrated_derivative(base, sheet, self.trunc, r, a, b)
                return positivity_fraction(v, s_range)

            stats = self.runner.map(worker, self.seeds)
            fractions = [s.fraction for _, s in stats]
            median = float(np.median(fractions))
            outcome.summary["positivity"] = {"s_range": list(s_range), "fractions": fractions, "median": median}
            outcome.checks["positivity"] = bool(median > exp.positivity_min)
        return outcome

    def _noise_acted(self, row: int) -> bool:
        nodes = self.tgrid.nodes
        return any(self.noise.is_active(nodes[k]) for k in range(row))

    def _run_density(self) -> ExperimentOutcome:
        exp = self.config.experiment
        t_nodes, x_nodes = self.tgrid.nodes, self.sgrid.nodes
        rows = [int(np.argmin(np.abs(t_nodes - t))) for t in exp.t_obs]
        column = int(np.argmin(np.abs(x_nodes - exp.x_obs)))
        samples = self._study().sample_point(self.u0, self.seeds, rows, column)

        outcome = ExperimentOutcome(lambda_chosen=self._lambda())
        estimates, status_ok, integral_ok, stable = [], [], [], []
        for idx, row in enumerate(rows):
            estimate = kde_density(samples[:, idx])
            status_ok.append(bool(estimate.atom_detected) == (not self._noise_acted(row)))
            if not estimate.atom_detected:
                integral_ok.append(bool(abs(estimate.integral - 1.0) < DENSITY_INTEGRAL_TOL))
                stable.append(bool(estimate.bandwidth_sensitivity < BANDWIDTH_STABILITY_TOL))
                self.export.table(f"density_row{row}.csv", "x,density", [estimate.grid, estimate.density])
            estimates.append({"t_obs": float(t_nodes[row]), **estimate.model_dump(exclude={"grid", "density"})})

        self.export.table(f"samples_x{column}.csv", ",".join(f"row{r}" for r in rows), samples.T)
        outcome.summary = {"x_obs": float(x_nodes[column]), "estimates": estimates}
        outcome.checks["atom_status"] = all(status_ok)
        if integral_ok:
            outcome.checks["density_integral"] = all(integral_ok)
            outcome.checks["bandwidth_stability"] = all(stable)
        return outcome

    def _run_dichotomy(self) -> ExperimentOutcome:
        exp = self.config.experiment
        report = self._study().dichotomy_experiment(self.u0, exp.t_obs, exp.x_obs, self.seeds)
        outcome = ExperimentOutcome(summary=report.model_dump(), lambda_chosen=self._lambda())
        self.export.json(report, "dichotomy.json")
        outcome.checks["dichotomy"] = bool(report.consistent)
        return outcome

    def _run_convergence(self) -> ExperimentOutcome:
        exp = self.config.experiment
        exact = None
        if exp.exact == "heat":
            amp, k, nu = self.initial.amplitude, self.initial.k, self.params.nu

            def exact(t, x):
                return amp * np.exp(-nu * (k * np.pi) ** 2 * t) * np.sin(k * np.pi * x)

        report = convergence_study(
            self.params, self.noise, self.initial, self.scheme, self.sgrid.m, self.tgrid.N,
            levels=exp.levels, seed=self.seeds[0], picard=self.picard,
            galerkin_modes=self.config.galerkin.n_modes, exact=exact,
        )
        outcome = ExperimentOutcome(summary=report.model_dump(), lambda_chosen=self._lambda())
        self.export.json(report, "order.json")
        for name, sweep in (("spatial", report.spatial), ("temporal", report.temporal)):
            self.export.table(f"{name}_errors.csv", "step,error", [sweep.steps, sweep.errors])
        if exp.min_order is not None:
            spatial = report.spatial
            outcome.checks["spatial_order"] = spatial.exact or (spatial.order is not None and spatial.order >= exp.min_order)
        return outcome


def _record(manifest: RunManifest, manifest_path: Optional[str]) -> None:
    from sgbh.database import get_session
    from sgbh.repositories.run_repo import RunRepository

    try:
        with get_session() as session:
            RunRepository(session).record_manifest(manifest, manifest_path)
    except SQLAlchemyError as e:
        logger.warning(f"Could not record run in catalogue: {e}")


def run_experiment(config_path: Union[str, Path], record: Optional[bool] = None) -> RunManifest:
    """Execute the experiment in a TOML config; writes artifacts plus the manifest and returns it."""
    start = time.perf_counter()
    config_path = Path(config_path)
    out = config_path.parent
    raw: Dict[str, Any] = {}
    config: Optional[RunConfig] = None
    outcome = ExperimentOutcome()
    message = None
    try:
        raw = read_config_file(config_path)
        config = parse_run_config(raw)
        out = prepare_output(config.output.directory)
        outcome = ExperimentService(config).execute(out)
        failed = [name for name, ok in outcome.checks.items() if not ok]
        if outcome.blowup:
            exit_code, message = 3, "solution left every truncation level; capped result written"
        elif failed:
            exit_code, message = 1, CheckFailedError(", ".join(failed)).message
        else:
            exit_code = 0
    except SGBHException as e:
        exit_code, message = e.exit_code, e.message
        logger.error(f"Run failed ({exit_code}): {e.message}")

    section = raw.get("experiment") if isinstance(raw.get("experiment"), dict) else {}
    experiment = config.experiment.kind if config else str(section.get("kind", "unknown"))
    manifest = RunManifest(
        config=config.model_dump(mode="json") if config else raw,
        config_hash=config_hash(config) if config else "",
        version=settings.VERSION,
        experiment=experiment,
        status=RunStatus.BY_EXIT_CODE[exit_code],
        exit_code=exit_code,
        message=message,
        lambda_chosen=outcome.lambda_chosen,
        wall_time=time.perf_counter() - start,
        summary=outcome.summary,
        checks=outcome.checks,
        artifacts=outcome.artifacts,
    )
    manifest_path = None
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest_path = str(write_json(manifest, out / MANIFEST_NAME))
    except OSError as e:
        logger.error(f"Could not write manifest to {out}: {e}")

    if record if record is not None else settings.RECORD_RUNS:
        _record(manifest, manifest_path)
    logger.info(f"Run finished: {manifest.status} (exit {exit_code}) in {manifest.wall_time:.2f}s")
    return manifest


def validate_config(config_path: Union[str, Path]) -> RunConfig:
    """Parse and resolve a config without running it."""
    config = load_run_config(config_path)
    ExperimentService(config)
    return config
