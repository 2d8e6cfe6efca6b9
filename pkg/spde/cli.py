# spde/cli.py
"""
Command-line front end: simulate, moments, fit, verify, report, serve.

Exit codes: 0 success, 1 validation or refusal, 2 numerical failure,
3 verification FAIL.
"""

import argparse
import logging
import math
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

import settings
from spde import formats
from spde.config import ExperimentConfig
from spde.errors import NumericalError, RefusalError, ValidationError
from spde.kernels import (KernelSpec, check_holder, homogeneous_increment_bound,
                          homogeneous_solution, increment_variance, kernel_energy,
                          kernel_energy_closed_form, kernel_spec)
from spde.noise import H_MAX, H_MIN, SpaceTimeGrid, riesz_constant, sample_noise_slab
from spde.regularity import (ExponentFit, ExponentTarget, KolmogorovReport, MomentTable,
                             estimate_moment_tables, fit_exponent, gaussian_ratio_rows,
                             kolmogorov_report, make_ladder, monotonicity_violations,
                             property_p_integral, uniform_moment_bound,
                             verify_noise_covariance)
from spde.solver import (SolutionField, contraction_level, picard_constant_recursion,
                         picard_solve, qprime_exponent_terms, solve)
from storage import ArtifactStore, RunManifest, sha256_of

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_FAIL = 0, 1, 2, 3
SUITES = ("noise", "kernels", "picard", "property_p")
# time slices exported as CSV per simulated field
SLICE_COUNT = 64
KERNEL_SWEEP_H = (0.26, 0.3, 0.4)
RECURSION_STEPS = 50
GAUSSIAN_RATIO_SIGMAS = 3.0


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class VerificationReport(BaseModel):
    suite: str
    checks: list[CheckResult] = Field(default_factory=list)
    details: dict[str, Any] = Field(default_factory=dict)

    @property
    def status(self) -> str:
        return "PASS" if self.checks and all(c.passed for c in self.checks) else "FAIL"

    def text(self) -> str:
        lines = [f"verify {self.suite}: {self.status}"]
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


@contextmanager
def _collect_warnings(manifest: RunManifest):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            yield
        finally:
            for w in caught:
                message = f"{w.category.__name__}: {w.message}"
                logger.warning("[run] %s", message)
                manifest.warnings.append(message)


def _new_manifest(command: str, config: ExperimentConfig, overrides: Sequence[str]) -> RunManifest:
    manifest = RunManifest(command=command, config_hash=config.config_hash(),
                           seed=config.run.seed, overrides=list(overrides))
    if config.hurst().outside_hypothesis:
        manifest.warnings.append(f"H={config.noise.H} lies outside ({H_MIN}, {H_MAX})")
    return manifest


@contextmanager
def _partial_on_failure(store: ArtifactStore, manifest: RunManifest):
    try:
        yield
    except Exception as exc:
        done = getattr(exc, "completed_paths", None)
        if done is not None:
            manifest.status = "PARTIAL"
            manifest.note = f"aborted after {done} completed paths: {exc}"
            store.finish(manifest)
        raise


# --- Commands ---


def cmd_simulate(config: ExperimentConfig, store: ArtifactStore,
                 overrides: Sequence[str] = ()) -> RunManifest:
    """One realisation (path 0) of the configured run, plus the homogeneous field."""
    manifest = _new_manifest("simulate", config, overrides)
    seed = config.run.seed
    with _collect_warnings(manifest):
        store.write_text("config.ini", config.to_ini(include_run_local=False))
        grid = config.build_grid()
        kernel = config.build_kernel()
        init = config.build_init(grid)
        sigma = config.build_sigma()
        hurst = config.hurst()

        stride = max(1, grid.nt // SLICE_COUNT)
        slice_rows = range(0, grid.nt + 1, stride)

        with store.stage("homogeneous"):
            homogeneous = homogeneous_solution(kernel, init, grid)
        store.register(formats.write_homogeneous_csv(
            store.path("homogeneous.csv"), homogeneous, stride))
        store.register(formats.write_solution_field(
            store.path("homogeneous.rsuf"),
            SolutionField(u=homogeneous.w, kernel=kernel, grid=grid, seed=seed), hurst.value))

        with store.stage("noise"):
            slab = sample_noise_slab(grid, hurst, seed, 0)
        store.register(formats.write_noise_slab(store.path("noise.rsns"), slab))

        if config.solver.scheme == "picard":
            with store.stage("solve"):
                sequence = picard_solve(
                    kernel, grid, init, sigma, hurst, seed, config.solver.n_iters,
                    ensemble=config.solver.picard_ensemble,
                    contraction_threshold=config.solver.contraction_threshold,
                    homogeneous=homogeneous)
            for k, field in enumerate(sequence.fields[1:], start=1):
                store.register(formats.write_solution_field(
                    store.path(f"field_picard_{k}.rsuf"), field, hurst.value))
            store.register(formats.write_distances_csv(store.path("distances.csv"),
                                                       sequence.distances))
            field = sequence.fields[-1]
            manifest.warnings.extend(f"picard: {flag}" for flag in sequence.flags)
        else:
            with store.stage("solve"):
                field = solve(kernel, grid, init, sigma, hurst, seed,
                              homogeneous=homogeneous, slab=slab)
            store.register(formats.write_solution_field(store.path("field.rsuf"), field,
                                                        hurst.value))
        store.register(formats.write_field_slices_csv(store.path("field_slices.csv"), field,
                                                      slice_rows))
    logger.info("[simulate] %s %s written to %s", kernel.kind, config.solver.scheme, store.root)
    return store.finish(manifest)


def _gaussian_ratio_warnings(tables: Sequence[MomentTable]) -> list[str]:
    """Lags where m̂_p^{1/p} / m̂_2^{1/2} leaves the Gaussian value by more than 3 stderr."""
    messages = []
    for direction in ("space", "time"):
        reference = next((t for t in tables if t.direction == direction and t.p == 2.0), None)
        if reference is None:
            continue
        for table in tables:
            if table.direction != direction or table.p == 2.0:
                continue
            rows = gaussian_ratio_rows(table, reference)
            off = [r.h for r in rows if r.deviation > GAUSSIAN_RATIO_SIGMAS]
            logger.info("[moments] %s p=%g Gaussian ratio %s", direction, table.p,
                        ", ".join(f"{r.ratio:.4f}" for r in rows))
            if off:
                messages.append(f"{direction} p={table.p:g}: moment ratio departs from the "
                                f"Gaussian value {rows[0].expected:.4f} at h={off}")
    return messages


def cmd_moments(config: ExperimentConfig, store: ArtifactStore, overrides: Sequence[str] = ()
                ) -> tuple[RunManifest, list[MomentTable], list[ExponentFit], KolmogorovReport]:
    manifest = _new_manifest("moments", config, overrides)
    reg = config.regularity
    with _collect_warnings(manifest), _partial_on_failure(store, manifest):
        store.write_text("config.ini", config.to_ini(include_run_local=False))
        grid = config.build_grid()
        kernel = config.build_kernel()
        ladders = [make_ladder(d, grid, reg.h0, reg.n_lags, p)
                   for d in reg.directions for p in reg.p_values]
        with store.stage("moments"):
            tables = estimate_moment_tables(config, ladders)
        with store.stage("fit"):
            fits = [fit_exponent(t, bootstrap_resamples=reg.bootstrap_resamples,
                                 seed=config.run.seed) for t in tables]
        store.register(formats.write_moment_tables_csv(store.path("moments.csv"), tables))
        store.register(formats.write_fits_csv(store.path("fits.csv"), fits))

        target = ExponentTarget.for_kernel(kernel)
        report = kolmogorov_report([f for f in fits if f.direction == "space"] or None,
                                   [f for f in fits if f.direction == "time"] or None,
                                   target, reg.tolerance)
        store.write_text("report.txt", report.text() + "\n")
        store.write_json("report.json", report)
        manifest.warnings.extend(report.notes)
        for table in tables:
            drops = monotonicity_violations(table)
            if drops and config.solver.a == 0:
                manifest.warnings.append(
                    f"{table.direction} p={table.p:g}: moment decreases at h={drops}")
        if config.solver.a == 0 or reg.field_source == "noise_trace":
            manifest.warnings.extend(_gaussian_ratio_warnings(tables))

        if config.run.plots:
            from spde.plotting import plot_moment_fit
            for table, fit in zip(tables, fits):
                goal = target.space_exponent if table.direction == "space" else target.time_exponent
                store.register(plot_moment_fit(
                    table, fit, store.path(f"fit_{table.direction}_p{table.p:g}.svg"), goal))
    manifest.status = report.status
    logger.info("[moments] %s", report.text())
    return store.finish(manifest), tables, fits, report


def cmd_fit(csv_path: Path, store: ArtifactStore, bootstrap_resamples: int = 0
            ) -> tuple[RunManifest, list[ExponentFit]]:
    """Re-fit exponents from an existing moments CSV (no per-path values, so t intervals only)."""
    tables = formats.read_moment_tables_csv(csv_path)
    # no config behind a bare CSV; the source file's checksum identifies the input
    manifest = RunManifest(command="fit", config_hash=sha256_of(csv_path),
                           note=f"source {Path(csv_path).name}")
    fits = [fit_exponent(t, bootstrap_resamples=bootstrap_resamples) for t in tables]
    store.register(formats.write_fits_csv(store.path("fits.csv"), fits))
    return store.finish(manifest), fits


def _verify_noise(config: ExperimentConfig, report: VerificationReport) -> None:
    result = verify_noise_covariance(config.hurst(), M=config.run.paths, seed=config.run.seed,
                                     workers=config.run.workers, refine=True)
    for c in result.checks:
        detail = (f"sample {c.sample:.5f} vs quadrature {c.predicted:.5f} "
                  f"(allowance {c.allowance:.5f})")
        if c.refined_discrepancy is not None:
            detail += (f"; refined gap {c.refined_discrepancy:+.5f}"
                       + ("" if c.bias_decayed else ", bias did not shrink"))
        report.checks.append(CheckResult(name=f"covariance {c.name}", passed=c.passed,
                                         detail=detail))
    report.details["noise"] = result.model_dump()


def _gaussian_increment_check(kernel: KernelSpec, H: float, grid: SpaceTimeGrid,
                              lags: np.ndarray, direction: str,
                              report: VerificationReport) -> dict[str, Any]:
    """Predicted E|Δu|² of the σ ≡ 1 field on the verification ladder.

    Each value must be positive and within the Cauchy-Schwarz bound from the
    point variances c_H g(t).
    """
    t = grid.T if direction == "space" else grid.T / 2.0
    c_H = riesz_constant(H)
    values, ok = [], True
    for h in lags:
        v = increment_variance(kernel, t, float(h), H, direction)
        if direction == "space":
            bound = 4.0 * c_H * kernel_energy(kernel, t, H)
        else:
            bound = c_H * (math.sqrt(kernel_energy(kernel, t, H))
                           + math.sqrt(kernel_energy(kernel, t + h, H))) ** 2
        ok &= bool(0.0 < v < bound)
        values.append(v)
    slope = float(np.polyfit(np.log(lags), np.log(values), 1)[0])
    report.checks.append(CheckResult(
        name=f"Gaussian {direction} increment variance within point-variance bound",
        passed=ok,
        detail=f"{len(values)} lags at t={t:g}, log-log exponent {slope / 2.0:.3f}"))
    return {"t": t, "lags": [float(h) for h in lags], "variance": values,
            "fitted_exponent": slope / 2.0}


def _verify_kernels(config: ExperimentConfig, report: VerificationReport) -> None:
    sweep = set(KERNEL_SWEEP_H)
    if not config.hurst().outside_hypothesis:
        sweep.add(config.noise.H)
    for H in sorted(sweep):
        wave, heat = kernel_spec("wave", H), kernel_spec("heat", H)
        for h in (0.25, 0.5):
            ratio = kernel_energy(wave, 2.0 * h, H) / kernel_energy(wave, h, H)
            expected = 2.0 ** (2.0 * H + 1.0)
            report.checks.append(CheckResult(
                name=f"wave g(2h)/g(h) H={H:g} h={h:g}",
                passed=abs(ratio / expected - 1.0) < 1e-3,
                detail=f"{ratio:.6f} vs 2^(2H+1) = {expected:.6f}"))
            quad = kernel_energy(heat, h, H)
            closed = kernel_energy_closed_form("heat", h, H)
            report.checks.append(CheckResult(
                name=f"heat g(h) H={H:g} h={h:g}",
                passed=abs(quad / closed - 1.0) < 1e-6,
                detail=f"{quad:.9f} vs Γ(1-H)h^H/H = {closed:.9f}"))

    grid = config.build_grid()
    init = config.build_init(grid)
    homogeneous = homogeneous_solution(config.build_kernel(), init, grid)
    details: dict[str, Any] = {"init": init.describe(),
                               "init_holder": check_holder(init, init.holder_order)}
    for direction in ("space", "time"):
        ladder = make_ladder(direction, grid, config.regularity.h0, config.regularity.n_lags)
        bounds = homogeneous_increment_bound(homogeneous, direction, list(ladder.multiples))
        entry = {"lags": ladder.lags.tolist(), "sup_increment": bounds.tolist()}
        if np.all(bounds > 0):
            entry["fitted_exponent"] = float(np.polyfit(np.log(ladder.lags), np.log(bounds), 1)[0])
        details[f"homogeneous_{direction}"] = entry
        details[f"gaussian_{direction}"] = _gaussian_increment_check(
            config.build_kernel(), config.hurst().value, grid, ladder.lags, direction, report)
    report.details["kernels"] = details


def _verify_picard(config: ExperimentConfig, report: VerificationReport,
                   recursion_ratio: Optional[float]) -> None:
    grid = config.build_grid()
    kernel = config.build_kernel()
    sigma = config.build_sigma()
    hurst = config.hurst()
    n_iters = max(config.solver.n_iters, 2)
    sequence = picard_solve(kernel, grid, config.build_init(grid), sigma, hurst,
                            config.run.seed, n_iters, ensemble=config.solver.picard_ensemble,
                            contraction_threshold=config.solver.contraction_threshold)
    level = contraction_level(sigma, kernel, hurst, grid.T)
    distances = ", ".join(f"{d:.3e}" for d in sequence.distances)
    if sigma.a == 0:
        exact = np.array_equal(sequence.fields[2].u, sequence.fields[1].u)
        report.checks.append(CheckResult(name="a=0 reaches its fixed point in one step",
                                         passed=exact, detail=f"distances {distances}"))
    else:
        ratios = sequence.ratios[1:]
        report.checks.append(CheckResult(
            name="consecutive iterate distances decrease",
            passed=all(r < 1.0 for r in ratios),
            detail=f"ratios {', '.join(f'{r:.3f}' for r in ratios)}; level {level:.3f}"))
    report.checks.append(CheckResult(name="scheme consistency",
                                     passed="scheme-inconsistency" not in sequence.flags,
                                     detail=", ".join(sequence.flags) or "no flags"))

    terms = qprime_exponent_terms(hurst.value, kernel.kind)
    h0 = config.regularity.h0
    C0 = 1.0
    c = C0 + sum(h0 ** e for e in terms.c_exponents)
    cbar = h0 ** terms.cbar_exponent
    Ccoef = 1.0 if recursion_ratio is None else recursion_ratio / cbar
    recursion = picard_constant_recursion(C0, c, cbar, Ccoef, RECURSION_STEPS)
    report.checks.append(CheckResult(
        name="constant recursion stays bounded",
        passed=recursion.ratio < 1.0 and recursion.bounded,
        detail=(f"Ccoef*cbar={recursion.ratio:.3f}, C_{RECURSION_STEPS}={recursion.value:.4g}, "
                f"bound {recursion.bound:.4g}" + ("; divergence detected" if recursion.diverging
                                                  else ""))))
    report.checks.append(CheckResult(
        name="h0 exponents positive", passed=terms.positive,
        detail=f"cbar {terms.cbar_exponent:.4f}, time {terms.near_time_exponent:.4f}"))

    bound = uniform_moment_bound(config, p=2.0)
    report.details["picard"] = {
        "distances": sequence.distances, "ratios": sequence.ratios, "flags": sequence.flags,
        "contraction_level": level, "recursion_history": recursion.history[:8],
        "exponents": vars(terms), "uniform_moment_bound": bound.per_iterate,
    }


def _verify_property_p(config: ExperimentConfig, report: VerificationReport) -> None:
    results = {}
    for p in config.regularity.p_values:
        result = property_p_integral(config, p)
        drift = "n/a" if result.drift is None else f"{result.drift:.2%}"
        report.checks.append(CheckResult(
            name=f"property (P) p={p:g}", passed=result.status == "FINITE",
            detail=f"value {result.value:.5g} (near {result.near:.4g}, far {result.far:.4g}) "
                   f"refined {result.refined_value} drift {drift}"))
        results[f"{p:g}"] = vars(result)
    report.details["property_p"] = results


def cmd_verify(config: ExperimentConfig, suite: str, store: ArtifactStore,
               overrides: Sequence[str] = (),
               recursion_ratio: Optional[float] = None) -> tuple[RunManifest, VerificationReport]:
    if suite not in SUITES:
        raise ValidationError(f"unknown suite {suite!r}; choose from {SUITES}", field="suite")
    manifest = _new_manifest(f"verify {suite}", config, overrides)
    report = VerificationReport(suite=suite)
    with _collect_warnings(manifest), _partial_on_failure(store, manifest):
        store.write_text("config.ini", config.to_ini(include_run_local=False))
        with store.stage(suite):
            if suite == "noise":
                _verify_noise(config, report)
            elif suite == "kernels":
                _verify_kernels(config, report)
            elif suite == "picard":
                _verify_picard(config, report, recursion_ratio)
            else:
                _verify_property_p(config, report)
        store.write_text(f"verify_{suite}.txt", report.text() + "\n")
        store.write_json(f"verify_{suite}.json", report)
    manifest.status = report.status
    logger.info("[verify] %s", report.text())
    return store.finish(manifest), report


def cmd_report(run_dir: Path) -> str:
    """Summarise a finished run and re-check every listed checksum."""
    store = ArtifactStore(run_dir)
    try:
        manifest = store.load_manifest()
    except OSError as exc:
        raise ValidationError(f"no manifest in {run_dir}", field="run_dir") from exc
    bad = store.verify(manifest)
    lines = [f"{manifest.command} [{manifest.status}] config {manifest.config_hash[:12]} "
             f"seed {manifest.seed} tool {manifest.tool_version}",
             f"  wall time {manifest.wall_time:.2f}s; stages " +
             ", ".join(f"{k}={v:.2f}s" for k, v in manifest.stage_timings.items()),
             f"  {len(manifest.files)} files, {len(bad)} checksum mismatches"]
    lines.extend(f"  warning: {w}" for w in manifest.warnings)
    lines.extend(f"  override: {o}" for o in manifest.overrides)
    for name in ("report.txt", *(f"verify_{s}.txt" for s in SUITES)):
        if store.path(name).exists():
            lines.append(store.path(name).read_text().rstrip())
    if bad:
        raise ValidationError(f"checksum mismatch for {bad}", field="run_dir")
    return "\n".join(lines)


# --- argparse front end ---


def _run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment INI file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count M")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="section.key=value, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rspde", description="Stochastic wave/heat equations with rough noise: "
                                  "simulation and Hölder-regularity checks.")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    _run_flags(sub.add_parser("simulate", help="solve one realisation"))
    _run_flags(sub.add_parser("moments", help="increment moments and exponent fits"))
    fit = sub.add_parser("fit", help="re-fit exponents from a moments CSV")
    fit.add_argument("csv", type=Path)
    fit.add_argument("--out", type=Path)
    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("suite", choices=SUITES)
    _run_flags(verify)
    verify.add_argument("--recursion-ratio", type=float,
                        help="force Ccoef*cbar in the constant recursion")
    report = sub.add_parser("report", help="summarise a run directory")
    report.add_argument("run_dir", type=Path)
    serve = sub.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def load_config(args: argparse.Namespace) -> tuple[ExperimentConfig, list[str]]:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = list(args.override)
    for flag, key in (("seed", "run.seed"), ("paths", "run.paths"),
                      ("workers", "run.workers"), ("out", "run.out_dir")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.workers is None and settings.WORKERS > 1 and config.run.workers == 1:
        overrides.append(f"run.workers={settings.WORKERS}")
    return (config.with_overrides(overrides) if overrides else config), overrides


def _store_for(args, config: ExperimentConfig, label: str) -> ArtifactStore:
    if args.out is not None:
        return ArtifactStore(args.out)
    return ArtifactStore(Path(config.run.out_dir) / f"{label}-{config.config_hash()[:12]}")


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "serve":
        import uvicorn
        uvicorn.run("main:app", host=args.host, port=args.port)
        return EXIT_OK
    if args.command == "report":
        print(cmd_report(args.run_dir))
        return EXIT_OK
    if args.command == "fit":
        store = ArtifactStore(args.out or args.csv.parent)
        _, fits = cmd_fit(args.csv, store)
        for f in fits:
            print(f"{f.direction} p={f.p:g}: exponent {f.exponent:.4f} "
                  f"ci95 [{f.ci95[0]:.4f}, {f.ci95[1]:.4f}] r2 {f.r_squared:.4f}")
        return EXIT_OK

    config, overrides = load_config(args)
    if args.command == "simulate":
        store = _store_for(args, config, "simulate")
        manifest = cmd_simulate(config, store, overrides)
        print(f"simulate: {len(manifest.files)} files in {store.root}")
        return EXIT_OK
    if args.command == "moments":
        manifest, _, _, report = cmd_moments(config, _store_for(args, config, "moments"),
                                             overrides)
        print(report.text())
        return EXIT_OK
    manifest, report = cmd_verify(config, args.suite,
                                  _store_for(args, config, f"verify-{args.suite}"), overrides,
                                  args.recursion_ratio)
    print(report.text())
    return EXIT_OK if report.status == "PASS" else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        return _dispatch(args)
    except (ValidationError, RefusalError) as exc:
        logger.error("[cli] %s", exc)
        return EXIT_VALIDATION
    except PydanticValidationError as exc:
        logger.error("[cli] invalid configuration:\n%s", exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        logger.error("[cli] numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
