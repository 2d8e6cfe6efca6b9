# spde/regularity.py
"""
Increment moments, Hölder exponent fits, the property-(P) integral and the
noise covariance check.

Every Monte Carlo estimate here is built from per-path quantities: a path
contributes one window-averaged value per lag, and standard errors are taken
across paths, never across grid nodes of one path.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats
from scipy.special import gamma

from spde.config import ExperimentConfig
from spde.engine import (add_tuples, experiment_context, reduce_chunks, run_chunks,
                         simulate_path)
from spde.errors import RefusalError, ValidationError
from spde.kernels import KernelSpec
from spde.noise import (HurstLike, SpaceTimeGrid, TestPair, as_hurst, default_test_pairs,
                        pair_with_test_function, sample_noise_slab,
                        spectral_covariance_quadrature)
from spde.solver import march

logger = logging.getLogger(__name__)

Direction = Literal["space", "time"]

MIN_PATHS = 16
MIN_LADDER_POINTS = 4
MIN_LAG_STEPS = 8
HEAVY_TAIL_P = 4.0


# --- Ladders ---


@dataclass(frozen=True)
class IncrementLadder:
    direction: Direction
    multiples: tuple[int, ...]
    step: float
    p: float = 2.0
    h0: float = 0.25

    def __post_init__(self):
        if self.direction not in ("space", "time"):
            raise ValidationError(f"unknown direction {self.direction!r}", field="directions")
        if self.p < 2:
            raise ValidationError(f"p must be >= 2, got {self.p}", field="p_values")
        if not 0 < self.h0 < 1:
            raise ValidationError(f"h0 must lie in (0, 1), got {self.h0}", field="h0")
        m = self.multiples
        if not m or any(b <= a for a, b in zip(m, m[1:])):
            raise ValidationError("lags must be strictly increasing", field="lags")
        if m[0] < MIN_LAG_STEPS:
            raise RefusalError(f"lag of {m[0]} grid steps is below the resolution floor "
                               f"of {MIN_LAG_STEPS} steps")
        if m[-1] * self.step > self.h0 * (1 + 1e-9):
            raise ValidationError(f"largest lag {m[-1] * self.step:.4g} exceeds h0={self.h0}",
                                  field="lags")

    @property
    def lags(self) -> np.ndarray:
        return self.step * np.asarray(self.multiples, dtype=float)

    def with_p(self, p: float) -> "IncrementLadder":
        return replace(self, p=float(p))


def make_ladder(direction: Direction, grid: SpaceTimeGrid, h0: float = 0.25,
                n_lags: int = 6, p: float = 2.0) -> IncrementLadder:
    """Integer multiples of Δx (or Δt) from 8 steps up to h0, dyadic when that gives
    enough points and geometric otherwise."""
    step = grid.dx if direction == "space" else grid.dt
    top = int(math.floor(h0 / step * (1 + 1e-12)))
    if top < MIN_LAG_STEPS:
        raise RefusalError(f"h0={h0} is below {MIN_LAG_STEPS} grid steps of {step:.4g}")
    dyadic = [MIN_LAG_STEPS * 2 ** j for j in range(32) if MIN_LAG_STEPS * 2 ** j <= top]
    if len(dyadic) >= MIN_LADDER_POINTS:
        multiples = dyadic
    else:
        multiples = sorted({int(round(v)) for v in np.geomspace(MIN_LAG_STEPS, top, n_lags)})
    if len(multiples) < MIN_LADDER_POINTS:
        raise RefusalError(f"only {len(multiples)} distinct lags fit between "
                           f"{MIN_LAG_STEPS} steps and h0={h0}")
    return IncrementLadder(direction, tuple(multiples), step, p, h0)


def ramp_row(grid: SpaceTimeGrid, ramp_fraction: float) -> int:
    return int(math.ceil(ramp_fraction * grid.nt - 1e-9))


def _increment_blocks(u: np.ndarray, grid: SpaceTimeGrid, ladder: IncrementLadder,
                      ramp: int):
    window = grid.window
    for k in ladder.multiples:
        if ladder.direction == "space":
            if window.stop + k > u.shape[1]:
                raise RefusalError(f"space lag of {k} steps leaves the simulated domain")
            rows = u[ramp:]
            yield rows[:, window.start + k:window.stop + k] - rows[:, window]
        else:
            if ramp + k >= u.shape[0]:
                raise RefusalError(f"time lag of {k} steps does not fit after the ramp-in")
            yield u[ramp + k:, window] - u[ramp:u.shape[0] - k, window]


def path_increment_means(u: np.ndarray, grid: SpaceTimeGrid, ladder: IncrementLadder,
                         ramp: int = 0) -> np.ndarray:
    """Window average of |Δ_h u|^p at every lag of the ladder, for one path."""
    return np.array([np.mean(np.abs(d) ** ladder.p)
                     for d in _increment_blocks(u, grid, ladder, ramp)])


# --- Moment tables ---


@dataclass(frozen=True)
class MomentRow:
    h: float
    moment: float
    stderr: float
    n_paths: int
    n_grid_points: int


@dataclass
class MomentTable:
    direction: Direction
    p: float
    kind: str
    H: float
    rows: list[MomentRow]
    path_values: Optional[np.ndarray] = None

    @property
    def lags(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])

    @property
    def moments(self) -> np.ndarray:
        return np.array([r.moment for r in self.rows])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr for r in self.rows])

    @classmethod
    def from_path_values(cls, ladder: IncrementLadder, values: np.ndarray, kind: str,
                         H: float, grid_points: Sequence[int]) -> "MomentTable":
        M = values.shape[0]
        means = values.mean(axis=0)
        if M > 1:
            stderr = values.std(axis=0, ddof=1) / math.sqrt(M)
        else:
            stderr = np.zeros_like(means)
        rows = [MomentRow(float(h), float(m), float(s), M, int(n))
                for h, m, s, n in zip(ladder.lags, means, stderr, grid_points)]
        return cls(ladder.direction, ladder.p, kind, H, rows, values)


def monotonicity_violations(table: MomentTable) -> list[float]:
    """Lags where the moment drops by more than the combined standard error."""
    flagged = []
    for a, b in zip(table.rows, table.rows[1:]):
        if b.moment < a.moment - math.hypot(a.stderr, b.stderr):
            flagged.append(b.h)
    return flagged


def _grid_points(grid: SpaceTimeGrid, ladder: IncrementLadder, ramp: int, n_rows: int):
    width = grid.window.stop - grid.window.start
    if ladder.direction == "space":
        return [(n_rows - ramp) * width] * len(ladder.multiples)
    return [(n_rows - ramp - k) * width for k in ladder.multiples]


def _moment_chunk(payload, chunk: range) -> np.ndarray:
    config, ladders = payload
    ctx = experiment_context(config)
    ramp = ramp_row(ctx.grid, config.regularity.ramp_fraction)
    out = np.empty((len(chunk), sum(len(l.multiples) for l in ladders)))
    for i, path in enumerate(chunk):
        u = simulate_path(ctx, path, config.regularity.field_source)
        out[i] = np.concatenate([path_increment_means(u, ctx.grid, l, ramp) for l in ladders])
    return out


def estimate_moment_tables(config: ExperimentConfig, ladders: Sequence[IncrementLadder],
                           M: Optional[int] = None,
                           workers: Optional[int] = None) -> list[MomentTable]:
    """All requested tables from one Monte Carlo sweep; each path is simulated once."""
    M = M or config.run.paths
    if M < MIN_PATHS:
        raise RefusalError(f"M={M} paths is too few for a standard error (need {MIN_PATHS})")
    source = config.regularity.field_source
    if source == "noise_trace" and any(l.direction == "time" for l in ladders):
        raise ValidationError("the noise trace has no time regularity to measure",
                              field="field_source")
    grid = config.build_grid()
    kernel = config.build_kernel()
    ramp = ramp_row(grid, config.regularity.ramp_fraction)
    n_rows = grid.nt if source == "noise_trace" else grid.nt + 1

    logger.info("[moments] %s %s: M=%d, %d ladder(s), seed=%d", kernel.kind, source, M,
                len(ladders), config.run.seed)
    values = np.vstack(run_chunks(_moment_chunk, (config, tuple(ladders)), M,
                                  workers or config.run.workers))
    tables, offset = [], 0
    for ladder in ladders:
        n = len(ladder.multiples)
        table = MomentTable.from_path_values(ladder, values[:, offset:offset + n], kernel.kind,
                                             kernel.H, _grid_points(grid, ladder, ramp, n_rows))
        offset += n
        drops = monotonicity_violations(table)
        if drops and source == "solution" and config.solver.a == 0:
            logger.warning("[moments] %s p=%g moment decreases beyond stderr at h=%s",
                           ladder.direction, ladder.p, drops)
        tables.append(table)
    return tables


def estimate_increment_moments(config: ExperimentConfig, ladder: IncrementLadder,
                               M: Optional[int] = None,
                               workers: Optional[int] = None) -> MomentTable:
    return estimate_moment_tables(config, [ladder], M, workers)[0]


def gaussian_moment_ratio(p: float) -> float:
    """(E|Z|^p)^{1/p} / (E|Z|²)^{1/2} for a centred Gaussian Z."""
    return (2.0 ** (p / 2.0) * gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)) ** (1.0 / p)


@dataclass(frozen=True)
class MomentRatio:
    h: float
    ratio: float
    expected: float
    stderr: float

    @property
    def deviation(self) -> float:
        """|ratio - expected| in standard errors."""
        gap = abs(self.ratio - self.expected)
        if self.stderr > 0:
            return gap / self.stderr
        return 0.0 if gap == 0 else math.inf


def gaussian_ratio_rows(table: MomentTable, reference: MomentTable) -> list[MomentRatio]:
    """m̂_p(h)^{1/p} / m̂_2(h)^{1/2} at every lag, against the Gaussian value.

    Both tables must come from the same sweep; the stderr is the delta-method
    error of the log ratio taken across paths.
    """
    if reference.p != 2.0:
        raise ValidationError(f"reference table must have p=2, got {reference.p:g}",
                              field="p_values")
    pv, pv2 = table.path_values, reference.path_values
    if pv is None or pv2 is None or pv.shape != pv2.shape:
        raise ValidationError("ratios need per-path values from one sweep", field="path_values")
    if not np.allclose(table.lags, reference.lags):
        raise ValidationError("tables have different ladders", field="lags")
    M = pv.shape[0]
    if M < 2:
        raise RefusalError("a ratio stderr needs at least two paths")
    p = table.p
    mp, m2 = pv.mean(axis=0), pv2.mean(axis=0)
    ratio = mp ** (1.0 / p) / np.sqrt(m2)
    influence = pv / (p * mp) - pv2 / (2.0 * m2)
    stderr = ratio * influence.std(axis=0, ddof=1) / math.sqrt(M)
    expected = gaussian_moment_ratio(p)
    return [MomentRatio(float(h), float(r), expected, float(s))
            for h, r, s in zip(table.lags, ratio, stderr)]


# --- Exponent fits ---


@dataclass(frozen=True)
class ExponentFit:
    direction: str
    p: float
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    exponent: float
    ci95: tuple[float, float]
    n_points: int

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]


@dataclass(frozen=True)
class ExponentTarget:
    space_exponent: float
    time_exponent: float

    @classmethod
    def for_kernel(cls, kernel: KernelSpec) -> "ExponentTarget":
        return cls(space_exponent=kernel.H, time_exponent=kernel.gamma)


def _weights(moments: np.ndarray, stderrs: np.ndarray) -> np.ndarray:
    # Var(log m) ≈ (stderr/m)²; equal weights once any row is exact
    if np.all(stderrs > 0):
        w = (moments / stderrs) ** 2
        return w / w.mean()
    return np.ones_like(moments)


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    X = np.column_stack([np.ones_like(x), x])
    gram = (X.T * w) @ X
    if np.ptp(x) == 0 or np.linalg.cond(gram) > 1e12:
        raise RefusalError("singular design: the ladder needs at least two distinct lags")
    beta = np.linalg.solve(gram, (X.T * w) @ y)
    resid = y - X @ beta
    ss_res = float(np.sum(w * resid ** 2))
    dof = len(x) - 2
    cov = (ss_res / dof) * np.linalg.inv(gram) if dof > 0 else np.zeros((2, 2))
    y_bar = float(np.sum(w * y) / np.sum(w))
    ss_tot = float(np.sum(w * (y - y_bar) ** 2))
    r2 = 1.0 if ss_tot <= 1e-14 * max(1.0, float(np.sum(w * y * y))) else 1.0 - ss_res / ss_tot
    return float(beta[1]), float(beta[0]), math.sqrt(max(float(cov[1, 1]), 0.0)), \
        min(max(r2, 0.0), 1.0)


def fit_exponent(table: MomentTable, *, bootstrap_resamples: int = 400,
                 seed: int = 0) -> ExponentFit:
    """Weighted log-log fit of m̂_p(h) ~ C h^{p·exponent}.

    ci95 is the wider of the t interval on the slope and a bootstrap over
    paths (when the table still carries its per-path values).
    """
    n = len(table.rows)
    if n < MIN_LADDER_POINTS:
        raise RefusalError(f"a fit needs at least {MIN_LADDER_POINTS} lags, got {n}")
    moments, stderrs = table.moments, table.stderrs
    if np.any(moments <= 0):
        raise RefusalError("moments must be positive to fit a power law")
    x = np.log(table.lags)
    slope, intercept, slope_se, r2 = _wls(x, np.log(moments), _weights(moments, stderrs))

    half = float(stats.t.ppf(0.975, n - 2)) * slope_se
    ci = ((slope - half) / table.p, (slope + half) / table.p)

    pv = table.path_values
    if pv is not None and pv.shape[0] > 1 and bootstrap_resamples > 0:
        rng = np.random.default_rng(seed)
        M = pv.shape[0]
        slopes = []
        for _ in range(bootstrap_resamples):
            sample = pv[rng.integers(0, M, M)]
            m = sample.mean(axis=0)
            if np.any(m <= 0):
                continue
            se = sample.std(axis=0, ddof=1) / math.sqrt(M)
            slopes.append(_wls(x, np.log(m), _weights(m, se))[0])
        if slopes:
            lo, hi = np.percentile(slopes, [2.5, 97.5]) / table.p
            if hi - lo > ci[1] - ci[0]:
                ci = (float(lo), float(hi))

    return ExponentFit(direction=table.direction, p=table.p, slope=slope, intercept=intercept,
                       slope_stderr=slope_se, r_squared=r2, exponent=slope / table.p,
                       ci95=ci, n_points=n)


# --- Kolmogorov report ---


class DirectionVerdict(BaseModel):
    direction: str
    target: float
    fitted: Optional[float] = None
    ci95: Optional[tuple[float, float]] = None
    verdict: str = Field("NOT-RUN", description="PASS, FAIL-HIGH, FAIL-LOW or NOT-RUN.")
    exponents_by_p: dict[str, float] = Field(default_factory=dict)
    consistency: str = Field("n/a", description="PASS when all p agree within 2 ci widths.")


class KolmogorovReport(BaseModel):
    tolerance: float
    space: DirectionVerdict
    time: DirectionVerdict
    space_order_sup: Optional[float] = Field(
        None, description="Every H' below this value is an attainable space order.")
    time_order_sup: Optional[float] = Field(
        None, description="Every γ' below this value is an attainable time order.")
    notes: list[str] = Field(default_factory=list)

    @property
    def status(self) -> str:
        verdicts = [d for d in (self.space, self.time) if d.verdict != "NOT-RUN"]
        if not verdicts:
            return "FAIL"
        ok = all(d.verdict == "PASS" and d.consistency != "FAIL" for d in verdicts)
        return "PASS" if ok else "FAIL"

    def text(self) -> str:
        lines = [f"Hölder regularity report (tolerance ±{self.tolerance:g})"]
        for d in (self.space, self.time):
            if d.verdict == "NOT-RUN":
                lines.append(f"  {d.direction:5s}: not run (target {d.target:.4f})")
                continue
            by_p = ", ".join(f"p={p}: {e:.4f}" for p, e in d.exponents_by_p.items())
            lines.append(f"  {d.direction:5s}: fitted {d.fitted:.4f} "
                         f"ci95 [{d.ci95[0]:.4f}, {d.ci95[1]:.4f}] target {d.target:.4f} "
                         f"-> {d.verdict}; consistency {d.consistency} ({by_p})")
        if self.space_order_sup is not None or self.time_order_sup is not None:
            space = f"H' < {self.space_order_sup:.4f}" if self.space_order_sup is not None else "H' n/a"
            time = f"γ' < {self.time_order_sup:.4f}" if self.time_order_sup is not None else "γ' n/a"
            lines.append(f"  attainable modification orders: every (γ', H') with {time}, {space}")
        lines.extend(f"  note: {n}" for n in self.notes)
        lines.append(f"  status: {self.status}")
        return "\n".join(lines)


FitLike = Union[ExponentFit, Sequence[ExponentFit], None]


def _verdict(fitted: float, target: float, tolerance: float) -> str:
    if fitted > target + tolerance:
        return "FAIL-HIGH"
    if fitted < target - tolerance:
        return "FAIL-LOW"
    return "PASS"


def _direction_verdict(name: str, fits: FitLike, target: float, tolerance: float,
                       notes: list[str]) -> DirectionVerdict:
    if fits is None:
        return DirectionVerdict(direction=name, target=target)
    fits = [fits] if isinstance(fits, ExponentFit) else sorted(fits, key=lambda f: f.p)
    if not fits:
        return DirectionVerdict(direction=name, target=target)
    primary = fits[0]
    by_p = {f"{f.p:g}": f.exponent for f in fits}
    if len(fits) >= 2:
        spread = max(by_p.values()) - min(by_p.values())
        consistency = "PASS" if spread < 2.0 * max(f.ci_width for f in fits) else "FAIL"
    else:
        consistency = "n/a"
        notes.append(f"{name}: p-consistency needs fits for at least two values of p")
    if any(f.p > HEAVY_TAIL_P for f in fits):
        notes.append(f"{name}: p > {HEAVY_TAIL_P:g} estimators have heavy-tailed variance")
    return DirectionVerdict(direction=name, target=target, fitted=primary.exponent,
                            ci95=primary.ci95,
                            verdict=_verdict(primary.exponent, target, tolerance),
                            exponents_by_p=by_p, consistency=consistency)


def kolmogorov_report(space_fit: FitLike, time_fit: FitLike, target: ExponentTarget,
                      tolerance: float = 0.05) -> KolmogorovReport:
    notes: list[str] = []
    space = _direction_verdict("space", space_fit, target.space_exponent, tolerance, notes)
    time = _direction_verdict("time", time_fit, target.time_exponent, tolerance, notes)
    for d in (space, time):
        if d.verdict == "FAIL-HIGH":
            notes.append(f"{d.direction}: data smoother than the sharp order; "
                         "check the initial data roughness")
    return KolmogorovReport(tolerance=tolerance, space=space, time=time,
                            space_order_sup=space.fitted, time_order_sup=time.fitted,
                            notes=notes)


# --- Uniform moment bound ---


@dataclass
class UniformMomentBound:
    p: float
    per_iterate: list[float]

    @property
    def value(self) -> float:
        return max(self.per_iterate)


def _absolute_moment_chunk(payload, chunk: range) -> np.ndarray:
    config, p, n_iters = payload
    ctx = experiment_context(config)
    window = ctx.grid.window
    total = np.zeros((n_iters + 1, ctx.grid.nt + 1, window.stop - window.start))
    for path in chunk:
        slab = sample_noise_slab(ctx.grid, ctx.hurst, config.run.seed, path)
        current = ctx.homogeneous.w
        total[0] += np.abs(current[:, window]) ** p
        for k in range(1, n_iters + 1):
            current, _ = march(ctx.kernel, ctx.grid, ctx.homogeneous.w, slab, ctx.sigma,
                               driver=current)
            total[k] += np.abs(current[:, window]) ** p
    return total


def uniform_moment_bound(config: ExperimentConfig, p: float = 2.0, M: Optional[int] = None,
                         workers: Optional[int] = None) -> UniformMomentBound:
    """sup over window, time and Picard iterate of E|u^k(t,x)|^p."""
    M = M or config.solver.picard_ensemble
    n_iters = config.solver.n_iters
    total = reduce_chunks(_absolute_moment_chunk, (config, p, n_iters), M,
                          workers or config.run.workers)
    per_iterate = [float(s.max() / M) for s in total]
    logger.info("[moments] uniform E|u|^%g bound %.4g over %d iterates", p,
                max(per_iterate), n_iters + 1)
    return UniformMomentBound(p=p, per_iterate=per_iterate)


# --- Property (P) ---


@dataclass
class PropertyPResult:
    value: float
    near: float
    far: float
    t: float
    x: float
    h0: float
    refined_value: Optional[float] = None
    drift: Optional[float] = None
    status: str = "FINITE"


def _squared_green_symbol(kind: str, r: float, xi: np.ndarray) -> np.ndarray:
    """Fourier transform of x -> G_r(x)²."""
    if kind == "wave":
        return 0.5 * r * np.sinc(r * xi / math.pi)
    return np.exp(-0.25 * r * xi * xi) / (2.0 * math.sqrt(math.pi * r))


def _slice_rows(grid: SpaceTimeGrid, stride: int) -> np.ndarray:
    return np.arange(0, grid.nt, stride)


def _property_chunk(payload, chunk: range):
    config, p, refine, stride, n_lags = payload
    ctx = experiment_context(config, refine)
    rows = _slice_rows(ctx.grid, stride)
    # centring at the homogeneous field's band average keeps constant fields at zero
    center = ctx.homogeneous.w[rows].mean(axis=1, keepdims=True)
    increments = np.zeros((len(rows), n_lags, ctx.grid.nx))
    absolute = np.zeros((len(rows), ctx.grid.nx))
    for path in chunk:
        u = simulate_path(ctx, path)[rows]
        for k in range(1, n_lags + 1):
            increments[:, k - 1] += np.abs(np.roll(u, -k, axis=1) - u) ** p
        absolute += np.abs(u - center) ** p
    return increments, absolute


def _evaluate_property_p(config: ExperimentConfig, p: float, H: float, M: int,
                         workers: Optional[int], refine: int) -> PropertyPResult:
    grid = config.build_grid(refine)
    kind = config.kernels.kind
    stride = config.regularity.property_p_stride
    n_lags = int(math.floor(config.regularity.h0 / grid.dx * (1 + 1e-12)))
    if n_lags < 1:
        raise RefusalError("h0 is below one grid step")
    h0 = n_lags * grid.dx

    increments, absolute = reduce_chunks(_property_chunk, (config, p, refine, stride, n_lags),
                                         M, workers or config.run.workers, add_tuples)
    D = (increments / M) ** (2.0 / p)
    bound = (absolute / M).max(axis=1) ** (2.0 / p)

    dx = grid.dx
    r = dx * np.arange(1, n_lags + 1)
    weights = np.full(n_lags, dx)
    weights[0] = weights[-1] = 0.5 * dx
    if n_lags == 1:
        weights[0] = 0.0
    # z on both sides of y: D(y, z = y - r) is D at y - r
    near = np.zeros((len(D), grid.nx))
    for k in range(n_lags):
        dk = D[:, k]
        near += weights[k] * r[k] ** (2.0 * H - 2.0) * (dk + np.roll(dk, k + 1, axis=1))
    # the first cell (0, Δx] under D(r) ≈ D(Δx)(r/Δx)^{2H}
    d1 = D[:, 0]
    near += (d1 + np.roll(d1, 1, axis=1)) * dx ** (2.0 * H - 1.0) / (4.0 * H - 1.0)
    far = 4.0 * bound * 2.0 * h0 ** (2.0 * H - 1.0) / (1.0 - 2.0 * H)

    rows = _slice_rows(grid, stride)
    xi = grid.frequencies
    window = grid.window
    best = None
    for n_t in (grid.nt // 2, grid.nt):
        near_t = np.zeros(grid.nx)
        far_t = 0.0
        for s, row in enumerate(rows):
            if row >= n_t:
                break
            ds = min(stride, n_t - row) * grid.dt
            lag = (n_t - row) * grid.dt
            symbol = _squared_green_symbol(kind, lag, xi)
            near_t += ds * np.fft.irfft(np.fft.rfft(near[s]) * symbol, n=grid.nx)
            far_t += ds * far[s] * symbol[0]
        total = near_t[window] + far_t
        i = int(np.argmax(total))
        candidate = (float(total[i]), float(near_t[window][i]), float(far_t),
                     n_t * grid.dt, float(grid.x[window][i]))
        if best is None or candidate[0] > best[0]:
            best = candidate
    value, near_v, far_v, t, x = best
    return PropertyPResult(value=value, near=near_v, far=far_v, t=t, x=x, h0=h0)


def property_p_integral(config: ExperimentConfig, p: float = 2.0,
                        H: Optional[HurstLike] = None, *, M: Optional[int] = None,
                        workers: Optional[int] = None, refine: bool = True,
                        max_drift: float = 0.05) -> PropertyPResult:
    """∫_0^t ∫∫ G²_{t-s}(x-y) (E|u(s,y)-u(s,z)|^p)^{2/p} |y-z|^{2H-2} dy dz ds,
    maximised over the window at t = T/2 and t = T.

    |y-z| <= h0 is integrated on the grid from the Monte Carlo moment field;
    |y-z| > h0 is bounded through sup E|u - c|^p. With refine, the grid is
    doubled once and a drift above max_drift flags FINITENESS-FAIL.
    """
    hurst = float(H) if H is not None else config.noise.H
    as_hurst(hurst)
    M = M or config.run.paths
    if M < 2:
        raise RefusalError("property (P) needs at least two paths")
    result = _evaluate_property_p(config, p, hurst, M, workers, 0)
    finite = math.isfinite(result.value)
    if refine and finite:
        refined = _evaluate_property_p(config, p, hurst, M, workers, 1)
        result.refined_value = refined.value
        scale = max(abs(result.value), abs(refined.value))
        result.drift = 0.0 if scale == 0 else abs(refined.value - result.value) / scale
        finite = math.isfinite(refined.value) and result.drift <= max_drift
    result.status = "FINITE" if finite else "FINITENESS-FAIL"
    logger.info("[verify] property (P) p=%g: %.5g (near %.5g, far %.5g) drift=%s -> %s", p,
                result.value, result.near, result.far,
                "n/a" if result.drift is None else f"{result.drift:.3%}", result.status)
    return result


# --- Noise covariance ---


class CovarianceCheck(BaseModel):
    name: str
    predicted: float
    sample: float
    stderr: float
    allowance: float
    passed: bool
    refined_discrepancy: Optional[float] = None

    @property
    def discrepancy(self) -> float:
        return self.sample - self.predicted

    @property
    def bias_decayed(self) -> Optional[bool]:
        """Whether the doubled-resolution run moved the discrepancy toward 0."""
        if self.refined_discrepancy is None:
            return None
        return abs(self.refined_discrepancy) <= abs(self.discrepancy)


class NoiseCovarianceReport(BaseModel):
    H: float
    paths: int
    checks: list[CovarianceCheck]

    @property
    def status(self) -> str:
        return "PASS" if all(c.passed for c in self.checks) else "FAIL"


def verification_grid(T: float = 1.0, nx: int = 1024, nt: int = 16) -> SpaceTimeGrid:
    """Grid wide enough for the default test pairs (supports within [-8, 9])."""
    return SpaceTimeGrid(L=10.0, nx=nx, T=T, nt=nt, L_obs=0.5)


def _pairing_chunk(payload, chunk: range) -> np.ndarray:
    grid, hurst, seed, pairs = payload
    out = np.empty((len(chunk), len(pairs)))
    for i, path in enumerate(chunk):
        slab = sample_noise_slab(grid, hurst, seed, path)
        for j, pair in enumerate(pairs):
            left = pair_with_test_function(slab, pair.phi)
            right = left if pair.psi == pair.phi else pair_with_test_function(slab, pair.psi)
            out[i, j] = left * right
    return out


def _sample_covariances(grid, hurst, seed, pairs, M, workers):
    products = np.vstack(run_chunks(_pairing_chunk, (grid, hurst, seed, tuple(pairs)), M,
                                    workers))
    return products.mean(axis=0), products.std(axis=0, ddof=1) / math.sqrt(M)


def verify_noise_covariance(H: HurstLike, pairs: Optional[Sequence[TestPair]] = None,
                            M: int = 10_000, seed: int = 0, *,
                            grid: Optional[SpaceTimeGrid] = None, workers: int = 1,
                            min_paths: int = 10_000, refine: bool = False,
                            relative_allowance: float = 0.02) -> NoiseCovarianceReport:
    """Sample E[X(φ)X(ψ)] over M slabs against the spectral quadrature."""
    if M < min_paths:
        raise RefusalError(f"covariance check needs M >= {min_paths}, got {M}")
    hurst = as_hurst(H)
    pairs = list(pairs or default_test_pairs())
    grid = grid or verification_grid()
    sample, stderr = _sample_covariances(grid, hurst, seed, pairs, M, workers)
    refined = None
    if refine:
        refined, _ = _sample_covariances(grid.refined(), hurst, seed, pairs, M, workers)

    checks = []
    for j, pair in enumerate(pairs):
        predicted = spectral_covariance_quadrature(pair.phi, pair.psi, hurst)
        allowance = 3.0 * float(stderr[j]) + relative_allowance * abs(predicted)
        check = CovarianceCheck(
            name=pair.name, predicted=predicted, sample=float(sample[j]),
            stderr=float(stderr[j]), allowance=allowance,
            passed=abs(sample[j] - predicted) <= allowance,
            refined_discrepancy=None if refined is None else float(refined[j] - predicted))
        logger.info("[verify] %s: sample %.5f predicted %.5f ± %.5f -> %s", pair.name,
                    check.sample, predicted, allowance, "PASS" if check.passed else "FAIL")
        checks.append(check)
    return NoiseCovarianceReport(H=hurst.value, paths=M, checks=checks)
