# spde/solver.py
"""
Mild solutions u = w + ∫∫ G σ(u) dX on the grid, by direct exponential time
stepping and by Picard iteration, for affine σ.

The solver carries only the stochastic part Z = u - w in Fourier space and
adds the homogeneous field w, computed once per experiment, back on every
slice. Noise enters at the left endpoint of each interval (Itô/Walsh).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from spde.errors import GridError, InstabilityError, NumericalError, ValidationError
from spde.kernels import (HomogeneousField, InitialData, KernelSpec,
                          homogeneous_solution, kernel_energy)
from spde.noise import (HurstLike, NoiseSlab, SpaceTimeGrid, as_hurst,
                        riesz_constant, sample_noise_slab)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SigmaAffine:
    a: float = 0.0
    b: float = 1.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.a == 0.0:
            return np.full(np.shape(u), self.b)
        return self.a * u + self.b

    @property
    def lipschitz(self) -> float:
        return abs(self.a)

    @property
    def is_zero(self) -> bool:
        return self.a == 0.0 and self.b == 0.0


@dataclass
class SolutionField:
    u: np.ndarray
    kernel: KernelSpec
    grid: SpaceTimeGrid
    seed: int
    scheme: str = "mild"
    path: int = 0
    velocity_hat: Optional[np.ndarray] = None

    @property
    def window_values(self) -> np.ndarray:
        return self.u[:, self.grid.window]


@dataclass
class PicardSequence:
    fields: list[SolutionField]
    distances: list[float]
    ensemble: int
    flags: list[str] = field(default_factory=list)

    @property
    def ratios(self) -> list[float]:
        return [b / a if a > 0 else 0.0
                for a, b in zip(self.distances[:-1], self.distances[1:])]


@dataclass
class SliceState:
    u: np.ndarray
    z_hat: np.ndarray
    v_hat: Optional[np.ndarray] = None


@dataclass(frozen=True)
class _Propagator:
    cos: np.ndarray
    sinc: np.ndarray
    xi_sin: np.ndarray
    decay: np.ndarray
    noise_u: np.ndarray
    noise_v: Optional[np.ndarray]


@lru_cache(maxsize=8)
def propagator(kernel: KernelSpec, grid: SpaceTimeGrid) -> _Propagator:
    xi = grid.frequencies
    dt = grid.dt
    if kernel.kind == "wave":
        cos = np.cos(xi * dt)
        sinc = dt * np.sinc(xi * dt / math.pi)
        return _Propagator(cos=cos, sinc=sinc, xi_sin=xi * np.sin(xi * dt),
                           decay=cos, noise_u=sinc, noise_v=cos)
    decay = np.exp(-0.5 * xi * xi * dt)
    # variance-exact weight: q² Δt = ∫_0^Δt e^{-rξ²} dr
    z = xi * xi * dt
    safe = np.where(z == 0.0, 1.0, z)
    noise = np.sqrt(np.where(z == 0.0, 1.0, -np.expm1(-safe) / safe))
    return _Propagator(cos=decay, sinc=decay, xi_sin=np.zeros_like(xi), decay=decay,
                       noise_u=noise, noise_v=None)


def initial_state(kernel: KernelSpec, grid: SpaceTimeGrid, w0: np.ndarray) -> SliceState:
    spectrum = np.zeros(grid.nx // 2 + 1, dtype=complex)
    velocity = spectrum.copy() if kernel.kind == "wave" else None
    return SliceState(u=np.array(w0, dtype=float), z_hat=spectrum, v_hat=velocity)


def step_mild(kernel: KernelSpec, state: SliceState, row: np.ndarray, sigma: SigmaAffine,
              *, grid: SpaceTimeGrid, w_next: np.ndarray,
              driver: Optional[np.ndarray] = None, step: int = 0) -> SliceState:
    """Advance one interval [t_n, t_{n+1}].

    driver is the slice σ is evaluated on; it defaults to the current state
    (direct stepping) and is the previous iterate for Picard.
    """
    prop = propagator(kernel, grid)
    source = state.u if driver is None else driver
    if sigma.is_zero:
        forcing = None
    else:
        forcing = np.fft.rfft(sigma(source) * row) / grid.dx

    if kernel.kind == "wave":
        z_hat = prop.cos * state.z_hat + prop.sinc * state.v_hat
        v_hat = prop.cos * state.v_hat - prop.xi_sin * state.z_hat
        if forcing is not None:
            z_hat += prop.noise_u * forcing
            v_hat += prop.noise_v * forcing
    else:
        z_hat = prop.decay * state.z_hat
        v_hat = None
        if forcing is not None:
            z_hat += prop.noise_u * forcing

    u_next = w_next + np.fft.irfft(z_hat, n=grid.nx)
    if not np.isfinite(u_next).all():
        raise InstabilityError(step)
    return SliceState(u=u_next, z_hat=z_hat, v_hat=v_hat)


def check_time_step(kernel: KernelSpec, grid: SpaceTimeGrid) -> None:
    """Wave runs keep Δt <= Δx so that each noise row resolves the light cone."""
    if kernel.kind == "wave" and grid.dt > grid.dx * (1.0 + 1e-12):
        raise GridError(f"wave runs need dt <= dx, got dt={grid.dt:.4g} dx={grid.dx:.4g}",
                        field="nt")


def march(kernel: KernelSpec, grid: SpaceTimeGrid, w: np.ndarray, slab: NoiseSlab,
           sigma: SigmaAffine, driver: Optional[np.ndarray] = None):
    check_time_step(kernel, grid)
    u = np.empty((grid.nt + 1, grid.nx))
    state = initial_state(kernel, grid, w[0])
    u[0] = state.u
    for n in range(grid.nt):
        state = step_mild(kernel, state, slab.increments[n], sigma, grid=grid,
                          w_next=w[n + 1], driver=None if driver is None else driver[n],
                          step=n)
        u[n + 1] = state.u
    return u, state


def solve(kernel: KernelSpec, grid: SpaceTimeGrid, init: InitialData, sigma: SigmaAffine,
          H: HurstLike, seed: int, *, path: int = 0,
          homogeneous: Optional[HomogeneousField] = None,
          slab: Optional[NoiseSlab] = None) -> SolutionField:
    homogeneous = homogeneous or homogeneous_solution(kernel, init, grid)
    slab = slab or sample_noise_slab(grid, as_hurst(H), seed, path)
    u, state = march(kernel, grid, homogeneous.w, slab, sigma)
    return SolutionField(u=u, kernel=kernel, grid=grid, seed=seed, scheme="mild",
                         path=path, velocity_hat=state.v_hat)


def _picard_iterates(kernel, grid, w, slab, sigma, n_iters):
    """Yield u^0 = w, u^1, ..., u^{n_iters}, all driven by one slab."""
    current = w
    yield current
    for _ in range(n_iters):
        current, _ = march(kernel, grid, w, slab, sigma, driver=current)
        yield current


def contraction_level(sigma: SigmaAffine, kernel: KernelSpec, H: HurstLike, T: float) -> float:
    """|a| sqrt(c_H g(T)), the size of one Picard map in L²(Ω)."""
    return sigma.lipschitz * math.sqrt(riesz_constant(H) * kernel_energy(kernel, T, H))


def picard_solve(kernel: KernelSpec, grid: SpaceTimeGrid, init: InitialData,
                 sigma: SigmaAffine, H: HurstLike, seed: int, n_iters: int, *,
                 ensemble: int = 1, contraction_threshold: float = 0.5,
                 homogeneous: Optional[HomogeneousField] = None) -> PicardSequence:
    if n_iters < 1:
        raise ValidationError(f"n_iters must be >= 1, got {n_iters}", field="n_iters")
    hurst = as_hurst(H)
    homogeneous = homogeneous or homogeneous_solution(kernel, init, grid)
    window = grid.window
    squared = np.zeros((n_iters, grid.nt + 1, window.stop - window.start))
    fields: list[SolutionField] = []

    for path in range(ensemble):
        slab = sample_noise_slab(grid, hurst, seed, path)
        previous = None
        for k, iterate in enumerate(_picard_iterates(kernel, grid, homogeneous.w, slab,
                                                     sigma, n_iters)):
            if path == 0:
                fields.append(SolutionField(u=iterate, kernel=kernel, grid=grid, seed=seed,
                                            scheme=f"picard({k})", path=0))
            if previous is not None:
                squared[k - 1] += (iterate[:, window] - previous[:, window]) ** 2
            previous = iterate

    distances = [float(np.sqrt((s / ensemble).max())) for s in squared]
    sequence = PicardSequence(fields=fields, distances=distances, ensemble=ensemble)
    level = contraction_level(sigma, kernel, hurst, grid.T)
    if level < contraction_threshold:
        for k in range(1, n_iters - 1):
            if distances[k] > 0 and distances[k + 1] >= distances[k]:
                sequence.flags.append("scheme-inconsistency")
                logger.warning("[solver] Picard distances stopped decreasing at k=%d "
                               "although |a| sqrt(c_H g(T)) = %.3f < %.3f",
                               k, level, contraction_threshold)
                break
    logger.info("[solver] picard %s: distances=%s", kernel.kind,
                ", ".join(f"{d:.3e}" for d in distances))
    return sequence


# --- Constants of the Hölder estimate ---


@dataclass
class ConstantRecursion:
    value: float
    history: list[float]
    bound: float
    ratio: float
    diverging: bool

    @property
    def bounded(self) -> bool:
        return not self.diverging


def picard_constant_recursion(C0: float, c: float, cbar: float, Ccoef: float,
                              n: int) -> ConstantRecursion:
    """C_{k+1} = Ccoef (c + cbar C_k); geometric-sum bound checked on every iterate."""
    if min(C0, c, cbar, Ccoef) < 0 or n < 0:
        raise ValidationError("recursion inputs must be non-negative")
    ratio = Ccoef * cbar
    head = max(Ccoef * c, C0)
    history = [C0]
    for _ in range(n):
        history.append(Ccoef * (c + cbar * history[-1]))
    for k, value in enumerate(history):
        bound = head * sum(ratio ** j for j in range(k + 1))
        if value > bound * (1.0 + 1e-12):
            raise NumericalError(f"C_{k}={value} exceeds its geometric-sum bound {bound}")
    increasing = all(b > a for a, b in zip(history[1:], history[2:]))
    diverging = ratio >= 1.0 and increasing and (n >= 2)
    return ConstantRecursion(value=history[-1], history=history,
                             bound=head * sum(ratio ** j for j in range(n + 1)),
                             ratio=ratio, diverging=diverging)


@dataclass
class QPrimeExponents:
    c_exponents: tuple[float, ...]
    cbar_exponent: float
    near_time_exponent: float
    far_time_exponent: float
    c0_exponent: float

    @property
    def positive(self) -> bool:
        return self.cbar_exponent > 0 and self.near_time_exponent > 0


def qprime_exponent_terms(H: HurstLike, kind: str) -> QPrimeExponents:
    """Powers of h0 in c(h0) and cbar(h0), with γ = H (wave) or H/2 (heat)."""
    h = float(H)
    if not 0.0 < h < 1.0:
        raise ValidationError(f"H must lie in (0, 1), got {h}", field="H")
    g = h if kind == "wave" else h / 2.0
    mixed = (1.0 / (2.0 * h) - 1.0) * g
    terms = QPrimeExponents(
        c_exponents=(0.0, 0.5, h - 0.5 + mixed),
        cbar_exponent=2.0 * h - 0.5 + mixed,
        near_time_exponent=4.0 * h - 1.0 + g / h - 2.0 * g,
        far_time_exponent=2.0 * h - 1.0 + (1.0 / h - 2.0) * g,
        c0_exponent=1.0 - h,
    )
    if 0.25 < h < 0.5 and not terms.positive:
        raise NumericalError(f"exponent positivity fails at H={h} ({kind})")
    return terms
