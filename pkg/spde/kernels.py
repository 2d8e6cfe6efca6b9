# spde/kernels.py
"""
Green's functions of the wave and heat operators, their Fourier symbols,
spectral energies, the homogeneous solutions w(t, x) and the initial-data
families used to drive the experiments.

Fourier convention: Fφ(ξ) = ∫ e^{-iξx} φ(x) dx, so that
F G_t(ξ) = sin(t|ξ|)/|ξ| (wave) and exp(-tξ²/2) (heat).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma

from spde.errors import QuadratureError, ValidationError
from spde.noise import (HurstLike, SpaceTimeGrid, as_hurst, riesz_constant,
                        sample_spatial_increments, substream)

logger = logging.getLogger(__name__)

KernelKind = Literal["wave", "heat"]
InitFamily = Literal["weierstrass", "frozen_fbm", "bump", "constant", "linear", "zero"]

# stream key reserved for frozen initial data, disjoint from (path, row) keys
INIT_STREAM_KEY = 2 ** 31


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    H: float

    def __post_init__(self):
        if self.kind not in ("wave", "heat"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}", field="kind")

    @property
    def gamma(self) -> float:
        """Time Hölder exponent of the solution."""
        return self.H if self.kind == "wave" else self.H / 2.0

    @property
    def beta(self) -> float:
        return 2.0 * self.gamma


def kernel_spec(kind: KernelKind, H: HurstLike) -> KernelSpec:
    return KernelSpec(kind=kind, H=as_hurst(H).value)


def green(kernel: KernelSpec, t: float, x):
    if t <= 0:
        raise ValidationError(f"Green's function needs t > 0, got {t}", field="t")
    x = np.asarray(x, dtype=float)
    if kernel.kind == "wave":
        return 0.5 * (np.abs(x) < t).astype(float)
    return np.exp(-x * x / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def green_fourier(kernel: KernelSpec, t: float, xi):
    xi = np.abs(np.asarray(xi, dtype=float))
    if kernel.kind == "wave":
        # np.sinc(z) = sin(πz)/(πz), continuous at 0 with value 1
        return t * np.sinc(t * xi / math.pi)
    return np.exp(-0.5 * t * xi * xi)


# --- Spectral integrals ---


def _z_minus_sin(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    z2 = z * z
    series = z * z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0))
    return np.where(small, series, z - np.sin(z))


@dataclass(frozen=True)
class _Term:
    """coef * ξ^power * trig(omega ξ), trig in {'1', 'cos', 'sin'}."""

    coef: float
    power: float
    trig: str = "1"
    omega: float = 0.0

    def tail(self, start: float, tol: float) -> float:
        trig, omega, coef = self.trig, self.omega, self.coef
        if trig == "sin" and omega < 0:
            omega, coef = -omega, -coef
        if trig != "1" and omega == 0.0:
            if trig == "sin":
                return 0.0
            trig = "1"
        if trig == "1":
            return -coef * start ** (self.power + 1.0) / (self.power + 1.0)
        value, _ = integrate.quad(lambda xi: xi ** self.power, start, np.inf,
                                  weight=trig, wvar=abs(omega), epsabs=tol, limlst=200)
        return coef * value


def _half_line(integrand: Callable[[float], float], tail_terms: list[_Term],
               cutoff: float, omega_max: float, tol: float) -> float:
    """∫_0^∞ integrand, numerically on [0, cutoff] and through tail_terms beyond."""
    step = math.pi / omega_max if omega_max > 0 else cutoff
    breakpoints = np.unique(np.concatenate([
        np.geomspace(min(1e-6, cutoff), min(1.0, cutoff), 8),
        np.arange(0.0, cutoff, step), [cutoff]]))
    if breakpoints[0] != 0.0:
        breakpoints = np.concatenate([[0.0], breakpoints])
    head, error, magnitude = 0.0, 0.0, 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        value, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=tol, limit=200)
        head += value
        error += err
        magnitude += abs(value)
    tail = sum(term.tail(cutoff, tol * max(magnitude, 1e-300)) for term in tail_terms)
    total = head + tail
    if error > 10.0 * tol * max(magnitude, 1e-300):
        raise QuadratureError(
            f"spectral quadrature error {error:.3e} exceeds relative tolerance {tol:g}")
    return total


def _heat_cutoff(t: float) -> float:
    # beyond this frequency exp(-tξ²) < e^{-60}
    return math.sqrt(60.0 / t)


def kernel_energy(kernel: KernelSpec, h: float, H: HurstLike, tol: float = 1e-10) -> float:
    """g(h) = ∫_0^h ∫_R |F G_r(ξ)|² |ξ|^{1-2H} dξ dr."""
    if h <= 0:
        raise ValidationError(f"kernel energy needs h > 0, got {h}", field="h")
    hurst = float(H)
    p1 = -1.0 - 2.0 * hurst
    if kernel.kind == "heat":
        def integrand(xi):
            return -math.expm1(-h * xi * xi) * xi ** p1
        cutoff = _heat_cutoff(h)
        terms = [_Term(1.0, p1)]
        omega = 0.0
    else:
        def integrand(xi):
            return float(_z_minus_sin(2.0 * h * xi)) / 4.0 * xi ** (p1 - 1.0)
        cutoff = 16.0 * math.pi / h
        terms = [_Term(h / 2.0, p1), _Term(-0.25, p1 - 1.0, "sin", 2.0 * h)]
        omega = 2.0 * h
    return 2.0 * _half_line(integrand, terms, cutoff, omega, tol)


def kernel_energy_closed_form(kind: KernelKind, h: float, H: HurstLike) -> float:
    hurst = float(H)
    if kind == "heat":
        return float(gamma(1.0 - hurst)) * h ** hurst / hurst
    return 2.0 ** (2.0 * hurst) * h ** (2.0 * hurst + 1.0) / (
        4.0 * riesz_constant(hurst) * (2.0 * hurst + 1.0))


def increment_variance(kernel: KernelSpec, t: float, h: float, H: HurstLike,
                       direction: Literal["space", "time"] = "space",
                       tol: float = 1e-9) -> float:
    """E|Δu|² for the Gaussian field u = ∫∫ G dX (σ ≡ 1, zero data).

    space: 2 c_H ∫_0^t ∫ (1 - cos hξ) |F G_s|² |ξ|^{1-2H} dξ ds
    time:  c_H ∫_0^t ∫ |F G_{s+h} - F G_s|² |ξ|^{1-2H} dξ ds + c_H g(h)
    """
    if t <= 0 or h <= 0:
        raise ValidationError("increment variance needs t > 0 and h > 0")
    hurst = float(H)
    c_H = riesz_constant(hurst)
    p1, p2 = -1.0 - 2.0 * hurst, -2.0 - 2.0 * hurst

    if direction == "space":
        if kernel.kind == "heat":
            def integrand(xi):
                return (2.0 * math.sin(0.5 * h * xi) ** 2 * -math.expm1(-t * xi * xi)
                        * xi ** p1)
            terms = [_Term(1.0, p1), _Term(-1.0, p1, "cos", h)]
            cutoff = _heat_cutoff(t)
        else:
            def integrand(xi):
                return (2.0 * math.sin(0.5 * h * xi) ** 2
                        * float(_z_minus_sin(2.0 * t * xi)) / 4.0 * xi ** (p1 - 1.0))
            terms = [_Term(t / 2.0, p1), _Term(-t / 2.0, p1, "cos", h),
                     _Term(-0.25, p2, "sin", 2.0 * t),
                     _Term(0.125, p2, "sin", 2.0 * t + h),
                     _Term(0.125, p2, "sin", 2.0 * t - h)]
            cutoff = 16.0 * math.pi / min(h, t)
        omega = max(h, 2.0 * t + h) if kernel.kind == "wave" else h
        return 4.0 * c_H * _half_line(integrand, terms, cutoff, omega, tol)

    if kernel.kind == "heat":
        def integrand(xi):
            return (-math.expm1(-t * xi * xi) * math.expm1(-0.5 * h * xi * xi) ** 2
                    * xi ** p1)
        terms = [_Term(1.0, p1)]
        cutoff = _heat_cutoff(min(t, h / 2.0))
        omega = 0.0
    else:
        a = 2.0 * t + h

        def integrand(xi):
            inner = t / 2.0 + (math.sin(a * xi) - math.sin(h * xi)) / (4.0 * xi)
            return 4.0 * math.sin(0.5 * h * xi) ** 2 * inner * xi ** p1
        terms = [_Term(t, p1), _Term(-t, p1, "cos", h),
                 _Term(0.5, p2, "sin", a), _Term(-0.5, p2, "sin", h),
                 _Term(-0.25, p2, "sin", a + h), _Term(-0.25, p2, "sin", a - h),
                 _Term(0.25, p2, "sin", 2.0 * h)]
        cutoff = 16.0 * math.pi / min(h, t)
        omega = a + h
    moving = 2.0 * _half_line(integrand, terms, cutoff, omega, tol)
    return c_H * (moving + kernel_energy(kernel, h, hurst, tol))


# --- Initial data ---


@dataclass
class InitialData:
    u0: Callable[[np.ndarray], np.ndarray]
    v0: Optional[Callable[[np.ndarray], np.ndarray]]
    family: InitFamily
    holder_order: float
    params: dict = field(default_factory=dict)

    def describe(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.family}({args})"


def _constant(c: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.full(np.shape(x), float(c))


def weierstrass(x, H: float, K: int):
    """W_H(x) = Σ_{k=0}^{K} 2^{-kH} cos(2^k x)."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for k in range(K + 1):
        total += 2.0 ** (-k * H) * np.cos(2.0 ** k * x)
    return total


def _frozen_fbm(H: float, seed: int, grid: SpaceTimeGrid):
    # one fBm path on a grid covering every point d'Alembert may touch
    reach = grid.L + grid.T + grid.dx
    nodes = 1 << int(math.ceil(math.log2(2.0 * reach / grid.dx)))
    support = SpaceTimeGrid(L=nodes * grid.dx / 2.0, nx=nodes, T=grid.T, nt=1,
                            L_obs=grid.L_obs)
    increments = sample_spatial_increments(support, H, substream(seed, INIT_STREAM_KEY))
    x = support.x
    path = np.concatenate([[0.0], np.cumsum(increments)])[:-1]
    path -= np.interp(0.0, x, path)
    return lambda y: np.interp(np.asarray(y, dtype=float), x, path)


def make_initial_data(family: InitFamily, *, H: float = 0.3, K: int = 30,
                      seed: int = 0, c: float = 1.0, slope: float = 1.0,
                      center: float = 0.0, width: float = 1.0,
                      v0: float | Callable | None = None,
                      grid: SpaceTimeGrid | None = None) -> InitialData:
    velocity = _constant(v0) if isinstance(v0, (int, float)) else v0
    if family == "weierstrass":
        if K < 20:
            raise ValidationError(f"Weierstrass data needs K >= 20, got {K}", field="init_K")
        return InitialData(lambda x: weierstrass(x, H, K), velocity, family, H,
                           {"H": H, "K": K})
    if family == "frozen_fbm":
        if grid is None:
            raise ValidationError("frozen fBm data needs the simulation grid", field="grid")
        return InitialData(_frozen_fbm(H, seed, grid), velocity, family, H,
                           {"H": H, "seed": seed})
    if family == "bump":
        return InitialData(lambda x: np.exp(-0.5 * ((np.asarray(x) - center) / width) ** 2),
                           velocity, family, 1.0, {"center": center, "width": width})
    if family == "constant":
        return InitialData(_constant(c), velocity, family, 1.0, {"c": c})
    if family == "linear":
        return InitialData(lambda x: slope * np.asarray(x, dtype=float), velocity, family,
                           1.0, {"slope": slope})
    if family == "zero":
        return InitialData(_constant(0.0), velocity, family, 1.0, {})
    raise ValidationError(f"unknown initial-data family {family!r}", field="init_family")


def holder_quotient(values: np.ndarray, dx: float, order: float,
                    max_lag: int | None = None) -> float:
    """max over dyadic lags 2^k dx of |f(x+h) - f(x)| / h^order."""
    values = np.asarray(values, dtype=float)
    max_lag = max_lag or values.size // 4
    best = 0.0
    lag = 1
    while lag <= max_lag:
        diffs = np.abs(values[lag:] - values[:-lag])
        best = max(best, float(diffs.max()) / (lag * dx) ** order)
        lag *= 2
    return best


def check_holder(init: InitialData, order: float, half_width: float = 1.0,
                 levels: tuple[int, ...] = (10, 12, 14, 16)) -> list[float]:
    """Hölder quotients of u0 over [-half_width, half_width] at successive dyadic resolutions."""
    quotients = []
    for level in levels:
        x = np.linspace(-half_width, half_width, 2 ** level + 1)
        quotients.append(holder_quotient(init.u0(x), x[1] - x[0], order))
    return quotients


# --- Homogeneous solution ---


@dataclass
class HomogeneousField:
    w: np.ndarray
    kernel: KernelSpec
    init: InitialData
    grid: SpaceTimeGrid


def _dalembert(init: InitialData, grid: SpaceTimeGrid) -> np.ndarray:
    x, t = grid.x, grid.t
    w = 0.5 * (init.u0(x[None, :] + t[:, None]) + init.u0(x[None, :] - t[:, None]))
    if init.v0 is not None:
        reach = grid.L + grid.T + grid.dx
        y = np.arange(-reach, reach + grid.dx, grid.dx)
        antiderivative = integrate.cumulative_trapezoid(init.v0(y), y, initial=0.0)
        upper = np.interp(x[None, :] + t[:, None], y, antiderivative)
        lower = np.interp(x[None, :] - t[:, None], y, antiderivative)
        w += 0.5 * (upper - lower)
    return w


def _heat_semigroup(init: InitialData, grid: SpaceTimeGrid) -> np.ndarray:
    u0 = init.u0(grid.x)
    # even reflection removes the jump the periodic FFT would see at ±L
    extended = np.concatenate([u0, u0[::-1]])
    spectrum = np.fft.rfft(extended)
    xi = 2.0 * np.pi * np.fft.rfftfreq(extended.size, d=grid.dx)
    w = np.empty((grid.nt + 1, grid.nx))
    w[0] = u0
    for n, t in enumerate(grid.t[1:], start=1):
        w[n] = np.fft.irfft(spectrum * np.exp(-0.5 * t * xi * xi), n=extended.size)[:grid.nx]
    return w


def homogeneous_solution(kernel: KernelSpec, init: InitialData,
                         grid: SpaceTimeGrid) -> HomogeneousField:
    if kernel.kind == "wave":
        w = _dalembert(init, grid)
    else:
        w = _heat_semigroup(init, grid)
    logger.debug("[kernels] homogeneous %s field for %s on nx=%d nt=%d",
                 kernel.kind, init.describe(), grid.nx, grid.nt)
    return HomogeneousField(w=w, kernel=kernel, init=init, grid=grid)


def homogeneous_increment_bound(homogeneous: HomogeneousField, direction: Literal["space", "time"],
                                lags: list[int]) -> np.ndarray:
    """sup over the window of |w(t,x+h) - w(t,x)| (space) or |w(t+h,x) - w(t,x)| (time)."""
    window = homogeneous.grid.window
    w = homogeneous.w
    bounds = []
    for k in lags:
        if direction == "space":
            diff = w[:, window.start + k:window.stop] - w[:, window.start:window.stop - k]
        else:
            diff = w[k:, window] - w[:-k, window]
        bounds.append(float(np.abs(diff).max()))
    return np.asarray(bounds)
