# spde/noise.py
"""
Gaussian noise that is white in time and behaves in space like a fractional
Brownian motion with Hurst index H.

The noise is realized on a SpaceTimeGrid as cell masses
ΔX(n, j) = (B_n(x_{j+1}) - B_n(x_j)) * sqrt(Δt), where B_n are independent
fBm traces sampled exactly by circulant embedding. Every row owns its own
counter-based random stream keyed by (seed, path, row).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.special import gamma

from spde.errors import (EmbeddingError, GridError, HurstRangeError,
                         QuadratureError)

logger = logging.getLogger(__name__)

H_MIN, H_MAX = 0.25, 0.5
EMBEDDING_TOLERANCE = 1e-10
MAX_CUTOFF = 1e7


class OutsideHypothesisWarning(UserWarning):
    """H was accepted through the override although it lies outside (1/4, 1/2)."""


class TruncationWarning(UserWarning):
    """A test function reaches outside the simulated domain."""


# --- Parameters ---


@dataclass(frozen=True)
class HurstParam:
    value: float
    allow_outside: bool = False

    def __post_init__(self):
        H = self.value
        if H_MIN < H < H_MAX:
            return
        if self.allow_outside and 0.0 < H < H_MAX:
            warnings.warn(
                f"H={H} is outside the rough regime (1/4, 1/2)",
                OutsideHypothesisWarning, stacklevel=3)
            return
        bounds = "(0, 1/2)" if self.allow_outside else "(1/4, 1/2)"
        raise HurstRangeError(f"H must lie in {bounds}, got {H}", field="H")

    @property
    def outside_hypothesis(self) -> bool:
        return not (H_MIN < self.value < H_MAX)

    def __float__(self) -> float:
        return float(self.value)


HurstLike = Union[HurstParam, float]


def as_hurst(H: HurstLike) -> HurstParam:
    return H if isinstance(H, HurstParam) else HurstParam(float(H))


def default_half_width(L_obs: float, T: float) -> float:
    """Truncation-safe half width L = L_obs + T + 8 sqrt(T)."""
    return L_obs + T + 8.0 * math.sqrt(T)


@dataclass(frozen=True)
class SpaceTimeGrid:
    L: float
    nx: int
    T: float
    nt: int
    L_obs: float = 0.5

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0:
            raise GridError("L and T must be positive", field="grid")
        if self.nx < 2 or self.nx & (self.nx - 1):
            raise GridError(f"nx must be a power of two, got {self.nx}", field="nx")
        if self.nt < 1:
            raise GridError(f"nt must be positive, got {self.nt}", field="nt")
        if self.L_obs <= 0 or self.L_obs + self.T > self.L:
            raise GridError(
                f"observation window L_obs={self.L_obs} with T={self.T} "
                f"does not fit inside L={self.L}", field="L_obs")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.nx)

    @property
    def t(self) -> np.ndarray:
        """Time nodes t_0 = 0, ..., t_nt = T."""
        return self.dt * np.arange(self.nt + 1)

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies of the real FFT on the periodic domain."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.nx, d=self.dx)

    @property
    def window(self) -> slice:
        """Index slice of the observation window [-L_obs, L_obs]."""
        x = self.x
        idx = np.flatnonzero(np.abs(x) <= self.L_obs + 1e-12 * self.L)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def refined(self) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.L, 2 * self.nx, self.T, self.nt, self.L_obs)


# --- Covariance structure ---


def riesz_constant(H: HurstLike) -> float:
    """c_H = Γ(2H+1) sin(πH) / (2π); the formula itself holds on all of (0, 1)."""
    h = float(H)
    if not 0.0 < h < 1.0:
        raise HurstRangeError(f"c_H is defined for H in (0, 1), got {h}", field="H")
    return float(gamma(2.0 * h + 1.0) * math.sin(math.pi * h) / (2.0 * math.pi))


def fbm_covariance(s: float, t: float, H: HurstLike) -> float:
    h2 = 2.0 * float(H)
    return 0.5 * (abs(s) ** h2 + abs(t) ** h2 - abs(s - t) ** h2)


def increment_autocovariance(k: np.ndarray, H: float, dx: float) -> np.ndarray:
    """Covariance of fBm increments on a lattice of spacing dx at integer lag k."""
    h2 = 2.0 * H
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * dx ** h2 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k ** h2)


@lru_cache(maxsize=32)
def _embedding_eigenvalues(nx: int, dx: float, H: float) -> np.ndarray:
    gamma_k = increment_autocovariance(np.arange(nx + 1), H, dx)
    first_row = np.concatenate([gamma_k, gamma_k[-2:0:-1]])
    eigenvalues = np.fft.fft(first_row).real
    smallest = float(eigenvalues.min())
    if smallest < -EMBEDDING_TOLERANCE * float(eigenvalues.max()):
        raise EmbeddingError(smallest)
    eigenvalues = np.maximum(eigenvalues, 0.0)
    eigenvalues.setflags(write=False)
    return eigenvalues


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream for (seed, *key); independent of call order."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def sample_spatial_increments(grid: SpaceTimeGrid, H: HurstLike,
                              stream: np.random.Generator) -> np.ndarray:
    """One stationary vector of fBm increments (Var = Δx^{2H}) by circulant embedding."""
    eigenvalues = _embedding_eigenvalues(grid.nx, grid.dx, as_hurst(H).value)
    m = eigenvalues.size
    z = stream.standard_normal(m) + 1j * stream.standard_normal(m)
    return np.fft.fft(np.sqrt(eigenvalues / m) * z).real[:grid.nx]


@dataclass
class NoiseSlab:
    increments: np.ndarray
    H: HurstParam
    grid: SpaceTimeGrid
    seed: int
    path: int = 0

    def total_mass(self) -> float:
        return float(self.increments.sum())


def sample_noise_slab(grid: SpaceTimeGrid, H: HurstLike, seed: int,
                      path: int = 0) -> NoiseSlab:
    hurst = as_hurst(H)
    scale = math.sqrt(grid.dt)
    increments = np.empty((grid.nt, grid.nx))
    for n in range(grid.nt):
        increments[n] = scale * sample_spatial_increments(grid, hurst, substream(seed, path, n))
    return NoiseSlab(increments=increments, H=hurst, grid=grid, seed=seed, path=path)


# --- Test functions ---


@dataclass(frozen=True)
class GaussianBump:
    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0

    def __call__(self, x):
        return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)

    def fourier(self, xi):
        w = self.width
        return (self.amplitude * w * math.sqrt(2.0 * math.pi)
                * np.exp(-0.5 * (w * xi) ** 2 - 1j * self.center * xi))

    @property
    def envelope(self):
        return ("gaussian", abs(self.amplitude) * self.width * math.sqrt(2.0 * math.pi), self.width)

    @property
    def extent(self):
        return (self.center - 8.0 * self.width, self.center + 8.0 * self.width)


@dataclass(frozen=True)
class Indicator:
    left: float
    right: float

    def __call__(self, x):
        return ((x >= self.left) & (x < self.right)).astype(float)

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=float)
        safe = np.where(xi == 0.0, 1.0, xi)
        value = (np.exp(-1j * self.left * safe) - np.exp(-1j * self.right * safe)) / (1j * safe)
        return np.where(xi == 0.0, self.right - self.left, value)

    @property
    def envelope(self):
        return ("power", 2.0, 1.0)

    @property
    def extent(self):
        return (self.left, self.right)


Profile = Union[GaussianBump, Indicator]


@dataclass(frozen=True)
class TestFunction:
    """φ(t, x) = 1_{[t0, t1)}(t) · profile(x)."""

    __test__ = False

    profile: Profile
    t0: float = 0.0
    t1: float = 1.0

    def __call__(self, t, x):
        inside = ((t >= self.t0) & (t < self.t1)).astype(float)
        return inside * self.profile(x)


@dataclass(frozen=True)
class TestPair:
    __test__ = False

    name: str
    phi: TestFunction
    psi: TestFunction


def default_test_pairs() -> list[TestPair]:
    bump = GaussianBump()
    return [
        TestPair("bump-bump", TestFunction(bump, 0.0, 1.0), TestFunction(bump, 0.0, 1.0)),
        TestPair("bump-shifted", TestFunction(bump, 0.0, 1.0),
                 TestFunction(GaussianBump(center=1.0), 0.0, 1.0)),
        TestPair("disjoint-time", TestFunction(bump, 0.0, 0.5),
                 TestFunction(bump, 0.5, 1.0)),
    ]


def pair_with_test_function(slab: NoiseSlab,
                            phi: Union[TestFunction, Callable]) -> float:
    """Riemann pairing Σ φ(t_n, x_j) ΔX(n, j)."""
    grid = slab.grid
    if isinstance(phi, TestFunction):
        lo, hi = phi.profile.extent
        if phi.t0 < 0 or phi.t1 > grid.T or lo < -grid.L or hi > grid.L:
            warnings.warn(
                f"test function support [{phi.t0},{phi.t1}]x[{lo},{hi}] is truncated "
                f"to [0,{grid.T}]x[-{grid.L},{grid.L}]", TruncationWarning, stacklevel=2)
    t = grid.t[:-1, None]
    x = grid.x[None, :]
    values = np.broadcast_to(phi(t, x), slab.increments.shape)
    return float(np.sum(values * slab.increments))


def _pair_cutoff(phi: Profile, psi: Profile, H: float, tol: float) -> float:
    kinds = [phi.envelope, psi.envelope]
    amplitude = kinds[0][1] * kinds[1][1]
    gaussian_widths = [k[2] for k in kinds if k[0] == "gaussian"]
    if gaussian_widths:
        s = sum(w * w for w in gaussian_widths)
        return max(1.0, math.sqrt(2.0 / s * max(math.log(2.0 * amplitude / (s * tol)), 1.0)))
    # |Fφ Fψ| <= A |ξ|^{-(q1+q2)}, so the tail decays like Ξ^{-(q1+q2-2+2H)}
    exponent = kinds[0][2] + kinds[1][2] - 2.0 + 2.0 * H
    if exponent <= 0:
        raise QuadratureError(
            "spectral tail |Fφ Fψ| |ξ|^{1-2H} is not integrable; test functions too rough")
    cutoff = (2.0 * amplitude / (exponent * tol)) ** (1.0 / exponent)
    if cutoff > MAX_CUTOFF:
        raise QuadratureError(
            f"tolerance {tol:g} needs frequency cutoff {cutoff:.3g} beyond budget {MAX_CUTOFF:g}")
    return max(1.0, cutoff)


def spectral_covariance_quadrature(phi: TestFunction, psi: TestFunction, H: HurstLike,
                                   tol: float = 1e-8) -> float:
    """c_H ∫∫ Fφ(t,·)(ξ) conj(Fψ(t,·)(ξ)) |ξ|^{1-2H} dξ dt for product test functions."""
    hurst = as_hurst(H).value
    overlap = max(0.0, min(phi.t1, psi.t1) - max(phi.t0, psi.t0))
    if overlap == 0.0:
        return 0.0
    cutoff = _pair_cutoff(phi.profile, psi.profile, hurst, tol)

    def integrand(xi):
        product = phi.profile.fourier(xi) * np.conj(psi.profile.fourier(xi))
        return float(np.real(product)) * xi ** (1.0 - 2.0 * hurst)

    breakpoints = np.concatenate([[0.0], np.geomspace(min(1.0, cutoff), cutoff, 64)])
    breakpoints = np.unique(breakpoints)
    pieces = len(breakpoints) - 1
    total, error = 0.0, 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        value, err = integrate.quad(integrand, a, b, epsabs=tol / pieces,
                                    epsrel=1e-10, limit=400)
        total += value
        error += err
    if error > max(tol, 1e-8 * abs(total)):
        raise QuadratureError(f"spectral quadrature error {error:.3e} exceeds tolerance {tol:g}")
    return riesz_constant(hurst) * overlap * 2.0 * total
