"""Product-form initial densities psi0(x, m) = f(x) g(m).

Used both to build exact cell averages for the grid solvers and to draw
i.i.d. particle samples by inverse CDF.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ProductDensity:
    """f(x) = prod_k (1 + x_amplitude cos(2 pi x_k + x_phase)), g(m) by m_profile.

    m_profile "exp":  e^{-m} truncated to [0, m_max] and renormalized.
    m_profile "bump": smooth bump on (m_lo, m_hi), zero elsewhere.
    """
    dim: int = 1
    x_amplitude: float = 0.0
    x_phase: float = 0.0
    m_profile: str = "exp"
    m_max: float = 30.0
    m_lo: float = 1.0
    m_hi: float = 5.0

    def __post_init__(self):
        if not 0.0 <= abs(self.x_amplitude) < 1.0:
            raise ValueError("x_amplitude must lie in (-1, 1)")
        if self.m_profile not in ("exp", "bump"):
            raise ValueError(f"unknown m profile {self.m_profile!r}")

    # --- one-dimensional pieces -------------------------------------------

    def f1(self, x):
        return 1.0 + self.x_amplitude * np.cos(TWO_PI * x + self.x_phase)

    def F1(self, x):
        """Antiderivative of f1 with F1(0) = 0."""
        A, ph = self.x_amplitude, self.x_phase
        return x + A * (np.sin(TWO_PI * x + ph) - np.sin(ph)) / TWO_PI

    def g(self, m):
        m = np.asarray(m, dtype=float)
        if self.m_profile == "exp":
            z = -np.expm1(-self.m_max)
            return np.where((m >= 0) & (m <= self.m_max), np.exp(-m) / z, 0.0)
        u = (2 * m - self.m_lo - self.m_hi) / (self.m_hi - self.m_lo)
        inside = np.abs(u) < 1
        uu = np.where(inside, u, 0.0)
        return np.where(inside, np.exp(1 - 1 / (1 - uu * uu)), 0.0) / self._bump_mass()

    def _bump_mass(self) -> float:
        x, w = np.polynomial.legendre.leggauss(200)
        u = x
        vals = np.exp(1 - 1 / (1 - u * u))
        return float(np.sum(w * vals) * 0.5 * (self.m_hi - self.m_lo))

    def G(self, m):
        """CDF of g on [0, m_max]."""
        m = np.asarray(m, dtype=float)
        if self.m_profile == "exp":
            return -np.expm1(-np.clip(m, 0, self.m_max)) / -np.expm1(-self.m_max)
        grid, cdf = self._bump_cdf_table()
        return np.interp(m, grid, cdf)

    def _bump_cdf_table(self, n: int = 20001):
        grid = np.linspace(self.m_lo, self.m_hi, n)
        vals = self.g(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))])
        return grid, cdf / cdf[-1]

    # --- grid cell averages ------------------------------------------------

    def x_cell_averages(self, G_x: int) -> np.ndarray:
        e = np.arange(G_x + 1) / G_x
        return np.diff(self.F1(e)) * G_x

    def m_cell_averages(self, G_m: int, m_max: float) -> np.ndarray:
        e = np.linspace(0.0, m_max, G_m + 1)
        h = m_max / G_m
        if self.m_profile == "exp":
            # exact, normalized on the grid's own truncation
            c = -np.diff(np.exp(-e)) / h
            return c / -np.expm1(-m_max)
        gx, gw = np.polynomial.legendre.leggauss(8)
        mc = 0.5 * (e[:-1] + e[1:])
        vals = sum(w * self.g(mc + 0.5 * h * x) for x, w in zip(gx, gw)) * 0.5
        return vals / (np.sum(vals) * h)

    def cell_averages(self, G_x: int, G_m: int, m_max: float | None = None) -> np.ndarray:
        m_max = self.m_max if m_max is None else m_max
        fx = self.x_cell_averages(G_x)
        out = fx
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, fx)
        return np.multiply.outer(out, self.m_cell_averages(G_m, m_max))

    # --- sampling ----------------------------------------------------------

    def sample(self, N: int, rng: np.random.Generator):
        """(positions (N, d), weights (N,)) drawn i.i.d. from f(x) g(m)."""
        ux = rng.random((N, self.dim))
        um = rng.random(N)
        return self._inv_F1(ux), self._inv_G(um)

    def _inv_F1(self, u):
        if self.x_amplitude == 0.0:
            return u.copy()
        x = u.copy()
        # Newton on the strictly increasing F1, then clip to the torus
        for _ in range(60):
            step = (self.F1(x) - u) / self.f1(x)
            x = np.clip(x - step, 0.0, np.nextafter(1.0, 0.0))
            if np.max(np.abs(step)) < 1e-15:
                break
        return x

    def _inv_G(self, u):
        if self.m_profile == "exp":
            return -np.log1p(u * np.expm1(-self.m_max))
        grid, cdf = self._bump_cdf_table()
        return np.interp(u, cdf, grid)


@dataclass(frozen=True)
class ModalDensity:
    """f(x) = 1 + sum_j c_j cos(2 pi k_j . x + phi_j) times the m-profile of
    ProductDensity. Modes are (k, c, phi) with k an integer d-vector; sum |c_j| < 1."""
    dim: int = 2
    modes: tuple = ()
    m_profile: str = "exp"
    m_max: float = 30.0
    m_lo: float = 1.0
    m_hi: float = 5.0

    def __post_init__(self):
        modes = []
        for k, c, ph in self.modes:
            k = tuple(int(v) for v in k)
            if len(k) != self.dim or not any(k):
                raise ValueError("each mode needs a nonzero integer vector of length dim")
            modes.append((k, float(c), float(ph)))
        if sum(abs(c) for _, c, _ in modes) >= 1.0:
            raise ValueError("mode amplitudes must sum to less than 1 (positivity)")
        object.__setattr__(self, "modes", tuple(modes))

    @property
    def _m_part(self) -> ProductDensity:
        return ProductDensity(self.dim, 0.0, 0.0, self.m_profile, self.m_max, self.m_lo, self.m_hi)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for k, c, ph in self.modes:
            out = out + c * np.cos(TWO_PI * (x @ np.asarray(k, float)) + ph)
        return out

    def x_cell_averages(self, G_x: int) -> np.ndarray:
        """Exact: a cell average of cos(2 pi k.x + phi) is its center value times
        prod_q sinc(k_q h)."""
        h = 1.0 / G_x
        c1 = (np.arange(G_x) + 0.5) * h
        X = np.stack(np.meshgrid(*([c1] * self.dim), indexing="ij"), axis=-1)
        out = np.ones(X.shape[:-1])
        for k, c, ph in self.modes:
            damp = float(np.prod(np.sinc(np.asarray(k, float) * h)))
            out = out + c * damp * np.cos(TWO_PI * (X @ np.asarray(k, float)) + ph)
        return out

    def cell_averages(self, G_x: int, G_m: int, m_max: float | None = None) -> np.ndarray:
        m_max = self.m_max if m_max is None else m_max
        return np.multiply.outer(self.x_cell_averages(G_x), self._m_part.m_cell_averages(G_m, m_max))

    def sample(self, N: int, rng: np.random.Generator):
        """Rejection sampling in x against the uniform law, inverse CDF in m."""
        bound = 1.0 + sum(abs(c) for _, c, _ in self.modes)
        xs = []
        got = 0
        while got < N:
            x = rng.random((2 * (N - got) + 16, self.dim))
            keep = rng.random(x.shape[0]) * bound < self.f(x)
            xs.append(x[keep])
            got += int(keep.sum())
        x = np.concatenate(xs)[:N]
        return x, self._m_part._inv_G(rng.random(N))
