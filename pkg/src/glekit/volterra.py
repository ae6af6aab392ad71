"""Time-domain solvers for the scalar GLE correlation and fluctuation modes.

All convolutions use trapezoidal product integration on uniform grids; the
correlation solve advances with a one-step predictor-corrector, so the whole
module is second-order in dt.  Kernel deconvolution runs the same discrete
equations backwards as a forward substitution whose pivot is dt*C(0)/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, NumericError, ValidationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*dt, i = 0..round(T/dt)."""

    dt: float
    horizon: float

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValidationError("dt and horizon must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError("horizon must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dt

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass
class Series:
    """Values tabulated on a time grid, optionally with standard errors."""

    grid: TimeGrid
    values: np.ndarray
    se: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValidationError(
                f"series length {self.values.shape} does not match grid "
                f"({self.grid.n_nodes} nodes)")
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)
            if self.se.shape != self.values.shape:
                raise ValidationError("standard errors must match values in length")

    def __len__(self):
        return len(self.values)


def _sample_kernel(kernel, grid: TimeGrid) -> np.ndarray:
    if isinstance(kernel, Series):
        if kernel.grid != grid:
            raise ValidationError("kernel series lives on a different grid")
        k = kernel.values
    elif callable(kernel):
        k = np.asarray(kernel(grid.times), dtype=float)
    else:
        k = np.asarray(kernel, dtype=float)
        if k.shape != (grid.n_nodes,):
            raise ValidationError("kernel array length does not match the grid")
    if not np.all(np.isfinite(k)):
        raise NumericError("kernel has non-finite values on the grid")
    return k


def solve_correlation(omega: float, kernel, grid: TimeGrid, c0: float = 1.0) -> Series:
    """Integrate dC/dt = Omega C + int_0^t K(t-s) C(s) ds with C(0) = c0.

    Trapezoidal convolution plus a single predictor-corrector sweep per step.
    """
    k = _sample_kernel(kernel, grid)
    dt = grid.dt
    n = grid.n_steps
    c = np.empty(n + 1)
    c[0] = c0
    half_k0 = 0.5 * k[0]

    def rate(i: int, ci: float) -> float:
        if i == 0:
            return omega * ci
        conv = 0.5 * k[i] * c[0] + half_k0 * ci
        if i > 1:
            conv += np.dot(k[i - 1:0:-1], c[1:i])
        return omega * ci + dt * conv

    for i in range(n):
        fi = rate(i, c[i])
        pred = c[i] + dt * fi
        conv_next = 0.5 * k[i + 1] * c[0] + half_k0 * pred
        if i >= 1:
            conv_next += np.dot(k[i:0:-1], c[1:i + 1])
        f_next = omega * pred + dt * conv_next
        c[i + 1] = c[i] + 0.5 * dt * (fi + f_next)
    if not np.all(np.isfinite(c)):
        raise NumericError("correlation solve produced non-finite values")
    return Series(grid, c)


def _derivative_4(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order first derivative, one-sided at the boundary nodes."""
    f = values
    n = len(f)
    if n < 6:
        raise ValidationError("need at least 6 nodes for the derivative stencil")
    d = np.empty(n)
    d[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dt)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dt)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dt)
    return d


def _second_derivative_at0(values: np.ndarray, dt: float) -> float:
    f = values
    if len(f) < 6:
        raise ValidationError("need at least 6 nodes for the second-derivative stencil")
    return float((45 * f[0] - 154 * f[1] + 214 * f[2] - 156 * f[3]
                  + 61 * f[4] - 10 * f[5]) / (12 * dt * dt))


def extract_kernel(c: Series, omega: float) -> Series:
    """Deconvolve the correlation equation for K on the grid of ``c``.

    Node 0 uses the identity K(0) = (C''(0) - Omega C'(0)) / C(0); later nodes
    solve the trapezoidal collocation equations by forward substitution.
    """
    dt = c.grid.dt
    vals = c.values
    n = c.grid.n_steps
    c0 = vals[0]
    pivot = 0.5 * dt * c0
    if abs(pivot) < 1e-12 * dt:
        raise ConditioningError("deconvolution pivot |C(0)| dt/2 too small", node=0)
    d = _derivative_4(vals, dt)
    k = np.empty(n + 1)
    k[0] = (_second_derivative_at0(vals, dt) - omega * d[0]) / c0
    for i in range(1, n + 1):
        resid = d[i] - omega * vals[i] - dt * 0.5 * k[0] * vals[i]
        if i > 1:
            resid -= dt * np.dot(k[i - 1:0:-1], vals[1:i])
        k[i] = resid / pivot
    if not np.all(np.isfinite(k)):
        raise NumericError("kernel extraction produced non-finite values")
    return Series(c.grid, k)


@dataclass(frozen=True)
class GeneralMode:
    """Known-kernel mode; with only a coupling matrix v the solve is coupled.

    ``kernel`` may be a callable, array or :class:`Series`; when given, each
    fluctuation mode decouples and is computed independently.  Otherwise the
    kernel is reconstructed on the fly as
    K(t) = sum_ij sqrt(l_i l_j) v_ij e_i(0) h_j(t).
    """

    kernel: object | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        if self.kernel is None and self.v is None:
            raise ValidationError("GeneralMode needs a kernel or a v matrix")


@dataclass(frozen=True)
class HamiltonianMode:
    """Self-consistent mode: kernel tied to the modes by the equilibrium FDT.

    K(t) = -sum_j lambda_j h_j(0) h_j(t) / gram; the minus sign follows from
    K(0) = gamma_2 < 0 while sum_j lambda_j h_j(0)^2 >= 0.
    """

    gram: float = 1.0


def solve_fluctuation_modes(modes, lambdas, omega: float, mode,
                            grid: TimeGrid) -> list[Series]:
    """Solve h_k(t) = e_k'(t) - Omega e_k(t) - int_0^t K(t-s) e_k(s) ds.

    ``modes`` are the orthonormal temporal modes e_k (list of Series or an
    (n_nodes, K) array).  At t=0 the convolution vanishes, so
    h_k(0) = e_k'(0) - Omega e_k(0) exactly.  The trapezoidal endpoint weight
    puts the current-node unknowns into a small linear system whenever the
    kernel itself depends on them (Hamiltonian and v-matrix modes).
    """
    if isinstance(modes, (list, tuple)):
        e = np.column_stack([m.values if isinstance(m, Series) else np.asarray(m)
                             for m in modes])
    else:
        e = np.asarray(modes, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    nn = grid.n_nodes
    if e.shape[0] != nn:
        raise ValidationError("mode samples do not match the grid")
    nk = e.shape[1]
    if lam.shape != (nk,):
        raise ValidationError("one eigenvalue per mode required")
    if np.any(lam <= 0):
        raise ValidationError("retain only modes with positive eigenvalues")
    dt = grid.dt
    de = np.column_stack([_derivative_4(e[:, j], dt) for j in range(nk)])
    rhs0 = de - omega * e  # e_k' - Omega e_k at every node

    if isinstance(mode, GeneralMode) and mode.kernel is not None:
        k = _sample_kernel(mode.kernel, grid)
        h = np.empty_like(e)
        h[0] = rhs0[0]
        for i in range(1, nn):
            conv = 0.5 * k[i] * e[0] + 0.5 * k[0] * e[i]
            if i > 1:
                conv += k[i - 1:0:-1] @ e[1:i]
            h[i] = rhs0[i] - dt * conv
        return [Series(grid, h[:, j]) for j in range(nk)]

    # Coupled modes: K(t) = sum_j w_j h_j(t) with w fixed by h(0).
    h = np.empty_like(e)
    h[0] = rhs0[0]
    if isinstance(mode, HamiltonianMode):
        w = -lam * h[0] / float(mode.gram)
    elif isinstance(mode, GeneralMode):
        v = np.asarray(mode.v, dtype=float)
        if v.shape != (nk, nk):
            raise ValidationError("v matrix shape must be (K, K)")
        sqrt_lam = np.sqrt(lam)
        w = (sqrt_lam * e[0]) @ v * sqrt_lam  # w_j = sum_i sqrt(l_i l_j) v_ij e_i(0)
    else:
        raise ValidationError(f"unknown fluctuation mode {mode!r}")

    kvals = np.empty(nn)
    kvals[0] = float(w @ h[0])
    e0 = e[0]
    a = np.eye(nk) + 0.5 * dt * np.outer(e0, w)
    if abs(np.linalg.det(a)) < 1e-12:
        raise ConditioningError("near-singular endpoint system", node=1)
    a_inv = np.linalg.inv(a)
    for i in range(1, nn):
        conv = 0.5 * kvals[0] * e[i]
        if i > 1:
            conv += kvals[i - 1:0:-1] @ e[1:i]
        b = rhs0[i] - dt * conv
        h[i] = a_inv @ b
        kvals[i] = float(w @ h[i])
        if not np.all(np.isfinite(h[i])):
            raise ConditioningError("fluctuation-mode solve diverged", node=i)
    return [Series(grid, h[:, j]) for j in range(nk)]
