"""Correlation solver, kernel deconvolution, fluctuation-mode stepping."""

import math

import numpy as np
import pytest
from scipy import special

from glekit.errors import ConditioningError, NumericError, ValidationError
from glekit.volterra import (
    GeneralMode,
    HamiltonianMode,
    Series,
    TimeGrid,
    extract_kernel,
    solve_correlation,
    solve_fluctuation_modes,
)


def bessel_kernel(t):
    t = np.asarray(t, dtype=float)
    return np.where(t == 0, -2.0, -2.0 * special.jv(1, 2 * t) / np.where(t == 0, 1.0, t))


def test_grid_validation():
    with pytest.raises(ValidationError):
        TimeGrid(dt=-0.1, horizon=1.0)
    with pytest.raises(ValidationError):
        TimeGrid(dt=0.3, horizon=1.0)
    g = TimeGrid(dt=0.1, horizon=1.0)
    assert g.n_nodes == 11
    assert g.times[-1] == pytest.approx(1.0)


def test_pure_exponential():
    grid = TimeGrid(dt=1e-3, horizon=5.0)
    c = solve_correlation(-1.0, lambda t: np.zeros_like(t), grid)
    assert c.values[0] == 1.0
    assert np.max(np.abs(c.values - np.exp(-grid.times))) < 5e-7


def test_no_dynamics_is_constant():
    grid = TimeGrid(dt=1e-2, horizon=2.0)
    c = solve_correlation(0.0, lambda t: np.zeros_like(t), grid)
    assert np.all(c.values == 1.0)


def test_bessel_pair():
    grid = TimeGrid(dt=1e-3, horizon=10.0)
    c = solve_correlation(0.0, bessel_kernel, grid)
    assert np.max(np.abs(c.values - special.jv(0, 2 * grid.times))) < 1e-4


def test_second_order_convergence():
    target = lambda t: special.jv(0, 2 * t)
    errs = []
    for dt in (4e-3, 2e-3):
        grid = TimeGrid(dt=dt, horizon=5.0)
        c = solve_correlation(0.0, bessel_kernel, grid)
        errs.append(np.max(np.abs(c.values - target(grid.times))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)


def test_non_finite_kernel_rejected():
    grid = TimeGrid(dt=0.1, horizon=1.0)
    with pytest.raises(NumericError):
        solve_correlation(0.0, lambda t: np.full_like(t, np.nan), grid)


def test_extract_kernel_memoryless():
    grid = TimeGrid(dt=1e-3, horizon=5.0)
    c = Series(grid, np.exp(-grid.times))
    k = extract_kernel(c, -1.0)
    assert np.max(np.abs(k.values)) < 1e-6


def test_extract_kernel_bessel():
    grid = TimeGrid(dt=1e-3, horizon=10.0)
    c = Series(grid, special.jv(0, 2 * grid.times))
    k = extract_kernel(c, 0.0)
    assert np.max(np.abs(k.values - bessel_kernel(grid.times))) < 1e-3
    # t=0 identity: K(0) = C''(0) = gamma_2 = -2 within O(dt^2) stencils
    assert k.values[0] == pytest.approx(-2.0, abs=1e-6)


def test_extract_kernel_error_growth_at_most_linear():
    grid = TimeGrid(dt=1e-3, horizon=10.0)
    c = Series(grid, special.jv(0, 2 * grid.times))
    k = extract_kernel(c, 0.0)
    err = np.abs(k.values - bessel_kernel(grid.times))
    n = grid.n_nodes
    early = np.max(err[: n // 10]) + 1e-9
    # allow linear growth in node index, nothing faster
    idx = np.arange(1, n + 1)
    assert np.all(err <= early * (1 + 20.0 * idx / n))


def test_round_trip_random_smooth_kernels():
    # solve(extract(C)) reproduces C at second order; extract(solve(K))
    # recovers K up to the marginally-stable sawtooth of first-kind trapezoid
    # deconvolution, whose amplitude still shrinks with dt.
    rng = np.random.default_rng(5)
    draws = [tuple(rng.uniform(-1, 1, 4)) + (float(rng.uniform(-0.5, 0.5)),)
             for _ in range(4)]
    sup_c = {}
    sup_k = {}
    for dt in (2e-3, 1e-3):
        grid = TimeGrid(dt=dt, horizon=4.0)
        t = grid.times
        errs_c, errs_k = [], []
        for a, b, w1, w2, omega in draws:
            kern = a * np.cos(w1 * t) + b * np.sin(w2 * t) * np.exp(-0.3 * t)
            c = solve_correlation(omega, Series(grid, kern), grid)
            back = extract_kernel(c, omega)
            errs_k.append(np.max(np.abs(back.values - kern)))
            again = solve_correlation(omega, back, grid)
            errs_c.append(np.max(np.abs(again.values - c.values)))
        sup_c[dt], sup_k[dt] = errs_c, errs_k
    for i in range(len(draws)):
        # correlation side: O(dt^2)
        assert sup_c[2e-3][i] < 5e-6
        assert sup_c[1e-3][i] <= sup_c[2e-3][i] / 4 * 1.4
        # kernel side: at least first order uniformly, and small
        assert sup_k[1e-3][i] <= sup_k[2e-3][i] * 0.65
        assert sup_k[1e-3][i] < 1e-3


def test_extract_kernel_pivot_guard():
    grid = TimeGrid(dt=1e-3, horizon=0.01)
    c = Series(grid, np.zeros(grid.n_nodes))
    with pytest.raises((ConditioningError, ValidationError)):
        extract_kernel(c, 0.0)


def _cosine_basis(grid: TimeGrid, k: int) -> np.ndarray:
    """Orthonormal cosines on [0, T]: e_0 = 1/sqrt(T), e_k = sqrt(2/T) cos(k pi t/T)."""
    t = grid.times
    T = grid.horizon
    if k == 0:
        return np.full_like(t, 1.0 / math.sqrt(T))
    return math.sqrt(2.0 / T) * np.cos(k * math.pi * t / T)


def test_fluctuation_modes_no_memory():
    grid = TimeGrid(dt=1e-3, horizon=2.0)
    e = np.column_stack([_cosine_basis(grid, k) for k in range(1, 4)])
    lam = np.array([1.0, 0.5, 0.25])
    hs = solve_fluctuation_modes(e, lam, 0.0, GeneralMode(kernel=lambda t: np.zeros_like(t)),
                                 grid)
    T = grid.horizon
    for k, h in enumerate(hs, start=1):
        expected = -math.sqrt(2.0 / T) * (k * math.pi / T) * np.sin(k * math.pi * grid.times / T)
        assert np.max(np.abs(h.values - expected)) < 1e-8


def test_fluctuation_boundary_identity():
    grid = TimeGrid(dt=1e-3, horizon=2.0)
    e = np.column_stack([_cosine_basis(grid, k) for k in range(3)])
    lam = np.array([1.0, 0.7, 0.2])
    omega = -0.3
    hs = solve_fluctuation_modes(e, lam, omega, GeneralMode(kernel=bessel_kernel), grid)
    de0 = (-25 * e[0] + 48 * e[1] - 36 * e[2] + 16 * e[3] - 3 * e[4]) / (12 * grid.dt)
    for j, h in enumerate(hs):
        assert h.values[0] == pytest.approx(de0[j] - omega * e[0, j], abs=1e-12)


def test_single_mode_against_dense_solve():
    # one retained mode, Hamiltonian coupling: compare the stepping solution
    # with a dense lower-triangular solve of the same discrete equations
    grid = TimeGrid(dt=2e-3, horizon=2.0)
    t = grid.times
    T = grid.horizon
    omega = 0.0
    e1 = math.sqrt(2.0 / T) * np.cos(math.pi * t / T)
    lam = np.array([0.8])
    hs = solve_fluctuation_modes(e1[:, None], lam, omega, HamiltonianMode(gram=1.0), grid)
    h = hs[0].values
    # dense solve: h(t_i) + dt*sum''_l K(t_i - t_l) e1(t_l) = e1'(t_i), with
    # K(tau) = -lam h(0) h(tau)
    from glekit.volterra import _derivative_4
    n = grid.n_nodes
    de = _derivative_4(e1, grid.dt)
    h0 = de[0]
    a = np.eye(n)
    rhs = np.empty(n)
    rhs[0] = h0
    w = grid.dt * np.ones(n)
    for i in range(1, n):
        # unknowns h[j]; equation: h[i] - lam*h0*dt*(1/2 h[i] e1[0] + ... ) = de[i]
        row = np.zeros(n)
        row[i] = 1.0
        for l in range(0, i + 1):
            wt = 0.5 * grid.dt if l in (0, i) else grid.dt
            # K(t_i - t_l) = -lam h0 h[i-l]
            row[i - l] += wt * lam[0] * h0 * e1[l]
        a[i] = row
        rhs[i] = de[i]
    dense = np.linalg.solve(a, rhs)
    assert np.max(np.abs(h - dense)) < 1e-8


def test_general_mode_needs_kernel_or_v():
    with pytest.raises(ValidationError):
        GeneralMode()
