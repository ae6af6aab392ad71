"""Karhunen-Loeve models of stationary scalar processes on a finite window.

The decomposition discretizes the covariance eigenproblem with trapezoid
weights (Nystrom), sampling draws Gaussian amplitudes and then alternates
rank remapping to a target one-time marginal with re-projection onto the
modes, and the fluctuation construction reuses each sample's amplitudes,
making the correspondence between observable paths and noise paths hold per
realization rather than in distribution only.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft
from scipy import special

from .errors import NumericError, ValidationError
from .measures import Density1D, moment
from .volterra import Series, TimeGrid, _derivative_4

ENERGY_FLOOR = 1e-8


@dataclass
class KLBasis:
    """Eigenpairs of the covariance operator on [0, T], L2-orthonormal modes."""

    grid: TimeGrid
    eigenvalues: np.ndarray          # descending, > 0
    modes: np.ndarray                # (n_nodes, K)
    mean: float = 0.0
    source_acf: np.ndarray | None = None
    trace_discrete: float = 0.0      # sum of all nonnegative discrete eigenvalues

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def mode_series(self) -> list[Series]:
        return [Series(self.grid, self.modes[:, k]) for k in range(self.rank)]

    def reconstruct_covariance(self) -> np.ndarray:
        lam = self.eigenvalues
        return (self.modes * lam) @ self.modes.T


def kl_decompose(c: Series, kmax: int | None = None,
                 energy_floor: float = ENERGY_FLOOR,
                 clip_tol: float = 1e-6) -> KLBasis:
    """Nystrom KL decomposition of a stationary auto-correlation series.

    Builds the kernel matrix C(|t_i - t_j|), symmetrizes with square-root
    trapezoid weights, solves the dense eigenproblem and rescales the
    eigenvectors to continuous L2 orthonormality.  Modes below the relative
    energy floor (or beyond ``kmax``) are dropped.  Negative eigenvalues up
    to ``clip_tol`` of the leading one (roundoff, or mild model error in an
    approximate correlation) are clipped at zero; anything worse is rejected
    as an invalid covariance.
    """
    vals = c.values
    if vals[0] <= 0:
        raise ValidationError("need C(0) > 0 for a covariance kernel")
    if not np.all(np.isfinite(vals)):
        raise NumericError("covariance series has non-finite entries")
    n = c.grid.n_nodes
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    cov = vals[idx]
    w = c.grid.trapezoid_weights()
    sw = np.sqrt(w)
    b = cov * np.outer(sw, sw)
    lam, y = np.linalg.eigh(b)
    lam, y = lam[::-1], y[:, ::-1]
    if lam[0] <= 0:
        raise ValidationError("covariance kernel is not positive")
    if np.any(lam < -clip_tol * lam[0]):
        raise ValidationError(
            "input is not positive semidefinite beyond the clip tolerance")
    trace_discrete = float(np.sum(np.clip(lam, 0.0, None)))
    lam = np.clip(lam, 0.0, None)
    keep = lam > energy_floor * lam[0]
    if kmax is not None:
        keep[kmax:] = False
    lam = lam[keep]
    modes = y[:, keep] / sw[:, None]
    # deterministic sign: largest-magnitude component positive
    for k in range(modes.shape[1]):
        j = np.argmax(np.abs(modes[:, k]))
        if modes[j, k] < 0:
            modes[:, k] = -modes[:, k]
    return KLBasis(grid=c.grid, eigenvalues=lam, modes=modes,
                   source_acf=vals.copy(), trace_discrete=trace_discrete)


@dataclass(frozen=True)
class GaussianMarginal:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.var <= 0:
            raise ValidationError("marginal variance must be positive")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * special.ndtri(u)

    @property
    def variance(self) -> float:
        return self.var


@dataclass(frozen=True)
class DensityMarginal:
    """Marginal given by a 1D density; the quantile is inverted numerically."""

    density: Density1D
    mean: float = 0.0
    grid_points: int = 4001

    @functools.cached_property
    def _table(self):
        from .measures import CustomDensity, Gaussian, QuarticGibbs, _quartic_domain
        d = self.density
        if isinstance(d, Gaussian):
            a = 40.0 / math.sqrt(float(d.gamma))
            logpdf = lambda x: -0.5 * float(d.gamma) * x * x
        elif isinstance(d, QuarticGibbs):
            a = _quartic_domain(d, 0)
            g, a1, b1 = float(d.gamma), float(d.alpha1), float(d.beta1)
            logpdf = lambda x: -g * (0.5 * a1 * x * x + 0.25 * b1 * x**4)
        elif isinstance(d, CustomDensity):
            a = d.halfwidth
            logpdf = d.log_density
        else:
            raise ValidationError(f"unsupported density {type(d).__name__}")
        x = np.linspace(-a, a, self.grid_points)
        pdf = np.exp(np.asarray(logpdf(x), dtype=float))
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * np.diff(x) / 2)])
        cdf /= cdf[-1]
        return x, cdf

    def quantile(self, u: np.ndarray) -> np.ndarray:
        x, cdf = self._table
        return self.mean + np.interp(u, cdf, x)

    @property
    def variance(self) -> float:
        m1 = moment(self.density, 1)
        return float(moment(self.density, 2) - m1 * m1)


@dataclass
class SampleEnsemble:
    """KL amplitude samples plus the paths they reconstruct."""

    basis: KLBasis
    xi: np.ndarray                  # (samples, K)
    paths: np.ndarray               # (samples, n_nodes)
    seed: object
    marginal_error: float
    acf_error: float
    converged: bool
    iterations: int

    @property
    def n_samples(self) -> int:
        return self.xi.shape[0]


def _build_paths(basis: KLBasis, xi: np.ndarray) -> np.ndarray:
    amp = np.sqrt(basis.eigenvalues)
    return basis.mean + xi @ (amp[:, None] * basis.modes.T)


def _project_xi(basis: KLBasis, paths: np.ndarray) -> np.ndarray:
    w = basis.grid.trapezoid_weights()
    amp = np.sqrt(basis.eigenvalues)
    return (paths - basis.mean) @ (basis.modes * w[:, None]) / amp[None, :]


def _marginal_error(paths: np.ndarray, marginal, probes: np.ndarray) -> float:
    emp = np.quantile(paths.ravel(), probes)
    target = marginal.quantile(probes)
    scale = math.sqrt(marginal.variance)
    return float(np.max(np.abs(emp - target)) / scale)


def _ensemble_acf(paths: np.ndarray, max_rows: int = 20000) -> np.ndarray:
    rows = paths[:max_rows]
    acf, _ = _fft_acf(rows, 1)
    return acf


def _sampling_truncation(basis: KLBasis, n_samples: int,
                         mode_floor: float | None) -> KLBasis:
    """Drop modes too weak to be identified through the rank remap.

    Re-projecting the remapped paths divides by sqrt(lambda_k), so modes with
    energy below the remap perturbation (which scales like 1/n_samples of the
    total) pick up large spurious amplitudes instead of signal.
    """
    lam = basis.eigenvalues
    floor = (10.0 / n_samples) if mode_floor is None else mode_floor
    keep = lam >= floor * lam[0]
    if np.all(keep):
        return basis
    return KLBasis(grid=basis.grid, eigenvalues=lam[keep],
                   modes=basis.modes[:, keep], mean=basis.mean,
                   source_acf=basis.source_acf,
                   trace_discrete=basis.trace_discrete)


def sample_ensemble(basis: KLBasis, marginal, n_samples: int, iters: int = 10,
                    seed=None, marginal_tol: float = 0.01,
                    acf_tol: float = 0.05,
                    mode_floor: float | None = None) -> SampleEnsemble:
    """Draw KL amplitude samples consistent with a target one-time marginal.

    Iterates: build paths from xi; rank-remap the values at every grid time
    onto the target quantiles; re-project the remapped paths onto the modes
    to update xi; re-standardize each amplitude column to zero mean and unit
    variance.  Stops early once the marginal quantile error is below
    ``marginal_tol`` and the ACF error below ``acf_tol``; otherwise finishes
    the ``iters`` sweeps and reports a warning status.  The returned ensemble
    carries the (possibly truncated, see ``mode_floor``) basis it sampled.
    """
    if n_samples < 10 * basis.rank:
        raise ValidationError("need at least 10 samples per retained mode")
    basis = _sampling_truncation(basis, n_samples, mode_floor)
    rng = np.random.default_rng(seed)
    s = n_samples
    xi = rng.standard_normal((s, basis.rank))
    qs = marginal.quantile((np.arange(s) + 0.5) / s)
    target_acf = basis.source_acf
    probes = np.linspace(0.01, 0.99, 99)
    marg_err = np.inf
    acf_err = np.inf
    done_iters = 0
    for it in range(1, iters + 1):
        paths = _build_paths(basis, xi)
        order = np.argsort(paths, axis=0)
        remapped = np.empty_like(paths)
        np.put_along_axis(remapped, order, np.broadcast_to(qs[:, None], paths.shape),
                          axis=0)
        xi = _project_xi(basis, remapped)
        xi -= xi.mean(axis=0)
        xi /= np.maximum(xi.std(axis=0), 1e-300)
        done_iters = it
        paths = _build_paths(basis, xi)
        marg_err = _marginal_error(paths, marginal, probes)
        acf = _ensemble_acf(paths)
        acf_err = float(np.max(np.abs(acf - target_acf)) / target_acf[0])
        if marg_err <= marginal_tol and acf_err <= acf_tol:
            break
    converged = marg_err <= marginal_tol and acf_err <= acf_tol
    if not converged:
        warnings.warn(
            f"marginal sampler did not converge in {done_iters} iterations "
            f"(marginal error {marg_err:.3g}, ACF error {acf_err:.3g})",
            RuntimeWarning, stacklevel=2)
    return SampleEnsemble(basis=basis, xi=xi, paths=_build_paths(basis, xi),
                          seed=seed, marginal_error=marg_err, acf_error=acf_err,
                          converged=converged, iterations=done_iters)


def _fft_acf(rows: np.ndarray, m: int, batch: int = 2048):
    """Origin-averaged raw ACF of rows**m with mean/SE over rows.

    Per row the statistic is mean_i v(t_i) v(t_{i+lag}) with v = u**m; the
    returned standard error is the spread of the per-row statistics over
    sqrt(n_rows), which for this plain average coincides with the delete-one
    jackknife.
    """
    s, n = rows.shape
    nfft = sp_fft.next_fast_len(2 * n)
    counts = np.arange(n, 0, -1, dtype=float)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    for lo in range(0, s, batch):
        v = rows[lo:lo + batch] ** m
        spec = np.fft.rfft(v, nfft, axis=1)
        corr = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=1)[:, :n] / counts
        total += corr.sum(axis=0)
        total_sq += (corr * corr).sum(axis=0)
    mean = total / s
    var = np.maximum(total_sq / s - mean**2, 0.0) / max(s - 1, 1)
    return mean, np.sqrt(var)


def higher_order_acf(ens: SampleEnsemble, m: int) -> Series:
    """Raw auto-correlation <u^m(0) u^m(t)> with jackknife standard errors."""
    if m < 1:
        raise ValidationError("power m must be >= 1")
    mean, se = _fft_acf(ens.paths, m)
    return Series(ens.basis.grid, mean, se=se)


def build_fluctuation_process(basis: KLBasis, h_modes, ens: SampleEnsemble,
                              f_mean: float = 0.0) -> np.ndarray:
    """Per-sample noise paths f(t) = f_mean + sum_k sqrt(l_k) xi_k h_k(t).

    Reuses the ensemble's own amplitudes, so each noise path corresponds to
    its observable path realization by realization.
    """
    if isinstance(h_modes, (list, tuple)):
        h = np.column_stack([hm.values if isinstance(hm, Series) else np.asarray(hm)
                             for hm in h_modes])
    else:
        h = np.asarray(h_modes, dtype=float)
    if h.shape[1] != basis.rank:
        raise ValidationError(
            f"{h.shape[1]} fluctuation modes for a rank-{basis.rank} basis")
    if h.shape[0] != basis.grid.n_nodes:
        raise ValidationError("fluctuation modes live on a different grid")
    amp = np.sqrt(basis.eigenvalues)
    return f_mean + ens.xi @ (amp[:, None] * h.T)


def gle_sample_paths(omega: float, kernel, f_paths: np.ndarray,
                     u0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Integrate du/dt = Omega u + int K(t-s) u(s) ds + f(t) per sample.

    Same trapezoid/predictor-corrector scheme as the correlation solver,
    vectorized across samples.
    """
    from .volterra import _sample_kernel
    k = _sample_kernel(kernel, grid)
    f = np.asarray(f_paths, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    s, n_nodes = f.shape
    if n_nodes != grid.n_nodes:
        raise ValidationError("forcing paths do not match the grid")
    if u0.shape != (s,):
        raise ValidationError("one initial value per forcing path required")
    dt = grid.dt
    u = np.empty((s, n_nodes))
    u[:, 0] = u0
    half_k0 = 0.5 * k[0]
    for i in range(n_nodes - 1):
        if i == 0:
            conv_i = np.zeros(s)
        else:
            conv_i = 0.5 * k[i] * u[:, 0] + half_k0 * u[:, i]
            if i > 1:
                conv_i += u[:, 1:i] @ k[i - 1:0:-1]
        fi = omega * u[:, i] + dt * conv_i + f[:, i]
        pred = u[:, i] + dt * fi
        conv_next = 0.5 * k[i + 1] * u[:, 0] + half_k0 * pred
        if i >= 1:
            conv_next += u[:, 1:i + 1] @ k[i:0:-1]
        f_next = omega * pred + dt * conv_next + f[:, i + 1]
        u[:, i + 1] = u[:, i] + 0.5 * dt * (fi + f_next)
    if not np.all(np.isfinite(u)):
        raise NumericError("path integration produced non-finite values")
    return u


def compute_v_matrix(basis: KLBasis, gram: float = 1.0) -> np.ndarray:
    """Mode-coupling matrix without phase-space access.

    v_ij = <xi_i, (d/dt) xi_j> / gram evaluated through the dispersion
    relation: v_ij = (l_i l_j)^(-1/2) gram^(-1)
    iint dC(t-s)/dt e_i(s) e_j(t) ds dt with the signed derivative of the
    even extension of C.
    """
    if basis.source_acf is None:
        raise ValidationError("basis does not carry its source ACF")
    grid = basis.grid
    n = grid.n_nodes
    dt = grid.dt
    cdot = _derivative_4(basis.source_acf, dt)
    ti = np.arange(n)
    diff = ti[:, None] - ti[None, :]          # t index minus s index
    w_signed = np.sign(diff) * cdot[np.abs(diff)]
    w = grid.trapezoid_weights()
    ew = basis.modes * w[:, None]
    inner = ew.T @ w_signed.T @ ew            # rows: e_i(s), cols: e_j(t)
    lam = basis.eigenvalues
    return inner / np.sqrt(np.outer(lam, lam)) / gram
