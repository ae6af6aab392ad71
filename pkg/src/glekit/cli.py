"""Command-line experiment runner: kernel | correlate | mc | kl | compare.

Every run writes CSV files with a commented JSON header plus a manifest that
echoes the fully resolved configuration, so outputs are re-derivable from
their manifest alone.  Exit codes: 0 success, 2 validation error, 3 numeric
failure or exceeded comparison threshold, 4 resource cap.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, default_threads, write_manifest
from .errors import NumericError, TermBudgetError, ValidationError
from .io import read_series, write_columns, write_series
from .kernels import (
    FaberParams,
    ObservableSpec,
    build_kernel,
    estimate_scaling,
    gamma_sequence,
    mu_sequence,
)
from .klmodel import (
    DensityMarginal,
    GaussianMarginal,
    build_fluctuation_process,
    higher_order_acf,
    kl_decompose,
    sample_ensemble,
)
from .measures import Gaussian, ProductMeasure, gibbs_measure
from .poly import Polynomial
from .simulate import ChainParams, Observable, mc_autocorrelation
from .volterra import GeneralMode, Series, TimeGrid, solve_correlation
from .config import _rational


def _build_context(cfg: ExperimentConfig):
    system = cfg.system.build()
    gamma = _rational(cfg.gamma)
    if "n_sites" in system.params:
        measure = gibbs_measure(system, gamma)
    else:
        measure = ProductMeasure.uniform(Gaussian(gamma), system.dimension)
    vidx = cfg.observable.variable_index(system)
    u0 = Polynomial.variable(vidx, cfg.observable.power)
    obs = ObservableSpec.from_measure(u0, measure)
    return system, measure, obs


def _kernel_pipeline(cfg: ExperimentConfig):
    system, measure, obs = _build_context(cfg)
    kc = cfg.kernel
    gam = gamma_sequence(system.operator, obs, measure, kc.order + 2,
                         skew=kc.skew, exact=kc.mode == "exact",
                         term_cap=kc.term_cap)
    mu = mu_sequence(gam)
    if kc.delta == "consistency":
        from .kernels import select_kernel_by_consistency
        kernel, _ = select_kernel_by_consistency(mu, _grid(cfg), c0=kc.c0,
                                                 c1=kc.c1, obs=obs)
        return system, measure, obs, gam, mu, kernel
    if kc.delta is None:
        fp = estimate_scaling(gam)
        fp = FaberParams(c0=kc.c0, c1=kc.c1, delta=fp.delta)
    else:
        fp = FaberParams(c0=kc.c0, c1=kc.c1, delta=kc.delta)
    kernel = build_kernel(mu, basis=kc.basis, fp=fp, obs=obs)
    return system, measure, obs, gam, mu, kernel


def _grid(cfg: ExperimentConfig) -> TimeGrid:
    return TimeGrid(dt=cfg.grid.dt, horizon=cfg.grid.horizon)


def cmd_kernel(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    system, measure, obs, gam, mu, kernel = _kernel_pipeline(cfg)
    grid = _grid(cfg)
    kvals = kernel(grid.times)
    meta = {
        "basis": kernel.basis, "order": kernel.order, "delta": kernel.delta,
        "c0": float(kernel.faber.c0) if kernel.faber else 0.0,
        "c1": float(kernel.faber.c1) if kernel.faber else 0.0,
        "gram": float(obs.gram),
        "gamma_table": [float(g) for g in gam.values],
        "mu_table": [float(v) for v in mu.values],
    }
    idx = np.arange(1, len(gam.values) + 1, dtype=float)
    write_columns(out / "gamma.csv",
                  {"i": idx, "gamma": [float(g) for g in gam.values]}, meta)
    write_columns(out / "mu.csv",
                  {"i": idx, "mu": [float(v) for v in mu.values]}, meta)
    write_columns(out / "coeffs.csv",
                  {"q": np.arange(kernel.order + 1, dtype=float),
                   "M": kernel.coeffs}, meta)
    write_columns(out / "kernel.csv", {"t": grid.times, "K": kvals}, meta)
    write_manifest(out / "manifest.json", cfg.manifest("kernel", meta))
    print(f"kernel: order {kernel.order}, delta {kernel.delta:.6g}, "
          f"K(0) = {kernel(0.0):.6g}")
    return 0


def cmd_correlate(cfg: ExperimentConfig, kernel_file: str | None = None) -> int:
    out = Path(cfg.output_dir)
    grid = _grid(cfg)
    if kernel_file:
        kser, meta_in = read_series(kernel_file, value_name="K")
        omega = float(meta_in.get("streaming", 0.0))
        if kser.grid != grid:
            kvals = np.interp(grid.times, kser.grid.times, kser.values)
            kser = Series(grid, kvals)
        corr = solve_correlation(omega, kser, grid)
    else:
        _, _, obs, gam, mu, kernel = _kernel_pipeline(cfg)
        corr = solve_correlation(kernel.streaming, kernel, grid)
    write_series(out / "correlation.csv", corr,
                 cfg.manifest("correlate"), value_name="C")
    write_manifest(out / "manifest.json", cfg.manifest("correlate"))
    print(f"correlation solved on [0, {grid.horizon}] at dt = {grid.dt}")
    return 0


def cmd_mc(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    if cfg.system.name not in ("harmonic_chain", "fpu_chain"):
        raise ValidationError("mc requires a built-in chain system")
    params = ChainParams(n_sites=cfg.system.n_sites, mass=cfg.system.mass,
                         alpha1=cfg.system.alpha1, beta1=cfg.system.beta1,
                         gamma=cfg.gamma)
    grid = _grid(cfg)
    observable = Observable(site=cfg.observable.site, field=cfg.observable.field,
                            power=cfg.observable.power)
    acf = mc_autocorrelation(params, observable, cfg.mc.n_samples, grid,
                             seed=cfg.mc.seed, sim_dt=cfg.mc.sim_dt,
                             n_workers=cfg.threads)
    meta = cfg.manifest("mc", {"n_samples": cfg.mc.n_samples, "seed": cfg.mc.seed})
    write_series(out / "mc_acf.csv", acf, meta, value_name="acf")
    write_manifest(out / "manifest.json", meta)
    print(f"mc: {cfg.mc.n_samples} paths, acf(0) = {acf.values[0]:.6g} "
          f"+- {acf.se[0]:.2g}")
    return 0


def cmd_kl(cfg: ExperimentConfig, correlation_file: str | None = None) -> int:
    from .measures import QuarticGibbs, moment
    from .volterra import solve_fluctuation_modes

    out = Path(cfg.output_dir)
    grid = _grid(cfg)
    system, measure, obs = _build_context(cfg)
    gram = float(obs.gram)
    if correlation_file:
        corr, _ = read_series(correlation_file, value_name="C")
        if corr.grid != grid:
            raise ValidationError("correlation file grid differs from config grid")
        kernel_callable = None
        omega = 0.0
        corr_raw = Series(grid, corr.values * (gram / corr.values[0]))
    else:
        _, _, obs, gam, mu, kernel = _kernel_pipeline(cfg)
        corr = solve_correlation(kernel.streaming, kernel, grid)
        kernel_callable = kernel
        omega = kernel.streaming
        corr_raw = Series(grid, corr.values * gram)
    basis = kl_decompose(corr_raw, kmax=cfg.kl.kmax,
                         energy_floor=cfg.kl.energy_floor)

    vidx = cfg.observable.variable_index(system)
    density = measure.density(vidx)
    if isinstance(density, Gaussian):
        marginal = GaussianMarginal(mean=0.0, var=float(moment(density, 2)))
    else:
        marginal = DensityMarginal(density)
    ens = sample_ensemble(basis, marginal, cfg.kl.n_samples,
                          iters=cfg.kl.iters, seed=cfg.kl.seed)

    if kernel_callable is not None:
        h = solve_fluctuation_modes(basis.modes, basis.eigenvalues, omega,
                                    GeneralMode(kernel=kernel_callable), grid)
        hmat = np.column_stack([s.values for s in h])
        # the sampled ensemble may retain a prefix of the basis modes
        f_paths = build_fluctuation_process(ens.basis, hmat[:, :ens.basis.rank], ens)
        noise_acf = (f_paths[:, :1] * f_paths).mean(axis=0)
    else:
        hmat = None
        noise_acf = None

    meta = cfg.manifest("kl", {
        "rank": basis.rank,
        "eigenvalues": [float(x) for x in basis.eigenvalues],
        "seed": cfg.kl.seed,
        "marginal_error": ens.marginal_error,
        "acf_error": ens.acf_error,
        "converged": ens.converged,
        "iterations": ens.iterations,
    })
    mode_cols = {"t": grid.times}
    for k in range(basis.rank):
        mode_cols[f"e{k + 1}"] = basis.modes[:, k]
    write_columns(out / "modes.csv", mode_cols, meta)
    if hmat is not None:
        hcols = {"t": grid.times}
        for k in range(basis.rank):
            hcols[f"h{k + 1}"] = hmat[:, k]
        write_columns(out / "hmodes.csv", hcols, meta)
        write_columns(out / "noise_acf.csv",
                      {"t": grid.times, "acf": noise_acf}, meta)
    if cfg.kl.export_xi:
        write_columns(out / "xi.csv",
                      {f"xi{k + 1}": ens.xi[:, k] for k in range(basis.rank)},
                      meta)
    for m in (1, 2, 4):
        acf = higher_order_acf(ens, m)
        write_series(out / f"acf_m{m}.csv", acf, meta, value_name="acf")
    write_manifest(out / "manifest.json", meta)
    print(f"kl: rank {basis.rank}, marginal err {ens.marginal_error:.3g}, "
          f"acf err {ens.acf_error:.3g}, converged {ens.converged}")
    return 0


def cmd_compare(file_a: str, file_b: str, max_sup: float | None,
                max_l2: float | None, max_z: float | None,
                report_path: str | None) -> int:
    sa, _ = read_series(file_a)
    sb, _ = read_series(file_b)
    ta, tb = sa.grid.times, sb.grid.times
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    mask = (ta >= lo) & (ta <= hi)
    if not np.any(mask):
        raise ValidationError("the two series do not overlap in time")
    t = ta[mask]
    va = sa.values[mask]
    vb = np.interp(t, tb, sb.values)
    diff = va - vb
    sup = float(np.max(np.abs(diff)))
    l2 = float(np.sqrt(np.trapezoid(diff**2, t) / (t[-1] - t[0]))) if len(t) > 1 \
        else abs(float(diff[0]))
    report = {"files": [str(file_a), str(file_b)], "overlap": [lo, hi],
              "points": int(len(t)), "sup": sup, "l2": l2}
    se = None
    if sa.se is not None or sb.se is not None:
        var = np.zeros_like(t)
        if sa.se is not None:
            var = var + sa.se[mask] ** 2
        if sb.se is not None:
            var = var + np.interp(t, tb, sb.se) ** 2
        se = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(diff) / se, np.inf * np.abs(np.sign(diff)))
        z = np.where(np.isnan(z), 0.0, z)
        report["max_z"] = float(np.max(z))
    body = json.dumps(report, indent=1, sort_keys=True)
    if report_path:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(body + "\n")
    print(body)
    failed = ((max_sup is not None and sup > max_sup)
              or (max_l2 is not None and l2 > max_l2)
              or (max_z is not None and se is not None and report["max_z"] > max_z))
    return 3 if failed else 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="glekit",
        description="first-principles GLE kernels, correlations and KL noise models")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config_cmd(name: str, help_: str):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE", help="dotted-path config override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap (default: GLEKIT_THREADS or 1)")
        return p

    add_config_cmd("kernel", "compute gamma/mu tables and the memory kernel")
    p = add_config_cmd("correlate", "solve the correlation GLE")
    p.add_argument("--kernel-file", default=None,
                   help="tabulated kernel CSV (default: inline pipeline)")
    add_config_cmd("mc", "Monte-Carlo ground-truth auto-correlation")
    p = add_config_cmd("kl", "KL bundle and sampled-path auto-correlations")
    p.add_argument("--correlation-file", default=None,
                   help="correlation CSV (default: inline first-principles pipeline)")

    p = sub.add_parser("compare", help="align two series files and report errors")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--max-sup", type=float, default=None)
    p.add_argument("--max-l2", type=float, default=None)
    p.add_argument("--max-z", type=float, default=None)
    p.add_argument("--report", default=None, help="write the JSON report here")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.file_a, args.file_b, args.max_sup,
                               args.max_l2, args.max_z, args.report)
        cfg = ExperimentConfig.load(args.config, args.overrides)
        if args.threads is not None:
            cfg.threads = max(1, args.threads)
        elif cfg.threads == 1:
            cfg.threads = default_threads()
        if args.command == "kernel":
            return cmd_kernel(cfg)
        if args.command == "correlate":
            return cmd_correlate(cfg, args.kernel_file)
        if args.command == "mc":
            return cmd_mc(cfg)
        if args.command == "kl":
            return cmd_kl(cfg)
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TermBudgetError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
