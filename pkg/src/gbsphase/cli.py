"""Command-line batch workflows.

Every subcommand reads a flat ``key = value`` config (``--config``), lets
flags override it, writes CSV files into ``--out`` and exits with 0 on
success, 2 on configuration errors, 3 on data errors and 4 when a result
is numerically unusable.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .counts import (bin_patterns, generate_fakes, ingest_patterns, permutation_test,
                     random_permutation, write_patterns)
from .errors import ConfigError, DataError, GbsError
from .inputs import InputModel
from .observables import BinningSpec, GcpEstimate, distinct_orders
from .oracle import exact_gcp, output_covariance
from .simulate import Simulation
from .statistics import chi_square, fit_decoherence

log = logging.getLogger("gbsphase")


def _model_meta(model: InputModel, cfg: RunConfig) -> dict:
    return {
        "family": model.family.value,
        "r": " ".join(repr(float(v)) for v in model.r),
        "epsilon": model.epsilon,
        "t": model.t,
        "matrix": cfg.entries["matrix"].value if cfg.has("matrix") else "identity",
        "seed": cfg.seed,
    }


def _out(cfg: RunConfig) -> Path:
    out = cfg.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _simulation(cfg: RunConfig, sigma: float | None = None) -> Simulation:
    model = cfg.model(sigma)
    T = cfg.matrix(model.n_modes)
    n_s, n_r = cfg.sizes()
    try:
        return Simulation(model, T, n_s, n_r, cfg.seed, cfg.threads)
    except GbsError as exc:
        raise ConfigError(f"invalid simulation setup: {exc}") from None


def _sim_meta(sim: Simulation, cfg: RunConfig) -> dict:
    meta = _model_meta(sim.model, cfg)
    meta.update(sigma=sim.sigma, n_s=sim.n_s, n_r=sim.n_r, e_s=sim.size)
    return meta


def _patterns(cfg: RunConfig):
    path = cfg.path("patterns")
    return ingest_patterns(path), path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> list[Path]:
    sigmas = cfg.sigmas()
    orders = cfg.orders()
    if 0.0 not in sigmas and not orders:
        raise ConfigError(f"{cfg.where('sigma')}: grouped probabilities need sigma = 0; "
                          "give 'orders' to sweep orderings")
    out = _out(cfg)
    written = []
    if 0.0 in sigmas:
        sim = _simulation(cfg, 0.0)
        spec = cfg.binning(sim.n_modes)
        est = sim.gcp(spec)
        path = out / "gcp.csv"
        io.write_gcp_csv(path, est, spec, sim.n_modes, _sim_meta(sim, cfg))
        written.append(path)
    if orders:
        rows = []
        meta = None
        for sigma in sigmas:
            sim = _simulation(cfg, sigma)
            meta = meta or _sim_meta(sim, cfg)
            for n in orders:
                est = sim.intensity_correlation(distinct_orders(sim.n_modes, range(n)))
                rows.append((sigma, n, est.mean, est.error))
        meta["sigma"] = " ".join(repr(s) for s in sigmas)
        path = out / "correlations.csv"
        io.write_correlations_csv(path, rows, meta)
        written.append(path)
    return written


def cmd_fake(cfg: RunConfig, fmt: str = "text") -> list[Path]:
    model = cfg.model(0.0)
    T = cfg.matrix(model.n_modes)
    n_fake = cfg.int_value("n_fake", required=True)
    ps = generate_fakes(model, T, n_fake, cfg.seed)
    out = _out(cfg)
    meta = _model_meta(model, cfg)
    meta.update(n_fake=n_fake, provenance=ps.provenance.value, **io.versions())
    path = out / ("fakes.gbsp" if fmt == "packed" else "fakes.txt")
    write_patterns(path, ps, fmt, header=meta)
    return [path]


def cmd_bin(cfg: RunConfig) -> list[Path]:
    ps, src = _patterns(cfg)
    spec = cfg.binning(ps.n_modes)
    meta = {"patterns": str(src)}
    perm = None
    if cfg.has("perm_seed"):
        perm_seed = cfg._get("perm_seed", lambda s: int(s, 0))
        perm = random_permutation(perm_seed, 0, ps.n_modes)
        meta.update(perm_seed=perm_seed, permutation=" ".join(str(int(p)) for p in perm))
    counts = bin_patterns(ps, spec, perm)
    path = _out(cfg) / "counts.csv"
    io.write_counts_csv(path, counts, spec, ps.n_modes, meta)
    return [path]


def cmd_compare(cfg: RunConfig) -> list[Path]:
    theory, t_spec, _ = io.read_gcp_csv(cfg.path("theory"))
    counts, c_spec, _ = io.read_counts_csv(cfg.path("counts"))
    if t_spec != c_spec:
        raise DataError(f"binning differs: theory {t_spec.format()} vs counts {c_spec.format()}")
    report = chi_square(theory, counts)
    path = _out(cfg) / "report.csv"
    io.write_report_csv(path, report, {"theory": str(cfg.path("theory")),
                                       "counts": str(cfg.path("counts"))})
    print(f"chi2={report.chi2:.6g} k={report.k} chi2/k={report.chi2_over_k:.6g} Z={report.z:.4g}")
    return [path]


def cmd_permtest(cfg: RunConfig) -> list[Path]:
    sim = _simulation(cfg, 0.0)
    ps, src = _patterns(cfg)
    spec = cfg.binning(ps.n_modes)
    trials = cfg.int_value("trials", 10)
    result = permutation_test(sim, ps, spec, trials, cfg.seed)
    meta = _sim_meta(sim, cfg)
    meta.update(patterns=str(src), subsets=spec.format())
    path = _out(cfg) / "permtest.csv"
    io.write_permtest_csv(path, result, meta)
    print(f"trials={len(result)} mean_Z={result.mean_z:.4g}")
    return [path]


def cmd_fit(cfg: RunConfig) -> list[Path]:
    model = cfg.model(0.0)
    T = cfg.matrix(model.n_modes)
    n_s, n_r = cfg.sizes()
    if cfg.has("counts"):
        counts, spec, _ = io.read_counts_csv(cfg.path("counts"))
        if spec != BinningSpec.full(T.n_out):
            raise DataError("fits need total-count data binned over all modes (d = 1)")
    else:
        ps, _ = _patterns(cfg)
        counts = bin_patterns(ps, BinningSpec.full(ps.n_modes))
    fit = fit_decoherence(counts, model, T, cfg.grid(), n_s, n_r, cfg.seed, cfg.threads)
    out = _out(cfg)
    meta = _model_meta(model, cfg)
    meta.update(n_s=n_s, n_r=n_r, e_s=n_s * n_r)
    io.write_fit_csv(out / "fit.csv", fit, meta)
    io.write_report_csv(out / "fit_report.csv", fit.report, meta | {"t_fit": fit.t,
                                                                   "epsilon_fit": fit.epsilon})
    lo, hi = fit.z_spread
    print(f"t={fit.t:.4f} epsilon={fit.epsilon:.4f} Z={fit.report.z:.4g} "
          f"(corner range {lo:.4g}..{hi:.4g}){' at grid edge' if fit.at_edge else ''}")
    return [out / "fit.csv", out / "fit_report.csv"]


def cmd_oracle(cfg: RunConfig) -> list[Path]:
    model = cfg.model(0.0)
    T = cfg.matrix(model.n_modes)
    spec = cfg.binning(T.n_out)
    values = exact_gcp(output_covariance(model, T), spec)
    est = GcpEstimate(values, np.zeros_like(values), 0, spec=spec)
    path = _out(cfg) / "oracle.csv"
    meta = _model_meta(model, cfg)
    meta["method"] = "exact"
    io.write_gcp_csv(path, est, spec, T.n_out, meta)
    return [path]


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", help="64-bit master seed")
    common.add_argument("--threads", help="worker thread cap")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gbsphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="grouped probabilities and correlations")
    p = sub.add_parser("fake", parents=[common], help="classical fake patterns")
    p.add_argument("--n-fake")
    p.add_argument("--format", choices=("text", "packed"), default="text")
    p = sub.add_parser("bin", parents=[common], help="bin a pattern file")
    p.add_argument("--patterns")
    p.add_argument("--perm-seed")
    p = sub.add_parser("compare", parents=[common], help="chi-square of theory vs counts")
    p.add_argument("--theory")
    p.add_argument("--counts")
    p = sub.add_parser("permtest", parents=[common], help="comparisons under random relabellings")
    p.add_argument("--patterns")
    p.add_argument("--trials")
    p = sub.add_parser("fit", parents=[common], help="fit t and epsilon to total counts")
    p.add_argument("--patterns")
    p.add_argument("--counts")
    p.add_argument("--t-grid")
    p.add_argument("--eps-grid")
    sub.add_parser("oracle", parents=[common], help="exact grouped probabilities (small M)")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fake": cmd_fake,
    "bin": cmd_bin,
    "compare": cmd_compare,
    "permtest": cmd_permtest,
    "fit": cmd_fit,
    "oracle": cmd_oracle,
}

_FLAG_KEYS = ("seed", "threads", "out", "n_fake", "patterns", "perm_seed", "theory", "counts",
              "trials", "t_grid", "eps_grid")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value.strip()
        overrides.update({k: getattr(args, k) for k in _FLAG_KEYS
                          if getattr(args, k, None) is not None})
        cfg = RunConfig.load(args.config, overrides)
        fn = COMMANDS[args.command]
        written = fn(cfg, args.format) if args.command == "fake" else fn(cfg)
    except GbsError as exc:
        print(f"gbsphase {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in written:
        log.info("wrote %s", path)
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
