"""CSV readers and writers for lattices, counts and comparison reports.

Every file starts with ``# key=value`` provenance lines. The first line is
``# created=<timestamp>`` and is the only line that varies between runs
with identical inputs. Floats are written with ``repr`` so that reading a
file back reproduces the values exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import platform
from importlib import metadata

import numpy as np

from .errors import DataError
from .observables import BinningSpec, GcpEstimate
from .statistics import BinComparison, BinnedCounts, ComparisonReport


def versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"version": pkg, "numpy": np.__version__, "python": platform.python_version()}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path, columns, rows, meta: dict | None = None) -> None:
    now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="") as fh:
        fh.write(f"# created={now}\n")
        for key, value in (meta or {}).items():
            text = _fmt(value)
            if "\n" in text:
                raise ValueError(f"metadata value for {key!r} spans lines")
            fh.write(f"# {key}={text}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_table(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Return ``(meta, columns, rows)`` with every cell as a string."""
    meta: dict[str, str] = {}
    try:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].strip().partition("=")
        if sep:
            meta[key.strip()] = value
        i += 1
    if i == len(lines):
        raise DataError(f"{path}: missing column header")
    reader = csv.reader(lines[i:])
    columns = next(reader)
    rows = [r for r in reader if r]
    for n, r in enumerate(rows, i + 2):
        if len(r) != len(columns):
            raise DataError(f"{path}:{n}: expected {len(columns)} fields, got {len(r)}")
    return meta, columns, rows


def _require(meta, key, path):
    if key not in meta:
        raise DataError(f"{path}: missing '# {key}=' header")
    return meta[key]


def _lattice(rows, spec: BinningSpec, n_values: int, path, parse=float):
    """Scatter ``m1..md,v1..vk`` rows onto the lattice; every bin exactly once."""
    out = np.zeros(spec.shape + (n_values,), dtype=type(parse("0")))
    seen = np.zeros(spec.shape, dtype=bool)
    d = spec.d
    for r in rows:
        try:
            idx = tuple(int(v) for v in r[:d])
            vals = [parse(v) for v in r[d:d + n_values]]
        except ValueError as exc:
            raise DataError(f"{path}: bad value: {exc}") from None
        if any(not 0 <= i < s for i, s in zip(idx, spec.shape)):
            raise DataError(f"{path}: bin {idx} outside lattice {spec.shape}")
        if seen[idx]:
            raise DataError(f"{path}: duplicate bin {idx}")
        seen[idx] = True
        out[idx] = vals
    if not seen.all():
        raise DataError(f"{path}: {int((~seen).sum())} lattice bins missing")
    return out


def _spec_from_meta(meta, path) -> BinningSpec:
    n_modes = int(_require(meta, "n_modes", path))
    try:
        return BinningSpec.parse(_require(meta, "subsets", path), n_modes)
    except ValueError as exc:
        raise DataError(f"{path}: bad subsets header: {exc}") from exc


# --------------------------------------------------------------------------
# GCP lattices
# --------------------------------------------------------------------------

def write_gcp_csv(path, est: GcpEstimate, spec: BinningSpec, n_modes: int,
                  meta: dict | None = None) -> None:
    """Rows ``m1..md,value,error`` in lexicographic bin order."""
    head = {"kind": "gcp", "n_modes": n_modes, "subsets": spec.format(), "n_r": est.n_r,
            "clamped": est.clamped}
    head.update(meta or {})
    head.update(versions())
    cols = [f"m{j + 1}" for j in range(spec.d)] + ["value", "error"]
    rows = (list(idx) + [est.values[idx], est.errors[idx]] for idx in np.ndindex(*spec.shape))
    write_table(path, cols, rows, head)


def read_gcp_csv(path) -> tuple[GcpEstimate, BinningSpec, dict]:
    meta, cols, rows = read_table(path)
    spec = _spec_from_meta(meta, path)
    if cols != [f"m{j + 1}" for j in range(spec.d)] + ["value", "error"]:
        raise DataError(f"{path}: unexpected GCP columns {cols}")
    lattice = _lattice(rows, spec, 2, path)
    est = GcpEstimate(lattice[..., 0], lattice[..., 1], int(meta.get("n_r", 0)),
                      clamped=int(meta.get("clamped", 0)), spec=spec)
    return est, spec, meta



# --------------------------------------------------------------------------
# binned counts
# --------------------------------------------------------------------------

def write_counts_csv(path, counts: BinnedCounts, spec: BinningSpec, n_modes: int,
                     meta: dict | None = None) -> None:
    head = {"kind": "counts", "n_modes": n_modes, "subsets": spec.format(),
            "n_samples": counts.n_samples}
    head.update(meta or {})
    head.update(versions())
    cols = [f"m{j + 1}" for j in range(spec.d)] + ["count"]
    rows = (list(idx) + [counts.counts[idx]] for idx in np.ndindex(*spec.shape))
    write_table(path, cols, rows, head)


def read_counts_csv(path) -> tuple[BinnedCounts, BinningSpec, dict]:
    meta, cols, rows = read_table(path)
    spec = _spec_from_meta(meta, path)
    if cols != [f"m{j + 1}" for j in range(spec.d)] + ["count"]:
        raise DataError(f"{path}: unexpected count columns {cols}")
    lattice = _lattice(rows, spec, 1, path, parse=int)[..., 0]
    n = int(_require(meta, "n_samples", path))
    if lattice.sum() != n:
        raise DataError(f"{path}: counts sum to {lattice.sum()}, header says {n}")
    return BinnedCounts(lattice, n, spec, meta), spec, meta


# --------------------------------------------------------------------------
# comparison reports
# --------------------------------------------------------------------------

REPORT_COLUMNS = ["bin", "theory", "experiment", "sigma_T", "sigma_E", "norm_diff"]


def write_report_csv(path, report: ComparisonReport, meta: dict | None = None) -> None:
    """Valid bins only; the summary sits in the header lines."""
    head = {"kind": "report", "chi2": report.chi2, "k": report.k,
            "chi2_over_k": report.chi2_over_k, "Z": report.z,
            "n_samples": report.n_samples}
    head.update(meta or {})
    head.update(versions())
    rows = ([":".join(str(i) for i in b.bin), b.theory, b.experiment, b.sigma_T, b.sigma_E,
             b.norm_diff] for b in report.per_bin)
    write_table(path, REPORT_COLUMNS, rows, head)


def read_report_csv(path) -> tuple[ComparisonReport, dict]:
    meta, cols, rows = read_table(path)
    if cols != REPORT_COLUMNS:
        raise DataError(f"{path}: unexpected report columns {cols}")
    try:
        per_bin = [BinComparison(tuple(int(i) for i in r[0].split(":")),
                                 *(float(v) for v in r[1:])) for r in rows]
        report = ComparisonReport(float(_require(meta, "chi2", path)),
                                  int(_require(meta, "k", path)),
                                  float(_require(meta, "Z", path)), per_bin,
                                  int(meta.get("n_samples", 0)))
    except ValueError as exc:
        raise DataError(f"{path}: bad report value: {exc}") from None
    return report, meta


PERMTEST_COLUMNS = ["trial", "chi2", "k", "chi2_over_k", "Z", "permutation"]


def write_permtest_csv(path, result, meta: dict | None = None) -> None:
    head = {"kind": "permtest", "trials": len(result.reports), "mean_Z": result.mean_z}
    head.update(meta or {})
    head.update(versions())
    rows = ([i, r.chi2, r.k, r.chi2_over_k, r.z, " ".join(str(int(p)) for p in perm)]
            for i, (r, perm) in enumerate(zip(result.reports, result.permutations)))
    write_table(path, PERMTEST_COLUMNS, rows, head)


def read_permtest_csv(path) -> tuple[list[dict], dict]:
    meta, cols, rows = read_table(path)
    if cols != PERMTEST_COLUMNS:
        raise DataError(f"{path}: unexpected permtest columns {cols}")
    out = [{"trial": int(r[0]), "chi2": float(r[1]), "k": int(r[2]),
            "chi2_over_k": float(r[3]), "Z": float(r[4]),
            "permutation": np.array([int(p) for p in r[5].split()])} for r in rows]
    return out, meta


FIT_COLUMNS = ["role", "t", "epsilon", "chi2", "k", "Z"]


def write_fit_csv(path, fit, meta: dict | None = None) -> None:
    """Optimum row followed by the four corners of the resolution box."""
    lo, hi = fit.z_spread
    head = {"kind": "fit", "refined": fit.refined, "at_edge": fit.at_edge,
            "resolution": fit.resolution, "Z_min": lo, "Z_max": hi}
    head.update(meta or {})
    head.update(versions())
    rows = [["optimum", fit.t, fit.epsilon, fit.report.chi2, fit.report.k, fit.report.z]]
    rows += [["corner", t, e, "", "", z] for (t, e), z in fit.corner_z.items()]
    write_table(path, FIT_COLUMNS, rows, head)


def read_fit_csv(path) -> tuple[list[dict], dict]:
    meta, cols, rows = read_table(path)
    if cols != FIT_COLUMNS:
        raise DataError(f"{path}: unexpected fit columns {cols}")
    out = [{"role": r[0], "t": float(r[1]), "epsilon": float(r[2]),
            "chi2": float(r[3]) if r[3] else None, "k": int(r[4]) if r[4] else None,
            "Z": float(r[5])} for r in rows]
    return out, meta


CORRELATION_COLUMNS = ["sigma", "order", "value", "error"]


def write_correlations_csv(path, rows, meta: dict | None = None) -> None:
    """Rows of ``(sigma, order, value, error)``."""
    head = {"kind": "correlations"}
    head.update(meta or {})
    head.update(versions())
    write_table(path, CORRELATION_COLUMNS, rows, head)


def read_correlations_csv(path) -> tuple[list[tuple[float, int, float, float]], dict]:
    meta, cols, rows = read_table(path)
    if cols != CORRELATION_COLUMNS:
        raise DataError(f"{path}: unexpected correlation columns {cols}")
    return [(float(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows], meta
