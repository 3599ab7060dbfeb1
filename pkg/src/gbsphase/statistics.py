"""Distance measures between simulated and counted grouped probabilities."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NumericalValidityError, ParameterError
from .inputs import Family, InputModel
from .network import SUBUNITARY_TOL, TransmissionMatrix
from .observables import BinningSpec, GcpEstimate

log = logging.getLogger(__name__)

#: Bins need strictly more counts than this to enter the chi-square sum.
MIN_COUNT = 10
#: Z above this is treated as an extremely improbable outcome.
Z_EXTREME = 6.0
#: Parameter resolution quoted for fitted t and epsilon.
FIT_RESOLUTION = 0.0005


@dataclass
class BinnedCounts:
    """Integer counts on a grouped-count lattice."""

    counts: np.ndarray
    n_samples: int
    spec: BinningSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ParameterError("counts must be non-negative")
        self.n_samples = int(self.n_samples)
        if self.n_samples <= 0:
            raise ParameterError("sample count must be positive")

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.n_samples


@dataclass
class BinComparison:
    bin: tuple[int, ...]
    theory: float
    experiment: float
    sigma_T: float
    sigma_E: float
    norm_diff: float


@dataclass
class ComparisonReport:
    """Chi-square comparison over valid bins, plus its Z-statistic."""

    chi2: float
    k: int
    z: float
    per_bin: list[BinComparison]
    n_samples: int = 0

    @property
    def chi2_over_k(self) -> float:
        return self.chi2 / self.k

    @property
    def extreme(self) -> bool:
        return self.z > Z_EXTREME


def z_statistic(chi2: float, k: int) -> float:
    """Wilson-Hilferty normal score of a chi-square value with ``k`` bins."""
    k = int(k)
    if k < 1:
        raise NumericalValidityError("Z-statistic needs at least one valid bin")
    if chi2 < 0:
        raise ParameterError("chi-square must be non-negative")
    if k < 10:
        warnings.warn(f"Z-statistic is approximate for k = {k} < 10", stacklevel=2)
    var = 2.0 / (9.0 * k)
    return ((chi2 / k) ** (1.0 / 3.0) - (1.0 - var)) / math.sqrt(var)


def chi_square_terms(theory, experiment, sigma2) -> np.ndarray:
    """Per-bin ``(theory - experiment)^2 / sigma^2``."""
    theory, experiment, sigma2 = (np.asarray(a, dtype=float) for a in (theory, experiment, sigma2))
    if np.any(sigma2 <= 0) or not np.all(np.isfinite(sigma2)):
        raise NumericalValidityError("chi-square needs positive, finite bin variances")
    return (theory - experiment) ** 2 / sigma2


def _counts_array(theory: GcpEstimate, counts, n_samples):
    if isinstance(counts, BinnedCounts):
        arr, n = counts.counts, counts.n_samples
    else:
        arr = np.asarray(counts)
        n = int(arr.sum()) if n_samples is None else int(n_samples)
    if n_samples is not None:
        n = int(n_samples)
    if arr.shape != theory.values.shape:
        raise ParameterError(
            f"lattice mismatch: theory {theory.values.shape} vs counts {arr.shape}"
        )
    if n <= 0:
        raise ParameterError("sample count must be positive")
    return arr, n


def _experimental_variance(theory_values, experiment, n):
    # theory mean stands in for the true probability; fall back to the
    # observed frequency where the estimate is not positive
    p = np.where(theory_values > 0, theory_values, experiment)
    return np.clip(p, 0, None) / n


def chi_square(theory: GcpEstimate, counts, n_samples: int | None = None,
               min_count: int = MIN_COUNT) -> ComparisonReport:
    """Compare a simulated GCP with counted data.

    Only bins holding more than ``min_count`` counts enter the sum. The bin
    variance is the simulation's squared sampling error plus
    ``theory / N_E``.
    """
    arr, n = _counts_array(theory, counts, n_samples)
    experiment = arr / n
    valid = arr > min_count
    k = int(np.count_nonzero(valid))
    if k == 0:
        raise NumericalValidityError(f"no bin has more than {min_count} counts")
    g = theory.values[valid]
    e = experiment[valid]
    sig_t = theory.errors[valid]
    if not np.all(np.isfinite(sig_t)):
        raise NumericalValidityError("theory errors are undefined (need n_r >= 2)")
    var_e = _experimental_variance(g, e, n)
    sigma2 = sig_t ** 2 + var_e
    terms = chi_square_terms(g, e, sigma2)
    chi2 = float(terms.sum())
    per_bin = [
        BinComparison(tuple(int(i) for i in idx), float(gi), float(ei), float(st),
                      float(np.sqrt(ve)), float((gi - ei) / np.sqrt(s2)))
        for idx, gi, ei, st, ve, s2 in zip(np.argwhere(valid), g, e, sig_t, var_e, sigma2)
    ]
    return ComparisonReport(chi2, k, z_statistic(chi2, k), per_bin, n)


@dataclass
class NormalizedDifference:
    """``(theory - experiment) / sigma`` over every bin, with the
    ``+/- sigma_T / sigma`` reference band."""

    values: np.ndarray
    band: np.ndarray


def normalized_difference(theory: GcpEstimate, counts, n_samples: int | None = None) -> NormalizedDifference:
    arr, n = _counts_array(theory, counts, n_samples)
    experiment = arr / n
    sig_t = np.nan_to_num(theory.errors, nan=0.0)
    sigma = np.sqrt(sig_t ** 2 + _experimental_variance(theory.values, experiment, n))
    return NormalizedDifference(_safe_ratio(theory.values - experiment, sigma),
                                _safe_ratio(sig_t, sigma))


def _safe_ratio(num, den):
    # 0/0 counts as agreement; x/0 is signed infinity
    num, den = np.broadcast_arrays(np.asarray(num, dtype=float), np.asarray(den, dtype=float))
    out = np.divide(num, den, out=np.zeros(num.shape), where=den > 0)
    return np.where((den <= 0) & (num != 0), np.copysign(np.inf, num), out)


# --------------------------------------------------------------------------
# decoherence fit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FitGrid:
    t: tuple[float, ...]
    epsilon: tuple[float, ...]

    def __post_init__(self):
        t = tuple(sorted(float(v) for v in self.t))
        e = tuple(sorted(float(v) for v in self.epsilon))
        if not t or not e:
            raise ParameterError("fit grid is empty")
        if min(t) <= 0 or min(e) < 0 or max(e) > 1:
            raise ParameterError("grid needs t > 0 and epsilon in [0, 1]")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "epsilon", e)

    @classmethod
    def linspace(cls, t_range, eps_range) -> "FitGrid":
        return cls(tuple(np.linspace(*t_range)), tuple(np.linspace(*eps_range)))


@dataclass
class FitResult:
    t: float
    epsilon: float
    report: ComparisonReport
    refined: bool
    at_edge: bool
    corner_z: dict[tuple[float, float], float]
    resolution: float = FIT_RESOLUTION

    def __iter__(self):
        return iter((self.t, self.epsilon, self.report))

    @property
    def z_spread(self) -> tuple[float, float]:
        zs = list(self.corner_z.values()) + [self.report.z]
        return min(zs), max(zs)


def fit_decoherence(counts: BinnedCounts, base: InputModel, T: TransmissionMatrix,
                    grid: FitGrid, n_s: int, n_r: int = 16, seed: int = 0,
                    threads: int = 1, refine: bool = True) -> FitResult:
    """Fit the transmission correction ``t`` and thermal fraction ``epsilon``.

    Minimizes the total-count chi-square over ``grid`` (ties go to the point
    nearest ``(1, 0)``), then refines each axis by golden-section search
    inside the neighbouring grid cells. Every evaluation reuses ``seed``.
    """
    # local import: simulate depends on observables only, statistics sits above it
    from .simulate import Simulation

    if base.family not in (Family.PURE_SQUEEZED, Family.THERMALIZED_SQUEEZED):
        raise ParameterError("decoherence fits need a squeezed input model")
    if base.sigma != 0:
        raise ParameterError("decoherence fits use normal ordering")
    spec = BinningSpec.full(T.n_out)
    if counts.counts.shape != spec.shape:
        raise ParameterError("fit needs total-count data binned over all modes")

    cache: dict[tuple[float, float], ComparisonReport | None] = {}
    t_max = (1 + SUBUNITARY_TOL) / T.singular_values().max()

    def evaluate(point):
        t, eps = point
        if point not in cache:
            if t > t_max:
                # t * T would amplify: not a physical network
                log.info("skipping t = %g above the physical limit %g", t, t_max)
                cache[point] = None
            else:
                model = base.replace(t=t, epsilon=eps, family=Family.THERMALIZED_SQUEEZED)
                sim = Simulation(model, T, n_s, n_r, seed)
                cache[point] = chi_square(sim.gcp(spec), counts)
        return cache[point]

    def chi2(point):
        report = evaluate(point)
        return math.inf if report is None else report.chi2

    points = list(itertools.product(grid.t, grid.epsilon))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(evaluate, points))
    else:
        for p in points:
            evaluate(p)

    def key(p):
        return (chi2(p), math.hypot(p[0] - 1.0, p[1]))

    t_best, e_best = min(points, key=key)
    if cache[(t_best, e_best)] is None:
        raise ParameterError(f"every t on the grid exceeds the physical limit {t_max:.6g}")
    ti, ei = grid.t.index(t_best), grid.epsilon.index(e_best)
    t_edge = len(grid.t) > 1 and ti in (0, len(grid.t) - 1)
    e_edge = len(grid.epsilon) > 1 and ei in (0, len(grid.epsilon) - 1)
    refined = False
    if refine:
        if len(grid.t) > 2 and not t_edge:
            t_best = _golden(lambda x: chi2((x, e_best)),
                             grid.t[ti - 1], t_best, grid.t[ti + 1])
            refined = True
        if len(grid.epsilon) > 2 and not e_edge:
            e_best = _golden(lambda x: chi2((t_best, x)),
                             grid.epsilon[ei - 1], e_best, grid.epsilon[ei + 1])
            refined = True
    report = evaluate((t_best, e_best))
    corners = {}
    for dt, de in itertools.product((-FIT_RESOLUTION, FIT_RESOLUTION), repeat=2):
        corner = (t_best + dt, min(max(e_best + de, 0.0), 1.0))
        at_corner = evaluate(corner)
        if at_corner is not None:
            corners[corner] = at_corner.z
    return FitResult(t_best, e_best, report, refined, t_edge or e_edge, corners)


def _golden(f, lo, mid, hi, xtol=1e-5) -> float:
    res = optimize.minimize_scalar(f, bracket=(lo, mid, hi), method="golden",
                                   options={"xtol": xtol})
    x = float(res.x)
    return min(max(x, lo), hi)
