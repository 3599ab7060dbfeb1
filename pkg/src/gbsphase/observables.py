"""Click statistics and grouped count probabilities from phase-space ensembles.

Every estimator here works on a *repeat source*: any object with
``sigma``, ``n_r``, ``n_s``, ``n_modes`` and ``repeat_blocks(i)`` yielding
``(alpha, beta)`` output blocks for repeat ``i``. Both
:class:`~gbsphase.inputs.AmplitudeEnsemble` (already in memory) and
:class:`~gbsphase.simulate.Simulation` (generated lazily) qualify.

Per-repeat means are formed first; the real part is taken on those means,
and the spread over repeats gives the sampling error.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, UnsupportedOrderError

log = logging.getLogger(__name__)

#: Real parts of n' below this are clamped before exponentiation.
EXP_CLAMP = -700.0


class Estimate(NamedTuple):
    mean: float
    error: float


# --------------------------------------------------------------------------
# binning
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BinningSpec:
    """Disjoint output-mode subsets defining the grouped-count axes."""

    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subsets = tuple(tuple(int(i) for i in s) for s in self.subsets)
        if not subsets or any(len(s) == 0 for s in subsets):
            raise ParameterError("binning needs at least one non-empty subset")
        flat = [i for s in subsets for i in s]
        if min(flat) < 0:
            raise ParameterError("subset indices must be non-negative")
        if len(set(flat)) != len(flat):
            raise ParameterError("binning subsets overlap or repeat a mode")
        object.__setattr__(self, "subsets", subsets)

    @classmethod
    def equal_split(cls, n_modes: int, d: int) -> "BinningSpec":
        if d < 1 or n_modes % d:
            raise ParameterError(f"equal split needs d dividing M (M={n_modes}, d={d})")
        w = n_modes // d
        return cls(tuple(tuple(range(j * w, (j + 1) * w)) for j in range(d)))

    @classmethod
    def full(cls, n_modes: int) -> "BinningSpec":
        return cls.equal_split(n_modes, 1)

    @classmethod
    def parse(cls, text: str, n_modes: int, d: int | None = None) -> "BinningSpec":
        """Parse ``equal-split`` or explicit groups such as ``0-3,5;4,6-7``."""
        text = text.strip()
        if text.lower() in ("equal-split", "equal_split", "equal"):
            return cls.equal_split(n_modes, 1 if d is None else d)
        groups = []
        for part in text.split(";"):
            idx: list[int] = []
            for item in part.split(","):
                item = item.strip()
                if not item:
                    continue
                try:
                    if "-" in item:
                        lo, hi = item.split("-", 1)
                        idx.extend(range(int(lo), int(hi) + 1))
                    else:
                        idx.append(int(item))
                except ValueError:
                    raise ParameterError(f"bad subset item {item!r}") from None
            groups.append(tuple(idx))
        spec = cls(tuple(groups))
        if d is not None and spec.d != d:
            raise ParameterError(f"subset list has {spec.d} groups but d = {d}")
        spec.check(n_modes)
        return spec

    def format(self) -> str:
        parts = []
        for s in self.subsets:
            items, start = [], 0
            while start < len(s):
                end = start
                while end + 1 < len(s) and s[end + 1] == s[end] + 1:
                    end += 1
                items.append(str(s[start]) if end == start else f"{s[start]}-{s[end]}")
                start = end + 1
            parts.append(",".join(items))
        return ";".join(parts)

    @property
    def d(self) -> int:
        return len(self.subsets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.subsets)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(s) + 1 for s in self.subsets)

    @property
    def order(self) -> int:
        return sum(self.sizes)

    def check(self, n_modes: int) -> None:
        top = max(i for s in self.subsets for i in s)
        if top >= n_modes:
            raise ParameterError(f"subset index {top} out of range for {n_modes} modes")

    def permuted(self, perm) -> "BinningSpec":
        """Subsets expressed in the original mode labels after ``perm``."""
        perm = np.asarray(perm)
        return BinningSpec(tuple(tuple(int(perm[i]) for i in s) for s in self.subsets))


def bin_count(spec: BinningSpec) -> int:
    return math.prod(spec.shape)


def permutation_count(n_modes: int, d: int) -> int:
    """Distinct equal-split groupings, ``binom(M, M/d) / d``."""
    if d < 1 or n_modes % d:
        raise ParameterError(f"d = {d} does not divide M = {n_modes}")
    q, rem = divmod(math.comb(n_modes, n_modes // d), d)
    if rem:
        raise ParameterError(f"binom({n_modes}, {n_modes // d}) is not divisible by {d}")
    return q


# --------------------------------------------------------------------------
# repeat machinery
# --------------------------------------------------------------------------

def repeat_statistics(values) -> tuple[np.ndarray, np.ndarray]:
    """Mean over repeats (axis 0) and the standard error of that mean.

    Equivalent to ``sqrt((sum G_i^2 - (sum G_i)^2/N_R) / (N_R (N_R - 1)))``
    but evaluated in centered form. NaN errors when only one repeat exists.
    """
    values = np.asarray(values, dtype=float)
    n_r = values.shape[0]
    mean = values.mean(axis=0)
    if n_r < 2:
        return mean, np.full_like(mean, np.nan)
    dev = values - mean
    err = np.sqrt((dev * dev).sum(axis=0) / (n_r * (n_r - 1)))
    return mean, err


class _CompensatedSum:
    """Neumaier summation, kept separately for real and imaginary parts."""

    def __init__(self):
        self._parts = None
        self._shape = None

    def add(self, x) -> None:
        x = np.asarray(x, dtype=complex)
        if self._parts is None:
            self._shape = x.shape
            self._parts = [[np.array(p, dtype=float).ravel(), np.zeros(x.size)]
                           for p in (x.real, x.imag)]
            return
        for part, new in zip(self._parts, (x.real.ravel(), x.imag.ravel())):
            s, c = part
            t = s + new
            c += np.where(np.abs(s) >= np.abs(new), (s - t) + new, (new - t) + s)
            part[0] = t

    def value(self) -> np.ndarray:
        (rs, rc), (is_, ic) = self._parts
        return ((rs + rc) + 1j * (is_ + ic)).reshape(self._shape)


def _map_repeats(source, fn: Callable[[int], object]) -> list:
    threads = max(1, int(getattr(source, "threads", 1) or 1))
    if threads == 1 or source.n_r == 1:
        return [fn(i) for i in range(source.n_r)]
    with ThreadPoolExecutor(max_workers=min(threads, source.n_r)) as pool:
        return list(pool.map(fn, range(source.n_r)))


def _repeat_means(source, block_fn) -> tuple[np.ndarray, int]:
    """Per-repeat mean of ``block_fn(alpha, beta) -> (sum, clamped)``."""

    def one(i):
        acc = _CompensatedSum()
        clamped = 0
        count = 0
        for alpha, beta in source.repeat_blocks(i):
            s, c = block_fn(alpha, beta)
            acc.add(s)
            clamped += c
            count += alpha.shape[1]
        return acc.value() / count, clamped

    results = _map_repeats(source, one)
    means = np.stack([r[0] for r in results])
    clamped = sum(r[1] for r in results)
    if clamped:
        log.warning("clamped %d trajectory photon numbers below %g", clamped, EXP_CLAMP)
    return means, clamped


def _require_normal_order(source, what: str) -> None:
    if source.sigma != 0:
        raise UnsupportedOrderError(
            f"{what} uses exponentials of the photon number and is only unbiased "
            f"for normal ordering (sigma = 0), got sigma = {source.sigma}"
        )


# --------------------------------------------------------------------------
# click weights
# --------------------------------------------------------------------------

def photon_numbers(alpha, beta, sigma: float = 0.0):
    """Per-trajectory output photon number ``alpha' beta' - sigma``."""
    return alpha * beta - sigma


def _vacuum_weights(alpha, beta, sigma):
    n = photon_numbers(alpha, beta, sigma)
    low = n.real < EXP_CLAMP
    clamped = int(np.count_nonzero(low))
    if clamped:
        n = np.where(low, EXP_CLAMP + 1j * n.imag, n)
    return np.exp(-n), clamped


def click_probabilities(ens) -> np.ndarray:
    """Per-trajectory click weights ``pi_j(1) = 1 - exp(-n'_j)``.

    Complex in general for positive-P ensembles; only averages are physical.
    """
    pi0, _ = _vacuum_weights(ens.alpha, ens.beta, ens.sigma)
    return 1.0 - pi0


# --------------------------------------------------------------------------
# grouped count probabilities
# --------------------------------------------------------------------------

@dataclass
class GcpEstimate:
    """Grouped count probabilities on the ``(m_1, ..., m_d)`` lattice."""

    values: np.ndarray
    errors: np.ndarray
    n_r: int
    fourier: np.ndarray | None = None
    clamped: int = 0
    spec: BinningSpec | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def _fourier_factors(pi0, spec: BinningSpec) -> list[np.ndarray]:
    factors = []
    for subset, K in zip(spec.subsets, spec.shape):
        z = np.exp(-2j * np.pi * np.arange(K) / K)[:, None]
        F = np.ones((K, pi0.shape[1]), dtype=complex)
        one_minus_z = 1.0 - z
        for i in subset:
            F *= z + one_minus_z * pi0[i]
        factors.append(F)
    return factors


def _khatri_rao(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, f.shape[1])
    return out


def _lattice_sum(factors: Sequence[np.ndarray], shape) -> np.ndarray:
    if len(factors) == 1:
        return factors[0].sum(axis=1)
    h = len(factors) // 2
    left = _khatri_rao(factors[:h])
    right = _khatri_rao(factors[h:])
    return (left @ right.T).reshape(shape)


def gcp(source, spec: BinningSpec) -> GcpEstimate:
    """Grouped count probabilities via the Fourier observable.

    For each trajectory the product over modes of
    ``pi_i(0) + pi_i(1) exp(-i k_j theta_j)`` is accumulated for every
    Fourier index vector ``k``; each repeat's mean is inverse transformed to
    the count lattice and its real part kept.
    """
    _require_normal_order(source, "gcp")
    spec.check(source.n_modes)
    modes = np.array(sorted(i for s in spec.subsets for i in s))
    local = {m: k for k, m in enumerate(modes)}
    local_spec = BinningSpec(tuple(tuple(local[i] for i in s) for s in spec.subsets))
    shape = spec.shape

    def block(alpha, beta):
        pi0, clamped = _vacuum_weights(alpha[modes], beta[modes], source.sigma)
        return _lattice_sum(_fourier_factors(pi0, local_spec), shape), clamped

    fourier, clamped = _repeat_means(source, block)
    axes = tuple(range(1, fourier.ndim))
    lattice = np.fft.ifftn(fourier, axes=axes).real
    values, errors = repeat_statistics(lattice)
    return GcpEstimate(values, errors, source.n_r, fourier.mean(axis=0), clamped, spec)


def hermitian_part(fourier: np.ndarray) -> np.ndarray:
    """``(F(k) + conj F(-k)) / 2``: the transform of the real part of its inverse."""
    flipped = np.conj(np.roll(np.flip(fourier), 1, axis=tuple(range(fourier.ndim))))
    return 0.5 * (fourier + flipped)


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------

def intensity_correlation(source, orders) -> Estimate:
    """Ordered intensity correlation ``< prod_j (n'_j)^{c_j} >``.

    ``orders`` holds one non-negative integer exponent per output mode.
    Non-normal orderings only support exponents 0 and 1.
    """
    c = np.asarray(orders)
    if c.shape != (source.n_modes,) or not np.issubdtype(c.dtype, np.integer):
        raise ParameterError(f"orders must be {source.n_modes} integers")
    if np.any(c < 0):
        raise ParameterError("orders must be non-negative")
    if source.sigma > 0 and np.any(c > 1):
        raise UnsupportedOrderError(
            "exponents above 1 are only supported for normal ordering"
        )
    modes = np.flatnonzero(c)
    powers = c[modes][:, None]

    def block(alpha, beta):
        n = photon_numbers(alpha[modes], beta[modes], source.sigma)
        return np.prod(n ** powers, axis=0).sum(), 0

    means, _ = _repeat_means(source, block)
    mean, err = repeat_statistics(means.real)
    return Estimate(float(mean), float(err))


def distinct_orders(n_modes: int, modes) -> np.ndarray:
    """Exponent vector with ``c_j = 1`` on ``modes`` and 0 elsewhere."""
    c = np.zeros(n_modes, dtype=int)
    c[list(modes)] = 1
    return c


def _check_distinct(modes, n_modes):
    modes = [int(m) for m in modes]
    if len(set(modes)) != len(modes):
        raise ParameterError(f"duplicate mode indices in {modes}")
    if modes and (min(modes) < 0 or max(modes) >= n_modes):
        raise ParameterError(f"mode index out of range for {n_modes} modes")
    return modes


def marginal_moment(source, modes) -> Estimate:
    """Probability that every detector in ``modes`` clicks."""
    _require_normal_order(source, "marginal_moment")
    modes = _check_distinct(modes, source.n_modes)

    def block(alpha, beta):
        pi0, clamped = _vacuum_weights(alpha[modes], beta[modes], source.sigma)
        return np.prod(1.0 - pi0, axis=0).sum(), clamped

    means, _ = _repeat_means(source, block)
    mean, err = repeat_statistics(means.real)
    return Estimate(float(mean), float(err))


def cumulants_low_order(source, j: int, k: int) -> tuple[Estimate, Estimate]:
    """Click rate of mode ``j`` and the click covariance of ``(j, k)``."""
    _require_normal_order(source, "cumulants_low_order")
    if j == k:
        raise ParameterError("second cumulant needs two distinct modes")
    modes = _check_distinct([j, k], source.n_modes)

    def block(alpha, beta):
        pi0, clamped = _vacuum_weights(alpha[modes], beta[modes], source.sigma)
        p = 1.0 - pi0
        return np.array([p[0].sum(), p[1].sum(), (p[0] * p[1]).sum()]), clamped

    means, _ = _repeat_means(source, block)
    means = means.real
    k1 = repeat_statistics(means[:, 0])
    pair = means[:, 2].mean()
    k2_mean = pair - means[:, 0].mean() * means[:, 1].mean()
    _, k2_err = repeat_statistics(means[:, 2] - means[:, 0] * means[:, 1])
    return Estimate(float(k1[0]), float(k1[1])), Estimate(float(k2_mean), float(k2_err))
