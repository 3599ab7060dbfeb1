"""Exact small-network references for threshold-detector statistics.

Pattern probabilities come from inclusion-exclusion over vacuum
projections: the probability that every detector in a set ``A`` stays dark
is ``det((V_A + 1) / 2)^(-1/2)`` for the symmetric covariance ``V_A`` of
those modes (vacuum variance 1), and a pattern with clicks ``C`` and dark
set ``Z`` has probability ``sum_{S <= C} (-1)^|S| P_dark(Z + S)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ParameterError
from .inputs import InputModel, photon_params
from .network import TransmissionMatrix
from .observables import BinningSpec

MAX_MODES = 12


@dataclass(frozen=True)
class OutputCovariance:
    """Symmetric-ordered covariance of ``(x_1..x_M, y_1..y_M)``."""

    matrix: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.matrix, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] % 2:
            raise ParameterError("covariance must be a square 2M x 2M matrix")
        if not np.allclose(v, v.T, atol=1e-12):
            raise ParameterError("covariance must be symmetric")
        nu = symplectic_eigenvalues(v)
        if nu.min() < 1 - 1e-9:
            raise ParameterError(
                f"covariance violates the uncertainty bound (min symplectic eigenvalue {nu.min():.3g})"
            )
        object.__setattr__(self, "matrix", v)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    @classmethod
    def from_moments(cls, N: np.ndarray, M: np.ndarray) -> "OutputCovariance":
        """From normally ordered ``N_ij = <a_i^+ a_j>`` and ``M_ij = <a_i a_j>``."""
        n = N.shape[0]
        xx = 2 * (M.real + N.real) + np.eye(n)
        yy = 2 * (N.real - M.real) + np.eye(n)
        xy = 2 * (M.imag + N.imag)
        v = np.block([[xx, xy], [xy.T, yy]])
        return cls(0.5 * (v + v.T))

    def subset(self, modes) -> np.ndarray:
        modes = np.asarray(modes, dtype=int)
        idx = np.concatenate([modes, modes + self.n_modes])
        return self.matrix[np.ix_(idx, idx)]

    def dark_probability(self, modes) -> float:
        """Probability that no detector in ``modes`` clicks."""
        if len(modes) == 0:
            return 1.0
        sub = self.subset(modes)
        lu, piv = scipy.linalg.lu_factor(0.5 * (sub + np.eye(sub.shape[0])))
        det = np.prod(np.diag(lu)) * (-1.0) ** np.count_nonzero(piv != np.arange(piv.size))
        return float(det ** -0.5)


def symplectic_eigenvalues(v: np.ndarray) -> np.ndarray:
    n = v.shape[0] // 2
    omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    ev = np.abs(np.linalg.eigvals(1j * omega @ v))
    return np.sort(ev)[::2]


def output_covariance(model: InputModel, T: TransmissionMatrix | None = None) -> OutputCovariance:
    """Output covariance of ``model`` sent through ``T`` (identity when omitted).

    The model's transmission correction ``t`` scales the matrix.
    """
    n, m = photon_params(model)
    if T is None:
        T = TransmissionMatrix.identity(model.n_modes)
    if T.n_in != model.n_modes:
        raise ParameterError("matrix input count does not match the model")
    mat = model.t * T.effective
    N = mat.conj() @ np.diag(n) @ mat.T
    M = mat @ np.diag(m) @ mat.T
    return OutputCovariance.from_moments(N, M)


def exact_click_prob_single_mode(model: InputModel) -> tuple[float, float]:
    """Closed-form ``(p0, p1)`` for a single-mode input on its own detector."""
    if model.n_modes != 1:
        raise ParameterError("single-mode formula needs a one-mode model")
    n, m = photon_params(model)
    t2 = model.t ** 2
    n, m = t2 * n[0], t2 * m[0]
    p0 = float(((1 + n) ** 2 - m ** 2) ** -0.5)
    return p0, 1.0 - p0


def exact_pattern_probability(cov: OutputCovariance, pattern, max_modes: int = MAX_MODES) -> float:
    """Probability of one click pattern (bit vector over all output modes)."""
    c = np.asarray([int(b) for b in pattern])
    if c.size != cov.n_modes or np.any((c != 0) & (c != 1)):
        raise ParameterError(f"pattern must be {cov.n_modes} bits")
    if cov.n_modes > max_modes:
        raise ParameterError(f"exact patterns are capped at {max_modes} modes")
    dark = list(np.flatnonzero(c == 0))
    clicks = list(np.flatnonzero(c == 1))
    total = 0.0
    for size in range(len(clicks) + 1):
        sign = -1.0 if size % 2 else 1.0
        for extra in itertools.combinations(clicks, size):
            total += sign * cov.dark_probability(sorted(dark + list(extra)))
    return total


def exact_distribution(cov: OutputCovariance, max_modes: int = MAX_MODES) -> np.ndarray:
    """All ``2^M`` pattern probabilities, indexed with mode 0 as the lowest bit."""
    M = cov.n_modes
    if M > max_modes:
        raise ParameterError(f"exact patterns are capped at {max_modes} modes")
    dark_cache: dict[tuple[int, ...], float] = {}

    def dark(modes):
        key = tuple(modes)
        if key not in dark_cache:
            dark_cache[key] = cov.dark_probability(list(key))
        return dark_cache[key]

    probs = np.empty(2 ** M)
    for code in range(2 ** M):
        bits = [(code >> j) & 1 for j in range(M)]
        zero = [j for j in range(M) if not bits[j]]
        ones = [j for j in range(M) if bits[j]]
        total = 0.0
        for size in range(len(ones) + 1):
            sign = -1.0 if size % 2 else 1.0
            for extra in itertools.combinations(ones, size):
                total += sign * dark(sorted(zero + list(extra)))
        probs[code] = total
    return probs


def exact_gcp(cov: OutputCovariance, spec: BinningSpec, max_modes: int = MAX_MODES) -> np.ndarray:
    """Grouped count probabilities by summing exact pattern probabilities."""
    spec.check(cov.n_modes)
    probs = exact_distribution(cov, max_modes)
    M = cov.n_modes
    codes = np.arange(2 ** M)
    bits = (codes[:, None] >> np.arange(M)) & 1
    counts = [bits[:, list(s)].sum(axis=1) for s in spec.subsets]
    flat = np.ravel_multi_index(counts, spec.shape)
    return np.bincount(flat, weights=probs, minlength=int(np.prod(spec.shape))).reshape(spec.shape)


def exact_identity_correlation(model: InputModel, modes, T: TransmissionMatrix | None = None) -> float:
    """``prod_j n_j`` over distinct ``modes`` for an identity network."""
    if T is not None:
        if T.n_in != T.n_out or not np.allclose(T.effective, np.eye(T.n_in), atol=1e-12):
            raise ParameterError("exact correlations are only available for the identity network")
    modes = [int(j) for j in modes]
    if len(set(modes)) != len(modes):
        raise ParameterError("modes must be distinct")
    n, _ = photon_params(model)
    return float(np.prod(model.t ** 2 * n[modes]))
