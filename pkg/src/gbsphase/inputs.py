"""Gaussian input states and their phase-space samples.

Quadrature units are ``x = a + a^dagger``, ``y = (a - a^dagger)/i`` so the
vacuum has unit symmetric variance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import rng
from .errors import ParameterError

ORDERINGS = (0.0, 0.5, 1.0)


class Family(str, enum.Enum):
    PURE_SQUEEZED = "pure"
    THERMALIZED_SQUEEZED = "thermalized"
    THERMAL = "thermal"
    SQUASHED = "squashed"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "pure": cls.PURE_SQUEEZED,
            "pure_squeezed": cls.PURE_SQUEEZED,
            "puresqueezed": cls.PURE_SQUEEZED,
            "thermalized": cls.THERMALIZED_SQUEEZED,
            "thermalized_squeezed": cls.THERMALIZED_SQUEEZED,
            "thermalizedsqueezed": cls.THERMALIZED_SQUEEZED,
            "thermal": cls.THERMAL,
            "squashed": cls.SQUASHED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown state family {value!r}") from None


def _check_sigma(sigma) -> float:
    sigma = float(sigma)
    if sigma not in ORDERINGS:
        raise ParameterError(f"ordering sigma must be one of {ORDERINGS}, got {sigma}")
    return sigma


@dataclass(frozen=True)
class InputModel:
    """Independent single-mode Gaussian inputs.

    Parameters
    ----------
    r : array_like
        Squeezing amplitude per input mode. For the classical families it
        only sets the photon number ``sinh(r)**2``.
    epsilon : float
        Thermalized fraction. Must be 0 for pure inputs and is forced to 1
        for thermal inputs. Ignored for squashed inputs.
    t : float
        Global amplitude correction applied to the transmission matrix.
    sigma : float
        Operator ordering: 0 normal, 1/2 symmetric, 1 anti-normal.
    family : Family
    """

    r: np.ndarray
    epsilon: float = 0.0
    t: float = 1.0
    sigma: float = 0.0
    family: Family = Family.PURE_SQUEEZED

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float)).copy()
        if r.ndim != 1 or r.size == 0:
            raise ParameterError("r must be a non-empty vector")
        if not np.all(np.isfinite(r)):
            raise ParameterError("squeezing amplitudes must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        family = Family.parse(self.family)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "sigma", _check_sigma(self.sigma))
        eps = float(self.epsilon)
        if not 0.0 <= eps <= 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {eps}")
        if family is Family.PURE_SQUEEZED and eps != 0.0:
            raise ParameterError("pure squeezed inputs require epsilon = 0")
        if family is Family.THERMAL:
            eps = 1.0
        object.__setattr__(self, "epsilon", eps)
        t = float(self.t)
        if not (np.isfinite(t) and t > 0):
            raise ParameterError(f"transmission correction t must be positive, got {t}")
        object.__setattr__(self, "t", t)
        if family is Family.SQUASHED and self.sigma != 0.0:
            raise ParameterError("squashed inputs are only defined for normal ordering")

    @classmethod
    def from_photon_numbers(cls, n, **kwargs) -> "InputModel":
        """Build a model from mean photon numbers instead of squeezing."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        if np.any(n < 0):
            raise ParameterError("photon numbers must be non-negative")
        return cls(r=np.arcsinh(np.sqrt(n)), **kwargs)

    @property
    def n_modes(self) -> int:
        return self.r.size

    @property
    def is_classical(self) -> bool:
        """True when every mode has a non-negative normally ordered y variance."""
        return bool(np.all(sigma_variances(self, sigma=0.0).dy2 >= 0))

    def replace(self, **changes) -> "InputModel":
        fields = dict(r=self.r, epsilon=self.epsilon, t=self.t, sigma=self.sigma,
                      family=self.family)
        fields.update(changes)
        return InputModel(**fields)


@dataclass(frozen=True)
class QuadratureVariances:
    dx2: np.ndarray
    dy2: np.ndarray


def derive_photon_params(r, epsilon: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Photon number ``n = sinh(r)^2`` and coherence ``(1-eps) cosh(r) sinh(r)``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if not np.all(np.isfinite(r)):
        raise ParameterError("squeezing amplitudes must be finite")
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    n = np.sinh(r) ** 2
    m = (1.0 - epsilon) * np.cosh(r) * np.sinh(r)
    return n, m


def photon_params(model: InputModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode ``(n, m~)`` for any family."""
    if model.family is Family.SQUASHED:
        n, _ = derive_photon_params(model.r, 0.0)
        return n, n.copy()
    return derive_photon_params(model.r, model.epsilon)


def sigma_variances(model: InputModel, sigma: float | None = None) -> QuadratureVariances:
    """Ordered quadrature variances ``2(n + sigma +/- m~)``.

    ``sigma`` defaults to the model's ordering.
    """
    sigma = model.sigma if sigma is None else _check_sigma(sigma)
    n, m = photon_params(model)
    return QuadratureVariances(dx2=2 * (n + sigma + m), dy2=2 * (n + sigma - m))


@dataclass
class AmplitudeEnsemble:
    """Paired phase-space amplitudes, one column per trajectory.

    Columns are repeat-major: repeat ``i`` owns columns
    ``i*n_s:(i+1)*n_s``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    sigma: float
    n_s: int
    n_r: int
    classical: bool = False
    threads: int = field(default=1, repr=False)

    def __post_init__(self):
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 2:
            raise ParameterError("alpha and beta must be equal-shape 2-D arrays")
        if self.alpha.shape[1] != self.n_s * self.n_r:
            raise ParameterError(
                f"batch size {self.alpha.shape[1]} does not equal n_s*n_r = {self.n_s * self.n_r}"
            )

    @property
    def n_modes(self) -> int:
        return self.alpha.shape[0]

    @property
    def size(self) -> int:
        return self.alpha.shape[1]

    def repeat_blocks(self, i: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        start = i * self.n_s
        for size in rng.block_sizes(self.n_s):
            yield self.alpha[:, start:start + size], self.beta[:, start:start + size]
            start += size


def sample_block(model: InputModel, seed: int, repeat: int, block: int,
                 size: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``size`` input trajectories for one (repeat, block) key.

    Each mode draws from its own stream, so vacuum modes at normal ordering
    (zero variance) consume nothing and do not shift the other modes.
    """
    var = sigma_variances(model)
    n_modes = model.n_modes
    alpha = np.zeros((n_modes, size), dtype=complex)
    beta = np.zeros((n_modes, size), dtype=complex)
    for j in range(n_modes):
        dx2, dy2 = var.dx2[j], var.dy2[j]
        if dx2 == 0.0 and dy2 == 0.0:
            continue
        w = rng.stream(seed, "amplitudes", repeat, block, j).standard_normal((2, size))
        xpart = 0.5 * np.sqrt(max(dx2, 0.0)) * w[0]
        if dy2 < 0:
            # imaginary y deviation: alpha, beta real and independent
            ypart = 0.5 * np.sqrt(-dy2) * w[1]
            alpha[j] = xpart - ypart
            beta[j] = xpart + ypart
        else:
            ypart = 0.5j * np.sqrt(dy2) * w[1]
            alpha[j] = xpart + ypart
            beta[j] = xpart - ypart
    return alpha, beta


def iter_input_blocks(model: InputModel, seed: int, repeat: int,
                      n_s: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    for b, size in enumerate(rng.block_sizes(n_s)):
        yield sample_block(model, seed, repeat, b, size)


def sample_input_ensemble(model: InputModel, n_s: int, n_r: int, seed: int) -> AmplitudeEnsemble:
    """Draw ``n_s * n_r`` input trajectories for ``model``."""
    n_s, n_r = int(n_s), int(n_r)
    if n_s < 1 or n_r < 1:
        raise ParameterError("n_s and n_r must both be at least 1")
    seed = rng.check_seed(seed)
    alphas, betas = [], []
    for i in range(n_r):
        for a, b in iter_input_blocks(model, seed, i, n_s):
            alphas.append(a)
            betas.append(b)
    return AmplitudeEnsemble(
        alpha=np.concatenate(alphas, axis=1),
        beta=np.concatenate(betas, axis=1),
        sigma=model.sigma,
        n_s=n_s,
        n_r=n_r,
        classical=model.sigma > 0 or model.is_classical,
    )
