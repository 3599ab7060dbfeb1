"""Streaming phase-space simulation of a network with Gaussian inputs."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from . import rng
from .errors import ParameterError
from .inputs import InputModel, iter_input_blocks
from .network import TransmissionMatrix, permute_outputs, transform
from .observables import (BinningSpec, Estimate, GcpEstimate, cumulants_low_order, gcp,
                          intensity_correlation, marginal_moment)


@dataclass(frozen=True)
class Simulation:
    """Input model + network + ensemble sizes + seed.

    Output amplitudes are generated block by block on demand, so memory is
    bounded by one block per worker regardless of ``n_s * n_r``. The same
    seed gives the same input noise for every model, which makes parameter
    scans use common random numbers.
    """

    model: InputModel
    matrix: TransmissionMatrix
    n_s: int
    n_r: int = 16
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if int(self.n_s) < 1 or int(self.n_r) < 1:
            raise ParameterError("n_s and n_r must both be at least 1")
        object.__setattr__(self, "seed", rng.check_seed(self.seed))
        if self.matrix.n_in != self.model.n_modes:
            raise ParameterError(
                f"matrix has {self.matrix.n_in} inputs but the model has "
                f"{self.model.n_modes} modes"
            )
        net = self.network  # validates sub-unitarity after the model's t is applied
        if self.model.sigma > 0 and not net.is_unitary():
            raise ParameterError(
                "non-normal orderings need a unitary network; lossy matrices are "
                "only supported at sigma = 0"
            )

    @property
    def network(self) -> TransmissionMatrix:
        """The matrix with the model's transmission correction applied."""
        return self.matrix.scaled(self.model.t)

    @property
    def sigma(self) -> float:
        return self.model.sigma

    @property
    def n_modes(self) -> int:
        return self.matrix.n_out

    @property
    def size(self) -> int:
        return self.n_s * self.n_r

    @property
    def classical(self) -> bool:
        return self.model.sigma > 0 or self.model.is_classical

    def repeat_blocks(self, i: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        net = self.network
        classical = self.classical
        for alpha, beta in iter_input_blocks(self.model, self.seed, i, self.n_s):
            yield transform(net, alpha, beta, classical)

    def with_model(self, model: InputModel) -> "Simulation":
        return replace(self, model=model)

    def permuted(self, perm) -> "Simulation":
        return replace(self, matrix=permute_outputs(self.matrix, perm))

    def gcp(self, spec: BinningSpec) -> GcpEstimate:
        return gcp(self, spec)

    def intensity_correlation(self, orders) -> Estimate:
        return intensity_correlation(self, orders)

    def marginal_moment(self, modes) -> Estimate:
        return marginal_moment(self, modes)

    def cumulants_low_order(self, j: int, k: int) -> tuple[Estimate, Estimate]:
        return cumulants_low_order(self, j, k)
