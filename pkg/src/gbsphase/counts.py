"""Binary click patterns: file formats, binning, classical fakes and
permutation tests."""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import rng
from .errors import ParameterError, PatternFormatError
from .inputs import Family, InputModel, iter_input_blocks
from .network import TransmissionMatrix, check_permutation, transform
from .observables import BinningSpec
from .statistics import BinnedCounts, ComparisonReport, chi_square

MAGIC = b"GBSP1"
_HEADER = struct.Struct("<5sIQ")
#: Patterns unpacked at a time while binning.
CHUNK = 1 << 16


class Provenance(str, enum.Enum):
    EXPERIMENTAL = "experimental"
    CLASSICAL_FAKE = "classical-fake"
    SIMULATOR_DERIVED = "simulator-derived"


@dataclass
class PatternSet:
    """``n_samples`` patterns of ``n_modes`` bits, packed little-endian.

    Mode 0 is the least significant bit of byte 0 in each row.
    """

    n_modes: int
    bits: np.ndarray
    provenance: Provenance = Provenance.EXPERIMENTAL
    family: Family | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_modes = int(self.n_modes)
        if self.n_modes < 1:
            raise ParameterError("patterns need at least one mode")
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        width = (self.n_modes + 7) // 8
        if self.bits.ndim != 2 or self.bits.shape[1] != width:
            raise ParameterError(f"packed bits must have shape (n, {width})")
        self.provenance = Provenance(self.provenance)

    @classmethod
    def from_bits(cls, bits, **kwargs) -> "PatternSet":
        """Pack a ``(n_samples, n_modes)`` 0/1 array."""
        arr = np.asarray(bits)
        if arr.ndim != 2:
            raise ParameterError("bits must be a 2-D (samples x modes) array")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ParameterError("bits must be 0 or 1")
        packed = np.packbits(arr.astype(np.uint8), axis=1, bitorder="little")
        return cls(arr.shape[1], packed, **kwargs)

    @property
    def n_samples(self) -> int:
        return self.bits.shape[0]

    def unpacked(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return np.unpackbits(self.bits[start:stop], axis=1, count=self.n_modes,
                             bitorder="little")

    def iter_chunks(self, size: int = CHUNK) -> Iterator[np.ndarray]:
        for start in range(0, self.n_samples, size):
            yield self.unpacked(start, start + size)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def ingest_patterns(path: str | os.PathLike) -> PatternSet:
    """Read a text or packed-binary pattern file (detected by its magic)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise PatternFormatError(f"cannot read pattern file {path}: {exc}") from exc
    if data.startswith(MAGIC):
        return _read_packed(data, path)
    return _read_text(data, path)


def _read_packed(data: bytes, path) -> PatternSet:
    if len(data) < _HEADER.size:
        raise PatternFormatError(f"{path}: truncated header")
    _, n_modes, n = _HEADER.unpack_from(data)
    if n_modes < 1:
        raise PatternFormatError(f"{path}: mode count must be positive")
    width = (n_modes + 7) // 8
    body = memoryview(data)[_HEADER.size:]
    expected = n * width
    if len(body) < expected:
        raise PatternFormatError(
            f"{path}: truncated records: header declares {n} patterns, "
            f"found {len(body) // width} complete"
        )
    if len(body) > expected:
        raise PatternFormatError(f"{path}: {len(body) - expected} trailing bytes after records")
    if n == 0:
        raise PatternFormatError(f"{path}: no patterns")
    bits = np.frombuffer(body, dtype=np.uint8).reshape(n, width).copy()
    if n_modes % 8:
        bits[:, -1] &= (1 << (n_modes % 8)) - 1
    return PatternSet(n_modes, bits)


def _read_text(data: bytes, path) -> PatternSet:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    lines = [ln[:-1] if ln.endswith(b"\r") else ln for ln in lines]
    start = 0
    while start < len(lines) and lines[start].startswith(b"#"):
        start += 1
    body = lines[start:]
    if not body:
        raise PatternFormatError(f"{path}: no patterns")
    n_modes = len(body[0])
    if n_modes == 0:
        raise PatternFormatError(f"{path}:{start + 1}: empty pattern line")
    for i, ln in enumerate(body):
        if len(ln) != n_modes:
            raise PatternFormatError(
                f"{path}:{start + i + 1}: pattern width {len(ln)} differs from {n_modes}"
            )
    chars = np.frombuffer(b"".join(body), dtype=np.uint8).reshape(len(body), n_modes)
    bad = (chars != ord("0")) & (chars != ord("1"))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise PatternFormatError(
            f"{path}:{start + row + 1}: invalid character {chr(chars[row, col])!r}"
        )
    return PatternSet.from_bits(chars - ord("0"))


def write_patterns(path: str | os.PathLike, ps: PatternSet, fmt: str = "text",
                   header: dict | None = None) -> None:
    """Write ``ps`` as ``"text"`` (optional ``#`` header lines) or ``"packed"``."""
    if fmt == "packed":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, ps.n_modes, ps.n_samples))
            fh.write(ps.bits.tobytes())
        return
    if fmt != "text":
        raise ParameterError(f"unknown pattern format {fmt!r}")
    with open(path, "wb") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}={value}\n".encode())
        for chunk in ps.iter_chunks():
            chars = (chunk + ord("0")).astype(np.uint8)
            rows = np.concatenate([chars, np.full((len(chars), 1), ord("\n"), np.uint8)], axis=1)
            fh.write(rows.tobytes())


# --------------------------------------------------------------------------
# binning
# --------------------------------------------------------------------------

def bin_patterns(ps: PatternSet, spec: BinningSpec, perm=None) -> BinnedCounts:
    """Count patterns on the grouped-count lattice of ``spec``.

    With ``perm`` the pattern is relabelled first, ``c'_i = c[perm[i]]``.
    """
    spec.check(ps.n_modes)
    if perm is not None:
        spec = spec.permuted(check_permutation(perm, ps.n_modes))
    size = int(np.prod(spec.shape))
    counts = np.zeros(size, dtype=np.int64)
    groups = [np.asarray(s, dtype=np.intp) for s in spec.subsets]
    for chunk in ps.iter_chunks():
        m = [chunk[:, g].sum(axis=1, dtype=np.intp) for g in groups]
        counts += np.bincount(np.ravel_multi_index(m, spec.shape), minlength=size)
    return BinnedCounts(counts.reshape(spec.shape), ps.n_samples)


# --------------------------------------------------------------------------
# classical fakes
# --------------------------------------------------------------------------

def _fake_chunks(model: InputModel, T: TransmissionMatrix, n_fake: int,
                 seed: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(bits, click_probability)`` blocks, each ``(samples, modes)``."""
    net = T.scaled(model.t)
    for b, (alpha, beta) in enumerate(iter_input_blocks(model, seed, 0, n_fake)):
        a_out, _ = transform(net, alpha, beta, classical=True)
        p = -np.expm1(-np.abs(a_out) ** 2)
        u = rng.stream(seed, "bernoulli", 0, b).random(p.shape)
        yield (u < p).T.astype(np.uint8), p.T


def generate_fakes(model: InputModel, T: TransmissionMatrix, n_fake: int,
                   seed: int) -> PatternSet:
    """Draw ``n_fake`` classical patterns, one per phase-space trajectory.

    Each trajectory gives output intensities ``n'_j``; bit ``j`` clicks with
    probability ``1 - exp(-n'_j)`` independently of the other bits.
    """
    if model.family not in (Family.THERMAL, Family.SQUASHED):
        raise ParameterError(
            f"fake patterns need a classical (thermal or squashed) model, got {model.family.value}"
        )
    if model.sigma != 0:
        raise ParameterError("fake patterns are drawn from the normally ordered distribution")
    n_fake = int(n_fake)
    if n_fake < 1:
        raise ParameterError("n_fake must be at least 1")
    if T.n_in != model.n_modes:
        raise ParameterError(f"matrix has {T.n_in} inputs but the model has {model.n_modes} modes")
    seed = rng.check_seed(seed)
    packed = [np.packbits(bits, axis=1, bitorder="little")
              for bits, _ in _fake_chunks(model, T, n_fake, seed)]
    return PatternSet(T.n_out, np.concatenate(packed), Provenance.CLASSICAL_FAKE,
                      family=model.family, meta={"seed": seed, "n_fake": n_fake})


# --------------------------------------------------------------------------
# permutation tests
# --------------------------------------------------------------------------

@dataclass
class PermutationTestResult:
    reports: list[ComparisonReport]
    permutations: list[np.ndarray]

    @property
    def mean_z(self) -> float:
        return float(np.mean([r.z for r in self.reports]))

    def __len__(self) -> int:
        return len(self.reports)


def random_permutation(seed: int, trial: int, n_modes: int) -> np.ndarray:
    return rng.stream(seed, "permutation", trial).permutation(n_modes)


def permutation_test(theory, ps: PatternSet, spec: BinningSpec, trials: int, seed: int,
                     permutations=None) -> PermutationTestResult:
    """Compare ``ps`` with a simulation under ``trials`` random relabellings.

    ``theory`` is a :class:`~gbsphase.simulate.Simulation`. Each trial applies
    one permutation to every pattern and the same permutation to the
    matrix rows of the simulation. ``permutations`` overrides the random
    draws.
    """
    trials = int(trials)
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if theory.n_modes != ps.n_modes:
        raise ParameterError(
            f"simulation has {theory.n_modes} outputs but patterns have {ps.n_modes} bits"
        )
    spec.check(ps.n_modes)
    if permutations is None:
        seed = rng.check_seed(seed)
        permutations = [random_permutation(seed, k, ps.n_modes) for k in range(trials)]
    else:
        permutations = [check_permutation(p, ps.n_modes) for p in permutations]
        if len(permutations) != trials:
            raise ParameterError("need one permutation per trial")
    reports = []
    for perm in permutations:
        counts = bin_patterns(ps, spec, perm)
        reports.append(chi_square(theory.permuted(perm).gcp(spec), counts))
    return PermutationTestResult(reports, list(permutations))
