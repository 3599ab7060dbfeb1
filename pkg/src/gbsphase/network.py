"""Linear network transmission matrices."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import MatrixFormatError, MatrixValidationError, ParameterError
from .inputs import AmplitudeEnsemble

SUBUNITARY_TOL = 1e-6


@dataclass(frozen=True)
class TransmissionMatrix:
    """Outputs x inputs complex matrix with a global amplitude scale."""

    elements: np.ndarray
    t_scale: float = 1.0

    def __post_init__(self):
        el = np.array(self.elements, dtype=complex, copy=True)
        if el.ndim != 2 or 0 in el.shape:
            raise ParameterError("transmission matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(el)):
            raise MatrixValidationError("transmission matrix has non-finite entries")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)
        t = float(self.t_scale)
        if not (np.isfinite(t) and t > 0):
            raise ParameterError(f"t_scale must be positive, got {t}")
        object.__setattr__(self, "t_scale", t)
        smax = self.singular_values().max()
        if smax > 1 + SUBUNITARY_TOL:
            raise MatrixValidationError(
                f"matrix is not sub-unitary: largest singular value {smax:.9g} (t={t})"
            )

    @classmethod
    def identity(cls, n: int, t_scale: float = 1.0) -> "TransmissionMatrix":
        return cls(np.eye(n), t_scale)

    @property
    def n_out(self) -> int:
        return self.elements.shape[0]

    @property
    def n_in(self) -> int:
        return self.elements.shape[1]

    @property
    def effective(self) -> np.ndarray:
        return self.t_scale * self.elements

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.effective, compute_uv=False)

    def is_unitary(self, tol: float = SUBUNITARY_TOL) -> bool:
        if self.n_out != self.n_in:
            return False
        u = self.effective
        return bool(np.allclose(u.conj().T @ u, np.eye(self.n_in), rtol=0, atol=tol))

    def scaled(self, factor: float) -> "TransmissionMatrix":
        return TransmissionMatrix(self.elements, self.t_scale * factor)


def _parse_floats(tokens, path, lineno):
    out = []
    for tok in tokens:
        try:
            out.append(float(tok))
        except ValueError:
            raise MatrixFormatError(f"{path}:{lineno}: cannot parse number {tok!r}") from None
    return out


def load_matrix(path: str | os.PathLike) -> TransmissionMatrix:
    """Read a matrix file.

    Format: ``#`` comment lines; a header line ``M N``; then ``M*N`` complex
    entries written as whitespace-separated ``re im`` pairs in row-major
    order. A comment line reading ``# transpose`` declares the stored matrix
    to be inputs x outputs, and it is transposed after parsing.
    """
    transpose = False
    header = None
    values: list[float] = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                s = line.strip()
                if not s:
                    continue
                if s.startswith("#"):
                    if s.lstrip("#").strip().lower() == "transpose":
                        transpose = True
                    continue
                tokens = s.split()
                if header is None:
                    if len(tokens) != 2:
                        raise MatrixFormatError(f"{path}:{lineno}: header must be 'M N'")
                    try:
                        rows, cols = int(tokens[0]), int(tokens[1])
                    except ValueError:
                        raise MatrixFormatError(
                            f"{path}:{lineno}: header must hold two integers"
                        ) from None
                    if rows < 1 or cols < 1:
                        raise MatrixFormatError(f"{path}:{lineno}: dimensions must be positive")
                    header = (rows, cols)
                    continue
                values.extend(_parse_floats(tokens, path, lineno))
    except OSError as exc:
        raise MatrixFormatError(f"cannot read matrix file {path}: {exc}") from exc
    if header is None:
        raise MatrixFormatError(f"{path}: missing 'M N' header")
    rows, cols = header
    if len(values) != 2 * rows * cols:
        raise MatrixFormatError(
            f"{path}: expected {rows * cols} complex entries ({2 * rows * cols} numbers), "
            f"found {len(values) / 2:g}"
        )
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        raise MatrixFormatError(f"{path}: non-finite matrix entries")
    mat = (arr[0::2] + 1j * arr[1::2]).reshape(rows, cols)
    if transpose:
        mat = mat.T
    return TransmissionMatrix(mat)


def save_matrix(path: str | os.PathLike, T: TransmissionMatrix | np.ndarray) -> None:
    """Write ``T`` (including its scale) in the format read by :func:`load_matrix`."""
    mat = T.effective if isinstance(T, TransmissionMatrix) else np.asarray(T, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row) + "\n")


def transform(T: TransmissionMatrix, alpha: np.ndarray, beta: np.ndarray,
              classical: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``alpha' = T alpha``, ``beta' = T* beta`` to raw amplitude blocks."""
    mat = T.effective
    a_out = mat @ alpha
    b_out = a_out.conj() if classical else mat.conj() @ beta
    return a_out, b_out


def apply_network(T: TransmissionMatrix, ens: AmplitudeEnsemble) -> AmplitudeEnsemble:
    """Transform an input ensemble to the network outputs."""
    if T.n_in != ens.n_modes:
        raise ParameterError(
            f"matrix has {T.n_in} inputs but the ensemble has {ens.n_modes} modes"
        )
    if ens.sigma > 0 and not T.is_unitary():
        raise ParameterError(
            "non-normal orderings need a unitary network; lossy matrices are "
            "only supported at sigma = 0"
        )
    alpha, beta = transform(T, ens.alpha, ens.beta, ens.classical)
    return AmplitudeEnsemble(alpha, beta, ens.sigma, ens.n_s, ens.n_r, ens.classical,
                             ens.threads)


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.issubdtype(perm.dtype, np.integer):
        raise ParameterError(f"permutation must be {n} integers")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ParameterError("permutation is not a bijection")
    return perm.astype(np.intp)


def permute_outputs(T: TransmissionMatrix, perm) -> TransmissionMatrix:
    """Reorder output rows: new row ``i`` is old row ``perm[i]``."""
    perm = check_permutation(perm, T.n_out)
    return TransmissionMatrix(T.elements[perm], T.t_scale)
