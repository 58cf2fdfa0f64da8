"""Dense linear-algebra kernels with explicit accuracy contracts.

All functions operate on plain numpy arrays, never mutate their inputs, and
hold no state, so they are safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import get_lapack_funcs


class LinearAlgebraError(ValueError):
    """Base class for kernel-level failures."""


class SymmetryError(LinearAlgebraError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class IndefiniteMatrixError(LinearAlgebraError):
    """Factorization hit a non-positive pivot; carries the pivot index."""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class SingularMatrixError(LinearAlgebraError):
    """Solve rejected a numerically singular matrix; carries an rcond estimate."""

    def __init__(self, message: str, rcond: float):
        super().__init__(message)
        self.rcond = rcond


class EigensolverError(LinearAlgebraError):
    """Eigenvalue iteration failed to converge or produce a usable basis."""


@dataclass(frozen=True)
class SpectralPair:
    """One eigenvalue with its right (and optionally left) eigenvector.

    The right vector is normalized to unit mass-weighted norm.  When a left
    vector is present it is scaled so that ``left.conj() @ E @ right == 1``.
    """

    eigenvalue: complex
    right_vector: np.ndarray
    left_vector: np.ndarray | None = None


def _as_square(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinearAlgebraError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    """True when ``a`` is real and equals its transpose within ``rtol`` relative."""
    if np.iscomplexobj(a):
        return False
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return True
    return np.linalg.norm(a - a.T) <= rtol * scale


def cholesky_factor(E, rtol: float = 1e-12) -> np.ndarray:
    """Upper-triangular factor F of a symmetric positive definite E, FᵀF = E.

    Raises
    ------
    SymmetryError
        If E deviates from symmetry by more than ``rtol`` relative.
    IndefiniteMatrixError
        If a pivot of the factorization is not positive; the zero-based index
        of the failing pivot is reported.
    """
    E = _as_square(E, "E")
    if not is_symmetric(E, rtol):
        raise SymmetryError("matrix is not symmetric within tolerance")
    potrf, = get_lapack_funcs(("potrf",), (E,))
    factor, info = potrf(E, lower=0, overwrite_a=0)
    if info > 0:
        raise IndefiniteMatrixError(
            f"matrix is not positive definite: pivot index {info - 1} is not positive",
            pivot=info - 1,
        )
    if info < 0:
        raise LinearAlgebraError(f"illegal value in argument {-info} of potrf")
    return np.triu(factor)


def _spectral_order(w: np.ndarray) -> np.ndarray:
    """Sort order: descending real part, near-ties resolved by descending imag.

    Real parts within 1e-10 (relative to the spectral radius) count as ties,
    so purely oscillatory spectra are not ordered by round-off noise.
    """
    order = list(np.argsort(-w.real, kind="stable"))
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    groups: list[list[int]] = [[order[0]]]
    for idx in order[1:]:
        if w[groups[-1][0]].real - w[idx].real <= tol:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    return np.array(
        [j for g in groups for j in sorted(g, key=lambda j: -w[j].imag)]
    )


def generalized_eig(A, E, want_left: bool = False) -> list[SpectralPair]:
    """Eigenpairs of the pencil (A, E), sorted by descending real part.

    Ties in the real part are broken by descending imaginary part.  Right
    vectors are scaled to unit E-norm.  For real symmetric A the problem is
    solved in its self-adjoint form, eigenvalues are real, the returned block
    of right vectors is E-orthonormal, and left vectors (when requested) alias
    the right ones.  Otherwise left vectors satisfy ψᴴA = λψᴴE and are scaled
    so that ψᴴEφ = 1.
    """
    A = _as_square(A, "A")
    E = _as_square(E, "E")
    if A.shape != E.shape:
        raise LinearAlgebraError(f"dimension mismatch: A is {A.shape}, E is {E.shape}")
    cholesky_factor(E)  # validates that E is SPD

    if is_symmetric(A) and not np.iscomplexobj(E):
        try:
            w, v = scipy.linalg.eigh(A, E)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
            raise EigensolverError(f"symmetric eigensolver failed: {exc}") from exc
        order = np.argsort(-w)
        pairs = []
        for i in order:
            phi = v[:, i]
            pairs.append(
                SpectralPair(complex(w[i]), phi, phi if want_left else None)
            )
        return pairs

    try:
        if want_left:
            w, vl, vr = scipy.linalg.eig(A, E, left=True, right=True)
        else:
            w, vr = scipy.linalg.eig(A, E, right=True)
            vl = None
    except scipy.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver did not converge: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise EigensolverError("eigensolver returned non-finite eigenvalues")

    order = _spectral_order(w)
    pairs = []
    for i in order:
        phi = vr[:, i]
        nrm = np.sqrt(np.real(np.conj(phi) @ (E @ phi)))
        phi = phi / nrm
        psi = None
        if vl is not None:
            psi = vl[:, i]
            c = np.conj(psi) @ (E @ phi)
            if abs(c) < 1e-12:
                raise EigensolverError(
                    "left/right eigenvectors are E-orthogonal "
                    f"(eigenvalue {w[i]:.6g}); pencil may be defective"
                )
            psi = psi / np.conj(c)
        pairs.append(SpectralPair(complex(w[i]), phi, psi))
    return pairs


def truncated_svd(M, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank-r singular value decomposition M ≈ U[:, :r] diag(s[:r]) Vh[:r].

    Returns the r leading left vectors (columns of U), the FULL vector of
    singular values (so tail sums remain available after truncation), and the
    r leading right vectors (rows of Vh).
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise LinearAlgebraError(f"expected a matrix, got shape {M.shape}")
    kmax = min(M.shape)
    if not 1 <= r <= kmax:
        raise LinearAlgebraError(f"rank {r} out of range [1, {kmax}]")
    U, s, Vh = scipy.linalg.svd(M, full_matrices=False)
    return U[:, :r], s, Vh[:r, :]


def solve_linear(A, b, rcond_floor: float = 1e-14) -> np.ndarray:
    """Solve Ax = b by LU with partial pivoting.

    Raises SingularMatrixError when the reciprocal condition estimate falls
    below ``rcond_floor``.
    """
    A = _as_square(A, "A")
    b = np.asarray(b)
    if b.shape[0] != A.shape[0]:
        raise LinearAlgebraError(
            f"dimension mismatch: A is {A.shape}, b has leading dimension {b.shape[0]}"
        )
    dtype = np.result_type(A.dtype, b.dtype, np.float64)
    A = A.astype(dtype, copy=False)
    getrf, gecon, getrs = get_lapack_funcs(("getrf", "gecon", "getrs"), (A,))
    lu, piv, info = getrf(A, overwrite_a=0)
    if info < 0:  # pragma: no cover - defensive
        raise LinearAlgebraError(f"illegal value in argument {-info} of getrf")
    anorm = np.linalg.norm(A, 1)
    rcond = 0.0 if info > 0 else float(gecon(lu, anorm, norm="1")[0])
    if rcond < rcond_floor:
        raise SingularMatrixError(
            f"matrix is singular to working precision (rcond ≈ {rcond:.2e})",
            rcond=rcond,
        )
    x, info = getrs(lu, piv, b.astype(dtype, copy=False))
    if info != 0:  # pragma: no cover - defensive
        raise LinearAlgebraError(f"getrs failed with info={info}")
    return x
