"""Eigen-deformation modes: mass-weighted SVD of eigenmode variation.

For a tracked mode chain, the deviation of each sampled mode from the
parameter-averaged mean is collected into a data matrix, weighted by the
Cholesky factor of the mass matrix so that Euclidean norms become physically
meaningful, and factorized by an SVD.  The leading left singular vectors,
mapped back through the factor, are an E-orthonormal basis for how the mode
deforms across the parameter range; the scaled right singular vectors are the
per-sample coordinates in that basis and are what gets interpolated to obtain
modes at unsampled parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.linalg import solve_triangular

from .modal import ModeDatabase
from .numerics import truncated_svd


class OutOfDomainError(ValueError):
    """Requested parameter lies outside the sampled interval."""


_SPLINE_DEGREE = {"linear": 1, "cubic": 3}


def interpolate_columns(sample_mus, values, mu: float, scheme: str = "linear"):
    """Interpolate the columns of ``values`` (rows, p) at one parameter value.

    Shared machinery for every interpolation in the package: mode chains in
    physical space, deformation coefficients, eigenvalues, and trajectory
    snapshots all go through here.  ``scheme`` is "linear" or "cubic"; the
    spline degree degrades gracefully when fewer than degree+1 samples exist.
    Extrapolation is refused.
    """
    sample_mus = np.asarray(sample_mus, dtype=float)
    values = np.atleast_2d(np.asarray(values))
    if scheme not in _SPLINE_DEGREE:
        raise ValueError(f"unknown interpolation scheme {scheme!r}")
    if not sample_mus[0] <= mu <= sample_mus[-1]:
        raise OutOfDomainError(
            f"parameter {mu} outside the sampled interval "
            f"[{sample_mus[0]}, {sample_mus[-1]}]"
        )
    k = min(_SPLINE_DEGREE[scheme], sample_mus.size - 1)
    spline = make_interp_spline(sample_mus, values, k=k, axis=1)
    return spline(mu)


@dataclass(frozen=True)
class EdmBasis:
    """Low-order representation of one eigenmode's deformation with the parameter.

    ``edms`` holds r E-orthonormal deformation directions; ``coefficients`` is
    the (r, p) block of per-sample coordinates; ``singular_values`` keeps the
    full spectrum of the weighted data matrix so energy fractions at any rank
    remain computable after truncation.
    """

    mode_index: int
    mean_mode: np.ndarray  # (n,)
    edms: np.ndarray  # (n, r)
    singular_values: np.ndarray  # (min(n, p),)
    coefficients: np.ndarray  # (r, p)
    sample_mus: np.ndarray | None = None  # (p,)

    @property
    def rank(self) -> int:
        return self.edms.shape[1]


def build_data_matrix(db: ModeDatabase, i: int, which: str = "right"):
    """Mean mode of chain i and the matrix of per-sample deviations from it.

    Averaging modes with inconsistent signs or phases is meaningless, so an
    unaligned database is refused.  Columns of the returned matrix sum to zero
    by construction.  ``which`` selects the right or left mode family.
    """
    if not (db.paired and db.aligned):
        raise ValueError("database must be paired and aligned before averaging modes")
    if not 0 <= i < db.m:
        raise ValueError(f"mode index {i} out of range [0, {db.m})")
    if which == "right":
        block = db.right_block(i)
    elif which == "left":
        block = db.left_block(i)
        if block is None:
            raise ValueError("database stores no left modes")
    else:
        raise ValueError(f"unknown mode family {which!r}")
    mean = block.mean(axis=1)
    return mean, block - mean[:, None]


def compute_edms(
    mean_mode,
    data,
    mass_factor,
    rank: int | None = None,
    energy: float | None = None,
    mode_index: int = 0,
    sample_mus=None,
) -> EdmBasis:
    """Extract deformation modes from a deviation data matrix.

    The data is weighted by the upper-triangular mass factor (None means
    identity), factorized by SVD, and the retained left singular vectors are
    mapped back by a triangular solve, which keeps the deformation modes
    E-orthonormal without ever forming an inverse.  The rank is either given
    explicitly or chosen as the smallest value whose energy fraction reaches
    ``energy`` (default 0.999).
    """
    mean_mode = np.asarray(mean_mode)
    data = np.asarray(data)
    weighted = data if mass_factor is None else mass_factor @ data
    kmax = min(weighted.shape)
    u_full, s, vh_full = truncated_svd(weighted, kmax)

    if rank is None:
        rank = select_rank(s, 0.999 if energy is None else energy)
    if not 0 <= rank <= kmax:
        raise ValueError(f"rank {rank} out of range [0, {kmax}]")

    u = u_full[:, :rank]
    if mass_factor is not None:
        u = solve_triangular(mass_factor, u, lower=False)
    coefficients = s[:rank, None] * vh_full[:rank, :]
    return EdmBasis(
        mode_index=mode_index,
        mean_mode=mean_mode,
        edms=u,
        singular_values=s,
        coefficients=coefficients,
        sample_mus=None if sample_mus is None else np.asarray(sample_mus, dtype=float),
    )


def extract_edm_basis(
    db: ModeDatabase,
    i: int,
    rank: int | None = None,
    energy: float | None = None,
    which: str = "right",
) -> EdmBasis:
    """Build the deformation basis of mode chain i directly from a database."""
    mean, data = build_data_matrix(db, i, which=which)
    return compute_edms(
        mean,
        data,
        db.mass_factor,
        rank=rank,
        energy=energy,
        mode_index=i,
        sample_mus=db.mus,
    )


def energy_fraction(singular_values, r: int) -> float:
    """Fraction of energy captured by the r leading singular values.

    Defined as the ratio of plain singular-value sums (not squares): 0 at
    r = 0 and exactly 1 when every nonzero value is retained.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("expected a non-empty vector of singular values")
    if np.any(s < 0) or np.any(np.diff(s) > 1e-12 * max(s[0], 1.0)):
        raise ValueError("singular values must be non-negative and non-increasing")
    if not 0 <= r <= s.size:
        raise ValueError(f"r={r} out of range [0, {s.size}]")
    total = s.sum()
    if total == 0.0:
        raise ValueError("energy fraction undefined: all singular values are zero")
    return float(s[:r].sum() / total)


def select_rank(singular_values, threshold: float = 0.999) -> int:
    """Smallest rank whose energy fraction reaches the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    s = np.asarray(singular_values, dtype=float)
    for r in range(s.size + 1):
        if energy_fraction(s, r) >= threshold:
            return r
    return s.size  # pragma: no cover - fraction reaches 1 at full rank


def interpolate_mode(basis: EdmBasis, mu: float, scheme: str = "linear") -> np.ndarray:
    """Mode shape at an unsampled parameter from interpolated deformation coordinates.

    Interpolates the r stored coefficient trajectories at μ and reconstructs
    mean + EDMs · coefficients, an affine map of an r-dimensional interpolation
    instead of an n-dimensional one.
    """
    if basis.sample_mus is None:
        raise ValueError("basis carries no sample parameters to interpolate against")
    if basis.sample_mus.size < 2:
        raise ValueError("need at least 2 samples to interpolate")
    if basis.rank == 0:
        if not basis.sample_mus[0] <= mu <= basis.sample_mus[-1]:
            raise OutOfDomainError(
                f"parameter {mu} outside the sampled interval "
                f"[{basis.sample_mus[0]}, {basis.sample_mus[-1]}]"
            )
        return basis.mean_mode.copy()
    coeff = interpolate_columns(basis.sample_mus, basis.coefficients, mu, scheme)
    return basis.mean_mode + basis.edms @ coeff


def direct_interpolate(db: ModeDatabase, i: int, mu: float, scheme: str = "linear") -> np.ndarray:
    """Componentwise interpolation of the aligned mode chain in physical space."""
    if not (db.paired and db.aligned):
        raise ValueError("database must be paired and aligned before interpolation")
    if not 0 <= i < db.m:
        raise ValueError(f"mode index {i} out of range [0, {db.m})")
    return interpolate_columns(db.mus, db.right_block(i), mu, scheme)


def interpolation_error(truth, predicted, mass_factor=None) -> float:
    """Relative mass-weighted misfit between a true mode and its prediction."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {predicted.shape}")
    wt = truth if mass_factor is None else mass_factor @ truth
    denom = np.linalg.norm(wt)
    if denom == 0.0:
        raise ValueError("reference mode has zero norm")
    diff = truth - predicted
    wd = diff if mass_factor is None else mass_factor @ diff
    return float(np.linalg.norm(wd) / denom)
