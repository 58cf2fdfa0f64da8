"""Mode databases: parameter sweeps, mode pairing, and sign/phase alignment.

A ModeDatabase holds the m tracked eigenmodes of a parameterized system at p
sampled parameter values.  Before any cross-parameter averaging the modes must
be *paired* (mode k+1 continues mode k even through eigenvalue crossings) and
*aligned* (the arbitrary sign of real modes, or phase of complex modes, made
consistent across samples).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import (
    EigensolverError,
    cholesky_factor,
    generalized_eig,
    is_symmetric,
)
from .systems import FullOrderSystem, traveling_bump_family


@dataclass(frozen=True)
class ModeSample:
    """Eigenvalues and E-normalized eigenmodes at one parameter value."""

    mu: float
    eigenvalues: np.ndarray  # (m,) complex
    right_modes: np.ndarray  # (n, m)
    left_modes: np.ndarray | None = None  # (n, m), None for self-adjoint systems


@dataclass(frozen=True)
class ModeDatabase:
    """Per-parameter mode samples plus the Cholesky factor of the mass matrix.

    ``mass_factor`` is the upper-triangular F with FᵀF = E, or None when the
    mass matrix is the identity.  ``paired`` and ``aligned`` record which
    preparation passes have run.
    """

    samples: tuple[ModeSample, ...]
    mass_factor: np.ndarray | None
    m: int
    paired: bool = False
    aligned: bool = False
    crossing_gaps: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValueError(f"a mode database needs at least 2 samples, got {len(self.samples)}")
        mus = self.mus
        if not np.all(np.diff(mus) > 0):
            raise ValueError("sample parameters must be strictly increasing")

    @property
    def p(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return self.samples[0].right_modes.shape[0]

    @property
    def mus(self) -> np.ndarray:
        return np.array([s.mu for s in self.samples])

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(s.right_modes) for s in self.samples)

    @property
    def mass(self) -> np.ndarray:
        """Dense mass matrix E = FᵀF (identity when the factor is None)."""
        if self.mass_factor is None:
            return np.eye(self.n)
        return self.mass_factor.T @ self.mass_factor

    def right_block(self, i: int) -> np.ndarray:
        """Modes of chain i across samples, as columns of an (n, p) block."""
        return np.column_stack([s.right_modes[:, i] for s in self.samples])

    def left_block(self, i: int) -> np.ndarray | None:
        if self.samples[0].left_modes is None:
            return None
        return np.column_stack([s.left_modes[:, i] for s in self.samples])


def _weight(F: np.ndarray | None, x: np.ndarray) -> np.ndarray:
    return x if F is None else F @ x


def mac(a: np.ndarray, b: np.ndarray, E: np.ndarray | None = None) -> float:
    """Squared magnitude of the mass-weighted inner product of two unit modes.

    For E-normalized inputs this lies in [0, 1] and equals 1 exactly when the
    modes coincide up to a unit-modulus factor.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    inner = np.vdot(a, b) if E is None else np.vdot(a, E @ b)
    return float(abs(inner) ** 2)


def _identity_mass_factor(mass: np.ndarray) -> np.ndarray | None:
    if np.array_equal(mass, np.eye(mass.shape[0])):
        return None
    return cholesky_factor(mass)


def sample_spectrum(sys: FullOrderSystem, mus, m: int) -> ModeDatabase:
    """Solve the eigenproblem at each sampled parameter and keep the m slowest modes.

    Modes at each sample are sorted by descending real part of the eigenvalue
    and E-normalized.  For real system matrices only the member of each
    complex-conjugate eigenpair with non-negative imaginary part is tracked;
    the conjugate is implied.  Left eigenvectors are stored whenever the
    operator is not symmetric.  The result is unpaired and unaligned.
    """
    mus = np.asarray(mus, dtype=float)
    if mus.ndim != 1 or mus.size < 2:
        raise ValueError("need at least 2 sampled parameters")
    if not np.all(np.diff(mus) > 0):
        raise ValueError("sampled parameters must be strictly increasing")
    if not 1 <= m <= sys.n:
        raise ValueError(f"mode count {m} out of range [1, {sys.n}]")

    mass = np.asarray(sys.mass)
    factor = _identity_mass_factor(mass)
    real_pencil = not np.iscomplexobj(mass)

    samples = []
    for mu in mus:
        A = np.asarray(sys.operator_at(mu))
        try:
            pairs = generalized_eig(A, mass, want_left=not is_symmetric(A))
        except (EigensolverError, ValueError) as exc:
            raise EigensolverError(f"eigensolve failed at mu={mu}: {exc}") from exc
        if real_pencil and not np.iscomplexobj(A):
            pairs = [pr for pr in pairs if pr.eigenvalue.imag >= 0.0]
        if len(pairs) < m:
            raise ValueError(
                f"only {len(pairs)} tracked modes available at mu={mu}, requested {m}"
            )
        pairs = pairs[:m]
        eigenvalues = np.array([pr.eigenvalue for pr in pairs])
        right = np.column_stack([pr.right_vector for pr in pairs])
        left = None
        if pairs[0].left_vector is not None and pairs[0].left_vector is not pairs[0].right_vector:
            left = np.column_stack([pr.left_vector for pr in pairs])
        samples.append(ModeSample(float(mu), eigenvalues, right, left))

    if any(np.iscomplexobj(s.right_modes) for s in samples):
        samples = [
            ModeSample(
                s.mu,
                s.eigenvalues,
                s.right_modes.astype(complex),
                None if s.left_modes is None else s.left_modes.astype(complex),
            )
            for s in samples
        ]

    return ModeDatabase(
        samples=tuple(samples),
        mass_factor=factor,
        m=m,
        metadata=dict(sys.metadata),
    )


def pair_modes(db: ModeDatabase, mac_gap: float = 0.01) -> ModeDatabase:
    """Match modes across consecutive samples by greedy maximum weighted MAC.

    Near-ties (two available candidates whose MAC values differ by less than
    ``mac_gap``) are resolved by eigenvalue proximity and recorded as
    degeneration warnings.  Every sample gap where the shape-based match
    disagrees with plain eigenvalue ordering is listed in ``crossing_gaps``.
    """
    if db.paired:
        raise ValueError("database is already paired")
    F = db.mass_factor
    m = db.m

    new_samples = [db.samples[0]]
    crossings: list[int] = []
    warnings: list[str] = list(db.warnings)

    prev = db.samples[0]
    # eigenvalue-order rank of each chain within the current sample
    ranks = np.arange(m)
    for k in range(db.p - 1):
        nxt = db.samples[k + 1]
        wa = _weight(F, prev.right_modes)
        wb = _weight(F, nxt.right_modes)
        macmat = np.abs(wa.conj().T @ wb) ** 2

        work = macmat.copy()
        perm = np.full(m, -1)
        for _ in range(m):
            best = np.unravel_index(np.argmax(work), work.shape)
            vmax = work[best]
            # ambiguity means candidates competing for the same mode: only
            # entries sharing the row or column of the maximum contest it
            near = [
                (i, j)
                for i, j in np.argwhere(work >= vmax - mac_gap)
                if i == best[0] or j == best[1]
            ]
            if len(near) > 1:
                i_sel, j_sel = min(
                    near,
                    key=lambda ij: abs(prev.eigenvalues[ij[0]] - nxt.eigenvalues[ij[1]]),
                )
                warnings.append(
                    f"degenerate pairing between samples {k} and {k + 1}: "
                    f"{len(near)} candidates within {mac_gap} of MAC {vmax:.4f}; "
                    "eigenvalue proximity applied"
                )
            else:
                i_sel, j_sel = best
            perm[i_sel] = j_sel
            work[i_sel, :] = -np.inf
            work[:, j_sel] = -np.inf

        # a crossing is a gap where a chain changes its eigenvalue-order rank
        if not np.array_equal(perm, ranks):
            crossings.append(k)
        ranks = perm
        paired_sample = ModeSample(
            nxt.mu,
            nxt.eigenvalues[perm],
            nxt.right_modes[:, perm],
            None if nxt.left_modes is None else nxt.left_modes[:, perm],
        )
        new_samples.append(paired_sample)
        prev = paired_sample

    return replace(
        db,
        samples=tuple(new_samples),
        paired=True,
        crossing_gaps=tuple(crossings),
        warnings=tuple(warnings),
    )


def align_signs(db: ModeDatabase) -> ModeDatabase:
    """Make consecutive mass-weighted inner products of each real mode chain positive.

    The first sample is put in a deterministic convention (largest-magnitude
    component positive); each later sample is flipped whenever its inner
    product with the already-aligned predecessor is negative.  Exactly
    orthogonal neighbors are left untouched and reported.  Left modes receive
    the same flips so bi-orthogonal scaling is preserved.  Idempotent.
    """
    if not db.paired:
        raise ValueError("pair the database before aligning")
    if db.is_complex:
        raise ValueError("database holds complex modes: use align_phases")
    F = db.mass_factor

    rights = [s.right_modes.copy() for s in db.samples]
    lefts = [None if s.left_modes is None else s.left_modes.copy() for s in db.samples]
    warnings = list(db.warnings)

    for i in range(db.m):
        first = rights[0][:, i]
        if first[np.argmax(np.abs(first))] < 0:
            rights[0][:, i] = -first
            if lefts[0] is not None:
                lefts[0][:, i] = -lefts[0][:, i]
        for k in range(db.p - 1):
            a = float(_weight(F, rights[k][:, i]) @ _weight(F, rights[k + 1][:, i]))
            if a == 0.0:
                warnings.append(
                    f"orthogonal neighbors for mode chain {i} between samples "
                    f"{k} and {k + 1}; sign kept"
                )
            elif a < 0.0:
                rights[k + 1][:, i] = -rights[k + 1][:, i]
                if lefts[k + 1] is not None:
                    lefts[k + 1][:, i] = -lefts[k + 1][:, i]

    samples = tuple(
        ModeSample(s.mu, s.eigenvalues, r, l)
        for s, r, l in zip(db.samples, rights, lefts)
    )
    return replace(db, samples=samples, aligned=True, warnings=tuple(warnings))


def align_phases(db: ModeDatabase) -> ModeDatabase:
    """Rotate each complex mode into phase with its first-sample counterpart.

    The rotation angle minimizing the mass-weighted misfit between e^{iθ}φ^(k)
    and φ^(1) has the closed form θ = −arg((φ^(1))ᴴ E φ^(k)); after rotation
    that inner product is real and non-negative.  A zero inner product leaves
    the phase untouched and is reported.  Left modes are rotated by the same
    factor.  Idempotent.
    """
    if not db.paired:
        raise ValueError("pair the database before aligning")
    F = db.mass_factor

    rights = [s.right_modes.astype(complex).copy() for s in db.samples]
    lefts = [
        None if s.left_modes is None else s.left_modes.astype(complex).copy()
        for s in db.samples
    ]
    warnings = list(db.warnings)

    for i in range(db.m):
        w_ref = _weight(F, rights[0][:, i])
        for k in range(1, db.p):
            c = np.vdot(w_ref, _weight(F, rights[k][:, i]))
            if c == 0.0:
                warnings.append(
                    f"mode chain {i} at sample {k} is orthogonal to the first "
                    "sample; phase kept"
                )
                continue
            theta = -np.angle(c)
            if theta != 0.0:
                rot = np.exp(1j * theta)
                rights[k][:, i] = rot * rights[k][:, i]
                if lefts[k] is not None:
                    lefts[k][:, i] = rot * lefts[k][:, i]

    samples = tuple(
        ModeSample(s.mu, s.eigenvalues.astype(complex), r, l)
        for s, r, l in zip(db.samples, rights, lefts)
    )
    return replace(db, samples=samples, aligned=True, warnings=tuple(warnings))


def align_database(db: ModeDatabase) -> ModeDatabase:
    """Dispatch to phase alignment for complex databases, sign alignment otherwise."""
    return align_phases(db) if db.is_complex else align_signs(db)


def mode_at(sys: FullOrderSystem, db: ModeDatabase, i: int, mu: float) -> np.ndarray:
    """Exact eigenmode of chain i at an arbitrary parameter, aligned to the database.

    Solves the full eigenproblem at μ, picks the tracked mode with the largest
    MAC against chain i at the nearest sampled parameter, and applies the same
    sign (real) or phase (complex) convention the database uses.  Intended as
    ground truth for interpolation error studies.
    """
    if not db.aligned:
        raise ValueError("align the database before requesting reference modes")
    if not 0 <= i < db.m:
        raise ValueError(f"mode index {i} out of range [0, {db.m})")

    mass = np.asarray(sys.mass)
    A = np.asarray(sys.operator_at(mu))
    pairs = generalized_eig(A, mass, want_left=False)
    if not (np.iscomplexobj(A) or np.iscomplexobj(mass)):
        pairs = [pr for pr in pairs if pr.eigenvalue.imag >= 0.0]

    E = None if db.mass_factor is None else db.mass
    nearest = int(np.argmin(np.abs(db.mus - mu)))
    ref = db.samples[nearest].right_modes[:, i]
    phi = max((pr.right_vector for pr in pairs), key=lambda v: mac(ref, v, E))

    if db.is_complex:
        first = db.samples[0].right_modes[:, i]
        c = np.vdot(first, phi) if E is None else np.vdot(first, E @ phi)
        if c != 0.0:
            phi = phi.astype(complex) * np.exp(-1j * np.angle(c))
    else:
        a = np.real(np.vdot(ref, phi) if E is None else np.vdot(ref, E @ phi))
        if a < 0.0:
            phi = -phi
        phi = np.real_if_close(phi, tol=1000)
    return phi


def database_from_modes(
    mus,
    modes,
    eigenvalues=None,
    mass: np.ndarray | None = None,
    paired: bool = False,
    aligned: bool = False,
    normalize: bool = False,
    metadata: dict | None = None,
) -> ModeDatabase:
    """Assemble a ModeDatabase from raw arrays.

    ``modes`` is either an (n, m, p) array or a sequence of p blocks of shape
    (n, m).  ``eigenvalues`` is (m, p); when omitted, placeholder eigenvalues
    −1, −2, ... are used (synthetic databases only care about mode shapes).
    A None mass matrix means identity.
    """
    mus = np.asarray(mus, dtype=float)
    if isinstance(modes, np.ndarray) and modes.ndim == 3:
        blocks = [modes[:, :, k] for k in range(modes.shape[2])]
    else:
        blocks = [np.asarray(b) for b in modes]
    if len(blocks) != mus.size:
        raise ValueError(f"{len(blocks)} mode blocks for {mus.size} parameters")
    m = blocks[0].shape[1]

    factor = None if mass is None else _identity_mass_factor(np.asarray(mass))
    if eigenvalues is None:
        eigenvalues = np.tile(-np.arange(1, m + 1, dtype=complex)[:, None], (1, mus.size))
    eigenvalues = np.asarray(eigenvalues, dtype=complex)

    samples = []
    for k, mu in enumerate(mus):
        block = blocks[k]
        if normalize:
            wb = _weight(factor, block)
            block = block / np.sqrt(np.real(np.sum(wb.conj() * wb, axis=0)))
        samples.append(ModeSample(float(mu), eigenvalues[:, k].copy(), block))
    return ModeDatabase(
        samples=tuple(samples),
        mass_factor=factor,
        m=m,
        paired=paired,
        aligned=aligned,
        metadata=metadata or {},
    )


def bump_database(n: int, width: float, mus) -> ModeDatabase:
    """Synthetic single-chain database of traveling Gaussian bumps.

    The bump shape translates across the grid as the parameter moves through
    [0, 1], the canonical stress case for linear low-rank compression.
    """
    mus = np.asarray(mus, dtype=float)
    modes = [traveling_bump_family(n, width, mu)[:, None] for mu in mus]
    db = database_from_modes(
        mus,
        modes,
        paired=True,
        metadata={"generator": {"name": "traveling-bump", "args": {"n": n, "width": width}}},
    )
    return align_signs(db)


def synthetic_wide_database(n: int, mus, m: int, seed: int = 0) -> ModeDatabase:
    """Large-n database of smooth synthetic modes, for timing studies.

    Each mode is a fixed low-frequency profile plus a small parameter-dependent
    deviation, so pairing is trivial and consecutive inner products stay
    positive.  Identity mass matrix.
    """
    rng = np.random.default_rng(seed)
    mus = np.asarray(mus, dtype=float)
    span = mus[-1] - mus[0]
    x = np.linspace(0.0, 1.0, n)

    base = np.column_stack([np.sin((i + 1) * np.pi * x) for i in range(m)])
    base /= np.linalg.norm(base, axis=0)
    n_dev = 6
    dev = np.column_stack([np.cos((j + 1) * np.pi * x) for j in range(n_dev)])
    dev /= np.linalg.norm(dev, axis=0)
    amp_sin = 0.3 * rng.standard_normal((m, n_dev))
    amp_lin = 0.3 * rng.standard_normal((m, n_dev))

    blocks = []
    for mu in mus:
        t = (mu - mus[0]) / span
        coeff = amp_sin * np.sin(2.0 * np.pi * t) + amp_lin * t
        block = base + dev @ coeff.T
        block /= np.linalg.norm(block, axis=0)
        blocks.append(block)
    db = database_from_modes(
        mus,
        blocks,
        paired=True,
        metadata={
            "generator": {
                "name": "synthetic-wide",
                "args": {"n": n, "m": m, "seed": seed},
            }
        },
    )
    return align_signs(db)
