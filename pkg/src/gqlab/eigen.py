"""Lowest eigenpairs of sparse Hermitian operators.

Block Lanczos with full reorthogonalisation, explicit Rayleigh-Ritz on the
Krylov basis, thick restarts and locking of converged pairs.  Small
problems (dim <= ``DENSE_LIMIT``) go straight to LAPACK.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceError, DomainError

log = logging.getLogger(__name__)

DENSE_LIMIT = 2048
DEFAULT_TOL = 1e-6
DEFAULT_SEED = 42


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None
    seed: int = DEFAULT_SEED
    iterations: int = 0
    method: str = "lanczos"

    def __len__(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class Cluster:
    value: float
    multiplicity: int
    members: tuple[int, ...]


@dataclass(frozen=True)
class ClusterReport:
    clusters: tuple[Cluster, ...]
    threshold: float

    @property
    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.clusters])

    @property
    def multiplicities(self) -> list[int]:
        return [c.multiplicity for c in self.clusters]


def _residuals(M, vals, vecs) -> np.ndarray:
    R = M @ vecs - vecs * vals
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)


def _dense(M, m: int, vectors: bool, seed: int) -> SpectrumResult:
    A = M.toarray() if sp.issparse(M) else np.asarray(M)
    A = 0.5 * (A + A.conj().T)
    vals, vecs = sla.eigh(A, subset_by_index=[0, m - 1])
    res = _residuals(A, vals, vecs)
    return SpectrumResult(vals, res, vecs if vectors else None, seed, 0, "dense")


def _project_out(B: np.ndarray, V: np.ndarray) -> np.ndarray:
    # B^H V computed as (V^H B)^H: conjugates the thin block, not the basis
    return V - B @ (V.conj().T @ B).conj().T


def _orthonormalise(V: np.ndarray, against: list[np.ndarray], rng, drop_tol: float = 1e-8) -> np.ndarray:
    """Orthonormalise V's columns against the bases in ``against`` and each other.

    Classical Gram-Schmidt with a second pass only where the first removed
    most of the norm (DGKS criterion); rank-deficient directions are
    replaced by random vectors.
    """
    dim = V.shape[0]
    against = [B for B in against if B.shape[1]]
    norms = np.linalg.norm(V, axis=0)
    for B in against:
        V = _project_out(B, V)
    after = np.linalg.norm(V, axis=0)
    if np.any(after < 0.7071 * norms):
        for B in against:
            V = _project_out(B, V)
    Qm, Rm = np.linalg.qr(V)
    bad = np.abs(np.diag(Rm)) <= drop_tol * np.maximum(norms, 1e-300)
    if not np.any(bad):
        if against and np.abs(np.diag(Rm)).min() < 1e-3 * norms.max():
            # heavy cancellation inside the block: one more projection
            for B in against:
                Qm = _project_out(B, Qm)
            Qm, _ = np.linalg.qr(Qm)
        return Qm
    good = Qm[:, ~bad]
    nbad = int(bad.sum())
    fresh = rng.standard_normal((dim, nbad)) + 1j * rng.standard_normal((dim, nbad))
    fresh = _orthonormalise(fresh, against + [good], rng, drop_tol)
    return np.hstack([good, fresh])


def lowest_eigenpairs_matrix(M, m: int, tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED,
                             vectors: bool = True, block: int | None = None,
                             max_basis: int | None = None, max_restarts: int = 400,
                             dense_limit: int = DENSE_LIMIT) -> SpectrumResult:
    """The ``m`` smallest eigenpairs of a Hermitian matrix ``M``.

    Every returned pair satisfies ``||M v - lambda v|| <= tol`` (checked by a
    direct matvec).  Raises :class:`ConvergenceError` if that cannot be
    reached within ``max_restarts`` restarts.

    ``block`` should be at least the largest multiplicity expected among the
    wanted eigenvalues; single-vector Krylov spaces only see one direction
    of each eigenspace.
    """
    dim = M.shape[0]
    if not 0 < m < dim:
        raise DomainError(f"need 0 < m < dim, got m={m}, dim={dim}")
    if tol <= 0:
        raise DomainError("tol must be positive")
    if dim <= dense_limit:
        return _dense(M, m, vectors, seed)

    rng = np.random.default_rng(seed)
    lock_tol = 0.1 * tol
    b = block or min(m, 4)
    nev = m + min(m, 4)  # track a few extra pairs to protect the m-th
    ncv = max_basis or max(40, 3 * nev, nev + 10 * b)
    ncv = int(min(ncv, dim - m))
    if ncv < nev + b:
        raise DomainError(f"Krylov basis of {ncv} too small for m={m}, block={b}")

    locked = np.zeros((dim, 0), dtype=complex, order="F")
    locked_vals: list[float] = []
    V = np.empty((dim, ncv), dtype=complex, order="F")
    W = np.empty((dim, ncv), dtype=complex, order="F")
    start = _orthonormalise(rng.standard_normal((dim, b)) + 1j * rng.standard_normal((dim, b)),
                            [], rng)
    used = start.shape[1]
    V[:, :used] = start
    W[:, :used] = M @ start
    last = slice(0, used)
    matvecs = used
    best = np.inf
    restarts = 0

    while True:
        # grow the Krylov basis block by block with full reorthogonalisation
        while used + b <= ncv:
            new = _orthonormalise(W[:, last], [locked, V[:, :used]], rng)
            nb = new.shape[1]
            V[:, used:used + nb] = new
            W[:, used:used + nb] = M @ new
            matvecs += nb
            last = slice(used, used + nb)
            used += nb

        H = (W[:, :used].T @ V[:, :used].conj()).T
        theta, S = np.linalg.eigh(0.5 * (H + H.conj().T))
        Y = V[:, :used] @ S
        R = np.linalg.norm(W[:, :used] @ S - Y * theta, axis=0)

        # lock the leading run of converged Ritz pairs
        nlock = 0
        want = m - len(locked_vals)
        while nlock < used and nlock < want and R[nlock] <= lock_tol:
            nlock += 1
        if nlock:
            locked = np.asfortranarray(np.hstack([locked, Y[:, :nlock]]))
            locked_vals.extend(theta[:nlock].tolist())
            want -= nlock
        if want <= 0:
            break
        best = min(best, float(R[nlock]))

        restarts += 1
        if restarts > max_restarts:
            raise ConvergenceError(
                f"Lanczos did not converge after {max_restarts} restarts "
                f"({len(locked_vals)}/{m} pairs locked, best residual {best:.3e})", best)

        # thick restart: keep the lowest unconverged Ritz vectors
        keep = min(used - nlock, max(nev - len(locked_vals), b), ncv // 2)
        kept = _orthonormalise(Y[:, nlock:nlock + keep], [locked], rng)
        used = kept.shape[1]
        V[:, :used] = kept
        W[:, :used] = M @ kept
        matvecs += used
        # the next block is M applied to the lowest kept vectors, i.e. their residuals
        last = slice(0, min(b, used))

    vals = np.array(locked_vals)
    # Rayleigh-Ritz within the locked space removes drift between lock events
    H = locked.conj().T @ (M @ locked)
    vals, S = np.linalg.eigh(0.5 * (H + H.conj().T))
    vecs = locked @ S
    res = _residuals(M, vals, vecs)
    if np.any(res > tol):
        raise ConvergenceError(
            f"residual certificate failed: max residual {res.max():.3e} > tol {tol:.1e}",
            float(res.max()))
    log.debug("lanczos: dim=%d m=%d matvecs=%d restarts=%d", dim, m, matvecs, restarts)
    return SpectrumResult(vals, res, vecs if vectors else None, seed, matvecs, "lanczos")


def lowest_eigenpairs(op, m: int, tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED,
                      **kwargs) -> SpectrumResult:
    """Lowest ``m`` eigenpairs of a :class:`~gqlab.lattice.SparseHermitianOperator` (or matrix)."""
    M = getattr(op, "matrix", op)
    return lowest_eigenpairs_matrix(M, m, tol=tol, seed=seed, **kwargs)


def default_threshold(result: SpectrumResult, k: int = 1) -> float:
    res = float(np.max(result.residuals)) if len(result.residuals) else 0.0
    return max(0.05 * max(k, 1), 5.0 * res)


def cluster(result, gap_threshold: float | None = None, k: int = 1) -> ClusterReport:
    """Greedy gap clustering of sorted eigenvalues.

    A new cluster starts whenever the gap to the previous eigenvalue
    exceeds ``gap_threshold`` (default ``max(0.05 k, 5 * max residual)``).
    Accepts a :class:`SpectrumResult` or a plain sorted sequence.
    """
    if isinstance(result, SpectrumResult):
        vals = np.asarray(result.eigenvalues, dtype=float)
        thr = default_threshold(result, k) if gap_threshold is None else gap_threshold
    else:
        vals = np.asarray(result, dtype=float)
        thr = 0.05 * max(k, 1) if gap_threshold is None else gap_threshold
    if np.any(np.diff(vals) < 0):
        raise DomainError("eigenvalues must be sorted")
    groups: list[list[int]] = []
    for i, v in enumerate(vals):
        if groups and v - vals[i - 1] <= thr:
            groups[-1].append(i)
        else:
            groups.append([i])
    clusters = tuple(Cluster(float(np.mean(vals[g])), len(g), tuple(g)) for g in groups)
    return ClusterReport(clusters, float(thr))
