"""Gauge-lattice discretisation of the Bochner Laplacian on sections of L^k.

Sections are sampled on the sites of a :class:`~gqlab.model.Grid`.  Each
edge carries the exact parallel-transport phase of the connection, and the
operator is assembled from the quadratic form

    E(psi) = sum_sites w(s) * avg_{sigma} (D^sigma psi)^* G(s) (D^sigma psi)

where ``D^sigma`` picks a forward or backward covariant difference per axis
and ``G = g^{-1}``.  Averaging over sigma makes the matrix Hermitian and
positive semidefinite for any positive definite metric, including mixed
``dtheta dx`` terms: diagonal terms become ordinary three-point stencils
with edge-averaged coefficients, cross terms use centred differences.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bundle import PrequantumBundle
from .errors import AssemblyError, ConfigError, InvalidStructureError, ResolutionError
from .model import Grid, MetricField

TWO_PI = 2.0 * np.pi
KINDS = ("bochner", "sharp", "dbar", "fiber", "circle_reduced")


@dataclass(frozen=True, eq=False)
class SparseHermitianOperator:
    """An assembled lattice operator together with its provenance."""

    matrix: sp.csr_matrix
    kind: str
    k: int
    s: float | None = None
    grid: Grid | None = None
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown operator kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def norm(self) -> float:
        """Max-abs-row-sum norm, a cheap upper bound on the spectral radius."""
        return float(abs(self.matrix).sum(axis=1).max())

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def shifted(self, shift: float, kind: str, scale: float = 1.0) -> "SparseHermitianOperator":
        """``scale * (M + shift I)`` relabelled as ``kind``."""
        M = self.matrix + shift * sp.identity(self.dim, dtype=complex, format="csr")
        if scale != 1.0:
            M = scale * M
        return replace(self, matrix=M.tocsr(), kind=kind)

    def restricted(self, mask: np.ndarray) -> "SparseHermitianOperator":
        """Principal submatrix on the sites in ``mask`` (Dirichlet restriction)."""
        idx = np.flatnonzero(np.asarray(mask).ravel())
        M = self.matrix[idx][:, idx].tocsr()
        return replace(self, matrix=M, shape=(len(idx),))

    def write_coo(self, path: str | Path) -> None:
        """Export in ``dim nnz`` / ``row col re im`` text format (0-indexed)."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {coo.nnz}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_coo(path: str | Path, kind: str = "bochner", k: int = 0) -> SparseHermitianOperator:
    with open(path) as fh:
        dim, nnz = (int(v) for v in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 4))
    if data.shape[0] != nnz:
        raise ConfigError(f"{path}: header announces {nnz} entries, found {data.shape[0]}")
    M = sp.coo_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                      shape=(dim, dim)).tocsr()
    return SparseHermitianOperator(M, kind, k)


# -- link phases -----------------------------------------------------------

def link_phases(grid: Grid, bundle: PrequantumBundle) -> list[np.ndarray]:
    """Parallel-transport phase ``U_a(site)`` on the edge ``site -> site + e_a``.

    Angle edges: ``exp(-i k (x_i + a_i/2pi) h_theta)``.  Action edges: 1,
    except the wrap edge ``x_i = 1 - h_x -> 0`` which carries the
    transition phase ``exp(i k theta_i)``.
    """
    if grid.n != bundle.n:
        raise ConfigError(f"bundle has n={bundle.n}, grid has n={grid.n}")
    n, k = grid.n, bundle.k
    x, theta = grid.coordinates()
    coeff = bundle.connection_coefficient(x)
    phases = []
    for i in range(n):
        phases.append(np.exp(-1j * k * coeff[..., i] * grid.h_theta))
    for i in range(n):
        U = np.ones(grid.shape, dtype=complex)
        wrap = [slice(None)] * (2 * n)
        wrap[n + i] = grid.n_x - 1
        U[tuple(wrap)] = np.exp(1j * k * theta[tuple(wrap)][..., i])
        phases.append(U)
    return phases


def horizontal_lift_phases(grid: Grid, bundle: PrequantumBundle) -> list[np.ndarray]:
    """Edge phases read off from the horizontal lift to the circle bundle.

    A horizontal curve of ``dt - c_i dtheta^i`` moves the fiber coordinate
    by ``dt = c_i dtheta^i``; on the weight ``-k`` Fourier mode
    ``f = exp(-i k t) psi`` that shift becomes the factor ``exp(-i k dt)``.
    The x-wrap edge shifts t by ``-theta_i`` (the frame change between charts).
    """
    n, k = grid.n, bundle.k
    x, theta = grid.coordinates()
    coeff = bundle.connection_coefficient(x)
    out = []
    for a in range(2 * n):
        dt = np.zeros(grid.shape)
        if a < n:
            dt = coeff[..., a] * grid.h_theta
        else:
            i = a - n
            wrap = [slice(None)] * (2 * n)
            wrap[a] = grid.n_x - 1
            dt[tuple(wrap)] = -theta[tuple(wrap)][..., i]
        out.append(np.exp(-1j * k * dt))
    return out


def plaquette_flux(grid: Grid, bundle: PrequantumBundle, plane: int = 0) -> float:
    """Summed plaquette angle in the ``(theta^i, x_i)`` plane, ``i = plane``.

    Plaquettes are traversed theta-edge first.  Equals ``2 pi k`` for the
    exact link phases (discrete first Chern number k).
    """
    U = link_phases(grid, bundle)
    n = grid.n
    at, ax = plane, n + plane
    Ut, Ux = U[at], U[ax]
    # loop site -> +theta -> +theta+x -> +x -> site
    loop = Ut * np.roll(Ux, -1, axis=at) * np.conj(np.roll(Ut, -1, axis=ax)) * np.conj(Ux)
    angles = np.angle(loop)
    # sum over the plane, averaged over the transverse coordinates
    plane_sum = angles.sum(axis=(at, ax))
    return float(np.mean(plane_sum))


# -- quadratic-form assembly -----------------------------------------------

def _shift_matrix(shape: tuple[int, ...], axis: int) -> sp.csr_matrix:
    """``(S psi)(site) = psi(site + e_axis)`` with periodic wraparound."""
    size = int(np.prod(shape))
    idx = np.arange(size).reshape(shape)
    nbr = np.roll(idx, -1, axis=axis).ravel()
    return sp.csr_matrix((np.ones(size), (np.arange(size), nbr)), shape=(size, size))


def covariant_differences(shape, spacings, phases):
    """Forward, backward and centred covariant difference matrices per axis."""
    size = int(np.prod(shape))
    eye = sp.identity(size, dtype=complex, format="csr")
    fwd, bwd, ctr = [], [], []
    for a, (h, U) in enumerate(zip(spacings, phases)):
        S = _shift_matrix(shape, a).astype(complex)
        Uf = U.ravel()
        Dp = (sp.diags(Uf) @ S - eye) / h
        # backward edge site - e_a -> site, transported with conj(U(site - e_a))
        Ub = np.conj(np.roll(U, 1, axis=a)).ravel()
        Dm = (eye - sp.diags(Ub) @ S.T) / h
        fwd.append(Dp.tocsr())
        bwd.append(Dm.tocsr())
        ctr.append(((Dp + Dm) * 0.5).tocsr())
    return fwd, bwd, ctr


def assemble_form(shape, spacings, phases, inv_metric: np.ndarray, weight: np.ndarray) -> sp.csr_matrix:
    """Matrix ``F`` with ``psi^H F psi = E(psi)`` (weights included)."""
    d = len(spacings)
    fwd, bwd, ctr = covariant_differences(shape, spacings, phases)
    w = np.asarray(weight, dtype=float).ravel()
    G = inv_metric.reshape(-1, d, d)
    F = None
    for a in range(d):
        W = sp.diags(w * G[:, a, a])
        term = 0.5 * (fwd[a].conj().T @ W @ fwd[a] + bwd[a].conj().T @ W @ bwd[a])
        F = term if F is None else F + term
    for a in range(d):
        for b in range(a + 1, d):
            gab = w * G[:, a, b]
            if not np.any(gab):
                continue
            W = sp.diags(gab)
            cross = ctr[b].conj().T @ W @ ctr[a]
            F = F + cross + cross.conj().T
    return F.tocsr()


def _normalise(F: sp.csr_matrix, weight: np.ndarray) -> sp.csr_matrix:
    """``W^{-1/2} F W^{-1/2}``: Hermitian matrix of the form relative to the L2 mass."""
    r = sp.diags(1.0 / np.sqrt(np.asarray(weight, dtype=float).ravel()))
    M = (r @ F @ r).tocsr()
    M = ((M + M.conj().T) * 0.5).tocsr()
    M.eliminate_zeros()
    return M


def _site_weights(metric: MetricField, volume_scale: float) -> np.ndarray:
    return metric.sqrt_det * metric.grid.cell_volume * volume_scale


def _check_psd(M: sp.csr_matrix, label: str) -> None:
    from .eigen import lowest_eigenpairs_matrix

    lam = lowest_eigenpairs_matrix(M, 1, tol=1e-8, vectors=False).eigenvalues[0]
    scale = max(1.0, float(abs(M).sum(axis=1).max()))
    if lam < -1e-10 * scale:
        raise AssemblyError(f"{label}: assembled form has negative eigenvalue {lam:.3e}")


def assemble_bochner(metric: MetricField, bundle: PrequantumBundle, grid: Grid | None = None,
                     volume_scale: float = 1.0, check_psd: bool = False) -> SparseHermitianOperator:
    """Lattice ``nabla_k^* nabla_k`` for the metric field and bundle level.

    ``volume_scale`` multiplies every cell volume; the spectrum does not
    depend on it.
    """
    grid = grid or metric.grid
    metric.with_grid_check(grid)
    if grid.n != bundle.n:
        raise ConfigError(f"bundle has n={bundle.n}, grid has n={grid.n}")
    w = _site_weights(metric, volume_scale)
    F = assemble_form(grid.shape, grid.spacings, link_phases(grid, bundle), metric.inverse, w)
    M = _normalise(F, w)
    if check_psd:
        _check_psd(M, "bochner")
    return SparseHermitianOperator(M, "bochner", bundle.k, metric.s, grid, grid.shape)


def assemble_sharp(metric: MetricField, bundle: PrequantumBundle, grid: Grid | None = None,
                   integrable: bool = False, bochner: SparseHermitianOperator | None = None):
    """``Delta^sharp = nabla^* nabla - n k``; with ``integrable`` also ``Delta_dbar``.

    Returns the sharp operator, or ``(sharp, dbar)`` when ``integrable`` is set.
    """
    grid = grid or metric.grid
    B = bochner or assemble_bochner(metric, bundle, grid)
    sharp = B.shifted(-grid.n * bundle.k, "sharp")
    if not integrable:
        return sharp
    return sharp, sharp.shifted(0.0, "dbar", scale=0.5)


def assemble_dbar(metric: MetricField, bundle: PrequantumBundle, grid: Grid | None = None):
    """``(1/2) Delta^sharp``; equals the dbar-Laplacian for integrable structures."""
    return assemble_sharp(metric, bundle, grid, integrable=True)[1]


def assemble_circle_reduced(metric: MetricField, bundle: PrequantumBundle,
                            grid: Grid | None = None) -> SparseHermitianOperator:
    """Laplacian of ``(dt - c_i dtheta^i)^2 + g`` on the weight ``-k`` mode in t.

    The horizontal part is the lattice form with phases from the
    horizontal lift; the vertical direction has unit length so ``d/dt``
    contributes ``|(-ik) f|^2 = k^2 |f|^2``.
    """
    grid = grid or metric.grid
    metric.with_grid_check(grid)
    w = _site_weights(metric, 1.0)
    F = assemble_form(grid.shape, grid.spacings, horizontal_lift_phases(grid, bundle),
                      metric.inverse, w)
    F = F + sp.diags(w.ravel() * float(bundle.k) ** 2)
    M = _normalise(F.tocsr(), w)
    return SparseHermitianOperator(M, "circle_reduced", bundle.k, metric.s, grid, grid.shape)


def assemble_fiber_operator(b, k: int, fiber_metric: np.ndarray | None, n_theta: int,
                            n: int | None = None) -> SparseHermitianOperator:
    """Twisted fiber Laplacian ``L_k`` on T^n at base point ``b``.

    Discretises ``int (d_i phi + i k b_i phi)^* (g_b)^{ij} (d_j phi + i k b_j phi)``.
    ``fiber_metric`` is ``g_b`` sampled on the ``(n_theta,)*n`` angle grid
    (shape ``(n_theta,)*n + (n, n)``); ``None`` means Euclidean.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = n or b.size
    if n_theta < 4:
        raise ResolutionError("fiber operator needs >= 4 points per axis")
    shape = (n_theta,) * n
    h = TWO_PI / n_theta
    if fiber_metric is None:
        fiber_metric = np.broadcast_to(np.eye(n), shape + (n, n))
    fiber_metric = np.asarray(fiber_metric, dtype=float)
    if fiber_metric.shape != shape + (n, n):
        raise ConfigError(f"fiber metric shape {fiber_metric.shape} != {shape + (n, n)}")
    if np.min(np.linalg.eigvalsh(fiber_metric)[..., 0]) <= 1e-12:
        raise InvalidStructureError("fiber metric is degenerate")
    # d phi + i k b phi  ~  (exp(i k b h) phi(theta + h) - phi(theta)) / h
    phases = [np.full(shape, np.exp(1j * k * b[i] * h)) for i in range(n)]
    w = np.full(shape, h ** n)
    F = assemble_form(shape, (h,) * n, phases, np.linalg.inv(fiber_metric), w)
    M = _normalise(F, w)
    return SparseHermitianOperator(M, "fiber", k, None, None, shape)
