"""Experiment drivers comparing lattice spectra with the limit predictions.

Eigenvalue sweeps in s, counting windows, localisation of low eigenvectors
near Bohr-Sommerfeld fibers, Rayleigh floors away from them, and the
spectral-gap / Riemann-Roch count.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import limit
from .bundle import BSPointSet, PrequantumBundle, bs_points, circle_distance
from .eigen import (DEFAULT_SEED, DEFAULT_TOL, SpectrumResult, cluster, default_threshold,
                    lowest_eigenpairs)
from .errors import (ConvergenceError, DomainError, IllPosedWindowError,
                     InsufficientSpectrumError, PreconditionError)
from .lattice import assemble_circle_reduced, assemble_sharp
from .model import ComplexStructureFamily, Grid, MetricField, family_at, semiflatness_check

log = logging.getLogger(__name__)


def worker_count(jobs: int) -> int:
    """Thread cap from ``GQLAB_THREADS`` (default: CPU count)."""
    env = os.environ.get("GQLAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


def default_block(k: int, n: int, m: int) -> int:
    """Largest limit multiplicity among the lowest ``m`` levels (Lanczos block size)."""
    bs = k ** n
    N = limit.level_index_N(m, n, bs)
    return max(1, min(m, bs * limit.level_multiplicity(N, n), 16))


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepResult:
    family: str
    k: int
    n: int
    s_values: tuple[float, ...]
    spectra: tuple[SpectrumResult, ...]
    targets: np.ndarray
    operator: str = "dbar"

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([r.eigenvalues for r in self.spectra])

    @property
    def errors(self) -> np.ndarray:
        """``|lambda_s^j - k N(j)|``, shape ``(len(s), m)``."""
        return np.abs(self.eigenvalues - self.targets[None, :])

    def monotone(self, j: int) -> bool:
        """Whether the error of the j-th eigenvalue (1-based) strictly decreases along s."""
        e = self.errors[:, j - 1]
        return bool(np.all(np.diff(e) < 0))

    def zero_count_threshold(self) -> float | None:
        """Largest s such that the count below k/2 equals k^n for it and every smaller s."""
        want = self.k ** self.n
        ok = [int(np.sum(r.eigenvalues < 0.5 * self.k)) == want for r in self.spectra]
        thr = None
        for s, good in zip(reversed(self.s_values), reversed(ok)):
            if not good:
                break
            thr = s
        return thr

    def rows(self):
        for s, r in zip(self.s_values, self.spectra):
            for j, lam in enumerate(r.eigenvalues, start=1):
                t = self.targets[j - 1]
                yield s, j, float(lam), float(t), abs(float(lam) - t)


def operator_at(family: ComplexStructureFamily, bundle: PrequantumBundle, grid: Grid, s: float):
    """Half of ``Delta^sharp`` at parameter s (the dbar-Laplacian for integrable families)."""
    _, metric = family_at(family, s, grid)
    return assemble_sharp(metric, bundle, grid, integrable=True)[1]


def sweep(family: ComplexStructureFamily, bundle: PrequantumBundle, grid: Grid, s_list, m: int,
          tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED, block: int | None = None) -> SweepResult:
    """Lowest ``m`` eigenvalues of the half-sharp operator for each s, against ``k N(j)``."""
    s_values = tuple(float(s) for s in s_list)
    if not s_values or any(b >= a for a, b in zip(s_values, s_values[1:])):
        raise DomainError("s values must be strictly decreasing")
    if min(s_values) <= 0:
        raise DomainError("s values must be positive")
    if not semiflatness_check(family, grid).is_semiflat:
        log.warning("family %s is not asymptotically semiflat", family.name)
    k, n = bundle.k, bundle.n
    targets = limit.targets(k, n, k ** n, m)
    block = block or default_block(k, n, m)

    def solve(s):
        op = operator_at(family, bundle, grid, s)
        try:
            return lowest_eigenpairs(op, m, tol=tol, seed=seed, block=block)
        except ConvergenceError as exc:
            raise ConvergenceError(f"s={s}: {exc}", exc.best_residual) from exc

    with ThreadPoolExecutor(worker_count(len(s_values))) as pool:
        spectra = tuple(pool.map(solve, s_values))
    kind = "dbar" if family.claims_integrable else "half_sharp"
    return SweepResult(family.name, k, n, s_values, spectra, targets, kind)


# -- counting -------------------------------------------------------------------

def counting_window(spectrum, a: float, b: float, tol: float | None = None, k: int = 1) -> int:
    """Number of computed eigenvalues in ``(a, b]``.

    Raises :class:`IllPosedWindowError` when an edge lies within ``tol`` of an
    eigenvalue, and :class:`InsufficientSpectrumError` when ``b`` is not below
    the largest computed eigenvalue (the count could be incomplete).
    """
    if not a < b:
        raise DomainError("need a < b")
    if isinstance(spectrum, SpectrumResult):
        vals = np.asarray(spectrum.eigenvalues)
        tol = default_threshold(spectrum, k) if tol is None else tol
    else:
        vals = np.sort(np.asarray(spectrum, dtype=float))
        tol = 0.05 * k if tol is None else tol
    for edge in (a, b):
        near = np.abs(vals - edge)
        if near.size and near.min() <= tol:
            raise IllPosedWindowError(f"window edge {edge} within {tol:g} of eigenvalue "
                                      f"{vals[np.argmin(near)]:.6g}")
    if vals.size == 0 or b >= vals.max():
        raise InsufficientSpectrumError(f"window edge {b} not below the largest computed "
                                        "eigenvalue; compute more eigenpairs")
    return int(np.sum((vals > a) & (vals <= b)))


@dataclass(frozen=True)
class CountComparison:
    window: tuple[float, float]
    limit_count: int
    counts: tuple[int, ...]
    s_values: tuple[float, ...]
    threshold: float | None   # largest s below which every count matches

    @property
    def matches(self) -> bool:
        return self.threshold is not None


def compare_counts(result: SweepResult, a: float, b: float) -> CountComparison:
    """Window counts along a sweep against the limit count."""
    bs = result.k ** result.n
    N_max = int(np.ceil(max(b, 0) / result.k)) + 1
    lim = limit.gaussian_spectrum(result.k, result.n, bs, N_max).count(a, b)
    counts = tuple(counting_window(r, a, b, k=result.k) for r in result.spectra)
    thr = None
    for s, c in zip(reversed(result.s_values), reversed(counts)):
        if c != lim:
            break
        thr = s
    return CountComparison((a, b), lim, counts, result.s_values, thr)


# -- localisation -----------------------------------------------------------------

@dataclass(frozen=True)
class LocalizationReport:
    eigvec_id: str
    C: float
    fraction: float
    s: float
    k: int


def base_distance(metric: MetricField, bs: BSPointSet) -> np.ndarray:
    """g_s-distance from every base grid node to the nearest BS point.

    Dijkstra over the periodic base grid; edge lengths use the theta-averaged
    x-block of the metric averaged over the two endpoints.  BS points are
    attached to the corners of their cell by straight metric segments.
    """
    grid = metric.grid
    n, nx, h = grid.n, grid.n_x, grid.h_x
    G = _theta_averaged_x_block(metric)                 # base_shape + (n, n)
    nb = nx ** n
    idx = np.arange(nb).reshape(grid.base_shape)
    rows, cols, vals = [], [], []
    for ax in range(n):
        nxt = np.roll(idx, -1, axis=ax)
        gii = 0.5 * (G[..., ax, ax] + np.roll(G[..., ax, ax], -1, axis=ax))
        rows.append(idx.ravel())
        cols.append(nxt.ravel())
        vals.append(h * np.sqrt(gii).ravel())
    src = nb
    Gflat = G.reshape(nb, n, n)
    for b in bs.points:
        lo = np.floor(np.asarray(b) / h + 1e-9).astype(int)
        for corner in np.ndindex(*(2,) * n):
            node = np.mod(lo + np.array(corner), nx)
            j = int(np.ravel_multi_index(tuple(node), grid.base_shape))
            dx = (lo + np.array(corner)) * h - np.asarray(b)
            length = float(np.sqrt(max(dx @ Gflat[j] @ dx, 0.0)))
            rows.append(np.array([src]))
            cols.append(np.array([j]))
            vals.append(np.array([max(length, 1e-300)]))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nb + 1, nb + 1))
    dist = dijkstra(A, directed=False, indices=src)
    return dist[:nb].reshape(grid.base_shape)


def _theta_averaged_x_block(metric: MetricField) -> np.ndarray:
    grid = metric.grid
    n = grid.n
    return metric.x_block().mean(axis=tuple(range(n)))


def cell_halfwidth(metric: MetricField) -> np.ndarray:
    """Half the g_s-length of a base cell along its longest axis, per node."""
    G = _theta_averaged_x_block(metric)
    return 0.5 * metric.grid.h_x * np.sqrt(np.max(np.diagonal(G, axis1=-2, axis2=-1), axis=-1))


def base_diameter(metric: MetricField, bs: BSPointSet) -> float:
    """Radius beyond which every base cell lies inside the ball."""
    return float(np.max(base_distance(metric, bs) + cell_halfwidth(metric)))


def base_density(eigvecs: np.ndarray, grid: Grid) -> np.ndarray:
    """``sum |f|^2`` over fiber sites (and over columns), on the base grid."""
    V = np.asarray(eigvecs)
    if V.ndim == 1:
        V = V[:, None]
    dens = np.sum(np.abs(V) ** 2, axis=1).reshape(grid.shape)
    return dens.sum(axis=tuple(range(grid.n)))


def localization_mass(eigvec: np.ndarray, s: float, C: float, metric: MetricField,
                      bs: BSPointSet, eigvec_id: str = "ground", dist: np.ndarray | None = None
                      ) -> LocalizationReport:
    """Mass fraction of ``eigvec`` over fibers within g_s-distance ``C`` of a BS point.

    ``eigvec`` may hold several columns (a cluster); their densities are summed.
    A base cell whose distance range ``[d - r, d + r]`` straddles ``C`` counts
    with the covered share, which removes the staircase in C and s coming
    from whole cells entering the ball at once.
    """
    if C < 0:
        raise DomainError("C must be nonnegative")
    dens = base_density(eigvec, metric.grid)
    dist = base_distance(metric, bs) if dist is None else dist
    r = cell_halfwidth(metric)
    share = np.clip((C - (dist - r)) / (2 * r), 0.0, 1.0)
    frac = float((dens * share).sum() / dens.sum())
    return LocalizationReport(eigvec_id, float(C), min(max(frac, 0.0), 1.0), float(s), bs.k)


DYADIC_C = tuple(2.0 ** p for p in range(-4, 11))


def localization_radius(eigvec: np.ndarray, s: float, metric: MetricField, bs: BSPointSet,
                        eps: float = 0.1, radii=DYADIC_C) -> LocalizationReport:
    """Smallest C on a dyadic grid with mass fraction ``>= 1 - eps``."""
    dist = base_distance(metric, bs)
    rep = None
    for C in radii:
        rep = localization_mass(eigvec, s, C, metric, bs, dist=dist)
        if rep.fraction >= 1.0 - eps:
            return rep
    return rep


# -- Rayleigh floor -----------------------------------------------------------------

@dataclass(frozen=True)
class FloorReport:
    floor: float
    bound: float
    K: float
    verdict: bool
    tolerance: float


def region_mask(grid: Grid, intervals) -> np.ndarray:
    """Base-grid mask of the box ``prod [lo_i, hi_i]`` (bounds in x units, read mod 1)."""
    xs = np.arange(grid.n_x) * grid.h_x
    masks = [(np.mod(xs - lo + 1e-12, 1.0) <= hi - lo + 2e-12) if hi - lo < 1 else
             np.ones(grid.n_x, dtype=bool) for lo, hi in intervals]
    if len(masks) != grid.n:
        raise DomainError(f"need {grid.n} intervals")
    return np.logical_and.reduce(np.meshgrid(*masks, indexing="ij"))


def rayleigh_floor_probe(metric: MetricField, bundle: PrequantumBundle, grid: Grid, region,
                         tolerance: float = 0.05, seed: int = DEFAULT_SEED) -> FloorReport:
    """Dirichlet lowest eigenvalue of ``Delta^{rho_k}`` on fibers over ``region``.

    ``region`` is a boolean base mask or a list of ``(lo, hi)`` intervals.
    The verdict compares it with ``k^2 + min_b lambda(k, b) / N_b`` where
    ``N_b`` is the largest eigenvalue of the theta-block over the fiber.
    """
    mask = np.asarray(region_mask(grid, region) if not isinstance(region, np.ndarray) else region,
                      dtype=bool)
    if mask.shape != grid.base_shape or not mask.any():
        raise DomainError("region must be a nonempty base mask")
    k, n = bundle.k, grid.n
    nodes = np.argwhere(mask) * grid.h_x
    pts = bs_points(bundle).points
    d = np.max(circle_distance(nodes[:, None, :], pts[None, :, :]), axis=-1).min()
    if d < grid.h_x - 1e-12:
        raise PreconditionError(f"region comes within {d:.3g} of a Bohr-Sommerfeld fiber")
    Gt = metric.theta_block().reshape(grid.shape[:n] + grid.base_shape + (n, n))
    Nb = np.linalg.eigvalsh(Gt)[..., -1].max(axis=tuple(range(n)))
    K = min(limit.lambda_k_b(k, x)[0] / Nb[tuple(i)] for x, i in zip(nodes, np.argwhere(mask)))
    op = assemble_circle_reduced(metric, bundle, grid)
    full = np.broadcast_to(mask, grid.shape).ravel()
    sub = op.restricted(full)
    floor = float(lowest_eigenpairs(sub, 1, seed=seed, vectors=False).eigenvalues[0])
    bound = k ** 2 + K
    return FloorReport(floor, bound, K, floor >= bound * (1.0 - tolerance), tolerance)


# -- spectral gap ---------------------------------------------------------------------

@dataclass(frozen=True)
class GapReport:
    eigenvalues: np.ndarray
    k: int
    n: int
    kappa: float
    delta: float
    cluster_size: int
    low_edge: float
    next_value: float
    gap: float
    C_fit: float
    C_max: float

    @property
    def rr_expected(self) -> int:
        return self.k ** self.n

    @property
    def rr_verdict(self) -> bool:
        return self.cluster_size == self.rr_expected

    @property
    def pattern_verdict(self) -> bool:
        """Spectrum inside ``(-C delta, C delta) u (2k + 2 kappa - C delta, inf)`` with ``C <= C_max``."""
        return bool(np.isfinite(self.C_fit) and self.C_fit <= self.C_max)

    def as_dict(self) -> dict:
        return {"cluster_size": self.cluster_size, "gap": self.gap,
                "rr_expected": self.rr_expected, "rr_verdict": self.rr_verdict,
                "low_edge": self.low_edge, "next": self.next_value,
                "kappa": self.kappa, "delta": self.delta, "C_fit": self.C_fit,
                "pattern_verdict": self.pattern_verdict}


def gap_report(spectrum, k: int, n: int = 1, kappa: float = 0.0, delta: float | None = None,
               C_max: float = 1.0) -> GapReport:
    """Low cluster, gap above it and the two-interval check for ``Delta^sharp`` eigenvalues.

    The low cluster is the first gap cluster when its representative lies
    below ``k + kappa``.  ``C_fit`` is the smallest C for which the spectrum
    sits in the two intervals; ``delta`` defaults to ``0.1 k``.
    """
    vals = np.sort(np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float))
    if vals.size < k ** n + 1:
        raise InsufficientSpectrumError(f"need at least {k ** n + 1} eigenvalues, got {vals.size}")
    delta = 0.1 * k if delta is None else float(delta)
    if delta <= 0:
        raise DomainError("delta must be positive")
    rep = cluster(spectrum if isinstance(spectrum, SpectrumResult) else vals, k=k)
    first = rep.clusters[0]
    size = first.multiplicity if first.value < k + kappa else 0
    low = vals[:size]
    low_edge = float(low.max()) if size else float("nan")
    nxt = float(vals[size])
    gap = nxt - low_edge if size else float("nan")
    upper = 2 * k + 2 * kappa
    need_low = float(np.abs(low).max() / delta) if size else 0.0
    need_high = max(0.0, (upper - nxt) / delta)
    C_fit = max(need_low, need_high)
    if size and need_low >= 0.5 * upper / delta:
        C_fit = float("inf")  # the two intervals would merge
    return GapReport(vals, k, n, kappa, delta, size, low_edge, nxt, gap, C_fit, C_max)
