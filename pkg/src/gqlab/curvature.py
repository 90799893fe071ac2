"""Ricci diagnostics for the metrics g_{J_s} on the model torus.

Base Ricci is computed by fourth-order periodic finite differences in the
grid coordinates ``(theta, x)``.  The Ricci tensor of the circle bundle
metric ``(dt - x_i dtheta^i)^2 + g`` follows algebraically from it:

    Ric^(d_j, d_k) = Ric_jk - g_jk / 2,   Ric^(d_j, e) = 0,   Ric^(e, e) = n / 2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError
from .model import ComplexStructureFamily, Grid, MetricField, family_at, semiflatness_check

log = logging.getLogger(__name__)


def d4(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centred periodic derivative along ``axis``."""
    r = lambda s: np.roll(f, s, axis=axis)  # noqa: E731
    return (-r(-2) + 8 * r(-1) - 8 * r(1) + r(2)) / (12.0 * h)


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    ricci: np.ndarray          # grid shape + (2n, 2n)
    kappa_hat: float
    relative_min: np.ndarray   # per-site min eigenvalue of Ric relative to g
    bundle_horizontal: np.ndarray
    bundle_mixed: np.ndarray
    bundle_vertical: float
    ff_error: float            # max |F*F - g|
    s: float | None = None

    @property
    def symmetry_error(self) -> float:
        return float(np.abs(self.ricci - np.swapaxes(self.ricci, -1, -2)).max())


def _symplectic_matrix(n: int) -> np.ndarray:
    """Components of ``omega = dx_i ^ dtheta^i`` in the ``(theta, x)`` frame."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]])


def ff_identity_error(metric: MetricField) -> float:
    """``max |F g^{-1} F^T - g|`` with ``F = omega`` (curvature up to the factor -i)."""
    W = _symplectic_matrix(metric.grid.n)
    FF = np.einsum("ab,...bc,dc->...ad", W, metric.inverse, W)
    return float(np.abs(FF - metric.g).max())


def ricci_tensor(g: np.ndarray, spacings) -> np.ndarray:
    """Ricci tensor of a metric sampled on a periodic tensor grid.

    ``g`` has shape ``shape + (d, d)`` with ``len(shape) == d``.
    """
    d = g.shape[-1]
    ginv = np.linalg.inv(g)
    dg = np.stack([d4(g, ax, spacings[ax]) for ax in range(d)], axis=-3)   # [..., c, a, b] = d_c g_ab
    # Gamma^a_bc = 1/2 g^ad (d_b g_dc + d_c g_db - d_d g_bc)
    lower = 0.5 * (np.einsum("...bdc->...dbc", dg) + np.einsum("...cdb->...dbc", dg) - dg)
    Gam = np.einsum("...ad,...dbc->...abc", ginv, lower)
    dGam = np.stack([d4(Gam, ax, spacings[ax]) for ax in range(d)], axis=-4)  # [..., e, a, b, c]
    term1 = np.einsum("...aabc->...bc", dGam)
    term2 = np.einsum("...caba->...bc", dGam)
    term3 = np.einsum("...aad,...dbc->...bc", Gam, Gam)
    term4 = np.einsum("...acd,...dba->...bc", Gam, Gam)
    return term1 - term2 + term3 - term4


def relative_eigenvalues(ric: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-site smallest eigenvalue of ``Ric`` relative to ``g``."""
    L = np.linalg.cholesky(g)
    Li = np.linalg.inv(L)
    S = Li @ ric @ np.swapaxes(Li, -1, -2)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    return np.linalg.eigvalsh(S)[..., 0]


def ricci_field(metric: MetricField) -> CurvatureReport:
    """Base Ricci field, its lower bound estimate and the circle-bundle components."""
    grid = metric.grid
    if min(grid.n_theta, grid.n_x) < 16:
        raise ResolutionError("Ricci diagnostics need at least 16 points per axis")
    ric = ricci_tensor(metric.g, grid.spacings)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    rel = relative_eigenvalues(ric, metric.g)
    n = grid.n
    return CurvatureReport(
        ricci=ric,
        kappa_hat=float(rel.min()),
        relative_min=rel,
        bundle_horizontal=ric - 0.5 * metric.g,
        bundle_mixed=np.zeros(ric.shape[:-1]),
        bundle_vertical=n / 2.0,
        ff_error=ff_identity_error(metric),
        s=metric.s,
    )


@dataclass(frozen=True)
class RicciProbe:
    s_values: tuple[float, ...]
    kappa_hat: tuple[float, ...]
    verdict: str
    is_semiflat: bool
    tolerance: float

    def rows(self):
        return list(zip(self.s_values, self.kappa_hat))


def semiflat_ricci_bound_probe(family: ComplexStructureFamily, s_list, grid: Grid,
                               tolerance: float = 0.5) -> RicciProbe:
    """Tabulate kappa_hat(s) and call the family bounded or unbounded-below.

    The verdict is ``bounded`` when ``min_s kappa_hat(s)`` stays above
    ``kappa_hat(s_max) - tolerance * max(1, |kappa_hat(s_max)|)``.
    """
    s_values = tuple(sorted((float(s) for s in s_list), reverse=True))
    if not family.claims_integrable:
        log.warning("family %s is not flagged integrable; the dichotomy assumes integrability",
                    family.name)
    kappas = tuple(ricci_field(family_at(family, s, grid)[1]).kappa_hat for s in s_values)
    ref = kappas[0]
    floor = ref - tolerance * max(1.0, abs(ref))
    verdict = "bounded" if min(kappas) >= floor else "unbounded-below"
    report = semiflatness_check(family, grid)
    return RicciProbe(s_values, kappas, verdict, report.is_semiflat, tolerance)
