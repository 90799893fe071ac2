"""Invariant suite run by ``gqlab verify``.

Each check returns a :class:`Check`; the suite passes when all of them do.
Grids are kept small so the whole suite runs in a couple of minutes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import analysis, curvature, limit
from .bundle import PrequantumBundle, bs_points, fiber_holonomy, is_bs_point
from .eigen import lowest_eigenpairs, lowest_eigenpairs_matrix
from .lattice import (assemble_bochner, assemble_circle_reduced, assemble_fiber_operator,
                      assemble_sharp, plaquette_flux)
from .model import (Grid, family_at, flat_family, integrability_residual, metric_from_A, preset,
                    semiflat_family, theta_hessian_family)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    passed: bool
    detail: str = ""


def _run(module: str, name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        log.exception("check %s/%s raised", module, name)
        return Check(module, name, False, f"{type(exc).__name__}: {exc}")
    return Check(module, name, bool(ok), detail)


# -- model -----------------------------------------------------------------

def _metric_spd_unit_det(family, s):
    def fn():
        _, met = family_at(family, s, Grid(family.n, 8, 8))
        lo = np.linalg.eigvalsh(met.g)[..., 0].min()
        det = np.abs(np.linalg.det(met.g) - 1).max()
        sym = np.abs(met.g - np.swapaxes(met.g, -1, -2)).max()
        return lo > 0 and det <= 1e-10 and sym == 0, f"min eig {lo:.3g}, |det-1| {det:.2e}"
    return fn


def _block_diagonal_when_p_zero():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        B = rng.standard_normal((2, 2))
        Q = B @ B.T + 0.5 * np.eye(2)
        g = metric_from_A(1j * Q)
        worst = max(worst, np.abs(g[:2, 2:]).max(), np.abs(g[:2, :2] - Q).max(),
                    np.abs(g[2:, 2:] - np.linalg.inv(Q)).max())
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _linear_homogeneity(family):
    def fn():
        g = Grid(family.n, 8, 8)
        A1, _ = family_at(family, 1.0, g)
        A3, _ = family_at(family, 0.3, g)
        err = np.abs(A3 - 0.3 * A1).max()
        return err <= 1e-15 * max(1.0, np.abs(A1).max()), f"max |A(0.3) - 0.3 A(1)| = {err:.2e}"
    return fn


def _integrability_rate():
    fam = theta_hessian_family(2)
    r1 = integrability_residual(fam, 1.0, Grid(2, 16, 8))
    r2 = integrability_residual(fam, 1.0, Grid(2, 32, 8))
    return r1 / r2 >= 3.0, f"residual {r1:.3e} -> {r2:.3e} (ratio {r1 / r2:.2f})"


# -- bundle ------------------------------------------------------------------

def _bs_count():
    rng = np.random.default_rng(2)
    for n in (1, 2):
        for k in (1, 2, 3, 4):
            a = rng.uniform(0, 2 * np.pi, n)
            if len(bs_points(PrequantumBundle(n, k, tuple(a)))) != k ** n:
                return False, f"n={n} k={k}"
    return True, "|B_k| = k^n for n<=2, k<=4"


def _bs_divisor_monotone():
    for k in (2, 3, 4, 6):
        big = PrequantumBundle(1, k)
        for d in (d for d in range(1, k + 1) if k % d == 0):
            for b in bs_points(PrequantumBundle(1, d)).points:
                if not is_bs_point(big, b):
                    return False, f"{b} in B_{d} but not B_{k}"
        for b, lvl in bs_points(big).rows():
            if k % lvl or not is_bs_point(PrequantumBundle(1, lvl), b):
                return False, f"bad strict level at {b}"
            if any(is_bs_point(PrequantumBundle(1, d), b) for d in range(1, lvl)):
                return False, f"strict level of {b} not minimal"
    return True, "divisor monotonicity and minimal strict levels"


def _holonomy_cross_check():
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(100):
        k = int(rng.integers(1, 5))
        bun = PrequantumBundle(1, k, (float(rng.uniform(0, 2 * np.pi)),))
        pts = bs_points(bun).points[:, 0]
        # half the samples on BS points, half random
        b = float(rng.choice(pts)) if rng.random() < 0.5 else float(rng.uniform(0, 1))
        listed = bool(np.any(np.abs(pts - b) < 1e-12))
        trivial = bool(np.all(np.abs(fiber_holonomy(bun, b) - 1) < 1e-9))
        bad += listed != trivial
    return bad == 0, f"{bad} disagreements in 100 samples"


# -- lattice -------------------------------------------------------------------

def _lattice_setup(family, k, N=16, s=0.2):
    g = Grid(family.n, N, N)
    _, met = family_at(family, s, g)
    return g, met, PrequantumBundle(family.n, k)


def _hermitian_psd(family):
    def fn():
        worst_h, worst_l = 0.0, np.inf
        for k in (0, 1, 2):
            g, met, bun = _lattice_setup(family, k)
            B = assemble_bochner(met, bun)
            worst_h = max(worst_h, B.hermiticity_error() / B.norm())
            worst_l = min(worst_l, np.linalg.eigvalsh(B.dense())[0])
        return worst_h <= 1e-13 and worst_l >= -1e-10, \
            f"hermiticity {worst_h:.1e}, min eigenvalue {worst_l:.2e}"
    return fn


def _gauge_invariance(family):
    def fn():
        g, met, bun = _lattice_setup(family, 2)
        M = assemble_bochner(met, bun).dense()
        rng = np.random.default_rng(4)
        D = np.exp(1j * rng.uniform(0, 2 * np.pi, M.shape[0]))
        M2 = (D[:, None] * M) * D.conj()[None, :]
        e = np.abs(np.linalg.eigvalsh(M)[:20] - np.linalg.eigvalsh(M2)[:20]).max()
        return e <= 1e-10, f"max spectral change {e:.2e}"
    return fn


def _measure_scaling(family):
    def fn():
        g, met, bun = _lattice_setup(family, 1)
        a = np.linalg.eigvalsh(assemble_bochner(met, bun).dense())[:20]
        b = np.linalg.eigvalsh(assemble_bochner(met, bun, volume_scale=7.0).dense())[:20]
        e = np.abs(a - b).max()
        return e <= 1e-12 * max(1.0, np.abs(a).max()), f"max change {e:.2e}"
    return fn


def _chern():
    worst = 0.0
    for n, N in ((1, 8), (1, 12), (2, 6)):
        for k in (0, 1, 3):
            g = Grid(n, N, N)
            for plane in range(n):
                worst = max(worst, abs(plaquette_flux(g, PrequantumBundle(n, k), plane)
                                       - 2 * np.pi * k))
    return worst <= 1e-10, f"max |flux - 2 pi k| = {worst:.2e}"


def _h_refinement():
    fam = flat_family(1)
    errs = []
    for N in (16, 32):
        g = Grid(1, N, N)
        _, met = family_at(fam, 1.0 / (2 * np.pi), g)
        lam = np.linalg.eigvalsh(assemble_bochner(met, PrequantumBundle(1, 1)).dense())[0]
        errs.append(abs(lam - 1.0))
    return errs[0] / errs[1] >= 3.0, f"error {errs[0]:.3e} -> {errs[1]:.3e}"


def _circle_identity(family):
    def fn():
        worst = 0.0
        for k in (0, 1, 3):
            g, met, bun = _lattice_setup(family, k)
            B = assemble_bochner(met, bun).matrix
            R = assemble_circle_reduced(met, bun).matrix
            diff = R - B - k * k * sp.identity(B.shape[0], format="csr")
            worst = max(worst, abs(diff).max() / abs(B).max())
        return worst <= 1e-12, f"relative deviation {worst:.2e}"
    return fn


# -- eigen ------------------------------------------------------------------------

def _eigen_checks(family):
    def fn():
        g, met, bun = _lattice_setup(family, 2, N=24)
        M = assemble_sharp(met, bun, integrable=True)[1].matrix
        dense = lowest_eigenpairs_matrix(M, 6, dense_limit=10 ** 6)
        lz = lowest_eigenpairs_matrix(M, 6, block=2, dense_limit=0, seed=42)
        lz2 = lowest_eigenpairs_matrix(M, 6, block=2, dense_limit=0, seed=42)
        lz3 = lowest_eigenpairs_matrix(M, 6, block=2, dense_limit=0, seed=7)
        V = lz.eigenvectors
        R = np.linalg.norm(M @ V - V * lz.eigenvalues, axis=0)
        orth = np.abs(V.conj().T @ V - np.eye(6)).max()
        d1 = np.abs(dense.eigenvalues - lz.eigenvalues).max()
        d2 = np.abs(lz.eigenvalues - lz2.eigenvalues).max()
        d3 = np.abs(lz.eigenvalues - lz3.eigenvalues).max()
        ok = R.max() <= 1e-6 and orth <= 1e-8 and d1 <= 1e-8 and d2 <= 1e-10 and d3 <= 1e-8
        return ok, (f"residual {R.max():.1e}, orth {orth:.1e}, dense diff {d1:.1e}, "
                    f"same seed {d2:.1e}, other seed {d3:.1e}")
    return fn


# -- limit --------------------------------------------------------------------------

def _cumulative_identity():
    ok = all(sum(comb(p + n - 1, n - 1) for p in range(N + 1)) == comb(N + n, n)
             for N in range(21) for n in range(1, 5))
    return ok, "N <= 20, n <= 4"


def _lambda_vs_bs():
    rng = np.random.default_rng(5)
    for _ in range(200):
        k = int(rng.integers(1, 5))
        bun = PrequantumBundle(1, k)
        pts = bs_points(bun).points[:, 0]
        b = float(rng.choice(pts)) if rng.random() < 0.5 else float(rng.uniform(0, 1))
        zero = limit.lambda_k_b(k, b)[0] <= 1e-20
        if zero != is_bs_point(bun, b):
            return False, f"k={k}, b={b}"
    return True, "200 samples"


def _level_index_inverse():
    for n in (1, 2, 3):
        for bs in (1, 2, 4):
            for N in range(8):
                j = bs * comb(N + n, n)
                if limit.level_index_N(j, n, bs) != N or limit.level_index_N(j + 1, n, bs) != N + 1:
                    return False, f"n={n} bs={bs} N={N}"
    return True, "n <= 3, bs in {1,2,4}, N < 8"


def _fiber_oracle():
    worst = 0.0
    for k, b in ((1, 0.0), (2, 0.3), (1, 0.5), (3, 0.7)):
        op = assemble_fiber_operator(b, k, None, 128)
        lam = lowest_eigenpairs(op, 1, vectors=False).eigenvalues[0]
        worst = max(worst, abs(lam - limit.lambda_k_b(k, b)[0]))
    return worst <= 1e-3, f"max deviation {worst:.2e}"


# -- analysis -------------------------------------------------------------------------

def _zero_cluster_threshold():
    res = analysis.sweep(semiflat_family(1), PrequantumBundle(1, 1), Grid(1, 16, 64),
                         [0.4, 0.2, 0.1, 0.05], 3)
    thr = res.zero_count_threshold()
    return thr is not None, f"threshold s = {thr}"


def _counting_properties():
    g, met, bun = _lattice_setup(flat_family(1), 2, N=32)
    r = lowest_eigenpairs(assemble_sharp(met, bun, integrable=True)[1], 8, block=2)
    a = analysis.counting_window(r, -0.5, 1.0, k=2)
    b = analysis.counting_window(r, 1.0, 3.0, k=2)
    ab = analysis.counting_window(r, -0.5, 3.0, k=2)
    inner = analysis.counting_window(r, -0.5, 0.5, k=2)
    return a + b == ab and inner <= ab, f"({a} + {b} = {ab}), inner {inner}"


def _localization_monotone():
    fam = flat_family(1)
    bun = PrequantumBundle(1, 1)
    g = Grid(1, 32, 64)
    fr = {}
    worst_c = 0.0
    for s in (0.1, 0.05):
        _, met = family_at(fam, s, g)
        r = lowest_eigenpairs(assemble_sharp(met, bun, integrable=True)[1], 1)
        dist = analysis.base_distance(met, bs_points(bun))
        vals = [analysis.localization_mass(r.eigenvectors, s, C, met, bs_points(bun),
                                           dist=dist).fraction for C in analysis.DYADIC_C]
        worst_c = max(worst_c, max(0.0, -np.diff(vals).min()))
        fr[s] = vals
    worst_s = max(0.0, max(a - b for a, b in zip(fr[0.1], fr[0.05])))
    return worst_c == 0.0 and worst_s <= 0.02, f"max decrease in C {worst_c:.2e}, in 1/s {worst_s:.2e}"


def _rayleigh_presets():
    bad = []
    for name in ("flat", "semiflat", "nonsemiflat", "heart"):
        g = Grid(1, 32, 32)
        _, met = family_at(preset(name, 1), 0.2, g)
        rep = analysis.rayleigh_floor_probe(met, PrequantumBundle(1, 1), g, [(0.3, 0.7)])
        if not rep.verdict:
            bad.append(name)
    return not bad, "all presets" if not bad else f"failed: {bad}"


def _rr_flat():
    out = []
    for n, k, N in ((1, 1, 32), (1, 2, 32), (1, 3, 32), (2, 1, 12)):
        g = Grid(n, N, N)
        _, met = family_at(flat_family(n), 0.2, g)
        sharp = assemble_sharp(met, PrequantumBundle(n, k))
        r = lowest_eigenpairs(sharp, k ** n + 1, block=max(k ** n, 2))
        rep = analysis.gap_report(r, k, n)
        out.append(rep.rr_verdict)
    return all(out), f"verdicts {out}"


# -- curvature -------------------------------------------------------------------------

def _ff_identity():
    worst = 0.0
    for name in ("flat", "semiflat", "nonsemiflat", "heart"):
        for n in (1, 2):
            _, met = family_at(preset(name, n), 0.1, Grid(n, 8, 8))
            worst = max(worst, curvature.ff_identity_error(met) / np.abs(met.g).max())
    return worst <= 1e-12, f"relative max |F*F - g| = {worst:.2e}"


def _bundle_components():
    _, met = family_at(semiflat_family(1), 0.1, Grid(1, 16, 16))
    rep = curvature.ricci_field(met)
    ok = not np.any(rep.bundle_mixed) and rep.bundle_vertical == 0.5 and rep.symmetry_error == 0
    return ok, "mixed = 0, vertical = n/2"


def _flat_ricci():
    _, met = family_at(flat_family(1), 0.3, Grid(1, 64, 64))
    r = np.abs(curvature.ricci_field(met).ricci).max()
    return r <= 1e-8, f"max |Ric| = {r:.1e}"


def run_suite(preset_name: str = "flat", n: int = 1) -> list[Check]:
    """Run every invariant check; metric-dependent lattice checks use ``preset_name``."""
    fam = preset(preset_name, n)
    checks = [
        ("model", "metric SPD with unit determinant", _metric_spd_unit_det(fam, 0.3)),
        ("model", "P = 0 gives block-diagonal metric", _block_diagonal_when_p_zero),
        ("model", "linear family homogeneity", _linear_homogeneity(fam)),
        ("model", "integrability residual O(h^2)", _integrability_rate),
        ("bundle", "BS count k^n", _bs_count),
        ("bundle", "level monotonicity along divisors", _bs_divisor_monotone),
        ("bundle", "holonomy vs enumeration", _holonomy_cross_check),
        ("lattice", "hermitian and PSD", _hermitian_psd(fam)),
        ("lattice", "gauge invariance", _gauge_invariance(fam)),
        ("lattice", "measure-scaling invariance", _measure_scaling(fam)),
        ("lattice", "discrete Chern number", _chern),
        ("lattice", "O(h^2) refinement on flat model", _h_refinement),
        ("lattice", "circle_reduced = bochner + k^2", _circle_identity(fam)),
        ("eigen", "certificates, dense agreement, determinism", _eigen_checks(fam)),
        ("limit", "cumulative-count identity", _cumulative_identity),
        ("limit", "lambda(k,b) = 0 iff BS point", _lambda_vs_bs),
        ("limit", "level_index_N inverts cumulative count", _level_index_inverse),
        ("limit", "fiber operator matches lambda(k,b)", _fiber_oracle),
        ("analysis", "zero-cluster count k^n below threshold", _zero_cluster_threshold),
        ("analysis", "counting monotone and additive", _counting_properties),
        ("analysis", "localisation monotone in C and 1/s", _localization_monotone),
        ("analysis", "Rayleigh floor on presets", _rayleigh_presets),
        ("analysis", "Riemann-Roch verdict on flat presets", _rr_flat),
        ("curvature", "F*F = g", _ff_identity),
        ("curvature", "circle-bundle components", _bundle_components),
        ("curvature", "flat Ricci vanishes", _flat_ricci),
    ]
    return [_run(mod, name, fn) for mod, name, fn in checks]
