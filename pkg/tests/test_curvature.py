import numpy as np
import pytest
import sympy as sp

from gqlab.curvature import (d4, ff_identity_error, ricci_field, ricci_tensor,
                             semiflat_ricci_bound_probe)
from gqlab.errors import ResolutionError
from gqlab.model import (Grid, family_at, flat_family, heart_family, nonsemiflat_family,
                         preset, semiflat_family, theta_hessian_family)


def gaussian_curvature_oracle(E, G, u, v):
    """Gaussian curvature of ``E du^2 + G dv^2`` (sympy, Brioschi form)."""
    W = sp.sqrt(E * G)
    return sp.simplify(-(sp.diff(sp.diff(E, v) / W, v) + sp.diff(sp.diff(G, u) / W, u)) / (2 * W))


def oracle_kappa(which, s_val, samples=4001):
    """Minimum of the exact curvature over ``samples`` equispaced points of a period."""
    th, x, s = sp.symbols("theta x s", positive=True)
    if which == "semiflat":
        Q = 1 + sp.Rational(1, 2) * sp.cos(2 * sp.pi * x)
        var, period = x, 1.0
    else:
        Q = 1 + sp.Rational(1, 2) * sp.cos(th)
        var, period = th, 2 * np.pi
    K = gaussian_curvature_oracle(s * Q, 1 / (s * Q), th, x)
    f = sp.lambdify(var, K.subs(s, s_val), "numpy")
    return float(np.min(f(np.arange(samples) * period / samples)))


def test_d4_fourth_order():
    errs = []
    for N in (16, 32):
        t = np.arange(N) * 2 * np.pi / N
        errs.append(np.abs(d4(np.sin(t), 0, 2 * np.pi / N) - np.cos(t)).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.05)


def test_flat_ricci_vanishes():
    rep = ricci_field(family_at(flat_family(1), 0.3, Grid(1, 64, 64))[1])
    assert np.abs(rep.ricci).max() <= 1e-8
    assert abs(rep.kappa_hat) <= 1e-8
    assert rep.bundle_vertical == 0.5
    assert np.all(rep.bundle_mixed == 0)


def test_bundle_components_n2():
    _, met = family_at(theta_hessian_family(2), 0.2, Grid(2, 16, 16))
    rep = ricci_field(met)
    assert rep.bundle_vertical == 1.0
    assert np.array_equal(rep.bundle_horizontal, rep.ricci - 0.5 * met.g)
    assert rep.symmetry_error == 0.0
    assert rep.kappa_hat <= rep.relative_min.min()


@pytest.mark.parametrize("s", [0.2, 0.1, 0.05])
def test_semiflat_kappa_matches_oracle(s):
    rep = ricci_field(family_at(semiflat_family(1), s, Grid(1, 32, 64))[1])
    ref = oracle_kappa("semiflat", s)
    assert ref == pytest.approx(-np.pi ** 2 * s, rel=1e-6)
    assert rep.kappa_hat == pytest.approx(ref, rel=1e-3)


@pytest.mark.parametrize("s", [0.2, 0.05, 0.0125])
def test_nonsemiflat_kappa_matches_oracle(s):
    rep = ricci_field(family_at(nonsemiflat_family(1), s, Grid(1, 64, 32))[1])
    # kappa_hat is a minimum over the 64 theta nodes
    assert rep.kappa_hat == pytest.approx(oracle_kappa("nonsemiflat", s, samples=64), rel=1e-3)
    assert rep.kappa_hat >= oracle_kappa("nonsemiflat", s) * (1 + 1e-3)


def test_nonsemiflat_unbounded_example():
    k = {s: ricci_field(family_at(nonsemiflat_family(1), s, Grid(1, 64, 32))[1]).kappa_hat
         for s in (0.2, 0.05, 0.0125)}
    assert k[0.05] < k[0.2]
    assert k[0.0125] < -10


def test_two_dimensional_ricci_is_curvature_times_metric():
    # Ric = K g in two dimensions; the FD defect shrinks at fourth order
    errs = []
    for N in (32, 64):
        _, met = family_at(heart_family(1), 0.3, Grid(1, N, N))
        ric = ricci_tensor(met.g, met.grid.spacings)
        K = 0.5 * np.trace(np.linalg.solve(met.g, ric), axis1=-2, axis2=-1)
        errs.append(np.abs(ric - K[..., None, None] * met.g).max())
    assert errs[1] <= 2e-3
    assert errs[0] / errs[1] >= 12


def test_probe_verdicts():
    flat = semiflat_ricci_bound_probe(flat_family(1), [0.2, 0.1, 0.05], Grid(1, 16, 16))
    assert flat.verdict == "bounded" and np.allclose(flat.kappa_hat, 0, atol=1e-10)
    semi = semiflat_ricci_bound_probe(semiflat_family(1), [0.05, 0.2, 0.1], Grid(1, 32, 64))
    assert semi.s_values == (0.2, 0.1, 0.05)
    assert semi.verdict == "bounded" and semi.is_semiflat
    theta = semiflat_ricci_bound_probe(nonsemiflat_family(1), [0.2, 0.1, 0.05], Grid(1, 64, 32))
    assert theta.verdict == "unbounded-below" and not theta.is_semiflat
    assert len(theta.rows()) == 3


@pytest.mark.parametrize("name, n", [("flat", 1), ("semiflat", 1), ("heart", 1), ("heart", 2)])
def test_ff_identity(name, n):

    _, met = family_at(preset(name, n), 0.3, Grid(n, 8, 8))
    assert ff_identity_error(met) <= 1e-12 * max(1.0, np.abs(met.g).max())


def test_coarse_grid_rejected():
    with pytest.raises(ResolutionError):
        ricci_field(family_at(flat_family(1), 0.3, Grid(1, 8, 64))[1])
