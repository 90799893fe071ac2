import numpy as np
import pytest
import scipy.sparse as sp

from gqlab.bundle import PrequantumBundle
from gqlab.eigen import lowest_eigenpairs
from gqlab.errors import ConfigError, InvalidStructureError
from gqlab.lattice import (assemble_bochner, assemble_circle_reduced, assemble_dbar,
                           assemble_fiber_operator, assemble_sharp, link_phases, plaquette_flux,
                           read_coo)
from gqlab.limit import lambda_k_b
from gqlab.model import Grid, family_at, flat_family, heart_family, preset, semiflat_family


def flat(N, s=1.0, n=1, Nx=None):
    g = Grid(n, N, Nx or N)
    return g, family_at(flat_family(n), s, g)[1]


def periodic_second_difference(N, h):
    D = sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]).tolil()
    D[0, N - 1] = D[N - 1, 0] = 1
    return D.tocsr() / h ** 2


def test_k0_flat_is_five_point_laplacian():
    s = 0.3
    g, met = flat(8, s)
    B = assemble_bochner(met, PrequantumBundle(1, 0)).dense()
    Dt = periodic_second_difference(8, g.h_theta)
    Dx = periodic_second_difference(8, g.h_x)
    ref = -(sp.kron(Dt, sp.identity(8)) / s + s * sp.kron(sp.identity(8), Dx)).toarray()
    assert np.allclose(B, ref, atol=1e-10 * np.abs(ref).max())
    w = np.linalg.eigvalsh(B)
    assert abs(w[0]) < 1e-10
    v = np.linalg.eigh(B)[1][:, 0]
    assert np.allclose(np.abs(v), np.abs(v[0]))


@pytest.mark.parametrize("family", [flat_family(1), semiflat_family(1), heart_family(1)])
def test_hermitian_psd_small(family):
    g = Grid(1, 4, 4)
    _, met = family_at(family, 1.0, g)
    op = assemble_bochner(met, PrequantumBundle(1, 1), check_psd=True)
    assert op.hermiticity_error() <= 1e-13 * op.norm()
    assert np.linalg.eigvalsh(op.dense())[0] >= -1e-10


def test_mixed_metric_n2_psd():
    g = Grid(2, 6, 6)
    _, met = family_at(heart_family(2), 0.5, g)
    op = assemble_bochner(met, PrequantumBundle(2, 1))
    assert op.hermiticity_error() == 0
    assert np.linalg.eigvalsh(op.dense())[0] >= -1e-10


def test_landau_ground_level_64():
    _, met = flat(64, 1 / (2 * np.pi))
    r = lowest_eigenpairs(assemble_bochner(met, PrequantumBundle(1, 1)), 1)
    assert abs(r.eigenvalues[0] - 1.0) <= 0.02


def test_landau_richardson_oracle():
    # Bochner levels are k(2N+1); second-order convergence lets Richardson
    # extrapolation from two coarse dense solves hit them closely
    k = 2
    vals = []
    for N in (16, 32):
        _, met = flat(N, 1 / (2 * np.pi))
        vals.append(np.linalg.eigvalsh(assemble_bochner(met, PrequantumBundle(1, k)).dense())[:6])
    rich = (4 * vals[1] - vals[0]) / 3
    assert np.allclose(rich, [2, 2, 6, 6, 10, 10], rtol=2e-3)


def test_sharp_and_dbar_flat_k2():
    _, met = flat(64, 0.2)
    sharp, dbar = assemble_sharp(met, PrequantumBundle(1, 2), integrable=True)
    assert dbar.kind == "dbar" and sharp.kind == "sharp"
    w = lowest_eigenpairs(dbar, 2, block=2).eigenvalues
    assert np.all(np.abs(w) <= 0.05)


def test_sharp_is_bochner_minus_nk():
    _, met = flat(8)
    bun = PrequantumBundle(1, 1)
    B = assemble_bochner(met, bun).matrix
    S = assemble_sharp(met, bun).matrix
    assert abs(S - (B - sp.identity(B.shape[0]))).max() == 0
    D = assemble_dbar(met, bun).matrix
    assert abs(D - 0.5 * S).max() < 1e-15 * abs(S).max()


def test_flat_n2_dbar_ground():
    _, met = flat(16, 0.2, n=2)
    r = lowest_eigenpairs(assemble_dbar(met, PrequantumBundle(2, 1)), 1, block=2)
    assert abs(r.eigenvalues[0]) <= 0.1


def test_fiber_operator_examples():
    lam = lambda op, m=1: lowest_eigenpairs(op, m, vectors=False).eigenvalues  # noqa: E731
    assert abs(lam(assemble_fiber_operator(0.0, 1, None, 64))[0]) < 1e-12
    assert abs(lam(assemble_fiber_operator(0.3, 2, None, 256))[0] - 0.16) < 1e-3
    w = lam(assemble_fiber_operator(0.5, 1, None, 64), 3)
    assert np.allclose(w[:2], 0.25, atol=1e-3) and w[2] > 1.0


def test_fiber_operator_matches_lambda_n2():
    b = np.array([0.4, 0.15])
    op = assemble_fiber_operator(b, 1, None, 32)
    w = lowest_eigenpairs(op, 1, vectors=False).eigenvalues[0]
    assert abs(w - lambda_k_b(1, b)[0]) < 2e-3


def test_fiber_operator_rejects_degenerate_metric():
    with pytest.raises(InvalidStructureError):
        assemble_fiber_operator(0.1, 1, np.zeros((8, 1, 1)), 8)


@pytest.mark.parametrize("name, k, s, N", [("flat", 1, 1.0, 16), ("flat", 0, 1.0, 16),
                                           ("semiflat", 3, 0.1, 32), ("heart", 2, 0.3, 16)])
def test_circle_reduced_identity(name, k, s, N):
    g = Grid(1, N, N)
    _, met = family_at(preset(name), s, g)
    bun = PrequantumBundle(1, k)
    B = assemble_bochner(met, bun).matrix
    R = assemble_circle_reduced(met, bun).matrix
    diff = R - B - k ** 2 * sp.identity(B.shape[0])
    assert abs(diff).max() <= 1e-12 * abs(B).max()


def test_gauge_invariance_random_phases():
    g = Grid(1, 12, 12)
    _, met = family_at(heart_family(1), 0.4, g)
    M = assemble_bochner(met, PrequantumBundle(1, 2)).dense()
    D = np.exp(2j * np.pi * np.random.default_rng(11).random(M.shape[0]))
    M2 = D[:, None] * M * D.conj()[None, :]
    assert np.allclose(np.linalg.eigvalsh(M), np.linalg.eigvalsh(M2), atol=1e-10)


def test_measure_scaling():
    g = Grid(1, 12, 12)
    _, met = family_at(semiflat_family(1), 0.2, g)
    bun = PrequantumBundle(1, 1)
    a = np.linalg.eigvalsh(assemble_bochner(met, bun).dense())
    b = np.linalg.eigvalsh(assemble_bochner(met, bun, volume_scale=7.0).dense())
    assert np.allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())


@pytest.mark.parametrize("n, N, k", [(1, 8, 1), (1, 10, 3), (2, 6, 2)])
def test_discrete_chern_number(n, N, k):
    g = Grid(n, N, N)
    for plane in range(n):
        assert abs(plaquette_flux(g, PrequantumBundle(n, k), plane) - 2 * np.pi * k) < 1e-12


def test_link_phases_unit_modulus():
    for U in link_phases(Grid(2, 6, 6), PrequantumBundle(2, 3, (0.4, 1.1))):
        assert np.allclose(np.abs(U), 1.0)


def test_second_order_refinement():
    errs = []
    for N in (16, 32, 64):
        _, met = flat(N, 1 / (2 * np.pi))
        r = lowest_eigenpairs(assemble_bochner(met, PrequantumBundle(1, 1)), 1)
        errs.append(abs(r.eigenvalues[0] - 1))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_grid_mismatch():
    _, met = flat(8)
    with pytest.raises(ConfigError):
        assemble_bochner(met, PrequantumBundle(1, 1), Grid(1, 8, 16))


def test_coo_roundtrip(tmp_path):
    _, met = flat(6)
    op = assemble_sharp(met, PrequantumBundle(1, 2))
    op.write_coo(tmp_path / "op.coo")
    first = (tmp_path / "op.coo").read_text().splitlines()[0].split()
    assert int(first[0]) == 36 and int(first[1]) == op.matrix.nnz
    back = read_coo(tmp_path / "op.coo", kind="sharp", k=2)
    assert abs(back.matrix - op.matrix).max() == 0
