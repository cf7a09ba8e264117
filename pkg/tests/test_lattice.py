import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specpts.graphkernel import WeightFunction
from specpts.lattice import (SQUARE, TRIANGULAR, CutoffError, DualCell, LatticeParams, auto_cutoff,
                             basis_from_params, brillouin_area, dispersion, dispersion_grid, dos, dual_basis,
                             dual_grid, fundamental_domain_grid, lattice_vectors, moment_L1, moment_W,
                             normalized_histogram, operator_norm, sweep_argopt, sweep_fundamental_domain,
                             torus_graph, torus_spectrum)
from specpts.spectral import InvariantId

EXP2 = WeightFunction.exp(2.0)
params_in_domain = st.tuples(st.floats(0.0, 0.5), st.floats(0.0, 0.8)).map(
    lambda t: LatticeParams(t[0], math.sqrt(1 - t[0] ** 2) + t[1]))


def test_square_and_triangular_bases():
    np.testing.assert_allclose(basis_from_params(0.0, 1.0), np.eye(2))
    np.testing.assert_allclose(TRIANGULAR.basis, [[1.07457, 0.53729], [0.0, 0.93060]], atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(params_in_domain)
def test_basis_invariants(p):
    b = p.basis
    assert abs(np.linalg.det(b)) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(b[:, 0]) == pytest.approx(1 / math.sqrt(p.b))
    assert np.linalg.norm(b[:, 1]) == pytest.approx(math.sqrt((p.a ** 2 + p.b ** 2) / p.b))
    np.testing.assert_allclose(dual_basis(b) @ b.T, 2 * np.pi * np.eye(2), atol=1e-12)
    assert DualCell.of(b).area == pytest.approx((2 * np.pi) ** 2)


def test_domain_validation():
    with pytest.raises(ValueError):
        basis_from_params(0.3, 0.5)
    with pytest.raises(ValueError):
        LatticeParams(0.0, -1.0)
    basis_from_params(0.3, 0.5, strict=False)
    assert not LatticeParams(0.6, 1.0).in_domain and TRIANGULAR.in_domain


def test_shift_of_a_gives_same_lattice():
    def lengths(b):
        u, _ = lattice_vectors(b, 5.0)
        return np.sort(np.linalg.norm(u, axis=1))

    for a, b in [(0.2, 1.1), (0.5, math.sqrt(3) / 2), (0.0, 1.4)]:
        np.testing.assert_allclose(lengths(basis_from_params(a, b)),
                                   lengths(basis_from_params(a + 1, b, strict=False)), atol=1e-12)


def _signed_shell_sum(xi):
    # square lattice by hand: every (i, j) != 0 out to squared radius 40
    total = 0.0
    for i in range(-7, 8):
        for j in range(-7, 8):
            if (i, j) != (0, 0) and i * i + j * j <= 40:
                total += math.cos(xi[0] * i + xi[1] * j) * math.exp(-2.0 * (i * i + j * j))
    return total


def test_dispersion_examples():
    assert dispersion(SQUARE, EXP2, np.zeros(2)) == pytest.approx(0.61631, abs=1e-5)
    assert dispersion(TRIANGULAR, EXP2, np.zeros(2)) == pytest.approx(0.60239, abs=1e-5)
    xi = np.array([math.pi, math.pi])
    assert dispersion(SQUARE, EXP2, xi) == pytest.approx(_signed_shell_sum(xi), abs=1e-13)
    assert dispersion(SQUARE, EXP2, xi) == pytest.approx(-0.46710, abs=1e-5)


def test_triangular_norm_from_shells():
    # six neighbours at squared distance 2/sqrt(3), six at 3 * 2/sqrt(3), six at 4 * 2/sqrt(3), ...
    s = 2 / math.sqrt(3)
    shells = {1: 6, 3: 6, 4: 6, 7: 12, 9: 6, 12: 6, 13: 12, 16: 6, 19: 12}
    oracle = sum(c * math.exp(-2.0 * k * s) for k, c in shells.items())
    assert operator_norm(TRIANGULAR, EXP2) == pytest.approx(oracle, abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(params_in_domain, st.floats(-10, 10), st.floats(-10, 10))
def test_dispersion_symmetric_and_bounded_by_origin(p, x, y):
    xi = np.array([x, y])
    w = dispersion(p, EXP2, xi)
    assert w == pytest.approx(dispersion(p, EXP2, -xi), abs=1e-12)
    assert w <= dispersion(p, EXP2, np.zeros(2)) + 1e-12


def test_norm_scales_with_kernel_and_vanishes_for_short_range():
    # e^{-alpha r} at large alpha is negligible beyond the origin
    assert operator_norm(SQUARE, WeightFunction.exp(60.0)) < 1e-25
    assert operator_norm(SQUARE, WeightFunction.exp(1.0)) > operator_norm(SQUARE, EXP2)


def test_cutoff_errors():
    with pytest.raises(CutoffError):
        dispersion(SQUARE, WeightFunction.one_minus_exp(2.0), np.zeros(2))
    with pytest.raises(CutoffError):
        dispersion(SQUARE, EXP2, np.zeros(2), cutoff_radius=1.5)
    with pytest.raises(CutoffError):
        auto_cutoff(WeightFunction.inverse_power(2.0), SQUARE.basis)
    assert dispersion(SQUARE, EXP2, np.zeros(2), cutoff_radius=6.0) == pytest.approx(0.61631, abs=1e-5)


def test_fft_grid_matches_direct_sum():
    for p in (SQUARE, TRIANGULAR, LatticeParams(0.2, 1.3)):
        np.testing.assert_allclose(dispersion_grid(p, EXP2, 12), dispersion(p, EXP2, dual_grid(p, 12)), atol=1e-14)


def test_dos_mass_and_mean():
    for p in (SQUARE, TRIANGULAR):
        hist = dos(p, EXP2, m=128, bins=50)
        assert hist.total == pytest.approx((2 * np.pi) ** 2, rel=1e-13)
        assert abs(hist.mean()) < 1e-3 * operator_norm(p, EXP2) + (hist.edges[1] - hist.edges[0])


def test_laplacian_symbol_nonnegative():
    omega = dispersion_grid(TRIANGULAR, EXP2, 64)
    assert np.all(omega[0] - omega >= -1e-12)
    assert omega.max() == pytest.approx(omega[0], abs=1e-15)


def test_moment_closed_forms():
    area = (2 * np.pi) ** 2
    assert moment_W(SQUARE, EXP2, 0) == pytest.approx(area)
    assert moment_W(SQUARE, EXP2, 1) == 0.0
    sq2 = sum(math.exp(-4.0 * (i * i + j * j)) for i in range(-6, 7) for j in range(-6, 7) if (i, j) != (0, 0))
    assert moment_W(SQUARE, EXP2, 2) == pytest.approx(area * sq2, rel=1e-12)
    assert moment_L1(TRIANGULAR, EXP2) == pytest.approx(area * 0.6023879, rel=1e-6)
    assert moment_W(TRIANGULAR, EXP2, 3, method="quadrature", m=64) == pytest.approx(
        moment_W(TRIANGULAR, EXP2, 3, method="quadrature", m=128), rel=1e-10)
    with pytest.raises(ValueError):
        moment_W(SQUARE, EXP2, 3)


def test_torus_graph_structure():
    tg = torus_graph(TRIANGULAR, 10)
    assert tg.config.n == 100
    np.testing.assert_allclose(tg.config.manifold.basis, 10 * TRIANGULAR.basis)
    g = tg.graph(EXP2)
    np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
    assert np.ptp(g.degrees) < 1e-12
    for bad in (3, 5, 2):
        with pytest.raises(ValueError):
            torus_graph(SQUARE, bad)


def test_small_torus_spectrum_is_discrete_fourier_transform():
    # W^N is circulant over Z_N x Z_N: its eigenvalues are the 2-D DFT of the first row
    n_side = 4
    g = torus_graph(SQUARE, n_side).graph(EXP2)
    row = g.adjacency[0].reshape(n_side, n_side)
    oracle = np.sort(np.real(np.fft.fft2(row)).ravel())
    np.testing.assert_allclose(np.linalg.eigvalsh(g.adjacency), oracle, atol=1e-10)


def test_large_torus_spectrum_samples_dispersion():
    lam = torus_spectrum(TRIANGULAR, 16, EXP2, InvariantId("frob2"))
    np.testing.assert_allclose(lam, np.sort(dispersion_grid(TRIANGULAR, EXP2, 16)), atol=1e-12)


def test_fundamental_domain_grid_covers_boundary():
    grid = fundamental_domain_grid(5, 4, b_max=1.5)
    assert len(grid) == 20
    assert all(p.in_domain for p in grid)
    assert any(p.a == 0.0 and p.b == 1.0 for p in grid)
    assert any(p.a == 0.5 and abs(p.b - math.sqrt(3) / 2) < 1e-15 for p in grid)


def test_sweep_is_ordered_and_parallel_safe():
    grid = fundamental_domain_grid(4, 4)
    serial = sweep_fundamental_domain(InvariantId("trace"), EXP2, 6, grid)
    threaded = sweep_fundamental_domain(InvariantId("trace"), EXP2, 6, grid, workers=3)
    assert serial == threaded
    assert [(a, b) for a, b, _ in serial] == [(p.a, p.b) for p in grid]
    assert sweep_argopt(serial, InvariantId("lambda2"))[2] == max(v for _, _, v in serial)


def test_normalized_histogram_clips_into_end_bins():
    frac = normalized_histogram(np.array([-5.0, 0.5, 5.0, 0.2]), np.array([0.0, 0.25, 1.0]))
    np.testing.assert_allclose(frac, [0.5, 0.5])
