import numpy as np
import pytest

import wavectrl as w
from wavectrl.grid import PHYSICAL, SPECTRAL, physical, spectral

from helpers import max_coeff_diff

GRID_MATRIX = [
    w.WaveguideGrid(1, 1, 1, (8, 8)),
    w.WaveguideGrid(1, 1, 2, (16, 8)),
    w.WaveguideGrid(2, 1, 2, (8, 8, 4)),
    w.WaveguideGrid(1, 2, 1, (8, 4, 6)),
]


def test_grid_validation():
    with pytest.raises(w.GridError):
        w.WaveguideGrid(0, 1, 1, (8,))
    with pytest.raises(w.GridError):
        w.WaveguideGrid(1, 1, 0, (8, 8))
    with pytest.raises(w.GridError):
        w.WaveguideGrid(1, 1, 1, (7, 8))  # odd
    with pytest.raises(w.GridError):
        w.WaveguideGrid(1, 1, 1, (2, 8))  # too small
    with pytest.raises(w.GridError):
        w.WaveguideGrid(1, 1, 1, (8, 8, 8))  # wrong length


def test_frequency_lattice_convention():
    g = w.WaveguideGrid(1, 1, 2, (8, 8))
    # Euclidean spacing 1/L, Nyquist on the negative side
    assert np.allclose(sorted(g.xi1d(0)), np.arange(-4, 4) / 2.0)
    assert g.xi1d(0)[4] == -2.0
    assert np.allclose(sorted(g.xi1d(1)), np.arange(-4, 4))
    assert g.d == g.m + g.n


@pytest.mark.parametrize("grid", GRID_MATRIX)
def test_transform_roundtrip_and_parseval(grid, rng):
    for _ in range(25):
        f = w.random_field(grid, rng, rep=PHYSICAL)
        F = w.to_spectral(f)
        back = w.to_physical(F)
        scale = np.max(np.abs(f.data))
        assert np.max(np.abs(back.data - f.data)) <= 1e-12 * scale
        assert abs(w.l2_norm(f) - w.l2_norm(F)) <= 1e-12 * w.l2_norm(f)


def test_transform_representation_contract(rng):
    g = GRID_MATRIX[0]
    f = w.random_field(g, rng)  # spectral
    with pytest.raises(w.RepresentationError):
        w.to_spectral(f)
    with pytest.raises(w.RepresentationError):
        w.to_physical(w.to_physical(f))


def test_zero_and_pure_mode():
    g = w.WaveguideGrid(1, 1, 2, (16, 8))
    z = w.zero_field(g, PHYSICAL)
    assert np.all(w.to_spectral(z).data == 0)
    # f = e^{iy}: one coefficient at xi = (0, 1)
    y = g.coords1d(1)
    f = w.Field(g, np.broadcast_to(np.exp(1j * y), g.shape).copy(), PHYSICAL)
    F = w.to_spectral(f)
    assert abs(F.data[0, 1] - 1.0) < 1e-12
    rest = F.data.copy()
    rest[0, 1] = 0.0
    assert np.max(np.abs(rest)) < 1e-12


def test_against_brute_force_dft(rng):
    # hand-rolled O(Npoints^2) evaluation of the coefficient sum
    g = w.WaveguideGrid(1, 1, 1, (4, 4))
    f = w.random_field(g, rng, decay=0.0, rep=PHYSICAL)
    F = w.to_spectral(f)
    x0, x1 = g.coords1d(0), g.coords1d(1)
    for q0 in range(4):
        for q1 in range(4):
            xi0, xi1 = g.xi1d(0)[q0], g.xi1d(1)[q1]
            acc = 0.0 + 0.0j
            for p0 in range(4):
                for p1 in range(4):
                    acc += f.data[p0, p1] * np.exp(-1j * (x0[p0] * xi0 + x1[p1] * xi1))
            acc /= g.npoints
            assert abs(F.data[q0, q1] - acc) < 1e-12


def test_multiplier_identity_and_laplacian(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng, rep=PHYSICAL)
    out = w.apply_multiplier(f, lambda x0, x1: np.ones_like(x0 + x1))
    assert out.rep == PHYSICAL
    assert np.max(np.abs(out.data - f.data)) < 1e-12
    m = w.mode_field(g, (0, 1))
    lap = w.apply_multiplier(m, (-g.abs2_xi).astype(complex))
    assert max_coeff_diff(lap, w.Field(g, -m.data, SPECTRAL)) < 1e-12


def test_multiplier_semigroup(rng):
    g = w.WaveguideGrid(1, 1, 2, (16, 8))
    f = w.random_field(g, rng)
    twice = w.bessel_potential(w.bessel_potential(f, -2.0), -2.0)
    once = w.bessel_potential(f, -4.0)
    assert max_coeff_diff(twice, once) < 1e-12 * np.max(np.abs(f.data))


def test_multiplier_nonfinite_symbol_names_frequency(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng)
    sym = np.ones(g.shape, dtype=complex)
    sym[2, 3] = np.inf
    with pytest.raises(ValueError, match=r"xi=\(2\.0, 3\.0\)"):
        w.apply_multiplier(f, sym)


def test_sobolev_norm_constant_and_mode():
    g = w.WaveguideGrid(1, 2, 2, (8, 8, 8))
    c = w.constant_field(g, 3.0 - 1.0j)
    expect = abs(3.0 - 1.0j) * np.sqrt(g.volume)
    for s in (-2.0, 0.0, 1.5, 3.0):
        assert abs(w.sobolev_norm(c, s) - expect) < 1e-12 * expect
    m = w.mode_field(g, (0, 1, 0))
    assert abs(w.sobolev_norm(m, 1.0) / w.sobolev_norm(m, 0.0) - np.sqrt(2)) < 1e-12


def test_duality_pairing_cauchy_schwarz(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    for _ in range(100):
        f = w.random_field(g, rng)
        h = w.random_field(g, rng)
        s = float(rng.uniform(-2, 2))
        lhs = abs(w.l2_inner(f, h))
        assert lhs <= w.sobolev_norm(f, s) * w.sobolev_norm(h, -s) * (1 + 1e-12)


def test_sobolev_inner_sesquilinear(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f, h = w.random_field(g, rng), w.random_field(g, rng)
    a = 2.0 + 1.0j
    lhs = w.sobolev_inner(w.Field(g, a * f.data, SPECTRAL), h, 1.0)
    assert abs(lhs - a * w.sobolev_inner(f, h, 1.0)) < 1e-12
    assert abs(w.sobolev_inner(h, f, 1.0) - np.conj(w.sobolev_inner(f, h, 1.0))) < 1e-12


def test_grid_mismatch_errors(rng):
    g1 = w.WaveguideGrid(1, 1, 1, (8, 8))
    g2 = w.WaveguideGrid(1, 1, 1, (8, 6))
    with pytest.raises(w.GridError):
        w.l2_inner(w.random_field(g1, rng), w.random_field(g2, rng))


def test_translate_identity_mode_and_roll(rng):
    g = w.WaveguideGrid(1, 1, 2, (16, 8))
    f = w.random_field(g, rng, rep=PHYSICAL)
    same = w.translate(f, np.zeros(2))
    assert np.max(np.abs(same.data - f.data)) < 1e-12
    m = w.to_physical(w.mode_field(g, (0, 1)))
    flipped = w.translate(m, np.array([0.0, np.pi]))
    assert np.max(np.abs(flipped.data + m.data)) < 1e-12
    rolled = w.translate(f, np.array([g.spacing(0), 0.0]))
    assert np.max(np.abs(rolled.data - np.roll(f.data, -1, axis=0))) < 1e-12


def test_translate_composition(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng)
    t1 = np.array([0.3, -1.1])
    t2 = np.array([2.2, 0.7])
    a = w.translate(w.translate(f, t1), t2)
    b = w.translate(f, t1 + t2)
    assert max_coeff_diff(a, b) < 1e-12


def test_bessel_potential_basics(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng)
    assert max_coeff_diff(w.bessel_potential(f, 0.0), f) < 1e-14
    c = w.constant_field(g, 1.5)
    out = w.bessel_potential(c, 2.7)
    assert np.max(np.abs(out.data - c.data)) < 1e-12
    m = w.mode_field(g, (0, 1))
    half = w.bessel_potential(m, -2.0)
    assert np.max(np.abs(half.data - 0.5 * m.data)) < 1e-14
    inv = w.bessel_potential(w.bessel_potential(f, 1.3), -1.3)
    assert max_coeff_diff(inv, f) < 1e-12


def test_multipliers_commute_with_each_other_and_translate(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng)
    theta = np.array([0.9, -0.4])
    a = w.translate(w.bessel_potential(f, 1.7), theta)
    b = w.bessel_potential(w.translate(f, theta), 1.7)
    assert max_coeff_diff(a, b) < 1e-12
    c = w.bessel_potential(w.apply_multiplier(f, (-g.abs2_xi).astype(complex)), -2.0)
    d = w.apply_multiplier(w.bessel_potential(f, -2.0), (-g.abs2_xi).astype(complex))
    assert max_coeff_diff(c, d) < 1e-12
