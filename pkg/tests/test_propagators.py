import numpy as np
import pytest

import wavectrl as w
from wavectrl.grid import SPECTRAL, spectral
from wavectrl.propagators import CallableSource, ZeroSource, dealias_mask

from helpers import diff_norm, max_coeff_diff, rel_diff


def test_linear_identity_and_mode():
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    m = w.mode_field(g, (0, 1))
    assert max_coeff_diff(w.linear_propagate(m, 0.0), m) == 0.0
    t = 0.37
    out = w.linear_propagate(m, t)
    assert np.max(np.abs(out.data - np.exp(-1j * t) * m.data)) < 1e-14


def test_linear_unitarity_scan(rng):
    g = w.WaveguideGrid(1, 1, 2, (16, 8))
    f = w.random_field(g, rng)
    for s in (-1.0, 0.0, 1.0, 2.0):
        a = w.sobolev_norm(f, s)
        b = w.sobolev_norm(w.linear_propagate(f, 0.83), s)
        assert abs(a - b) <= 1e-12 * a


def test_linear_group_law(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    f = w.random_field(g, rng)
    a = w.linear_propagate(w.linear_propagate(f, 0.3), 0.45)
    b = w.linear_propagate(f, 0.75)
    assert rel_diff(a, b) < 1e-12


def test_twisted_matches_linear_at_alpha_zero(rng):
    g = w.WaveguideGrid(1, 1, 1, (16, 8))
    f = w.random_field(g, rng)
    a = w.twisted_propagate(f, [0.0], 0.9)
    b = w.linear_propagate(f, 0.9)
    assert rel_diff(a, b) < 1e-12


def test_twisted_single_mode_closed_form():
    g = w.WaveguideGrid(1, 1, 1, (16, 8))
    m = w.mode_field(g, (1, 0))
    t = 1.3
    out = w.twisted_propagate(m, [0.5], t)
    assert np.max(np.abs(out.data - np.exp(-1j * t * 0.25) * m.data)) < 1e-13


def test_twisted_conjugation_identity(rng):
    # e^{itH_a} = e^{-it|a|^2} tau_{(2ta, 0)} e^{itD} on fiber fields
    g = w.WaveguideGrid(1, 1, 1, (16, 8))
    for a in (0.0, 0.25, 0.5, 0.75):
        f = w.random_field(g, rng)
        for t in (0.1, 1.0, np.pi):
            lhs = w.twisted_propagate(f, [a], t)
            rhs = w.translate(w.linear_propagate(f, t), np.array([2 * t * a, 0.0]))
            rhs = w.Field(g, np.exp(-1j * t * a * a) * rhs.data, rhs.rep)
            assert diff_norm(lhs, rhs) <= 1e-12 * w.l2_norm(f)


def test_twisted_group_law(rng):
    g = w.WaveguideGrid(1, 1, 1, (16, 8))
    f = w.random_field(g, rng)
    a = [0.5]
    lhs = w.twisted_propagate(w.twisted_propagate(f, a, 0.4), a, 0.7)
    rhs = w.twisted_propagate(f, a, 1.1)
    assert rel_diff(lhs, rhs) < 1e-12


def test_twisted_reduces_alpha_mod_one(rng):
    g = w.WaveguideGrid(1, 1, 1, (16, 8))
    f = w.random_field(g, rng)
    with pytest.warns(UserWarning, match="reduced mod 1"):
        a = w.twisted_propagate(f, [1.25], 0.3)
    b = w.twisted_propagate(f, [0.25], 0.3)
    assert rel_diff(a, b) < 1e-14


def test_twisted_requires_fiber_grid(rng):
    g = w.WaveguideGrid(1, 1, 2, (16, 8))
    with pytest.raises(w.GridError):
        w.twisted_propagate(w.random_field(g, rng), [0.0], 0.1)


def test_nls_params_validation():
    with pytest.raises(ValueError):
        w.NlsParams(epsilon=0.5, dt=0.1)
    with pytest.raises(ValueError):
        w.NlsParams(epsilon=1.0, dt=0.0)


def test_step_constant_field_closed_form():
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    c = 0.7 - 0.2j
    u = w.constant_field(g, c)
    params = w.NlsParams(epsilon=1.0, dt=0.05)
    out = w.nls_step(u, 0.0, params, ZeroSource(g))
    expect = c * np.exp(1j * abs(c) ** 2 * 0.05)
    assert np.max(np.abs(out.data - expect)) < 1e-14


def test_step_linear_limit_matches_exact(rng):
    g = w.WaveguideGrid(1, 1, 1, (16, 16))
    u = w.random_field(g, rng)
    params = w.NlsParams(epsilon=0.0, dt=0.02)
    out = w.nls_step(u, 0.0, params, ZeroSource(g))
    assert rel_diff(out, w.linear_propagate(u, 0.02)) < 1e-12


def test_step_pair_reversibility(rng):
    # the cubic-increment mask is not time-symmetric at the band edge, so
    # the symmetry of the splitting itself is measured with dealias off
    g = w.WaveguideGrid(1, 1, 1, (16, 16))
    u = w.random_field(g, rng, decay=1.0, band=2)
    u = w.Field(g, 1.0 * u.data / w.l2_norm(u), SPECTRAL)
    gsrc = w.random_field(g, rng, decay=1.0, band=2)
    src = CallableSource(lambda t: w.Field(g, np.cos(t) * gsrc.data, SPECTRAL))
    for dt in (0.1, 0.05):
        params = w.NlsParams(epsilon=-1.0, dt=dt, dealias=False)
        back_params = w.NlsParams(epsilon=-1.0, dt=-dt, dealias=False)
        v = w.nls_step(u, 0.0, params, src)
        ub = w.nls_step(v, dt, back_params, src)
        # the symmetric stage makes the pair exactly inverse (well below
        # the O(dt^3) the step order alone would give)
        assert diff_norm(ub, u) < 1e-13 * w.l2_norm(u)


def test_solve_mass_conservation(rng):
    g = w.WaveguideGrid(1, 1, 1, (32, 32))
    u0 = w.random_field(g, rng, decay=3.0)
    u0 = w.Field(g, 0.5 * u0.data / w.l2_norm(u0), SPECTRAL)
    for eps in (1.0, -1.0):
        traj = w.nls_solve(u0, 0.0, 1.0, w.NlsParams(eps, 1e-3),
                           checkpoints=[0.0, 0.25, 0.5, 1.0])
        m0 = traj.diagnostics[0]["mass"]
        assert max(abs(d["mass"] - m0) for d in traj.diagnostics) <= 1e-8


def test_solve_roundtrip_reversibility(rng):
    # source-free roundtrips invert the nonlinear phase exactly: only
    # roundoff and the masked tail remain
    g = w.WaveguideGrid(1, 1, 1, (32, 32))
    u0 = w.random_field(g, rng, decay=1.0, band=5)
    u0 = w.Field(g, 0.5 * u0.data / w.l2_norm(u0), SPECTRAL)
    p = w.NlsParams(-1.0, 0.01)
    fwd = w.nls_solve(u0, 0.0, 0.5, p).final
    back = w.nls_solve(fwd, 0.5, 0.0, p).final
    assert diff_norm(back, u0) < 1e-9
    # with a smooth source the roundtrip still inverts step by step
    gsrc = w.random_field(g, rng, decay=1.0, band=5)
    src = CallableSource(lambda t: w.Field(g, np.cos(t) * gsrc.data, SPECTRAL))
    p = w.NlsParams(-1.0, 0.025, dealias=False)
    fwd = w.nls_solve(u0, 0.0, 0.5, p, src).final
    back = w.nls_solve(fwd, 0.5, 0.0, p, src).final
    assert diff_norm(back, u0) < 1e-12 * w.l2_norm(u0)


def test_solve_zero_data_zero_source():
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    traj = w.nls_solve(w.zero_field(g), 0.0, 0.2, w.NlsParams(1.0, 0.01),
                       checkpoints=[0.1, 0.2])
    for f in traj.fields:
        assert w.l2_norm(f) == 0.0


def test_strang_order(rng):
    g = w.WaveguideGrid(1, 1, 1, (32, 32))
    u0 = w.random_field(g, rng, decay=3.0)
    u0 = w.Field(g, 0.5 * u0.data / w.l2_norm(u0), SPECTRAL)
    gsrc = w.random_field(g, rng, decay=3.0)
    src = CallableSource(lambda t: w.Field(g, np.cos(3 * t) * gsrc.data, SPECTRAL))
    ref = w.nls_solve(u0, 0.0, 0.5, w.NlsParams(-1.0, 0.5 / 2048), src).final
    dts = [0.5 / 32, 0.5 / 64, 0.5 / 128]
    errs = [
        diff_norm(w.nls_solve(u0, 0.0, 0.5, w.NlsParams(-1.0, dt), src).final, ref)
        for dt in dts
    ]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_flow_map_lipschitz_stability(rng):
    g = w.WaveguideGrid(1, 1, 1, (16, 16))
    u0 = w.random_field(g, rng, decay=2.0, band=4)
    u0 = w.Field(g, 0.1 * u0.data / w.sobolev_norm(u0, 1.0), SPECTRAL)
    d = w.random_field(g, rng, decay=2.0, band=4)
    d = w.Field(g, 0.01 * d.data / w.sobolev_norm(d, 1.0), SPECTRAL)
    p = w.NlsParams(-1.0, 5e-3)
    base = w.nls_solve(u0, 0.0, 0.5, p).final
    ks = []
    for scale in (1.0, 0.5, 0.25):
        pert = w.Field(g, u0.data + scale * d.data, SPECTRAL)
        out = w.nls_solve(pert, 0.0, 0.5, p).final
        num = w.sobolev_norm(w.Field(g, out.data - base.data, SPECTRAL), 1.0)
        den = w.sobolev_norm(w.Field(g, pert.data - u0.data, SPECTRAL), 1.0)
        ks.append(num / den)
    assert max(ks) / min(ks) <= 1.2


def test_blowup_raises_with_timestamp():
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    u0 = w.constant_field(g, 1e200)  # |u|^2 overflows in the phase
    with pytest.raises(w.BlowUpError) as err:
        w.nls_solve(w.to_spectral(u0), 0.0, 1.0, w.NlsParams(1.0, 0.1))
    assert err.value.t > 0.0


def test_checkpoint_must_lie_on_step_grid(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    u0 = w.random_field(g, rng)
    with pytest.raises(ValueError, match="step grid"):
        w.nls_solve(u0, 0.0, 1.0, w.NlsParams(1.0, 0.1), checkpoints=[0.123])


def test_dealias_mask_keeps_two_thirds():
    g = w.WaveguideGrid(1, 1, 1, (12, 12))
    mask = dealias_mask(g)
    kept = np.abs(np.fft.fftfreq(12, d=1 / 12))
    assert np.array_equal(mask[:, 0], (kept < 4.0).astype(float))
