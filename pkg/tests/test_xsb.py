import numpy as np
import pytest

import wavectrl as w
from wavectrl.grid import SPECTRAL
from wavectrl.xsb import (
    GainReport,
    SpaceTimeField,
    cubic_coefficients_direct,
    extend_and_restrict_norm,
    from_space_spectral_samples,
    gain_integration_scaling,
    random_st_field,
    sample_free_solution,
    st_l2_norm,
    st_mode,
    st_physical,
    st_pointwise_cubic,
    st_spectral,
    time_sobolev_norm,
    trilinear_ratio,
    xsb_norm,
    xsb_norm_on_lattice,
)

TP = 2 * np.pi


def _grid():
    return w.WaveguideGrid(1, 1, 1, (16, 16))


def test_spacetime_roundtrip_and_parseval(rng):
    g = _grid()
    u = random_st_field(g, TP, 16, rng, 5, 5)
    back = st_spectral(st_physical(u))
    assert np.max(np.abs(back.values - u.values)) < 1e-12
    phys = st_physical(u)
    direct = np.sqrt(np.sum(np.abs(phys.values) ** 2) * g.dvol * (TP / 16))
    assert abs(st_l2_norm(u) - direct) < 1e-10 * direct


def test_spacetime_validation():
    g = _grid()
    with pytest.raises(w.GridError):
        SpaceTimeField(g, TP, np.zeros((6,) + g.shape), "spectral")  # nt < 8
    with pytest.raises(w.GridError):
        SpaceTimeField(g, 0.0, np.zeros((8,) + g.shape), "spectral")


def test_single_mode_norm_closed_form():
    # u = exp(i(y - tau0 t)): ||u||_{s,b} = <tau0 - 1>^b 2^{s/2} sqrt(vol T)
    g = _grid()
    nt = 16
    tau_index = 3
    tau0 = (2 * np.pi / TP) * tau_index
    u = st_mode(g, TP, nt, (0, 1), tau_index)
    for s, b in ((0.0, 0.0), (1.0, 0.5), (2.0, -0.35), (0.5, 0.55)):
        expect = (
            (1.0 + (tau0 - 1.0) ** 2) ** (b / 2.0)
            * 2.0 ** (s / 2.0)
            * np.sqrt(g.volume * TP)
        )
        assert abs(xsb_norm(u, s, b) - expect) < 1e-12 * expect


def test_free_solution_sits_on_paraboloid():
    # dominant coefficient of e^{itD} e^{iy} at tau = |xi|^2 = 1: weight <0> = 1
    g = _grid()
    u0 = w.mode_field(g, (0, 1))
    st = sample_free_solution(u0, TP, 16)
    c = st_spectral(st).values
    assert abs(c[1, 0, 1] - 1.0) < 1e-12  # tau index 1 <-> tau = 1
    n_b = xsb_norm(st, 0.0, 0.75)
    n_0 = xsb_norm(st, 0.0, 0.0)
    assert abs(n_b - n_0) < 1e-12 * n_0


def test_transference_baseline(rng):
    # b = 0: ||e^{itD} u0||_{s,0} = ||u0||_{H^s} sqrt(T_per), even off-lattice
    g = _grid()
    u0 = w.random_field(g, rng, decay=1.5)
    for t_per in (TP, 3.7):
        st = sample_free_solution(u0, t_per, 32)
        for s in (0.0, 1.0, -0.5):
            expect = w.sobolev_norm(u0, s) * np.sqrt(t_per)
            assert abs(xsb_norm(st, s, 0.0) - expect) <= 1e-10 * expect


def test_embedding_monotonicity_exact(rng):
    g = _grid()
    u = random_st_field(g, TP, 16, rng, 4, 4)
    pairs = [((0.0, 0.1), (1.0, 0.4)), ((-1.0, -0.3), (0.5, 0.0)), ((0.3, 0.2), (0.3, 0.6))]
    for (s1, b1), (s2, b2) in pairs:
        assert xsb_norm(u, s1, b1) <= xsb_norm(u, s2, b2) * (1 + 1e-12)


def test_interpolation_weight_identity_and_convexity(rng):
    g = _grid()
    s1, b1, s2, b2 = 0.0, 0.1, 2.0, 0.7
    # per-mode weight log-linearity is exact
    u = st_mode(g, TP, 16, (2, -1), 5, amplitude=0.7)
    for theta in (0.25, 0.5, 0.8):
        st_, bt_ = (1 - theta) * s1 + theta * s2, (1 - theta) * b1 + theta * b2
        lhs = xsb_norm(u, st_, bt_)
        rhs = xsb_norm(u, s1, b1) ** (1 - theta) * xsb_norm(u, s2, b2) ** theta
        assert abs(lhs - rhs) < 1e-12 * rhs
    # Hoelder log-convexity on random fields
    v = random_st_field(g, TP, 16, rng, 4, 4)
    for theta in (0.3, 0.6):
        st_, bt_ = (1 - theta) * s1 + theta * s2, (1 - theta) * b1 + theta * b2
        lhs = xsb_norm(v, st_, bt_)
        rhs = xsb_norm(v, s1, b1) ** (1 - theta) * xsb_norm(v, s2, b2) ** theta
        assert lhs <= rhs * (1 + 1e-12)


def test_xsb_params_validation():
    w.XsbParams(b=0.55, bprime=0.35).validate_pair()
    with pytest.raises(ValueError):
        w.XsbParams(b=0.45, bprime=0.35).validate_pair()
    with pytest.raises(ValueError):
        w.XsbParams(b=0.8, bprime=0.35).validate_pair()


def test_trilinear_single_mode_closed_form():
    # |u|^2 u of a pure mode is the same pure mode with cubed amplitude
    g = _grid()
    nt = 16
    c = 0.9 - 0.4j
    u = st_mode(g, TP, nt, (0, 1), 2, amplitude=c)
    cubic = st_pointwise_cubic(u, u, u)
    cc = st_spectral(cubic).values
    assert abs(cc[2, 0, 1] - abs(c) ** 2 * c) < 1e-12
    rest = cc.copy()
    rest[2, 0, 1] = 0.0
    assert np.max(np.abs(rest)) < 1e-12
    p = w.XsbParams(s=1.0, b=0.55, bprime=0.35, r=1.0)
    tau0 = 2.0
    gap = lambda t, x2: (1.0 + (t - x2) ** 2)
    lhs = xsb_norm(cubic, p.r, -p.bprime)
    expect_lhs = abs(c) ** 3 * gap(tau0, 1.0) ** (-p.bprime / 2) * 2 ** (p.r / 2) * np.sqrt(g.volume * TP)
    assert abs(lhs - expect_lhs) < 1e-12 * expect_lhs


def test_trilinear_report_and_aliasing_guard(rng):
    g = _grid()
    p = w.XsbParams()
    report = trilinear_ratio(g, TP, 16, p, bands=(1, 2), nsamples=5, seed=0)
    for est in ("cubic_r", "cubic_mixed", "lipschitz", "multiplier", "multiplier_r"):
        assert report.max_ratio(est) > 0.0
        assert np.isfinite(report.max_ratio(est))
    with pytest.raises(ValueError, match="alias"):
        trilinear_ratio(g, TP, 16, p, bands=(4,), nsamples=1, seed=0)


def test_cubic_against_direct_convolution_oracle(rng):
    g = w.WaveguideGrid(1, 1, 1, (8, 8))
    u = random_st_field(g, TP, 8, rng, 1, 1)
    cubic = st_pointwise_cubic(u, u, u)
    p = w.XsbParams()
    lhs_grid = xsb_norm(cubic, p.r, -p.bprime)
    coeffs, lattices = cubic_coefficients_direct(u)
    lhs_direct = xsb_norm_on_lattice(coeffs, lattices, g, TP, p.r, -p.bprime)
    assert abs(lhs_grid - lhs_direct) <= 1e-10 * lhs_direct
    rhs = xsb_norm(u, p.s, p.bprime) ** 2 * xsb_norm(u, p.r, p.bprime)
    rhs_direct_factors = xsb_norm(u, p.s, p.bprime) ** 2 * xsb_norm(u, p.r, p.bprime)
    assert abs(rhs - rhs_direct_factors) == 0.0


def test_gain_integration_zero_and_constant():
    p = w.XsbParams()
    nt = 1024
    t_per = 4.0
    times = (t_per / nt) * np.arange(nt)
    # f = 0 -> F = 0
    assert time_sobolev_norm(np.zeros(nt), t_per, p.b) == 0.0
    # f = 1 with the plateau window: F(t) = t on the plateau
    from scipy.integrate import cumulative_trapezoid
    from wavectrl.regions import time_profile

    T = 1.0
    F = time_profile(times / T) * cumulative_trapezoid(np.ones(nt), times, initial=0.0)
    on_plateau = times <= T / 2
    assert np.max(np.abs(F[on_plateau] - times[on_plateau])) < 1e-12
    direct = time_sobolev_norm(F, t_per, p.b)
    assert np.isfinite(direct) and direct > 0


def test_gain_integration_sweep_bounded():
    p = w.XsbParams(b=0.55, bprime=0.35)
    rep = gain_integration_scaling(p, t_period=4.0, nt=4096)
    norm0 = rep.rows[0].normalized
    assert rep.max_normalized <= 10.0 * norm0
    assert np.isfinite(rep.slope)


def test_restriction_norm_upper_bound():
    g = _grid()
    nt = 32
    t_per = TP
    # a globally periodic pure mode with the trivial cutoff: matches the global norm
    u0 = w.mode_field(g, (0, 1))
    tau0 = 1.0  # free solution: on the tau lattice for t_per = 2 pi
    ts = (t_per / nt) * np.arange(nt)
    T = float(ts[nt // 4])
    fields = [w.linear_propagate(u0, float(t)) for t in ts[: nt // 4 + 1]]
    ub_ones = extend_and_restrict_norm(fields, ts[: nt // 4 + 1], T, t_per, nt, 1.0, 0.55,
                                       cutoff="ones")
    st = sample_free_solution(u0, t_per, nt)
    assert abs(ub_ones - xsb_norm(st, 1.0, 0.55)) < 1e-10 * ub_ones
    # zero input gives zero
    zfields = [w.zero_field(g) for _ in range(nt // 4 + 1)]
    assert extend_and_restrict_norm(zfields, ts[: nt // 4 + 1], T, t_per, nt, 1.0, 0.55) == 0.0
    # two different profiles both give finite upper bounds; keep the min
    ub_a = extend_and_restrict_norm(fields, ts[: nt // 4 + 1], T, t_per, nt, 1.0, 0.55)
    ub_b = extend_and_restrict_norm(fields, ts[: nt // 4 + 1], T, t_per, nt, 1.0, 0.55,
                                    cutoff_width=0.5 * (t_per - T) * 0.5)
    best = min(ub_a, ub_b)
    assert np.isfinite(best) and best > 0
