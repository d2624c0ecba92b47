import numpy as np
import pytest

from genwave.errors import (DataError, InversionError, ResolutionError,
                            ScenarioError)
from genwave.geometry import BackgroundGeometry, GridSpec, build_frame, build_lens
from genwave.regularization import (EpsilonNet, FamilySpec, RoughProfile, Slot,
                                    build_family, bump, check_conditions,
                                    fit_loglog, mollify)

XS = np.linspace(-2.0, 2.0, 801)


def oracle_mollify(f, eps, xs, n=640):
    """Brute-force midpoint convolution at 10x resolution."""
    s = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    w = bump(s)
    w = w / w.sum()
    return w @ f(xs[None, :] - eps * s[:, None])


class TestMollify:
    def test_linear_profile_exact(self):
        prof = RoughProfile("smooth", {"offset": 0.0, "slope": 1.0})
        out = mollify(prof, 0.1, XS)
        assert np.max(np.abs(out - XS)) < 1e-8

    def test_constant_preserved(self):
        out = mollify(lambda x: np.full_like(np.asarray(x, float), 3.7), 0.1, XS)
        assert np.max(np.abs(out - 3.7)) < 1e-10

    def test_kink_against_oracle(self):
        prof = RoughProfile("lipschitz_kink",
                            {"offset": 0.0, "slope": 1.0, "cap": 1e9})
        out = mollify(prof, 0.1, XS)
        ref = oracle_mollify(prof.func(), 0.1, XS)
        # midpoint quadrature of a kinked integrand is second order in 1/Q
        assert np.max(np.abs(out - ref)) < 2e-5
        outside = np.abs(XS) >= 0.1
        assert np.max(np.abs(out[outside] - np.abs(XS[outside]))) < 1e-12
        mid = out[np.argmin(np.abs(XS))]
        assert 0.0 < mid < 0.1

    def test_jump_monotone_and_slope(self):
        prof = RoughProfile("jump", {"left": 1.0, "right": 4.0})
        out = mollify(prof, 0.05, XS)
        ref = oracle_mollify(prof.func(), 0.05, XS)
        # a discontinuous integrand drops midpoint quadrature to first order
        assert np.max(np.abs(out - ref)) < 0.06
        assert np.all(np.diff(out) >= -1e-12)
        dx = XS[1] - XS[0]
        outside = np.abs(XS) > 0.05
        assert np.max(np.abs(out[outside] - prof.func()(XS[outside]))) < 1e-12
        max_slope = np.max(np.diff(out)) / dx
        # the step derivative concentrates on the eps-window: slope ~ 1/eps
        assert max_slope > 3.0 / (2 * 0.05)

    def test_resolution_guard(self):
        prof = RoughProfile("jump", {})
        with pytest.raises(ResolutionError):
            mollify(prof, 0.01, XS)    # dx = 0.005 >= eps/4

    def test_translation_commutes(self):
        prof = RoughProfile("lipschitz_kink", {"offset": 0.0, "slope": 1.0,
                                               "cap": 5.0})
        h = 0.3
        out1 = mollify(lambda x: prof.func()(x - h), 0.08, XS)
        out2 = mollify(prof, 0.08, XS + (-h))
        assert np.max(np.abs(out1 - out2)) < 1e-10

    def test_unknown_kind(self):
        with pytest.raises(ScenarioError):
            RoughProfile("sawtooth", {})


class TestEpsilonNet:
    def test_values(self):
        net = EpsilonNet(0.1, 0.5, 4)
        assert np.allclose(net.values, [0.1, 0.05, 0.025, 0.0125])

    def test_invariants(self):
        with pytest.raises(DataError):
            EpsilonNet(0.1, 1.5, 4)
        with pytest.raises(DataError):
            EpsilonNet(0.1, 0.5, 3)
        with pytest.raises(DataError):
            EpsilonNet(1.5, 0.5, 6)


def small_setup(g11_slot, nx=801, extent=2.0, count=5, ratio=0.7):
    grid = GridSpec(-extent, extent, nx, 0.0, 0.25, 8)
    frame = build_frame(grid, BackgroundGeometry.minkowski(), pad=3)
    spec = FamilySpec(g00=Slot.constant(-1.0), g01=Slot.constant(0.0),
                      g11=g11_slot)
    net = EpsilonNet(0.1, ratio, count)
    metric, coeffs = build_family(spec, net, frame)
    return grid, frame, spec, net, metric, coeffs


class TestBuildFamily:
    def test_xi_for_diagonal_metric(self):
        slot = Slot.from_profile(RoughProfile(
            "lipschitz_kink", {"offset": 1.0, "slope": 0.5, "cap": 1.0}))
        *_, metric, _ = small_setup(slot)
        assert np.allclose(metric.xi[:, 0], -1.0)
        assert np.allclose(metric.xi[:, 1], 0.0)

    def test_closed_form_matches_expression_oracle(self):
        from genwave.expr import Bindings, eval_expr, parse_expr
        slot = Slot.from_expr("1 + eps*sin(x/eps)")
        grid, frame, _, net, metric, _ = small_setup(slot)
        j = 1
        eps = float(net.values[j])
        tree = parse_expr("1 + eps*sin(x/eps)")
        ref = eval_expr(tree, Bindings(x=frame.xs, eps=eps))
        assert np.allclose(metric.g_inv[j, 1, 1, 0, :], ref, atol=1e-14)
        assert np.max(metric.g_inv[:, 1, 1]) <= 1 + net.values[0] + 1e-12

    def test_inverse_identity(self):
        slot = Slot.from_expr("1 + 0.5*eps*sin(x/eps)")
        *_, metric, _ = small_setup(slot)
        for j in range(metric.count):
            ident = np.einsum("ab...,bc...->ac...", metric.g_cov[j],
                              metric.g_inv[j])
            ident[0, 0] -= 1.0
            ident[1, 1] -= 1.0
            assert np.max(np.abs(ident)) < 1e-12

    def test_xi_norm_identity(self):
        slot = Slot.from_expr("1 + 0.5*eps*sin(x/eps)")
        *_, metric, _ = small_setup(slot)
        for j in range(metric.count):
            lhs = np.einsum("ab...,a...,b...->...", metric.g_cov[j],
                            metric.xi[j], metric.xi[j])
            assert np.max(np.abs(lhs - metric.g_inv[j, 0, 0])) < 1e-12

    def test_degenerate_signature_rejected(self):
        grid = GridSpec(-2, 2, 201, 0.0, 0.25, 8)
        frame = build_frame(grid, BackgroundGeometry.minkowski(), pad=3)
        spec = FamilySpec(g00=Slot.constant(0.0), g01=Slot.constant(0.0),
                          g11=Slot.constant(1.0))
        with pytest.raises(ScenarioError):
            build_family(spec, EpsilonNet(0.1, 0.5, 4), frame)


class TestCheckConditions:
    def test_constant_family_all_pass(self):
        _, frame, _, net, metric, coeffs = small_setup(Slot.constant(1.0))
        lens = build_lens(frame.grid, 1.0, (-1.0, 1.0))
        rep = check_conditions(metric, coeffs, lens, frame, net)
        assert rep.all_passed
        assert rep.M0 == pytest.approx(1.0)
        for q in rep.quantities:
            assert abs(q.slope) < 0.02

    def test_kink_passes(self):
        slot = Slot.from_profile(RoughProfile(
            "lipschitz_kink", {"offset": 1.0, "slope": 0.5, "cap": 1.0}))
        _, frame, _, net, metric, coeffs = small_setup(slot)
        lens = build_lens(frame.grid, 1.3, (-1.0, 1.0))
        rep = check_conditions(metric, coeffs, lens, frame, net)
        assert rep.all_passed

    def test_jump_fails_grad_bound(self):
        slot = Slot.from_profile(RoughProfile("jump", {"left": 1.0, "right": 4.0}))
        _, frame, _, net, metric, coeffs = small_setup(slot)
        lens = build_lens(frame.grid, 2.0, (-1.0, 1.0))
        rep = check_conditions(metric, coeffs, lens, frame, net)
        grad = rep.quantity("grad_g_inv")
        assert not grad.passed
        assert grad.slope <= -0.8
        assert not rep.all_passed
        # all other sup bounds still hold
        for name in ("g_inv", "g", "B", "C"):
            assert rep.quantity(name).passed

    def test_json_shape(self):
        _, frame, _, net, metric, coeffs = small_setup(Slot.constant(1.0))
        lens = build_lens(frame.grid, 1.0, (-1.0, 1.0))
        doc = check_conditions(metric, coeffs, lens, frame, net).to_json_dict()
        assert doc["pass"] is True
        assert set(doc["quantities"]) == {"g_inv", "grad_g_inv", "g", "B", "C"}
        assert doc["det"]["pass"] is True


def test_fit_loglog_exact_power():
    eps = EpsilonNet(0.1, 0.5, 5).values
    slope, _, residual = fit_loglog(eps, eps ** -2)
    assert slope == pytest.approx(-2.0, abs=1e-12)
    assert residual < 1e-12
