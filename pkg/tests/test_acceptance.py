"""Acceptance gate: one test per top-level criterion, at the stated
tolerances, each printing a PASS line when it holds."""

import numpy as np
import pytest

from genwave.asymptotics import (classify_net, f_volume_norms,
                                 uniqueness_pipeline)
from genwave.cli import run as cli_run
from genwave.energy import (check_dec, check_divergence_balance,
                            check_equivalence, compute_energy_curves,
                            energy_tensor, equivalence_constants, fit_gronwall)
from genwave.geometry import (BackgroundGeometry, GridSpec, build_frame,
                              build_lens)
from genwave.regularization import (EpsilonNet, FamilySpec, Slot, build_family,
                                    check_conditions)
from genwave.solver import CauchyData, cfl_timestep, solve_one

from conftest import ScenarioRun, scenario_path


def report(name: str, detail: str = ""):
    print(f"ACCEPTANCE {name}: PASS {detail}")


def _dalembert_case(nx: int, nt: int):
    grid = GridSpec(-8.0, 8.0, nx, 0.0, 0.5, nt)
    frame = build_frame(grid, BackgroundGeometry.minkowski(), pad=3)
    spec = FamilySpec(g00=Slot.constant(-1.0), g01=Slot.constant(0.0),
                      g11=Slot.constant(1.0))
    metric, coeffs = build_family(spec, EpsilonNet(0.1, 0.5, 4), frame)
    cfl = cfl_timestep(metric, frame)
    lens = build_lens(grid, cfl.c_max, (-2.0, 2.0))
    xs = grid.xs
    sol = solve_one(metric, coeffs, 0,
                    CauchyData((0, 0), np.sin(xs), np.cos(xs)),
                    lens, frame, cfl)
    return grid, frame, lens, metric, sol


def test_flat_space_oracle():
    """d'Alembert reproduced to 1e-3 at nx=1024; self-convergence ~ 4."""
    grid, frame, lens, _, sol = _dalembert_case(1024, 16)
    xs = grid.xs
    err = 0.0
    for k in range(lens.n_public):
        ke = frame.k_ext(k)
        lo, hi = lens.windows[k]
        exact = np.sin(xs[lo:hi + 1] - frame.taus[ke])
        err = max(err, float(np.max(np.abs(sol.u[ke, lo:hi + 1] - exact))))
    assert err < 1e-3

    sols = {}
    for nx in (257, 513, 1025):
        g = GridSpec(-8.0, 8.0, nx, 0.0, 0.5, 16)
        f = build_frame(g, BackgroundGeometry.minkowski(), pad=3)
        spec = FamilySpec(g00=Slot.constant(-1.0), g01=Slot.constant(0.0),
                          g11=Slot.constant(1.0))
        metric, coeffs = build_family(spec, EpsilonNet(0.1, 0.5, 4), f)
        cfl = cfl_timestep(metric, f)
        lens_n = build_lens(g, cfl.c_max, (-2.0, 2.0))
        sols[nx] = (f, lens_n, solve_one(
            metric, coeffs, 0,
            CauchyData((0, 0), np.sin(g.xs), np.cos(g.xs)), lens_n, f, cfl))
    f_c, lens_c, s_c = sols[257]
    k = lens_c.n_public - 1
    lo, hi = lens_c.windows[k]
    idx = np.arange(lo, hi + 1)
    u_c = s_c.u[f_c.k_ext(k), idx]
    u_m = sols[513][2].u[sols[513][0].k_ext(k), 2 * idx]
    u_f = sols[1025][2].u[sols[1025][0].k_ext(k), 4 * idx]
    ratio = np.max(np.abs(u_c - u_m)) / np.max(np.abs(u_m - u_f))
    assert 3.5 <= ratio <= 4.5
    report("flat-space-oracle", f"(Linf={err:.2e}, convergence={ratio:.2f})")


def test_initial_data_conversion():
    """The coordinate-time initial-velocity formula, exact to 1e-14."""
    from genwave.solver import convert_initial_data
    grid = GridSpec(-4.0, 4.0, 257, 0.0, 0.2, 4)
    frame = build_frame(grid, BackgroundGeometry.minkowski(), pad=2)
    xs = grid.xs
    f = np.exp(-xs ** 2)
    net = EpsilonNet(0.1, 0.5, 4)

    # xi^0 = -1: du/dt = -u1
    spec1 = FamilySpec(g00=Slot.constant(-1.0), g01=Slot.constant(0.0),
                       g11=Slot.constant(1.0))
    metric1, _ = build_family(spec1, net, frame)
    _, ut = convert_initial_data(CauchyData((0, 0), np.zeros_like(xs), f),
                                 metric1, 0, frame)
    assert np.max(np.abs(ut + f)) < 1e-14

    # xi^0 = -2: du/dt = -u1/2
    spec2 = FamilySpec(g00=Slot.constant(-2.0), g01=Slot.constant(0.0),
                       g11=Slot.constant(1.0))
    metric2, _ = build_family(spec2, net, frame)
    _, ut = convert_initial_data(CauchyData((0, 0), np.zeros_like(xs), f),
                                 metric2, 0, frame)
    assert np.max(np.abs(ut + f / 2)) < 1e-14
    report("initial-data-conversion")


def test_energy_sobolev_equivalence(flat_run, kink_run, oscillatory_run):
    """Two-sided sandwich with the explicit constants and 5% slack; the flat
    order-0 energy equals half the squared slice norm to 1e-3 relative."""
    details = []
    for srun in (flat_run, kink_run, oscillatory_run):
        consts = equivalence_constants(srun.ctx.metric, srun.ctx.lens,
                                       srun.ctx.frame)
        rep = check_equivalence(srun.curves, consts)
        assert rep.passed, srun.name
        details.append(f"{srun.name}[{rep.worst_lower:.3f},"
                       f"{rep.worst_upper:.3f}]")
    curve = flat_run.curves[0]
    ratio = curve.E[0] / (0.5 * curve.sob_slice[0] ** 2)
    assert np.max(np.abs(ratio - 1.0)) < 1e-3
    report("energy-sobolev-equivalence", " ".join(details))


def test_dominant_energy_condition(flat_run, kink_run, oscillatory_run):
    """1e4 random timelike covectors per scenario per order j <= 3."""
    for srun in (flat_run, kink_run, oscillatory_run):
        ctx = srun.ctx
        rng = np.random.default_rng(42)
        n_per = -(-10000 // ctx.net.count)
        for order in range(4):
            for j, sol in enumerate(srun.solutions):
                tensor = energy_tensor(sol.as_field(), ctx.metric.g_inv[j],
                                       order, ctx.frame)
                rep = check_dec(tensor, ctx.metric.g_inv[j],
                                ctx.metric.g_cov[j], ctx.lens, ctx.frame,
                                n_per, rng)
                assert rep.min_energy_density >= -1e-10, (srun.name, order)
                assert rep.max_flux_norm <= 1e-10, (srun.name, order)
    report("dominant-energy-condition")


def test_divergence_balance(flat_run, kink_run, oscillatory_run):
    """Discrete identity is first order (halving the grid halves the defect
    within 30%); the inequality form holds with one shared constant."""
    defects = {}
    for nx, nt in ((1024, 16), (2048, 32)):
        grid, frame, lens, metric, sol = _dalembert_case(nx, nt)
        curve = compute_energy_curves(sol.as_field(), metric.g_inv[0], 0.1,
                                      lens, frame, 1)
        rep = check_divergence_balance(sol.as_field(), metric.g_inv[0], curve,
                                       lens, frame, 1)
        defects[nx] = rep.identity_defect
        assert rep.inequality_passed
    ratio = defects[2048] / defects[1024]
    assert 0.35 <= ratio <= 0.65

    shared = {}
    for srun in (flat_run, kink_run, oscillatory_run):
        ctx = srun.ctx
        c_shared, ok = 0.0, True
        for j, sol in enumerate(srun.solutions):
            rep = check_divergence_balance(sol.as_field(), ctx.metric.g_inv[j],
                                           srun.curves[j], ctx.lens, ctx.frame,
                                           1)
            c_shared = max(c_shared, rep.C_fit)
            ok = ok and rep.inequality_passed
        assert ok, srun.name
        assert np.isfinite(c_shared)
        shared[srun.name] = c_shared
    report("divergence-balance",
           f"(defect ratio={ratio:.2f}, shared C={shared})")


def test_gronwall_first_order(flat_run, kink_run, oscillatory_run):
    """Fitted exponential rate varies by < 2 across the net; the flat
    homogeneous rate stays below 0.05."""
    rates = {}
    for srun in (flat_run, kink_run, oscillatory_run):
        fit = fit_gronwall(srun.curves, f_volume_norms(srun.ctx), 1)
        assert fit.passed, srun.name
        assert fit.variation < 2.0
        rates[srun.name] = fit.c3
    assert rates["flat"] <= 0.05
    report("gronwall-m1", f"(rates={ {k: round(v, 4) for k, v in rates.items()} })")


def test_moderateness(kink_run, oscillatory_run):
    """Rough scenarios give moderate nets; the classifier is exact on
    synthetic power laws."""
    for srun in (kink_run, oscillatory_run):
        for net_rec in srun.report.all_nets:
            assert net_rec.verdict.kind == "moderate", \
                (srun.name, net_rec.name)
    net = EpsilonNet(0.1, 0.5, 6)
    v = classify_net(net.values ** -2.0, net)
    assert (v.kind, v.N) == ("moderate", 2)
    v = classify_net(net.values ** 3.0, net)
    assert (v.kind, v.N) == ("moderate", 0)
    with np.errstate(under="ignore"):
        v = classify_net(np.exp(-1.0 / net.values), net)
    assert v.kind == "negligible"
    report("moderateness")


def test_uniqueness(flat_run):
    """Exponentially small data perturbations leave a negligible imprint;
    an eps-linear perturbation is correctly flagged."""
    ctx = flat_run.ctx
    rep = uniqueness_pipeline(ctx, "negligible", flat_run.solutions)
    assert rep.passed
    for net_rec in rep.all_nets:
        assert net_rec.verdict.kind == "negligible"
    assert rep.diff_sup.verdict.slope >= 5.0
    ctrl = uniqueness_pipeline(ctx, "moderate_control", flat_run.solutions)
    assert not ctrl.passed
    report("uniqueness",
           f"(diff slope={rep.diff_sup.verdict.slope:.1f})")


def test_condition_discrimination(kink_run):
    """Kink passes all five sup bounds; the jump fails the gradient bound
    with slope <= -0.8."""
    ctx = kink_run.ctx
    rep = check_conditions(ctx.metric, ctx.coeffs, ctx.lens, ctx.frame,
                           ctx.net)
    assert rep.all_passed
    for q in rep.quantities:
        assert q.passed, q.name

    from genwave.cli import build_context, parse_scenario
    jcfg = parse_scenario(scenario_path("jump"))
    jctx = build_context(jcfg)
    jrep = check_conditions(jctx.metric, jctx.coeffs, jctx.lens, jctx.frame,
                            jctx.net)
    grad = jrep.quantity("grad_g_inv")
    assert not grad.passed
    assert grad.slope <= -0.8
    assert not jrep.all_passed
    report("condition-discrimination", f"(jump slope={grad.slope:.2f})")


def test_determinism(tmp_path):
    """Identical config and seed give byte-identical artifacts."""
    out = tmp_path / "det"
    code1 = cli_run(scenario_path("flat"), out=out, seed=42)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    code2 = cli_run(scenario_path("flat"), out=out, seed=42)
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert code1 == code2 == 0
    assert first == second
    report("determinism")
