"""Epsilon-asymptotic classification of nets and the existence/uniqueness
experiment pipelines.

A net of positive numbers indexed by the epsilon-net is classified from the
least-squares slope of log10(value) against log10(eps): bounded-by-a-power
("moderate", with the smallest certified integer N such that the values grow
no faster than eps^{-N}), decaying faster than eps^{m_test} ("negligible"),
or unclassifiable at this resolution ("neither").  Finite nets cannot test
all orders, so negligibility always carries the tested order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import (EnergyCurve, compute_energy_curves, equivalence_constants,
                     sup_from_energy, volume_norm_curves)
from .errors import DataError
from .geometry import ChartFrame, Lens, TensorFieldGrid
from .regularization import (CoefficientFamily, EpsilonNet, MetricFamily, bump,
                             fit_loglog)
from .solver import CauchyData, CflPlan, SolutionGrid, solve_family

DEFAULT_M_TEST = 5
_RESIDUAL_MAX = 0.5
_SLOPE_MARGIN = 0.25
_FLOOR = 1e-300


@dataclass(frozen=True)
class AsymptoticVerdict:
    kind: str             # "moderate" | "negligible" | "neither"
    slope: float
    residual: float
    N: int | None
    m_test: int

    def to_json_dict(self) -> dict:
        out = {"verdict": self.kind, "slope": self.slope,
               "residual": self.residual, "m_test": self.m_test}
        if self.N is not None:
            out["N"] = self.N
        return out


def classify_net(values, net: EpsilonNet | np.ndarray,
                 m_test: int = DEFAULT_M_TEST) -> AsymptoticVerdict:
    """Classify a net of nonnegative numbers over the epsilon-net.

    Values of exactly zero short-circuit towards negligibility (they are
    floored at 1e-300 for the fit).  Moderate certifies
    N = max(0, ceil(-slope - 0.25)); negligible requires slope >= m_test.
    """
    eps = net.values if isinstance(net, EpsilonNet) else np.asarray(net, float)
    vals = np.asarray(values, float)
    if vals.size < 4 or not np.all(np.isfinite(vals)):
        raise DataError("classification needs >= 4 finite values")
    if np.any(vals < 0):
        raise DataError("net values must be nonnegative")
    if np.all(vals <= _FLOOR):
        return AsymptoticVerdict("negligible", float("inf"), 0.0, None, m_test)
    slope, _, residual = fit_loglog(eps, vals)
    if slope >= m_test:
        return AsymptoticVerdict("negligible", slope, residual, None, m_test)
    if residual < _RESIDUAL_MAX:
        N = int(max(0, np.ceil(-slope - _SLOPE_MARGIN)))
        return AsymptoticVerdict("moderate", slope, residual, N, m_test)
    return AsymptoticVerdict("neither", slope, residual, None, m_test)


# ---------------------------------------------------------------------------
# pipelines

@dataclass
class ScenarioContext:
    """Everything a pipeline needs, assembled once per scenario run."""

    frame: ChartFrame
    lens: Lens
    net: EpsilonNet
    metric: MetricFamily
    coeffs: CoefficientFamily
    data: list[CauchyData]        # one per net member
    cfl: CflPlan
    m_max: int = 3
    m_test: int = DEFAULT_M_TEST
    s_embed: int = 1
    dissipation: float = 0.0
    workers: int = 1


@dataclass
class ClassifiedNet:
    name: str
    values: np.ndarray
    verdict: AsymptoticVerdict

    def to_json_dict(self, eps: np.ndarray) -> dict:
        out = {"quantity": self.name,
               "eps": [float(e) for e in eps],
               "values": [float(v) for v in self.values]}
        out.update(self.verdict.to_json_dict())
        return out


@dataclass
class ExistenceReport:
    energy_nets: list[ClassifiedNet]       # sup_tau E^m per order m
    sup_nets: list[ClassifiedNet]          # sup |d^alpha u| per order |alpha|
    sup_bound_ratios: np.ndarray           # (J, orders) embedding-bound ratios
    sup_bound_passed: bool
    exists: bool
    solutions: list[SolutionGrid]
    curves: list[EnergyCurve]

    @property
    def all_nets(self) -> list[ClassifiedNet]:
        return self.energy_nets + self.sup_nets


def _plain_sup(field: TensorFieldGrid, lens: Lens, frame: ChartFrame,
               order: int) -> float:
    """sup over the lens of the largest |d^alpha u| with |alpha| = order."""
    st = field.stack(order, with_connection=False)
    out = 0.0
    for k in range(lens.n_public):
        ke = frame.k_ext(k)
        lo = max(lens.windows[k, 0], st.windows[ke, 0])
        hi = min(lens.windows[k, 1], st.windows[ke, 1])
        if ke < st.t_lo or ke > st.t_hi or lo > hi:
            continue
        out = max(out, float(np.max(np.abs(st.values[..., ke, lo:hi + 1]))))
    return out


def existence_pipeline(ctx: ScenarioContext,
                       solutions: list[SolutionGrid] | None = None
                       ) -> ExistenceReport:
    """Solve the family, classify sup_tau E^m and derivative sup-norms, and
    check the embedding bound; the solution family counts as a generalized
    solution when every net is moderate."""
    if solutions is None:
        solutions = _solve_all(ctx)
    curves = [compute_energy_curves(sol.as_field(), ctx.metric.g_inv[j],
                                    float(ctx.net.values[j]), ctx.lens,
                                    ctx.frame, ctx.m_max)
              for j, sol in enumerate(solutions)]
    energy_nets = []
    for m in range(ctx.m_max + 1):
        vals = np.array([np.max(c.E[m]) for c in curves])
        energy_nets.append(ClassifiedNet(
            f"sup_E{m}", vals, classify_net(vals, ctx.net, ctx.m_test)))
    n_orders = ctx.m_max - ctx.s_embed + 1
    sup_nets = []
    consts = equivalence_constants(ctx.metric, ctx.lens, ctx.frame)
    ratios = np.zeros((ctx.net.count, n_orders))
    for r in range(n_orders):
        vals = np.array([_plain_sup(sol.as_field(), ctx.lens, ctx.frame, r)
                         for sol in solutions])
        sup_nets.append(ClassifiedNet(
            f"sup_d{r}u", vals, classify_net(vals, ctx.net, ctx.m_test)))
        for j, sol in enumerate(solutions):
            rep = sup_from_energy(sol.as_field(), curves[j], ctx.lens,
                                  ctx.frame, ctx.s_embed, r, consts.A_prime)
            ratios[j, r] = rep.ratio
    exists = all(n.verdict.kind == "moderate" for n in energy_nets + sup_nets)
    return ExistenceReport(energy_nets=energy_nets, sup_nets=sup_nets,
                           sup_bound_ratios=ratios,
                           sup_bound_passed=bool(np.all(ratios <= 1.0)),
                           exists=exists, solutions=solutions, curves=curves)


@dataclass
class UniquenessReport:
    scale_kind: str                        # "negligible" or "moderate_control"
    diff_sup: ClassifiedNet
    diff_energy_nets: list[ClassifiedNet]
    passed: bool                           # all difference nets negligible
    perturbed: list[SolutionGrid]

    @property
    def all_nets(self) -> list[ClassifiedNet]:
        return [self.diff_sup] + self.diff_energy_nets


def perturbation_bump(lens: Lens, frame: ChartFrame) -> np.ndarray:
    """Fixed smooth bump compactly supported in the lens interior."""
    a, b = lens.base
    center = 0.5 * (a + b)
    width = 0.25 * (b - a)
    return bump((frame.xs - center) / width)


def perturbed_data(ctx: ScenarioContext, scales: np.ndarray,
                   phi: np.ndarray) -> list[CauchyData]:
    out = []
    comp_shape = (2,) * sum(ctx.data[0].rank)
    add = np.broadcast_to(phi, comp_shape + phi.shape)
    for j, base in enumerate(ctx.data):
        d = float(scales[j]) * add.reshape(base.u0.shape)
        out.append(CauchyData(base.rank, base.u0 + d, base.u1 + d))
    return out


def uniqueness_pipeline(ctx: ScenarioContext, scale_kind: str = "negligible",
                        base_solutions: list[SolutionGrid] | None = None
                        ) -> UniquenessReport:
    """Solve with data (and forcing) perturbed by scale(eps) * bump and
    classify the per-epsilon solution differences.

    scale_kind "negligible" uses exp(-1/eps); "moderate_control" uses eps
    itself and is expected to fail the negligibility verdict.
    """
    eps = ctx.net.values
    if scale_kind == "negligible":
        with np.errstate(under="ignore"):
            scales = np.exp(-1.0 / eps)
    elif scale_kind == "moderate_control":
        scales = eps.copy()
    else:
        raise DataError(f"unknown perturbation scale {scale_kind!r}")
    phi = perturbation_bump(ctx.lens, ctx.frame)
    if base_solutions is None:
        base_solutions = _solve_all(ctx)
    data_p = perturbed_data(ctx, scales, phi)
    comp_shape = (2,) * sum(ctx.data[0].rank)
    f_offset = (scales[:, None] * phi[None, :])
    f_offset = f_offset.reshape((ctx.net.count,) + (1,) * len(comp_shape)
                                + phi.shape[-1:])
    f_offset = np.broadcast_to(
        f_offset, (ctx.net.count,) + comp_shape + phi.shape[-1:]).copy()
    coeffs_p = ctx.coeffs.with_f_offset(f_offset)
    pert = solve_family(ctx.metric, coeffs_p, data_p, ctx.lens, ctx.frame,
                        ctx.cfl, ctx.dissipation, ctx.workers)
    diff_sup_vals = np.empty(ctx.net.count)
    diff_curves = []
    for j, (sb, sp) in enumerate(zip(base_solutions, pert)):
        du = sp.u - sb.u
        fld = TensorFieldGrid(sb.rank[0], sb.rank[1], du, ctx.frame, sb.windows)
        diff_sup_vals[j] = _plain_sup(fld, ctx.lens, ctx.frame, 0)
        diff_curves.append(compute_energy_curves(
            fld, ctx.metric.g_inv[j], float(eps[j]), ctx.lens, ctx.frame,
            ctx.m_max))
    diff_sup = ClassifiedNet("uniqueness_diff_sup", diff_sup_vals,
                             classify_net(diff_sup_vals, ctx.net, ctx.m_test))
    diff_energy = []
    for m in range(ctx.m_max + 1):
        vals = np.array([np.max(c.E[m]) for c in diff_curves])
        diff_energy.append(ClassifiedNet(
            f"uniqueness_diff_E{m}", vals,
            classify_net(vals, ctx.net, ctx.m_test)))
    passed = all(n.verdict.kind == "negligible"
                 for n in [diff_sup] + diff_energy)
    return UniquenessReport(scale_kind=scale_kind, diff_sup=diff_sup,
                            diff_energy_nets=diff_energy, passed=passed,
                            perturbed=pert)


def _solve_all(ctx: ScenarioContext) -> list[SolutionGrid]:
    return solve_family(ctx.metric, ctx.coeffs, ctx.data, ctx.lens, ctx.frame,
                        ctx.cfl, ctx.dissipation, ctx.workers)


def f_volume_norms(ctx: ScenarioContext) -> list[np.ndarray]:
    """||F_eps||^m_{Omega_tau} curves per net member, orders 0..m_max-1."""
    out = []
    for j in range(ctx.net.count):
        comp = ctx.coeffs.F[j]
        rank = ctx.coeffs.rank
        fld = TensorFieldGrid(rank[0], rank[1], comp, ctx.frame)
        out.append(volume_norm_curves(fld, ctx.lens, ctx.frame,
                                      max(0, ctx.m_max - 1)))
    return out
