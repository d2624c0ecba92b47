"""Epsilon-nets, mollified rough profiles, coefficient families, and the
O(1)-condition checker.

A scenario defines each contravariant metric slot g^{ab} and each lower-order
coefficient slot either as a closed-form expression of (t, x, eps) or as a
rough profile of x that gets convolved with the scaled bump mollifier
rho_eps(x) = rho(x/eps)/eps, rho(s) ~ exp(-1/(1-s^2)) normalized to unit
mass.  Families are built per epsilon on the frame grid; the condition
checker measures sup norms across the net and fits log-log slopes to decide
the epsilon-uniform boundedness verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from . import expr as _expr
from .errors import (DataError, InversionError, ResolutionError, ScenarioError)
from .geometry import (ChartFrame, Lens, RiemannianBackground, derive_stack,
                       make_stack, stack_norm_sq)

N_DIM = 2


@dataclass(frozen=True)
class EpsilonNet:
    """Geometric net eps_j = eps0 * ratio**j, j = 0..count-1."""

    eps0: float = 0.1
    ratio: float = 0.5
    count: int = 6

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise DataError("ratio must lie in (0, 1)")
        if not 0 < self.eps0 <= 1:
            raise DataError("eps0 must lie in (0, 1]")
        if self.count < 4:
            raise DataError("net needs at least 4 members for slope fits")

    @property
    def values(self) -> np.ndarray:
        return self.eps0 * self.ratio ** np.arange(self.count)


def bump(s) -> np.ndarray:
    """Unnormalized C-infinity bump exp(-1/(1-s^2)) supported in (-1, 1)."""
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=8)
def _mollifier_rule(n_quad: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint nodes on (-1, 1) and weights normalized to unit sum."""
    s = -1.0 + (np.arange(n_quad) + 0.5) * (2.0 / n_quad)
    w = bump(s)
    return s, w / np.sum(w)


@dataclass(frozen=True)
class RoughProfile:
    """Named rough coefficient shape; ``params`` depend on the kind.

    kinds:
      smooth:         offset + slope*(x - location)
      lipschitz_kink: offset + slope*min(|x - location|, cap)
      jump:           left for x < location, right for x >= location
      oscillatory:    offset + amplitude*sin(freq*(x - location))
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    _KINDS = ("smooth", "lipschitz_kink", "jump", "oscillatory")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ScenarioError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))

    def func(self) -> Callable[[np.ndarray], np.ndarray]:
        p = self.params
        loc = p.get("location", 0.0)
        if self.kind == "smooth":
            off, slope = p.get("offset", 0.0), p.get("slope", 1.0)
            return lambda x: off + slope * (np.asarray(x, float) - loc)
        if self.kind == "lipschitz_kink":
            off = p.get("offset", 1.0)
            slope = p.get("slope", 0.5)
            cap = p.get("cap", np.inf)
            return lambda x: off + slope * np.minimum(
                np.abs(np.asarray(x, float) - loc), cap)
        if self.kind == "jump":
            left, right = p.get("left", 1.0), p.get("right", 4.0)
            return lambda x: np.where(np.asarray(x, float) < loc, left, right)
        off = p.get("offset", 1.0)
        amp = p.get("amplitude", 0.5)
        freq = p.get("freq", 10.0)
        return lambda x: off + amp * np.sin(freq * (np.asarray(x, float) - loc))


def mollify(profile: RoughProfile | Callable, eps: float, xs: np.ndarray,
            n_quad: int = 64) -> np.ndarray:
    """(profile * rho_eps)(x) by composite midpoint quadrature.

    Requires the sample grid to resolve the mollifier: spacing < eps/4.
    """
    if eps <= 0:
        raise ResolutionError("eps must be positive")
    xs = np.asarray(xs, float)
    if xs.size >= 2:
        dx = float(xs[1] - xs[0])
        if dx >= eps / 4:
            raise ResolutionError(
                f"grid spacing {dx:.3g} too coarse for eps={eps:.3g} "
                f"(need spacing < eps/4)")
    f = profile.func() if isinstance(profile, RoughProfile) else profile
    s, w = _mollifier_rule(max(64, n_quad))
    samples = f(xs[None, :] - eps * s[:, None])
    return w @ samples


@dataclass(frozen=True)
class Slot:
    """One coefficient slot: a closed-form expression or a mollified profile."""

    expression: _expr.Expr | None = None
    profile: RoughProfile | None = None

    def __post_init__(self):
        if (self.expression is None) == (self.profile is None):
            raise ScenarioError("slot needs exactly one of expression/profile")

    @staticmethod
    def from_expr(text) -> "Slot":
        tree = _expr.parse_expr(text) if isinstance(text, str) else text
        return Slot(expression=tree)

    @staticmethod
    def constant(c: float) -> "Slot":
        return Slot(expression=_expr.Num(float(c)))

    @staticmethod
    def from_profile(profile: RoughProfile) -> "Slot":
        return Slot(profile=profile)

    @property
    def time_dependent(self) -> bool:
        return (self.expression is not None
                and "t" in _expr.variables(self.expression))

    def evaluate(self, eps: float, t, xs: np.ndarray,
                 n_quad: int = 64) -> np.ndarray:
        """Sample on broadcast(t, xs); profiles ignore t."""
        xs = np.asarray(xs, float)
        t = np.asarray(t, float)
        shape = np.broadcast(t, xs).shape
        if self.profile is not None:
            row = mollify(self.profile, eps, xs.reshape(-1), n_quad=n_quad)
            return np.broadcast_to(row.reshape(xs.shape), shape).copy()
        val = _expr.eval_expr(self.expression,
                              _expr.Bindings(t=t, x=xs, eps=float(eps)))
        return np.broadcast_to(np.asarray(val, float), shape).copy()


ZERO_SLOT = Slot.constant(0.0)


@dataclass(frozen=True)
class FamilySpec:
    """Scenario fragment naming every coefficient slot.

    For rank-(1,0)/(0,1) unknowns, B and C act as scalar multiples of the
    identity on the field indices; F is given per component.
    """

    g00: Slot
    g01: Slot
    g11: Slot
    rank: tuple[int, int] = (0, 0)
    B: tuple[Slot, Slot] = (ZERO_SLOT, ZERO_SLOT)
    C: Slot = ZERO_SLOT
    F: tuple[Slot, ...] = (ZERO_SLOT,)

    def __post_init__(self):
        k, l = self.rank
        if k + l > 1:
            raise ScenarioError("only ranks (0,0), (1,0), (0,1) are supported")
        n_comp = N_DIM ** (k + l)
        if len(self.F) != n_comp:
            raise ScenarioError(
                f"F needs {n_comp} component slot(s) for rank {self.rank}")


class MetricFamily:
    """Per-epsilon contravariant/covariant metric grids and xi = g^{-1}(sigma, .)."""

    def __init__(self, eps: np.ndarray, g_inv: np.ndarray, g_cov: np.ndarray,
                 xi: np.ndarray, det_cov: np.ndarray, spec: FamilySpec,
                 frame: ChartFrame, time_dependent: bool, n_quad: int):
        self.eps = eps
        self.g_inv = g_inv          # (J, 2, 2, T, X)
        self.g_cov = g_cov
        self.xi = xi                # (J, 2, T, X)
        self.det_cov = det_cov      # (J, T, X)
        self.spec = spec
        self.frame = frame
        self.time_dependent = time_dependent
        self.n_quad = n_quad
        for a in (self.g_inv, self.g_cov, self.xi, self.det_cov):
            a.setflags(write=False)

    @property
    def count(self) -> int:
        return self.eps.size

    def g_inv_at(self, j: int, t: float) -> np.ndarray:
        """Contravariant components at arbitrary time t, shape (2, 2, nx)."""
        if not self.time_dependent:
            return self.g_inv[j][:, :, 0, :]
        return _metric_point(self.spec, float(self.eps[j]), t,
                             self.frame.xs, self.n_quad)[0]


class CoefficientFamily:
    """Per-epsilon grids for B, C, F matching the scenario's unknown rank."""

    def __init__(self, eps: np.ndarray, rank: tuple[int, int], B: np.ndarray,
                 C: np.ndarray, F: np.ndarray, spec: FamilySpec,
                 frame: ChartFrame, time_dependent: bool, n_quad: int,
                 f_offset: np.ndarray | None = None):
        self.eps = eps
        self.rank = rank
        self.B = B    # scalar rank: (J,2,T,X); rank 1: (J,2,2,2,T,X)
        self.C = C    # scalar rank: (J,T,X);   rank 1: (J,2,2,T,X)
        self.F = F    # (J,) + comp + (T,X)
        self.spec = spec
        self.frame = frame
        self.time_dependent = time_dependent
        self.n_quad = n_quad
        self.f_offset = f_offset      # (J,) + comp + (X,), time-independent
        if f_offset is not None:
            self.F = self.F + f_offset[..., None, :]
        for a in (self.B, self.C, self.F):
            a.setflags(write=False)

    def with_f_offset(self, f_offset: np.ndarray) -> "CoefficientFamily":
        """Copy with a per-epsilon, time-independent addition to F."""
        return CoefficientFamily(self.eps, self.rank, self.B, self.C,
                                 self.F if self.f_offset is None else
                                 self.F - self.f_offset[..., None, :],
                                 self.spec, self.frame, self.time_dependent,
                                 self.n_quad, f_offset=np.asarray(f_offset, float))

    def at(self, j: int, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(B, C, F) component arrays at arbitrary time t (grid axis = x)."""
        if not self.time_dependent:
            return (self.B[j][..., 0, :], self.C[j][..., 0, :],
                    self.F[j][..., 0, :])
        B, C, F = _coeff_point(self.spec, float(self.eps[j]), t,
                               self.frame.xs, self.n_quad)
        if self.f_offset is not None:
            F = F + self.f_offset[j]
        return B, C, F


def _metric_point(spec: FamilySpec, eps: float, t, xs, n_quad):
    """Evaluate and invert the metric slots at one time (or a time column)."""
    g00 = spec.g00.evaluate(eps, t, xs, n_quad)
    g01 = spec.g01.evaluate(eps, t, xs, n_quad)
    g11 = spec.g11.evaluate(eps, t, xs, n_quad)
    det_inv = g00 * g11 - g01 ** 2
    bad = (g00 >= 0) | (det_inv >= 0)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise ScenarioError(
            f"metric family is not Lorentzian at eps={eps:.4g}, grid index {idx}")
    g_inv = np.stack([np.stack([g00, g01]), np.stack([g01, g11])])
    g_cov = np.stack([np.stack([g11, -g01]), np.stack([-g01, g00])]) / det_inv
    ident = np.einsum("ab...,bc...->ac...", g_cov, g_inv)
    ident[0, 0] -= 1.0
    ident[1, 1] -= 1.0
    err = float(np.max(np.abs(ident)))
    if err > 1e-12:
        raise InversionError(
            f"pointwise inversion failed to verify at eps={eps:.4g} "
            f"(max deviation {err:.2e})")
    xi = g_inv[:, 0].copy()   # xi^a = g^{a b} sigma_b with sigma = (1, 0)
    return g_inv, g_cov, xi, 1.0 / det_inv


def _coeff_point(spec: FamilySpec, eps: float, t, xs, n_quad):
    k, l = spec.rank
    b0 = spec.B[0].evaluate(eps, t, xs, n_quad)
    b1 = spec.B[1].evaluate(eps, t, xs, n_quad)
    c = spec.C.evaluate(eps, t, xs, n_quad)
    f = np.stack([s.evaluate(eps, t, xs, n_quad) for s in spec.F])
    b_vec = np.stack([b0, b1])
    if k + l == 0:
        return b_vec, c, f[0]
    eye = np.eye(N_DIM)
    B_full = np.einsum("a...,ik->aik...", b_vec, eye)
    C_full = np.einsum("...,ik->ik...", c, eye)
    F_full = f.reshape((N_DIM,) + f.shape[1:])
    return B_full, C_full, F_full


def build_family(spec: FamilySpec, net: EpsilonNet, frame: ChartFrame,
                 n_quad: int = 64) -> tuple[MetricFamily, CoefficientFamily]:
    """Sample the scenario per epsilon on the frame grid and verify inverses."""
    eps_vals = net.values
    tg = frame.taus[:, None]
    xg = frame.xs[None, :]
    T, X = frame.n_slices, frame.grid.nx
    g_inv = np.empty((net.count, 2, 2, T, X))
    g_cov = np.empty_like(g_inv)
    xi = np.empty((net.count, 2, T, X))
    det_cov = np.empty((net.count, T, X))
    metric_td = any(s.time_dependent for s in (spec.g00, spec.g01, spec.g11))
    coeff_td = any(s.time_dependent for s in (*spec.B, spec.C, *spec.F))
    B_list, C_list, F_list = [], [], []
    for j, eps in enumerate(eps_vals):
        gi, gc, x_, dc = _metric_point(spec, float(eps), tg, xg, n_quad)
        g_inv[j], g_cov[j], xi[j], det_cov[j] = gi, gc, x_, dc
        Bj, Cj, Fj = _coeff_point(spec, float(eps), tg, xg, n_quad)
        B_list.append(Bj)
        C_list.append(Cj)
        F_list.append(Fj)
    metric = MetricFamily(eps_vals, g_inv, g_cov, xi, det_cov, spec, frame,
                          metric_td, n_quad)
    coeffs = CoefficientFamily(eps_vals, spec.rank, np.stack(B_list),
                               np.stack(C_list), np.stack(F_list), spec, frame,
                               coeff_td or metric_td, n_quad)
    return metric, coeffs


def lens_sup(values: np.ndarray, lens: Lens, frame: ChartFrame) -> float:
    """Sup of |values| (a (T, X) grid) over the lens region."""
    out = 0.0
    for k in range(lens.n_public):
        lo, hi = lens.windows[k]
        row = values[frame.k_ext(k), lo:hi + 1]
        if row.size:
            out = max(out, float(np.max(np.abs(row))))
    return out


def fit_loglog(eps: np.ndarray, vals: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope/intercept of log10(vals) vs log10(eps) + residual.

    Returns (slope, intercept, residual) with residual the max absolute
    deviation in decades.  Nonpositive values are floored at 1e-300.
    """
    v = np.maximum(np.asarray(vals, float), 1e-300)
    lx = np.log10(np.asarray(eps, float))
    ly = np.log10(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return float(slope), float(intercept), residual


@dataclass(frozen=True)
class QuantityVerdict:
    name: str
    sups: np.ndarray
    slope: float
    ratio: float          # sup at eps_min over sup at eps_max
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    """Per-quantity O(1) verdicts, the two-sided timelikeness bound, and the
    determinant strict-positivity verdict."""

    eps: np.ndarray
    quantities: tuple[QuantityVerdict, ...]
    M0: float
    eq3_passed: bool
    det_infs: np.ndarray
    det_slope: float
    det_m_fit: int
    det_passed: bool

    @property
    def all_passed(self) -> bool:
        return (self.eq3_passed and self.det_passed
                and all(q.passed for q in self.quantities))

    def quantity(self, name: str) -> QuantityVerdict:
        for q in self.quantities:
            if q.name == name:
                return q
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "eps": [float(e) for e in self.eps],
            "quantities": {
                q.name: {
                    "sup": [float(s) for s in q.sups],
                    "slope": q.slope,
                    "ratio": q.ratio,
                    "pass": bool(q.passed),
                } for q in self.quantities
            },
            "M0": self.M0 if np.isfinite(self.M0) else None,
            "eq3_pass": bool(self.eq3_passed),
            "det": {
                "inf": [float(v) for v in self.det_infs],
                "slope": self.det_slope,
                "m_fit": self.det_m_fit,
                "pass": bool(self.det_passed),
            },
            "pass": bool(self.all_passed),
        }


_O1_SLOPE_MIN = -0.1
_O1_RATIO_MAX = 3.0
_DET_SLOPE_MAX = 5.0


def _o1_verdict(name: str, eps: np.ndarray, sups: np.ndarray) -> QuantityVerdict:
    sups = np.asarray(sups, float)
    if np.all(sups <= 1e-30):
        return QuantityVerdict(name, sups, 0.0, 1.0, True)
    slope, _, _ = fit_loglog(eps, sups)
    ratio = float(np.maximum(sups[-1], 1e-300) / np.maximum(sups[0], 1e-300))
    passed = slope >= _O1_SLOPE_MIN and ratio <= _O1_RATIO_MAX
    return QuantityVerdict(name, sups, slope, ratio, passed)


def check_conditions(metric: MetricFamily, coeffs: CoefficientFamily,
                     lens: Lens, frame: ChartFrame,
                     net: EpsilonNet) -> ConditionReport:
    """Measure the epsilon-uniform boundedness conditions over the lens.

    Failing conditions are reported as verdicts, never raised.
    """
    m_bg = frame.m_bg
    eps = net.values
    J = net.count

    def sup_of_norm(vals, n_up, n_lo):
        nrm = np.sqrt(stack_norm_sq(make_stack(vals, n_up, n_lo, frame), m_bg))
        return lens_sup(nrm, lens, frame)

    sup_ginv = np.empty(J)
    sup_dginv = np.empty(J)
    sup_gcov = np.empty(J)
    sup_B = np.empty(J)
    sup_C = np.empty(J)
    k, l = coeffs.rank
    for j in range(J):
        sup_ginv[j] = sup_of_norm(metric.g_inv[j], 2, 0)
        st = make_stack(metric.g_inv[j], 2, 0, frame)
        dst = derive_stack(st, frame)
        sup_dginv[j] = lens_sup(np.sqrt(stack_norm_sq(dst, m_bg)), lens, frame)
        sup_gcov[j] = sup_of_norm(metric.g_cov[j], 0, 2)
        if k + l == 0:
            sup_B[j] = sup_of_norm(coeffs.B[j], 1, 0)
            sup_C[j] = lens_sup(np.abs(coeffs.C[j]), lens, frame)
        else:
            up = 2 if k == 1 else 1
            sup_B[j] = sup_of_norm(coeffs.B[j], up, 3 - up)
            sup_C[j] = sup_of_norm(coeffs.C[j], 1, 1)

    quantities = (
        _o1_verdict("g_inv", eps, sup_ginv),
        _o1_verdict("grad_g_inv", eps, sup_dginv),
        _o1_verdict("g", eps, sup_gcov),
        _o1_verdict("B", eps, sup_B),
        _o1_verdict("C", eps, sup_C),
    )

    # two-sided bound on -g_eps^{-1}(sigma, sigma) = -g^{00}
    q_min, q_max = np.inf, 0.0
    for j in range(J):
        q = -metric.g_inv[j, 0, 0]
        for kk in range(lens.n_public):
            lo, hi = lens.windows[kk]
            row = q[frame.k_ext(kk), lo:hi + 1]
            if row.size:
                q_min = min(q_min, float(np.min(row)))
                q_max = max(q_max, float(np.max(row)))
    if q_min <= 0:
        M0, eq3 = float("inf"), False
    else:
        M0, eq3 = max(q_max, 1.0 / q_min), True

    det_infs = np.empty(J)
    for j in range(J):
        vals = np.abs(metric.det_cov[j])
        inf_v = np.inf
        for kk in range(lens.n_public):
            lo, hi = lens.windows[kk]
            row = vals[frame.k_ext(kk), lo:hi + 1]
            if row.size:
                inf_v = min(inf_v, float(np.min(row)))
        det_infs[j] = inf_v
    det_slope, _, _ = fit_loglog(eps, det_infs)
    det_passed = bool(np.all(det_infs > 0) and det_slope <= _DET_SLOPE_MAX)
    det_m_fit = int(max(0, np.ceil(max(det_slope, 0.0))))

    return ConditionReport(eps=eps, quantities=quantities, M0=M0,
                           eq3_passed=eq3, det_infs=det_infs,
                           det_slope=det_slope, det_m_fit=det_m_fit,
                           det_passed=det_passed)
