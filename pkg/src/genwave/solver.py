"""Per-epsilon finite-difference solution of the Cauchy problem on the lens.

Method of lines: the second-order equation is reduced to (u, v = du/dt) and
advanced with classical RK4 over second-order central differences in x.  No
boundary conditions are imposed; instead the active window of valid points
shrinks by the stencil reach (4 points per RK4 step at radius 1) so that
every retained value has its full numerical dependency cone inside the
initial data.  The grid must therefore pad the lens base; the planner checks
this up front.  Starting from the initial slice the system is integrated
both forward and backward in time so that time-centered derivative stencils
of order up to the frame pad are available on every public slice.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (DataError, DegenerateNormalError, DomainError,
                     HyperbolicityError, InstabilityError, RankError)
from .geometry import (ChartFrame, Lens, TensorFieldGrid, shrink_windows)
from .regularization import CoefficientFamily, MetricFamily

N_DIM = 2


@dataclass(frozen=True)
class CauchyData:
    """Initial data on the t0 slice; u1 is the xi-directional derivative."""

    rank: tuple[int, int]
    u0: np.ndarray    # comp shape + (nx,)
    u1: np.ndarray

    def __post_init__(self):
        k, l = self.rank
        if k + l > 1:
            raise RankError("only ranks (0,0), (1,0), (0,1) are supported")
        if self.u0.shape != self.u1.shape:
            raise RankError("u0 and u1 must have matching shapes")

    @property
    def n_comp(self) -> int:
        return N_DIM ** sum(self.rank)


@dataclass(frozen=True)
class CflPlan:
    dt: float
    c_max: float
    n_sub: int
    cfl_factor: float


def cfl_timestep(metric: MetricFamily, frame: ChartFrame,
                 cfl_factor: float = 0.5) -> CflPlan:
    """Epsilon-uniform characteristic speed bound and the matching timestep.

    The speed is the largest-modulus root of g^{00} c^2 - 2 g^{01} c + g^{11}
    over every net member and every sampled grid point (the full extent, a
    superset of the lens).  dt divides the slice spacing evenly.
    """
    g00 = metric.g_inv[:, 0, 0]
    g01 = metric.g_inv[:, 0, 1]
    g11 = metric.g_inv[:, 1, 1]
    disc = g01 ** 2 - g00 * g11
    if np.any(disc <= 0):
        j, kt, ix = np.unravel_index(int(np.argmin(disc)), disc.shape)
        raise HyperbolicityError(
            f"complex characteristic roots at eps={metric.eps[j]:.4g}, "
            f"slice {kt - frame.k0}, x-index {ix}")
    root = np.sqrt(disc)
    c_max = float(np.max(np.maximum(np.abs((g01 + root) / g00),
                                    np.abs((g01 - root) / g00))))
    dt_raw = cfl_factor * frame.grid.dx / c_max
    n_sub = max(1, int(np.ceil(frame.grid.dtau / dt_raw - 1e-12)))
    return CflPlan(dt=frame.grid.dtau / n_sub, c_max=c_max, n_sub=n_sub,
                   cfl_factor=cfl_factor)


def convert_initial_data(data: CauchyData, metric: MetricFamily, j: int,
                         frame: ChartFrame) -> tuple[np.ndarray, np.ndarray]:
    """Translate (u0, nabla_xi u = u1) into (u(t0), du/dt(t0)).

    du/dt = (u1 - xi^x nabla_x u0 - xi^t (nabla_t - d_t) u0) / xi^t with
    xi = g_eps^{-1}(sigma, .).  The connection term vanishes for scalars.
    """
    xs = frame.xs
    t0 = frame.grid.t0
    g_inv0 = metric.g_inv_at(j, t0)
    xi = g_inv0[:, 0]                       # (2, nx)
    xi0 = xi[0]
    if np.any(np.abs(xi0) < 1e-12):
        ix = int(np.argmin(np.abs(xi0)))
        raise DegenerateNormalError(
            f"xi^0 vanishes at x={xs[ix]:.6g} (eps={metric.eps[j]:.4g})")
    k, l = data.rank
    u0 = np.atleast_2d(np.asarray(data.u0, float))
    u1 = np.atleast_2d(np.asarray(data.u1, float))
    du0 = np.gradient(u0, frame.grid.dx, axis=-1, edge_order=2)
    if k + l == 0:
        nabla_x = du0
        conn_t = np.zeros_like(u0)
    else:
        gam = frame.bg.christoffels(t0, xs)   # (2,2,2,nx)
        if k == 1:
            nabla_x = du0 + np.einsum("ik...,k...->i...", gam[:, 1], u0)
            conn_t = np.einsum("ik...,k...->i...", gam[:, 0], u0)
        else:
            nabla_x = du0 - np.einsum("kj...,k...->j...",
                                      gam[:, 1], u0)
            conn_t = -np.einsum("kj...,k...->j...", gam[:, 0], u0)
    ut = (u1 - xi[1] * nabla_x - xi0 * conn_t) / xi0
    shape = data.u0.shape
    return u0.reshape(shape), ut.reshape(shape)


class SolutionGrid:
    """u and v = du/dt on every extended slice, with active-window bounds."""

    def __init__(self, rank: tuple[int, int], u: np.ndarray, v: np.ndarray,
                 windows: np.ndarray, frame: ChartFrame, eps: float):
        self.rank = rank
        self.u = u
        self.v = v
        self.windows = windows
        self.frame = frame
        self.eps = eps
        self.u.setflags(write=False)
        self.v.setflags(write=False)
        self._field: TensorFieldGrid | None = None

    def as_field(self) -> TensorFieldGrid:
        if self._field is None:
            self._field = TensorFieldGrid(self.rank[0], self.rank[1], self.u,
                                          self.frame, self.windows)
        return self._field


def plan_windows(frame: ChartFrame, lens: Lens, n_sub: int,
                 stencil_radius: int = 1, m_margin: int = 0) -> np.ndarray:
    """Active windows per extended slice, checked against the lens margins.

    Each RK4 substep consumes 4*radius points per side; after |k - k0|
    slices the window has shrunk by 4*radius*n_sub*|k - k0| points.  The
    windows, further shrunk by ``m_margin`` virtual derivative orders, must
    still cover every lens slice (plus one interpolation point per side).
    """
    nx = frame.grid.nx
    n = frame.n_slices
    per_slice = 4 * stencil_radius * n_sub
    lo = np.minimum(per_slice * np.abs(np.arange(n) - frame.k0), nx)
    windows = np.stack([lo, nx - 1 - lo], axis=1).astype(int)
    shrunk, t_lo, t_hi = windows, 0, n - 1
    for _ in range(m_margin):
        shrunk, t_lo, t_hi = shrink_windows(shrunk, t_lo, t_hi,
                                            frame.stencil_radius)
    for k in range(lens.n_public):
        ke = frame.k_ext(k)
        need_lo = lens.windows[k, 0] - 1
        need_hi = lens.windows[k, 1] + 1
        if not (t_lo <= ke <= t_hi) or shrunk[ke, 0] > max(need_lo, 0) \
                or shrunk[ke, 1] < min(need_hi, nx - 1):
            raise DomainError(
                "numerical domain of dependence does not cover the lens at "
                f"slice {k}; widen the spatial extent or increase nx "
                f"(active [{shrunk[ke, 0]}, {shrunk[ke, 1]}] vs needed "
                f"[{need_lo}, {need_hi}])")
    return windows


class _RhsCache:
    """Per-epsilon coefficient assembly for the first-order reduction."""

    def __init__(self, metric: MetricFamily, coeffs: CoefficientFamily, j: int,
                 frame: ChartFrame, rank: tuple[int, int], dissipation: float):
        self.metric = metric
        self.coeffs = coeffs
        self.j = j
        self.frame = frame
        self.rank = rank
        self.n_comp = N_DIM ** sum(rank)
        self.dissipation = dissipation
        self.time_dep = (metric.time_dependent or coeffs.time_dependent
                         or _bg_time_dep(frame.bg))
        self._cache: dict | None = None

    def at(self, t: float) -> dict:
        if not self.time_dep and self._cache is not None:
            return self._cache
        out = self._assemble(t)
        if not self.time_dep:
            self._cache = out
        return out

    def _assemble(self, t: float) -> dict:
        frame, j = self.frame, self.j
        xs = frame.xs
        g_inv = self.metric.g_inv_at(j, t)       # (2,2,nx)
        B, C, F = self.coeffs.at(j, t)
        gam = frame.bg.christoffels(t, xs)        # (2,2,2,nx)
        trace = np.einsum("ab...,cab...->c...", g_inv, gam)  # g^{ab} Gamma^c_{ab}
        nc = self.n_comp
        eye = np.eye(nc)
        if nc == 1:
            m1 = (B - trace)[:, None, None, :]                  # (2,1,1,nx)
            m0 = C[None, None, :]                               # (1,1,nx)
            f = F[None, :]
        else:
            dgam = frame.bg.dchristoffels(t, xs)  # (2,2,2,2,nx): d, a, b, c
            if self.rank[0] == 1:
                m1 = (2 * np.einsum("cb...,ibk...->cik...", g_inv, gam)
                      - np.einsum("c...,ik->cik...", trace, eye) + B)
                m0 = (np.einsum("ab...,aibk...->ik...", g_inv, dgam)
                      + np.einsum("ab...,ial...,lbk...->ik...", g_inv, gam, gam)
                      - np.einsum("l...,ilk...->ik...", trace, gam)
                      + np.einsum("ail...,lak...->ik...", B, gam) + C)
            else:
                m1 = (-2 * np.einsum("cb...,kbj...->ckj...", g_inv, gam)
                      - np.einsum("c...,kj->ckj...", trace, eye) + B)
                m0 = (-np.einsum("ab...,akbj...->kj...", g_inv, dgam)
                      + np.einsum("c...,kcj...->kj...", trace, gam)
                      + np.einsum("ab...,kaj...,lbk...->lj...", g_inv, gam, gam)
                      - np.einsum("akj...,lak...->lj...", B, gam))
                m0 = m0 + C
                m0 = np.einsum("kj...->jk...", m0)   # act on components via row j
                m1 = np.einsum("ckj...->cjk...", m1)
            f = F.reshape(nc, -1)
            m1 = m1.reshape(2, nc, nc, -1)
            m0 = m0.reshape(nc, nc, -1)
        return {"g00": g_inv[0, 0], "g01": g_inv[0, 1], "g11": g_inv[1, 1],
                "m1": m1, "m0": m0, "f": f}


def _bg_time_dep(bg) -> bool:
    # constant-component backgrounds evaluate identically at all t; probing
    # two times is cheap and avoids trusting labels
    x_probe = np.array([0.0, 0.5])
    a = bg.metric(0.0, x_probe)
    b = bg.metric(0.37, x_probe)
    return not np.array_equal(a, b)


def _rhs(U, V, coef, lo, hi, dx, radius, dissipation):
    """Time derivative of (U, V) on [lo+radius, hi-radius]; zeros elsewhere."""
    nc, nx = U.shape
    dU = np.zeros_like(U)
    dV = np.zeros_like(V)
    s = slice(lo + radius, hi - radius + 1)
    i = np.arange(lo + radius, hi - radius + 1)
    Ux = (U[:, i + 1] - U[:, i - 1]) / (2 * dx)
    Uxx = (U[:, i + 1] - 2 * U[:, i] + U[:, i - 1]) / (dx * dx)
    Vx = (V[:, i + 1] - V[:, i - 1]) / (2 * dx)
    g00 = coef["g00"][i]
    g01 = coef["g01"][i]
    g11 = coef["g11"][i]
    m1 = coef["m1"][..., i]
    m0 = coef["m0"][..., i]
    f = coef["f"][:, i]
    low = (np.einsum("ik...,k...->i...", m1[0], V[:, i])
           + np.einsum("ik...,k...->i...", m1[1], Ux)
           + np.einsum("ik...,k...->i...", m0, U[:, i]))
    dV[:, s] = (f - 2 * g01 * Vx - g11 * Uxx - low) / g00
    dU[:, s] = V[:, s]
    if dissipation > 0:
        # fourth-difference Kreiss-Oliger damping; requires radius >= 2
        for arr, darr in ((U, dU), (V, dV)):
            d4 = (arr[:, i + 2] - 4 * arr[:, i + 1] + 6 * arr[:, i]
                  - 4 * arr[:, i - 1] + arr[:, i - 2])
            darr[:, s] -= dissipation / (16.0 * dx) * d4
    return dU, dV


def solve_one(metric: MetricFamily, coeffs: CoefficientFamily, j: int,
              data: CauchyData, lens: Lens, frame: ChartFrame,
              cfl: CflPlan | None = None, dissipation: float = 0.0) -> SolutionGrid:
    """Integrate one net member over all extended slices."""
    if cfl is None:
        cfl = cfl_timestep(metric, frame)
    radius = 2 if dissipation > 0 else 1
    radius = max(radius, frame.stencil_radius)
    windows = plan_windows(frame, lens, cfl.n_sub, radius,
                           m_margin=frame.pad)
    nc = data.n_comp
    nx = frame.grid.nx
    n_slices = frame.n_slices
    u0, v0 = convert_initial_data(data, metric, j, frame)
    u0 = u0.reshape(nc, nx)
    v0 = v0.reshape(nc, nx)
    u_out = np.full((nc, n_slices, nx), np.nan)
    v_out = np.full((nc, n_slices, nx), np.nan)
    rhs_coef = _RhsCache(metric, coeffs, j, frame, data.rank, dissipation)
    dx = frame.grid.dx

    def mask(U, V, lo, hi):
        U[:, :lo] = np.nan
        U[:, hi + 1:] = np.nan
        V[:, :lo] = np.nan
        V[:, hi + 1:] = np.nan

    def record(k_ext, U, V):
        u_out[:, k_ext] = U
        v_out[:, k_ext] = V

    def march(direction: int, k_stop: int):
        U, V = u0.copy(), v0.copy()
        lo, hi = 0, nx - 1
        t = frame.grid.t0
        dt = direction * cfl.dt
        k = frame.k0
        step = 0
        while k != k_stop:
            for _ in range(cfl.n_sub):
                k1u, k1v = _rhs(U, V, rhs_coef.at(t), lo, hi, dx, radius,
                                dissipation)
                k2u, k2v = _rhs(U + 0.5 * dt * k1u, V + 0.5 * dt * k1v,
                                rhs_coef.at(t + 0.5 * dt), lo + radius,
                                hi - radius, dx, radius, dissipation)
                k3u, k3v = _rhs(U + 0.5 * dt * k2u, V + 0.5 * dt * k2v,
                                rhs_coef.at(t + 0.5 * dt), lo + 2 * radius,
                                hi - 2 * radius, dx, radius, dissipation)
                k4u, k4v = _rhs(U + dt * k3u, V + dt * k3v,
                                rhs_coef.at(t + dt), lo + 3 * radius,
                                hi - 3 * radius, dx, radius, dissipation)
                U = U + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
                V = V + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
                lo += 4 * radius
                hi -= 4 * radius
                mask(U, V, lo, hi)
                t += dt
                step += 1
                if not np.all(np.isfinite(U[:, lo:hi + 1])) or \
                        not np.all(np.isfinite(V[:, lo:hi + 1])):
                    raise InstabilityError(
                        f"non-finite values at substep {step} "
                        f"(t={t:.6g}, eps={metric.eps[j]:.4g})")
            k += direction
            record(k, U, V)

    record(frame.k0, u0, v0)
    march(+1, n_slices - 1)
    march(-1, 0)

    comp_shape = (N_DIM,) * sum(data.rank)
    return SolutionGrid(data.rank, u_out.reshape(comp_shape + (n_slices, nx)),
                        v_out.reshape(comp_shape + (n_slices, nx)),
                        windows, frame, float(metric.eps[j]))


def solve_family(metric: MetricFamily, coeffs: CoefficientFamily,
                 data: CauchyData | list[CauchyData], lens: Lens,
                 frame: ChartFrame, cfl: CflPlan | None = None,
                 dissipation: float = 0.0,
                 workers: int = 1) -> list[SolutionGrid]:
    """Solve every net member; results are keyed by net order and do not
    depend on execution order.  ``data`` may be shared or given per member."""
    if cfl is None:
        cfl = cfl_timestep(metric, frame)
    per_eps = list(data) if isinstance(data, (list, tuple)) \
        else [data] * metric.count
    if len(per_eps) != metric.count:
        raise DataError("need one CauchyData per net member")

    def run(j: int) -> SolutionGrid:
        return solve_one(metric, coeffs, j, per_eps[j], lens, frame, cfl,
                         dissipation)

    indices = range(metric.count)
    if workers <= 1:
        return [run(j) for j in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, indices))
