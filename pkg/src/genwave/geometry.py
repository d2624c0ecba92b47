"""Grids, smooth background geometry, tensor fields, and the lens domain.

The chart is fixed: coordinates (t, x) with the slice function h(t, x) = t,
so slices are {t = tau} and sigma = dt has components (1, 0).  The smooth
background metric ghat supplies the connection (Christoffel symbols), the
volume densities sqrt|det ghat| and sqrt(q) (induced slice density), and the
norm sigma_n = (-ghat^{-1}(sigma, sigma))^{1/2}.

Tensor fields live on a (slice-time x space) grid.  Covariant derivatives
are built from central differences plus Christoffel corrections; validity
windows shrink by the stencil radius per derivative order, and values
outside the valid window are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as _expr
from .errors import DomainError, GeometryError, RankError, StencilError

N_DIM = 2

# step for differentiating closed-form metric components; cbrt(eps)-scaled
_FD_METRIC_STEP = 6.0e-6
# coarser step for second-level derivatives (of Christoffel symbols)
_FD_GAMMA_STEP = 1.0e-4


@dataclass(frozen=True)
class GridSpec:
    """Rectangular chart grid: space [x_min, x_max] x slice times [t0, t_max]."""

    x_min: float
    x_max: float
    nx: int
    t0: float
    t_max: float
    nt: int

    def __post_init__(self):
        if self.nx < 8:
            raise DomainError(f"nx must be >= 8, got {self.nx}")
        if self.nt < 2:
            raise DomainError(f"nt must be >= 2, got {self.nt}")
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        if not self.t_max > self.t0:
            raise DomainError("t_max must exceed t0")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dtau(self) -> float:
        return (self.t_max - self.t0) / self.nt

    @property
    def gamma(self) -> float:
        return self.t_max - self.t0


def _const_component(c: float) -> Callable:
    def f(t, x):
        shape = np.broadcast(np.asarray(t, float), np.asarray(x, float)).shape
        return np.full(shape, float(c))
    return f


@dataclass(frozen=True)
class BackgroundGeometry:
    """Smooth Lorentzian background ghat given by closed-form components.

    Components are callables of (t, x) supporting numpy broadcasting and
    return the covariant entries ghat_tt, ghat_tx, ghat_xx with signature
    (-, +).  Christoffel symbols are obtained from central differences of
    the components; for constant components the differences vanish exactly,
    so flat backgrounds have bitwise-zero symbols.
    """

    f_tt: Callable
    f_tx: Callable
    f_xx: Callable
    label: str = "custom"

    @staticmethod
    def minkowski() -> "BackgroundGeometry":
        return BackgroundGeometry(
            _const_component(-1.0), _const_component(0.0), _const_component(1.0),
            label="minkowski")

    @staticmethod
    def conformal(phi) -> "BackgroundGeometry":
        """ghat = exp(2*phi(t,x)) * eta for an expression phi."""
        tree = _expr.parse_expr(phi) if isinstance(phi, str) else phi
        bad = _expr.variables(tree) - {"t", "x"}
        if bad:
            raise GeometryError(f"phi may only use t and x, found {sorted(bad)}")

        def factor(t, x):
            val = _expr.eval_expr(tree, _expr.Bindings(t=np.asarray(t, float),
                                                       x=np.asarray(x, float)))
            return np.exp(2.0 * np.asarray(val, float))

        return BackgroundGeometry(
            lambda t, x: -factor(t, x), _const_component(0.0), factor,
            label="conformal")

    def metric(self, t, x) -> np.ndarray:
        """Covariant components, shape (2, 2) + broadcast(t, x)."""
        tt = np.asarray(self.f_tt(t, x), float)
        tx = np.asarray(self.f_tx(t, x), float)
        xx = np.asarray(self.f_xx(t, x), float)
        grid_shape = np.broadcast(np.asarray(t, float), np.asarray(x, float)).shape
        shape = np.broadcast_shapes(grid_shape, tt.shape, tx.shape, xx.shape)
        out = np.empty((2, 2) + shape)
        out[0, 0] = tt
        out[0, 1] = tx
        out[1, 0] = tx
        out[1, 1] = xx
        return out

    def metric_det(self, t, x) -> np.ndarray:
        g = self.metric(t, x)
        return g[0, 0] * g[1, 1] - g[0, 1] ** 2

    def metric_inv(self, t, x) -> np.ndarray:
        g = self.metric(t, x)
        det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        out = np.empty_like(g)
        out[0, 0] = g[1, 1] / det
        out[1, 1] = g[0, 0] / det
        out[0, 1] = -g[0, 1] / det
        out[1, 0] = out[0, 1]
        return out

    def christoffels(self, t, x) -> np.ndarray:
        """Gamma^a_{bc} on broadcast(t, x); shape (2, 2, 2) + grid shape."""
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        det = self.metric_det(t, x)
        if np.any(np.abs(det) < 1e-14):
            idx = np.unravel_index(int(np.argmin(np.abs(det))), np.shape(det))
            raise GeometryError(f"degenerate background metric at grid index {idx}")
        ht = _FD_METRIC_STEP * max(1.0, float(np.max(np.abs(t))) if t.size else 1.0)
        hx = _FD_METRIC_STEP * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        dg = np.empty((2, 2, 2) + np.broadcast(t, x).shape)
        dg[0] = (self.metric(t + ht, x) - self.metric(t - ht, x)) / (2 * ht)
        dg[1] = (self.metric(t, x + hx) - self.metric(t, x - hx)) / (2 * hx)
        ginv = self.metric_inv(t, x)
        # Gamma^a_{bc} = 1/2 g^{ad} (d_b g_{dc} + d_c g_{bd} - d_d g_{bc})
        sym = (np.einsum("bdc...->dbc...", dg) + np.einsum("cbd...->dbc...", dg) - dg)
        return 0.5 * np.einsum("ad...,dbc...->abc...", ginv, sym)

    def dchristoffels(self, t, x) -> np.ndarray:
        """d_d Gamma^a_{bc}; shape (2, 2, 2, 2) + grid shape, first axis is d."""
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        h = _FD_GAMMA_STEP
        out = np.empty((2, 2, 2, 2) + np.broadcast(t, x).shape)
        out[0] = (self.christoffels(t + h, x) - self.christoffels(t - h, x)) / (2 * h)
        out[1] = (self.christoffels(t, x + h) - self.christoffels(t, x - h)) / (2 * h)
        return out


def christoffels(bg: BackgroundGeometry, t, x) -> np.ndarray:
    """Christoffel symbols of the background at the given points."""
    return bg.christoffels(t, x)


@dataclass(frozen=True)
class RiemannianBackground:
    """Constant Riemannian metric used for pointwise tensor norms."""

    m: np.ndarray = field(default_factory=lambda: np.eye(N_DIM))

    def __post_init__(self):
        m = np.asarray(self.m, float)
        if m.shape != (N_DIM, N_DIM) or not np.allclose(m, m.T):
            raise GeometryError("m must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(m) <= 0):
            raise GeometryError("m must be positive definite")
        object.__setattr__(self, "m", m)

    @property
    def is_euclidean(self) -> bool:
        return bool(np.array_equal(self.m, np.eye(N_DIM)))

    @property
    def m_inv(self) -> np.ndarray:
        return np.linalg.inv(self.m)


@dataclass(frozen=True)
class Foliation:
    """h(t,x) = t: sigma = dt with components (1, 0), unit normal sigma-hat.

    sigma_norm and shat_t are grids on the frame's (slice-time x space) nodes.
    """

    sigma: np.ndarray          # covector components (1, 0)
    sigma_norm: np.ndarray     # (-ghat^{-1}(sigma, sigma))^{1/2} on the grid
    shat: np.ndarray           # sigma / sigma_norm, shape (2,) + grid

    def __post_init__(self):
        if np.any(self.sigma_norm <= 0):
            raise GeometryError("sigma must be ghat-timelike on the grid")


@dataclass(frozen=True)
class ChartFrame:
    """Grid plus all background quantities sampled on extended slice times.

    Slice times run from t0 - pad*dtau to t_max + pad*dtau so that
    time-centered stencils of order up to ``pad`` stay inside the sampled
    range for every public slice in [t0, t_max].  ``k0`` is the index of the
    t0 slice; public slice k corresponds to extended index k + k0.
    """

    grid: GridSpec
    bg: BackgroundGeometry
    m_bg: RiemannianBackground
    pad: int
    fd_order: int
    taus: np.ndarray           # extended slice times, shape (n_slices,)
    xs: np.ndarray
    k0: int
    gbar: np.ndarray           # covariant ghat, (2,2,T,X)
    gbar_inv: np.ndarray
    sqrt_det: np.ndarray       # sqrt|det ghat|, (T,X)
    sqrt_q: np.ndarray         # sqrt(ghat_xx), (T,X)
    gamma_sym: np.ndarray      # Christoffels, (2,2,2,T,X)
    foliation: Foliation

    @property
    def n_slices(self) -> int:
        return self.taus.size

    @property
    def stencil_radius(self) -> int:
        return self.fd_order // 2

    def k_ext(self, k_public: int) -> int:
        return k_public + self.k0


def build_frame(grid: GridSpec, bg: BackgroundGeometry,
                m_bg: RiemannianBackground | None = None,
                pad: int = 3, fd_order: int = 2) -> ChartFrame:
    """Sample the background on the padded slice-time grid."""
    if fd_order not in (2, 4):
        raise DomainError(f"fd_order must be 2 or 4, got {fd_order}")
    m_bg = m_bg if m_bg is not None else RiemannianBackground()
    dtau = grid.dtau
    taus = grid.t0 + dtau * np.arange(-pad, grid.nt + pad + 1)
    xs = grid.xs
    tg = taus[:, None]
    xg = xs[None, :]
    gbar = bg.metric(tg, xg)
    det = gbar[0, 0] * gbar[1, 1] - gbar[0, 1] ** 2
    if np.any(det >= 0):
        idx = np.unravel_index(int(np.argmax(det)), det.shape)
        raise GeometryError(f"background is not Lorentzian at grid index {idx}")
    if np.any(gbar[1, 1] <= 0):
        raise GeometryError("induced slice metric ghat_xx must be positive")
    gbar_inv = bg.metric_inv(tg, xg)
    sqrt_det = np.sqrt(-det)
    sqrt_q = np.sqrt(gbar[1, 1])
    sigma_norm = np.sqrt(-gbar_inv[0, 0])
    unit = gbar_inv[0, 0] / sigma_norm**2
    if np.any(np.abs(unit + 1.0) > 1e-10):
        raise GeometryError("sigma-hat failed the unit-norm check")
    shat = np.zeros((2,) + sigma_norm.shape)
    shat[0] = 1.0 / sigma_norm
    fol = Foliation(sigma=np.array([1.0, 0.0]), sigma_norm=sigma_norm, shat=shat)
    gam = bg.christoffels(tg, xg)
    return ChartFrame(grid=grid, bg=bg, m_bg=m_bg, pad=pad, fd_order=fd_order,
                      taus=taus, xs=xs, k0=pad, gbar=gbar, gbar_inv=gbar_inv,
                      sqrt_det=sqrt_det, sqrt_q=sqrt_q, gamma_sym=gam,
                      foliation=fol)


def full_windows(frame: ChartFrame) -> np.ndarray:
    w = np.zeros((frame.n_slices, 2), dtype=int)
    w[:, 1] = frame.grid.nx - 1
    return w


class TensorFieldGrid:
    """Samples of a rank-(k, l) tensor field on the frame grid.

    ``values`` has shape (2,)*(k+l) + (n_slices, nx) with upper component
    axes first.  ``windows[k] = (lo, hi)`` is the inclusive range of valid
    x-indices on slice k (lo > hi means empty); entries outside windows are
    NaN.  ``t_lo``/``t_hi`` bound the valid slice range.  Derivative stacks
    are cached per order; the order-j stack is a rank-(k, l+j) array with j
    leading derivative axes, outermost derivative first.
    """

    def __init__(self, n_upper: int, n_lower: int, values: np.ndarray,
                 frame: ChartFrame, windows: np.ndarray | None = None,
                 t_lo: int = 0, t_hi: int | None = None):
        if n_upper + n_lower > 1:
            raise RankError(f"field rank ({n_upper},{n_lower}) not supported; k+l <= 1")
        self.n_upper = n_upper
        self.n_lower = n_lower
        self.frame = frame
        exp_shape = (N_DIM,) * (n_upper + n_lower) + (frame.n_slices, frame.grid.nx)
        values = np.asarray(values, float)
        if values.shape != exp_shape:
            raise RankError(f"values shape {values.shape} != expected {exp_shape}")
        self.values = values
        self.windows = (full_windows(frame) if windows is None
                        else np.asarray(windows, dtype=int))
        self.t_lo = t_lo
        self.t_hi = frame.n_slices - 1 if t_hi is None else t_hi
        self._stack: dict[int, "_Stack"] = {}

    @property
    def rank(self) -> tuple[int, int]:
        return (self.n_upper, self.n_lower)

    def stack(self, order: int, with_connection: bool = True) -> "_Stack":
        """Derivative stack of the given order (0 = the field itself)."""
        key = order if with_connection else -order - 1
        if key not in self._stack:
            if order == 0:
                st = _Stack(self.values, self.n_upper, self.n_lower,
                            self.windows, self.t_lo, self.t_hi)
            else:
                prev = self.stack(order - 1, with_connection)
                st = _deriv_once(prev, self.frame, with_connection)
            self._stack[key] = st
        return self._stack[key]


@dataclass
class _Stack:
    """One derivative level: values with derivative axes prepended."""

    values: np.ndarray
    n_upper: int
    n_lower: int          # includes derivative indices
    windows: np.ndarray
    t_lo: int
    t_hi: int


def shrink_windows(windows: np.ndarray, t_lo: int, t_hi: int, radius: int):
    """Window arithmetic for one centered-derivative application."""
    n = windows.shape[0]
    lo = windows[:, 0].astype(int)
    hi = windows[:, 1].astype(int)
    new_lo = np.full(n, 0, dtype=int)
    new_hi = np.full(n, -1, dtype=int)
    for k in range(max(t_lo + radius, 0), min(t_hi - radius, n - 1) + 1):
        l = lo[k] + radius
        h = hi[k] - radius
        for off in range(1, radius + 1):
            l = max(l, lo[k - off], lo[k + off])
            h = min(h, hi[k - off], hi[k + off])
        new_lo[k], new_hi[k] = l, h
    return np.stack([new_lo, new_hi], axis=1), t_lo + radius, t_hi - radius


def _central_diff(vals: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    out = np.full_like(vals, np.nan)
    v = np.moveaxis(vals, axis, 0)
    o = np.moveaxis(out, axis, 0)
    if order == 2:
        o[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    else:
        o[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    return out


def _deriv_once(st: _Stack, frame: ChartFrame, with_connection: bool) -> _Stack:
    """One covariant (or plain, if with_connection=False) derivative.

    Output values have a new leading axis c: (nabla_c T)^{...}_{...}.
    """
    radius = frame.stencil_radius
    r = st.n_upper + st.n_lower
    new_windows, t_lo, t_hi = shrink_windows(st.windows, st.t_lo, st.t_hi, radius)
    if t_lo > t_hi or np.all(new_windows[:, 0] > new_windows[:, 1]):
        raise StencilError("insufficient margin for another derivative order")
    vals = st.values
    out = np.empty((N_DIM,) + vals.shape)
    out[0] = _central_diff(vals, axis=-2, h=frame.grid.dtau, order=frame.fd_order)
    out[1] = _central_diff(vals, axis=-1, h=frame.grid.dx, order=frame.fd_order)
    if with_connection and r > 0:
        gam = frame.gamma_sym
        letters = "ijklmnpq"[:r]
        for p in range(r):
            sub = letters[:p] + "d" + letters[p + 1:]
            if p < st.n_upper:
                # +Gamma^{i_p}_{c d} T^{...d...}
                term = np.einsum(f"{letters[p]}cd...,{sub}...->c{letters}...",
                                 gam, vals)
                out += term
            else:
                # -Gamma^{d}_{c i_p} T_{...d...}
                term = np.einsum(f"dc{letters[p]}...,{sub}...->c{letters}...",
                                 gam, vals)
                out -= term
    # NaN outside the shrunk validity region
    for k in range(new_windows.shape[0]):
        lo, hi = new_windows[k]
        if k < t_lo or k > t_hi or lo > hi:
            out[..., k, :] = np.nan
        else:
            out[..., k, :lo] = np.nan
            out[..., k, hi + 1:] = np.nan
    return _Stack(out, st.n_upper, st.n_lower + 1, new_windows, t_lo, t_hi)


def make_stack(values: np.ndarray, n_upper: int, n_lower: int, frame: ChartFrame,
               windows: np.ndarray | None = None, t_lo: int = 0,
               t_hi: int | None = None) -> _Stack:
    """Wrap raw grid values of any rank for derivative/norm machinery."""
    return _Stack(np.asarray(values, float), n_upper, n_lower,
                  full_windows(frame) if windows is None else windows,
                  t_lo, frame.n_slices - 1 if t_hi is None else t_hi)


def derive_stack(st: _Stack, frame: ChartFrame,
                 with_connection: bool = True) -> _Stack:
    """One (covariant) derivative applied to an arbitrary-rank stack."""
    return _deriv_once(st, frame, with_connection)


def stack_norm_sq(st: _Stack, m_bg: RiemannianBackground) -> np.ndarray:
    """Pointwise |.|^2 of a stack (derivative axes count as lower indices)."""
    return _norm_sq_values(st.values, st.n_upper, st.n_lower, m_bg)


def covariant_derivative(fld: TensorFieldGrid, order: int = 1) -> TensorFieldGrid:
    """j-fold covariant derivative as a new tensor field grid of rank (k, l+j).

    Provided for rank results with k+l+j <= 1 the output is again a
    TensorFieldGrid; larger ranks are reachable via ``fld.stack(order)``.
    """
    st = fld.stack(order)
    if st.n_upper + st.n_lower > 1:
        raise RankError("covariant_derivative result rank exceeds 1; use stack()")
    return TensorFieldGrid(st.n_upper, st.n_lower, st.values, fld.frame,
                           st.windows, st.t_lo, st.t_hi)


def _norm_sq_values(vals: np.ndarray, n_upper: int, n_lower: int,
                    m_bg: RiemannianBackground) -> np.ndarray:
    """|v|^2 = m^{IJ} m_{KL} v^K_I v^L_J for constant m (grid axes trail)."""
    r = n_upper + n_lower
    if r == 0:
        return vals * vals
    if m_bg.is_euclidean:
        return np.einsum(vals, list(range(vals.ndim)), vals,
                         list(range(vals.ndim)), [vals.ndim - 2, vals.ndim - 1])
    w = vals
    for p in range(r):
        mat = m_bg.m if p < n_upper else m_bg.m_inv
        w = np.moveaxis(np.tensordot(mat, np.moveaxis(w, p, 0), axes=(1, 0)), 0, p)
    return np.einsum(vals, list(range(vals.ndim)), w,
                     list(range(vals.ndim)), [vals.ndim - 2, vals.ndim - 1])


def pointwise_norm(fld: TensorFieldGrid,
                   m_bg: RiemannianBackground | None = None) -> np.ndarray:
    """Pointwise norm grid |v| (nonnegative; zero iff all components zero)."""
    m_bg = m_bg if m_bg is not None else fld.frame.m_bg
    return np.sqrt(_norm_sq_values(fld.values, fld.n_upper, fld.n_lower, m_bg))


@dataclass(frozen=True)
class Lens:
    """Shrinking slab S_tau = [a + c(tau-t0), b - c(tau-t0)] on public slices.

    ``alphas``/``betas`` are the exact slice endpoints, ``windows`` the
    inclusive index range of grid points inside each slice.
    """

    grid: GridSpec
    base: tuple[float, float]
    c_max: float
    alphas: np.ndarray
    betas: np.ndarray
    windows: np.ndarray

    @property
    def n_public(self) -> int:
        return self.grid.nt + 1

    def slice_indices(self, k: int) -> np.ndarray:
        lo, hi = self.windows[k]
        return np.arange(lo, hi + 1)


def build_lens(grid: GridSpec, c_max: float, base: tuple[float, float]) -> Lens:
    """Construct the lens; errors if it collapses before t_max."""
    a, b = float(base[0]), float(base[1])
    if c_max <= 0:
        raise DomainError("c_max must be positive")
    if a < grid.x_min or b > grid.x_max or b <= a:
        raise DomainError("base interval must sit inside the spatial extent")
    taus_rel = grid.dtau * np.arange(grid.nt + 1)
    alphas = a + c_max * taus_rel
    betas = b - c_max * taus_rel
    xs = grid.xs
    lo = np.searchsorted(xs, alphas, side="left")
    hi = np.searchsorted(xs, betas, side="right") - 1
    counts = hi - lo + 1
    if np.any(counts < 4):
        gamma_max = (b - a - 4 * grid.dx) / (2 * c_max)
        k_bad = int(np.argmax(counts < 4))
        raise DomainError(
            f"lens collapses at tau={grid.t0 + taus_rel[k_bad]:.6g}; "
            f"maximal admissible t_max is about {grid.t0 + gamma_max:.6g}")
    return Lens(grid=grid, base=(a, b), c_max=c_max, alphas=alphas, betas=betas,
                windows=np.stack([lo, hi], axis=1))
