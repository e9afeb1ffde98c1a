"""Error budgets, residual functionals, and bound-vs-observed verdicts.

This module turns stored trajectories into the handful of numbers a
stability bound needs.  The budget side evaluates five error terms:

* ``E_v``: a ball-averaged modulus of the reference field, weighted by
  the regularity constants of the flux,
* ``E_f``: an inhomogeneity term proportional to the supremal leaf
  length,
* ``E_H``, ``E_K``, ``E_L``: sums of the structural error measures an
  approximation run leaves behind,

and the residual side evaluates the three form residuals ``R_v``,
``R_omega``, ``R_alpha`` that control how far a candidate field is from
solving the balance law weakly.  On top of the terms sit the
calibration and optimization helpers (``optimize_delta``,
``bound_report``, ``calibrate_constant``) and the higher-level checks
(contraction of the solver map, the BV modulus plateau, flux
comparison, and vanishing-diffusion bounds).

Quadrature conventions shared by every double-sum term
------------------------------------------------------

* Ball nodes come from :func:`slicelab.geometry.geodesic_ball` on a
  uniform local grid of step ``grid_step`` (default ``delta / 32``);
  member nodes outside the stored time window of the trajectory are
  discarded and the average is renormalized over the kept nodes (the
  window test carries a 1e-12 slack on both ends).
* A queried point ``(t, x)`` reads the trajectory at the nearest stored
  slice (ties resolve to the earlier slice) and at the mesh cell
  containing ``x`` wrapped into ``[0, L)``.
* Time suprema and time integrals run over ``n_times`` sampled stored
  slices, ``unique(round(linspace(0, m - 1, n_times)))``, so the first
  and last slices always participate; time integrals use trapezoid
  weights on the sampled times.  ``n_times=None`` means every stored
  slice.
* When the metric functions are x-independent (bitwise, probed by
  evaluating at shifted abscissas), one ball per sampled time is built
  at the reference abscissa ``x = L / 2`` and translated to each cell
  center; otherwise every cell gets its own ball.

The ``brute=True`` switches re-evaluate the double sums as explicit
loops over cells and ball nodes with compensated accumulation.  They
share the node sets and the per-node factors with the fast paths, so
the two agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from slicelab.errors import (
    ConfigError,
    MeshMismatchError,
    NumericalError,
)
from slicelab.flux import (
    FluxField,
    FormFlux,
    check_geometry_compatible,
    divergence,
    flux_gap,
    form_from_vector,
    hyperbolicity_constants,
)
from slicelab.geometry import Point, Spacetime1p1, geodesic_ball
from slicelab.solver import (
    ErrorMeasures,
    FluxPerturbationFamily,
    SchemeConfig,
    SliceField,
    Trajectory,
    evolve_hyperbolic,
    extract_error_measures,
    l1_flux_distance,
    total_variation,
)

__all__ = [
    "BVModulusReport",
    "BoundReport",
    "ContractionReport",
    "DeltaOptimum",
    "DiffusionReport",
    "ErrorBudget",
    "FluxComparisonReport",
    "RTerms",
    "bound_report",
    "bv_modulus_check",
    "calibrate_constant",
    "contraction_check",
    "diffusion_bounds",
    "error_budget",
    "flux_comparison_bounds",
    "forms_R_terms",
    "inhomogeneity_term_Ef",
    "modulus_inner_at",
    "modulus_sup_integral",
    "modulus_term_Ev",
    "optimize_delta",
    "residual_terms",
    "round_up_sigfig",
]

_WINDOW_SLACK = 1e-12


# ---------------------------------------------------------------------------
# shared sampling rules


def _as_lambda_tuple(lambdas) -> tuple[float, float, float, float]:
    if hasattr(lambdas, "as_tuple"):
        vals = tuple(float(v) for v in lambdas.as_tuple())
    else:
        vals = tuple(float(v) for v in lambdas)
    if len(vals) != 4:
        raise ConfigError(f"need four regularity constants, got {len(vals)}")
    if any(not math.isfinite(v) or v < 0.0 for v in vals):
        raise NumericalError(f"regularity constants must be finite and >= 0: {vals}")
    return vals


def _sampled_indices(m: int, n_times) -> np.ndarray:
    """Indices of the sampled stored slices; endpoints always included."""
    if n_times is None or n_times >= m:
        return np.arange(m)
    k = int(n_times)
    if k < 2:
        raise ConfigError("time sampling needs at least two slices")
    return np.unique(np.round(np.linspace(0, m - 1, k)).astype(int))


def _trap_weights(ts: np.ndarray) -> np.ndarray:
    w = np.zeros_like(np.asarray(ts, dtype=float))
    g = np.diff(ts)
    w[:-1] += 0.5 * g
    w[1:] += 0.5 * g
    return w


class _TrajView:
    """Array view of a trajectory plus the point-lookup rules."""

    def __init__(self, traj: Trajectory):
        if len(traj.slices) < 1:
            raise ConfigError("trajectory holds no slices")
        self.times = np.asarray(traj.times, dtype=float)
        self.U = np.stack([s.values for s in traj.slices])
        mesh = traj.slices[0].mesh
        self.mesh = mesh
        self.n = mesh.n_cells
        self.dx = mesh.dx
        self.L = mesh.leaf_length
        self.centers = mesh.centers

    def nearest(self, tq):
        """Nearest stored slice index; ties resolve to the earlier slice."""
        i = np.searchsorted(self.times, tq)
        i = np.clip(i, 1, len(self.times) - 1)
        left = self.times[i - 1]
        right = self.times[i]
        return np.where(tq - left <= right - tq, i - 1, i)

    def cell(self, xq):
        xw = np.mod(xq, self.L)
        return np.floor(xw / self.dx).astype(int) % self.n


class _BallNodes(NamedTuple):
    tq: np.ndarray
    xq: np.ndarray
    area: float


def _ball_nodes(
    st: Spacetime1p1, t: float, x: float, delta: float, grid_step, t_lo: float, t_hi: float
) -> _BallNodes:
    """Flattened geodesic-ball nodes clipped to the stored time window."""
    ball = geodesic_ball(st, Point(float(t), float(x)), delta, grid_step=grid_step)
    tg = np.broadcast_to(ball.t_nodes[:, None], ball.mask.shape)
    xg = np.broadcast_to(ball.x_nodes[None, :], ball.mask.shape)
    keep = ball.mask & (tg >= t_lo - _WINDOW_SLACK) & (tg <= t_hi + _WINDOW_SLACK)
    if not np.any(keep):
        raise NumericalError(
            f"geodesic ball at t={t} has no nodes inside the stored window "
            f"[{t_lo}, {t_hi}]"
        )
    return _BallNodes(
        tq=np.ascontiguousarray(tg[keep], dtype=float),
        xq=np.ascontiguousarray(xg[keep], dtype=float),
        area=float(ball.grid_step_t * ball.grid_step_x),
    )


def _x_independent_weight(fn: Callable, tq: np.ndarray, xq: np.ndarray, L: float):
    """Return the weight array when ``fn`` provably ignores x, else None.

    The probe demands bitwise equality under a shift of the abscissas, so
    a positive answer lets one evaluation stand in for all translated
    copies without changing a single bit of the result.
    """
    w0 = np.asarray(fn(tq, xq), dtype=float)
    w0 = np.broadcast_to(w0, tq.shape)
    w1 = np.asarray(fn(tq, np.mod(xq + 0.37 * L, L)), dtype=float)
    w1 = np.broadcast_to(w1, tq.shape)
    if np.array_equal(w0, w1):
        return np.ascontiguousarray(w0)
    return None


# ---------------------------------------------------------------------------
# E_v: ball-averaged modulus of the field


def _inner_means(
    view: _TrajView,
    st: Spacetime1p1,
    k: int,
    delta: float,
    grid_step,
    weight_fn: Callable,
    brute: bool,
) -> np.ndarray:
    """Per-cell weighted ball averages of |v_p - v_q| at stored slice k.

    ``weight_fn(t, x)`` supplies the non-negative node density; the
    average divides by the summed weights of the same node set.
    """
    tk = float(view.times[k])
    t_lo = float(view.times[0])
    t_hi = float(view.times[-1])
    step = delta / 32.0 if grid_step is None else float(grid_step)
    vp = view.U[k]

    x_ref = 0.5 * view.L
    nodes = _ball_nodes(st, tk, x_ref, delta, step, t_lo, t_hi)
    offs = nodes.xq - x_ref
    it = view.nearest(nodes.tq)
    xs = np.mod(view.centers[:, None] + offs[None, :], view.L)
    shared_w = _x_independent_weight(weight_fn, nodes.tq, nodes.xq, view.L)

    if not brute:
        ix = view.cell(xs)
        vq = view.U[it[None, :], ix]
        diff = np.abs(vp[:, None] - vq)
        if shared_w is not None:
            den = float(np.sum(shared_w))
            if den <= 0.0:
                raise NumericalError("ball carries no positive reference volume")
            return diff @ shared_w / den
        w = np.asarray(weight_fn(nodes.tq[None, :], xs), dtype=float)
        w = np.broadcast_to(w, diff.shape)
        den = np.sum(w, axis=1)
        if np.any(den <= 0.0):
            raise NumericalError("ball carries no positive reference volume")
        return np.sum(diff * w, axis=1) / den

    times = view.times
    U = view.U
    out = np.empty(view.n)
    nq = len(nodes.tq)
    for j in range(view.n):
        num_terms = []
        den_terms = []
        vpj = float(vp[j])
        for q in range(nq):
            xsq = float(xs[j, q])
            if shared_w is not None:
                wq = float(shared_w[q])
            else:
                wq = float(weight_fn(float(nodes.tq[q]), xsq))
            vq = float(U[int(it[q]), int(view.cell(xsq))])
            num_terms.append(abs(vpj - vq) * wq)
            den_terms.append(wq)
        den = math.fsum(den_terms)
        if den <= 0.0:
            raise NumericalError("ball carries no positive reference volume")
        out[j] = math.fsum(num_terms) / den
    return out


def _leaf_integral(view: _TrajView, st: Spacetime1p1, k: int, values: np.ndarray) -> float:
    """Integral of a per-cell density over the leaf, measure a dx."""
    tk = float(view.times[k])
    a = np.broadcast_to(np.asarray(st.a(tk, view.centers), dtype=float), (view.n,))
    return float(np.sum(values * a) * view.dx)


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not math.isfinite(delta) or delta <= 0.0:
        raise ConfigError(f"ball radius must be positive and finite, got {delta}")
    return delta


def modulus_inner_at(
    traj: Trajectory,
    delta: float,
    st: Spacetime1p1,
    t: float,
    *,
    grid_step=None,
    brute: bool = False,
) -> np.ndarray:
    """Per-cell ball averages of |v_p - v_q| at the slice nearest to t."""
    delta = _check_delta(delta)
    view = _TrajView(traj)
    k = int(view.nearest(float(t)))
    return _inner_means(view, st, k, delta, grid_step, st.density, brute)


def modulus_sup_integral(
    traj: Trajectory,
    delta: float,
    st: Spacetime1p1,
    *,
    n_times: int | None = 16,
    grid_step=None,
    brute: bool = False,
) -> float:
    """sup over sampled slices of the leaf integral of the ball modulus.

    Inner average against the volume density lam * a, outer leaf measure
    a dx, supremum over the sampled stored slices.
    """
    delta = _check_delta(delta)
    view = _TrajView(traj)
    idx = _sampled_indices(len(view.times), n_times)
    best = 0.0
    for k in idx:
        inner = _inner_means(view, st, int(k), delta, grid_step, st.density, brute)
        best = max(best, _leaf_integral(view, st, int(k), inner))
    return best


def modulus_term_Ev(
    traj: Trajectory,
    delta: float,
    lambdas,
    T: float,
    st: Spacetime1p1,
    *,
    n_times: int | None = 16,
    grid_step=None,
    brute: bool = False,
) -> float:
    """Modulus term: (T lam1 + T lam3 + lam0) times the sup integral."""
    lam0, lam1, _, lam3 = _as_lambda_tuple(lambdas)
    T = float(T)
    if T <= 0.0:
        raise ConfigError(f"time horizon must be positive, got {T}")
    pref = T * lam1 + T * lam3 + lam0
    return pref * modulus_sup_integral(
        traj, delta, st, n_times=n_times, grid_step=grid_step, brute=brute
    )


# ---------------------------------------------------------------------------
# E_f: inhomogeneity term


def inhomogeneity_term_Ef(
    st: Spacetime1p1,
    lambdas,
    T: float,
    delta: float,
    *,
    t0: float = 0.0,
    n_t: int = 129,
    n_x: int = 256,
) -> float:
    """Inhomogeneity term T * sup_t |H_t| * delta * lam2.

    |H_t| is the leaf length in the companion metric, the integral of
    ``a`` over the circle; the supremum scans an even time grid over the
    window (endpoints included).  A flux whose divergence constant lam2
    vanishes pays exactly nothing here.
    """
    lam2 = _as_lambda_tuple(lambdas)[2]
    if lam2 == 0.0:
        return 0.0
    delta = _check_delta(delta)
    T = float(T)
    if T <= 0.0:
        raise ConfigError(f"time horizon must be positive, got {T}")
    if not (st.contains_t(t0) and st.contains_t(t0 + T)):
        raise ConfigError(
            f"window [{t0}, {t0 + T}] leaves the foliation range "
            f"[{st.t_min}, {st.t_max}]"
        )
    ts = np.linspace(t0, t0 + T, n_t)
    dxs = st.leaf_length / n_x
    xs = (np.arange(n_x) + 0.5) * dxs
    a = np.broadcast_to(
        np.asarray(st.a(ts[:, None], xs[None, :]), dtype=float), (n_t, n_x)
    )
    sup_len = float(np.max(np.sum(a, axis=1) * dxs))
    return T * sup_len * delta * lam2


# ---------------------------------------------------------------------------
# E_H, E_K, E_L: residual measures


def residual_terms(
    measures: ErrorMeasures, delta: float, T: float, st: Spacetime1p1
) -> tuple[float, float, float]:
    """The three measure-driven terms (E_H, E_K, E_L).

    E_H = boundary mass of alpha_H plus (1/delta) times its time
    integral; E_K is the plain spacetime mass of alpha_K (rows carry
    mass per unit time on the gaps); E_L = (1/delta^2) times the time
    integral of alpha_L weighted by alpha_a.
    """
    delta = _check_delta(delta)
    T = float(T)
    for name in ("alpha_H", "alpha_K", "alpha_L", "alpha_a"):
        arr = getattr(measures, name)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"{name} contains non-finite entries")
        if name != "alpha_a" and np.any(arr < 0.0):
            raise NumericalError(f"{name} must be a non-negative density")
    span = float(measures.times[-1] - measures.times[0])
    if abs(span - T) > 1e-8 * max(1.0, abs(T)):
        raise ConfigError(f"measures span {span} but the stated horizon is {T}")
    if not (st.contains_t(float(measures.times[0])) and st.contains_t(float(measures.times[-1]))):
        raise ConfigError("measured window leaves the foliation range")

    row_H = np.sum(measures.alpha_H, axis=1)
    e_h = float(np.sum(measures.alpha_H[0]) + np.sum(measures.alpha_H[-1])) + float(
        np.sum(measures.dt_weights * row_H)
    ) / delta
    row_K = np.sum(measures.alpha_K[:-1], axis=1)
    e_k = float(np.sum(measures.gaps * row_K))
    row_L = np.sum(measures.alpha_L * measures.alpha_a, axis=1)
    e_l = float(np.sum(measures.dt_weights * row_L)) / delta**2
    return e_h, e_k, e_l


# ---------------------------------------------------------------------------
# form residuals R_v, R_omega, R_alpha


class RTerms(NamedTuple):
    """The three weak-form residuals of a candidate field."""

    R_v: float
    R_omega: float
    R_alpha: float


def _abar_fn(w: FormFlux) -> Callable:
    """Reference area density: du of the spatial form component at u = 0."""

    def abar(t, x):
        return np.asarray(w.du_omega_x(0.0, t, x), dtype=float)

    return abar


class _BallCtx:
    """One slice's ball nodes with the lookup indices both residuals share."""

    def __init__(self, view: _TrajView, st: Spacetime1p1, k: int, delta: float, step: float):
        self.k = int(k)
        self.tk = float(view.times[k])
        self.nodes = _ball_nodes(
            st,
            self.tk,
            0.5 * view.L,
            delta,
            step,
            float(view.times[0]),
            float(view.times[-1]),
        )
        offs = self.nodes.xq - 0.5 * view.L
        self.it = view.nearest(self.nodes.tq)
        self.xs = np.mod(view.centers[:, None] + offs[None, :], view.L)


def _rv_at(
    view: _TrajView,
    st: Spacetime1p1,
    w: FormFlux,
    ctx: _BallCtx,
    A: float,
    c_high: float,
    T: float,
    u_grid: np.ndarray,
    brute: bool,
) -> float:
    """Leaf integral of the normalized B-weighted modulus at one slice.

    B carries the admissibility and speed constants against the
    reference density plus T times the supremal state-derivative of the
    form differential on the u grid.
    """
    k = ctx.k
    tk = ctx.tk
    vp = view.U[k]
    nodes = ctx.nodes
    it = ctx.it
    xs = ctx.xs
    abar = _abar_fn(w)

    def bdens_fn(t, x):
        base = np.asarray(abar(t, x), dtype=float)
        shape = np.broadcast_shapes(np.shape(t), np.shape(x))
        du = np.abs(
            np.asarray(
                w.du_d_omega_density(
                    u_grid.reshape((-1,) + (1,) * len(shape)), t, x
                ),
                dtype=float,
            )
        )
        du = np.broadcast_to(du, (len(u_grid),) + shape)
        return (2.0 * c_high + T * A) * base + T * np.max(du, axis=0)

    shared_b = _x_independent_weight(bdens_fn, nodes.tq, nodes.xq, view.L)
    shared_a = _x_independent_weight(abar, nodes.tq, nodes.xq, view.L)

    if not brute:
        ix = view.cell(xs)
        vq = view.U[it[None, :], ix]
        diff = np.abs(vp[:, None] - vq)
        if shared_b is not None and shared_a is not None:
            den = float(np.sum(shared_a))
            if den <= 0.0:
                raise NumericalError("ball carries no positive reference volume")
            inner = diff @ shared_b / den
        else:
            bv = np.broadcast_to(
                np.asarray(bdens_fn(nodes.tq[None, :], xs), dtype=float), diff.shape
            )
            av = np.broadcast_to(
                np.asarray(abar(nodes.tq[None, :], xs), dtype=float), diff.shape
            )
            den = np.sum(av, axis=1)
            if np.any(den <= 0.0):
                raise NumericalError("ball carries no positive reference volume")
            inner = np.sum(diff * bv, axis=1) / den
        return _leaf_integral(view, st, k, inner)

    inner = np.empty(view.n)
    nq = len(nodes.tq)
    for j in range(view.n):
        terms = []
        dens = []
        vpj = float(vp[j])
        for q in range(nq):
            tqq = float(nodes.tq[q])
            xsq = float(xs[j, q])
            if shared_b is not None and shared_a is not None:
                bq = float(shared_b[q])
                aq = float(shared_a[q])
            else:
                bq = float(bdens_fn(tqq, xsq))
                aq = float(abar(tqq, xsq))
            vq = float(view.U[int(it[q]), int(view.cell(xsq))])
            terms.append(abs(vpj - vq) * bq)
            dens.append(aq)
        den = math.fsum(dens)
        if den <= 0.0:
            raise NumericalError("ball carries no positive reference volume")
        inner[j] = math.fsum(terms) / den
    a = np.broadcast_to(
        np.asarray(st.a(float(view.times[k]), view.centers), dtype=float), (view.n,)
    )
    return math.fsum(float(inner[j]) * float(a[j]) for j in range(view.n)) * view.dx


def _romega_at(
    view: _TrajView,
    st: Spacetime1p1,
    w: FormFlux,
    ctx: _BallCtx,
    brute: bool,
) -> float:
    """Leaf integral at one slice of the normalized form-differential gap.

    At each cell p the ball average compares the divergence-type scalar
    G(u; z) = (form-differential density at z) / (reference density at z)
    evaluated with the sampled state but read at p and at the node q,
    each weighted by the other point's reference density:
    |G(v_q; p) abar(q) - G(v_q; q) abar(p)|.
    """
    tk = ctx.tk
    nodes = ctx.nodes
    it = ctx.it
    xs = ctx.xs
    abar = _abar_fn(w)
    shared_a = _x_independent_weight(abar, nodes.tq, nodes.xq, view.L)

    if not brute:
        ix = view.cell(xs)
        vq = view.U[it[None, :], ix]
        g_p = np.asarray(
            w.d_omega_density(vq, tk, view.centers[:, None]), dtype=float
        ) / np.broadcast_to(
            np.asarray(abar(tk, view.centers[:, None]), dtype=float), vq.shape
        )
        aq = np.broadcast_to(
            np.asarray(
                abar(nodes.tq[None, :], xs) if shared_a is None else shared_a[None, :],
                dtype=float,
            ),
            vq.shape,
        )
        g_q = np.asarray(w.d_omega_density(vq, nodes.tq[None, :], xs), dtype=float) / aq
        ap = np.broadcast_to(
            np.asarray(abar(tk, view.centers[:, None]), dtype=float), vq.shape
        )
        integrand = np.abs(g_p * aq - g_q * ap)
        den = np.sum(aq, axis=1)
        if np.any(den <= 0.0):
            raise NumericalError("ball carries no positive reference volume")
        inner = np.sum(integrand, axis=1) / den
        return float(np.sum(inner) * view.dx)

    inner = np.empty(view.n)
    nq = len(nodes.tq)
    for j in range(view.n):
        xj = float(view.centers[j])
        ap = float(abar(tk, xj))
        terms = []
        dens = []
        for q in range(nq):
            tqq = float(nodes.tq[q])
            xsq = float(xs[j, q])
            vq = float(view.U[int(it[q]), int(view.cell(xsq))])
            aq = float(shared_a[q]) if shared_a is not None else float(abar(tqq, xsq))
            g_p = float(w.d_omega_density(vq, tk, xj)) / ap
            g_q = float(w.d_omega_density(vq, tqq, xsq)) / aq
            terms.append(abs(g_p * aq - g_q * ap))
            dens.append(aq)
        den = math.fsum(dens)
        if den <= 0.0:
            raise NumericalError("ball carries no positive reference volume")
        inner[j] = math.fsum(terms) / den
    return math.fsum(float(v) for v in inner) * view.dx


def _alpha_H_locations(measures: ErrorMeasures, view: _TrajView) -> np.ndarray:
    """Leaf abscissas carrying the alpha_H entries.

    Viscosity runs store jump masses that live on the cell interfaces
    (the right face of each cell); perturbation runs store cell-centered
    masses.
    """
    if measures.kind == "viscosity":
        return np.roll(view.mesh.faces, -1)
    return view.centers


def forms_R_terms(
    traj: Trajectory,
    f: FluxField,
    st: Spacetime1p1,
    delta: float,
    *,
    A: float | None,
    c_high: float | None,
    b: float | None = None,
    measures: ErrorMeasures | None = None,
    T: float | None = None,
    n_times: int | None = 16,
    grid_step=None,
    n_state: int = 17,
    brute: bool = False,
) -> RTerms:
    """Evaluate the three weak-form residuals of a stored field.

    ``A`` and ``c_high`` (the mollifier symmetry constant and the upper
    speed ratio) scale the comparison weight of ``R_v``; ``b`` (the
    mollifier gradient constant) and ``measures`` feed ``R_alpha``.
    ``R_omega`` needs no constants: it vanishes identically for a
    divergence-compatible flux and is otherwise a genuine spacetime
    integral, evaluated with trapezoid weights over the sampled slices.
    """
    delta = _check_delta(delta)
    if A is None:
        raise ConfigError("R_v needs the mollifier symmetry constant A")
    if c_high is None:
        raise ConfigError("R_v needs the upper speed ratio c_high")
    A = float(A)
    c_high = float(c_high)
    if A < 0.0 or c_high <= 0.0:
        raise ConfigError(f"need A >= 0 and c_high > 0, got A={A}, c_high={c_high}")
    view = _TrajView(traj)
    if T is None:
        T = float(view.times[-1] - view.times[0])
    step = delta / 32.0 if grid_step is None else float(grid_step)
    w = form_from_vector(f, st)
    if n_state < 3:
        raise ConfigError("state grid for the derivative supremum needs >= 3 points")
    if n_state % 2 == 0:
        n_state += 1  # keep u = 0 on the grid
    u_grid = np.linspace(-f.c0, f.c0, n_state)

    has_H = False
    if measures is not None:
        if measures.alpha_H.shape[1] != view.n:
            raise MeshMismatchError(
                "error measures and trajectory live on different meshes"
            )
        has_H = bool(np.any(measures.alpha_H != 0.0))
        if has_H and (b is None or float(b) <= 0.0):
            raise ConfigError(
                "R_alpha with a nonzero alpha_H needs the mollifier gradient "
                "constant b"
            )

    idx = _sampled_indices(len(view.times), n_times)
    wts = _trap_weights(view.times[idx])
    r_v = 0.0
    r_omega = 0.0
    for k, wt in zip(idx, wts):
        ctx = _BallCtx(view, st, int(k), delta, step)
        r_v = max(r_v, _rv_at(view, st, w, ctx, A, c_high, T, u_grid, brute))
        r_omega += float(wt) * _romega_at(view, st, w, ctx, brute)

    r_alpha = 0.0
    if measures is not None:
        terms = 0.0
        if has_H:
            locs = _alpha_H_locations(measures, view)
            lam = np.broadcast_to(
                np.asarray(st.lam(measures.times[:, None], locs[None, :]), dtype=float),
                measures.alpha_H.shape,
            )
            bulk = float(np.sum(measures.dt_weights * np.sum(lam * measures.alpha_H, axis=1)))
            terms += (float(b) / delta) * bulk
            terms += float(np.sum(measures.alpha_H[0]) + np.sum(measures.alpha_H[-1]))
        row_K = np.sum(measures.alpha_K[:-1], axis=1)
        terms += float(np.sum(measures.gaps * row_K))
        r_alpha = terms

    return RTerms(R_v=float(r_v), R_omega=float(r_omega), R_alpha=float(r_alpha))


# ---------------------------------------------------------------------------
# the assembled budget


@dataclass(frozen=True)
class ErrorBudget:
    """One evaluated error budget at a fixed ball radius.

    ``term_sum`` adds the five budget terms; the three R residuals ride
    along for reporting but enter no total here.  ``lambdas`` are the
    four flux regularity constants, ``constants`` the tuple (c_low,
    c_high, A, b) the evaluation used.
    """

    delta: float
    E_v: float
    E_f: float
    E_H: float
    E_K: float
    E_L: float
    R_v: float
    R_omega: float
    R_alpha: float
    lambdas: tuple
    constants: tuple

    def __post_init__(self):
        for name in ("delta", "E_v", "E_f", "E_H", "E_K", "E_L", "R_v", "R_omega", "R_alpha"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise NumericalError(f"{name} is not finite: {val}")
            if name != "delta" and val < 0.0:
                raise NumericalError(f"{name} must be non-negative, got {val}")
        if self.delta <= 0.0:
            raise ConfigError(f"ball radius must be positive, got {self.delta}")
        lams = _as_lambda_tuple(self.lambdas)
        if lams[2] == 0.0 and self.E_f != 0.0:
            raise ConfigError(
                "a flux with vanishing divergence constant cannot carry a "
                f"nonzero inhomogeneity term (E_f = {self.E_f})"
            )

    @property
    def term_sum(self) -> float:
        return self.E_v + self.E_f + self.E_H + self.E_K + self.E_L

    def total_bound(self, C: float) -> float:
        """The budget side of the distance bound with stability constant C."""
        return float(C) * self.term_sum

    def terms(self) -> dict:
        return {
            "E_v": self.E_v,
            "E_f": self.E_f,
            "E_H": self.E_H,
            "E_K": self.E_K,
            "E_L": self.E_L,
        }


def error_budget(
    v_traj: Trajectory,
    measures: ErrorMeasures,
    f: FluxField,
    st: Spacetime1p1,
    delta: float,
    lambdas,
    *,
    A: float,
    b: float,
    c_high: float | None = None,
    n_times: int | None = 16,
    grid_step=None,
    with_R: bool = True,
) -> ErrorBudget:
    """Assemble the full budget of a reference run against measured residuals.

    ``v_traj`` is the reference field whose modulus feeds E_v and whose
    states feed the R residuals; ``measures`` comes from the
    approximation run being judged.  ``with_R=False`` skips the residual
    trio (they are diagnostics, not budget terms) to keep sweeps cheap.
    """
    delta = _check_delta(delta)
    lams = _as_lambda_tuple(lambdas)
    view_times = np.asarray(v_traj.times, dtype=float)
    T = float(view_times[-1] - view_times[0])
    t0 = float(view_times[0])

    hyper = hyperbolicity_constants(f, st)
    c_hi = float(c_high) if c_high is not None else float(hyper.c_high)

    e_v = modulus_term_Ev(
        v_traj, delta, lams, T, st, n_times=n_times, grid_step=grid_step
    )
    e_f = inhomogeneity_term_Ef(st, lams, T, delta, t0=t0)
    e_h, e_k, e_l = residual_terms(measures, delta, T, st)

    if with_R:
        r = forms_R_terms(
            v_traj,
            f,
            st,
            delta,
            A=A,
            c_high=c_hi,
            b=b,
            measures=measures,
            T=T,
            n_times=n_times,
            grid_step=grid_step,
        )
    else:
        r = RTerms(0.0, 0.0, 0.0)

    return ErrorBudget(
        delta=delta,
        E_v=e_v,
        E_f=e_f,
        E_H=e_h,
        E_K=e_k,
        E_L=e_l,
        R_v=r.R_v,
        R_omega=r.R_omega,
        R_alpha=r.R_alpha,
        lambdas=lams,
        constants=(float(hyper.c_low), c_hi, float(A), float(b)),
    )


# ---------------------------------------------------------------------------
# delta optimization and verdicts


@dataclass(frozen=True)
class DeltaOptimum:
    """Result of minimizing a tabulated budget over the ball radius.

    ``delta_star``/``total_star`` are refined by a log-log parabola
    through the gridded minimum when it is interior and the table is
    clean; at an edge or over a pathological table they fall back to the
    raw grid entry.
    """

    deltas: np.ndarray
    totals: np.ndarray
    delta_star: float
    total_star: float
    index: int
    edge_warning: bool
    pathological: bool
    term_exponents: dict


def _term_table(deltas: np.ndarray, terms) -> dict:
    """Normalize {name: array} or a budget list into a name -> array map."""
    if isinstance(terms, Mapping):
        table = {str(k): np.asarray(v, dtype=float) for k, v in terms.items()}
    else:
        budgets = list(terms)
        if len(budgets) != len(deltas):
            raise ConfigError(
                f"{len(budgets)} budgets for {len(deltas)} radii"
            )
        for bgt, d in zip(budgets, deltas):
            if abs(bgt.delta - d) > 1e-12 * max(1.0, abs(d)):
                raise ConfigError("budget radii do not match the delta grid")
        table = {
            name: np.array([bgt.terms()[name] for bgt in budgets])
            for name in ("E_v", "E_f", "E_H", "E_K", "E_L")
        }
    if not table:
        raise ConfigError("no budget terms to optimize")
    for name, arr in table.items():
        if arr.shape != deltas.shape:
            raise ConfigError(f"term {name} has shape {arr.shape}, expected {deltas.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise NumericalError(f"term {name} must be finite and non-negative")
    return table


def _check_delta_grid(deltas) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or len(deltas) < 5:
        raise ConfigError("radius sweep needs at least five values")
    if np.any(deltas <= 0.0) or not np.all(np.isfinite(deltas)):
        raise ConfigError("radius sweep must be positive and finite")
    if np.any(np.diff(deltas) <= 0.0):
        raise ConfigError("radius sweep must be strictly increasing")
    if deltas[-1] / deltas[0] < 99.0:
        raise ConfigError(
            "radius sweep must span at least two decades "
            f"(got ratio {deltas[-1] / deltas[0]:.3g})"
        )
    return deltas


def _count_descent_turns(totals: np.ndarray) -> int:
    """Number of sign changes in the discrete slope, zeros dropped."""
    signs = np.sign(np.diff(totals))
    signs = signs[signs != 0.0]
    if len(signs) < 2:
        return 0
    return int(np.sum(signs[1:] != signs[:-1]))


def optimize_delta(deltas, terms) -> DeltaOptimum:
    """Minimize the summed budget over a tabulated radius sweep.

    ``terms`` is either a mapping name -> per-radius array or a list of
    evaluated budgets.  An interior minimum on a clean single-dip table
    is refined by a parabola in log-log coordinates; a minimum at the
    sweep boundary raises ``edge_warning`` instead, and a table with
    more than one descent/ascent turn is flagged ``pathological``.
    Per-term log-log slopes come along for diagnosing which term
    dominates each flank.
    """
    deltas = _check_delta_grid(deltas)
    table = _term_table(deltas, terms)
    totals = np.sum(list(table.values()), axis=0)

    i_star = int(np.argmin(totals))
    edge = i_star in (0, len(deltas) - 1)
    pathological = _count_descent_turns(totals) > 1

    delta_star = float(deltas[i_star])
    total_star = float(totals[i_star])
    if not edge and not pathological and np.all(totals > 0.0):
        s = np.log(deltas[i_star - 1 : i_star + 2])
        y = np.log(totals[i_star - 1 : i_star + 2])
        denom = (s[0] - s[1]) * (s[0] - s[2]) * (s[1] - s[2])
        curv = 2.0 * (
            s[2] * (y[1] - y[0]) + s[1] * (y[0] - y[2]) + s[0] * (y[2] - y[1])
        ) / denom
        if curv > 0.0:
            slope = (
                (y[1] - y[0]) / (s[1] - s[0]) * (s[2] - s[1]) / (s[2] - s[0])
                + (y[2] - y[1]) / (s[2] - s[1]) * (s[1] - s[0]) / (s[2] - s[0])
            )
            s_star = s[1] - slope / curv
            s_star = float(np.clip(s_star, s[0], s[2]))
            # quadratic value at the vertex, Lagrange form
            val = 0.0
            for a_i in range(3):
                prod = y[a_i]
                for b_i in range(3):
                    if a_i != b_i:
                        prod *= (s_star - s[b_i]) / (s[a_i] - s[b_i])
                val += prod
            delta_star = float(np.exp(s_star))
            total_star = float(np.exp(val))

    exponents = {}
    log_d = np.log(deltas)
    for name, arr in table.items():
        pos = arr > 0.0
        if np.count_nonzero(pos) >= 2:
            exponents[name] = float(np.polyfit(log_d[pos], np.log(arr[pos]), 1)[0])
        else:
            exponents[name] = float("nan")

    return DeltaOptimum(
        deltas=deltas,
        totals=totals,
        delta_star=delta_star,
        total_star=total_star,
        index=i_star,
        edge_warning=edge,
        pathological=pathological,
        term_exponents=exponents,
    )


@dataclass(frozen=True)
class BoundReport:
    """Observed distance growth against the best tabulated budget.

    ``delta_star`` stays on the sweep grid (the tabulated minimizer);
    the verdict compares the observed left side against C times the
    minimal budget with a 1e-12 relative slack.
    """

    observed_lhs: float
    deltas: np.ndarray
    bound_rhs: np.ndarray
    delta_star: float
    rhs_star: float
    C: float
    ratio: float
    verdict: bool


def bound_report(observed, deltas, budgets, C: float) -> BoundReport:
    """Tabulate C * budget over the sweep and compare with the observation."""
    deltas = np.asarray(deltas, dtype=float)
    observed = float(observed)
    C = float(C)
    if C <= 0.0:
        raise ConfigError(f"stability constant must be positive, got {C}")
    if isinstance(budgets, Mapping):
        table = _term_table(deltas, budgets)
        totals = np.sum(list(table.values()), axis=0)
    else:
        budgets = list(budgets)
        if len(budgets) != len(deltas):
            raise ConfigError(f"{len(budgets)} budgets for {len(deltas)} radii")
        totals = np.array([bgt.term_sum for bgt in budgets])
    i_star = int(np.argmin(totals))
    rhs_star = float(totals[i_star])
    rhs = C * rhs_star
    if rhs > 0.0:
        ratio = observed / rhs
    else:
        ratio = 0.0 if observed <= 0.0 else float("inf")
    verdict = observed <= rhs * (1.0 + 1e-12) + 1e-300
    return BoundReport(
        observed_lhs=observed,
        deltas=deltas,
        bound_rhs=C * totals,
        delta_star=float(deltas[i_star]),
        rhs_star=rhs_star,
        C=C,
        ratio=float(ratio),
        verdict=bool(verdict),
    )


# ---------------------------------------------------------------------------
# BV modulus plateau


@dataclass(frozen=True)
class BVModulusReport:
    """Measured modulus-to-radius ratios of an evolved BV field.

    The left side is the leaf integral of the ball modulus at the center
    of a window evolved long enough for every ball to fit inside; the
    bracket is (1 + Lip_u f / beta) TV plus, for a non-compatible flux,
    the leaf L1 mass of the divergence over beta.  ``passed`` means the
    ratios stay within a factor two of each other.
    """

    deltas: np.ndarray
    lhs: np.ndarray
    ratios: np.ndarray
    bracket: float
    tv: float
    div_l1: float
    beta: float
    lip_u: float
    compatible: bool
    t_center: float
    passed: bool


def bv_modulus_check(
    v: SliceField,
    f: FluxField,
    st: Spacetime1p1,
    deltas,
    *,
    cfl: float = 0.45,
    grid_step=None,
) -> BVModulusReport:
    """Check that the ball modulus of an evolved field scales linearly in delta.

    The data is evolved forward far enough that a ball of the largest
    requested radius, centered mid-window, stays inside the stored
    range; each radius then gets the same inner-average treatment as the
    modulus term and is divided by delta times the BV bracket.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or len(deltas) < 1:
        raise ConfigError("need at least one ball radius")
    if np.any(deltas <= 0.0) or not np.all(np.isfinite(deltas)):
        raise ConfigError("ball radii must be positive and finite")
    d_max = float(np.max(deltas))

    # probe the smallest lapse on the candidate window to convert the
    # metric radius into a time radius
    t_probe_hi = min(float(st.t_max), float(v.t) + 4.0 * d_max)
    tp = np.linspace(float(v.t), max(t_probe_hi, float(v.t)), 33)
    xp = (np.arange(65) + 0.5) * (st.leaf_length / 65)
    lam_min = float(
        np.min(np.broadcast_to(np.asarray(st.lam(tp[:, None], xp[None, :]), dtype=float), (33, 65)))
    )
    if lam_min <= 0.0:
        raise NumericalError("lapse must stay positive on the probe window")
    margin = 1.1 * d_max / lam_min
    t_end = float(v.t) + 2.0 * margin
    if not (st.contains_t(float(v.t)) and st.contains_t(t_end)):
        raise ConfigError(
            f"modulus window [{v.t}, {t_end}] leaves the foliation range "
            f"[{st.t_min}, {st.t_max}]; enlarge the foliation or shrink the radii"
        )

    cfg = SchemeConfig(n_cells=v.mesh.n_cells, cfl=cfl, store_every=1)
    traj = evolve_hyperbolic(st, f, v, t_end, cfg)
    view = _TrajView(traj)
    t_center = float(v.t) + margin
    k_c = int(view.nearest(t_center))

    lhs = np.empty(len(deltas))
    for i, d in enumerate(deltas):
        inner = _inner_means(view, st, k_c, float(d), grid_step, st.density, False)
        lhs[i] = _leaf_integral(view, st, k_c, inner)

    u_c = view.U[k_c]
    t_c = float(view.times[k_c])
    tv = float(total_variation(SliceField(t=t_c, values=u_c, mesh=view.mesh)))

    hyper = hyperbolicity_constants(f, st)
    beta = float(hyper.beta)
    comp = check_geometry_compatible(f, st)

    nu = 33
    ug = np.linspace(-f.c0, f.c0, nu)[:, None, None]
    tg = np.linspace(float(view.times[0]), float(view.times[-1]), 9)[None, :, None]
    xg = view.centers[:: max(1, view.n // 32)][None, None, :]
    shape = np.broadcast_shapes(ug.shape, tg.shape, xg.shape)
    lip_u = max(
        float(np.max(np.abs(np.broadcast_to(np.asarray(f.du_f_t(ug, tg, xg), dtype=float), shape)))),
        float(np.max(np.abs(np.broadcast_to(np.asarray(f.du_f_x(ug, tg, xg), dtype=float), shape)))),
    )

    div_l1 = 0.0
    if not comp.compatible:
        a_c = np.broadcast_to(
            np.asarray(st.a(t_c, view.centers), dtype=float), (view.n,)
        )
        acc = []
        for j in range(view.n):
            dv = divergence(
                f,
                st,
                float(u_c[j]),
                t_nodes=np.array([t_c]),
                x_nodes=np.array([view.centers[j]]),
            )
            acc.append(abs(float(dv[0, 0])) * float(a_c[j]))
        div_l1 = math.fsum(acc) * view.dx

    bracket = (1.0 + lip_u / beta) * tv
    if not comp.compatible:
        bracket += div_l1 / beta

    ratios = np.zeros(len(deltas))
    for i, d in enumerate(deltas):
        denom = float(d) * bracket
        if lhs[i] == 0.0:
            ratios[i] = 0.0
        elif denom <= 0.0:
            raise NumericalError(
                "ball modulus is positive but the BV bracket vanishes"
            )
        else:
            ratios[i] = lhs[i] / denom

    live = ratios[ratios > 0.0]
    passed = True
    if len(live) >= 2:
        passed = bool(float(np.max(live)) / float(np.min(live)) <= 2.0)

    return BVModulusReport(
        deltas=deltas,
        lhs=lhs,
        ratios=ratios,
        bracket=float(bracket),
        tv=tv,
        div_l1=float(div_l1),
        beta=beta,
        lip_u=float(lip_u),
        compatible=bool(comp.compatible),
        t_center=t_center,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# contraction of the evolution map


@dataclass(frozen=True)
class ContractionReport:
    """Slice-by-slice flux distance of two runs under one flux."""

    times: np.ndarray
    distances: np.ndarray
    max_increase: float
    tolerance: float
    passed: bool


def contraction_check(
    u_traj: Trajectory, v_traj: Trajectory, f: FluxField, st: Spacetime1p1
) -> ContractionReport:
    """Verify the leaf flux distance of two runs never grows.

    Both trajectories must store the same slice times on the same mesh.
    The tolerance is 1e-12 relative to the initial distance, so an
    initially identical pair must stay identical to the bit.
    """
    mu = u_traj.slices[0].mesh
    mv = v_traj.slices[0].mesh
    if mu.n_cells != mv.n_cells or abs(mu.leaf_length - mv.leaf_length) > 1e-12:
        raise MeshMismatchError("trajectories live on different meshes")
    tu = np.asarray(u_traj.times, dtype=float)
    tv_ = np.asarray(v_traj.times, dtype=float)
    if len(tu) != len(tv_) or not np.allclose(tu, tv_, rtol=1e-9, atol=1e-12):
        raise MeshMismatchError("trajectories store different slice times")
    if u_traj.flux_name != v_traj.flux_name:
        raise MeshMismatchError(
            f"trajectories evolved under different fluxes: "
            f"{u_traj.flux_name} vs {v_traj.flux_name}"
        )

    dists = np.array(
        [
            l1_flux_distance(su, sv, f, st)
            for su, sv in zip(u_traj.slices, v_traj.slices)
        ]
    )
    if len(dists) >= 2:
        max_inc = float(np.max(np.diff(dists)))
    else:
        max_inc = 0.0
    tol = 1e-12 * float(dists[0])
    passed = max_inc <= tol
    return ContractionReport(
        times=tu,
        distances=dists,
        max_increase=max_inc,
        tolerance=tol,
        passed=bool(passed),
    )


# ---------------------------------------------------------------------------
# flux comparison


@dataclass(frozen=True)
class FluxComparisonReport:
    """Distance growth between runs under two fluxes vs its two bounds.

    ``rhs_ap20`` is the alpha_K spacetime mass of the perturbation run;
    the square-root bound splits into ``sqrt_term`` (the R_v slope times
    the weighted state mass under the root) plus the endpoint
    ``boundary_term``.  Fields of the root bound are NaN when the
    mollifier constants were not supplied.
    """

    observed_lhs: float
    q: float
    rhs_ap20: float
    ratio_ap20: float
    rbar_v: float
    sqrt_term: float
    boundary_term: float
    rhs_ap30: float
    ratio_ap30: float


def flux_comparison_bounds(
    u_traj: Trajectory,
    v_traj: Trajectory,
    f: FluxField,
    f_tilde: FluxField,
    st: Spacetime1p1,
    *,
    q: float | None = None,
    A: float | None = None,
    c_high: float | None = None,
    b: float | None = None,
    delta_grid: Sequence[float] = (0.05, 0.1, 0.2),
    n_times: int | None = 16,
    grid_step=None,
) -> FluxComparisonReport:
    """Bound the distance growth between solutions of two close fluxes.

    ``u_traj`` solves the perturbed flux, ``v_traj`` the reference flux;
    the observation is the growth of the leaf flux distance between the
    endpoint slices.  The first bound integrates the perturbation
    measure alpha_K along the reference run.  When A, c_high, and b are
    all given, the square-root bound is evaluated as well: the R_v
    radius slope (least squares through the origin over ``delta_grid``)
    against the gap-weighted state mass of the perturbed run, plus the
    endpoint state mass.
    """
    mu = u_traj.slices[0].mesh
    mv = v_traj.slices[0].mesh
    if mu.n_cells != mv.n_cells or abs(mu.leaf_length - mv.leaf_length) > 1e-12:
        raise MeshMismatchError("trajectories live on different meshes")
    for pick in ("initial", "final"):
        su = getattr(u_traj, pick)()
        sv = getattr(v_traj, pick)()
        if abs(su.t - sv.t) > 1e-9 * max(1.0, abs(sv.t)):
            raise MeshMismatchError(
                f"{pick} slices live at different times: {su.t} vs {sv.t}"
            )

    if q is None:
        q = flux_gap(f, f_tilde, st)
    q = float(q)

    d0 = l1_flux_distance(u_traj.initial(), v_traj.initial(), f, st)
    dT = l1_flux_distance(u_traj.final(), v_traj.final(), f, st)
    observed = dT - d0

    measures = extract_error_measures(
        FluxPerturbationFamily(f_tilde=f_tilde, q=q), v_traj, f, st
    )
    row_K = np.sum(measures.alpha_K[:-1], axis=1)
    rhs_ap20 = float(np.sum(measures.gaps * row_K))
    if rhs_ap20 > 0.0:
        ratio_ap20 = observed / rhs_ap20
    else:
        ratio_ap20 = 0.0 if observed <= 0.0 else float("inf")

    rbar = sqrt_term = boundary = rhs_ap30 = ratio_ap30 = float("nan")
    if A is not None and c_high is not None and b is not None:
        dg = np.asarray(delta_grid, dtype=float)
        if dg.ndim != 1 or len(dg) < 2 or np.any(dg <= 0.0):
            raise ConfigError("root bound needs at least two positive radii")
        rv = np.array(
            [
                forms_R_terms(
                    v_traj,
                    f,
                    st,
                    float(d),
                    A=A,
                    c_high=c_high,
                    n_times=n_times,
                    grid_step=grid_step,
                ).R_v
                for d in dg
            ]
        )
        rbar = float(np.sum(rv * dg) / np.sum(dg * dg))

        uv = _TrajView(u_traj)
        wts = _trap_weights(uv.times)
        lam_a = np.broadcast_to(
            np.asarray(
                st.lam(uv.times[:, None], uv.centers[None, :]), dtype=float
            ),
            uv.U.shape,
        ) * np.broadcast_to(
            np.asarray(st.a(uv.times[:, None], uv.centers[None, :]), dtype=float),
            uv.U.shape,
        )
        mass_rows = np.sum(np.abs(uv.U) * lam_a, axis=1) * uv.dx
        W = float(b) * q * float(np.sum(wts * mass_rows))
        sqrt_term = math.sqrt(max(rbar, 0.0) * W)

        a0 = np.broadcast_to(
            np.asarray(st.a(float(uv.times[0]), uv.centers), dtype=float), (uv.n,)
        )
        aT = np.broadcast_to(
            np.asarray(st.a(float(uv.times[-1]), uv.centers), dtype=float), (uv.n,)
        )
        boundary = q * (
            float(np.sum(np.abs(uv.U[0]) * a0) * uv.dx)
            + float(np.sum(np.abs(uv.U[-1]) * aT) * uv.dx)
        )
        rhs_ap30 = sqrt_term + boundary
        if rhs_ap30 > 0.0:
            ratio_ap30 = observed / rhs_ap30
        else:
            ratio_ap30 = 0.0 if observed <= 0.0 else float("inf")

    return FluxComparisonReport(
        observed_lhs=float(observed),
        q=q,
        rhs_ap20=rhs_ap20,
        ratio_ap20=float(ratio_ap20),
        rbar_v=rbar,
        sqrt_term=sqrt_term,
        boundary_term=boundary,
        rhs_ap30=rhs_ap30,
        ratio_ap30=ratio_ap30,
    )


# ---------------------------------------------------------------------------
# vanishing diffusion


@dataclass(frozen=True)
class DiffusionReport:
    """Distance growth of diffused runs against the two shape bounds.

    ``nd20[i] = T sqrt(lip_i V U_i)`` and ``nd30[i] = T (q_i M_i)^(1/3)
    V^(2/3)`` with V, U_i the supremal total variations and M_i the
    weighted spacetime state mass of the i-th run.  ``exponent`` is the
    log-log slope of the observed growth against the Lipschitz bounds.
    """

    lips: np.ndarray
    qs: np.ndarray
    observed: np.ndarray
    nd20: np.ndarray
    nd30: np.ndarray
    state_mass: np.ndarray
    exponent: float
    r_squared: float
    v_tv: float


def diffusion_bounds(
    u_trajs: Sequence[Trajectory],
    v_traj: Trajectory,
    lips,
    qs,
    f: FluxField,
    st: Spacetime1p1,
) -> DiffusionReport:
    """Bound the distance growth of a family of diffused runs.

    Needs at least three members to resolve the rate.  The observation
    per member is the endpoint growth of the leaf flux distance to the
    reference run; the bounds use each run's supremal total variation
    and its stored-slice trapezoid state mass.
    """
    u_trajs = list(u_trajs)
    lips = np.asarray(lips, dtype=float)
    qs = np.asarray(qs, dtype=float)
    if len(u_trajs) < 3:
        raise ConfigError("diffusion sweep needs at least three members")
    if len(lips) != len(u_trajs) or len(qs) != len(u_trajs):
        raise ConfigError("one Lipschitz bound and one gap per trajectory")
    if np.any(lips < 0.0) or np.any(qs < 0.0):
        raise ConfigError("Lipschitz bounds and gaps must be non-negative")

    vv = _TrajView(v_traj)
    T = float(vv.times[-1] - vv.times[0])
    V = float(np.max(v_traj.tv))

    observed = np.empty(len(u_trajs))
    nd20 = np.empty(len(u_trajs))
    nd30 = np.empty(len(u_trajs))
    masses = np.empty(len(u_trajs))
    for i, u in enumerate(u_trajs):
        d0 = l1_flux_distance(u.initial(), v_traj.initial(), f, st)
        dT = l1_flux_distance(u.final(), v_traj.final(), f, st)
        observed[i] = dT - d0
        Ui = float(np.max(u.tv))
        nd20[i] = T * math.sqrt(lips[i] * V * Ui)
        uv = _TrajView(u)
        wts = _trap_weights(uv.times)
        lam_a = np.broadcast_to(
            np.asarray(st.lam(uv.times[:, None], uv.centers[None, :]), dtype=float)
            * np.asarray(st.a(uv.times[:, None], uv.centers[None, :]), dtype=float),
            uv.U.shape,
        )
        masses[i] = float(np.sum(wts * np.sum(np.abs(uv.U) * lam_a, axis=1)) * uv.dx)
        nd30[i] = T * (qs[i] * masses[i]) ** (1.0 / 3.0) * V ** (2.0 / 3.0)

    pos = (observed > 0.0) & (lips > 0.0)
    if np.count_nonzero(pos) >= 2:
        coef = np.polyfit(np.log(lips[pos]), np.log(observed[pos]), 1)
        fit = np.polyval(coef, np.log(lips[pos]))
        resid = np.log(observed[pos]) - fit
        tot = np.log(observed[pos]) - np.mean(np.log(observed[pos]))
        ss_tot = float(np.sum(tot**2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
        exponent = float(coef[0])
    else:
        exponent = float("nan")
        r2 = float("nan")

    return DiffusionReport(
        lips=lips,
        qs=qs,
        observed=observed,
        nd20=nd20,
        nd30=nd30,
        state_mass=masses,
        exponent=exponent,
        r_squared=r2,
        v_tv=V,
    )


# ---------------------------------------------------------------------------
# calibration


def round_up_sigfig(x: float) -> float:
    """Smallest one-significant-digit number >= x; non-positive maps to 1."""
    x = float(x)
    if not math.isfinite(x):
        raise NumericalError(f"cannot round a non-finite value: {x}")
    if x <= 0.0:
        return 1.0
    e = math.floor(math.log10(x))
    mant = x / 10.0**e
    k = math.ceil(mant - 1e-9)
    if k >= 10:
        k = 1
        e += 1
    return float(k * 10.0**e)


def calibrate_constant(observed, rhs) -> float:
    """Smallest one-digit stability constant covering every observation.

    Pairs with a non-positive right side and a positive observation are
    contradictions and raise; pairs where nothing was observed are free,
    and with no live pair at all the constant defaults to 1.
    """
    observed = np.asarray(observed, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if observed.shape != rhs.shape:
        raise ConfigError("calibration needs matched observation/bound pairs")
    worst = 0.0
    for obs, r in zip(observed.ravel(), rhs.ravel()):
        if obs <= 0.0:
            continue
        if r <= 0.0:
            raise NumericalError(
                f"observation {obs} has no positive bound to calibrate against"
            )
        worst = max(worst, obs / r)
    if worst <= 0.0:
        return 1.0
    return round_up_sigfig(worst)
