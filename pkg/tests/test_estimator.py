"""Error-budget and bound-vs-observed estimator tests.

The double-sum terms (modulus term, form residuals) are pinned against
brute-force re-computations that follow the documented quadrature rules
node for node; the closed-form terms (inhomogeneity, residual measures,
delta optimization) are pinned against hand-evaluated products.
"""

import numpy as np
import pytest

from slicelab.errors import ConfigError, MeshMismatchError, NumericalError
from slicelab.estimator import (
    BVModulusReport,
    ContractionReport,
    DeltaOptimum,
    ErrorBudget,
    RTerms,
    bound_report,
    bv_modulus_check,
    calibrate_constant,
    contraction_check,
    diffusion_bounds,
    error_budget,
    flux_comparison_bounds,
    forms_R_terms,
    inhomogeneity_term_Ef,
    modulus_inner_at,
    modulus_sup_integral,
    modulus_term_Ev,
    optimize_delta,
    residual_terms,
    round_up_sigfig,
)
from slicelab.flux import (
    FluxField,
    PolyFlux,
    flux_gap,
    flux_preset,
    form_from_vector,
    lambda_constants,
)
from slicelab.geometry import LeafMesh, Point, geodesic_ball, metric_preset
from slicelab.solver import (
    FluxPerturbationFamily,
    SchemeConfig,
    SliceField,
    ViscosityFamily,
    evolve_diffusion,
    evolve_hyperbolic,
    extract_error_measures,
    ic_preset,
    l1_flux_distance,
    total_variation,
)


def minkowski(t_max=1.0, L=1.0):
    return metric_preset("minkowski", t_min=0.0, t_max=t_max, leaf_length=L)


def flrw(t_max=1.0):
    return metric_preset("flrw", t_min=0.0, t_max=t_max, leaf_length=1.0, a0=1.0, H=1.0)


def frozen_flux():
    """f = (u, 0): states never move, so slices stay equal to the data."""
    return flux_preset("advection", c=0.0)


def perturbed_burgers(eta, c0=1.0):
    """Burgers plus the linear spatial perturbation (0, eta*u)."""
    return FluxField(
        f_t=lambda u, t, x: np.asarray(u, dtype=float)
        + np.zeros(np.broadcast_shapes(np.shape(u), np.shape(t), np.shape(x))),
        f_x=lambda u, t, x: 0.5 * np.asarray(u, dtype=float) ** 2
        + eta * np.asarray(u, dtype=float)
        + np.zeros(np.broadcast_shapes(np.shape(u), np.shape(t), np.shape(x))),
        du_f_t=lambda u, t, x: 1.0
        + np.zeros(np.broadcast_shapes(np.shape(u), np.shape(t), np.shape(x))),
        du_f_x=lambda u, t, x: np.asarray(u, dtype=float)
        + eta
        + np.zeros(np.broadcast_shapes(np.shape(u), np.shape(t), np.shape(x))),
        c0=c0,
        name=f"burgers+{eta}u",
        descriptor=PolyFlux(poly_t=(0.0, 1.0), poly_x=(0.0, eta, 0.5)),
    )


def frozen_trajectory(st, values, T, n_times_hint=24):
    """Evolve data under f = (u, 0) on Minkowski-like metrics: u stays put."""
    mesh = LeafMesh(n_cells=len(values), leaf_length=st.leaf_length)
    u0 = SliceField(t=0.0, values=np.asarray(values, dtype=float), mesh=mesh)
    cfg = SchemeConfig(n_cells=mesh.n_cells, cfl=0.45, store_every=1)
    return evolve_hyperbolic(st, frozen_flux(), u0, T, cfg)


# --- reference rules shared with the estimator (documented contracts) -----


def nearest_slice(times, tq):
    """Nearest stored slice time, ties resolved toward the earlier slice."""
    i = np.searchsorted(times, tq)
    i = np.clip(i, 1, len(times) - 1)
    left = times[i - 1]
    right = times[i]
    return np.where(tq - left <= right - tq, i - 1, i)


def sampled_indices(m, k):
    return np.unique(np.round(np.linspace(0, m - 1, min(k, m))).astype(int))


def trap_weights(ts):
    w = np.zeros_like(np.asarray(ts, dtype=float))
    g = np.diff(ts)
    w[:-1] += 0.5 * g
    w[1:] += 0.5 * g
    return w


def ball_nodes(st, t, x, delta, grid_step, t_lo, t_hi):
    """Flattened ball nodes restricted to the stored time window."""
    ball = geodesic_ball(st, Point(t, x), delta, grid_step=grid_step)
    tq = np.broadcast_to(ball.t_nodes[:, None], ball.mask.shape)
    xq = np.broadcast_to(ball.x_nodes[None, :], ball.mask.shape)
    keep = ball.mask & (tq >= t_lo - 1e-12) & (tq <= t_hi + 1e-12)
    area = ball.grid_step_t * ball.grid_step_x
    return tq[keep], xq[keep], area


class TestModulusTerm:
    def test_constant_field_gives_zero(self):
        st = minkowski()
        traj = frozen_trajectory(st, np.full(16, 0.3), T=0.5)
        assert modulus_sup_integral(traj, 0.15, st) == 0.0
        ev = modulus_term_Ev(traj, 0.15, (1.0, 0.5, 0.0, 0.5), 0.5, st)
        assert ev == 0.0

    def test_matches_brute_force_double_sum(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=8, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.4)
        fast = modulus_sup_integral(traj, 0.12, st, n_times=8)
        brute = modulus_sup_integral(traj, 0.12, st, n_times=8, brute=True)
        assert fast > 0.0
        assert abs(fast - brute) <= 1e-12 * abs(brute)

    def test_single_jump_integral_scales_with_delta(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=128, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.5)
        small = modulus_sup_integral(traj, 0.08, st, n_times=3)
        large = modulus_sup_integral(traj, 0.16, st, n_times=3)
        assert 1.7 <= large / small <= 2.3

    def test_lipschitz_inner_average_bounded_by_delta(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=128, leaf_length=1.0)
        x = mesh.centers
        vals = np.abs(x - 0.5)  # slope +-1, continuous on the circle
        traj = frozen_trajectory(st, vals, T=0.5)
        delta = 0.1
        inner = modulus_inner_at(traj, delta, st, t=0.25)
        assert inner.shape == (128,)
        assert np.max(inner) <= 1.1 * delta
        assert np.max(inner) > 0.01 * delta

    def test_sup_integral_nondecreasing_in_delta(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=64, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.5)
        sweep = [modulus_sup_integral(traj, d, st, n_times=3) for d in (0.05, 0.1, 0.2)]
        assert sweep[0] <= sweep[1] + 1e-12
        assert sweep[1] <= sweep[2] + 1e-12

    def test_lambda_prefactor(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.5)
        base = modulus_sup_integral(traj, 0.1, st, n_times=4)
        ev = modulus_term_Ev(traj, 0.1, (2.0, 0.5, 7.0, 1.5), 2.0, st, n_times=4)
        # prefactor = T*lam1 + T*lam3 + lam0 = 2*0.5 + 2*1.5 + 2 = 6
        assert abs(ev - 6.0 * base) <= 1e-12 * abs(ev)


class TestInhomogeneityTerm:
    def test_unit_leaf_product(self):
        st = minkowski()
        ef = inhomogeneity_term_Ef(st, (0.0, 0.0, 2.0, 0.0), T=1.0, delta=0.1)
        assert abs(ef - 0.2) <= 1e-12

    def test_expanding_leaf_supremum(self):
        st = flrw(t_max=1.0)
        ef = inhomogeneity_term_Ef(st, (0.0, 0.0, 1.0, 0.0), T=1.0, delta=0.1)
        assert abs(ef - 0.1 * np.e) <= 1e-12 * np.e

    def test_compatible_flux_gives_zero(self):
        st = minkowski()
        lams = lambda_constants(flux_preset("burgers"), st)
        assert lams.lam2 == 0.0
        assert inhomogeneity_term_Ef(st, lams, T=1.0, delta=0.1) == 0.0


class TestResidualTerms:
    def test_all_zero_measures(self):
        st = minkowski()
        traj = frozen_trajectory(st, np.zeros(16), T=0.5)
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: 0.0 * u, lip=0.0, q=0.0),
            traj,
            frozen_flux(),
            st,
        )
        eh, ek, el = residual_terms(meas, delta=0.1, T=0.5, st=st)
        assert (eh, ek, el) == (0.0, 0.0, 0.0)

    def test_jump_mass_closed_form(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=1.0)
        eps = 0.01
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: eps * u, lip=eps, q=eps),
            traj,
            frozen_flux(),
            st,
        )
        delta = 0.1
        eh, ek, el = residual_terms(meas, delta=delta, T=1.0, st=st)
        tv = 2.0  # periodic step: two unit jumps
        expected = 2.0 * eps * tv + eps * tv * 1.0 / delta
        assert abs(eh - expected) <= 1e-9 * expected
        assert ek == 0.0

    def test_constant_state_EL(self):
        st = minkowski()
        traj = frozen_trajectory(st, np.ones(16), T=1.0)
        q = 0.3
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: 0.0 * u, lip=0.0, q=q),
            traj,
            frozen_flux(),
            st,
        )
        delta = 0.2
        eh, ek, el = residual_terms(meas, delta=delta, T=1.0, st=st)
        assert eh == 0.0
        assert abs(el - q / delta**2) <= 1e-9 * (q / delta**2)

    def test_perturbation_EK_jump_sum(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=1.0)
        eta = 0.04
        f = frozen_flux()
        meas = extract_error_measures(
            FluxPerturbationFamily(f_tilde=flux_preset("advection", c=eta)),
            traj,
            f,
            st,
        )
        eh, ek, el = residual_terms(meas, delta=0.1, T=1.0, st=st)
        expected = eta * 2.0 * 1.0  # Q-jumps eta*|du| over TV=2, duration 1
        assert abs(ek - expected) <= 1e-10 * expected
        assert el == 0.0

    def test_EH_EL_nonincreasing_in_delta(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.5)
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: 0.01 * u, lip=0.01, q=0.01),
            traj,
            frozen_flux(),
            st,
        )
        eh1, _, el1 = residual_terms(meas, delta=0.1, T=0.5, st=st)
        eh2, _, el2 = residual_terms(meas, delta=0.2, T=0.5, st=st)
        assert eh2 < eh1
        assert el2 < el1


class TestFormsRTerms:
    def test_compatible_flux_zero_R_omega(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=16, leaf_length=1.0)
        u0 = ic_preset("sine", mesh, amp=0.5)
        cfg = SchemeConfig(n_cells=16, cfl=0.45, store_every=1)
        traj = evolve_hyperbolic(st, flux_preset("burgers"), u0, 0.3, cfg)
        r = forms_R_terms(
            traj, flux_preset("burgers"), st, 0.1, A=1.0, c_high=1.0, n_times=4
        )
        assert r.R_omega == 0.0
        assert r.R_alpha == 0.0
        assert r.R_v > 0.0

    def test_constant_field_zero_R_v(self):
        st = minkowski()
        traj = frozen_trajectory(st, np.full(16, 0.4), T=0.4)
        r = forms_R_terms(traj, frozen_flux(), st, 0.1, A=1.0, c_high=1.0, n_times=4)
        assert r.R_v == 0.0

    def test_missing_A_rejected(self):
        st = minkowski()
        traj = frozen_trajectory(st, np.full(8, 0.4), T=0.4)
        with pytest.raises(ConfigError):
            forms_R_terms(traj, frozen_flux(), st, 0.1, A=None, c_high=1.0)

    def test_R_v_affine_in_A(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.4)
        f = frozen_flux()
        r0 = forms_R_terms(traj, f, st, 0.1, A=0.0, c_high=1.0, n_times=4).R_v
        r1 = forms_R_terms(traj, f, st, 0.1, A=1.0, c_high=1.0, n_times=4).R_v
        r2 = forms_R_terms(traj, f, st, 0.1, A=2.0, c_high=1.0, n_times=4).R_v
        assert r1 > r0
        assert abs((r2 - r0) - 2.0 * (r1 - r0)) <= 1e-9 * r2

    def test_expanding_leaf_R_omega_hand_oracle(self):
        # f = (u, 0) on the expanding leaf: the flux-form differential has
        # reference density equal to the state itself, so the residual
        # integrand reduces by hand to |v_q| * |den(q) - den(p)| with
        # den = lam * a.  The generic evaluation must match that reduction.
        st = flrw(t_max=1.0)
        mesh = LeafMesh(n_cells=8, leaf_length=1.0)
        u0 = ic_preset("sine", mesh, amp=0.5)
        cfg = SchemeConfig(n_cells=8, cfl=0.45, store_every=1)
        f = frozen_flux()
        traj = evolve_hyperbolic(st, f, u0, 0.5, cfg)
        delta, k_times = 0.15, 8
        step = delta / 16.0
        got = forms_R_terms(
            traj, f, st, delta, A=0.0, c_high=1.0, n_times=k_times, grid_step=step
        ).R_omega

        times = traj.times
        U = np.stack([s.values for s in traj.slices])
        n, dx, L = mesh.n_cells, mesh.dx, mesh.leaf_length
        idx = sampled_indices(len(times), k_times)
        wts = trap_weights(times[idx])
        x_ref = 0.5 * L
        oracle = 0.0
        for k, w in zip(idx, wts):
            tk = times[k]
            tq, xq, area = ball_nodes(st, tk, x_ref, delta, step, times[0], times[-1])
            offs = xq - x_ref
            den_q = np.exp(tq)  # lam * a on this preset
            den_p = np.exp(tk)
            vol = np.sum(den_q) * area  # reference volume of the support
            for j in range(n):
                xs = np.mod(mesh.centers[j] + offs, L)
                it = nearest_slice(times, tq)
                ix = np.floor(xs / dx).astype(int) % n
                vq = U[it, ix]
                inner = np.sum(np.abs(vq) * np.abs(den_q - den_p)) * area / vol
                oracle += w * dx * inner
        assert oracle > 0.0
        assert abs(got - oracle) <= 1e-10 * oracle

    def test_R_alpha_assembly_from_measures(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=1.0)
        eps, delta, b = 0.01, 0.1, 1.2
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: eps * u, lip=eps, q=eps),
            traj,
            frozen_flux(),
            st,
        )
        r = forms_R_terms(
            traj,
            frozen_flux(),
            st,
            delta,
            A=0.0,
            c_high=1.0,
            b=b,
            measures=meas,
            n_times=3,
        )
        tv = 2.0
        expected = (b / delta) * eps * tv * 1.0 + 2.0 * eps * tv  # lam = 1
        assert abs(r.R_alpha - expected) <= 1e-9 * expected

    def test_nonzero_alpha_H_requires_b(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=16, leaf_length=1.0)
        vals = ic_preset("riemann", mesh, uL=0.0, uR=1.0).values
        traj = frozen_trajectory(st, vals, T=0.5)
        meas = extract_error_measures(
            ViscosityFamily(phi=lambda u: 0.01 * u, lip=0.01, q=0.01),
            traj,
            frozen_flux(),
            st,
        )
        with pytest.raises(ConfigError):
            forms_R_terms(
                traj, frozen_flux(), st, 0.1, A=0.0, c_high=1.0, measures=meas
            )


class TestErrorBudget:
    def make(self, **kw):
        base = dict(
            delta=0.1,
            E_v=1.0,
            E_f=0.5,
            E_H=2.0,
            E_K=0.0,
            E_L=0.25,
            R_v=0.1,
            R_omega=0.0,
            R_alpha=0.3,
            lambdas=(1.0, 0.0, 1.0, 0.0),
            constants=(1.0, 1.0, 0.5, 1.27),
        )
        base.update(kw)
        return ErrorBudget(**base)

    def test_total_bound_affine(self):
        b = self.make()
        total = b.E_v + b.E_f + b.E_H + b.E_K + b.E_L
        assert b.total_bound(1.0) == total
        assert b.total_bound(3.0) == 3.0 * total
        assert b.term_sum == total

    def test_negative_term_rejected(self):
        with pytest.raises(NumericalError):
            self.make(E_H=-1.0)

    def test_zero_lam2_forces_zero_Ef(self):
        with pytest.raises(ConfigError):
            self.make(lambdas=(1.0, 0.0, 0.0, 0.0), E_f=0.5)
        ok = self.make(lambdas=(1.0, 0.0, 0.0, 0.0), E_f=0.0)
        assert ok.E_f == 0.0


class TestOptimizeDelta:
    def test_two_term_amgm(self):
        c1, c2 = 2.0, 0.5
        deltas = np.geomspace(0.05, 5.0, 64)
        rep = optimize_delta(deltas, {"E_v": c1 * deltas, "E_H": c2 / deltas})
        star = np.sqrt(c2 / c1)
        assert abs(rep.delta_star - star) <= 0.01 * star
        assert abs(rep.total_star - 2.0 * np.sqrt(c1 * c2)) <= 0.01 * 2 * np.sqrt(c1 * c2)
        assert not rep.edge_warning
        assert not rep.pathological
        assert abs(rep.term_exponents["E_v"] - 1.0) <= 0.01
        assert abs(rep.term_exponents["E_H"] + 1.0) <= 0.01

    def test_inverse_square_model_scaling(self):
        deltas = np.geomspace(0.02, 2.0, 64)

        def best(c1, c2):
            rep = optimize_delta(deltas, {"E_v": c1 * deltas, "E_L": c2 / deltas**2})
            return rep.total_star

        m11 = best(1.0, 1.0)
        m42 = best(4.0, 0.5)
        predicted = 3.0 * 2.0 ** (-2.0 / 3.0)
        assert abs(m11 - predicted) <= 0.05 * predicted
        ratio = (4.0 ** (2.0 / 3.0)) * (0.5 ** (1.0 / 3.0))
        assert abs(m42 / m11 - ratio) <= 0.05 * ratio

    def test_single_term_edge_warning(self):
        deltas = np.geomspace(0.01, 1.0, 16)
        rep = optimize_delta(deltas, {"E_v": 3.0 * deltas})
        assert rep.edge_warning
        assert rep.delta_star == deltas[0]

    def test_pathological_table_flagged(self):
        deltas = np.geomspace(0.01, 1.0, 32)
        wiggly = deltas + 1.0 / deltas + 0.8 * np.sin(12 * np.log(deltas))
        rep = optimize_delta(deltas, {"total": wiggly})
        assert rep.pathological

    def test_validation(self):
        with pytest.raises(ConfigError):
            optimize_delta(np.geomspace(0.1, 1.0, 4), {"E_v": np.ones(4)})
        with pytest.raises(ConfigError):
            optimize_delta(np.geomspace(0.1, 1.0, 8), {"E_v": np.ones(8)})

    def test_accepts_budget_list(self):
        deltas = np.geomspace(0.01, 1.0, 8)
        budgets = [
            ErrorBudget(
                delta=d,
                E_v=2.0 * d,
                E_f=0.0,
                E_H=0.5 / d,
                E_K=0.0,
                E_L=0.0,
                R_v=0.0,
                R_omega=0.0,
                R_alpha=0.0,
                lambdas=(1.0, 0.0, 1.0, 0.0),
                constants=(1.0, 1.0, 0.0, 1.0),
            )
            for d in deltas
        ]
        rep = optimize_delta(deltas, budgets)
        star = np.sqrt(0.5 / 2.0)
        assert abs(rep.delta_star - star) <= 0.05 * star


class TestBVModulus:
    def test_constant_field(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=64, leaf_length=1.0)
        v = SliceField(t=0.0, values=np.full(64, 0.3), mesh=mesh)
        rep = bv_modulus_check(v, flux_preset("burgers"), st, (0.2, 0.1, 0.05))
        assert np.all(rep.lhs == 0.0)
        assert np.all(rep.ratios == 0.0)
        assert rep.passed

    def test_single_jump_compatible_burgers(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=256, leaf_length=1.0)
        v = ic_preset("riemann", mesh, uL=0.0, uR=1.0)
        rep = bv_modulus_check(
            v, flux_preset("burgers"), st, (0.2, 0.1, 0.05, 0.025)
        )
        assert rep.compatible
        assert abs(rep.beta - 1.0) <= 1e-9
        assert rep.div_l1 <= 1e-12
        assert np.all(rep.lhs > 0)
        assert rep.passed  # max/min ratio within factor 2

    def test_expanding_leaf_general_clause(self):
        st = flrw(t_max=1.0)
        mesh = LeafMesh(n_cells=128, leaf_length=1.0)
        v = ic_preset("sine", mesh, amp=0.5)
        rep = bv_modulus_check(v, frozen_flux(), st, (0.2, 0.1, 0.05))
        assert not rep.compatible
        assert rep.div_l1 > 0.01
        assert rep.passed

    def test_window_must_fit_foliation(self):
        st = minkowski(t_max=0.3)
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        v = ic_preset("riemann", mesh, uL=0.0, uR=1.0)
        with pytest.raises(ConfigError):
            bv_modulus_check(v, flux_preset("burgers"), st, (0.2, 0.1))


class TestContraction:
    def test_identical_data(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=64, leaf_length=1.0)
        u0 = ic_preset("sine", mesh, amp=0.5)
        cfg = SchemeConfig(n_cells=64, cfl=0.45, store_every=1)
        f = flux_preset("burgers")
        a = evolve_hyperbolic(st, f, u0, 0.5, cfg)
        b = evolve_hyperbolic(st, f, u0, 0.5, cfg)
        rep = contraction_check(a, b, f, st)
        assert rep.passed
        assert np.all(rep.distances == 0.0)

    def test_flat_burgers_decreasing(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=128, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=128, cfl=0.45, store_every=1)
        f = flux_preset("burgers")
        a = evolve_hyperbolic(st, f, ic_preset("sine", mesh, amp=0.5), 1.0, cfg)
        b = evolve_hyperbolic(st, f, ic_preset("square", mesh, h=0.5, w=0.5), 1.0, cfg)
        rep = contraction_check(a, b, f, st)
        assert rep.passed
        assert rep.max_increase <= 1e-12 * rep.distances[0]
        assert rep.distances[-1] < rep.distances[0]

    def test_expanding_leaf_compatible(self):
        st = flrw(t_max=1.0)
        mesh = LeafMesh(n_cells=96, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=96, cfl=0.45, store_every=1)
        f = flux_preset("flrw-compatible")
        a = evolve_hyperbolic(st, f, ic_preset("square", mesh, h=0.5, w=0.5), 0.8, cfg)
        b = evolve_hyperbolic(st, f, ic_preset("sine", mesh, amp=0.5), 0.8, cfg)
        rep = contraction_check(a, b, f, st)
        assert rep.passed

    def test_mesh_mismatch_rejected(self):
        st = minkowski()
        cfg32 = SchemeConfig(n_cells=32, cfl=0.45, store_every=1)
        cfg64 = SchemeConfig(n_cells=64, cfl=0.45, store_every=1)
        f = flux_preset("burgers")
        m32 = LeafMesh(n_cells=32, leaf_length=1.0)
        m64 = LeafMesh(n_cells=64, leaf_length=1.0)
        a = evolve_hyperbolic(st, f, ic_preset("sine", m32, amp=0.5), 0.2, cfg32)
        b = evolve_hyperbolic(st, f, ic_preset("sine", m64, amp=0.5), 0.2, cfg64)
        with pytest.raises(MeshMismatchError):
            contraction_check(a, b, f, st)


class TestFluxComparison:
    def run_pair(self, eta, n=128, T=0.6):
        st = minkowski()
        mesh = LeafMesh(n_cells=n, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=n, cfl=0.45, store_every=1)
        f = flux_preset("burgers")
        ft = perturbed_burgers(eta) if eta else f
        u0 = ic_preset("sine", mesh, amp=0.5)
        u = evolve_hyperbolic(st, ft, u0, T, cfg)
        v = evolve_hyperbolic(st, f, u0, T, cfg)
        return st, f, ft, u, v

    def test_identical_fluxes(self):
        st, f, ft, u, v = self.run_pair(0.0)
        rep = flux_comparison_bounds(u, v, f, ft, st)
        assert rep.q == 0.0
        assert rep.rhs_ap20 == 0.0
        assert rep.observed_lhs <= 1e-12

    def test_linearity_in_eta(self):
        etas = np.array([0.04, 0.02, 0.01])
        obs, rhs = [], []
        for eta in etas:
            st, f, ft, u, v = self.run_pair(float(eta))
            rep = flux_comparison_bounds(u, v, f, ft, st)
            obs.append(rep.observed_lhs)
            rhs.append(rep.rhs_ap20)
        obs = np.array(obs)
        rhs = np.array(rhs)
        assert np.all(obs > 0)
        slope = np.polyfit(np.log(etas), np.log(obs), 1)[0]
        assert 0.85 <= slope <= 1.15
        assert np.all(obs <= 5.0 * rhs)  # same order; calibration happens later

    def test_ap30_square_root_structure(self):
        st, f, ft, u, v = self.run_pair(0.04, n=64, T=0.4)
        rep = flux_comparison_bounds(
            u, v, f, ft, st, A=1.0, c_high=1.0, b=1.27, delta_grid=(0.06, 0.12)
        )
        st2, f2, ft2, u2, v2 = self.run_pair(0.01, n=64, T=0.4)
        rep2 = flux_comparison_bounds(
            u2, v2, f2, ft2, st2, A=1.0, c_high=1.0, b=1.27, delta_grid=(0.06, 0.12)
        )
        assert rep.rhs_ap30 > 0
        # W scales with Q (linear in eta), so the sqrt part scales by 2.
        assert abs(rep.sqrt_term / rep2.sqrt_term - 2.0) <= 0.2
        assert rep.rbar_v > 0


class TestDiffusionBounds:
    def test_zero_viscosity_is_contractive(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=64, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=64, cfl=0.45, store_every=None)
        f = flux_preset("burgers")
        u0 = ic_preset("sine", mesh, amp=0.5)
        a = evolve_diffusion(st, f, lambda u: 0.0 * u, u0, 0.4, cfg, lip_phi=0.0)
        b = evolve_hyperbolic(st, f, u0, 0.4, cfg)
        d0 = l1_flux_distance(a.initial(), b.initial(), f, st)
        dT = l1_flux_distance(a.final(), b.final(), f, st)
        assert dT - d0 <= 1e-12

    def test_sqrt_rate_sweep(self):
        # Single-frequency data sits in the near-linear regime (isolated
        # shocks smear at cost O(eps)); the square-root rate needs
        # structure across the whole range of viscous widths, which the
        # octave cascade provides.
        st = minkowski()
        n, T = 2048, 0.15
        mesh = LeafMesh(n_cells=n, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=n, cfl=0.45, store_every=None)
        f = flux_preset("burgers")
        u0 = ic_preset("multisine", mesh, amp=0.4, levels=8)
        v = evolve_hyperbolic(st, f, u0, T, cfg)
        eps = [1e-2, 10**-2.5, 1e-3]
        trajs = [
            evolve_diffusion(
                st, f, (lambda e: lambda u: e * u)(e), u0, T, cfg,
                lip_phi=e, phi_poly=(0.0, e),
            )
            for e in eps
        ]
        rep = diffusion_bounds(trajs, v, eps, eps, f, st)
        assert np.all(rep.observed > 0)
        assert 0.40 <= rep.exponent <= 0.60
        assert rep.exponent >= 1.0 / 3.0 - 0.05
        assert np.all(rep.nd20 > 0)
        assert np.all(rep.nd30 > 0)
        # the two bound shapes scale as sqrt(eps) and eps^(1/3)
        r20 = rep.nd20[0] / rep.nd20[2]
        assert abs(r20 - np.sqrt(10.0)) <= 0.3
        r30 = rep.nd30[0] / rep.nd30[2]
        assert abs(r30 / 10 ** (1.0 / 3.0) - 1.0) <= 0.2

    def test_too_few_points_rejected(self):
        st = minkowski()
        mesh = LeafMesh(n_cells=32, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=32, cfl=0.45, store_every=None)
        f = flux_preset("burgers")
        u0 = ic_preset("sine", mesh, amp=0.5)
        v = evolve_hyperbolic(st, f, u0, 0.1, cfg)
        u = evolve_diffusion(st, f, lambda u_: 0.01 * u_, u0, 0.1, cfg, lip_phi=0.01)
        with pytest.raises(ConfigError):
            diffusion_bounds([u, u], v, [0.01, 0.01], [0.01, 0.01], f, st)


class TestCalibration:
    def test_round_up_sigfig(self):
        assert round_up_sigfig(0.0234) == 0.03
        assert round_up_sigfig(1.0) == 1.0
        assert round_up_sigfig(9.01) == 10.0
        assert round_up_sigfig(0.1) == 0.1
        assert round_up_sigfig(0.0) == 1.0

    def test_calibrate_constant(self):
        c = calibrate_constant([1.7, 0.3], [1.0, 1.0])
        assert c == 2.0
        assert calibrate_constant([-0.5, 0.0], [1.0, 1.0]) == 1.0


class TestBudgetAssembly:
    def test_flat_viscous_budget_end_to_end(self):
        st = minkowski()
        n, T, eps = 64, 0.3, 1e-3
        mesh = LeafMesh(n_cells=n, leaf_length=1.0)
        cfg = SchemeConfig(n_cells=n, cfl=0.45, store_every=1)
        f = flux_preset("burgers")
        u0 = ic_preset("sine", mesh, amp=0.5)
        v = evolve_hyperbolic(st, f, u0, T, cfg)
        u = evolve_diffusion(
            st, f, lambda w: eps * w, u0, T, cfg, lip_phi=eps, phi_poly=(0.0, eps)
        )
        fam = ViscosityFamily(phi=lambda w: eps * w, lip=eps, q=eps)
        meas = extract_error_measures(fam, u, f, st)
        lams = lambda_constants(f, st)
        deltas = np.geomspace(0.004, 0.4, 7)
        budgets = [
            error_budget(
                v, meas, f, st, float(d), lams, A=0.5, b=1.27, c_high=1.0,
                n_times=5, with_R=(i == 3),
            )
            for i, d in enumerate(deltas)
        ]
        for bgt in budgets:
            assert bgt.E_f == 0.0  # compatible flux
            assert bgt.E_K == 0.0
            assert min(bgt.E_v, bgt.E_H, bgt.E_L) >= 0.0
        observed = l1_flux_distance(u.final(), v.final(), f, st) - l1_flux_distance(
            u.initial(), v.initial(), f, st
        )
        rep = bound_report(observed, deltas, budgets, C=1.0)
        assert rep.rhs_star > 0
        assert rep.delta_star in deltas
        c_needed = calibrate_constant([rep.observed_lhs], [rep.rhs_star])
        rep2 = bound_report(observed, deltas, budgets, C=c_needed)
        assert rep2.verdict
        assert rep2.ratio <= 1.0 + 1e-12
