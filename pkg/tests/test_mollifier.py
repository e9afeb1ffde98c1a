"""Tests for geodesic mollifier families and their admissibility checks."""

import numpy as np
import pytest

from slicelab.errors import ConfigError, DomainError
from slicelab.flux import flux_preset
from slicelab.geometry import Point, companion_distance, geodesic_ball, metric_preset
from slicelab.mollifier import (
    AdmissibilityReport,
    MollifierFamily,
    build,
    verify_admissibility,
)


def minkowski(t_max=1.0):
    return metric_preset("minkowski", t_max=t_max)


def warped(t_max=2.0):
    return metric_preset("warped", t_max=t_max)


# Small verifier settings for unit tests; production defaults are larger.
FAST = dict(n_points=24, n_gamma=6, n_phi=4, p_quad=(4, 4))


# ---------------------------------------------------------------------------
# family construction


class TestBuild:
    def test_unit_mass_plateau(self):
        st = minkowski()
        fam = build(st, 0.1)
        for p in [Point(0.5, 0.3), Point(0.3, 0.9), Point(0.62, 0.11)]:
            ball = fam.support(p)
            vals = fam.values(p)
            T = ball.t_nodes[:, None]
            X = st.wrap_x(ball.x_nodes)[None, :]
            w = st.density(T, X) * ball.grid_step_t * ball.grid_step_x
            assert abs(np.sum(vals * w) - 1.0) <= 1e-6

    def test_unit_mass_bump(self):
        st = minkowski()
        fam = build(st, 0.1, profile="bump")
        p = Point(0.5, 0.25)
        ball = fam.support(p)
        vals = fam.values(p)
        T = ball.t_nodes[:, None]
        X = st.wrap_x(ball.x_nodes)[None, :]
        w = st.density(T, X) * ball.grid_step_t * ball.grid_step_x
        assert abs(np.sum(vals * w) - 1.0) <= 1e-6

    def test_unit_mass_warped_geometry(self):
        st = warped()
        fam = build(st, 0.1)
        p = Point(1.0, 0.4)
        ball = fam.support(p)
        vals = fam.values(p)
        T = ball.t_nodes[:, None]
        X = st.wrap_x(ball.x_nodes)[None, :]
        w = st.density(T, X) * ball.grid_step_t * ball.grid_step_x
        assert abs(np.sum(vals * w) - 1.0) <= 1e-6

    def test_nonnegative_and_vanishes_outside_support(self):
        st = minkowski()
        fam = build(st, 0.1)
        p = Point(0.5, 0.5)
        ball = fam.support(p)
        vals = fam.values(p)
        assert np.all(vals >= 0.0)
        assert np.all(vals[~ball.mask] == 0.0)
        # point evaluation far outside the ball is exactly zero
        q = Point(0.5, 0.5 + 0.3)
        assert companion_distance(st, p, q) > 0.1
        assert fam.xi(p, q) == 0.0

    def test_sup_matches_dense_grid_oracle(self):
        # brute-force maximum of the bump family over a finer grid
        st = minkowski()
        delta = 0.1
        fam = build(st, delta, profile="bump")
        p = Point(0.5, 0.5)
        sup = fam.sup_xi(p)

        fine = geodesic_ball(st, p, delta, grid_step=delta / 48.0)
        r = fine.dist / delta
        zeta = np.zeros_like(r)
        inside = r < 1.0
        zeta[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        T = fine.t_nodes[:, None]
        X = st.wrap_x(fine.x_nodes)[None, :]
        w = st.density(T, X) * fine.grid_step_t * fine.grid_step_x
        z_fine = float(np.sum(zeta * w))
        oracle = float(np.max(zeta)) / z_fine
        assert abs(sup - oracle) <= 2e-2 * oracle

    def test_sup_scaling_power_law(self):
        # halving delta multiplies the sup by about 2**2 = 4
        st = minkowski()
        p = Point(0.5, 0.5)
        for profile in ("plateau", "bump"):
            s1 = build(st, 0.1, profile=profile).sup_xi(p)
            s2 = build(st, 0.05, profile=profile).sup_xi(p)
            ratio = s2 / s1
            assert 4.0 * 0.85 <= ratio <= 4.0 * 1.15

    def test_plateau_supnorm_product(self):
        # sup xi times support volume stays within quadrature slack of one
        for st, pts in [
            (minkowski(), [Point(0.5, 0.1), Point(0.4, 0.7)]),
            (warped(), [Point(1.0, 0.2), Point(0.8, 0.6)]),
        ]:
            fam = build(st, 0.1)
            for p in pts:
                prod = fam.sup_xi(p) * fam.support_volume(p)
                assert prod <= 1.0 + 1e-3

    def test_bump_supnorm_product_is_large(self):
        # smooth bumps concentrate mass; the sup-volume product is far
        # above one, which is exactly what the admissibility check flags
        st = minkowski()
        fam = build(st, 0.1, profile="bump")
        p = Point(0.5, 0.5)
        prod = fam.sup_xi(p) * fam.support_volume(p)
        assert prod > 2.0

    def test_delta_too_large_rejected(self):
        st = minkowski()
        with pytest.raises(DomainError):
            build(st, 0.6).support(Point(0.5, 0.5))

    def test_unknown_profile_rejected(self):
        with pytest.raises(ConfigError):
            build(minkowski(), 0.1, profile="triangle")


# ---------------------------------------------------------------------------
# admissibility verification


class TestVerifier:
    def test_report_reproducible_and_finite(self):
        st = minkowski()
        fam = build(st, 0.1)
        f = flux_preset("burgers")
        r1 = verify_admissibility(fam, f, st, seed=7, **FAST)
        r2 = verify_admissibility(fam, f, st, seed=7, **FAST)
        assert r1 == r2
        for v in (
            r1.unit_mass_residual,
            r1.supnorm_margin,
            r1.differential_constant,
            r1.differential_constant_dx,
            r1.symmetry_constant_A,
            r1.phi_const_lhs,
        ):
            assert np.isfinite(v)
        assert r1.grid == fam.grid
        assert r1.seed == 7
        assert not r1.inadmissible_on_test_set

    def test_residuals_small_for_plateau(self):
        st = minkowski()
        fam = build(st, 0.1)
        f = flux_preset("burgers")
        rep = verify_admissibility(fam, f, st, seed=3, **FAST)
        assert rep.unit_mass_residual <= 1e-6
        assert rep.supnorm_margin <= 1e-3

    def test_bump_flagged_inadmissible(self):
        st = minkowski()
        fam = build(st, 0.1, profile="bump")
        f = flux_preset("burgers")
        rep = verify_admissibility(fam, f, st, seed=3, **FAST)
        assert rep.inadmissible_on_test_set
        assert rep.supnorm_margin > 1.0

    def test_symmetric_sum_vanishes_for_constant_phi(self):
        # with a closed test form (burgers on a flat cylinder the form
        # derivative is state-independent and exact), the two halves of
        # the symmetry condition cancel for phi == 1
        st = minkowski()
        fam = build(st, 0.1)
        f = flux_preset("burgers")
        rep = verify_admissibility(fam, f, st, seed=5, n_points=24, n_gamma=4, n_phi=3, p_quad=(6, 6))
        assert abs(rep.phi_const_lhs) <= 1e-3 * rep.domain_volume

    def test_differential_constant_positive_and_stable(self):
        # the dx-form constant approaches a geometric value (4/pi on the
        # flat cylinder) and stays put as delta shrinks
        st = minkowski()
        f = flux_preset("burgers")
        bs = []
        for delta in (0.2, 0.1, 0.05):
            fam = build(st, delta)
            rep = verify_admissibility(fam, f, st, seed=11, n_points=12, n_gamma=3, n_phi=2, p_quad=(5, 5))
            bs.append(rep.differential_constant_dx)
        assert all(b > 0.5 for b in bs)
        assert max(bs) <= 1.5 * min(bs)

    def test_constants_monotone_under_test_set_enlargement(self):
        st = minkowski()
        fam = build(st, 0.1)
        f = flux_preset("flrw-compatible")
        small = verify_admissibility(
            fam, f, st, seed=13, n_points=12, n_gamma=4, n_phi=3, p_quad=(4, 4)
        )
        large = verify_admissibility(
            fam, f, st, seed=13, n_points=12, n_gamma=10, n_phi=7, p_quad=(4, 4)
        )
        assert small.differential_constant <= large.differential_constant + 1e-12
        assert small.symmetry_constant_A <= large.symmetry_constant_A + 1e-12

    def test_symmetry_constant_positive_for_time_decaying_flux(self):
        # a time-decaying flux makes the test form genuinely non-closed,
        # so the symmetry constant is a real positive number
        st = minkowski()
        fam = build(st, 0.1)
        f = flux_preset("flrw-compatible")
        rep = verify_admissibility(fam, f, st, seed=2, **FAST)
        assert rep.symmetry_constant_A > 1e-3

    def test_band_too_narrow_rejected(self):
        st = warped(t_max=0.5)
        fam = build(st, 0.2)
        f = flux_preset("burgers")
        with pytest.raises(DomainError):
            verify_admissibility(fam, f, st, **FAST)
