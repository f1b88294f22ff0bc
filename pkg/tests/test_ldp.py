"""Rate function, fluctuation-relation diagnostics, entropy production."""

import numpy as np
import pytest

from fluxnet import (
    SpecificationError,
    condition_R_scan,
    conserved_direction,
    conserved_rate,
    entropy_production,
    fr_defect,
    g_gradient,
    g_value,
    rate_function,
    steady_covariance,
)

from conftest import gap_arc_probe


class TestEntropyProduction:
    def test_equilibrium_vanishes(self, lozenge_eq, triangular_eq):
        for m in (lozenge_eq, triangular_eq):
            assert abs(entropy_production(m).ep) < 1e-9

    def test_nonequilibrium_positive(self, lozenge_124, lozenge_1264, heatpump):
        for m in (lozenge_124, lozenge_1264, heatpump):
            assert entropy_production(m).ep > 0.0

    def test_mean_flux_matches_direct_formula(self, lozenge_124, heatpump):
        # independent route: the stationary mean of the work rate is
        # gamma_i (theta_i - <p_i^2>)
        for m in (lozenge_124, heatpump):
            M = steady_covariance(m).M
            direct = m.gamma * (m.theta - np.diag(M)[m.boundary_index])
            np.testing.assert_allclose(entropy_production(m).mean_flux, direct,
                                       atol=1e-12)

    def test_heatpump_sign_pattern(self, heatpump):
        flux = entropy_production(heatpump).mean_flux
        assert flux[0] > 0.0   # hot reservoir injects
        assert flux[1] < 0.0   # cold left reservoir absorbs
        assert flux[2] < 0.0   # warmer right reservoir absorbs
        assert flux[3] > 0.0   # colder right reservoir injects (pump)

    def test_mean_flux_conserves_energy(self, heatpump):
        flux = entropy_production(heatpump).mean_flux
        assert abs(flux.sum()) < 1e-12


class TestRateFunction:
    def test_zero_at_mean(self, lozenge_124, lozenge_124_geometry):
        mean = entropy_production(lozenge_124).mean_flux
        res = rate_function(lozenge_124, lozenge_124_geometry, mean)
        assert res.interior and res.in_F0
        assert abs(res.I_value) < 1e-10
        assert np.linalg.norm(res.xi_star) < 1e-6
        assert abs(res.anomaly) < 1e-9

    def test_legendre_consistency(self, lozenge_124, lozenge_124_geometry):
        geom = lozenge_124_geometry
        rng = np.random.default_rng(0)
        for _ in range(3):
            phi = geom.from_frame(rng.normal(scale=0.3, size=2))
            res = rate_function(lozenge_124, geom, phi, with_anomaly=False)
            assert res.interior
            assert np.linalg.norm(g_gradient(lozenge_124, res.xi_star) - phi) < 1e-6
            assert res.I_value >= -1e-12

    def test_interior_anomaly_vanishes(self, lozenge_124, lozenge_124_geometry):
        geom = lozenge_124_geometry
        mean = entropy_production(lozenge_124).mean_flux
        res = rate_function(lozenge_124, geom, 1.3 * mean)
        assert res.interior and res.in_F0
        assert abs(res.anomaly) < 1e-6

    def test_convex_on_collinear_triples(self, lozenge_124,
                                         lozenge_124_geometry):
        geom = lozenge_124_geometry
        rng = np.random.default_rng(1)
        for _ in range(3):
            base = geom.from_frame(rng.normal(scale=0.2, size=2))
            step = geom.from_frame(rng.normal(scale=0.15, size=2))
            values = [rate_function(lozenge_124, geom, base + k * step,
                                    with_anomaly=False).I_value
                      for k in (-1.0, 0.0, 1.0)]
            assert values[1] <= 0.5 * (values[0] + values[2]) + 1e-8

    def test_rejects_conserved_component(self, lozenge_124,
                                         lozenge_124_geometry):
        with pytest.raises(SpecificationError, match="orthogonal"):
            rate_function(lozenge_124, lozenge_124_geometry, np.ones(3))

    def test_strong_drive_anomaly(self, lozenge_1264, lozenge_1264_geometry):
        # far down the drive direction the flux leaves the gradient image of
        # the finite region and the universal symmetry breaks
        m, geom = lozenge_1264, lozenge_1264_geometry
        mean = entropy_production(m).mean_flux
        phi = geom.from_frame(geom.to_frame(mean) + np.array([-5.65, 0.0]))
        res = rate_function(m, geom, phi)
        assert abs(res.anomaly) > 1e-3
        mirror = rate_function(m, geom, -phi, with_anomaly=False)
        assert mirror.conjectural_global and not mirror.interior

    def test_ruled_surface_identity(self, lozenge_1264, lozenge_1264_geometry):
        m, geom = lozenge_1264, lozenge_1264_geometry
        xi_b, eta = gap_arc_probe(m, geom, 0.8)
        phi0 = g_gradient(m, xi_b)
        g_b = g_value(m, xi_b, method="riccati", with_domain_data=False).g
        for lam in (0.1, 0.5, 1.0):
            shifted = rate_function(m, geom, phi0 + lam * eta,
                                    with_anomaly=False)
            predicted = float(xi_b @ (phi0 + lam * eta)) - g_b
            assert not shifted.interior
            assert abs(shifted.I_value - predicted) < 1e-5 * (1 + abs(predicted))


class TestFrDefect:
    def test_zero_flux(self, lozenge_124, lozenge_124_geometry):
        assert abs(fr_defect(lozenge_124, lozenge_124_geometry,
                             np.zeros(3))) < 1e-9

    def test_heatpump_universal(self, heatpump, heatpump_geometry):
        mean = entropy_production(heatpump).mean_flux
        rng = np.random.default_rng(2)
        for _ in range(3):
            phi = mean + heatpump_geometry.from_frame(
                rng.normal(scale=0.5 * np.linalg.norm(mean), size=3))
            assert abs(fr_defect(heatpump, heatpump_geometry, phi)) < 1e-6

    def test_strong_drive_defect(self, lozenge_1264, lozenge_1264_geometry):
        geom = lozenge_1264_geometry
        mean = entropy_production(lozenge_1264).mean_flux
        phi = geom.from_frame(geom.to_frame(mean) + np.array([-5.65, 0.0]))
        defect = fr_defect(lozenge_1264, geom, phi)
        assert abs(defect) > 1e-3


class TestConditionR:
    def test_verdicts(self, lozenge_eq, lozenge_1264, triangular_eq, heatpump):
        from fluxnet import lineality_space
        expectations = [(lozenge_eq, True), (lozenge_1264, False),
                        (triangular_eq, True), (heatpump, True)]
        for model, expected in expectations:
            scan = condition_R_scan(model, lineality_space(model), 16)
            assert scan.condition_R == expected

    def test_minimum_matches_flag(self, lozenge_124, lozenge_124_geometry):
        scan = condition_R_scan(lozenge_124, lozenge_124_geometry, 8)
        assert scan.condition_R == (scan.min_gap > 0.0)
        assert scan.gap.min() == scan.min_gap

    def test_requires_enough_directions(self, lozenge_124,
                                        lozenge_124_geometry):
        with pytest.raises(SpecificationError):
            condition_R_scan(lozenge_124, lozenge_124_geometry, 4)


class TestConservedRate:
    def test_zero_flux(self, lozenge_124):
        assert conserved_rate(lozenge_124, np.ones(3), 0.0) == 0.0

    def test_even_function(self, lozenge_124):
        rng = np.random.default_rng(3)
        for q in rng.normal(size=4):
            plus = conserved_rate(lozenge_124, np.ones(3), q)
            minus = conserved_rate(lozenge_124, np.ones(3), -q)
            assert plus == minus >= 0.0

    def test_equilibrium_unit_slope(self, lozenge_eq):
        data = conserved_direction(lozenge_eq, np.ones(3))
        assert abs(data.rate_slope - 1.0) < 1e-9
        assert np.linalg.eigvalsh(data.N)[0] >= -1e-12

    def test_rejects_generic_tilt(self, lozenge_124):
        with pytest.raises(SpecificationError, match="lineality"):
            conserved_rate(lozenge_124, np.array([1.0, 0.0, 0.0]), 1.0)

    def test_indefinite_lift_shifted(self, lozenge_124):
        data = conserved_direction(lozenge_124, -np.ones(3))
        assert data.shift > 0.0
        assert np.linalg.eigvalsh(data.xi_tilde)[0] >= -1e-12
