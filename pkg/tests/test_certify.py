import math
from fractions import Fraction as F

import pytest

import holecert as hc
from holecert.certify import (
    CertificationConfig,
    RefinePlan,
    next_power_of_ten_bins,
    refine_with_bootstrap,
    separation_check,
)
from holecert.kl import CLOSED_ONLY, KLDomainError, kl_constants, ly_constants
from holecert.spectral import ResolventBound, SpectralStructureError

A0, B0 = F(1, 9), F(2, 9)


class TestSeparationCheck:
    def test_single_unit_eigenvalue(self):
        res = separation_check([1.0], 0.96, 1 / 26)
        assert res.passed and res.witness is None
        assert res.cluster == (1.0,)

    def test_real_violator(self):
        # |0.97 - 1| = 0.03 < 2/26: closed balls overlap
        res = separation_check([1.0, 0.97], 0.96, 1 / 26)
        assert not res.passed
        assert res.witness == 0.97

    def test_complex_pass(self):
        # |0.98 + 0.1i - 1| ~ 0.102 > 0.02
        res = separation_check([1.0, 0.98 + 0.1j], 0.96, 1 / 100)
        assert res.passed

    def test_eigenvalue_below_r_ignored(self):
        res = separation_check([1.0, 0.95], 0.96, 1 / 26)
        assert res.passed

    def test_near_unit_eigenvalue_blocks(self):
        # a distinct eigenvalue inside the delta-ball still blocks; it is
        # reported in the cluster but fails the two-ball disjointness
        res = separation_check([1.0, 1.0 - 1 / 30], 0.96, 1 / 26)
        assert not res.passed
        assert res.cluster == (1.0, 1.0 - 1 / 30)


class TestBinLadder:
    def test_power_of_ten(self):
        assert next_power_of_ten_bins(1.2607e-5) == 100000
        assert next_power_of_ten_bins(4.8e-4) == 10000
        assert next_power_of_ten_bins(2e-4) == 10000
        assert next_power_of_ten_bins(1e-4) == 10000

    def test_candidates_override(self):
        assert next_power_of_ten_bins(4.8e-4, candidates=(2500, 5000)) == 2500
        with pytest.raises(ValueError):
            next_power_of_ten_bins(1e-5, candidates=(2500, 5000))

    def test_rejects_bad_bound(self):
        with pytest.raises(ValueError):
            next_power_of_ten_bins(0.0)


class TestRefineWithBootstrap:
    def setup_method(self):
        self.ly = ly_constants(A0, B0)
        self.ly_closed = ly_constants(A0, B0, CLOSED_ONLY)

    def test_reference_transfer(self):
        plan = refine_with_bootstrap(self.ly, self.ly_closed, F(39, 40),
                                     F(1, 41), F(1, 5000), 63.73181657)
        assert plan.used_bootstrap
        assert abs(plan.transferred_H / 1036.693385 - 1) <= 0.10
        assert plan.fine_constants.n2 == 11
        assert plan.fine_constants.mesh_threshold >= 1.216687545e-5
        assert plan.n_bins == 100000
        assert plan.mesh == F(1, 100000)

    def test_fallback_to_halving(self):
        # a coarse mesh that fails even the closed-only comparison
        plan = refine_with_bootstrap(self.ly, self.ly_closed, F(39, 40),
                                     F(1, 41), F(1, 1000), 63.73181657)
        assert not plan.used_bootstrap
        assert plan.n_bins == 2000
        assert plan.transferred_H is None

    def test_reuse_when_already_fine_enough(self):
        plan = refine_with_bootstrap(self.ly, self.ly_closed, F(39, 40),
                                     F(1, 41), F(1, 10**6), 63.73181657)
        assert plan.used_bootstrap
        assert plan.n_bins == 10**6          # no refinement needed


class TestCertificateBounds:
    def make_report(self):
        m = hc.load_map(hc.bundled_map_path())
        rep = hc.CertificationReport(
            status="certified", reason=None, map_label=m.label,
            map_fingerprint=m.fingerprint, ell=F(1, 25), r=F(24, 25),
            Gamma=F(10, 9),
            escape_coefficient=1 + float((2 * A0 + B0) / (1 - F(1, 25) - F(1, 3))),
            escape_guarantee=-math.log(24 / 25),
            delta_com=F(1, 26), epsilon_com=F(1, 5000),
            hole_bound=F(10, 9) * F(1, 5000),
        )
        return rep

    def test_reference_hole(self):
        rep = self.make_report()
        # coefficient: 1 + (4/9)/(47/75) = 241/141
        assert rep.escape_coefficient == pytest.approx(float(F(241, 141)), rel=1e-12)
        res = hc.certificate_bounds(rep, F(10, 9) * F(1, 5000))
        assert res.accim_exists
        expected = float(F(241, 141)) * float(F(10, 9) / 5000)
        assert res.one_minus_eH_upper == pytest.approx(min(1 / 26, expected), rel=1e-12)
        assert res.escape_upper == pytest.approx(-math.log1p(-expected), rel=1e-12)

    def test_oversized_hole(self):
        res = hc.certificate_bounds(self.make_report(), F(1, 2))
        assert not res.accim_exists
        assert res.one_minus_eH_upper is None

    def test_zero_hole(self):
        res = hc.certificate_bounds(self.make_report(), 0)
        assert res.accim_exists
        assert res.one_minus_eH_upper == 0.0
        assert res.escape_upper == 0.0

    def test_needs_certified_report(self):
        rep = self.make_report()
        rep.status = "failed"
        with pytest.raises(ValueError):
            hc.certificate_bounds(rep, 0)


class TestConfig:
    def test_default_delta(self):
        cfg = CertificationConfig(ell=F(1, 25))
        assert cfg.initial_delta() == F(1, 26)
        cfg = CertificationConfig(ell=F(1, 40))
        assert cfg.initial_delta() == F(1, 41)
        cfg = CertificationConfig(ell=F(3, 10))
        assert cfg.initial_delta() == F(1, 5)   # ceil(10/3) + 1

    def test_delta_init_validation(self):
        with pytest.raises(ValueError):
            CertificationConfig(ell=F(1, 25), delta_init=F(2, 30))
        with pytest.raises(ValueError):
            CertificationConfig(ell=F(1, 25), delta_init=F(1, 20))

    def test_ell_validation(self):
        with pytest.raises(ValueError):
            CertificationConfig(ell=F(3, 2))


@pytest.fixture(scope="module")
def shift10_report(shift10, pipeline_cache):
    config = CertificationConfig(ell=F(1, 25), bins_init=100)
    return hc.run_certification(shift10, config, cache=pipeline_cache)


class TestRunCertification:
    def test_certifies(self, shift10_report):
        rep = shift10_report
        assert rep.certified
        assert rep.delta_com == F(1, 26)
        assert rep.epsilon_com is not None
        assert rep.hole_bound == F(11, 10) * rep.epsilon_com

    def test_internal_consistency(self, shift10_report):
        # oracle: recompute the constant chain from the logged resolvent
        # bound and confirm the certificate's comparison still holds
        rep = shift10_report
        final = [it for it in rep.iterations if it.step7_pass][-1]
        ly = ly_constants(F(1, 10), 0)
        chain = kl_constants(ly, rep.r, rep.delta_com, final.h_star)
        assert chain.mesh_threshold == pytest.approx(final.threshold, rel=1e-12)
        assert float(rep.epsilon_com) <= chain.mesh_threshold + 1e-18

    def test_mesh_monotone(self, shift10_report):
        meshes = [it.mesh for it in shift10_report.iterations]
        assert all(b <= a for a, b in zip(meshes, meshes[1:]))
        deltas = [it.delta for it in shift10_report.iterations]
        assert all(b <= a for a, b in zip(deltas, deltas[1:]))

    def test_escape_tolerance_domain(self, shift10):
        with pytest.raises(KLDomainError):
            hc.run_certification(shift10, CertificationConfig(ell=F(4, 5)))

    def test_iteration_cap_failure(self, shift10):
        config = CertificationConfig(ell=F(1, 25), bins_init=10,
                                     bin_candidates=(10, 20), max_inner=2)
        rep = hc.run_certification(shift10, config)
        assert not rep.certified
        assert "comparison" in rep.reason
        assert len(rep.iterations) == 2

    def test_rejects_large_alpha0(self, bundled_map):
        from holecert.kl import LYModeError
        tent_like = hc.PiecewiseMap(bundled_map.branches, alpha0=F(2, 5),
                                    B0=0, label="fat")
        with pytest.raises(LYModeError):
            hc.run_certification(tent_like, CertificationConfig(ell=F(1, 25)))


class TestOuterLoop:
    """Drive the separation-failure path with doctored spectral data."""

    class DoctoredCache(hc.PipelineCache):
        def __init__(self, eigenvalues):
            super().__init__(None)
            self._eigs = eigenvalues

        def spectral(self, tmap, n_bins, r, n_powers=None):
            data = super().spectral(tmap, n_bins, r, n_powers=n_powers)
            return hc.SpectralData(
                n_bins=data.n_bins, r=data.r,
                eigenvalues_above_r=tuple(self._eigs),
                invariant_density=data.invariant_density,
                projection_norm=data.projection_norm,
                q_power_norms=data.q_power_norms,
                q_power_norms_colsum=data.q_power_norms_colsum,
                truncation_N=data.truncation_N, residuals=data.residuals,
                subdominant_modulus=data.subdominant_modulus,
                spectrum_complete=data.spectrum_complete)

    def test_delta_halves_until_separation(self, shift10, monkeypatch):
        fake_bound = ResolventBound(r=0.96, delta=1 / 26, neumann_bound=2.0,
                                    resolvent_l1_bound=28.0, h_star=35.0,
                                    orientation="column")
        monkeypatch.setattr("holecert.certify.h_star",
                            lambda *a, **kw: fake_bound)
        cache = self.DoctoredCache([1.0, 0.97 + 0j])
        config = CertificationConfig(ell=F(1, 25), bins_init=2500,
                                     bin_candidates=(2500,))
        rep = hc.run_certification(shift10, config, cache=cache)
        # |0.97 - 1| = 0.03: fails at delta = 1/26 and 1/52, passes at 1/104
        assert rep.certified
        assert rep.delta_com == F(1, 104)
        deltas = [it.delta for it in rep.iterations]
        assert deltas == sorted(deltas, reverse=True)
        ks = sorted({d.denominator for d in deltas})
        assert ks == [26, 52, 104]

    def test_extra_peripheral_eigenvalue_raises_without_doctoring(self, shift10):
        cache = self.DoctoredCache([1.0, 0.97 + 0j])
        config = CertificationConfig(ell=F(1, 25), bins_init=100)
        with pytest.raises(SpectralStructureError):
            hc.run_certification(shift10, config, cache=cache)
