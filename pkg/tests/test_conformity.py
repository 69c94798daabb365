"""Guard-banded conformity zones from an expanded-uncertainty interval."""

import numpy as np
import pytest

from uncertlab.conformity import (ZONES, Specification, classify,
                                  classify_virtual)
from uncertlab.errors import ConfigError
from uncertlab.vi import VirtualMeasurementResult


class TestSpecification:
    def test_width(self):
        assert Specification(1.0, 3.0).width == 2.0

    def test_degenerate_limits_rejected(self):
        with pytest.raises(ConfigError):
            Specification(2.0, 2.0)
        with pytest.raises(ConfigError):
            Specification(3.0, 1.0)


class TestZones:
    SPEC = Specification(10.0, 10.2)

    def test_center_conforms(self):
        d = classify(10.1, 0.02, self.SPEC)
        assert d.zone == "conformity"
        assert d.resulting_tolerance == (pytest.approx(10.02),
                                         pytest.approx(10.18))
        assert not d.no_reliable_zone

    def test_guard_band_is_uncertain(self):
        assert classify(10.19, 0.02, self.SPEC).zone == "uncertainty_upper"
        assert classify(10.01, 0.02, self.SPEC).zone == "uncertainty_lower"

    def test_clear_violation_is_nonconforming(self):
        assert classify(10.25, 0.02, self.SPEC).zone == "non_conformity_upper"
        assert classify(9.9, 0.02, self.SPEC).zone == "non_conformity_lower"

    def test_boundary_on_guard_band_edge_conforms(self):
        # closed acceptance zone: y exactly at lsl+U conforms
        d = classify(10.02, 0.02, self.SPEC)
        assert d.zone == "conformity"

    def test_boundary_at_limit_plus_u_is_still_uncertain(self):
        # non-conformity needs strict exceedance of usl+U
        d = classify(self.SPEC.usl + 0.02, 0.02, self.SPEC)
        assert d.zone == "uncertainty_upper"

    def test_zero_u_degenerates_to_plain_comparison(self):
        for y in np.linspace(9.9, 10.3, 81):
            zone = classify(float(y), 0.0, self.SPEC).zone
            if 10.0 <= y <= 10.2:
                assert zone == "conformity"
            elif y < 10.0:
                assert zone == "non_conformity_lower"
            else:
                assert zone == "non_conformity_upper"

    def test_wide_uncertainty_flags_no_reliable_zone(self):
        d = classify(10.1, 0.15, self.SPEC)
        assert d.no_reliable_zone
        assert d.resulting_tolerance is None
        assert d.zone in ("uncertainty_lower", "uncertainty_upper")

    def test_negative_u_rejected(self):
        with pytest.raises(ConfigError):
            classify(10.1, -0.01, self.SPEC)


class TestPartitionProperties:
    def test_exactly_one_zone_fires(self):
        rng = np.random.default_rng(123)
        for _ in range(2000):
            lsl = rng.uniform(-5, 5)
            usl = lsl + rng.uniform(0.5, 4.0)
            spec = Specification(lsl, usl)
            u = rng.uniform(0.0, 0.49) * (usl - lsl)
            y = rng.uniform(lsl - 2, usl + 2)
            d = classify(y, u, spec)
            assert d.zone in ZONES
            # re-derive zone membership independently
            in_conf = lsl + u <= y <= usl - u
            in_nc = y < lsl - u or y > usl + u
            if in_conf:
                assert d.zone == "conformity"
            elif in_nc:
                assert d.zone.startswith("non_conformity")
            else:
                assert d.zone.startswith("uncertainty")

    def test_monotone_in_u(self):
        # growing U can only move a point conf -> unc -> never back
        rng = np.random.default_rng(321)
        order = {"conformity": 0, "uncertainty_lower": 1,
                 "uncertainty_upper": 1, "non_conformity_lower": 1,
                 "non_conformity_upper": 1}
        for _ in range(500):
            spec = Specification(0.0, 1.0)
            y = rng.uniform(0.0, 1.0)  # inside the limits
            last = 0
            for u in np.linspace(0.0, 0.49, 20):
                zone = classify(float(y), float(u), spec).zone
                assert zone in ("conformity", "uncertainty_lower",
                                "uncertainty_upper")
                rank = order[zone]
                assert rank >= last
                last = rank


class TestVirtualClassification:
    def test_uses_k_sigma_as_u(self):
        vm = VirtualMeasurementResult(
            y_hat=10.1, sigma_hat=0.01, aleatoric_var=5e-5,
            epistemic_var=5e-5, k=2.0, interval=(10.08, 10.12),
            n_posterior_samples=100, seed=0)
        d = classify_virtual(vm, Specification(10.0, 10.2))
        assert d.U == pytest.approx(0.02, rel=1e-12)
        assert d.zone == "conformity"

    def test_wide_predictive_spread_flags_no_zone(self):
        vm = VirtualMeasurementResult(
            y_hat=5.0, sigma_hat=3.0, aleatoric_var=4.5, epistemic_var=4.5,
            k=2.0, interval=(-1.0, 11.0), n_posterior_samples=100, seed=0)
        d = classify_virtual(vm, Specification(0.0, 10.0))
        assert d.no_reliable_zone  # 2U = 12 exceeds the 10-wide window
        assert d.resulting_tolerance is None

    def test_decision_dict_round_trips_json(self):
        import json
        d = classify(10.1, 0.02, Specification(10.0, 10.2))
        doc = d.to_dict()
        json.dumps(doc)
        assert doc["zone"] == "conformity"
