from dataclasses import replace

import pytest

from diqrng.presets import published_timing
from diqrng.spacetime import (
    TimingConfig,
    check_emission_separation,
    check_measurement_separation,
    separation_report,
)

# slacks frozen from hand arithmetic on the preset values with
# c = 0.299792458 m/ns: (93+90)/c = 610.4223 ns, (194-175)/c = 63.3772 ns
EXPECTED_M1 = 85.7995
EXPECTED_M2 = 56.0451
EXPECTED_E1 = 45.1003
EXPECTED_E2 = 46.4705


def test_published_measurement_slacks():
    s1, s2 = check_measurement_separation(published_timing())
    assert s1 == pytest.approx(EXPECTED_M1, abs=1e-3)
    assert s2 == pytest.approx(EXPECTED_M2, abs=1e-3)
    assert s1 > 0 and s2 > 0


def test_published_emission_slacks():
    sa, sb = check_emission_separation(published_timing())
    assert sa == pytest.approx(EXPECTED_E1, abs=1e-3)
    assert sb == pytest.approx(EXPECTED_E2, abs=1e-3)
    assert sa > 0 and sb > 0


def test_alternate_detector_response_value():
    # with the 50 ns variant the second measurement slack gains 5 ns
    s1, s2 = check_measurement_separation(published_timing(t_m1=50.0))
    assert s2 == pytest.approx(EXPECTED_M2 + 5.0, abs=1e-3)
    assert s1 == pytest.approx(EXPECTED_M1, abs=1e-3)
    with pytest.raises(ValueError):
        published_timing(t_m1=60.0)


def test_zero_budget_passes_by_lightcone():
    cfg = TimingConfig(dist_sa=93.0, dist_sb=90.0, len_sa=93.0, len_sb=90.0,
                       t_e=0, t_qrng1=0, t_qrng2=0, t_delay1=0, t_delay2=0,
                       t_pc1=0, t_pc2=0, t_m1=0, t_m2=0)
    s1, s2 = check_measurement_separation(cfg)
    lightcone = (93.0 + 90.0) / cfg.c
    assert s1 == pytest.approx(lightcone + (93.0 - 90.0) / cfg.c)
    assert s2 == pytest.approx(lightcone - (93.0 - 90.0) / cfg.c)
    assert s1 > 0 and s2 > 0


def test_inflated_delay_fails():
    cfg = replace(published_timing(), t_delay1=270.0 + 200.0)
    s1, _ = check_measurement_separation(cfg)
    assert s1 < 0
    assert s1 == pytest.approx(EXPECTED_M1 - 200.0, abs=1e-3)


def test_emission_boundary_case():
    # optical path equal to the straight line, no delays: slack is t_pc
    cfg = TimingConfig(dist_sa=100.0, dist_sb=100.0, len_sa=100.0, len_sb=100.0,
                       t_e=0, t_qrng1=0, t_qrng2=0, t_delay1=0, t_delay2=0,
                       t_pc1=7.0, t_pc2=0.0, t_m1=0, t_m2=0)
    sa, sb = check_emission_separation(cfg)
    assert sa == pytest.approx(7.0)
    assert sb == pytest.approx(0.0)  # marginal: exactly on the light cone


def test_affine_unit_perturbations():
    base = published_timing()
    m1, m2 = check_measurement_separation(base)
    e1, e2 = check_emission_separation(base)
    cases = [
        ("t_qrng1", (m1 - 1, m2), (e1, e2)),
        ("t_delay2", (m1, m2 - 1), (e1, e2 + 1)),
        ("t_pc1", (m1 - 1, m2), (e1 + 1, e2)),
        ("t_m1", (m1, m2 - 1), (e1, e2)),
        ("t_m2", (m1 - 1, m2), (e1, e2)),
        ("t_e", (m1 - 1, m2 - 1), (e1, e2)),
    ]
    for field, want_m, want_e in cases:
        bumped = replace(base, **{field: getattr(base, field) + 1.0})
        got_m = check_measurement_separation(bumped)
        got_e = check_emission_separation(bumped)
        assert got_m == pytest.approx(want_m, abs=1e-9), field
        assert got_e == pytest.approx(want_e, abs=1e-9), field


def test_party_relabeling_symmetry():
    base = published_timing()
    swapped = TimingConfig(
        dist_sa=base.dist_sb, dist_sb=base.dist_sa,
        len_sa=base.len_sb, len_sb=base.len_sa,
        t_e=base.t_e,
        t_qrng1=base.t_qrng2, t_qrng2=base.t_qrng1,
        t_delay1=base.t_delay2, t_delay2=base.t_delay1,
        t_pc1=base.t_pc2, t_pc2=base.t_pc1,
        t_m1=base.t_m2, t_m2=base.t_m1,
    )
    assert separation_report(base)["all_pass"] == separation_report(swapped)["all_pass"]
    m = check_measurement_separation(base)
    ms = check_measurement_separation(swapped)
    assert ms == pytest.approx((m[1], m[0]), abs=1e-12)
    e = check_emission_separation(base)
    es = check_emission_separation(swapped)
    assert es == pytest.approx((e[1], e[0]), abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError, match="shorter than the straight line"):
        TimingConfig(dist_sa=100.0, dist_sb=90.0, len_sa=99.0, len_sb=175.0,
                     t_e=0, t_qrng1=0, t_qrng2=0, t_delay1=0, t_delay2=0,
                     t_pc1=0, t_pc2=0, t_m1=0, t_m2=0)
    with pytest.raises(ValueError, match="non-negative"):
        TimingConfig(dist_sa=-1.0, dist_sb=90.0, len_sa=100.0, len_sb=175.0,
                     t_e=0, t_qrng1=0, t_qrng2=0, t_delay1=0, t_delay2=0,
                     t_pc1=0, t_pc2=0, t_m1=0, t_m2=0)


def test_report_round_trip_and_terms():
    rep = separation_report(published_timing())
    assert rep["all_pass"] is True
    assert len(rep["checks"]) == 4
    for check in rep["checks"]:
        assert check["slack_ns"] == pytest.approx(
            check["terms"]["lightcone_ns"] - check["terms"]["budget_ns"])
    cfg = TimingConfig.from_json_dict(rep["config"])
    assert cfg == published_timing()
