import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aopoffload.commplan import (REASON_LOCAL, REASON_NO_COVERAGE, REASON_NO_DWELL, Assignment, RatPlanEntry,
                                 cellular_rate, cellular_rate_from_snr, channel_gain_ref, contention, plan_geometry,
                                 route_geometry, select_rat, snr_at, traffic_volumes, wifi_rate)
from aopoffload.errors import AdmissionError, DomainError
from aopoffload.topology import Rat, Task, Vehicle


def test_geometry_example():
    e = plan_geometry(1000.0, math.radians(30), 600.0, 5.0)
    assert e.perp_distance == pytest.approx(500.0)
    assert e.remaining_distance == pytest.approx(866.0254, abs=1e-3)
    assert e.preselect_prob == pytest.approx(500 / 600)
    assert e.dwell_time == pytest.approx(120.0)


def test_preselection_cases():
    assert plan_geometry(400.0, 0.0, 600.0, 5.0).preselect_prob == 1.0
    far = plan_geometry(700.0, math.pi / 2, 600.0, 5.0)
    assert far.perp_distance == pytest.approx(700.0) and far.preselect_prob == 0.0


@given(st.floats(0.0, 5000.0), st.floats(0.0, math.pi / 2), st.floats(1.0, 2000.0), st.floats(0.5, 40.0))
def test_geometry_invariants(g, alpha, cov, speed):
    e = plan_geometry(g, alpha, cov, speed)
    assert 0.0 <= e.preselect_prob <= 1.0
    assert e.perp_distance >= 0 and e.remaining_distance >= 0 and e.dwell_time > 0
    assert e.perp_distance ** 2 + e.remaining_distance ** 2 == pytest.approx(g * g, rel=1e-9, abs=1e-9)


def test_geometry_domain_errors():
    with pytest.raises(DomainError):
        plan_geometry(10.0, 0.1, 0.0, 5.0)
    v = Vehicle(0, [[0, 0], [0, 0]], 5.0, 2e9, 100.0, 0.5, 1e-13)
    rat = Rat("s", "wifi", np.array([10.0, 0.0]), 600.0, 0, 1e10, 1e8, 3.5e9, 0.8)
    with pytest.raises(DomainError):
        route_geometry(v, rat)


def test_route_geometry_uses_acute_angle():
    v = Vehicle(0, [[0, 0], [1000, 0]], 10.0, 2e9, 100.0, 0.5, 1e-13)
    ahead = Rat("a", "wifi", np.array([300.0, 400.0]), 600.0, 0, 1e10, 1e8, 3.5e9, 0.8)
    behind = Rat("b", "wifi", np.array([-300.0, 400.0]), 600.0, 0, 1e10, 1e8, 3.5e9, 0.8)
    ea, eb = route_geometry(v, ahead), route_geometry(v, behind)
    assert ea.geo_distance == pytest.approx(500.0)
    assert ea.perp_distance == pytest.approx(400.0) and eb.perp_distance == pytest.approx(400.0)
    assert ea.remaining_distance == pytest.approx(300.0)
    assert ea.entry_distance == pytest.approx(200.0)


def wifi(rate=3.5e9, eff=0.8):
    return Rat("w", "wifi", np.zeros(2), 600.0, 0, 1e10, 1e8, rate, eff)


def test_wifi_rate_examples():
    assert wifi_rate(wifi(eff=1.0), 1) == pytest.approx(3.5e9)
    assert wifi_rate(wifi(), 4, xi=lambda n: 0.85) == pytest.approx(595e6)
    assert wifi_rate(wifi(), 4) == pytest.approx(0.8 * 3.5e9 / (4 * 1.15))
    assert wifi_rate(wifi(), 8, xi=lambda n: 0.85) == pytest.approx(wifi_rate(wifi(), 4, xi=lambda n: 0.85) / 2)
    with pytest.raises(DomainError):
        wifi_rate(wifi(), 0)
    rates = [wifi_rate(wifi(), n) for n in range(1, 30)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert contention(1) == 1.0


def test_cellular_rate_examples():
    assert cellular_rate_from_snr(1.0, 1.0, 20e6)[0] == pytest.approx(1.0)
    assert cellular_rate_from_snr(3.0, 1.0, 20e6)[1] == pytest.approx(40e6)
    assert cellular_rate_from_snr(1e6, 0.0, 20e6)[1] == 0.0
    with pytest.raises(DomainError):
        cellular_rate_from_snr(1.0, 1.5, 20e6)


def test_reference_snr_calibration():
    g0 = channel_gain_ref(0.5, 1e-13)
    assert snr_at(100.0, 0.5, 1e-13, g0) == pytest.approx(100.0)
    assert snr_at(200.0, 0.5, 1e-13, g0) == pytest.approx(100.0 / 16)
    assert snr_at(0.0, 0.5, 1e-13, g0) == snr_at(1.0, 0.5, 1e-13, g0)
    v = Vehicle(0, [[0, 0], [1, 0]], 5.0, 2e9, 100.0, 0.5, 0.0)
    cell = Rat("c", "ru", np.zeros(2), 800.0, 0, 1e10, 20e6, 1e9, 1.0)
    with pytest.raises(DomainError):
        cellular_rate(v, cell, 1.0, 100.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e4), st.floats(0, 1e4))
def test_cellular_monotone(a1, a2, s1, s2):
    lo_a, hi_a = sorted((a1, a2))
    lo_s, hi_s = sorted((s1, s2))
    assert cellular_rate_from_snr(lo_s, lo_a, 20e6)[1] <= cellular_rate_from_snr(hi_s, hi_a, 20e6)[1]


def entry(rat_id, kind, dwell=10.0, prob=0.5, entry_distance=0.0):
    return RatPlanEntry(rat_id, kind, 100.0, 0.0, prob, dwell, 0.2, 100.0, entry_distance)


TASK = Task(1e8, 12.0, 500)


def test_select_rat_examples():
    plan = [entry("w", "wifi"), entry("c", "ru")]
    ch = select_rat(plan, TASK, {"w": 100e6, "c": 50e6})
    assert (ch.eta_wifi, ch.eta_cell, ch.offload, ch.rat_id) == (1, 0, 1, "w")
    ch = select_rat(plan, TASK, {"w": 80e6, "c": 80e6})
    assert (ch.eta_wifi, ch.eta_cell, ch.rat_id) == (0, 1, "c")
    ch = select_rat([entry("w", "wifi", dwell=15.0)], TASK, {"w": 100e6})
    assert ch.offload == 0 and ch.reason == REASON_NO_DWELL


def test_select_rat_other_reasons():
    assert select_rat([entry("w", "wifi", entry_distance=5.0)], TASK, {"w": 1e8}).reason == REASON_NO_COVERAGE
    assert select_rat([entry("w", "wifi", prob=0.0)], TASK, {"w": 1e8}).reason == REASON_NO_COVERAGE
    ch = select_rat([entry("w", "wifi")], TASK, {"w": 1e8}, offload_needed=False)
    assert ch.offload == 0 and ch.reason == REASON_LOCAL
    # within_dwell flips the dwell comparison
    ch = select_rat([entry("w", "wifi", dwell=15.0)], TASK, {"w": 1e8}, dwell_rule="within_dwell")
    assert ch.offload == 1
    with pytest.raises(DomainError):
        select_rat([entry("w", "wifi")], TASK, {"w": 1e8}, dwell_rule="sometimes")


def test_traffic_examples():
    one = traffic_volumes([Assignment(0, 1, 1, 0, 0, 1e8, "s", "r")])
    assert (one.rho_A, one.rho_B, one.rho_C) == (1e8, 0, 0)
    hop = traffic_volumes([Assignment(0, 1, 0, 1, 0, 1e8, "s", "r", "j")])
    assert (hop.rho_A, hop.rho_B, hop.rho_C) == (1e8, 1e8, 0)
    three = traffic_volumes([Assignment(0, 0, size_bits=1e8), Assignment(1, 1, 1, 0, 0, 1e8, "s", "r"),
                             Assignment(2, 1, 0, 0, 1, 1e8, "s", "r")])
    assert (three.rho_A, three.rho_B, three.rho_C) == (2e8, 1e8, 1e8)
    assert three.peak("A") == 2e8 and three.peak("C") == 1e8 and three.peak("B") == 0.0


def test_traffic_exclusivity_names_vehicle():
    with pytest.raises(DomainError, match="vehicle 7"):
        traffic_volumes([Assignment(7, 1, 1, 1, 0, 1e8)])
    with pytest.raises(DomainError, match="vehicle 3"):
        traffic_volumes([Assignment(3, 0, 1, 0, 0, 1e8)])


def test_rc_admission():
    topo = SimpleNamespace(backhaul_bps=np.array([1.5e8]), ec_index=lambda _: 0)
    ok = [Assignment(0, 1, 0, 0, 1, 1e8, "s", "r")]
    traffic_volumes(ok, topo)
    with pytest.raises(AdmissionError):
        traffic_volumes(ok * 2, topo)


@given(st.lists(st.tuples(st.integers(0, 3), st.floats(1.0, 1e9)), max_size=20))
def test_class_ordering(rows):
    asg = []
    for v, (k, s) in enumerate(rows):
        flags = [(0, 0, 0, 0), (1, 1, 0, 0), (1, 0, 1, 0), (1, 0, 0, 1)][k]
        asg.append(Assignment(v, *flags, size_bits=s, rat="s", ec="r", neighbor="j"))
    ld = traffic_volumes(asg)
    assert ld.rho_C <= ld.rho_B + 1e-6 and ld.rho_B <= ld.rho_A + 1e-6
