import numpy as np
import pytest

from aopoffload import sim
from aopoffload.errors import ConfigError, DomainError
from aopoffload.topology import build_topology, project_equirectangular, read_sites, synthetic_sites

from conftest import small_config


@pytest.fixture(scope="module")
def one_rat():
    """Single cellular RAT with one neighbor candidate, so slots stay enumerable."""
    cfg = small_config(n_wifi=0, n_ru=1, n_oru=0, neighbor_candidates=1, vehicle_count=4, task_size_mb=(0.1, 0.5),
                       seed=3)
    return cfg, sim.prepare_topology(cfg)


def test_scenario_determinism(small_topology):
    cfg = small_config(vehicle_count=5, seed=42)
    a = sim.generate_scenario(cfg, small_topology)
    b = sim.generate_scenario(cfg, small_topology)
    assert np.array_equal(a.start, b.start) and np.array_equal(a.direction, b.direction)
    assert [v.cpu_hz for v in a.vehicles] == [v.cpu_hz for v in b.vehicles]
    ma = sim.run_scenario(a, "solver", horizon=10, sampling="random")
    mb = sim.run_scenario(b, "solver", horizon=10, sampling="random")
    assert np.array_equal(ma.aav, mb.aav) and ma.row() == mb.row()


def test_task_sizes_within_range(small_topology):
    scn = sim.generate_scenario(small_config(vehicle_count=300), small_topology)
    assert scn.n_vehicles == 300
    sizes = scn.task_table(3)["size"] / sim.MB_BITS
    assert sizes.min() >= 40.0 and sizes.max() <= 200.0


def test_task_size_mean(small_topology):
    scn = sim.generate_scenario(small_config(vehicle_count=10), small_topology)
    sizes = scn.task_table(1000)["size"] / sim.MB_BITS
    assert abs(sizes.mean() - 120.0) <= 0.02 * 120.0


def test_task_table_prefix_consistent(small_topology):
    scn = sim.generate_scenario(small_config(vehicle_count=3), small_topology)
    short, long = scn.task_table(5), scn.task_table(12)
    for k in short:
        assert np.array_equal(short[k], long[k][:, :5])
    assert scn.task(2, 4).size_bits == short["size"][2, 4]


def test_scenario_needs_clustered_topology():
    cfg = small_config()
    ids, lat, lon, types = read_sites(synthetic_sites(cfg.n_sites, seed=0))
    topo = build_topology(ids, project_equirectangular(lat, lon), cfg, seed=0, site_types=types)
    with pytest.raises(ConfigError):
        sim.generate_scenario(cfg, topo)


def test_always_local_closed_form(small_topology):
    cfg = small_config(vehicle_count=1, task_size_mb=(0.01, 0.01), workload_cpb=(250.0, 250.0),
                       vehicle_cpu_hz=(2e9, 2e9), deadline_s=(0.5, 0.5))
    scn = sim.generate_scenario(cfg, small_topology)
    m = sim.run_scenario(scn, "fixed", horizon=20, fixed_kind="local", sampling="zero_wait")
    tau = 0.01 * sim.MB_BITS * 250 / 2e9
    assert m.histogram["local"] == 1.0
    assert m.mean_aav == pytest.approx(1.5 * tau)


def test_weak_vehicles_never_compute_locally(small_topology):
    cfg = small_config(vehicle_count=5, n_wifi=0, vehicle_cpu_hz=(1e6, 1e6), task_size_mb=(0.1, 0.1),
                       deadline_s=(1.0, 1.0))
    topo = sim.prepare_topology(cfg)
    scn = sim.generate_scenario(cfg, topo)
    m = sim.run_scenario(scn, "solver", horizon=10)
    assert m.histogram["local"] == 0.0
    assert sum(m.histogram.values()) == pytest.approx(1.0)


def test_solver_beats_always_rc_and_matches_oracle(one_rat):
    cfg, topo = one_rat
    for seed in range(3):
        scn = sim.generate_scenario(cfg, topo, seed=seed)
        ours = sim.run_scenario(scn, "solver", horizon=10)
        rc = sim.run_scenario(scn, "fixed", horizon=10, fixed_kind="rc")
        oracle = sim.run_scenario(scn, "oracle", horizon=10)
        assert rc.histogram["rc"] == 1.0
        assert ours.mean_aav <= rc.mean_aav
        assert ours.mean_aav == pytest.approx(oracle.mean_aav, rel=1e-9)


def test_asspo_ack(small_topology):
    scn = sim.generate_scenario(small_config(vehicle_count=5), small_topology)
    plain = sim.run_scenario(scn, "solver", horizon=10)
    zero = sim.asspo_baseline(scn, horizon=10, ack_delay=0.0)
    assert np.array_equal(plain.aav, zero.aav)
    slow = sim.asspo_baseline(scn, horizon=10, ack_delay=0.5)
    assert np.all(slow.aav > plain.aav)
    rt = sim.asspo_baseline(scn, horizon=10)
    assert rt.ack_delay_mean > 0 and np.all(rt.aav > plain.aav)
    assert rt.policy == "asspo"


def test_single_action_objectives_agree(small_topology):
    # with the paper dwell rule and second-scale deadlines no RAT is usable, leaving only local
    cfg = small_config(vehicle_count=4, dwell_rule="paper")
    scn = sim.generate_scenario(cfg, small_topology)
    a = sim.run_scenario(scn, "solver", horizon=10)
    b = sim.total_delay_baseline(scn, horizon=10)
    assert a.histogram["local"] == 1.0
    assert np.array_equal(a.aav, b.aav) and a.mean_delay == b.mean_delay


def test_total_delay_baseline_minimises_delay(one_rat):
    cfg, topo = one_rat
    scn = sim.generate_scenario(cfg, topo, seed=1)
    ours = sim.run_scenario(scn, "oracle", horizon=10)
    delay = sim.run_scenario(scn, "oracle", horizon=10, objective="delay")
    assert delay.mean_delay <= ours.mean_delay + 1e-9


def test_heuristic_and_policy_replay(small_topology):
    scn = sim.generate_scenario(small_config(vehicle_count=6), small_topology)
    h = sim.run_scenario(scn, "heuristic", horizon=10)
    assert h.constraint_violations == 0
    m, pol = sim.run_scenario(scn, "solver", horizon=10, record_policy=True)
    replay = sim.run_scenario(scn, "fixed", horizon=10, policy=pol)
    assert pol.table and np.isfinite(replay.mean_aav)


def test_run_errors(small_topology):
    scn = sim.generate_scenario(small_config(), small_topology)
    with pytest.raises(DomainError):
        sim.run_scenario(scn, horizon=5)
    with pytest.raises(DomainError):
        sim.run_scenario(scn, "magic", horizon=10)


def test_metrics_csv_and_replicate():
    cfg = small_config(vehicle_count=3, horizon=10)
    ms = sim.replicate(cfg, "heuristic", replications=2)
    text = sim.metrics_csv(ms)
    lines = text.strip().splitlines()
    assert lines[0].split(",") == sim.METRIC_COLUMNS and len(lines) == 3
    assert ms[0].seed == cfg.seed and ms[1].seed == cfg.seed + 1
    for m in ms:
        assert 0.0 <= m.violation_rate <= 1.0
        assert sum(m.histogram.values()) == pytest.approx(1.0)
