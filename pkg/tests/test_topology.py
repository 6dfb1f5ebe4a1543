import json
import math

import numpy as np
import pytest

from aopoffload import clustering
from aopoffload.config import ScenarioConfig
from aopoffload.errors import ConfigError, DomainError, ParseError
from aopoffload.topology import (Task, Vehicle, build_topology, haversine_m, load_topology, project_equirectangular,
                                 read_sites, synthetic_sites, update_resource_table)


def three_ec_topology():
    cfg = ScenarioConfig()
    pos = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]])
    return build_topology(["a", "b", "c"], pos, cfg, seed=1, rat_sites=pos, rat_kinds=["wifi", "ru", "oru"])


def test_three_ec_link_counts():
    topo = three_ec_topology()
    by = topo.links_by_class()
    assert [len(by[c]) for c in "ABC"] == [3, 3, 3]
    assert len(topo.links) == sum(len(v) for v in by.values())
    assert [topo.edge_clouds[r.attached_ec].id for r in topo.rats] == ["a", "b", "c"]


def test_clustering_restricts_inter_ec_links():
    topo = three_ec_topology()
    topo.assign_collaboration_spaces([clustering.CollaborationSpace(0, (0, 1)), clustering.CollaborationSpace(2, (2,))])
    by = topo.links_by_class()
    assert len(by["B"]) == 1
    assert set(topo.edge_clouds[0].resource_table) == {"b"}


def test_partition_must_cover_every_ec():
    topo = three_ec_topology()
    with pytest.raises(DomainError):
        topo.assign_collaboration_spaces([clustering.CollaborationSpace(0, (0, 1))])


def test_resource_table_updates():
    topo = three_ec_topology()
    topo.assign_collaboration_spaces([clustering.CollaborationSpace(0, (0, 1)), clustering.CollaborationSpace(2, (2,))])
    update_resource_table(topo, "a", "b", 2.0e9, 5)
    assert topo.edge_clouds[0].resource_table["b"] == (2.0e9, 5)
    update_resource_table(topo, "a", "b", 1.0e9, 3)  # stale
    assert topo.edge_clouds[0].resource_table["b"] == (2.0e9, 5)
    with pytest.raises(DomainError):
        update_resource_table(topo, "a", "c", 1.0e9, 6)
    with pytest.raises(DomainError):
        update_resource_table(topo, "a", "b", -1.0, 6)


def test_more_rats_than_ecs_is_config_error():
    pos = np.zeros((3, 2)) + np.arange(3)[:, None]
    with pytest.raises(ConfigError):
        build_topology(["a", "b", "c"], pos, ScenarioConfig())


def test_read_sites_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        read_sites(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("SITE_ID,LATITUDE,LONGITUDE\nA,-37.8,144.9\nB,notanumber,144.9\n")
    with pytest.raises(ParseError) as exc:
        read_sites(bad)
    assert exc.value.line == 3
    with pytest.raises(ParseError):
        read_sites(tmp_path / "missing.csv")
    with pytest.raises(ParseError, match="missing column"):
        read_sites("ID,LAT,LON\nA,1,2\n")


def test_load_synthetic_dataset(tmp_path):
    p = tmp_path / "sites.csv"
    p.write_text(synthetic_sites(125, seed=3))
    cfg = ScenarioConfig()
    topo = load_topology(p, cfg, seed=0)
    assert topo.n_ec == 125 and len(topo.rats) == 24
    kinds = [r.kind for r in topo.rats]
    assert kinds.count("wifi") == 6 and kinds.count("ru") == 5 and kinds.count("oru") == 13
    again = load_topology(p, cfg, seed=0)
    assert topo.summary_records() == again.summary_records()
    for line in topo.summary_records()[:3]:
        json.loads(line)


def test_projection_preserves_distances():
    ids, lat, lon, _ = read_sites(synthetic_sites(125, seed=7))
    xy = project_equirectangular(lat, lon)
    rng = np.random.default_rng(0)
    for _ in range(10):
        i, j = rng.choice(len(ids), 2, replace=False)
        gc = haversine_m(lat[i], lon[i], lat[j], lon[j])
        eu = float(np.hypot(*(xy[i] - xy[j])))
        assert abs(eu - gc) <= 0.01 * gc


def test_haversine_known_value():
    # one degree of latitude on the mean-radius sphere
    assert haversine_m(0.0, 0.0, 1.0, 0.0) == pytest.approx(math.radians(1.0) * 6_371_008.8)


def test_vehicle_motion():
    v = Vehicle(0, [[0, 0], [100, 0], [100, 100]], 10.0, 2e9, 100.0, 0.5, 1e-13)
    assert np.allclose(v.position_at(5.0), [50, 0])
    assert np.allclose(v.position_at(15.0), [100, 50])
    assert np.allclose(v.heading_at(15.0), [0, 1])
    assert np.allclose(v.position_at(30.0), [100, 200])  # runs on past the last point
    bad = Vehicle(1, [[0, 0], [0, 0]], 10.0, 2e9, 100.0, 0.5, 1e-13)
    assert np.allclose(bad.position_at(1.0), [0, 0])
    with pytest.raises(DomainError):
        bad.heading_at(1.0)
    with pytest.raises(DomainError):
        Vehicle(2, [[0, 0], [1, 0]], 0.0, 2e9, 100.0, 0.5, 1e-13)


def test_task_validation():
    assert Task(8e6, 1.0, 500).cycles == 4e9
    with pytest.raises(DomainError):
        Task(0.0, 1.0, 500)
