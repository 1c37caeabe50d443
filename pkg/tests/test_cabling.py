import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expanderlab.cabling import (ATTACHED, OPEN, SHUFFLEBACK, add_room, count_cabled_pairs, deployment_timeline,
                                 empty_plan, endpoint_pair_count, land_routers, load_plan, make_shufflebox,
                                 phased_first_room, plan_datacenter, resolve_topology, save_plan,
                                 standard_schedule)
from expanderlab.errors import CapacityExceeded, EmptyPhase, ProductMismatch, ValidationError
from expanderlab.models import stage_min_degree


def port_states_are_exclusive(plan):
    """Each c-port is trunked, shufflebacked or open; each r-port is attached, shufflebacked or open."""
    c_ok = np.all((plan.cport >= 0) | (plan.cport == SHUFFLEBACK) | (plan.cport == OPEN))
    r_ok = np.all(np.isin(plan.rport, [ATTACHED, SHUFFLEBACK, OPEN]))
    return bool(c_ok and r_ok)


def landed(rooms, boxes=4, uplinks=8, fill=1.0, alpha=1.0, seed=1):
    plan = plan_datacenter(rooms, boxes, alpha=alpha, seed=seed)
    cap = plan.room_capacity_routers(0, uplinks)
    for r in range(rooms):
        land_routers(plan, r, int(cap * fill), uplinks, seed=seed + r)
    return plan


def test_reference_shufflebox():
    box = make_shufflebox(32, 4, 4, 32)
    assert box.full_bipartite and box.is_bijection()
    for j in range(32):
        assert len({box.c_side(j, k)[0] for k in range(4)}) == 4
    assert make_shufflebox(1, 1, 1, 1).r_to_c.tolist() == [0]
    with pytest.raises(ProductMismatch):
        make_shufflebox(32, 4, 4, 16)


@settings(max_examples=40, deadline=None)
@given(d_r=st.integers(1, 12), f_r=st.integers(1, 6), d_c=st.integers(1, 12))
def test_shuffle_is_a_bijection(d_r, f_r, d_c):
    if d_r * f_r % d_c:
        return
    box = make_shufflebox(d_r, d_c, f_r, d_r * f_r // d_c)
    assert box.is_bijection()
    for c in range(d_c):
        for i in range(box.f_c):
            j, k = box.r_side(c, i)
            assert box.c_side(j, k) == (c, i)


def test_single_room_has_no_trunks():
    plan = plan_datacenter(1, 10)
    assert plan.trunk_count() == 0
    assert np.all(plan.cport == SHUFFLEBACK)


def test_three_room_budget():
    plan = plan_datacenter(3, 10, seed=4)
    per_panel = plan.trunk_matrix().sum(axis=1)
    assert set(per_panel.tolist()) <= {26, 27}
    assert port_states_are_exclusive(plan)


def test_alpha_halves_trunks():
    # 40 c-ports per panel: every final pair target is a whole number at both alphas
    full = plan_datacenter(10, 10, alpha=1.0, seed=2).trunk_count()
    half = plan_datacenter(10, 10, alpha=0.5, seed=2).trunk_count()
    assert full == 45 * 4
    assert 2 * half == full


def test_second_room_takes_half():
    plan = add_room(empty_plan(), 10, seed=1)
    add_room(plan, 10, seed=2)
    assert plan.trunk_matrix()[0, 1] == 20


def test_third_room_rebalances_to_thirds():
    plan = add_room(empty_plan(), 12, seed=1)
    add_room(plan, 12, seed=2)
    add_room(plan, 12, seed=3)
    mat = plan.trunk_matrix()
    f_c = plan.spec.f_c
    for a in range(3):
        for b in range(a + 1, 3):
            assert abs(mat[a, b] - 48 / 3) <= f_c


def test_landing_occupies_fps():
    plan = plan_datacenter(1, 2)
    land_routers(plan, 0, 1, 4, seed=0)
    assert plan.num_uplinks == 4 and np.count_nonzero(plan.rfp_uplink >= 0) == 4
    assert len(set(plan.attachments.values())) == 4
    full = plan_datacenter(1, 2)
    land_routers(full, 0, full.room_capacity_routers(0, 8), 8, seed=0)
    assert len(full.free_rports(0)) == 0
    with pytest.raises(CapacityExceeded):
        land_routers(full, 0, 1, 8, seed=0)
    with pytest.raises(ValidationError):
        land_routers(plan, 0, 1, 6, seed=0)


def test_landing_is_deterministic():
    a = land_routers(plan_datacenter(2, 4, seed=3), 0, 10, 8, seed=5)
    b = land_routers(plan_datacenter(2, 4, seed=3), 0, 10, 8, seed=5)
    assert sorted(a.attachments.values()) == sorted(b.attachments.values())


def test_connectivity_patterns():
    one = resolve_topology(landed(1))
    assert set(one.edge_pattern.tolist()) == {"a"}
    assert np.all(one.edge_connectors == 3)
    two = resolve_topology(landed(2))
    assert {"a", "b"} <= set(two.edge_pattern.tolist())
    partial = resolve_topology(landed(3, fill=0.5))
    assert "c" in set(partial.edge_pattern.tolist())


def test_connector_limit():
    res = resolve_topology(landed(3, fill=0.5))
    assert res.disabled and all(c > 7 for _, c in res.disabled)
    assert res.edge_connectors.max() <= 7
    strict = resolve_topology(landed(3, fill=0.5), connector_limit=3)
    assert strict.edge_connectors.max() <= 3
    assert len(strict.disabled) > len(res.disabled)


def test_resolution_soundness():
    plan = landed(4, boxes=8, uplinks=16)
    topo, unmatched, disabled = resolve_topology(plan)
    deg = topo.degrees
    assert np.all(deg <= 16)
    assert len(unmatched) / plan.num_uplinks < 0.01
    assert topo.self_loop_count() == 0
    assert port_states_are_exclusive(plan)


def test_endpoint_pairs():
    plan = landed(10, boxes=4, uplinks=8)
    n = plan.num_routers
    assert endpoint_pair_count(plan) == n + 45
    assert count_cabled_pairs(plan) == endpoint_pair_count(plan)
    # panels too small to reach every other panel leave some pairs uncabled
    tiny = landed(10, boxes=2, uplinks=8)
    assert count_cabled_pairs(tiny) < endpoint_pair_count(tiny)
    single = landed(1)
    assert endpoint_pair_count(single) == single.num_routers


def test_endpoint_formula_at_reference_size():
    # 1000 routers over ten panels
    plan = plan_datacenter(10, 1)
    plan.router_room = [0] * 1000
    assert endpoint_pair_count(plan) == 1045


def test_plan_roundtrip(tmp_path):
    plan = landed(3, fill=0.5)
    save_plan(plan, tmp_path / "p.txt")
    back = load_plan(tmp_path / "p.txt")
    assert back.trunk_links == plan.trunk_links
    assert back.shufflebacks == plan.shufflebacks
    assert back.attachments == plan.attachments
    assert resolve_topology(back).topology.edge_multiset() == resolve_topology(plan).topology.edge_multiset()


def test_first_room_grows_linearly():
    tl = deployment_timeline(standard_schedule(2, 100, 64, batch=10), seed=0)
    first = tl.fraction <= 0.5
    assert tl.matched[first][-1] == pytest.approx(1.0, abs=0.02)
    mid = np.argmin(np.abs(tl.fraction - 0.25))
    assert tl.matched[mid] == pytest.approx(0.5, abs=0.05)


def test_single_phase_is_the_plain_room():
    plain = add_room(empty_plan(), 10, seed=1)
    phased = phased_first_room(plain, [1.0], seed=3)
    assert phased.num_panels == 1 and phased.panels[0].active
    assert np.array_equal(phased.cport, plain.cport)
    assert np.array_equal(phased.rport, plain.rport)


def test_phase_errors():
    plain = add_room(empty_plan(), 10, seed=1)
    with pytest.raises(EmptyPhase):
        phased_first_room(plain, [0.01, 0.99], seed=0)
    with pytest.raises(ValidationError):
        phased_first_room(plain, [0.5, 0.4], seed=0)


def test_two_phase_first_room_keeps_degree_up():
    phases = (0.3, 0.7)
    target = stage_min_degree(phases[0], 1.0, 1.0)
    plain, split = [], []
    for seed in range(3):
        plain.append(deployment_timeline(standard_schedule(1, 100, 64, batch=1), seed=seed))
        split.append(deployment_timeline(standard_schedule(1, 100, 64, batch=1, phases=phases), seed=seed))
    frac = split[0].fraction
    after = frac >= 0.25
    split_curve = np.mean([tl.matched for tl in split], axis=0)
    plain_curve = np.mean([tl.matched for tl in plain], axis=0)
    assert split_curve[after].min() >= target - 0.03
    assert split_curve[after].min() > plain_curve[after].min() + 0.4
    # phase one closes on itself, so the running degree recovers at the boundary
    boundary = np.argmin(np.abs(frac - split[0].stages[0][1]))
    assert split_curve[boundary] >= 0.94
