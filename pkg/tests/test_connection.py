"""Connection graph prediction, edge verification, y-map, and reports."""

import math

import numpy as np
import pytest

from sturmlab.field import SpatialGrid, StateField, field_from_modes, eigenmode
from sturmlab.dynamics import StepController, integrate, preset_spec, build_cutoff
from sturmlab.equilibria import find_equilibria
from sturmlab.compactify import infinity_equilibria
from sturmlab.connection import (
    Edge,
    ConnectionGraph,
    NonHyperbolicError,
    Scenario,
    predicted_graph,
    verify_edge,
    ymap,
    assemble_attractor,
    graph_to_dot,
)

GRID = SpatialGrid(257)


from functools import lru_cache


@lru_cache(maxsize=None)
def linear_setup(b, eta_span=2.0, scan_n=101):
    c = preset_spec("linear", b=b)
    bounded = find_equilibria(-eta_span, eta_span, scan_n, c, grid=GRID)
    infinity = infinity_equilibria(c.a_inf, c.b, GRID)
    return c, bounded, infinity


@lru_cache(maxsize=None)
def cutoff_setup():
    c = build_cutoff(preset_spec("tanh-reaction", b=0.5, strength=2.0), 6.0)
    bounded = find_equilibria(-22.0, 22.0, 221, c, grid=GRID)
    infinity = infinity_equilibria(c.a_inf, c.b, GRID)
    return c, bounded, infinity


# ------------------------------------------------------------- prediction

def test_predicted_graph_minimal_linear():
    _, bounded, infinity = linear_setup(0.5)
    g = predicted_graph(bounded, infinity)
    assert set(g.nodes) == {"e0", "+Phi0", "-Phi0"}
    pairs = {(e.source, e.target, e.kind) for e in g.edges}
    assert pairs == {("e0", "+Phi0", "Hup"), ("e0", "-Phi0", "Hup")}


def test_predicted_graph_infinity_cascade_b5():
    _, bounded, infinity = linear_setup(5.0)
    g = predicted_graph(bounded, infinity)
    hup = {(e.source, e.target) for e in g.edges if e.kind == "Hup"}
    assert hup == {("e0", f"{s}Phi{k}") for s in "+-" for k in range(3)}
    hinf_idx = {(int(e.source[-1]), int(e.target[-1]))
                for e in g.edges if e.kind == "Hinf"}
    assert hinf_idx == {(j, k) for j in range(3) for k in range(j)}


def test_predicted_graph_matches_brute_force_predicates():
    from sturmlab.equilibria import adjacent

    _, bounded, infinity = cutoff_setup()
    g = predicted_graph(bounded, infinity)
    expected = set()
    for a in bounded:
        for b_ in bounded:
            if a.id != b_.id and a.morse_index > b_.morse_index \
                    and adjacent(a, b_, bounded):
                expected.add((a.node_id(), b_.node_id(), "Hb"))
        for phi in infinity:
            if adjacent(a, phi, bounded):
                expected.add((a.node_id(), phi.node_id(), "Hup"))
    for pj in infinity:
        for pk in infinity:
            if pj.j > pk.j:
                expected.add((pj.node_id(), pk.node_id(), "Hinf"))
    assert {(e.source, e.target, e.kind) for e in g.edges} == expected


def test_predicted_graph_refuses_nonhyperbolic():
    _, bounded, infinity = linear_setup(4.0)
    with pytest.raises(NonHyperbolicError):
        predicted_graph(bounded, infinity)


def test_graph_structural_checks():
    nodes = {"e0": {"type": "bounded", "morse": 1}, "+Phi0": {"type": "infinity"}}
    with pytest.raises(ValueError):
        ConnectionGraph(nodes, [Edge("e0", "e0", "Hb")])
    with pytest.raises(ValueError):
        ConnectionGraph(nodes, [Edge("e0", "+Phi0", "Hb")])  # wrong kind
    with pytest.raises(ValueError):
        ConnectionGraph(
            {"e0": {}, "e1": {}},
            [Edge("e0", "e1", "Hb"), Edge("e1", "e0", "Hb")],  # cycle
        )


def test_morse_monotone_along_hb_edges():
    _, bounded, infinity = cutoff_setup()
    g = predicted_graph(bounded, infinity)
    morse = {e.node_id(): e.morse_index for e in bounded}
    for e in g.edges:
        if e.kind == "Hb":
            assert morse[e.source] > morse[e.target]


# ------------------------------------------------------------- verification

def growup_ctrl(threshold=1e6, t_max=80.0):
    return StepController(dt_init=1e-3, dt_max=1e-1, t_max=t_max,
                          growup_norm_threshold=threshold)


def test_verify_edge_linear_hup():
    c, bounded, infinity = linear_setup(0.5)
    g = predicted_graph(bounded, infinity)
    for e in g.edges:
        assert verify_edge(g, e, growup_ctrl(), c, bounded) == \
            "VerifiedNumerically"


def test_verify_edge_hinf_by_rate_signs():
    c, bounded, infinity = linear_setup(5.0)
    g = predicted_graph(bounded, infinity)
    for e in g.edges:
        if e.kind != "Hinf":
            continue
        assert verify_edge(g, e, growup_ctrl(), c, bounded) == \
            "VerifiedNumerically"
    # a wrong-way edge refutes by the same rate signs
    bad = Edge("+Phi0", "+Phi2", "Hinf")
    assert verify_edge(g, bad, growup_ctrl(), c, bounded) == "Refuted"


def test_verify_edge_blocked_pair_is_refuted():
    c, bounded, infinity = cutoff_setup()
    g = predicted_graph(bounded, infinity)
    by_eta = sorted(bounded, key=lambda e: e.eta)
    em, ep = by_eta[1], by_eta[3]  # -u*, +u*, blocked by 0
    assert em.morse_index == 1 and ep.morse_index == 1
    edge = Edge(em.node_id(), ep.node_id(), "Hb")
    ctrl = StepController(dt_init=1e-3, dt_max=5e-2, t_max=80.0,
                          growup_norm_threshold=np.inf)
    obs = []
    status = verify_edge(g, edge, ctrl, c, bounded, observations=obs)
    assert status == "Refuted"
    blocker = by_eta[2].node_id()
    assert all(t == blocker for _, t in obs)


# ------------------------------------------------------------- y-map

@lru_cache(maxsize=None)
def zero_reference(b):
    c, eqs, _ = linear_setup(b)
    (e0,) = [e for e in eqs if abs(e.eta) < 1e-6]
    return c, e0


def ymap_ctrl(t_max=8.0):
    # loose rtol: only the zero history matters here, not mode accuracy
    return StepController(dt_init=1e-3, dt_max=2e-2, t_max=t_max,
                          rtol=1e-4, growup_norm_threshold=1e30)


def test_ymap_pure_constant_directions():
    c, e0 = zero_reference(0.5)
    for sign in (1.0, -1.0):
        u0 = sign * eigenmode(0, GRID)
        tr = integrate(u0, ymap_ctrl(2.0), c, reference=e0.profile)
        res = ymap(tr, e0, 0)
        assert res.coords[0] == sign
        assert np.sum(res.coords ** 2) == pytest.approx(1.0, abs=1e-12)


def test_ymap_simultaneous_drop_gives_zero_coordinate():
    c, e0 = zero_reference(5.0)
    u0 = eigenmode(0, GRID)  # z = 0 from the start: t_1 = t_0 = 0
    tr = integrate(u0, ymap_ctrl(1.0), c, reference=e0.profile)
    res = ymap(tr, e0, 1)
    assert res.dropping_times[0] == res.dropping_times[1] == 0.0
    assert res.coords[1] == 0.0
    assert abs(res.coords[0]) == 1.0


def test_ymap_identities_on_seeded_trajectories():
    c, e0 = zero_reference(5.0)
    rng = np.random.default_rng(21)
    for _ in range(20):
        coeffs = rng.standard_normal(6)
        u0 = field_from_modes(GRID, coeffs)
        tr = integrate(u0, ymap_ctrl(), c, reference=e0.profile, j_track=6)
        n = int(tr.zero_history[0])
        res = ymap(tr, e0, n)
        assert np.sum(res.coords ** 2) == pytest.approx(1.0, abs=1e-12)
        assert res.dropping_times[n] == 0.0
        assert np.all(np.diff(res.tau) <= 0)
        recon = res.reconstruct_zero_history(tr.times)
        assert np.array_equal(recon, tr.zero_history)


def test_ymap_rejects_overbudget_start():
    c, e0 = zero_reference(5.0)
    u0 = field_from_modes(GRID, [0, 0, 0, 1.0])
    tr = integrate(u0, ymap_ctrl(1.0), c, reference=e0.profile)
    with pytest.raises(ValueError):
        ymap(tr, e0, 1)


# ------------------------------------------------------------- assembly

def test_assemble_minimal_attractor():
    c = preset_spec("linear", b=0.5)
    scenario = Scenario(coeff=c, ctrl=growup_ctrl(), grid=GRID,
                        eta_min=-2.0, eta_max=2.0, scan_n=101, name="minimal")
    report = assemble_attractor(scenario)
    assert len(report.bounded) == 1
    assert len(report.infinity) == 2
    assert {e.status for e in report.graph.edges} == {"VerifiedNumerically"}
    assert report.unverified == []
    assert report.unpredicted == []
    d = report.to_json_dict()
    assert d["sturm_permutation"] == [1]
    assert len(d["edges"]) == 2


def test_report_dot_export():
    c = preset_spec("linear", b=0.5)
    scenario = Scenario(coeff=c, ctrl=growup_ctrl(), grid=GRID, name="dot")
    report = assemble_attractor(scenario)
    dot = report.to_dot()
    assert dot.startswith("digraph")
    assert '"e0"' in dot and '"+Phi0"' in dot and '"-Phi0"' in dot
    assert dot.count("->") == 2
    assert "forestgreen" in dot


def test_assemble_refuses_nonhyperbolic_scenario():
    c = preset_spec("linear", b=4.0)
    scenario = Scenario(coeff=c, ctrl=growup_ctrl(), grid=GRID)
    with pytest.raises(NonHyperbolicError):
        assemble_attractor(scenario)
