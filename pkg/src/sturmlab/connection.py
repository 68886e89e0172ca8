"""Connection graph of the unbounded attractor: prediction and verification.

Nodes are bounded equilibria and equilibria at infinity; edges are
bounded-to-bounded (Hb), grow-up (Hup), and intra-infinity (Hinf)
heteroclinics.  Hb edges need adjacency plus a Morse-index drop, Hup
edges need adjacency alone, Hinf edges follow the index cascade j > k.
Hb/Hup predictions are checked by integrating seeded perturbations;
Hinf edges are checked against the exact hyperplane-flow rate signs.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .field import SpatialGrid, StateField, norm, zero_number
from .dynamics import CoefficientSpec, StepController, TrajectoryRecord, integrate
from .equilibria import (
    EquilibriumRecord,
    SturmPermutation,
    adjacent,
    find_equilibria,
    sturm_permutation,
)
from .compactify import (
    InfinityEquilibrium,
    infinity_equilibria,
    growup_direction,
    plane_flow_rates,
    DirectionUndetermined,
)

__all__ = [
    "Edge",
    "ConnectionGraph",
    "NonHyperbolicError",
    "YMapResult",
    "Scenario",
    "AttractorReport",
    "predicted_graph",
    "verify_edge",
    "ymap",
    "assemble_attractor",
    "graph_to_dot",
]

KIND_HB = "Hb"
KIND_HUP = "Hup"
KIND_HINF = "Hinf"

STATUS_PREDICTED = "Predicted"
STATUS_VERIFIED = "VerifiedNumerically"
STATUS_REFUTED = "Refuted"
STATUS_UNDETERMINED = "Undetermined"


class NonHyperbolicError(RuntimeError):
    """A bounded equilibrium violates the hyperbolicity hypothesis."""


@dataclass
class Edge:
    source: str
    target: str
    kind: str
    status: str = STATUS_PREDICTED


@dataclass
class ConnectionGraph:
    nodes: dict  # node id -> metadata dict
    edges: list  # of Edge

    def __post_init__(self):
        self.check_structure()

    def check_structure(self):
        for e in self.edges:
            if e.source == e.target:
                raise ValueError(f"self-edge at {e.source}")
            src_inf = "Phi" in e.source
            tgt_inf = "Phi" in e.target
            expect = {(False, False): KIND_HB, (False, True): KIND_HUP,
                      (True, True): KIND_HINF}
            if (src_inf, tgt_inf) not in expect or e.kind != expect[(src_inf, tgt_inf)]:
                raise ValueError(
                    f"edge {e.source}->{e.target} has inconsistent kind {e.kind}"
                )
        self.assert_acyclic()

    def assert_acyclic(self):
        ts = graphlib.TopologicalSorter()
        for n in self.nodes:
            ts.add(n)
        for e in self.edges:
            ts.add(e.target, e.source)
        try:
            ts.prepare()
        except graphlib.CycleError as exc:
            raise ValueError(f"connection graph has a cycle: {exc}") from exc

    def find_edge(self, source: str, target: str) -> Optional[Edge]:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None


def predicted_graph(
    bounded: Sequence[EquilibriumRecord],
    infinity: Sequence[InfinityEquilibrium],
) -> ConnectionGraph:
    """Edges predicted by adjacency, Morse drop, and the infinity cascade.

    The sign pairing of intra-infinity connections is emitted for both
    target signs (the cascade fixes indices only); reports flag this as
    a sign-rule ambiguity rather than silently choosing one convention.
    """
    for e in bounded:
        if not e.hyperbolic:
            small = float(np.min(np.abs(e.eigenvalues)))
            raise NonHyperbolicError(
                f"equilibrium {e.node_id()} (eta={e.eta:.6g}) has an "
                f"eigenvalue of magnitude {small:.3g} within tolerance of "
                "zero; the connection theorems require hyperbolicity"
            )

    nodes = {}
    for e in bounded:
        nodes[e.node_id()] = {
            "type": "bounded", "eta": e.eta, "u_pi": e.right_value,
            "morse": e.morse_index, "hyperbolic": e.hyperbolic,
        }
    for phi in infinity:
        nodes[phi.node_id()] = {"type": "infinity", "j": phi.j, "sign": phi.sign}

    edges = []
    for src in bounded:
        for tgt in bounded:
            if src.id == tgt.id:
                continue
            if src.morse_index > tgt.morse_index and adjacent(src, tgt, bounded):
                edges.append(Edge(src.node_id(), tgt.node_id(), KIND_HB))
    for src in bounded:
        for phi in infinity:
            if adjacent(src, phi, bounded):
                edges.append(Edge(src.node_id(), phi.node_id(), KIND_HUP))
    for pj in infinity:
        for pk in infinity:
            if pj.j > pk.j:
                edges.append(Edge(pj.node_id(), pk.node_id(), KIND_HINF))
    return ConnectionGraph(nodes, edges)


def _parse_infinity_id(node_id: str):
    sign = 1 if node_id[0] == "+" else -1
    return int(node_id.split("Phi")[1]), sign


def _nearest_equilibrium(u: StateField, bounded: Sequence[EquilibriumRecord]):
    best, best_d = None, math.inf
    for e in bounded:
        d = norm(u - e.profile)
        if d < best_d:
            best, best_d = e, d
    return best, best_d


def _unstable_direction(e: EquilibriumRecord, k: int) -> StateField:
    """Eigenfunction with zero number k (k-th unstable direction)."""
    if e.eigenfunctions is None:
        raise ValueError("equilibrium record carries no eigenfunctions")
    if k >= e.eigenfunctions.shape[1]:
        raise ValueError(f"requested direction {k} beyond stored spectrum")
    return StateField(e.profile.grid, e.eigenfunctions[:, k].copy())


def verify_edge(
    graph: ConnectionGraph,
    edge: Edge,
    ctrl: StepController,
    c: CoefficientSpec,
    bounded: Sequence[EquilibriumRecord],
    eps_base: float = 1e-6,
    n_scales: int = 8,
    capture_tol: float = 1e-5,
    observations: Optional[list] = None,
) -> str:
    """Classify the omega-limit of seeded perturbations along one edge.

    Refuted only on positive evidence: every perturbation scale captured
    by a bounded equilibrium other than the target.  A timeout is
    Undetermined, never Refuted.  Hinf edges are checked through the
    exact hyperplane rate signs instead of simulation.
    """
    by_id = {e.node_id(): e for e in bounded}
    if edge.kind == KIND_HINF:
        j, _ = _parse_infinity_id(edge.source)
        k, _ = _parse_infinity_id(edge.target)
        (_, expand), = plane_flow_rates(j, c.a_inf, [k])
        (_, contract), = plane_flow_rates(k, c.a_inf, [j])
        return STATUS_VERIFIED if expand > 0 and contract < 0 else STATUS_REFUTED

    src = by_id[edge.source]
    if edge.kind == KIND_HUP:
        k, sgn = _parse_infinity_id(edge.target)
        direction = _unstable_direction(src, k)
        seed_sign = sgn
    else:
        tgt = by_id[edge.target]
        k = zero_number(src.profile - tgt.profile)
        k = max(k, 0)
        direction = _unstable_direction(src, k)
        seed_sign = 1 if tgt.eta > src.eta else -1

    blocker_captures = 0
    for m in range(n_scales):
        eps = eps_base * 2.0 ** m
        u0 = StateField(src.profile.grid,
                        src.profile.values + seed_sign * eps * direction.values)
        tr = integrate(u0, ctrl, c, j_track=max(8, k + 2))
        if tr.outcome == "grow-up":
            try:
                j_star, dir_sign = growup_direction(tr)
            except DirectionUndetermined:
                continue
            reached = f"{'+' if dir_sign > 0 else '-'}Phi{j_star}"
            if observations is not None:
                observations.append((edge.source, reached))
            if edge.kind == KIND_HUP and (j_star, dir_sign) == (k, sgn):
                return STATUS_VERIFIED
        elif tr.outcome == "converged":
            final = tr.final_field()
            near, dist = _nearest_equilibrium(final, bounded)
            if near is None or dist > capture_tol * (1.0 + norm(near.profile)):
                continue
            if near.id == src.id:
                continue
            if observations is not None:
                observations.append((edge.source, near.node_id()))
            if edge.kind == KIND_HB and near.node_id() == edge.target:
                return STATUS_VERIFIED
            blocker_captures += 1
    if blocker_captures == n_scales:
        # every scale positively captured by a bounded blocker
        return STATUS_REFUTED
    return STATUS_UNDETERMINED


@dataclass
class YMapResult:
    n: int
    dropping_times: np.ndarray  # t_k, k = 0..n; inf if never
    tau: np.ndarray             # tanh(t_k)
    signs: np.ndarray           # iota_k in {-1, +1}
    coords: np.ndarray          # y_k = iota_k sqrt(tau_{k-1} - tau_k)

    def reconstruct_zero_history(self, times: np.ndarray) -> np.ndarray:
        """z(t) = min{k : t >= t_k}."""
        out = np.empty(len(times), dtype=int)
        for i, t in enumerate(times):
            ks = np.nonzero(t >= self.dropping_times - 1e-15)[0]
            out[i] = int(ks[0]) if ks.size else self.n
        return out


def ymap(tr: TrajectoryRecord, reference: EquilibriumRecord, n: int) -> YMapResult:
    """Compactified dropping times, boundary signs, and sphere coordinates.

    The boundary sign of each inter-drop interval is sampled at the
    tau-midpoint pulled back through arctanh, which stays well defined
    when the earlier dropping time is infinite; the sign is constant on
    the whole open interval, so the sampling point is immaterial.
    """
    if tr.zero_history is None or tr.boundary_history is None:
        raise ValueError("trajectory carries no reference zero history")
    z = tr.zero_history
    times = tr.times
    if z[0] > n:
        raise ValueError(f"initial zero number {z[0]} exceeds the budget n={n}")

    t_k = np.empty(n + 1)
    for k in range(n + 1):
        idx = np.nonzero(z <= k)[0]
        t_k[k] = times[idx[0]] if idx.size else math.inf
    tau = np.tanh(t_k)
    tau_prev = np.concatenate([[1.0], tau[:-1]])  # tau_{-1} := 1

    signs = np.empty(n + 1)
    coords = np.empty(n + 1)
    for k in range(n + 1):
        gap = tau_prev[k] - tau[k]
        if gap <= 0:
            signs[k] = _boundary_sign_at(tr, t_k[k])
            coords[k] = 0.0
            continue
        t_star = math.atanh(min(0.5 * (tau[k] + tau_prev[k]), 1.0 - 1e-16))
        signs[k] = _boundary_sign_at(tr, t_star)
        coords[k] = signs[k] * math.sqrt(gap)
    return YMapResult(n, t_k, tau, signs, coords)


def _boundary_sign_at(tr: TrajectoryRecord, t: float) -> float:
    i = int(np.searchsorted(tr.times, min(t, tr.times[-1])))
    i = min(i, len(tr.times) - 1)
    v = tr.boundary_history[i]
    step = 1
    scale = float(np.max(np.abs(tr.boundary_history))) or 1.0
    while abs(v) <= 1e-14 * scale:
        # boundary value numerically zero exactly at the sample: resample a
        # neighboring time (the sign is constant on the whole interval)
        lo, hi = i - step, i + step
        if hi < len(tr.times) and abs(tr.boundary_history[hi]) > 1e-14 * scale:
            v = tr.boundary_history[hi]
            break
        if lo >= 0 and abs(tr.boundary_history[lo]) > 1e-14 * scale:
            v = tr.boundary_history[lo]
            break
        step += 1
        if step > len(tr.times):
            raise ValueError("boundary value vanishes along the whole record")
    return 1.0 if v > 0 else -1.0


@dataclass
class Scenario:
    """Everything needed to assemble and verify one attractor."""

    coeff: CoefficientSpec
    ctrl: StepController
    grid: SpatialGrid = dc_field(default_factory=SpatialGrid)
    eta_min: float = -2.0
    eta_max: float = 2.0
    scan_n: int = 101
    eps_base: float = 1e-6
    n_scales: int = 8
    name: str = "scenario"


@dataclass
class AttractorReport:
    scenario_name: str
    bounded: list  # EquilibriumRecord
    infinity: list  # InfinityEquilibrium
    graph: ConnectionGraph
    permutation: SturmPermutation
    unverified: list  # predicted edges whose status is not Verified
    unpredicted: list  # observed (source, target) pairs with no predicted edge
    sign_rule_note: str = (
        "intra-infinity edges are emitted for both target signs; the "
        "sign-pair selection rule is left open"
    )

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "bounded_equilibria": [
                {
                    "id": e.id, "eta": e.eta, "u_pi": e.right_value,
                    "morse": e.morse_index, "hyperbolic": e.hyperbolic,
                    "eigenvalues": [float(v) for v in e.eigenvalues],
                }
                for e in self.bounded
            ],
            "infinity_equilibria": [
                {"j": p.j, "sign": p.sign} for p in self.infinity
            ],
            "edges": [
                {"source": e.source, "target": e.target,
                 "kind": e.kind, "status": e.status}
                for e in self.graph.edges
            ],
            "sturm_permutation": self.permutation.one_based(),
            "discrepancies": {
                "predicted_but_unverified": [
                    {"source": e.source, "target": e.target, "status": e.status}
                    for e in self.unverified
                ],
                "observed_but_unpredicted": [
                    {"source": s, "target": t} for s, t in self.unpredicted
                ],
            },
            "notes": [self.sign_rule_note],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def to_dot(self) -> str:
        return graph_to_dot(self.graph)


_EDGE_STYLE = {KIND_HB: "solid", KIND_HUP: "dashed", KIND_HINF: "dotted"}
_STATUS_COLOR = {
    STATUS_PREDICTED: "gray40",
    STATUS_VERIFIED: "forestgreen",
    STATUS_REFUTED: "red",
    STATUS_UNDETERMINED: "orange",
}


def graph_to_dot(graph: ConnectionGraph) -> str:
    lines = ["digraph attractor {", "  rankdir=TB;"]
    for nid, meta in graph.nodes.items():
        if meta.get("type") == "bounded":
            label = f"{nid}(i={meta['morse']})"
            shape = "ellipse"
        else:
            label = nid
            shape = "box"
        lines.append(f'  "{nid}" [label="{label}", shape={shape}];')
    for e in graph.edges:
        style = _EDGE_STYLE[e.kind]
        color = _STATUS_COLOR[e.status]
        lines.append(
            f'  "{e.source}" -> "{e.target}" '
            f'[style={style}, color={color}, label="{e.kind}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def assemble_attractor(scenario: Scenario) -> AttractorReport:
    """find_equilibria -> infinity_equilibria -> predicted_graph -> verify sweep."""
    c = scenario.coeff
    if c.a_takes_norm:
        raise ValueError("attractor assembly requires a constant limiting "
                         "diffusion (pointwise coefficients)")
    bounded = find_equilibria(
        scenario.eta_min, scenario.eta_max, scenario.scan_n, c,
        grid=scenario.grid,
    )
    infinity = infinity_equilibria(c.a_inf, c.b, scenario.grid)
    graph = predicted_graph(bounded, infinity)
    perm = sturm_permutation(bounded)

    observations: list = []
    for e in graph.edges:
        e.status = verify_edge(
            graph, e, scenario.ctrl, c, bounded,
            eps_base=scenario.eps_base, n_scales=scenario.n_scales,
            observations=observations,
        )

    unverified = [e for e in graph.edges if e.status != STATUS_VERIFIED]
    predicted_pairs = {(e.source, e.target) for e in graph.edges}
    unpredicted = sorted({
        (s, t) for s, t in observations if (s, t) not in predicted_pairs
    })
    return AttractorReport(
        scenario_name=scenario.name,
        bounded=bounded,
        infinity=infinity,
        graph=graph,
        permutation=perm,
        unverified=unverified,
        unpredicted=unpredicted,
    )
