"""Equivalence and strong equivalence of carrier graphs.

Graphs are compared through their free factors: the components left after
deleting everything with trivial groups.  Two graphs are equivalent when the
factors biject through star-respecting graph isomorphisms that preserve
non-peripheral groups and non-peripheral edge elements, and the ambient Betti
numbers agree.  Free edges outside the factors never enter the comparison, so
their elements are ignored; callers that surface the verdict should say so.

Strong equivalence additionally asks for a lattice isomorphism per star that
carries the edge-group lattices of matched essential edges onto each other.
The witness search for that isomorphism runs over unimodular matrices with
bounded entries, which is exhaustive at the lattice sizes this package works
with.
"""

from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Set, Tuple

from .carrier import (
    CarrierGraph,
    EssentialGroup,
    PeripheralGroup,
    is_trivial_ref,
    structure_stats,
)
from .lattice import Lattice


def _factor_subgraphs(cg: CarrierGraph) -> List[Tuple[Set[int], Set[int]]]:
    """Components of the nontrivial-group subgraph, as (vertices, edges)."""
    vertices = {v for v in cg.vertices if not is_trivial_ref(cg.vgroups[v])}
    edges = {e for e in cg.ends if not is_trivial_ref(cg.egroups[e])}
    adj: Dict[int, Set[int]] = {v: set() for v in vertices}
    for e in edges:
        a, w = cg.ends[e]
        adj.setdefault(a, set()).add(w)
        adj.setdefault(w, set()).add(a)
    comps: List[Tuple[Set[int], Set[int]]] = []
    seen: Set[int] = set()
    for v in sorted(adj):
        if v in seen:
            continue
        comp = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comp_edges = {e for e in edges if cg.ends[e][0] in comp}
        comps.append((comp, comp_edges))
    return comps


def _vertex_signature(cg: CarrierGraph, v: int):
    ref = cg.vgroups[v]
    star = cg.star_of_vertex(v)
    kind: Tuple
    if isinstance(ref, PeripheralGroup):
        kind = ("p", ref.factor, ref.lattice.rank)
    elif isinstance(ref, EssentialGroup):
        kind = ("e", tuple(sorted(repr(g) for g in ref.generators)))
    else:
        kind = ("t",)
    return (
        kind,
        star is not None,
        star is not None and star.center == v,
        cg.valence(v),
    )


def _match_factor(
    cg1: CarrierGraph,
    comp1: Tuple[Set[int], Set[int]],
    cg2: CarrierGraph,
    comp2: Tuple[Set[int], Set[int]],
    strong_bound: Optional[int],
) -> bool:
    """Backtracking isomorphism search between two factor subgraphs."""
    v1, e1 = comp1
    v2, e2 = comp2
    if len(v1) != len(v2) or len(e1) != len(e2):
        return False
    sig1 = {v: _vertex_signature(cg1, v) for v in v1}
    sig2 = {v: _vertex_signature(cg2, v) for v in v2}
    if sorted(sig1.values()) != sorted(sig2.values()):
        return False
    order = sorted(v1)

    def compatible_edge(e, f) -> bool:
        if cg1.is_peripheral_edge(e) != cg2.is_peripheral_edge(f):
            return False
        if cg1.is_peripheral_edge(e):
            return True  # star data is matched through vertex signatures
        if cg1.labels[e] != cg2.labels[f]:
            return False
        # essential edge groups are lattices; whether an isomorphism of the
        # central groups carries them onto each other is the strong check,
        # so plain equivalence compares only their factor and rank
        r1, r2 = cg1.egroups[e], cg2.egroups[f]
        if not (
            isinstance(r1, PeripheralGroup)
            and isinstance(r2, PeripheralGroup)
            and r1.factor == r2.factor
            and r1.lattice.rank == r2.lattice.rank
        ):
            return False
        return True

    def edge_bijection(mapping: Dict[int, int]) -> bool:
        """Perfect matching of edges compatible with the vertex mapping."""
        remaining = sorted(e2)

        def rec(edges_left: List[int]) -> bool:
            if not edges_left:
                return True
            e = edges_left[0]
            fa, fb = mapping[cg1.ends[e][0]], mapping[cg1.ends[e][1]]
            for f in list(remaining):
                if cg2.ends[f] not in ((fa, fb), (fb, fa)):
                    continue
                if not compatible_edge(e, f):
                    continue
                remaining.remove(f)
                if rec(edges_left[1:]):
                    return True
                remaining.append(f)
            return False

        return rec(sorted(e1))

    def extend(mapping: Dict[int, int], used: Set[int]) -> Optional[Dict[int, int]]:
        if len(mapping) == len(order):
            return mapping if edge_bijection(mapping) else None
        v = order[len(mapping)]
        for w in sorted(v2 - used):
            if sig1[v] != sig2[w]:
                continue
            mapping2 = dict(mapping)
            mapping2[v] = w
            result = extend(mapping2, used | {w})
            if result is not None:
                return result
        return None

    mapping = extend({}, set())
    if mapping is None:
        return False
    if strong_bound is None:
        return True
    return _strong_star_check(cg1, comp1, cg2, mapping, strong_bound)


def _unimodular_matrices(r: int, bound: int):
    if r == 0:
        yield ()
        return
    entries = range(-bound, bound + 1)
    for flat in itertools.product(entries, repeat=r * r):
        m = tuple(tuple(flat[i * r : (i + 1) * r]) for i in range(r))
        det = _det(m)
        if det in (1, -1):
            yield m


def _det(m) -> int:
    r = len(m)
    if r == 0:
        return 1
    if r == 1:
        return m[0][0]
    if r == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0
    for j in range(r):
        minor = tuple(row[:j] + row[j + 1 :] for row in m[1:])
        total += (-1) ** j * m[0][j] * _det(minor)
    return total


def _strong_star_check(
    cg1: CarrierGraph,
    comp1: Tuple[Set[int], Set[int]],
    cg2: CarrierGraph,
    mapping: Dict[int, int],
    bound: int,
) -> bool:
    """For each matched star, search for a lattice isomorphism of the central
    groups carrying essential edge-group lattices onto their images."""
    v1, e1 = comp1
    for star in cg1.stars:
        if star.center not in v1:
            continue
        star2 = cg2.star_of_vertex(mapping[star.center])
        if star2 is None or star2.factor != star.factor:
            return False
        ref1 = cg1.vgroups[star.center]
        ref2 = cg2.vgroups[star2.center]
        assert isinstance(ref1, PeripheralGroup) and isinstance(ref2, PeripheralGroup)
        if ref1.lattice.rank != ref2.lattice.rank:
            return False
        r = ref1.lattice.rank
        # essential edges whose alpha vertex lies in this star
        pairs = []
        for e in sorted(e1):
            if cg1.is_peripheral_edge(e):
                continue
            if cg1.alpha(e) in star.vertices(cg1):
                ref_e = cg1.egroups[e]
                fa, fb = mapping[cg1.alpha(e)], mapping[cg1.omega(e)]
                f = next(
                    (
                        f
                        for f in cg2.ends
                        if cg2.ends[f] in ((fa, fb), (fb, fa))
                        and not cg2.is_peripheral_edge(f)
                        and cg2.labels[f] == cg1.labels[e]
                    ),
                    None,
                )
                if f is None:
                    return False
                pairs.append((ref_e.lattice, cg2.egroups[f].lattice))
        if not pairs:
            continue
        found = False
        for eta in _unimodular_matrices(r, bound):
            if all(_maps_lattice(ref1.lattice, ref2.lattice, eta, a, b) for a, b in pairs):
                found = True
                break
        if not found:
            return False
    return True


def _maps_lattice(central1: Lattice, central2: Lattice, eta, sub1: Lattice, sub2: Lattice) -> bool:
    """eta is a matrix in the central bases; check eta(sub1) == sub2."""
    images = []
    for row in sub1.basis:
        coords = central1.coordinates(row)
        if coords is None:
            return False
        img_coords = tuple(
            sum(eta[i][j] * coords[i] for i in range(len(coords)))
            for j in range(len(coords))
        )
        vec = tuple(
            sum(c * b[i] for c, b in zip(img_coords, central2.basis))
            for i in range(central2.ambient_rank)
        )
        images.append(vec)
    return Lattice.span(central2.ambient_rank, images) == sub2


def equivalent(cg1: CarrierGraph, cg2: CarrierGraph) -> bool:
    return _equivalent(cg1, cg2, strong_bound=None)


def strongly_equivalent(cg1: CarrierGraph, cg2: CarrierGraph, bound: int = 2) -> bool:
    return _equivalent(cg1, cg2, strong_bound=bound)


def _equivalent(cg1: CarrierGraph, cg2: CarrierGraph, strong_bound: Optional[int]) -> bool:
    if cg1.spec != cg2.spec:
        return False
    if structure_stats(cg1).betti != structure_stats(cg2).betti:
        return False
    comps1 = _factor_subgraphs(cg1)
    comps2 = _factor_subgraphs(cg2)
    if len(comps1) != len(comps2):
        return False
    for perm in itertools.permutations(range(len(comps2))):
        if all(
            _match_factor(cg1, comps1[i], cg2, comps2[perm[i]], strong_bound)
            for i in range(len(comps1))
        ):
            return True
    return False
