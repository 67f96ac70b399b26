"""Prenormalization, obstruction detectors, graph moves, and the fold loop.

The engine repeatedly scans a carrier graph for one of ten bounded
obstructions (peripheral letters buried in free labels, peripheral circuits,
star-to-star paths with peripheral value, essential-to-essential paths,
degenerate circuits, undersized edge lattices, missing essential edges,
collapsible trivial segments) and applies the corresponding surgery.  Every
surgery preserves the represented subgroup; the ledger of what each move may
do to the complexity

    c = sum of relative label lengths over non-peripheral oriented edges
        + sum of central-vertex valences

and to the pair (total free label length, star count) is asserted on every
step, which is what makes the loop provably terminating.

All searches are bounded by an explicit length budget and enumeration caps;
"no obstruction found" always means "none within the budget", and detectors
report when they hit a cap instead of silently weakening.
"""

from __future__ import annotations

import itertools
import random as _random
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .group_core import (
    FREE,
    PAR,
    GroupElement,
    GroupError,
    GroupSpec,
    geodesic_rep,
    identity,
    inv,
    len_rel,
    len_x,
    normalize,
    par_el,
    parabolic_type,
    strip_peripheral_prefix,
)
from .lattice import Lattice
from .carrier import (
    APath,
    star_lattice as _star_lattice,
    CarrierGraph,
    EssentialGroup,
    PeripheralGroup,
    PeripheralStar,
    TrivialGroup,
    essential_elements,
    is_trivial_ref,
    image_generators,
    peripheral_contains,
    reduce_apath,
    structure_stats,
    trivial_segments,
    validate,
    wedge_graph,
)
from .relcayley import BudgetError

CONDITIONS = ("A8", "A7", "A1a", "A1b", "A2", "A3", "A4a", "A4b", "A5", "A6")


@dataclass
class Caps:
    vertex_elem_l1: int = 4
    essential_product_len: int = 3
    bfs_truncation: int = 6
    max_menu: int = 400
    max_paths: int = 60000


@dataclass
class Detection:
    condition: str
    witness: dict
    graph_token: int  # id of the graph the witness belongs to


@dataclass
class DetectResult:
    status: str  # "hit" | "none" | "cap"
    detection: Optional[Detection] = None


class CapTracker:
    def __init__(self):
        self.hit = False

    def charge(self, flag: bool):
        self.hit = self.hit or flag


# ---------------------------------------------------------------------------
# small graph surgery helpers
# ---------------------------------------------------------------------------


def _with(cg: CarrierGraph, **kw) -> CarrierGraph:
    return replace(cg, **kw)


def _fresh_ids(cg: CarrierGraph, nv: int, ne: int) -> Tuple[List[int], List[int]]:
    v0 = cg.next_vertex_id()
    e0 = cg.next_edge_id()
    return [v0 + i for i in range(nv)], [e0 + i for i in range(ne)]


def _copy_parts(cg: CarrierGraph):
    return (
        set(cg.vertices),
        dict(cg.ends),
        dict(cg.labels),
        dict(cg.vgroups),
        dict(cg.egroups),
        list(cg.stars),
    )


def _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars, basepoint=None):
    bp = basepoint if basepoint is not None else cg.basepoint
    if bp not in vertices:
        bp = min(vertices)
    vgroups = {v: vgroups[v] for v in vertices}
    egroups = {e: egroups[e] for e in ends}
    labels = {e: labels[e] for e in ends}
    return CarrierGraph(
        cg.spec,
        frozenset(vertices),
        ends,
        labels,
        vgroups,
        egroups,
        tuple(stars),
        bp,
    )


def _delete_edges(parts, edge_ids):
    vertices, ends, labels, vgroups, egroups, stars = parts
    for e in edge_ids:
        ends.pop(e, None)
        labels.pop(e, None)
        egroups.pop(e, None)
    stars[:] = [
        replace(s, edges=tuple(x for x in s.edges if x not in edge_ids)) for s in stars
    ]


def _zero_lattice(cg: CarrierGraph, factor: int) -> Lattice:
    return Lattice.zero(cg.spec.parabolic_ranks[factor - 1])


def star_recompute(cg: CarrierGraph, star_index: int, new_lattice: Lattice) -> CarrierGraph:
    """Replace every group of the star by the (possibly enlarged) lattice and
    restore the distinct-coset condition by folding together leaves whose
    edge elements now agree modulo the lattice."""
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    star = stars[star_index]
    ref = PeripheralGroup(star.factor, new_lattice, identity(cg.spec))
    vgroups[star.center] = ref
    for e in star.edges:
        egroups[e] = ref
        vgroups[cg.omega(e)] = ref
    # fold leaves with congruent positions
    basepoint = cg.basepoint
    changed = True
    while changed:
        changed = False
        star = stars[star_index]
        for e, f in itertools.combinations(sorted(star.edges), 2):
            diff = labels[e] * inv(labels[f])
            if peripheral_contains(ref, diff):
                keep, drop = ends[e][1], ends[f][1]
                for g in list(ends):
                    a, b = ends[g]
                    ends[g] = (keep if a == drop else a, keep if b == drop else b)
                _delete_edges(
                    (vertices, ends, labels, vgroups, egroups, stars), [f]
                )
                vertices.discard(drop)
                vgroups.pop(drop, None)
                if basepoint == drop:
                    basepoint = keep
                changed = True
                break
    return _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars, basepoint)


def _star_index_of_vertex(cg: CarrierGraph, v: int) -> Optional[int]:
    for i, star in enumerate(cg.stars):
        if v == star.center or v in star.vertices(cg):
            return i
    return None


def _star_path_label(cg: CarrierGraph, star: PeripheralStar, u: int, w: int) -> GroupElement:
    """Element read along the reduced path u -> center -> w inside the star."""
    out = identity(cg.spec)
    if u != star.center:
        e_u = next(e for e in star.edges if cg.omega(e) == u)
        out = out * inv(cg.labels[e_u])
    if w != star.center:
        e_w = next(e for e in star.edges if cg.omega(e) == w)
        out = out * cg.labels[e_w]
    return out


def prune_hanging(cg: CarrierGraph) -> CarrierGraph:
    """Drop valence-1 trivial vertices, valence-1 star leaves, and isolated
    trivial vertices (never the basepoint); repeat to a fixed point."""
    changed = True
    while changed:
        changed = False
        for v in sorted(cg.vertices):
            if v == cg.basepoint:
                continue
            sides = cg.sides_at(v)
            star = cg.star_of_vertex(v)
            if star is not None and star.center == v:
                if not sides and is_trivial_ref(cg.vgroups[v]):
                    parts = _copy_parts(cg)
                    parts[0].discard(v)
                    parts[5][:] = [s for s in parts[5] if s.center != v]
                    cg = _rebuild(cg, *parts)
                    changed = True
                    break
                continue
            if len(sides) == 1:
                e = sides[0]
                droppable = (
                    is_trivial_ref(cg.vgroups[v])
                    or (star is not None and cg.is_peripheral_edge(e))
                )
                if droppable:
                    parts = _copy_parts(cg)
                    _delete_edges(parts, [abs(e)])
                    parts[0].discard(v)
                    cg = _rebuild(cg, *parts)
                    changed = True
                    break
            if not sides and is_trivial_ref(cg.vgroups[v]) and star is None:
                parts = _copy_parts(cg)
                parts[0].discard(v)
                cg = _rebuild(cg, *parts)
                changed = True
                break
    return cg


# ---------------------------------------------------------------------------
# peripheral segments (the A8 surgery and its closure)
# ---------------------------------------------------------------------------


def _first_par_split(g: GroupElement):
    for idx, syl in enumerate(g.syllables):
        if syl[0] == PAR:
            pre = GroupElement(g.spec, g.syllables[:idx])
            post = GroupElement(g.spec, g.syllables[idx + 1 :])
            return pre, (syl[1], syl[2]), post
    return None


def peripheral_segment_step(cg: CarrierGraph, e: int) -> CarrierGraph:
    """Cut the first peripheral letter out of a free edge label and house it
    in a fresh trivial star."""
    split = _first_par_split(cg.labels[e])
    if split is None:
        raise GroupError(f"edge {e} has no peripheral letter")
    pre, (m, vec), post = split
    (w1, w2, w3), (f1, s1, s2, f2) = _fresh_ids(cg, 3, 4)
    a, b = cg.ends[e]
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    _delete_edges((vertices, ends, labels, vgroups, egroups, stars), [e])
    vertices |= {w1, w2, w3}
    zero = PeripheralGroup(m, _zero_lattice(cg, m), identity(cg.spec))
    ends[f1], labels[f1], egroups[f1] = (a, w1), pre, TrivialGroup()
    ends[s1], labels[s1], egroups[s1] = (
        (w2, w1),
        par_el(cg.spec, m, tuple(-c for c in vec)),
        zero,
    )
    ends[s2], labels[s2], egroups[s2] = (w2, w3), identity(cg.spec), zero
    ends[f2], labels[f2], egroups[f2] = (w3, b), post, TrivialGroup()
    vgroups[w1] = vgroups[w2] = vgroups[w3] = zero
    stars.append(PeripheralStar(w2, m, (s1, s2)))
    return _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars)


def peripheral_segment_closure(cg: CarrierGraph) -> Tuple[CarrierGraph, int]:
    count = 0
    while True:
        target = next(
            (
                e
                for e in cg.oriented_edges()
                if cg.is_free_edge(e) and _first_par_split(cg.labels[e]) is not None
            ),
            None,
        )
        if target is None:
            return cg, count
        cg = peripheral_segment_step(cg, target)
        count += 1


# ---------------------------------------------------------------------------
# prenormalization
# ---------------------------------------------------------------------------


def _essential_edges_at(cg: CarrierGraph, v: int) -> List[int]:
    return [e for e in cg.oriented_edges() if cg.is_essential_edge(e) and cg.omega(e) == v]


def _edge_parabolic_class(cg: CarrierGraph, e: int) -> Optional[Tuple[int, GroupElement]]:
    """(factor, minimal conjugator) of the omega-side image of the edge
    lattice; None for trivial lattices."""
    ref = cg.egroups[e]
    if not isinstance(ref, PeripheralGroup) or ref.lattice.is_zero:
        return None
    sample = inv(cg.labels[e]) * par_el(cg.spec, ref.factor, ref.lattice.basis[0]) * cg.labels[e]
    return parabolic_type(sample)


def _ensure_parabolic_edge(
    cg: CarrierGraph,
    v: int,
    m: int,
    conjugator: GroupElement,
    lattice: Lattice,
) -> Tuple[CarrierGraph, int]:
    """Make sure the essential vertex v has an essential edge whose omega
    image is the class conjugator * (lattice in factor m) * conjugator^-1;
    returns the edge.  Creates a fresh star when missing."""
    for e in _essential_edges_at(cg, v):
        cls = _edge_parabolic_class(cg, e)
        if cls is not None and cls[0] == m and cls[1] == conjugator:
            ref = cg.egroups[e]
            if not lattice.subset_of(ref.lattice):
                cg = _enlarge_edge_lattice(cg, e, ref.lattice + lattice)
                e = e  # ids are stable under the enlargement
            return cg, e
    (c, w), (s_edge, e_new) = _fresh_ids(cg, 2, 2)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    vertices |= {c, w}
    ref = PeripheralGroup(m, lattice, identity(cg.spec))
    vgroups[c] = vgroups[w] = ref
    ends[s_edge], labels[s_edge], egroups[s_edge] = (c, w), identity(cg.spec), ref
    ends[e_new], labels[e_new], egroups[e_new] = (w, v), inv(conjugator), ref
    vref = vgroups[v]
    assert isinstance(vref, EssentialGroup)
    extra = [
        conjugator * par_el(cg.spec, m, row) * inv(conjugator) for row in lattice.basis
    ]
    gens = list(vref.generators)
    for g in extra:
        if g not in gens and inv(g) not in gens:
            gens.append(g)
    bound = max([vref.bound] + [len_x(g) for g in gens])
    vgroups[v] = EssentialGroup(tuple(gens), bound)
    stars.append(PeripheralStar(c, m, (s_edge,)))
    return _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars), e_new


def _enlarge_edge_lattice(cg: CarrierGraph, e: int, new_lattice: Lattice) -> CarrierGraph:
    """Grow the lattice of an essential edge, its star, and the listed
    generators of its essential endpoint."""
    ref = cg.egroups[e]
    assert isinstance(ref, PeripheralGroup)
    m = ref.factor
    egroups = dict(cg.egroups)
    egroups[e] = PeripheralGroup(m, new_lattice, ref.frame)
    cg = _with(cg, egroups=egroups)
    star_idx = _star_index_of_vertex(cg, cg.alpha(e))
    central = cg.vgroups[cg.stars[star_idx].center]
    cg = star_recompute(cg, star_idx, central.lattice + new_lattice)
    if e not in cg.ends:  # pragma: no cover - the enlarged edge never folds away
        raise GroupError("edge vanished while enlarging its star")
    v = cg.omega(e)
    vref = cg.vgroups[v]
    if isinstance(vref, EssentialGroup):
        g_e = cg.labels[e]
        gens = list(vref.generators)
        for row in new_lattice.basis:
            img = inv(g_e) * par_el(cg.spec, m, row) * g_e
            if img not in gens and inv(img) not in gens:
                gens.append(img)
        bound = max([vref.bound] + [len_x(g) for g in gens])
        vgroups = dict(cg.vgroups)
        vgroups[v] = EssentialGroup(tuple(gens), bound)
        cg = _with(cg, vgroups=vgroups)
    return cg


def prenormalize(
    cg: CarrierGraph, caps: Caps = Caps(), max_passes: int = 30
) -> Tuple[CarrierGraph, List[dict], str]:
    """Close the four prenormalization conditions up to the enumeration caps:
    minimal edge elements, saturated-in-the-bounded-sense edge lattices, no
    conjugate duplicate edges, an essential edge for every detected parabolic
    class.  Returns (graph, trace, status) where status is "prenormal" or
    "prenormal-up-to-cap"."""
    trace: List[dict] = []
    tracker = CapTracker()
    for _ in range(max_passes):
        changed = False

        # (1) minimal coset representatives for essential edge elements
        for e in list(cg.oriented_edges()):
            if e not in cg.ends or not cg.is_essential_edge(e):
                continue
            star_idx = _star_index_of_vertex(cg, cg.alpha(e))
            if star_idx is None:
                continue
            star = cg.stars[star_idx]
            prefix, rest = strip_peripheral_prefix(cg.labels[e], star.factor)
            if not any(prefix):
                continue
            w = cg.alpha(e)
            (w_new,), (f_new,) = _fresh_ids(cg, 1, 1)
            vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
            vertices.add(w_new)
            ref = cg.vgroups[star.center]
            vgroups[w_new] = ref
            anchor = _star_path_label(cg, star, star.center, w)
            ends[f_new] = (star.center, w_new)
            labels[f_new] = anchor * par_el(cg.spec, star.factor, prefix)
            egroups[f_new] = ref
            ends[e] = (w_new, cg.omega(e))
            labels[e] = rest
            stars[star_idx] = replace(star, edges=star.edges + (f_new,))
            cg = _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars)
            cg = star_recompute(cg, star_idx, ref.lattice)
            cg = prune_hanging(cg)
            trace.append({"case": "minimal-elements", "edge": e})
            changed = True

        # (2) edge lattices swallow every bounded-detected intersection
        for e in list(cg.oriented_edges()):
            if e not in cg.ends or not cg.is_essential_edge(e):
                continue
            v = cg.omega(e)
            vref = cg.vgroups.get(v)
            if not isinstance(vref, EssentialGroup):
                continue
            ref = cg.egroups[e]
            m = ref.factor
            g_e = cg.labels[e]
            hits = []
            elements = essential_elements(vref, caps.essential_product_len)
            tracker.charge(len(elements) >= 20000)
            for a in elements:
                if a.is_identity:
                    continue
                conj = g_e * a * inv(g_e)
                if (
                    len(conj.syllables) == 1
                    and conj.syllables[0][0] == PAR
                    and conj.syllables[0][1] == m
                ):
                    hits.append(conj.syllables[0][2])
            grown = ref.lattice + Lattice.span(ref.lattice.ambient_rank, hits)
            if grown != ref.lattice:
                cg = _enlarge_edge_lattice(cg, e, grown)
                trace.append({"case": "edge-lattice", "edge": e})
                changed = True

        # (3) conjugate duplicate essential edges fold together
        done_pair = False
        for v in sorted(cg.vertices):
            if done_pair or not cg.is_essential_vertex(v):
                continue
            edges = _essential_edges_at(cg, v)
            for e1, e2 in itertools.combinations(edges, 2):
                r1, r2 = cg.egroups[e1], cg.egroups[e2]
                if r1.factor != r2.factor or r1.lattice != r2.lattice:
                    continue
                vref = cg.vgroups[v]
                conj = None
                elements = essential_elements(vref, caps.essential_product_len)
                tracker.charge(len(elements) >= 20000)
                for a in elements:
                    q = cg.labels[e1] * a * inv(cg.labels[e2])
                    if len(q.syllables) <= 1 and (
                        q.is_identity
                        or (q.syllables[0][0] == PAR and q.syllables[0][1] == r1.factor)
                    ):
                        conj = (a, q)
                        break
                if conj is None:
                    continue
                cg = _merge_conjugate_edges(cg, v, e1, e2, conj[0])
                trace.append({"case": "duplicate-edges", "edges": (e1, e2)})
                changed = True
                done_pair = True
                break

        # (4) every detected parabolic class of an essential group has an edge
        for v in sorted(cg.vertices):
            if v not in cg.vertices or not cg.is_essential_vertex(v):
                continue
            vref = cg.vgroups[v]
            elements = essential_elements(vref, caps.essential_product_len)
            tracker.charge(len(elements) >= 20000)
            classes: Dict[Tuple[int, GroupElement], List[Tuple[int, ...]]] = {}
            for a in elements:
                if a.is_identity:
                    continue
                pt = parabolic_type(a)
                if pt is None:
                    continue
                m, h = pt
                core_vec = (inv(h) * a * h).syllables[0][2]
                classes.setdefault((m, h), []).append(core_vec)
            for (m, h), vecs in sorted(classes.items(), key=lambda kv: repr(kv[0])):
                lattice = Lattice.span(cg.spec.parabolic_ranks[m - 1], vecs)
                have = False
                for e in _essential_edges_at(cg, v):
                    cls = _edge_parabolic_class(cg, e)
                    if cls is not None and cls == (m, h):
                        have = True
                        if not lattice.subset_of(cg.egroups[e].lattice):
                            cg = _enlarge_edge_lattice(
                                cg, e, cg.egroups[e].lattice + lattice
                            )
                            trace.append({"case": "edge-lattice", "edge": e})
                            changed = True
                if not have:
                    cg, e_new = _ensure_parabolic_edge(cg, v, m, h, lattice)
                    trace.append({"case": "new-parabolic-edge", "vertex": v, "edge": e_new})
                    changed = True

        if not changed:
            break
    else:
        tracker.charge(True)
    status = "prenormal-up-to-cap" if tracker.hit else "prenormal"
    return cg, trace, status


def _merge_conjugate_edges(
    cg: CarrierGraph, v: int, e1: int, e2: int, a: GroupElement
) -> CarrierGraph:
    """Fold duplicate essential edges into v whose omega images are
    A_v-conjugate (by a): keep e1, discard e2, recording the detour element
    in the star at the alpha side of e1."""
    i1 = _star_index_of_vertex(cg, cg.alpha(e1))
    i2 = _star_index_of_vertex(cg, cg.alpha(e2))
    m = cg.egroups[e1].factor
    p_bar = cg.labels[e1] * a * inv(cg.labels[e2])  # in P_m by malnormality
    if i1 == i2:
        star = cg.stars[i1]
        g_prime = _star_path_label(cg, star, cg.alpha(e2), cg.alpha(e1))
        gained = p_bar * g_prime
        vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
        _delete_edges((vertices, ends, labels, vgroups, egroups, stars), [e2])
        cg = _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars)
        central = cg.vgroups[cg.stars[i1].center]
        vec = (
            tuple()
            if gained.is_identity
            else gained.syllables[0][2]
        )
        grown = central.lattice if gained.is_identity else central.lattice + Lattice.span(
            central.lattice.ambient_rank, [vec]
        )
        cg = star_recompute(cg, i1, grown)
        return prune_hanging(cg)
    # different stars: carry star 2 over to star 1
    star1, star2 = cg.stars[i1], cg.stars[i2]
    lat1 = cg.vgroups[star1.center].lattice
    lat2 = cg.vgroups[star2.center].lattice
    g1 = _star_path_label(cg, star1, star1.center, cg.alpha(e1))
    g2 = _star_path_label(cg, star2, star2.center, cg.alpha(e2))
    g_bar = g1 * p_bar * inv(g2)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    _delete_edges((vertices, ends, labels, vgroups, egroups, stars), [e2])
    moved = []
    for f in star2.edges:
        if f not in ends:
            continue
        ends[f] = (star1.center, ends[f][1])
        labels[f] = g_bar * labels[f]
        moved.append(f)
    vertices.discard(star2.center)
    vgroups.pop(star2.center, None)
    new_stars = []
    for idx, s in enumerate(stars):
        if idx == i2:
            continue
        if idx == i1:
            new_stars.append(replace(s, edges=s.edges + tuple(moved)))
        else:
            new_stars.append(s)
    basepoint = cg.basepoint if cg.basepoint != star2.center else star1.center
    cg = _rebuild(cg, vertices, ends, labels, vgroups, egroups, new_stars, basepoint)
    i1_new = next(i for i, s in enumerate(cg.stars) if s.center == star1.center)
    cg = star_recompute(cg, i1_new, lat1 + lat2)
    return prune_hanging(cg)


# ---------------------------------------------------------------------------
# bounded path enumeration
# ---------------------------------------------------------------------------


def _menu(cg: CarrierGraph, v: int, budget: int, caps: Caps, tracker: CapTracker):
    """Vertex elements available at v within the X-length budget, identity
    first, then ascending."""
    ref = cg.vgroups[v]
    out = [identity(cg.spec)]
    if isinstance(ref, PeripheralGroup) and not ref.lattice.is_zero:
        cap = min(budget, caps.vertex_elem_l1)
        vecs = ref.lattice.vectors_up_to(cap)
        tracker.charge(len(vecs) > caps.max_menu)
        for vec in vecs[: caps.max_menu]:
            out.append(ref.frame * par_el(cg.spec, ref.factor, vec) * inv(ref.frame))
    elif isinstance(ref, EssentialGroup):
        elements = essential_elements(ref, caps.essential_product_len)
        tracker.charge(len(elements) >= 20000)
        for a in elements:
            if not a.is_identity and len_x(a) <= budget:
                out.append(a)
    return out


def _iter_paths(cg: CarrierGraph, L: int, caps: Caps, starts, tracker: CapTracker):
    """Almost-simple decorated paths of spelled X-cost at most L starting at
    the given vertices, with identity elements at both endpoints.  Yields
    (APath, crossed_free_edge) pairs in a deterministic order."""
    budget_nodes = caps.max_paths

    def rec(start, v, elems, edges, used, visited, cost, crossed_free, count):
        if count[0] > budget_nodes:
            tracker.charge(True)
            return
        for side in cg.sides_at(v):
            if abs(side) in used:
                continue
            w = cg.omega(side)
            occurrences = visited[1:].count(w)
            if occurrences >= 1 and not any(
                s.center == w for s in cg.stars
            ):
                continue
            cost2 = cost + len_x(cg.label(side))
            if cost2 > L:
                continue
            free_now = crossed_free or cg.is_free_edge(side)
            count[0] += 1
            # yield with a trivial final element
            t = APath(start, tuple(elems + [identity(cg.spec)]), tuple(edges + [side]))
            yield t, free_now
            for a in _menu(cg, w, L - cost2, caps, tracker):
                cost3 = cost2 + len_x(a)
                if cost3 > L:
                    continue
                yield from rec(
                    start,
                    w,
                    elems + [a],
                    edges + [side],
                    used | {abs(side)},
                    visited + [w],
                    cost3,
                    free_now,
                    count,
                )

    for start in sorted(starts):
        counter = [0]
        yield from rec(
            start, start, [identity(cg.spec)], [], frozenset(), [start], 0, False, counter
        )


def _in_peripheral_factor(g: GroupElement, m: int) -> bool:
    if g.is_identity:
        return True
    return len(g.syllables) == 1 and g.syllables[0][0] == PAR and g.syllables[0][1] == m


def _segment_containing(cg: CarrierGraph, edge: int) -> Optional[Tuple[int, ...]]:
    segs, _ = trivial_segments(cg)
    for seg in segs:
        if edge in seg or -edge in seg:
            return seg
    return None


def free_label_total(cg: CarrierGraph) -> int:
    return sum(len_rel(cg.labels[e]) for e in cg.ends if cg.is_free_edge(e))


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------


def _detect_a8(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    for e in cg.oriented_edges():
        if cg.is_free_edge(e) and _first_par_split(cg.labels[e]) is not None:
            return {"edge": e}
    return None


def _detect_a7(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    for m in range(1, cg.spec.n_factors + 1):
        allowed = set()
        for e in cg.oriented_edges():
            if _in_peripheral_factor(cg.labels[e], m):
                allowed.add(e)
        for e in sorted(allowed):
            if not is_trivial_ref(cg.egroups[e]):
                continue
            # cycle through e: path from omega(e) back to alpha(e) avoiding e
            start, goal = cg.omega(e), cg.alpha(e)
            prev = {start: None}
            queue = [start]
            while queue:
                u = queue.pop(0)
                if u == goal:
                    break
                for side in cg.sides_at(u):
                    if abs(side) == e or abs(side) not in allowed:
                        continue
                    w = cg.omega(side)
                    if w not in prev:
                        prev[w] = (u, side)
                        queue.append(w)
            if goal not in prev:
                continue
            path = []
            node = goal
            while prev[node] is not None:
                u, side = prev[node]
                path.append(side)
                node = u
            path.reverse()
            return {"factor": m, "circuit": [e] + path, "first": e}
    return None


def _detect_star_merge(cg: CarrierGraph, L, caps, tracker, essential_end: bool):
    """Shared scan for the two star-merge conditions: paths out of a star
    vertex, crossing at least one free edge, ending on a same-factor star
    vertex with peripheral value (A1a) or on an essential vertex whose group
    meets the conjugated factor (A1b)."""
    star_of = {}
    for idx, star in enumerate(cg.stars):
        for v in star.vertices(cg):
            star_of[v] = idx
    if not star_of:
        return None
    for t, crossed_free in _iter_paths(cg, L, caps, sorted(star_of), tracker):
        if not crossed_free:
            continue
        i = star_of[t.start]
        m = cg.stars[i].factor
        end = cg.path_end(t)
        if not essential_end:
            j = star_of.get(end)
            if j is None or cg.stars[j].factor != m:
                continue
            value = cg.nu(t)
            if not _in_peripheral_factor(value, m):
                continue
            first_free = next(s for s in t.edges if cg.is_free_edge(s))
            seg = _segment_containing(cg, abs(first_free))
            if seg is None:
                continue
            return {"star_i": i, "star_j": j, "path": t, "segment": seg}
        else:
            if end in star_of or not cg.is_essential_vertex(end):
                continue
            vref = cg.vgroups[end]
            value = cg.nu(t)
            elements = essential_elements(vref, caps.essential_product_len)
            tracker.charge(len(elements) >= 20000)
            for a in elements:
                if a.is_identity:
                    continue
                conj = value * a * inv(value)
                if _in_peripheral_factor(conj, m) and not conj.is_identity:
                    first_free = next(s for s in t.edges if cg.is_free_edge(s))
                    seg = _segment_containing(cg, abs(first_free))
                    if seg is None:
                        continue
                    return {
                        "star_i": i,
                        "path": t,
                        "element": a,
                        "segment": seg,
                    }
    return None


def _detect_a2(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    essentials = sorted(v for v in cg.vertices if cg.is_essential_vertex(v))
    if len(essentials) == 0:
        return None
    for t, _ in _iter_paths(cg, L, caps, essentials, tracker):
        end = cg.path_end(t)
        if cg.is_essential_vertex(end):
            return {"path": t}
    return None


def _detect_a3(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    starts = sorted(cg.vertices)
    for t, crossed_free in _iter_paths(cg, L, caps, starts, tracker):
        if not crossed_free or cg.path_end(t) != t.start:
            continue
        if len(t.edges) < 1:
            continue
        value = cg.nu(t)
        if value.is_identity or parabolic_type(value) is not None:
            if not any(cg.is_free_edge(s) for s in t.edges):
                continue
            return {"path": t}
    return None


def _detect_a4a(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    for e in cg.oriented_edges():
        if not cg.is_essential_edge(e):
            continue
        avref = cg.vgroups[cg.alpha(e)]
        if not isinstance(avref, PeripheralGroup):
            continue
        edge_lat = cg.egroups[e].lattice
        for vec in avref.lattice.vectors_up_to(L):
            if vec not in edge_lat:
                return {"edge": e, "vector": vec}
    return None


def _detect_a4b(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    starts = []
    for star in cg.stars:
        if not _star_lattice(cg, star).is_zero:
            starts.extend(star.vertices(cg))
    if not starts:
        return None
    for t, crossed_free in _iter_paths(cg, L, caps, sorted(set(starts)), tracker):
        if not t.edges or not cg.is_free_edge(t.edges[0]):
            continue
        end = cg.path_end(t)
        if not cg.is_essential_vertex(end):
            continue
        star = cg.star_of_vertex(t.start)
        vecs = _star_lattice(cg, star).vectors_up_to(L)
        if not vecs:
            continue
        seg = _segment_containing(cg, abs(t.edges[0]))
        if seg is None:
            continue
        return {"path": t, "vector": vecs[0], "segment": seg}
    return None


def _detect_a5(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    starts = []
    for star in cg.stars:
        if not _star_lattice(cg, star).is_zero:
            starts.extend(star.vertices(cg))
    if not starts:
        return None
    for t, crossed_free in _iter_paths(cg, L, caps, sorted(set(starts)), tracker):
        if not crossed_free:
            continue
        end = cg.path_end(t)
        star_end = cg.star_of_vertex(end)
        if star_end is None or _star_lattice(cg, star_end).is_zero:
            continue
        star_start = cg.star_of_vertex(t.start)
        vecs_p = _star_lattice(cg, star_start).vectors_up_to(L)
        vecs_q = _star_lattice(cg, star_end).vectors_up_to(L)
        if not vecs_p or not vecs_q:
            continue
        first_free = next(s for s in t.edges if cg.is_free_edge(s))
        seg = _segment_containing(cg, abs(first_free))
        if seg is None:
            continue
        return {
            "path": t,
            "p": vecs_p[0],
            "p_prime": vecs_q[0],
            "segment": seg,
        }
    return None


def _eps_routes(cg: CarrierGraph) -> Dict[int, Dict[int, List[int]]]:
    """For each vertex, the vertices reachable through identity-labeled free
    edges, with one crossing route recorded."""
    out: Dict[int, Dict[int, List[int]]] = {}
    for v in cg.vertices:
        routes = {v: []}
        queue = [v]
        while queue:
            u = queue.pop(0)
            for side in cg.sides_at(u):
                if not cg.is_free_edge(side) or not cg.label(side).is_identity:
                    continue
                w = cg.omega(side)
                if w not in routes:
                    routes[w] = routes[u] + [side]
                    queue.append(w)
        out[v] = routes
    return out


def _par_weight(g: GroupElement) -> int:
    return sum(1 for s in g.syllables if s[0] == PAR)


def _detect_a6(cg: CarrierGraph, L, caps, tracker) -> Optional[dict]:
    """Collapsible pairs: two free edge sides reachable from a common point
    through identity-labeled edges, whose label prefixes overlap, or two
    parallel maximal trivial segments.  Fires exactly when replacing the
    longer side by the shortcut strictly reduces the complexity, counting
    the stars that peripheral letters in the new label will cost."""
    eps = _eps_routes(cg)
    # family 1: prefix pairs of free sides out of epsilon-related vertices
    sides = [s for s in cg.all_edge_sides() if cg.is_free_edge(s)]
    best = None
    for s1 in sorted(sides, key=lambda s: (abs(s), s < 0)):
        v1 = cg.alpha(s1)
        w1 = geodesic_rep(cg.label(s1))
        for v2, route in sorted(eps[v1].items()):
            for s2 in cg.sides_at(v2):
                if not cg.is_free_edge(s2) or s2 == s1:
                    continue
                if abs(s2) == abs(s1) and cg.alpha(s1) != cg.alpha(s2):
                    continue
                if route and abs(s1) in {abs(r) for r in route}:
                    continue
                if route and abs(s2) in {abs(r) for r in route}:
                    continue
                w2 = geodesic_rep(cg.label(s2))
                for a in range(1, len(w1) + 1):
                    for b in range(1, len(w2) + 1):
                        if (abs(s2), s2 < 0, b) <= (abs(s1), s1 < 0, a) and v1 == v2:
                            continue  # unordered pairs once
                        if abs(s1) == abs(s2) and a + b > len(w1):
                            continue  # the two halves of a loop must not overlap
                        shortcut = normalize(
                            cg.spec,
                            [_inv_l(l) for l in reversed(w1[:a])] + w2[:b],
                        )
                        gain_target = max(a, b)
                        cost = len_rel(shortcut) + _par_weight(shortcut)
                        if cost < gain_target:
                            cand = {
                                "kind": "pair",
                                "s1": s1,
                                "s2": s2,
                                "a": a,
                                "b": b,
                                "route": route,
                                "gain": gain_target - cost,
                            }
                            key = (abs(s1), abs(s2), a, b)
                            if best is None or key < best[0]:
                                best = (key, cand)
    if best is not None:
        return best[1]
    # family 2: parallel maximal trivial segments; the round trip through
    # both is a closed path whose value may be far shorter than either
    segs, _ = trivial_segments(cg)
    for sa, sb in itertools.combinations(segs, 2):
        ends_a = (cg.alpha(sa[0]), cg.omega(sa[-1]))
        ends_b = (cg.alpha(sb[0]), cg.omega(sb[-1]))
        flips = []
        if ends_a == ends_b:
            flips.append(False)
        if ends_a == (ends_b[1], ends_b[0]):
            flips.append(True)
        label_a = normalize(cg.spec, [l for s in sa for l in geodesic_rep(cg.label(s))])
        for flip in flips:
            sb_use = tuple(-s for s in reversed(sb)) if flip else sb
            label_b = normalize(
                cg.spec, [l for s in sb_use for l in geodesic_rep(cg.label(s))]
            )
            loop_value = label_a * inv(label_b)
            cost = len_rel(loop_value) + _par_weight(loop_value)
            for target in (sa, sb_use):
                seg_len = sum(len_rel(cg.label(s)) for s in target)
                if cost < seg_len:
                    return {
                        "kind": "segments",
                        "delete": target,
                        "loop_at": ends_a[0],
                        "shortcut": loop_value,
                    }
    return None


def _inv_l(letter):
    if isinstance(letter, int):
        return -letter
    return (letter[0], tuple(-c for c in letter[1]))


def detect(cg: CarrierGraph, L: int, caps: Caps = Caps()) -> DetectResult:
    """First firing obstruction in the fixed priority order, with a witness;
    "none" means no obstruction within the budget, "cap" that an enumeration
    limit was hit before the scan finished."""
    tracker = CapTracker()
    scans = (
        ("A8", lambda: _detect_a8(cg, L, caps, tracker)),
        ("A7", lambda: _detect_a7(cg, L, caps, tracker)),
        ("A1a", lambda: _detect_star_merge(cg, L, caps, tracker, False)),
        ("A1b", lambda: _detect_star_merge(cg, L, caps, tracker, True)),
        ("A2", lambda: _detect_a2(cg, L, caps, tracker)),
        ("A3", lambda: _detect_a3(cg, L, caps, tracker)),
        ("A4a", lambda: _detect_a4a(cg, L, caps, tracker)),
        ("A4b", lambda: _detect_a4b(cg, L, caps, tracker)),
        ("A5", lambda: _detect_a5(cg, L, caps, tracker)),
        ("A6", lambda: _detect_a6(cg, L, caps, tracker)),
    )
    for name, scan in scans:
        witness = scan()
        if witness is not None:
            return DetectResult("hit", Detection(name, witness, id(cg)))
    if tracker.hit:
        return DetectResult("cap")
    return DetectResult("none")


# ---------------------------------------------------------------------------
# moves
# ---------------------------------------------------------------------------


def _delete_segment(cg: CarrierGraph, seg: Sequence[int]) -> CarrierGraph:
    interior = []
    v = cg.alpha(seg[0])
    for s in seg[:-1]:
        v = cg.omega(s)
        interior.append(v)
    parts = _copy_parts(cg)
    _delete_edges(parts, [abs(s) for s in seg])
    for v in interior:
        parts[0].discard(v)
        parts[3].pop(v, None)
    return _rebuild(cg, *parts)


def _conjugator_to(cg: CarrierGraph, new_bp: int) -> GroupElement:
    """Image of a path from new_bp to the current basepoint, used to track
    how re-anchoring conjugates the represented subgroup."""
    if new_bp == cg.basepoint:
        return identity(cg.spec)
    prev = {new_bp: None}
    queue = [new_bp]
    while queue:
        u = queue.pop(0)
        if u == cg.basepoint:
            break
        for side in cg.sides_at(u):
            w = cg.omega(side)
            if w not in prev:
                prev[w] = (u, side)
                queue.append(w)
    if cg.basepoint not in prev:
        return identity(cg.spec)  # pragma: no cover - graphs stay connected
    value = identity(cg.spec)
    node = cg.basepoint
    chain = []
    while prev[node] is not None:
        u, side = prev[node]
        chain.append(side)
        node = u
    for side in reversed(chain):
        value = value * cg.label(side)
    return value


@dataclass
class MoveOutcome:
    graph: CarrierGraph
    kind: str  # fold | weak_ao | ao | peripheral_segment
    conjugator: GroupElement
    prenormal_status: str = "prenormal"
    note: str = ""


def _finish(cg_old, cg_new, kind, caps, prenormalize_after=True, note="") -> MoveOutcome:
    status = "prenormal"
    if prenormalize_after:
        cg_new, _, status = prenormalize(cg_new, caps)
    cg_new, _ = peripheral_segment_closure(cg_new)
    cg_new = prune_hanging(cg_new)
    return MoveOutcome(cg_new, kind, identity(cg_old.spec), status, note)


def _move_a8(cg, witness, caps) -> MoveOutcome:
    new = peripheral_segment_step(cg, witness["edge"])
    return MoveOutcome(new, "peripheral_segment", identity(cg.spec))


def _detach_circuit_edge(cg, e_signed, value: GroupElement, make_star: bool):
    """Shared surgery for degenerate circuits: detach the chosen free edge
    from its start and hang it on a fresh vertex carrying the circuit value."""
    e = abs(e_signed)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    lam = identity(cg.spec)
    if value.is_identity:
        (v_new,), _ = _fresh_ids(cg, 1, 0)
        vertices.add(v_new)
        vgroups[v_new] = TrivialGroup()
        attach = v_new
    elif make_star:
        m = value.syllables[0][1]
        vec = value.syllables[0][2]
        lattice = Lattice.span(cg.spec.parabolic_ranks[m - 1], [vec])
        (v_new, w_new), (s_new,) = _fresh_ids(cg, 2, 1)
        vertices |= {v_new, w_new}
        ref = PeripheralGroup(m, lattice, identity(cg.spec))
        vgroups[v_new] = vgroups[w_new] = ref
        ends[s_new], labels[s_new], egroups[s_new] = (
            (v_new, w_new),
            identity(cg.spec),
            ref,
        )
        stars.append(PeripheralStar(v_new, m, (s_new,)))
        attach = w_new
    else:
        (v_new,), _ = _fresh_ids(cg, 1, 0)
        vertices.add(v_new)
        vgroups[v_new] = EssentialGroup((value,), max(1, len_x(value)))
        attach = v_new
    a, b = ends[e]
    if e_signed > 0:
        ends[e] = (attach, b)
    else:
        ends[e] = (a, attach)
    return _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars), lam


def _rotate_circuit(cg, t: APath, first_side: int) -> Tuple[APath, GroupElement]:
    """Cyclically permute a closed path so the chosen side comes first;
    returns the rotated path and its value."""
    k = t.edges.index(first_side)
    edges = t.edges[k:] + t.edges[:k]
    mid = list(t.elems[k + 1 : -1]) + [t.elems[-1] * t.elems[0]] + list(t.elems[1 : k + 1])
    rotated = APath(cg.alpha(first_side), (identity(cg.spec),) + tuple(mid), edges)
    return rotated, cg.nu(rotated)


def _move_a7(cg, witness, caps) -> MoveOutcome:
    m = witness["factor"]
    circuit = witness["circuit"]
    value = identity(cg.spec)
    for s in circuit:
        value = value * cg.label(s)
    first = next(
        (s for s in circuit if is_trivial_ref(cg.egroups[abs(s)]) and not cg.is_peripheral_edge(s)),
        None,
    )
    if first is not None:
        k = circuit.index(first)
        rotated_value = identity(cg.spec)
        for s in circuit[k:] + circuit[:k]:
            rotated_value = rotated_value * cg.label(s)
        new, lam = _detach_circuit_edge(cg, first, rotated_value, make_star=True)
        out = _finish(cg, new, "fold", caps)
        return out
    # the trivial-group edge is peripheral: split it through two fresh vertices
    first = next(s for s in circuit if is_trivial_ref(cg.egroups[abs(s)]))
    k = circuit.index(first)
    rotated_value = identity(cg.spec)
    for s in circuit[k:] + circuit[:k]:
        rotated_value = rotated_value * cg.label(s)
    e = abs(first)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    _delete_edges((vertices, ends, labels, vgroups, egroups, stars), [e])
    a, b = cg.ends[e]
    ga = cg.labels[e]
    vec = None if rotated_value.is_identity else rotated_value.syllables[0][2]
    (v_new, w_new), (e1, e2) = _fresh_ids(cg, 2, 2)
    vertices |= {v_new, w_new}
    if vec is None:
        vgroups[v_new] = TrivialGroup()
    else:
        lattice = Lattice.span(cg.spec.parabolic_ranks[m - 1], [vec])
        vgroups[v_new] = PeripheralGroup(m, lattice, identity(cg.spec))
    vgroups[w_new] = TrivialGroup()
    start = a if first > 0 else b
    endv = b if first > 0 else a
    lab = ga if first > 0 else inv(ga)
    ends[e1], labels[e1], egroups[e1] = (v_new, w_new), identity(cg.spec), TrivialGroup()
    ends[e2], labels[e2], egroups[e2] = (w_new, endv), lab, TrivialGroup()
    if vec is not None:
        stars.append(PeripheralStar(v_new, m, ()))
    new = _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars)
    return _finish(cg, new, "fold", caps)


def _move_a3(cg, witness, caps) -> MoveOutcome:
    t = witness["path"]
    first = next(s for s in t.edges if cg.is_free_edge(s))
    rotated, value = _rotate_circuit(cg, t, first)
    if not value.is_identity and parabolic_type(value) is None:
        raise GroupError("degenerate-circuit move needs a trivial or parabolic value")
    new, lam = _detach_circuit_edge(cg, first, value, make_star=False)
    return _finish(cg, new, "fold", caps)


def _pad_if_central(cg, v):
    """Essential edges cannot start at a star center; interpose a leaf."""
    star_idx = _star_index_of_vertex(cg, v)
    if star_idx is None or cg.stars[star_idx].center != v:
        return cg, v
    star = cg.stars[star_idx]
    ref = cg.vgroups[v]
    (w,), (s_new,) = _fresh_ids(cg, 1, 1)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    vertices.add(w)
    vgroups[w] = ref
    ends[s_new], labels[s_new], egroups[s_new] = (v, w), identity(cg.spec), ref
    stars[star_idx] = replace(star, edges=star.edges + (s_new,))
    return _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars), w


def _move_star_merge(cg, witness, caps) -> MoveOutcome:
    """The A1 surgeries: both endpoints peripheral (possibly after extending
    through the essential edge a parabolic hit points at)."""
    t: APath = witness["path"]
    i = witness["star_i"]
    if "element" in witness:  # the essential-endpoint variant
        v = cg.path_end(t)
        a = witness["element"]
        pt = parabolic_type(a)
        m, h = pt
        core_vec = (inv(h) * a * h).syllables[0][2]
        lattice = Lattice.span(cg.spec.parabolic_ranks[m - 1], [core_vec])
        cg2, e_new = _ensure_parabolic_edge(cg, v, m, h, lattice)
        t = APath(
            t.start,
            t.elems + (identity(cg2.spec),),
            t.edges + (-e_new,),
        )
        witness = {
            "star_i": i,
            "star_j": next(
                idx
                for idx, s in enumerate(cg2.stars)
                if cg2.path_end(t) in s.vertices(cg2)
            ),
            "path": t,
            "segment": witness["segment"],
        }
        cg = cg2
    j = witness["star_j"]
    seg = witness["segment"]
    star_i, star_j = cg.stars[i], cg.stars[j]
    m = star_i.factor
    g1 = _star_path_label(cg, star_i, star_i.center, t.start)
    g2 = _star_path_label(cg, star_j, star_j.center, cg.path_end(t))
    g = g1 * cg.nu(t) * inv(g2)
    if not _in_peripheral_factor(g, m):
        raise GroupError("star-merge value fell outside the factor")
    lam = identity(cg.spec)
    trivial_i = _star_lattice(cg, star_i).is_zero
    trivial_j = _star_lattice(cg, star_j).is_zero
    old_bp = cg.basepoint
    new = _delete_segment(cg, seg)
    if old_bp not in new.vertices:
        lam = _conjugator_to(cg, new.basepoint)
    if i == j:
        central = new.vgroups[star_i.center].lattice
        if not g.is_identity:
            central = central + Lattice.span(
                central.ambient_rank, [g.syllables[0][2]]
            )
        idx = next(k for k, s in enumerate(new.stars) if s.center == star_i.center)
        new = star_recompute(new, idx, central)
        kind = "fold"
    else:
        lat_i = new.vgroups[star_i.center].lattice
        lat_j = new.vgroups[star_j.center].lattice
        vertices, ends, labels, vgroups, egroups, stars = _copy_parts(new)
        moved = []
        for f in star_j.edges:
            if f not in ends:
                continue
            ends[f] = (star_i.center, ends[f][1])
            labels[f] = g * labels[f]
            moved.append(f)
        vertices.discard(star_j.center)
        vgroups.pop(star_j.center, None)
        stars2 = []
        for idx, s in enumerate(stars):
            if s.center == star_j.center:
                continue
            if s.center == star_i.center:
                stars2.append(replace(s, edges=s.edges + tuple(moved)))
            else:
                stars2.append(s)
        bp = new.basepoint if new.basepoint != star_j.center else star_i.center
        if bp != new.basepoint:
            lam = _conjugator_to(cg, bp) if lam.is_identity else lam
        new = _rebuild(new, vertices, ends, labels, vgroups, egroups, stars2, bp)
        idx = next(k for k, s in enumerate(new.stars) if s.center == star_i.center)
        new = star_recompute(new, idx, lat_i + lat_j)
        kind = "weak_ao" if (trivial_i or trivial_j) else "fold"
    new = prune_hanging(new)
    out = _finish(cg, new, kind, caps, prenormalize_after=(kind == "fold"))
    out.conjugator = lam
    return out


def _move_a2(cg, witness, caps) -> MoveOutcome:
    t: APath = witness["path"]
    v, v2 = t.start, cg.path_end(t)
    value = cg.nu(t)
    chosen = next((s for s in t.edges if cg.is_free_edge(s)), None)
    if chosen is None:
        chosen = next(s for s in t.edges if not cg.is_peripheral_edge(s))
    e = abs(chosen)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(cg)
    _delete_edges((vertices, ends, labels, vgroups, egroups, stars), [e])
    lam = identity(cg.spec)
    if v == v2:
        ref = vgroups[v]
        gens = list(ref.generators) if isinstance(ref, EssentialGroup) else []
        if value not in gens and inv(value) not in gens and not value.is_identity:
            gens.append(value)
        bound = max([getattr(ref, "bound", 1)] + [len_x(g) for g in gens])
        vgroups[v] = EssentialGroup(tuple(gens), bound)
        new = _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars)
    else:
        ref1, ref2 = vgroups[v], vgroups[v2]
        gens = list(ref1.generators)
        for gsub in ref2.generators:
            cand = value * gsub * inv(value)
            if cand not in gens and inv(cand) not in gens and not cand.is_identity:
                gens.append(cand)
        bound = max([ref1.bound, ref2.bound] + [len_x(g) for g in gens])
        vgroups[v] = EssentialGroup(tuple(gens), bound)
        for f in list(ends):
            a, b = ends[f]
            if b == v2:
                ends[f] = (a, v)
                labels[f] = labels[f] * inv(value)
            a, b = ends[f]
            if a == v2:
                ends[f] = (v, b)
                labels[f] = value * labels[f]
        vertices.discard(v2)
        vgroups.pop(v2, None)
        bp = cg.basepoint if cg.basepoint != v2 else v
        if bp != cg.basepoint:
            lam = _conjugator_to(cg, bp)
        new = _rebuild(cg, vertices, ends, labels, vgroups, egroups, stars, bp)
    out = _finish(cg, new, "fold", caps)
    out.conjugator = lam
    return out


def _move_a4a(cg, witness, caps) -> MoveOutcome:
    e, vec = witness["edge"], witness["vector"]
    ref = cg.egroups[e]
    new = _enlarge_edge_lattice(
        cg, e, ref.lattice + Lattice.span(ref.lattice.ambient_rank, [vec])
    )
    return _finish(cg, new, "fold", caps)


def _move_a4b(cg, witness, caps) -> MoveOutcome:
    t: APath = witness["path"]
    vec = witness["vector"]
    seg = witness["segment"]
    v_end = cg.path_end(t)
    star = cg.star_of_vertex(t.start)
    m = star.factor
    value = cg.nu(t)
    old_bp = cg.basepoint
    new = _delete_segment(cg, seg)
    lam = identity(cg.spec)
    if old_bp not in new.vertices:
        lam = _conjugator_to(cg, new.basepoint)
    new, anchor = _pad_if_central(new, t.start)
    (e_new,) = _fresh_ids(new, 0, 1)[1]
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(new)
    lattice = Lattice.span(cg.spec.parabolic_ranks[m - 1], [vec])
    ends[e_new], labels[e_new] = (anchor, v_end), value
    egroups[e_new] = PeripheralGroup(m, lattice, identity(cg.spec))
    vref = vgroups[v_end]
    gens = list(vref.generators)
    img = inv(value) * par_el(cg.spec, m, vec) * value
    if img not in gens and inv(img) not in gens:
        gens.append(img)
    vgroups[v_end] = EssentialGroup(
        tuple(gens), max([vref.bound] + [len_x(g) for g in gens])
    )
    new = _rebuild(new, vertices, ends, labels, vgroups, egroups, stars)
    out = _finish(cg, new, "fold", caps)
    out.conjugator = lam
    return out


def _move_a5(cg, witness, caps) -> MoveOutcome:
    t: APath = witness["path"]
    p_vec, q_vec = witness["p"], witness["p_prime"]
    seg = witness["segment"]
    star_a = cg.star_of_vertex(t.start)
    star_b = cg.star_of_vertex(cg.path_end(t))
    m_a, m_b = star_a.factor, star_b.factor
    value = cg.nu(t)
    t_end = cg.path_end(t)
    old_bp = cg.basepoint
    new = _delete_segment(cg, seg)
    lam = identity(cg.spec)
    if old_bp not in new.vertices:
        lam = _conjugator_to(cg, new.basepoint)
    new, anchor_a = _pad_if_central(new, t.start)
    new, anchor_b = _pad_if_central(new, t_end)
    (v_new,), (e1, e2) = _fresh_ids(new, 1, 2)
    vertices, ends, labels, vgroups, egroups, stars = _copy_parts(new)
    vertices.add(v_new)
    p_el = par_el(cg.spec, m_a, p_vec)
    q_el = par_el(cg.spec, m_b, q_vec)
    gens = (p_el, value * q_el * inv(value))
    vgroups[v_new] = EssentialGroup(gens, max(len_x(g) for g in gens))
    ends[e1], labels[e1] = (anchor_a, v_new), identity(cg.spec)
    egroups[e1] = PeripheralGroup(
        m_a, Lattice.span(cg.spec.parabolic_ranks[m_a - 1], [p_vec]), identity(cg.spec)
    )
    ends[e2], labels[e2] = (anchor_b, v_new), inv(value)
    egroups[e2] = PeripheralGroup(
        m_b, Lattice.span(cg.spec.parabolic_ranks[m_b - 1], [q_vec]), identity(cg.spec)
    )
    new = _rebuild(new, vertices, ends, labels, vgroups, egroups, stars)
    out = _finish(cg, new, "fold", caps)
    out.conjugator = lam
    return out


def _split_side(cg, side, depth):
    """Subdivide the edge under a side so its first `depth` letters become
    their own edge; returns (graph, half_side, mid_vertex)."""
    from .carrier import subdivide

    e = abs(side)
    word = geodesic_rep(cg.labels[e])
    if side > 0:
        if depth == len(word):
            return cg, side, cg.omega(side)
        g1 = normalize(cg.spec, word[:depth])
        g2 = normalize(cg.spec, word[depth:])
        new = subdivide(cg, e, g1, g2)
        e1 = new.next_edge_id() - 2
        return new, e1, new.omega(e1)
    if depth == len(word):
        return cg, side, cg.omega(side)
    cut = len(word) - depth
    g1 = normalize(cg.spec, word[:cut])
    g2 = normalize(cg.spec, word[cut:])
    new = subdivide(cg, e, g1, g2)
    e2 = new.next_edge_id() - 1
    return new, -e2, new.alpha(e2)


def _move_a6(cg, witness, caps) -> MoveOutcome:
    if witness["kind"] == "segments":
        target = witness["delete"]
        shortcut = witness["shortcut"]
        anchor = witness["loop_at"]
        interior = {cg.omega(s) for s in target[:-1]}
        lam = identity(cg.spec)
        if cg.basepoint in interior:
            lam = _conjugator_to(cg, anchor)
        new = _delete_segment(cg, target)
        (e_new,) = _fresh_ids(new, 0, 1)[1]
        vertices, ends, labels, vgroups, egroups, stars = _copy_parts(new)
        ends[e_new], labels[e_new], egroups[e_new] = (anchor, anchor), shortcut, TrivialGroup()
        new = _rebuild(
            new,
            vertices,
            ends,
            labels,
            vgroups,
            egroups,
            stars,
            anchor if cg.basepoint in interior else None,
        )
        new, _ = peripheral_segment_closure(new)
        new = prune_hanging(new)
        return MoveOutcome(new, "ao", lam)
    s1, s2, a, b = witness["s1"], witness["s2"], witness["a"], witness["b"]
    route = witness["route"]
    same_edge = abs(s1) == abs(s2)
    if same_edge:
        word = geodesic_rep(cg.labels[abs(s1)])
        total = len(word)
        # orient along the positive edge: s1 covers one end, s2 the other
        front, back = (a, b) if s1 > 0 else (b, a)
        new = cg
        from .carrier import subdivide

        g_front = normalize(cg.spec, word[:front])
        g_mid = normalize(cg.spec, word[front : total - back])
        g_back = normalize(cg.spec, word[total - back :])
        new = subdivide(new, abs(s1), g_front, g_mid * g_back)
        e_front = new.next_edge_id() - 2
        e_rest = new.next_edge_id() - 1
        new = subdivide(new, e_rest, g_mid, g_back)
        e_back = new.next_edge_id() - 1
        half1 = e_front if s1 > 0 else -e_back
        half2 = e_front if s2 > 0 else -e_back
        mid1 = new.omega(half1)
        mid2 = new.omega(half2)
    else:
        new, half1, mid1 = _split_side(cg, s1, a)
        new, half2, mid2 = _split_side(new, s2, b)
    shortcut = normalize(
        cg.spec,
        [
            _inv_l(l)
            for l in reversed(geodesic_rep(cg.label(s1))[:a])
        ]
        + geodesic_rep(cg.label(s2))[:b],
    )
    # delete the longer half; the shortcut replaces it
    target = half1 if a >= b else half2
    parts = _copy_parts(new)
    _delete_edges(parts, [abs(target)])
    (e_new,) = _fresh_ids(new, 0, 1)[1]
    parts[1][e_new] = (mid1, mid2)
    parts[2][e_new] = shortcut
    parts[4][e_new] = TrivialGroup()
    new = _rebuild(new, *parts)
    old_bp = cg.basepoint
    lam = identity(cg.spec)
    new, _ = peripheral_segment_closure(new)
    new = prune_hanging(new)
    if old_bp not in new.vertices:  # pragma: no cover - pruning keeps basepoints
        lam = _conjugator_to(cg, new.basepoint)
    return MoveOutcome(new, "ao", lam)


_MOVES = {
    "A8": _move_a8,
    "A7": _move_a7,
    "A1a": _move_star_merge,
    "A1b": _move_star_merge,
    "A2": _move_a2,
    "A3": _move_a3,
    "A4a": _move_a4a,
    "A4b": _move_a4b,
    "A5": _move_a5,
    "A6": _move_a6,
}


def apply_move(cg: CarrierGraph, detection: Detection, caps: Caps = Caps()) -> MoveOutcome:
    """Perform the surgery the detection asks for, then re-close the
    prenormalization conditions and peripheral segmentation."""
    if detection.graph_token != id(cg):
        raise GroupError("the witness was produced on a different graph")
    return _MOVES[detection.condition](cg, detection.witness, caps)


# ---------------------------------------------------------------------------
# the fold pipeline
# ---------------------------------------------------------------------------


def _lattice_measure(lat: Lattice) -> Tuple[int, int]:
    """Strictly decreases (lexicographically) when the lattice strictly
    grows: rank up, or covolume within its span down."""
    covol = 1
    for row in lat.basis:
        covol *= abs(next(c for c in row if c))
    return (-lat.rank, covol)


def _core_edge_measures(cg: CarrierGraph) -> List[Tuple[int, int]]:
    _, core_edges = structure_stats(cg).core_vertices, None
    stats = structure_stats(cg)
    out = []
    for e in stats.core_edges:
        if cg.is_essential_edge(e):
            out.append(_lattice_measure(cg.egroups[e].lattice))
    return sorted(out)


def _trichotomy_holds(before: dict, after: dict) -> bool:
    if after["free_rank"] < before["free_rank"]:
        return True
    if after["free_rank"] > before["free_rank"]:
        return False
    if after["factors"] < before["factors"]:
        return True
    if after["factors"] > before["factors"]:
        return False
    old_ms, new_ms = before["core_measures"], after["core_measures"]
    if len(new_ms) < len(old_ms):
        # every surviving edge must be matchable to an old one no smaller
        return all(
            any(n <= o for o in old_ms) for n in new_ms
        )
    if len(new_ms) > len(old_ms):
        return False
    paired = all(n <= o for n, o in zip(new_ms, old_ms))
    strict = any(n < o for n, o in zip(new_ms, old_ms))
    return paired and strict


@dataclass
class PipelineResult:
    status: str  # Folded | InconclusiveAtCap | BudgetExhausted
    graph: CarrierGraph
    trace: List[dict]
    conjugator: GroupElement

    def __iter__(self):  # convenience unpacking
        return iter((self.status, self.graph, self.trace))


def _snapshot(cg: CarrierGraph) -> dict:
    stats = structure_stats(cg)
    return {
        "c": stats.complexity_c,
        "free_rank": stats.free_rank,
        "factors": stats.free_factors,
        "free_len": free_label_total(cg),
        "stars": len(cg.stars),
        "core_measures": _core_edge_measures(cg),
    }


class LedgerError(AssertionError):
    """A move broke its complexity contract."""


def _assert_ledger(kind: str, before: dict, after: dict, step: int):
    if kind == "ao":
        if not after["c"] < before["c"]:
            raise LedgerError(f"step {step}: ao move did not decrease c")
    elif kind == "weak_ao":
        if after["c"] > before["c"]:
            raise LedgerError(f"step {step}: weak ao move increased c")
        if (after["free_len"], after["stars"]) >= (
            before["free_len"],
            before["stars"],
        ):
            raise LedgerError(
                f"step {step}: weak ao move did not decrease (free length, stars)"
            )
    elif kind == "peripheral_segment":
        if not after["free_len"] < before["free_len"]:
            raise LedgerError(
                f"step {step}: peripheral segment did not shorten free edges"
            )
    elif kind == "fold":
        if not _trichotomy_holds(before, after):
            raise LedgerError(f"step {step}: fold broke the trichotomy")


def fold_pipeline(
    spec: GroupSpec,
    generators: Sequence[GroupElement],
    L: int = 6,
    caps: Caps = Caps(),
    budget: int = 10_000,
    check_ledger: bool = True,
) -> PipelineResult:
    """Fold the wedge of the generators until no obstruction fires, the
    budget runs out, or an enumeration cap blocks the detectors.

    Every trace record carries the firing condition, a witness summary, and
    the complexity bookkeeping before and after the move.  The represented
    subgroup is preserved up to the returned conjugator (which only moves
    when a surgery deletes the basepoint)."""
    if not generators:
        raise GroupError("the pipeline needs at least one generator")
    cg = wedge_graph(spec, list(generators))
    cg, n_init = peripheral_segment_closure(cg)
    trace: List[dict] = [
        {"step": 0, "condition": "init", "segments": n_init, **_snapshot(cg)}
    ]
    conjugator = identity(spec)
    capped = False
    for step in range(1, budget + 1):
        result = detect(cg, L, caps)
        if result.status == "cap":
            return PipelineResult("InconclusiveAtCap", cg, trace, conjugator)
        if result.status == "none":
            status = "InconclusiveAtCap" if capped else "Folded"
            return PipelineResult(status, cg, trace, conjugator)
        before = _snapshot(cg)
        outcome = apply_move(cg, result.detection, caps)
        cg = outcome.graph
        after = _snapshot(cg)
        if outcome.prenormal_status == "prenormal-up-to-cap":
            capped = True
        if check_ledger:
            _assert_ledger(outcome.kind, before, after, step)
        conjugator = outcome.conjugator * conjugator
        trace.append(
            {
                "step": step,
                "condition": result.detection.condition,
                "kind": outcome.kind,
                "witness": _witness_summary(result.detection.witness),
                "c_before": before["c"],
                "c_after": after["c"],
                "free_rank": after["free_rank"],
                "factors": after["factors"],
                "core_lattice_sizes": [m[1] for m in after["core_measures"]],
            }
        )
    return PipelineResult("BudgetExhausted", cg, trace, conjugator)


def _witness_summary(witness: dict) -> str:
    bits = []
    for key, value in sorted(witness.items()):
        if isinstance(value, APath):
            bits.append(f"{key}=path({value.start};{','.join(map(str, value.edges))})")
        else:
            bits.append(f"{key}={value}")
    return " ".join(bits)


# ---------------------------------------------------------------------------
# sampled distortion diagnostic
# ---------------------------------------------------------------------------


@dataclass
class QieReport:
    max_distortion: float
    worst_witness: Optional[APath]
    trivial_image_witness: Optional[APath] = None


def qie_diagnostic(
    cg: CarrierGraph,
    samples: int = 200,
    length: int = 12,
    seed: int = 0,
    caps: Caps = Caps(),
) -> QieReport:
    """Sample random reduced closed paths and compare their intrinsic length
    against the length of their image: the max ratio is a lower bound for
    the distortion of the represented subgroup.  A closed nondegenerate path
    with trivial image is reported separately: it certifies the graph does
    not embed its fundamental group."""
    from .carrier import apath_lengths

    rng = _random.Random(seed)
    tracker = CapTracker()
    # tree back home, for closing walks
    tree: Dict[int, List[int]] = {cg.basepoint: []}
    frontier = [cg.basepoint]
    while frontier:
        nxt = []
        for v in frontier:
            for side in cg.sides_at(v):
                w = cg.omega(side)
                if w not in tree:
                    tree[w] = [-side] + tree[v]
                    nxt.append(w)
        frontier = nxt
    worst = 0.0
    worst_witness = None
    trivial_witness = None
    for _ in range(samples):
        v = cg.basepoint
        elems = [identity(cg.spec)]
        edges: List[int] = []
        steps = rng.randrange(1, max(2, length))
        for _ in range(steps):
            sides = cg.sides_at(v)
            if not sides:
                break
            side = rng.choice(sides)
            edges.append(side)
            v = cg.omega(side)
            menu = _menu(cg, v, 2, caps, tracker)
            elems.append(rng.choice(menu) if len(menu) > 1 and rng.random() < 0.3 else menu[0])
        for side in tree.get(v, []):
            edges.append(side)
            elems.append(identity(cg.spec))
        t = reduce_apath(cg, APath(cg.basepoint, tuple(elems), tuple(edges)))
        rel_len, _ = apath_lengths(cg, t)
        if rel_len > length:
            continue
        value = cg.nu(t)
        if value.is_identity:
            if not t.is_degenerate and rel_len > 0:
                trivial_witness = t
                worst = float("inf")
                worst_witness = t
            continue
        ratio = (rel_len + 1) / (len_rel(value) + 1)
        if ratio > worst:
            worst, worst_witness = ratio, t
    return QieReport(worst, worst_witness, trivial_witness)
