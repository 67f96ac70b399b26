"""Carrier graphs of groups: the labeled-graph representation of subgroups.

A carrier graph is a finite graph with an involution of edges and a chosen
orientation, a group element on every oriented edge, subgroups of the ambient
free product on vertices and oriented edges, and a collection of peripheral
stars: small trees whose groups and labels all live in one abelian factor.
Every vertex group is one of

* trivial,
* peripheral: a lattice inside one abelian factor, possibly conjugated by a
  frame element (frames only appear transiently while moves rewrite graphs),
* essential: a finitely generated subgroup given by a list of generators.

Closed paths through the graph, decorated with vertex group elements, map to
the ambient group by multiplying the decorations and edge elements in order;
the image of all closed paths at the basepoint is the subgroup the graph
represents.

Oriented edges are positive integers; the reverse of ``e`` is ``-e``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

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
)
from .lattice import Lattice
from .relcayley import CayleyPath, FIRST_TYPE, SECOND_TYPE, THIRD_TYPE, cayley_path


# -- vertex and edge groups ----------------------------------------------------


@dataclass(frozen=True)
class TrivialGroup:
    def describe(self) -> str:
        return "1"


@dataclass(frozen=True)
class PeripheralGroup:
    """frame * (lattice inside factor i) * frame^-1."""

    factor: int
    lattice: Lattice
    frame: GroupElement

    def describe(self) -> str:
        return f"P{self.factor}{[list(r) for r in self.lattice.basis]}"


@dataclass(frozen=True)
class EssentialGroup:
    generators: Tuple[GroupElement, ...]
    bound: int  # every generator has X-length at most this

    def describe(self) -> str:
        return f"<{len(self.generators)} gens>"


GroupRef = Union[TrivialGroup, PeripheralGroup, EssentialGroup]


def is_trivial_ref(ref: GroupRef) -> bool:
    if isinstance(ref, TrivialGroup):
        return True
    if isinstance(ref, PeripheralGroup):
        return ref.lattice.is_zero
    return all(g.is_identity for g in ref.generators)


def peripheral_ref(spec: GroupSpec, factor: int, vectors: Iterable, frame=None) -> PeripheralGroup:
    k = spec.parabolic_ranks[factor - 1]
    return PeripheralGroup(
        factor, Lattice.span(k, list(vectors)), frame if frame is not None else identity(spec)
    )


def peripheral_contains(ref: PeripheralGroup, g: GroupElement) -> bool:
    core = inv(ref.frame) * g * ref.frame
    if core.is_identity:
        return True
    if len(core.syllables) != 1:
        return False
    syl = core.syllables[0]
    return syl[0] == PAR and syl[1] == ref.factor and syl[2] in ref.lattice


def essential_elements(
    ref: EssentialGroup, max_products: int, max_count: int = 20000
) -> List[GroupElement]:
    """Products of at most max_products generators (and inverses), deduplicated."""
    if not ref.generators:
        return []
    spec = ref.generators[0].spec
    gens = []
    for g in ref.generators:
        if not g.is_identity:
            gens.append(g)
            gens.append(inv(g))
    seen = {identity(spec)}
    frontier = [identity(spec)]
    for _ in range(max_products):
        nxt = []
        for h in frontier:
            for g in gens:
                p = h * g
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
                    if len(seen) >= max_count:
                        return sorted(seen, key=lambda e: (len_x(e), repr(e)))
        frontier = nxt
    return sorted(seen, key=lambda e: (len_x(e), repr(e)))


def essential_contains(
    ref: EssentialGroup, g: GroupElement, max_products: int
) -> Optional[bool]:
    """True if g is a short product of generators; None when the bounded
    search is exhausted (membership in essential groups is only
    semi-decided at this scale)."""
    if g.is_identity:
        return True
    if g in essential_elements(ref, max_products):
        return True
    return None


def ref_contains(ref: GroupRef, g: GroupElement, max_products: int = 4) -> Optional[bool]:
    if isinstance(ref, TrivialGroup):
        return g.is_identity
    if isinstance(ref, PeripheralGroup):
        return peripheral_contains(ref, g)
    return essential_contains(ref, g, max_products)


# -- the graph -----------------------------------------------------------------


@dataclass(frozen=True)
class PeripheralStar:
    center: int
    factor: int
    edges: Tuple[int, ...]  # oriented edge ids, all with alpha = center

    def vertices(self, cg: "CarrierGraph") -> List[int]:
        return [self.center] + [cg.omega(e) for e in self.edges]


def star_lattice(cg: "CarrierGraph", star: PeripheralStar) -> Lattice:
    ref = cg.vgroups[star.center]
    assert isinstance(ref, PeripheralGroup)
    return ref.lattice


@dataclass(frozen=True)
class APath:
    start: int
    elems: Tuple[GroupElement, ...]
    edges: Tuple[int, ...]  # signed edge ids

    def __post_init__(self):
        if len(self.elems) != len(self.edges) + 1:
            raise GroupError("an A-path alternates elements and edges")

    @property
    def is_degenerate(self) -> bool:
        return not self.edges

    def reversed(self, cg: "CarrierGraph") -> "APath":
        return APath(
            cg.path_end(self),
            tuple(inv(a) for a in reversed(self.elems)),
            tuple(-e for e in reversed(self.edges)),
        )


@dataclass(frozen=True)
class CarrierGraph:
    spec: GroupSpec
    vertices: FrozenSet[int]
    ends: Dict[int, Tuple[int, int]]  # positive edge id -> (alpha, omega)
    labels: Dict[int, GroupElement]  # positive edge id -> element
    vgroups: Dict[int, GroupRef]
    egroups: Dict[int, GroupRef]  # positive edge id -> group on the alpha side
    stars: Tuple[PeripheralStar, ...]
    basepoint: int

    # -- accessors -----------------------------------------------------------

    def alpha(self, e: int) -> int:
        return self.ends[e][0] if e > 0 else self.ends[-e][1]

    def omega(self, e: int) -> int:
        return self.ends[e][1] if e > 0 else self.ends[-e][0]

    def label(self, e: int) -> GroupElement:
        return self.labels[e] if e > 0 else inv(self.labels[-e])

    def oriented_edges(self) -> List[int]:
        return sorted(self.ends)

    def all_edge_sides(self) -> List[int]:
        out = []
        for e in self.oriented_edges():
            out += [e, -e]
        return out

    def sides_at(self, v: int) -> List[int]:
        """Edge sides leaving v, id-ascending by absolute value."""
        out = []
        for e in self.oriented_edges():
            if self.alpha(e) == v:
                out.append(e)
            if self.alpha(-e) == v:
                out.append(-e)
        return out

    def valence(self, v: int) -> int:
        return len(self.sides_at(v))

    def star_of_vertex(self, v: int) -> Optional[PeripheralStar]:
        for star in self.stars:
            if v == star.center or v in star.vertices(self):
                return star
        return None

    def star_of_edge(self, e: int) -> Optional[PeripheralStar]:
        for star in self.stars:
            if abs(e) in {abs(x) for x in star.edges}:
                return star
        return None

    def is_peripheral_vertex(self, v: int) -> bool:
        return self.star_of_vertex(v) is not None

    def is_peripheral_edge(self, e: int) -> bool:
        return self.star_of_edge(e) is not None

    def is_essential_edge(self, e: int) -> bool:
        return not self.is_peripheral_edge(e) and not is_trivial_ref(
            self.egroups[abs(e)]
        )

    def is_free_edge(self, e: int) -> bool:
        return not self.is_peripheral_edge(e) and is_trivial_ref(self.egroups[abs(e)])

    def is_essential_vertex(self, v: int) -> bool:
        return not self.is_peripheral_vertex(v) and not is_trivial_ref(self.vgroups[v])

    def next_vertex_id(self) -> int:
        return max(self.vertices, default=-1) + 1

    def next_edge_id(self) -> int:
        return max(self.ends, default=0) + 1

    def path_end(self, t: APath) -> int:
        v = t.start
        for e in t.edges:
            if self.alpha(e) != v:
                raise GroupError(f"edge {e} does not continue the path at {v}")
            v = self.omega(e)
        return v

    # -- the homomorphism into the ambient group ------------------------------

    def nu(self, t: APath) -> GroupElement:
        out = t.elems[0]
        v = t.start
        for e, a in zip(t.edges, t.elems[1:]):
            if self.alpha(e) != v:
                raise GroupError(f"edge {e} does not continue the path at {v}")
            v = self.omega(e)
            out = out * self.label(e) * a
        return out


def make_graph(
    spec: GroupSpec,
    vertices: Iterable[int],
    edges: Dict[int, Tuple[int, int]],
    labels: Dict[int, GroupElement],
    vgroups: Optional[Dict[int, GroupRef]] = None,
    egroups: Optional[Dict[int, GroupRef]] = None,
    stars: Sequence[PeripheralStar] = (),
    basepoint: Optional[int] = None,
) -> CarrierGraph:
    vertices = frozenset(vertices)
    vgroups = dict(vgroups or {})
    egroups = dict(egroups or {})
    for v in vertices:
        vgroups.setdefault(v, TrivialGroup())
    for e in edges:
        if e <= 0:
            raise GroupError("oriented edge ids are positive")
        egroups.setdefault(e, TrivialGroup())
        labels.setdefault(e, identity(spec))
    if basepoint is None:
        basepoint = min(vertices)
    return CarrierGraph(
        spec,
        vertices,
        dict(edges),
        dict(labels),
        vgroups,
        egroups,
        tuple(stars),
        basepoint,
    )


def wedge_graph(spec: GroupSpec, generators: Sequence[GroupElement]) -> CarrierGraph:
    """A single vertex with one loop per generator, everything trivial."""
    edges = {i + 1: (0, 0) for i in range(len(generators))}
    labels = {i + 1: g for i, g in enumerate(generators)}
    return make_graph(spec, [0], edges, labels)


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    clause: str
    subject: Tuple
    detail: str

    def __str__(self):
        return f"[{self.clause}] {self.subject}: {self.detail}"


def validate(cg: CarrierGraph) -> List[Violation]:
    """All structural defects of the carrier graph, empty when it is valid."""
    out: List[Violation] = []
    spec = cg.spec

    def bad(clause, subject, detail):
        out.append(Violation(clause, tuple(subject), detail))

    for e, (a, w) in cg.ends.items():
        if a not in cg.vertices or w not in cg.vertices:
            bad("graph-endpoints", (e,), "edge endpoint is not a vertex")

    star_vertices: Dict[int, int] = {}
    star_edges: Dict[int, int] = {}
    for idx, star in enumerate(cg.stars):
        if star.center not in cg.vertices:
            bad("star-structure", (idx,), "missing center")
            continue
        if not 1 <= star.factor <= spec.n_factors:
            bad("star-structure", (idx,), f"factor {star.factor} out of range")
            continue
        leaves = []
        for e in star.edges:
            if e not in cg.ends:
                bad("star-structure", (idx, e), "star edge is not oriented or missing")
                continue
            if cg.alpha(e) != star.center:
                bad("star-orientation", (idx, e), "star edges point away from the center")
            leaves.append(cg.omega(e))
            if abs(e) in star_edges:
                bad("star-disjoint", (e,), "edge lies in two stars")
            star_edges[abs(e)] = idx
        if len(set(leaves)) != len(leaves) or star.center in leaves:
            bad("star-structure", (idx,), "underlying graph is not a tree of diameter <= 2")
        for v in [star.center] + leaves:
            if v in star_vertices and star_vertices[v] != idx:
                bad("star-disjoint", (v,), "vertex lies in two stars")
            star_vertices[v] = idx

        central = cg.vgroups.get(star.center)
        if not isinstance(central, PeripheralGroup) or central.factor != star.factor:
            bad("star-groups", (idx, star.center), "center group is not a lattice of the star factor")
            continue
        if not central.frame.is_identity:
            bad("star-groups", (idx, star.center), "star vertex groups carry no frame")
        for e in star.edges:
            lab = cg.labels.get(e)
            if lab is None:
                continue
            if not peripheral_contains(
                PeripheralGroup(star.factor, Lattice.full(spec.parabolic_ranks[star.factor - 1]), identity(spec)),
                lab,
            ):
                bad("star-labels", (idx, e), "star edge element is outside the factor")
            for ref, what in ((cg.vgroups.get(cg.omega(e)), "leaf"), (cg.egroups.get(e), "edge")):
                if (
                    not isinstance(ref, PeripheralGroup)
                    or ref.factor != star.factor
                    or not ref.frame.is_identity
                    or ref.lattice != central.lattice
                ):
                    bad(
                        "star-condition-5",
                        (idx, e),
                        f"{what} group is not the central lattice (boundary maps must be isomorphisms)",
                    )
        for e, f in itertools.combinations(star.edges, 2):
            le, lf = cg.labels.get(e), cg.labels.get(f)
            if le is None or lf is None:
                continue
            if peripheral_contains(central, le * inv(lf)):
                bad("star-condition-4", (idx, e, f), "two star edges differ by a central lattice element")

    for v in cg.vertices:
        ref = cg.vgroups[v]
        if isinstance(ref, PeripheralGroup) and v not in star_vertices:
            bad("gp-vertex-kinds", (v,), "peripheral vertex group outside every star")
        if isinstance(ref, EssentialGroup):
            if v in star_vertices:
                bad("gp-vertex-kinds", (v,), "essential group on a star vertex")
            for g in ref.generators:
                if len_x(g) > ref.bound:
                    bad("essential-bound", (v,), f"generator {g!r} exceeds the length bound")

    for idx, star in enumerate(cg.stars):
        for side in cg.sides_at(star.center):
            if abs(side) not in star_edges or star_edges[abs(side)] != idx:
                bad("gp-condition-4", (star.center, side), "non-star edge at a central vertex")

    for e in cg.oriented_edges():
        if abs(e) in star_edges:
            continue
        ref = cg.egroups[e]
        if is_trivial_ref(ref):
            continue
        if isinstance(ref, EssentialGroup):
            bad("edge-group-kind", (e,), "edge groups are trivial or lattices")
            continue
        a, w = cg.alpha(e), cg.omega(e)
        peri = [u for u in (a, w) if u in star_vertices]
        if len(peri) != 1:
            bad("gp-condition-5", (e,), "an essential edge touches exactly one peripheral vertex")
        if a not in star_vertices:
            bad("gp-condition-6", (e,), "oriented edges with nontrivial group start at peripheral vertices")
            continue
        avref = cg.vgroups[a]
        if (
            not isinstance(avref, PeripheralGroup)
            or ref.factor != avref.factor
            or not ref.lattice.subset_of(avref.lattice)
        ):
            bad("gp-condition-4a", (e,), "edge group is not a subgroup of its alpha vertex group")
            continue
        # omega side: the conjugated lattice must sit inside the target group
        wref = cg.vgroups[w]
        g_e = cg.labels[e]
        images = [
            inv(g_e) * par_el(cg.spec, ref.factor, row) * g_e for row in ref.lattice.basis
        ]
        if isinstance(wref, EssentialGroup):
            listed = set(wref.generators) | {inv(g) for g in wref.generators}
            for img in images:
                if img not in listed and not img.is_identity:
                    bad(
                        "gp-condition-4b",
                        (e,),
                        "omega image of an edge group basis vector is not a listed generator",
                    )
        elif isinstance(wref, PeripheralGroup):
            for img in images:
                if not peripheral_contains(wref, img):
                    bad("gp-condition-4b", (e,), "omega image leaves the target lattice")
        else:
            bad("gp-condition-4b", (e,), "nontrivial edge group into a trivial vertex")
    return out


# -- A-paths: checking, evaluation, reduction ----------------------------------


def check_apath(cg: CarrierGraph, t: APath, max_products: int = 4) -> None:
    """Raise on definite violations; essential membership is only checked up
    to the bounded enumeration."""
    if t.start not in cg.vertices:
        raise GroupError(f"start vertex {t.start} missing")
    v = t.start
    spots = [(v, t.elems[0])]
    for e, a in zip(t.edges, t.elems[1:]):
        if abs(e) not in cg.ends:
            raise GroupError(f"no edge {e}")
        if cg.alpha(e) != v:
            raise GroupError(f"edge {e} does not start at {v}")
        v = cg.omega(e)
        spots.append((v, a))
    for v, a in spots:
        if ref_contains(cg.vgroups[v], a, max_products) is False:
            raise GroupError(f"element {a!r} is not in the group at vertex {v}")


def nu(cg: CarrierGraph, t: APath) -> GroupElement:
    return cg.nu(t)


def edge_group_omega_side(cg: CarrierGraph, e: int) -> Optional[PeripheralGroup]:
    """The edge group of the side entering omega(e), as a subgroup there:
    conjugation by the edge element carries the alpha copy over."""
    ref = cg.egroups[abs(e)]
    if is_trivial_ref(ref):
        return None
    assert isinstance(ref, PeripheralGroup)
    g = cg.labels[abs(e)]
    if e > 0:
        # omega side carries g^-1 * L * g
        frame = inv(g) * ref.frame
    else:
        frame = ref.frame
    return PeripheralGroup(ref.factor, ref.lattice, _clean_frame(frame, ref))


def _clean_frame(frame: GroupElement, ref: PeripheralGroup) -> GroupElement:
    # absorbing a trailing syllable of the same factor into the lattice
    # keeps membership tests exact; lattices are conjugation-invariant
    # inside their own factor
    if frame.syllables and frame.syllables[-1][0] == PAR and frame.syllables[-1][1] == ref.factor:
        return GroupElement(frame.spec, frame.syllables[:-1])
    return frame


def reduce_apath(cg: CarrierGraph, t: APath) -> APath:
    """Remove every (e, a, e^-1) spur where a lies in the edge group seen
    from omega(e), merging the neighbouring vertex elements."""
    elems = list(t.elems)
    edges = list(t.edges)
    changed = True
    while changed:
        changed = False
        for i in range(len(edges) - 1):
            if edges[i + 1] != -edges[i]:
                continue
            mid = elems[i + 1]
            side = edge_group_omega_side(cg, edges[i])
            ok = mid.is_identity if side is None else peripheral_contains(side, mid)
            if ok:
                carried = cg.label(edges[i]) * mid * cg.label(edges[i + 1])
                elems[i] = elems[i] * carried * elems[i + 2]
                del elems[i + 1 : i + 3]
                del edges[i : i + 2]
                changed = True
                break
    return APath(t.start, tuple(elems), tuple(edges))


# -- realizations ---------------------------------------------------------------


def realize(cg: CarrierGraph, t: APath, nu_threshold: int = 4) -> CayleyPath:
    """The piecewise geodesic spelling of the path, with every maximal run
    through one peripheral star collapsed to a single peripheral edge.

    Collapsed edges are marked first-type; peripheral letters inside the
    spelling of an essential vertex element are marked second-type when their
    X-length is at least nu_threshold / 2, and third-type when the whole
    element is a single peripheral letter.
    """
    spec = cg.spec
    # items: ("elem", vertex, a) and ("edge", e), in path order
    items: List[Tuple] = [("elem", t.start, t.elems[0])]
    v = t.start
    for e, a in zip(t.edges, t.elems[1:]):
        items.append(("edge", e))
        v = cg.omega(e)
        items.append(("elem", v, a))

    def star_of_item(item) -> Optional[PeripheralStar]:
        if item[0] == "elem":
            return cg.star_of_vertex(item[1])
        return cg.star_of_edge(item[1])

    segments: List[Tuple] = []  # ("star", star, [items]) or ("plain", [items])
    for item in items:
        star = star_of_item(item)
        if item[0] == "elem" and star is not None and item[2].is_identity:
            # a trivial element at a star vertex glues runs together but can
            # also border them; attach it to a neighbouring star run if any
            if segments and segments[-1][0] == "star" and segments[-1][1] == star:
                segments[-1][2].append(item)
                continue
            segments.append(("star?", star, [item]))
            continue
        if star is not None:
            if segments and segments[-1][0] in ("star", "star?") and segments[-1][1] == star:
                prev = segments.pop()
                segments.append(("star", star, prev[2] + [item]))
            else:
                segments.append(("star", star, [item]))
        else:
            if segments and segments[-1][0] == "star?":
                # tentative run never materialized; treat as plain identity
                tent = segments.pop()
                segments.append(("plain", tent[2]))
            if segments and segments[-1][0] == "plain":
                segments[-1][1].append(item)
            else:
                segments.append(("plain", [item]))
    if segments and segments[-1][0] == "star?":
        tent = segments.pop()
        segments.append(("plain", tent[2]))

    letters: List = []
    cuts: List[int] = []
    marks: List = []

    def new_piece(piece_letters, piece_marks):
        if not piece_letters:
            return
        if letters:
            cuts.append(len(letters))
        letters.extend(piece_letters)
        marks.extend(piece_marks)

    for seg in segments:
        if seg[0] == "star":
            value = identity(spec)
            for item in seg[2]:
                if item[0] == "elem":
                    value = value * item[2]
                else:
                    value = value * cg.label(item[1])
            if value.is_identity:
                continue
            syl = value.syllables[0]
            if len(value.syllables) != 1 or syl[0] != PAR:
                raise GroupError("a star run multiplied outside its factor")
            new_piece([(syl[1], syl[2])], [FIRST_TYPE])
            continue
        for item in seg[1]:
            if item[0] == "edge":
                word = geodesic_rep(cg.label(item[1]))
                new_piece(word, [None] * len(word))
            else:
                _, vtx, a = item
                if a.is_identity:
                    continue
                word = geodesic_rep(a)
                essential = cg.is_essential_vertex(vtx)
                piece_marks: List = []
                for letter in word:
                    mark = None
                    if essential and not isinstance(letter, int):
                        if len(word) == 1:
                            mark = THIRD_TYPE
                        elif 2 * sum(abs(c) for c in letter[1]) >= nu_threshold:
                            mark = SECOND_TYPE
                    piece_marks.append(mark)
                new_piece(word, piece_marks)
    return cayley_path(identity(spec), letters, cuts, marks)


def apath_lengths(cg: CarrierGraph, t: APath, nu_threshold: int = 4) -> Tuple[int, int]:
    s = realize(cg, t, nu_threshold)
    return len(s), s.piecewise_x_length()


# -- subdivision -----------------------------------------------------------------


def subdivide(
    cg: CarrierGraph, e: int, g1: GroupElement, g2: GroupElement
) -> CarrierGraph:
    """Split a free oriented edge along a product decomposition of its label
    that adds up in relative length; the fundamental group is untouched."""
    if e <= 0 or e not in cg.ends:
        raise GroupError("subdivision wants a positive existing edge id")
    if cg.is_peripheral_edge(e) or not is_trivial_ref(cg.egroups[e]):
        raise GroupError("only free edges are subdivided")
    if g1 * g2 != cg.labels[e]:
        raise GroupError("the pieces do not multiply to the edge element")
    if len_rel(g1) + len_rel(g2) != len_rel(cg.labels[e]):
        raise GroupError("the decomposition is not geodesic")
    v = cg.next_vertex_id()
    e1, e2 = cg.next_edge_id(), cg.next_edge_id() + 1
    a, w = cg.ends[e]
    ends = dict(cg.ends)
    labels = dict(cg.labels)
    egroups = dict(cg.egroups)
    del ends[e], labels[e], egroups[e]
    ends[e1], ends[e2] = (a, v), (v, w)
    labels[e1], labels[e2] = g1, g2
    egroups[e1], egroups[e2] = TrivialGroup(), TrivialGroup()
    vgroups = dict(cg.vgroups)
    vgroups[v] = TrivialGroup()
    return replace(
        cg,
        vertices=cg.vertices | {v},
        ends=ends,
        labels=labels,
        egroups=egroups,
        vgroups=vgroups,
    )


# -- trivial segments and structure stats ------------------------------------------


def _is_breakpoint(cg: CarrierGraph, v: int) -> bool:
    return (
        cg.valence(v) != 2
        or not is_trivial_ref(cg.vgroups[v])
        or cg.is_peripheral_vertex(v)
    )


def trivial_segments(cg: CarrierGraph) -> Tuple[List[Tuple[int, ...]], int]:
    """Maximal runs of free edges through trivial valence-2 interior
    vertices, one representative per inversion pair; components that are
    entirely such (circles of free territory) count once."""
    free_sides = [s for s in cg.all_edge_sides() if cg.is_free_edge(s)]
    segments: List[Tuple[int, ...]] = []
    used: Set[int] = set()
    for side in sorted(free_sides, key=abs):
        if abs(side) in used:
            continue
        if not _is_breakpoint(cg, cg.alpha(side)):
            continue
        # walk forward until the next breakpoint
        seg = [side]
        used.add(abs(side))
        v = cg.omega(side)
        while not _is_breakpoint(cg, v):
            nxt = [s for s in cg.sides_at(v) if s != -seg[-1]]
            if len(nxt) != 1:  # pragma: no cover - valence-2 guarantees one
                break
            seg.append(nxt[0])
            used.add(abs(nxt[0]))
            v = cg.omega(nxt[0])
        segments.append(tuple(seg))
    # circles made entirely of non-breakpoints
    for side in sorted(free_sides, key=abs):
        if abs(side) in used or side < 0:
            continue
        if _is_breakpoint(cg, cg.alpha(side)) or _is_breakpoint(cg, cg.omega(side)):
            continue
        seg = [side]
        used.add(abs(side))
        v = cg.omega(side)
        while v != cg.alpha(side):
            nxt = [s for s in cg.sides_at(v) if s != -seg[-1]]
            if len(nxt) != 1:
                break
            seg.append(nxt[0])
            used.add(abs(nxt[0]))
            v = cg.omega(nxt[0])
        segments.append(tuple(seg))
    # canonical orientation: compare with the inverse, keep the smaller
    canon = []
    for seg in segments:
        rev = tuple(-s for s in reversed(seg))
        canon.append(min(seg, rev))
    return sorted(canon), len(canon)


@dataclass
class StructureStats:
    betti: int
    free_factors: int
    free_rank: int
    core_vertices: FrozenSet[int]
    core_edges: FrozenSet[int]
    complexity_c: int


def _components(vertices: Set[int], adjacency: Dict[int, Set[int]]) -> List[Set[int]]:
    seen: Set[int] = set()
    comps = []
    for v in sorted(vertices):
        if v in seen:
            continue
        comp = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for w in adjacency.get(u, ()):  # noqa: B023
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def core(cg: CarrierGraph) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Iteratively prune hanging trivial vertices; what remains carries the
    whole fundamental group."""
    verts = set(cg.vertices)
    edges = set(cg.ends)
    changed = True
    while changed:
        changed = False
        for v in sorted(verts):
            if not is_trivial_ref(cg.vgroups[v]):
                continue
            incident = [e for e in edges if v in cg.ends[e]]
            loops = [e for e in incident if cg.ends[e][0] == cg.ends[e][1]]
            if len(incident) == 1 and not loops:
                edges.discard(incident[0])
                verts.discard(v)
                changed = True
            elif not incident and len(verts) > 1:
                verts.discard(v)
                changed = True
    return frozenset(verts), frozenset(edges)


def structure_stats(cg: CarrierGraph) -> StructureStats:
    n_edges = len(cg.ends)
    adjacency: Dict[int, Set[int]] = {v: set() for v in cg.vertices}
    for a, w in cg.ends.values():
        adjacency[a].add(w)
        adjacency[w].add(a)
    betti = n_edges - len(cg.vertices) + len(_components(set(cg.vertices), adjacency))

    # free factors: components of the nontrivial-group subgraph
    nt_vertices = {v for v in cg.vertices if not is_trivial_ref(cg.vgroups[v])}
    nt_edges = {e for e in cg.ends if not is_trivial_ref(cg.egroups[e])}
    nt_adj: Dict[int, Set[int]] = {v: set() for v in nt_vertices}
    for e in nt_edges:
        a, w = cg.ends[e]
        nt_adj.setdefault(a, set()).add(w)
        nt_adj.setdefault(w, set()).add(a)
    factor_comps = _components(set(nt_adj), nt_adj)
    free_factors = len(factor_comps)

    # collapse each factor component to a point, keep trivial edges
    cls = {}
    for idx, comp in enumerate(factor_comps):
        for v in comp:
            cls[v] = ("f", idx)
    for v in cg.vertices:
        cls.setdefault(v, ("v", v))
    coll_vertices = set(cls.values())
    coll_edges = [e for e in cg.ends if e not in nt_edges]
    coll_adj: Dict = {v: set() for v in coll_vertices}
    for e in coll_edges:
        a, w = cg.ends[e]
        coll_adj[cls[a]].add(cls[w])
        coll_adj[cls[w]].add(cls[a])
    free_rank = (
        len(coll_edges)
        - len(coll_vertices)
        + len(_components(coll_vertices, coll_adj))
    )

    core_v, core_e = core(cg)
    central_valences = sum(cg.valence(star.center) for star in cg.stars)
    label_total = sum(
        len_rel(cg.labels[e]) for e in cg.ends if not cg.is_peripheral_edge(e)
    )
    return StructureStats(
        betti=betti,
        free_factors=free_factors,
        free_rank=free_rank,
        core_vertices=core_v,
        core_edges=core_e,
        complexity_c=label_total + central_valences,
    )


# -- generators of the represented subgroup -------------------------------------


def image_generators(cg: CarrierGraph, max_products: int = 3) -> List[GroupElement]:
    """Images of a generating set of the fundamental group at the basepoint:
    spanning-tree loop elements plus conjugated vertex group generators."""
    tree: Dict[int, Tuple[int, GroupElement]] = {cg.basepoint: (0, identity(cg.spec))}
    order = [cg.basepoint]
    frontier = [cg.basepoint]
    tree_edges: Set[int] = set()
    while frontier:
        nxt = []
        for v in frontier:
            for side in cg.sides_at(v):
                w = cg.omega(side)
                if w not in tree:
                    tree[w] = (side, tree[v][1] * cg.label(side))
                    tree_edges.add(abs(side))
                    order.append(w)
                    nxt.append(w)
        frontier = nxt
    gens: List[GroupElement] = []
    for e in cg.oriented_edges():
        if e in tree_edges or abs(e) in tree_edges:
            continue
        a, w = cg.ends[e]
        if a not in tree or w not in tree:
            continue  # unreachable component contributes nothing at v0
        gens.append(tree[a][1] * cg.labels[e] * inv(tree[w][1]))
    for v in order:
        ref = cg.vgroups[v]
        if is_trivial_ref(ref):
            continue
        carrier = tree[v][1]
        if isinstance(ref, PeripheralGroup):
            basis = [
                ref.frame * par_el(cg.spec, ref.factor, row) * inv(ref.frame)
                for row in ref.lattice.basis
            ]
        else:
            basis = [g for g in ref.generators if not g.is_identity]
        gens.extend(carrier * b * inv(carrier) for b in basis)
    out = []
    for g in gens:
        if not g.is_identity and g not in out:
            out.append(g)
    return out
