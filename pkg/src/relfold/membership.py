"""Subgroup membership through a carrier graph.

Two engines cooperate:

* a bounded search over decorated paths from the basepoint, which can only
  ever produce verified "yes" answers (each comes with an explicit witness
  path whose image is the queried element);

* a deterministic reading automaton, sound for "no" answers exactly when the
  graph is folded enough that reduced paths spell normalized words.  The
  automaton triangulates this itself: it refuses to answer (and membership
  degrades to "unknown") whenever it finds two crossing germs at one
  epsilon-closure that could cancel or merge, or two inequivalent peripheral
  absorption sites of the same factor in one closure.  On graphs where the
  folding machinery reports no obstruction these hazards do not occur and the
  automaton answers are exact.

Star crossings read as single peripheral letters: from a star vertex u one
reaches w absorbing any vector in a fixed coset of the star lattice, and the
star axioms make those cosets pairwise distinct, so the transition on a
peripheral letter is deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .group_core import (
    PAR,
    GroupElement,
    GroupError,
    geodesic_rep,
    identity,
    inv,
    len_rel,
    normalize,
    par_el,
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
)

Node = Tuple  # ('v', vertex) or ('m', edge, k)
Move = Tuple  # ('edge', signed edge) or ('insert', vertex, element)


def _star_vectors(cg: CarrierGraph, star: PeripheralStar) -> Dict[int, Tuple[int, ...]]:
    """Vertex -> coset position of the vertex inside its star, measured from
    the center (the center is at zero)."""
    k = cg.spec.parabolic_ranks[star.factor - 1]
    out = {star.center: tuple(0 for _ in range(k))}
    for e in star.edges:
        lab = cg.labels[e]
        if lab.is_identity:
            vec = tuple(0 for _ in range(k))
        else:
            vec = lab.syllables[0][2]
        out[cg.omega(e)] = vec
    return out


def _star_route(cg: CarrierGraph, star: PeripheralStar, u: int, w: int) -> List[int]:
    """Signed star edges from u to w through the center."""
    route = []
    if u != star.center:
        e_u = next(e for e in star.edges if cg.omega(e) == u)
        route.append(-e_u)
    if w != star.center:
        e_w = next(e for e in star.edges if cg.omega(e) == w)
        route.append(e_w)
    return route


class Automaton:
    """Deterministic reader of geodesic words against a carrier graph."""

    def __init__(self, cg: CarrierGraph):
        self.cg = cg
        self.hazards: List[str] = []
        self._build()

    # -- construction --------------------------------------------------------

    def _build(self):
        cg = self.cg
        self.chain: Dict[Node, List[Tuple[object, Node, Move]]] = {}
        self.eps: Dict[Node, List[Tuple[Node, List[Move]]]] = {}
        for v in cg.vertices:
            self.chain.setdefault(("v", v), [])
            self.eps.setdefault(("v", v), [])
            if isinstance(cg.vgroups[v], EssentialGroup) and not is_trivial_ref(
                cg.vgroups[v]
            ):
                self.hazards.append(f"essential vertex group at {v}")

        self.star_data = []
        star_edge_ids = set()
        for star in cg.stars:
            vectors = _star_vectors(cg, star)
            lattice = _star_lattice(cg, star)
            self.star_data.append((star, vectors, lattice))
            star_edge_ids.update(abs(e) for e in star.edges)
            # zero-coset transits are silent moves
            for u, w in itertools.combinations(sorted(vectors), 2):
                diff = tuple(b - a for a, b in zip(vectors[u], vectors[w]))
                if diff in lattice:
                    moves_uw = self._absorb_moves(star, vectors, u, w, diff)
                    moves_wu = self._absorb_moves(
                        star, vectors, w, u, tuple(-c for c in diff)
                    )
                    self.eps[("v", u)].append((("v", w), moves_uw))
                    self.eps[("v", w)].append((("v", u), moves_wu))

        for e in cg.oriented_edges():
            if abs(e) in star_edge_ids:
                continue
            word = geodesic_rep(cg.labels[e])
            a, w = cg.ends[e]
            if not word:
                self.eps[("v", a)].append((("v", w), [("edge", e)]))
                self.eps[("v", w)].append((("v", a), [("edge", -e)]))
                continue
            nodes = [("v", a)]
            for k in range(1, len(word)):
                node = ("m", e, k)
                nodes.append(node)
                self.chain.setdefault(node, [])
                self.eps.setdefault(node, [])
            nodes.append(("v", w))
            for k, letter in enumerate(word):
                move_fwd = ("edge", e) if k == len(word) - 1 else ("noop",)
                move_bwd = ("edge", -e) if k == 0 else ("noop",)
                self.chain[nodes[k]].append((letter, nodes[k + 1], move_fwd))
                self.chain[nodes[k + 1]].append(
                    (_inv_letter(letter), nodes[k], move_bwd)
                )
        self._closures: Dict[Node, Dict[Node, List[Move]]] = {}
        for node in self.chain:
            self._closures[node] = self._closure_of(node)
        self._scan_hazards()

    def _absorb_moves(self, star, vectors, u, w, vec) -> List[Move]:
        """Moves realizing a peripheral absorption from u to w: insert the
        lattice part at u, then walk through the center."""
        cg = self.cg
        insert = tuple(b - a for a, b in zip(vectors[u], vectors[w]))
        p = tuple(x - y for x, y in zip(vec, insert))
        moves: List[Move] = []
        if any(p):
            moves.append(("insert", u, par_el(cg.spec, star.factor, p)))
        moves.extend(("edge", e) for e in _star_route(cg, star, u, w))
        return moves

    def _closure_of(self, node: Node) -> Dict[Node, List[Move]]:
        out: Dict[Node, List[Move]] = {node: []}
        frontier = [node]
        while frontier:
            cur = frontier.pop()
            for nxt, moves in self.eps.get(cur, ()):  # noqa: B023
                if nxt not in out:
                    out[nxt] = out[cur] + list(moves)
                    frontier.append(nxt)
        return out

    def _scan_hazards(self):
        cg = self.cg
        for node, closure in self._closures.items():
            germs = []
            star_sites: Dict[int, List[Tuple[int, int]]] = {}
            for member in closure:
                for letter, _, _ in self.chain.get(member, ()):  # noqa: B023
                    germs.append(letter)
                if member[0] == "v":
                    star = cg.star_of_vertex(member[1])
                    if star is not None:
                        idx = cg.stars.index(star)
                        star_sites.setdefault(star.factor, []).append(
                            (idx, member[1])
                        )
            for g1, g2 in itertools.combinations(germs, 2):
                if isinstance(g1, int) and g1 == g2:
                    self.hazards.append(f"duplicate germ {g1} at {node}")
                if (
                    not isinstance(g1, int)
                    and not isinstance(g2, int)
                    and g1[0] == g2[0]
                ):
                    self.hazards.append(f"mergeable peripheral germs at {node}")
            for factor, sites in star_sites.items():
                for germ in germs:
                    if not isinstance(germ, int) and germ[0] == factor:
                        self.hazards.append(
                            f"peripheral germ beside a factor-{factor} star at {node}"
                        )
                star_ids = {idx for idx, _ in sites}
                if len(star_ids) > 1:
                    self.hazards.append(
                        f"two factor-{factor} stars in one closure at {node}"
                    )
                elif len(sites) > 1:
                    idx = next(iter(star_ids))
                    star, vectors, lattice = self.star_data[idx]
                    for (_, u), (_, w) in itertools.combinations(sites, 2):
                        diff = tuple(
                            b - a for a, b in zip(vectors[u], vectors[w])
                        )
                        if diff not in lattice:
                            self.hazards.append(
                                f"inequivalent absorption sites in star {idx}"
                            )

    @property
    def exact(self) -> bool:
        return not self.hazards

    # -- reading --------------------------------------------------------------

    def read(self, word: Sequence) -> Optional[List[Move]]:
        """Follow the geodesic word from the basepoint back to it; returns
        the move list on acceptance, None on rejection.  Only meaningful
        when exact."""
        cg = self.cg
        start: Node = ("v", cg.basepoint)
        node = start
        moves: List[Move] = []
        for letter in word:
            closure = self._closures[node]
            target = None
            if isinstance(letter, int):
                for member, prefix in closure.items():
                    for lt, nxt, move in self.chain.get(member, ()):  # noqa: B023
                        if lt == letter:
                            target = (nxt, prefix + [move])
                            break
                    if target:
                        break
            else:
                factor, vec = letter
                for member, prefix in closure.items():
                    for lt, nxt, move in self.chain.get(member, ()):  # noqa: B023
                        if not isinstance(lt, int) and lt == (factor, tuple(vec)):
                            target = (nxt, prefix + [move])
                            break
                    if target:
                        break
                if target is None:
                    # star absorption: at most one factor-m star per closure
                    for idx, (star, vectors, lattice) in enumerate(self.star_data):
                        if star.factor != factor:
                            continue
                        sites = [
                            member[1]
                            for member in closure
                            if member[0] == "v" and member[1] in vectors
                        ]
                        if not sites:
                            continue
                        u = sites[0]
                        for w in sorted(vectors):
                            diff = tuple(
                                t - (vectors[w][i] - vectors[u][i])
                                for i, t in enumerate(vec)
                            )
                            if diff in lattice:
                                absorb = self._absorb_moves(
                                    star, vectors, u, w, tuple(vec)
                                )
                                target = (("v", w), closure[("v", u)] + absorb)
                                break
                        break
            if target is None:
                return None
            node, new_moves = target
            moves.extend(new_moves)
        closure = self._closures[node]
        if start in closure:
            return moves + closure[start]
        return None

    def moves_to_apath(self, moves: List[Move]) -> APath:
        cg = self.cg
        elems = [identity(cg.spec)]
        edges: List[int] = []
        v = cg.basepoint
        for move in moves:
            if move[0] == "noop":
                continue
            if move[0] == "edge":
                edges.append(move[1])
                elems.append(identity(cg.spec))
                v = cg.omega(move[1])
            else:
                _, vtx, elem = move
                elems[-1] = elems[-1] * elem
        return APath(cg.basepoint, tuple(elems), tuple(edges))


def _inv_letter(letter):
    if isinstance(letter, int):
        return -letter
    return (letter[0], tuple(-c for c in letter[1]))


# -- bounded witness search ------------------------------------------------------


def _vertex_menu(cg: CarrierGraph, v: int, l1_cap: int, prod_cap: int) -> List[GroupElement]:
    ref = cg.vgroups[v]
    if isinstance(ref, TrivialGroup):
        return []
    if isinstance(ref, PeripheralGroup):
        out = []
        for vec in ref.lattice.vectors_up_to(l1_cap):
            out.append(ref.frame * par_el(cg.spec, ref.factor, vec) * inv(ref.frame))
        return out
    return [g for g in essential_elements(ref, prod_cap) if not g.is_identity]


def search_witness(
    cg: CarrierGraph,
    g: GroupElement,
    bound: int,
    l1_cap: int = 6,
    prod_cap: int = 3,
    state_cap: int = 200_000,
) -> Optional[APath]:
    """Breadth-first search for a decorated closed path at the basepoint
    whose image is g, using at most `bound` edges.  Returns a verified
    witness or None."""
    start = (cg.basepoint, identity(cg.spec))
    parents: Dict[Tuple[int, GroupElement], Optional[Tuple]] = {start: None}
    frontier = [start]
    slack = len_rel(g) + 2
    menus = {v: _vertex_menu(cg, v, l1_cap, prod_cap) for v in cg.vertices}
    for _ in range(bound):
        nxt = []
        for state in frontier:
            v, value = state
            candidates: List[Tuple[Tuple[int, GroupElement], Tuple]] = []
            for side in cg.sides_at(v):
                w = cg.omega(side)
                base = value * cg.label(side)
                candidates.append(((w, base), ("edge", side)))
                for a in menus[w]:
                    candidates.append(((w, base * a), ("edge+", side, a)))
            for (w, val), move in candidates:
                if len_rel(val) > slack + len_rel(g):
                    continue
                key = (w, val)
                if key in parents:
                    continue
                parents[key] = (state, move)
                if w == cg.basepoint and val == g:
                    witness = _finish_witness(cg, key, parents)
                    return witness
                nxt.append(key)
                if len(parents) > state_cap:
                    return None
        frontier = nxt
    return None


def _finish_witness(cg, state, parents) -> APath:
    moves = []
    cur = state
    while parents[cur] is not None:
        prev, move = parents[cur]
        moves.append(move)
        cur = prev
    moves.reverse()
    elems = [identity(cg.spec)]
    edges: List[int] = []
    for move in moves:
        if move[0] == "edge":
            edges.append(move[1])
            elems.append(identity(cg.spec))
        else:
            _, side, a = move
            edges.append(side)
            elems.append(a)
    return APath(cg.basepoint, tuple(elems), tuple(edges))


# -- the public operation ----------------------------------------------------------


@dataclass
class MemberResult:
    status: str  # "yes" | "no" | "unknown"
    witness: Optional[APath] = None
    reason: str = ""


def member(
    cg: CarrierGraph,
    g: GroupElement,
    bound: int = 8,
    l1_cap: int = 6,
    prod_cap: int = 3,
) -> MemberResult:
    """Decide whether g lies in the subgroup the graph represents.

    "yes" always carries a witness path.  "no" is only returned when the
    graph admits an exact reading automaton (all vertex groups trivial or
    peripheral, no crossing-germ hazards); otherwise exhausting the bounded
    search yields "unknown"."""
    if g.is_identity:
        return MemberResult("yes", APath(cg.basepoint, (identity(cg.spec),), ()))
    automaton = Automaton(cg)
    if automaton.exact:
        moves = automaton.read(geodesic_rep(g))
        if moves is None:
            return MemberResult("no", None, "rejected by the reading automaton")
        witness = automaton.moves_to_apath(moves)
        if cg.nu(witness) != g:  # pragma: no cover - reconstruction safety net
            raise GroupError("automaton witness failed to verify")
        return MemberResult("yes", witness)
    witness = search_witness(cg, g, bound, l1_cap, prod_cap)
    if witness is not None:
        if cg.nu(witness) != g:  # pragma: no cover
            raise GroupError("search witness failed to verify")
        return MemberResult("yes", witness)
    return MemberResult(
        "unknown",
        None,
        "bounded search exhausted; " + (automaton.hazards[0] if automaton.hazards else ""),
    )
