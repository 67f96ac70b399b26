"""Edge paths in the Cayley graph of G over X together with all peripheral
letters.

A path is stored by its initial vertex, its letter sequence, a decomposition
into geodesic pieces (cut indices), and optional per-edge marks used to tag
peripheral edges that play a structural role in realizations of paths through
carrier graphs.

The module also houses the breadth-first-search oracles that the rest of the
package is tested against.  Peripheral factors are infinite, so the relative
Cayley graph has infinite valence; the oracle enumerates peripheral letters up
to a configurable l1 truncation and reports distances only for elements all of
whose abelian syllables stay within the truncation.  For such an element the
spelling of its normal form is a path the truncated search can see, so a
breadth-first distance that matches a claimed value certifies it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .group_core import (
    FREE,
    PAR,
    GroupElement,
    GroupError,
    GroupSpec,
    Letter,
    identity,
    inv,
    len_rel,
    len_x,
    mul,
    normalize,
    rel_letters,
)

FIRST_TYPE = 1
SECOND_TYPE = 2
THIRD_TYPE = 3


class BudgetError(RuntimeError):
    """A bounded search ran out of its configured budget."""


def letter_x_cost(letter: Letter) -> int:
    if isinstance(letter, int):
        return 1
    return sum(abs(c) for c in letter[1])


@dataclass(frozen=True)
class CayleyPath:
    base: GroupElement
    letters: Tuple[Letter, ...]
    cuts: Tuple[int, ...]
    marks: Tuple[Optional[int], ...]

    @property
    def spec(self) -> GroupSpec:
        return self.base.spec

    def __len__(self) -> int:
        return len(self.letters)

    def label(self) -> GroupElement:
        return normalize(self.spec, list(self.letters))

    def endpoint(self) -> GroupElement:
        return self.base * self.label()

    def vertex_values(self) -> List[GroupElement]:
        vals = [self.base]
        for letter in self.letters:
            vals.append(vals[-1] * normalize(self.spec, [letter]))
        return vals

    def pieces(self) -> List[Tuple[int, int]]:
        bounds = [0, *self.cuts, len(self.letters)]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    def x_length(self) -> int:
        return sum(letter_x_cost(l) for l in self.letters)

    def piecewise_x_length(self) -> int:
        total = 0
        for a, b in self.pieces():
            total += len_x(normalize(self.spec, list(self.letters[a:b])))
        return total


def cayley_path(
    base: GroupElement,
    letters: Sequence[Letter],
    cuts: Optional[Sequence[int]] = None,
    marks: Optional[Sequence[Optional[int]]] = None,
) -> CayleyPath:
    """Build a path, defaulting to the one-letter-per-piece decomposition,
    and check the invariants: pieces are geodesic, marks sit on peripheral
    letters only."""
    spec = base.spec
    letters = tuple(letters)
    for letter in letters:
        spec.check_letter(letter)
        if not isinstance(letter, int) and not any(letter[1]):
            raise GroupError("peripheral edges carry nontrivial elements only")
    if cuts is None:
        cuts = tuple(range(1, len(letters)))
    cuts = tuple(cuts)
    if list(cuts) != sorted(set(cuts)) or any(not 0 < c < len(letters) for c in cuts):
        raise GroupError(f"bad cut indices {cuts}")
    if marks is None:
        marks = tuple(None for _ in letters)
    marks = tuple(marks)
    if len(marks) != len(letters):
        raise GroupError("marks must align with letters")
    for letter, mark in zip(letters, marks):
        if mark is not None and isinstance(letter, int):
            raise GroupError("marks are only allowed on peripheral letters")
    path = CayleyPath(base, letters, cuts, marks)
    for a, b in path.pieces():
        piece = list(letters[a:b])
        if len(piece) != len_rel(normalize(spec, piece)):
            raise GroupError(f"piece {piece} is not geodesic")
    return path


def piecewise_path(base: GroupElement, segments: Sequence[Tuple]) -> CayleyPath:
    """Assemble a path from explicit segments: ("geo", letters) for a
    geodesic piece, ("p", letter) for a designated single peripheral edge
    (stored with a first-type mark)."""
    letters: List[Letter] = []
    cuts: List[int] = []
    marks: List[Optional[int]] = []
    for seg in segments:
        if letters:
            cuts.append(len(letters))
        if seg[0] == "geo":
            letters.extend(seg[1])
            marks.extend(None for _ in seg[1])
        elif seg[0] == "p":
            if isinstance(seg[1], int):
                raise GroupError("designated edges must be peripheral letters")
            letters.append(seg[1])
            marks.append(FIRST_TYPE)
        else:
            raise GroupError(f"unknown segment kind {seg[0]!r}")
    return cayley_path(base, letters, cuts, marks)


# -- components and backtracking ----------------------------------------------


def p_components(path: CayleyPath) -> List[Tuple[int, int, int]]:
    """Maximal runs of same-factor peripheral letters, as (factor, start,
    end) with end exclusive."""
    out: List[Tuple[int, int, int]] = []
    pos = 0
    letters = path.letters
    while pos < len(letters):
        letter = letters[pos]
        if isinstance(letter, int):
            pos += 1
            continue
        i = letter[0]
        end = pos + 1
        while end < len(letters) and not isinstance(letters[end], int) and letters[end][0] == i:
            end += 1
        out.append((i, pos, end))
        pos = end
    return out


def phase_vertices(path: CayleyPath) -> List[int]:
    inner = set()
    for _, a, b in p_components(path):
        inner.update(range(a + 1, b))
    return [v for v in range(len(path.letters) + 1) if v not in inner]


def _in_factor(g: GroupElement, i: int) -> bool:
    """Whether g lies in the i-th abelian factor (the identity included)."""
    if g.is_identity:
        return True
    return len(g.syllables) == 1 and g.syllables[0][0] == PAR and g.syllables[0][1] == i


def connected_pairs(path: CayleyPath) -> List[Tuple[int, int]]:
    """Pairs of distinct same-factor components lying in the same peripheral
    coset, decided exactly on normal forms."""
    comps = p_components(path)
    vals = path.vertex_values()
    out = []
    for a in range(len(comps)):
        for b in range(a + 1, len(comps)):
            ia, _, enda = comps[a]
            ib, startb, _ = comps[b]
            if ia != ib:
                continue
            between = inv(vals[enda]) * vals[startb]
            if _in_factor(between, ia):
                out.append((a, b))
    return out


def remove_backtracking(path: CayleyPath) -> CayleyPath:
    """Surgery until all peripheral components are single, isolated edges:
    any two same-factor peripheral edges whose gap lies in that factor are
    replaced (together with the gap) by one edge.  Innermost pairs go first,
    leftmost on ties; endpoints are preserved and the length never grows."""
    spec = path.spec
    letters = list(path.letters)
    marks = list(path.marks)
    while True:
        pedges = [
            (pos, letter[0])
            for pos, letter in enumerate(letters)
            if not isinstance(letter, int)
        ]
        best = None
        for x in range(len(pedges)):
            for y in range(x + 1, len(pedges)):
                (a, ia), (b, ib) = pedges[x], pedges[y]
                if ia != ib:
                    continue
                gap = normalize(spec, letters[a + 1 : b])
                if _in_factor(gap, ia):
                    key = (b - a, a)
                    if best is None or key < best[0]:
                        best = (key, a, b, ia)
        if best is None:
            break
        _, a, b, i = best
        total = normalize(spec, letters[a : b + 1])
        replacement: List[Letter] = []
        if not total.is_identity:
            replacement = [(i, total.syllables[0][2])]
        letters[a : b + 1] = replacement
        marks[a : b + 1] = [None for _ in replacement]
    return cayley_path(path.base, letters, None, marks)


# -- long peripheral edge criterion -------------------------------------------


@dataclass
class LongPeripheralReport:
    designated: List[int]
    hyp_long_edges: bool
    hyp_quasigeodesic_pieces: bool
    hyp_no_close_returns: bool
    conclusion_whole: bool
    conclusion_all_subpaths: bool
    violations: List[str] = field(default_factory=list)

    @property
    def hypotheses_hold(self) -> bool:
        return (
            self.hyp_long_edges
            and self.hyp_quasigeodesic_pieces
            and self.hyp_no_close_returns
        )


def verify_long_peripheral(
    path: CayleyPath,
    C: Union[int, Fraction],
    eps1: int,
    eps2: int,
) -> LongPeripheralReport:
    """Check the hypotheses and the conclusion of the long-peripheral-edges
    quasigeodesic criterion on a concrete path, with the exact metric.

    The designated edges are the marked single-letter pieces of the
    decomposition; the pieces between them must be (C,C)-quasigeodesics
    (checked on every subword), the designated edges must have X-length
    above eps2, and no two same-factor peripheral stretches of X-length at
    least eps1 may be joined by a short (X-length at most eps2) gap whose
    label lies in that factor.  The conclusion asserts the whole path, and
    every subpath, is a (C^2+3C, C^2+3C)-quasigeodesic.
    """
    spec = path.spec
    C = Fraction(C)
    if C < 1:
        raise GroupError("C must be at least 1")
    pieces = path.pieces()
    designated = []
    for a, b in pieces:
        if b - a == 1 and path.marks[a] is not None:
            if isinstance(path.letters[a], int):
                raise GroupError("designated edge is not peripheral")
            designated.append(a)
    for pos, mark in enumerate(path.marks):
        if mark is not None and pos not in designated:
            raise GroupError("marked letter is not its own decomposition piece")
    report = LongPeripheralReport(designated, True, True, True, True, True)

    for pos in designated:
        if letter_x_cost(path.letters[pos]) <= eps2:
            report.hyp_long_edges = False
            report.violations.append(f"designated edge at {pos} has short X-length")

    segments = []
    prev = 0
    for pos in designated:
        if pos > prev:
            segments.append((prev, pos))
        prev = pos + 1
    if len(path.letters) > prev:
        segments.append((prev, len(path.letters)))
    for a, b in segments:
        for i in range(a, b):
            for j in range(i + 1, b + 1):
                word = list(path.letters[i:j])
                if j - i > C * len_rel(normalize(spec, word)) + C:
                    report.hyp_quasigeodesic_pieces = False
                    report.violations.append(
                        f"piece window [{i},{j}) is not a ({C},{C})-quasigeodesic"
                    )

    letters = path.letters
    n = len(letters)
    runs: List[Tuple[int, int, int]] = []  # (factor, start, end) contiguous peripheral runs
    for fac, a, b in p_components(path):
        for i in range(a, b):
            for j in range(i + 1, b + 1):
                runs.append((fac, i, j))
    for fac, a1, a2 in runs:
        for fac2, b1, b2 in runs:
            if fac != fac2 or a2 > b1 or (a1, a2) == (b1, b2):
                continue
            plen = sum(letter_x_cost(letters[i]) for i in range(a1, a2))
            plen2 = sum(letter_x_cost(letters[i]) for i in range(b1, b2))
            if plen < eps1 or plen2 < eps1:
                continue
            gap = list(letters[a2:b1])
            if sum(letter_x_cost(l) for l in gap) > eps2:
                continue
            if _in_factor(normalize(spec, gap), fac):
                report.hyp_no_close_returns = False
                report.violations.append(
                    f"peripheral stretches [{a1},{a2}) and [{b1},{b2}) are joined"
                )

    bound_mult = C * C + 3 * C
    bound_add = bound_mult * bound_mult
    for i in range(n + 1):
        for j in range(i, n + 1):
            d = len_rel(normalize(spec, list(letters[i:j])))
            if j - i > bound_mult * d + bound_add:
                report.conclusion_all_subpaths = False
                if (i, j) == (0, n):
                    report.conclusion_whole = False
                report.violations.append(f"subpath [{i},{j}) too long for its endpoints")
    return report


# -- breadth-first-search oracles ---------------------------------------------


def _step(syls: tuple, letter: Letter) -> tuple:
    """Right-multiply a raw syllable tuple by one letter."""
    if isinstance(letter, int):
        if syls and syls[-1][0] == FREE:
            word = syls[-1][1]
            if word[-1] == -letter:
                word = word[:-1]
                return syls[:-1] + ((FREE, word),) if word else syls[:-1]
            return syls[:-1] + ((FREE, word + (letter,)),)
        return syls + ((FREE, (letter,)),)
    i, vec = letter
    if syls and syls[-1][0] == PAR and syls[-1][1] == i:
        summed = tuple(a + b for a, b in zip(syls[-1][2], vec))
        return syls[:-1] + ((PAR, i, summed),) if any(summed) else syls[:-1]
    return syls + ((PAR, i, tuple(vec)),)


def _ball(
    spec: GroupSpec,
    start: tuple,
    letters: list,
    radius: int,
    cap: int,
) -> Dict[tuple, int]:
    dist = {start: 0}
    frontier = [start]
    for d in range(1, radius + 1):
        nxt = []
        for syls in frontier:
            for letter in letters:
                t = _step(syls, letter)
                if t not in dist:
                    dist[t] = d
                    nxt.append(t)
            if len(dist) > cap:
                raise BudgetError(
                    f"ball exceeded the configured cap of {cap} elements"
                )
        frontier = nxt
    return dist


def _syllable_norms_ok(syls: tuple, truncation: int) -> bool:
    return all(
        s[0] == FREE or sum(abs(c) for c in s[2]) <= truncation for s in syls
    )


def bfs_ball(
    spec: GroupSpec,
    metric: str,
    radius: int,
    truncation: Optional[int] = None,
    cap: int = 5_000_000,
    as_elements: bool = True,
) -> Dict:
    """Exact distance table by breadth-first search.

    metric "x" explores the finite alphabet X; metric "rel" additionally uses
    every peripheral letter of l1 norm at most ``truncation``.  In the rel
    metric the returned table keeps only elements whose abelian syllables all
    have norm at most the truncation: for those the reported distance is the
    true relative distance.  ``as_elements=False`` returns raw syllable-tuple
    keys, which is considerably lighter for large balls.
    """
    if metric == "x":
        letters = spec.x_letters()
    elif metric == "rel":
        if spec.n_factors and truncation is None:
            raise GroupError("the rel metric needs a truncation")
        letters = rel_letters(spec, truncation or 0)
    else:
        raise GroupError(f"unknown metric {metric!r}")
    dist = _ball(spec, (), letters, radius, cap)
    if metric == "rel" and spec.n_factors:
        dist = {
            syls: d
            for syls, d in dist.items()
            if _syllable_norms_ok(syls, truncation)
        }
    if not as_elements:
        return dist
    return {GroupElement(spec, syls): d for syls, d in dist.items()}


def bfs_distance(
    g: GroupElement,
    metric: str,
    max_depth: int,
    truncation: Optional[int] = None,
    cap: int = 5_000_000,
) -> Optional[int]:
    """Distance from the identity to g by bidirectional breadth-first
    search, or None if it exceeds max_depth.  Subject to the same truncation
    soundness condition as bfs_ball in the rel metric."""
    spec = g.spec
    if metric == "x":
        letters = spec.x_letters()
    else:
        if spec.n_factors and truncation is None:
            raise GroupError("the rel metric needs a truncation")
        letters = rel_letters(spec, truncation or 0)
    r1 = (max_depth + 1) // 2
    r2 = max_depth // 2
    fwd = _ball(spec, (), letters, r1, cap)
    bwd = _ball(spec, g.syllables, letters, r2, cap)
    best = None
    small, large = (fwd, bwd) if len(fwd) <= len(bwd) else (bwd, fwd)
    for syls, d in small.items():
        if syls in large:
            total = d + large[syls]
            if best is None or total < best:
                best = total
    return best
