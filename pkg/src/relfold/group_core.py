"""Exact arithmetic in groups of the form G = F(X) * Z^{k_1} * ... * Z^{k_n}.

Elements are kept in free-product normal form: a sequence of syllables, each
syllable either a nonempty freely reduced word in the free factor or a nonzero
vector in one of the free abelian factors, with no two consecutive syllables
from the same factor.  All word metrics, geodesic representatives, conjugacy
questions and translation lengths below are computed exactly from this form;
the test suite checks them against breadth-first search in the corresponding
Cayley graphs.

Letters (the generating alphabet) are encoded as:

* a nonzero int ``+j`` / ``-j`` for the free generator ``x_j`` / its inverse,
* a pair ``(i, vec)`` for the peripheral letter of factor ``i`` (1-based) with
  integer vector ``vec`` (an element of Z^{k_i}).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

FREE = "f"
PAR = "p"

Letter = Union[int, Tuple[int, Tuple[int, ...]]]
Syllable = Tuple  # ('f', letters) or ('p', i, vector)


class GroupError(ValueError):
    """Malformed letters, mismatched specs, ill-typed inputs."""


@dataclass(frozen=True)
class GroupSpec:
    """Shape of the ambient group: free rank and the ranks k_1..k_n."""

    free_rank: int
    parabolic_ranks: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parabolic_ranks", tuple(self.parabolic_ranks))
        if self.free_rank < 0 or any(k <= 0 for k in self.parabolic_ranks):
            raise GroupError("free_rank must be >= 0 and every abelian rank positive")
        if self.free_rank + len(self.parabolic_ranks) < 1:
            raise GroupError("the trivial group is not supported")

    @property
    def n_factors(self) -> int:
        return len(self.parabolic_ranks)

    def check_letter(self, letter: Letter) -> None:
        if isinstance(letter, int):
            if letter == 0 or abs(letter) > self.free_rank:
                raise GroupError(f"free letter {letter} out of range")
            return
        try:
            i, vec = letter
        except (TypeError, ValueError):
            raise GroupError(f"unrecognized letter {letter!r}") from None
        if not 1 <= i <= self.n_factors:
            raise GroupError(f"factor index {i} out of range")
        if len(vec) != self.parabolic_ranks[i - 1]:
            raise GroupError(f"vector {vec} has wrong length for factor {i}")

    def x_letters(self) -> list:
        """The full symmetric X-alphabet: free generators and unit vectors."""
        letters: list = []
        for j in range(1, self.free_rank + 1):
            letters += [j, -j]
        for i, k in enumerate(self.parabolic_ranks, start=1):
            for a in range(k):
                unit = tuple(1 if b == a else 0 for b in range(k))
                letters.append((i, unit))
                letters.append((i, tuple(-c for c in unit)))
        return letters


def _reduce_word(word: Iterable[int]) -> Tuple[int, ...]:
    out: list = []
    for c in word:
        if out and out[-1] == -c:
            out.pop()
        else:
            out.append(c)
    return tuple(out)


@dataclass(frozen=True)
class GroupElement:
    """Free-product normal form; immutable and hashable."""

    spec: GroupSpec
    syllables: Tuple[Syllable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "syllables", tuple(self.syllables))

    # -- structure ---------------------------------------------------------

    @property
    def is_identity(self) -> bool:
        return not self.syllables

    def __bool__(self) -> bool:
        return bool(self.syllables)

    def __len__(self) -> int:
        return len(self.syllables)

    def __repr__(self) -> str:
        if not self.syllables:
            return "<1>"
        bits = []
        for s in self.syllables:
            if s[0] == FREE:
                bits.append("".join(f"x{c}" if c > 0 else f"X{-c}" for c in s[1]))
            else:
                bits.append(f"p{s[1]}{tuple(s[2])}")
        return "<" + ".".join(bits) + ">"

    # -- group operations ----------------------------------------------------

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return mul(self, other)

    def inv(self) -> "GroupElement":
        return inv(self)

    def __pow__(self, n: int) -> "GroupElement":
        if n < 0:
            return inv(self) ** (-n)
        out = identity(self.spec)
        for _ in range(n):
            out = out * self
        return out

    def conjugate(self, h: "GroupElement") -> "GroupElement":
        """h * self * h^-1."""
        return h * self * inv(h)


def identity(spec: GroupSpec) -> GroupElement:
    return GroupElement(spec, ())


def free_el(spec: GroupSpec, word: Iterable[int]) -> GroupElement:
    """Element of the free factor from a (not necessarily reduced) word."""
    return normalize(spec, list(word))


def par_el(spec: GroupSpec, i: int, vec: Sequence[int]) -> GroupElement:
    """Element of the i-th abelian factor."""
    return normalize(spec, [(i, tuple(vec))])


def _push(syllables: list, syl: Syllable) -> None:
    """Append a syllable, merging with the last one when both lie in the
    same factor; drops syllables that cancel to nothing."""
    if syl[0] == FREE:
        if not syl[1]:
            return
        if syllables and syllables[-1][0] == FREE:
            prev = syllables.pop()
            merged = _reduce_word(prev[1] + syl[1])
            if merged:
                syllables.append((FREE, merged))
        else:
            syllables.append(syl)
    else:
        _, i, vec = syl
        if not any(vec):
            return
        if syllables and syllables[-1][0] == PAR and syllables[-1][1] == i:
            prev = syllables.pop()
            summed = tuple(a + b for a, b in zip(prev[2], vec))
            if any(summed):
                syllables.append((PAR, i, summed))
        else:
            syllables.append((PAR, i, tuple(vec)))


def normalize(spec: GroupSpec, letters: Sequence[Letter]) -> GroupElement:
    """Interpret a word over X and the peripheral letters as a group element.

    Idempotent on already-normal words; concatenation followed by normalize
    agrees with group multiplication.
    """
    syllables: list = []
    for letter in letters:
        spec.check_letter(letter)
        if isinstance(letter, int):
            _push(syllables, (FREE, (letter,)))
        else:
            i, vec = letter
            _push(syllables, (PAR, i, tuple(vec)))
    return GroupElement(spec, tuple(syllables))


def mul(g: GroupElement, h: GroupElement) -> GroupElement:
    if g.spec != h.spec:
        raise GroupError("elements live over different group specs")
    syllables = list(g.syllables)
    for syl in h.syllables:
        _push(syllables, syl)
    return GroupElement(g.spec, tuple(syllables))


def inv(g: GroupElement) -> GroupElement:
    out = []
    for syl in reversed(g.syllables):
        if syl[0] == FREE:
            out.append((FREE, tuple(-c for c in reversed(syl[1]))))
        else:
            out.append((PAR, syl[1], tuple(-c for c in syl[2])))
    return GroupElement(g.spec, tuple(out))


def prod(spec: GroupSpec, elements: Iterable[GroupElement]) -> GroupElement:
    out = identity(spec)
    for e in elements:
        out = out * e
    return out


# -- metrics ----------------------------------------------------------------


def len_rel(g: GroupElement) -> int:
    """Word length over X together with all peripheral elements as single
    letters: each free syllable contributes its letter count, each abelian
    syllable contributes 1."""
    total = 0
    for syl in g.syllables:
        total += len(syl[1]) if syl[0] == FREE else 1
    return total


def len_x(g: GroupElement) -> int:
    """Word length over the finite alphabet X only: abelian syllables cost
    the l1 norm of their vector."""
    total = 0
    for syl in g.syllables:
        total += len(syl[1]) if syl[0] == FREE else sum(abs(c) for c in syl[2])
    return total


def geodesic_rep(g: GroupElement) -> list:
    """A geodesic word for g in the relative alphabet: the spelling of the
    normal form, with exactly one peripheral letter per abelian syllable."""
    letters: list = []
    for syl in g.syllables:
        if syl[0] == FREE:
            letters.extend(syl[1])
        else:
            letters.append((syl[1], syl[2]))
    return letters


# -- conjugacy, parabolicity, translation length -----------------------------


def _single_syllable(spec: GroupSpec, syl: Syllable) -> GroupElement:
    return GroupElement(spec, (syl,))


def cyclic_reduce(g: GroupElement) -> Tuple[GroupElement, GroupElement]:
    """Return (h, c) with g = h * c * h^-1 and c cyclically reduced, i.e.
    powers of c have relative length exactly len_rel(c) * n."""
    spec = g.spec
    h = identity(spec)
    cur = g
    while True:
        syls = cur.syllables
        if len(syls) >= 2:
            first, last = syls[0], syls[-1]
            same_factor = (
                first[0] == last[0]
                and (first[0] == FREE or first[1] == last[1])
            )
            if same_factor:
                conj = _single_syllable(spec, last)
                h = h * inv(conj)
                cur = conj * cur * inv(conj)
                continue
            break
        if len(syls) == 1 and syls[0][0] == FREE:
            word = syls[0][1]
            if len(word) >= 2 and word[0] == -word[-1]:
                conj = _single_syllable(spec, (FREE, (word[0],)))
                h = h * conj
                cur = inv(conj) * cur * conj
                continue
        break
    return h, cur


def parabolic_type(g: GroupElement) -> Optional[Tuple[int, GroupElement]]:
    """If g is conjugate into the i-th abelian factor, return (i, h) where
    h is the shortest conjugator with g = h p h^-1; otherwise None.

    The identity is excluded: it lies in every factor, so callers must decide
    that convention themselves.
    """
    if g.is_identity:
        raise GroupError("parabolic_type is undefined at the identity")
    h, core = cyclic_reduce(g)
    if len(core.syllables) == 1 and core.syllables[0][0] == PAR:
        return core.syllables[0][1], h
    return None


def translation_length(g: GroupElement) -> int:
    """Stable relative word length of powers: len_rel(g^n)/n for large n.
    Zero exactly on the identity and the parabolic elements."""
    _, core = cyclic_reduce(g)
    if len(core.syllables) == 1 and core.syllables[0][0] == PAR:
        return 0
    return len_rel(core)


def strip_peripheral_prefix(g: GroupElement, i: int) -> Tuple[Tuple[int, ...], GroupElement]:
    """Split g = p * g' with p in the i-th abelian factor (possibly zero) and
    g' without a leading syllable of that factor; g' has minimal X-length in
    the coset P_i * g."""
    spec = g.spec
    if not 1 <= i <= spec.n_factors:
        raise GroupError(f"factor index {i} out of range")
    zero = tuple(0 for _ in range(spec.parabolic_ranks[i - 1]))
    if g.syllables and g.syllables[0][0] == PAR and g.syllables[0][1] == i:
        head = g.syllables[0]
        return head[2], GroupElement(spec, g.syllables[1:])
    return zero, g


# -- canonical rewriting of subgroup alphabets --------------------------------


def canonical_iota(
    spec: GroupSpec,
    word: Sequence[Tuple],
    table: dict,
) -> list:
    """Rewrite a word over a subgroup alphabet into letters of the ambient
    group.

    Entries of ``word`` are either ``("y", letters)`` carrying an explicit
    spelling, or ``("o", j, element)`` naming a member of the j-th peripheral
    piece of the subgroup; ``table[j] = (i_j, g_j)`` says that piece sits
    inside the i_j-th factor conjugated by g_j, so the entry is spelled
    g_j^-1 p g_j with a single peripheral letter p.
    """
    out: list = []
    for entry in word:
        kind = entry[0]
        if kind == "y":
            letters = list(entry[1])
            for letter in letters:
                spec.check_letter(letter)
            out.extend(letters)
        elif kind == "o":
            _, j, elem = entry
            if j not in table:
                raise GroupError(f"no table entry for piece {j}")
            i_j, g_j = table[j]
            p = g_j * elem * inv(g_j)
            if not (
                len(p.syllables) == 1
                and p.syllables[0][0] == PAR
                and p.syllables[0][1] == i_j
            ):
                raise GroupError(
                    f"entry {elem!r} is not of the form g_j^-1 p g_j for factor {i_j}"
                )
            out.extend(geodesic_rep(inv(g_j)))
            out.append((i_j, p.syllables[0][2]))
            out.extend(geodesic_rep(g_j))
        else:
            raise GroupError(f"unrecognized word entry {entry!r}")
    return out


# -- enumeration helpers (used by oracles and the folding engine) -------------


def par_vectors(rank: int, max_l1: int) -> list:
    """All nonzero integer vectors of the given rank with l1 norm <= max_l1."""
    out = []
    for vec in itertools.product(range(-max_l1, max_l1 + 1), repeat=rank):
        norm = sum(abs(c) for c in vec)
        if 0 < norm <= max_l1:
            out.append(vec)
    return out


def rel_letters(spec: GroupSpec, truncation: int) -> list:
    """The truncated relative alphabet: X-letters plus peripheral letters of
    l1 norm at most ``truncation``."""
    letters: list = []
    for j in range(1, spec.free_rank + 1):
        letters += [j, -j]
    for i, k in enumerate(spec.parabolic_ranks, start=1):
        letters.extend((i, v) for v in par_vectors(k, truncation))
    return letters
