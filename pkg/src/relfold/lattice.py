"""Exact arithmetic on sublattices of Z^k.

Every peripheral vertex and edge group of a carrier graph is such a lattice.
The canonical representation is the row Hermite normal form: pivot columns
strictly increasing, pivots positive, entries above each pivot reduced into
[0, pivot).  Two lattices are equal iff their canonical bases are equal, so
all equivalence checks downstream reduce to tuple comparison.

Everything is plain Python integers; no floating point anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

Vector = Tuple[int, ...]


class LatticeError(ValueError):
    pass


def _xgcd(a: int, b: int) -> Tuple[int, int, int]:
    x, nx, y, ny, g, ng = 1, 0, 0, 1, a, b
    while ng:
        q = g // ng
        x, nx = nx, x - q * nx
        y, ny = ny, y - q * ny
        g, ng = ng, g - q * ng
    return x, y, g


def _hnf_rows(vectors: Iterable[Sequence[int]], k: int) -> List[List[int]]:
    """Row Hermite normal form of the span of ``vectors`` inside Z^k."""
    basis: List[List[int]] = []  # rows with strictly increasing pivot columns
    pivot_of = {}  # pivot column -> index into basis
    for v in vectors:
        vec = list(v)
        if len(vec) != k:
            raise LatticeError(f"vector {v} does not live in Z^{k}")
        while True:
            j = next((i for i, c in enumerate(vec) if c), None)
            if j is None:
                break
            if j not in pivot_of:
                where = sum(1 for p in pivot_of if p < j)
                basis.insert(where, vec)
                pivot_of = {
                    next(i for i, c in enumerate(row) if c): idx
                    for idx, row in enumerate(basis)
                }
                break
            row = basis[pivot_of[j]]
            a, b = row[j], vec[j]
            if b % a == 0:
                q = b // a
                for i in range(j, k):
                    vec[i] -= q * row[i]
            else:
                # both vec and row vanish left of j, so the combined row
                # keeps its pivot at j while vec loses column j entirely
                x, y, g = _xgcd(a, b)
                new_row = [x * r + y * w for r, w in zip(row, vec)]
                mult_r, mult_v = a // g, b // g
                vec = [mult_r * w - mult_v * r for r, w in zip(row, vec)]
                row[:] = new_row
    # normalize: positive pivots, reduce entries above each pivot
    for row in basis:
        j = next(i for i, c in enumerate(row) if c)
        if row[j] < 0:
            row[:] = [-c for c in row]
    # increasing pivot order: reducing at a pivot never touches earlier pivots
    for idx in range(len(basis)):
        row = basis[idx]
        j = next(i for i, c in enumerate(row) if c)
        for upper in basis[:idx]:
            q = upper[j] // row[j]
            if q:
                for i in range(k):
                    upper[i] -= q * row[i]
    return basis


@dataclass(frozen=True)
class Lattice:
    """A sublattice of Z^k in canonical (row Hermite form) basis."""

    ambient_rank: int
    basis: Tuple[Vector, ...]

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(tuple(r) for r in self.basis))

    # -- constructors --------------------------------------------------------

    @staticmethod
    def zero(k: int) -> "Lattice":
        return Lattice(k, ())

    @staticmethod
    def full(k: int) -> "Lattice":
        rows = tuple(tuple(1 if i == j else 0 for j in range(k)) for i in range(k))
        return Lattice(k, rows)

    @staticmethod
    def span(k: int, vectors: Iterable[Sequence[int]]) -> "Lattice":
        return Lattice(k, tuple(tuple(r) for r in _hnf_rows(vectors, k)))

    # -- basic queries -------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def is_zero(self) -> bool:
        return not self.basis

    def is_full(self) -> bool:
        return self == Lattice.full(self.ambient_rank)

    def __contains__(self, v: Sequence[int]) -> bool:
        vec = list(v)
        if len(vec) != self.ambient_rank:
            raise LatticeError(f"vector {v} does not live in Z^{self.ambient_rank}")
        for row in self.basis:
            j = next(i for i, c in enumerate(row) if c)
            if vec[j] == 0:
                continue
            if vec[j] % row[j] != 0:
                return False
            q = vec[j] // row[j]
            for i in range(self.ambient_rank):
                vec[i] -= q * row[i]
        return not any(vec)

    def coordinates(self, v: Sequence[int]) -> Optional[Vector]:
        """Integer coordinates of v in the canonical basis, or None."""
        vec = list(v)
        coords = []
        for row in self.basis:
            j = next(i for i, c in enumerate(row) if c)
            if vec[j] % row[j] != 0:
                return None
            q = vec[j] // row[j]
            coords.append(q)
            for i in range(self.ambient_rank):
                vec[i] -= q * row[i]
        return tuple(coords) if not any(vec) else None

    def subset_of(self, other: "Lattice") -> bool:
        return all(row in other for row in self.basis)

    def vectors_up_to(self, max_l1: int) -> List[Vector]:
        """All lattice vectors of l1 norm <= max_l1 (zero excluded)."""
        out: List[Vector] = []
        bound = max_l1
        if not self.basis:
            return out
        pivots = [next(i for i, c in enumerate(row) if c) for row in self.basis]

        def rec(idx: int, acc: List[int]) -> None:
            if idx == len(self.basis):
                if any(acc) and sum(abs(c) for c in acc) <= bound:
                    out.append(tuple(acc))
                return
            row, j = self.basis[idx], pivots[idx]
            # rows below have zeros up to their own (later) pivot column, so
            # coordinates < j are final: prune on them and solve for q exactly
            fixed = sum(abs(acc[c]) for c in range(j))
            rem = bound - fixed
            if rem < 0:
                return
            p = row[j]
            lo = -((rem + acc[j]) // p)
            hi = (rem - acc[j]) // p
            for q in range(lo, hi + 1):
                rec(idx + 1, [a + q * b for a, b in zip(acc, row)])

        rec(0, [0] * self.ambient_rank)
        return sorted(set(out))

    # -- lattice algebra -----------------------------------------------------

    def __add__(self, other: "Lattice") -> "Lattice":
        self._check_ambient(other)
        return Lattice.span(self.ambient_rank, self.basis + other.basis)

    def __and__(self, other: "Lattice") -> "Lattice":
        return intersect(self, other)

    def _check_ambient(self, other: "Lattice") -> None:
        if self.ambient_rank != other.ambient_rank:
            raise LatticeError("ambient ranks differ")


def canonical_basis(k: int, vectors: Iterable[Sequence[int]]) -> Lattice:
    return Lattice.span(k, vectors)


def lattice_sum(a: Lattice, b: Lattice) -> Lattice:
    return a + b


def _diagonalize(rows: Sequence[Sequence[int]], k: int):
    """Bring the matrix to diagonal shape by unimodular row and column moves.

    Returns (diag, w) where the row span of the input equals the span of
    diag[i] * w[i], and the rows of w form a basis of Z^k.  (w tracks the
    inverse of the accumulated column transform.)
    """
    m = [list(r) for r in rows]
    w = [[1 if i == j else 0 for j in range(k)] for i in range(k)]
    nrows = len(m)
    t = 0
    while t < min(nrows, k):
        # find a nonzero entry in the remaining block
        pos = None
        for i in range(t, nrows):
            for j in range(t, k):
                if m[i][j]:
                    pos = (i, j)
                    break
            if pos:
                break
        if pos is None:
            break
        i0, j0 = pos
        m[t], m[i0] = m[i0], m[t]
        if j0 != t:
            for row in m:
                row[t], row[j0] = row[j0], row[t]
            w[t], w[j0] = w[j0], w[t]
        while True:
            # clear column t below the pivot (row moves, untracked)
            for i in range(t + 1, nrows):
                while m[i][t]:
                    q = m[i][t] // m[t][t]
                    if q:
                        for j in range(k):
                            m[i][j] -= q * m[t][j]
                    if m[i][t]:
                        m[t], m[i] = m[i], m[t]
            # clear row t right of the pivot (column moves, tracked in w)
            for j in range(t + 1, k):
                while m[t][j]:
                    q = m[t][j] // m[t][t]
                    if q:
                        for row in m:
                            row[j] -= q * row[t]
                        for c in range(k):
                            w[t][c] += q * w[j][c]
                    if m[t][j]:
                        for row in m:
                            row[t], row[j] = row[j], row[t]
                        w[t], w[j] = w[j], w[t]
            if all(m[i][t] == 0 for i in range(t + 1, nrows)):
                break
        t += 1
    diag = [m[i][i] if i < k else 0 for i in range(min(nrows, k))]
    while len(diag) < k:
        diag.append(0)
    return diag[:k], w


def saturation(L: Lattice) -> Lattice:
    """All v in Z^k with a nonzero multiple inside L: the smallest direct
    summand of Z^k containing L."""
    if L.is_zero:
        return L
    diag, w = _diagonalize(L.basis, L.ambient_rank)
    rows = [w[i] for i in range(L.ambient_rank) if diag[i] != 0]
    return Lattice.span(L.ambient_rank, rows)


def _row_reduce_with_transform(rows: Sequence[Sequence[int]], k: int):
    """Echelonize by unimodular row moves, tracking them: returns (h, u, r)
    with u * input = h, rows r.. of h zero; rows r.. of u span the left
    kernel of the input."""
    m = [list(row) for row in rows]
    n = len(m)
    u = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    r = 0
    for col in range(k):
        piv = next((i for i in range(r, n) if m[i][col]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        u[r], u[piv] = u[piv], u[r]
        for i in range(r + 1, n):
            while m[i][col]:
                q = m[i][col] // m[r][col]
                if q:
                    m[i] = [a - q * b for a, b in zip(m[i], m[r])]
                    u[i] = [a - q * b for a, b in zip(u[i], u[r])]
                if m[i][col]:
                    m[r], m[i] = m[i], m[r]
                    u[r], u[i] = u[i], u[r]
        r += 1
    return m, u, r


def intersect(a: Lattice, b: Lattice) -> Lattice:
    a._check_ambient(b)
    if a.is_zero or b.is_zero:
        return Lattice.zero(a.ambient_rank)
    # x*A = y*B exactly when (x|y) lies in the left kernel of [A; -B]
    stacked = [list(r) for r in a.basis] + [[-c for c in r] for r in b.basis]
    _, u, r = _row_reduce_with_transform(stacked, a.ambient_rank)
    vectors = []
    for coeffs in u[r:]:
        v = [0] * a.ambient_rank
        for c, row in zip(coeffs[: len(a.basis)], a.basis):
            for i in range(a.ambient_rank):
                v[i] += c * row[i]
        vectors.append(v)
    return Lattice.span(a.ambient_rank, vectors)


def index_and_complement(
    K: Lattice, L: Lattice
) -> Tuple[Optional[int], Optional[Lattice]]:
    """The index [K:L] (None when infinite) and, when K is a direct summand
    of Z^k, a complement N with K + N = Z^k and K & N = 0."""
    K._check_ambient(L)
    coords = []
    for row in L.basis:
        c = K.coordinates(row)
        if c is None:
            raise LatticeError("second lattice is not contained in the first")
        coords.append(c)
    if L.rank < K.rank:
        index: Optional[int] = None
    else:
        reduced = _hnf_rows(coords, K.rank)
        index = 1
        for row in reduced:
            index *= next(c for c in row if c)
        index = abs(index)
    return index, complement(K)


def complement(K: Lattice) -> Optional[Lattice]:
    """A lattice N with K + N = Z^k and K & N = 0, when K is saturated."""
    k = K.ambient_rank
    if saturation(K) != K:
        return None
    # greedy extension by standard basis vectors, verified exactly
    chosen: List[Vector] = []
    current = K
    for j in range(k):
        e = tuple(1 if i == j else 0 for i in range(k))
        grown = current + Lattice.span(k, [e])
        if grown.rank > current.rank:
            chosen.append(e)
            current = grown
    cand = Lattice.span(k, chosen)
    if (K + cand).is_full() and intersect(K, cand).is_zero:
        return cand
    # greedy can fail (e.g. K = <(2,3)>); fall back to the diagonal transform
    diag, w = _diagonalize(K.basis, k)
    rows = [w[i] for i in range(k) if i >= len(diag) or diag[i] == 0]
    fallback = Lattice.span(k, rows)
    if not ((K + fallback).is_full() and intersect(K, fallback).is_zero):
        raise LatticeError("complement construction failed")  # pragma: no cover
    return fallback
