import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relfold.lattice import (
    Lattice,
    LatticeError,
    canonical_basis,
    complement,
    index_and_complement,
    intersect,
    saturation,
)


def vectors(k, max_entry=5, max_count=4):
    return st.lists(
        st.tuples(*[st.integers(-max_entry, max_entry) for _ in range(k)]),
        max_size=max_count,
    )


def unimodular_mix(rows):
    """A different generating set for the same lattice: a sequence of
    elementary row moves, plus a redundant repeated generator."""
    out = [list(r) for r in rows]
    for i in range(len(out)):
        j = (i + 1) % len(out)
        if j != i:
            out[i] = [a + 2 * b for a, b in zip(out[i], out[j])]
    out.reverse()
    return out + out[:1]


def test_canonical_basis_examples():
    assert canonical_basis(2, []).is_zero
    assert canonical_basis(2, [(2, 0), (0, 3)]).basis == ((2, 0), (0, 3))
    # oracle: by hand, (1,1) and (1,-1) span {(a,b): a+b even}
    got = canonical_basis(2, [(1, 1), (1, -1)])
    assert got.basis == ((1, 1), (0, 2))


def test_canonical_basis_matches_sympy():
    sympy = pytest.importorskip("sympy")
    from sympy.matrices.normalforms import hermite_normal_form

    cases = [
        [(1, 1), (1, -1)],
        [(2, 4), (6, 8)],
        [(3, 0, 1), (0, 2, 2), (1, 1, 1)],
        [(5, 3), (3, 5), (1, 1)],
    ]
    for vecs in cases:
        k = len(vecs[0])
        ours = canonical_basis(k, vecs)
        theirs = hermite_normal_form(sympy.Matrix(vecs).T)
        # sympy works column-style; compare the two spans by mutual inclusion
        their_lattice = canonical_basis(k, [tuple(col) for col in theirs.T.tolist()])
        assert ours == their_lattice


def test_member_examples():
    L = canonical_basis(2, [(2, 2)])
    assert (0, 0) in L
    assert (1, 1) not in L
    M = canonical_basis(2, [(1, 1), (0, 2)])
    # oracle: (3,1) = 3*(1,1) - 1*(0,2)
    assert (3, 1) in M
    assert M.coordinates((3, 1)) == (3, -1)


def test_sum_and_intersect_examples():
    L = canonical_basis(2, [(2, 0), (0, 1)])
    zero = Lattice.zero(2)
    assert L + zero == L
    assert intersect(L, zero).is_zero
    assert canonical_basis(2, [(2, 0)]) + canonical_basis(2, [(0, 2)]) == canonical_basis(
        2, [(2, 0), (0, 2)]
    )
    diag = canonical_basis(2, [(1, 1)])
    # oracle: scan small multiples of (1,1) for membership in L
    expected = [m for m in range(1, 5) if (m, m) in L]
    assert expected == [2, 4]
    assert intersect(L, diag) == canonical_basis(2, [(2, 2)])


def brute_saturation(L, box=3, mult=6):
    hits = []
    k = L.ambient_rank
    for v in itertools.product(range(-box, box + 1), repeat=k):
        if any(v) and any(tuple(m * c for c in v) in L for m in range(1, mult + 1)):
            hits.append(v)
    return canonical_basis(k, hits)


def test_saturation_examples():
    assert saturation(Lattice.zero(2)).is_zero
    L = canonical_basis(2, [(2, 2)])
    # oracle: enumerate small vectors with a small multiple inside L
    assert brute_saturation(L) == canonical_basis(2, [(1, 1)])
    assert saturation(L) == canonical_basis(2, [(1, 1)])
    M = canonical_basis(2, [(2, 0), (0, 3)])
    assert saturation(M) == Lattice.full(2)


def test_index_and_complement_examples():
    idx, comp = index_and_complement(Lattice.full(2), canonical_basis(2, [(2, 0), (0, 3)]))
    assert idx == 6
    assert comp is not None and comp.is_zero
    K = canonical_basis(2, [(1, 1)])
    idx, comp = index_and_complement(K, canonical_basis(2, [(2, 2)]))
    assert idx == 2
    assert comp is not None
    assert (K + comp).is_full() and intersect(K, comp).is_zero
    idx, comp = index_and_complement(canonical_basis(2, [(1, 0)]), Lattice.zero(2))
    assert idx is None
    assert comp == canonical_basis(2, [(0, 1)])


def test_index_requires_containment():
    with pytest.raises(LatticeError):
        index_and_complement(canonical_basis(2, [(2, 0)]), canonical_basis(2, [(1, 1)]))


def test_complement_where_greedy_fails():
    K = canonical_basis(2, [(2, 3)])
    N = complement(K)
    assert N is not None
    assert (K + N).is_full() and intersect(K, N).is_zero


def test_complement_of_unsaturated_is_none():
    assert complement(canonical_basis(2, [(2, 0)])) is None


@given(vectors(3))
@settings(max_examples=150)
def test_canonical_form_is_generating_set_invariant(vecs):
    L1 = canonical_basis(3, vecs)
    L2 = canonical_basis(3, unimodular_mix(vecs))
    assert L1 == L2


@given(vectors(3))
@settings(max_examples=150)
def test_saturation_laws(vecs):
    L = canonical_basis(3, vecs)
    K = saturation(L)
    assert L.subset_of(K)
    assert saturation(K) == K
    assert K.rank == L.rank
    if L.rank:
        idx, _ = index_and_complement(K, L)
        assert idx is not None and idx >= 1
    # K is a direct summand
    N = complement(K)
    assert N is not None
    assert (K + N).is_full() and intersect(K, N).is_zero


@given(vectors(3, max_entry=3))
@settings(max_examples=100)
def test_saturation_matches_brute_force(vecs):
    L = canonical_basis(3, vecs)
    K = saturation(L)
    # one direction: every brute-force hit lies in the saturation
    assert brute_saturation(L, box=3, mult=9).subset_of(K)
    # other direction: every small saturation vector has a multiple in L,
    # with the multiple bounded by the index
    if L.rank:
        idx, _ = index_and_complement(K, L)
        for v in K.vectors_up_to(3):
            assert any(tuple(m * c for c in v) in L for m in range(1, idx + 1))


@given(vectors(2), vectors(2))
@settings(max_examples=150)
def test_intersection_is_lower_bound(v1, v2):
    L1, L2 = canonical_basis(2, v1), canonical_basis(2, v2)
    M = intersect(L1, L2)
    assert M.subset_of(L1) and M.subset_of(L2)
    for v in M.vectors_up_to(6):
        assert v in L1 and v in L2
    # every small common vector is caught
    for v in L1.vectors_up_to(4):
        if v in L2:
            assert v in M


@given(vectors(3, max_entry=3))
@settings(max_examples=80)
def test_maps_determined_on_saturation(vecs):
    """Two integer matrices agreeing on a lattice agree on its saturation."""
    L = canonical_basis(3, vecs)
    K = saturation(L)
    phi = [(1, 2, 0), (0, 1, -1)]  # arbitrary map Z^3 -> Z^2

    def apply(m, v):
        return tuple(sum(row[i] * v[i] for i in range(3)) for row in m)

    # a second map agreeing on L: add a row combination vanishing on L
    import itertools as it

    for delta in it.product((-1, 0, 1), repeat=3):
        if all(apply([delta], b) == (0,) for b in L.basis):
            psi = [tuple(p + d for p, d in zip(phi[0], delta)), phi[1]]
            for b in K.basis:
                assert apply(phi, b) == apply(psi, b)
