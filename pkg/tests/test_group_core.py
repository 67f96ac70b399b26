import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relfold.group_core import (
    GroupError,
    GroupSpec,
    canonical_iota,
    free_el,
    geodesic_rep,
    identity,
    inv,
    len_rel,
    len_x,
    mul,
    normalize,
    par_el,
    parabolic_type,
    strip_peripheral_prefix,
    translation_length,
)
from relfold.relcayley import bfs_distance

from conftest import F1Z2, Z2Z2, element_strategy, word_strategy


def test_normalize_examples(f1z2):
    assert normalize(f1z2, []).is_identity
    assert normalize(f1z2, [1, -1]).is_identity
    assert normalize(f1z2, [(1, (1, 0)), (1, (0, 1)), (1, (1, 0))]) == par_el(
        f1z2, 1, (2, 1)
    )
    assert normalize(f1z2, [(1, (1, 0)), 1, -1, (1, (0, 1))]) == par_el(f1z2, 1, (1, 1))


def test_normalize_idempotent(f1z2):
    g = normalize(f1z2, [1, (1, (2, 0)), (1, (0, 1)), -1, -1])
    assert normalize(f1z2, geodesic_rep(g)) == g


def test_normalize_rejects_malformed(f1z2):
    with pytest.raises(GroupError):
        normalize(f1z2, [3])
    with pytest.raises(GroupError):
        normalize(f1z2, [(2, (1, 0))])
    with pytest.raises(GroupError):
        normalize(f1z2, [(1, (1, 0, 0))])


def test_mul_examples(f1z2):
    g = free_el(f1z2, [1]) * par_el(f1z2, 1, (1, 0))
    assert mul(identity(f1z2), g) == g
    left = free_el(f1z2, [1]) * par_el(f1z2, 1, (1, 0))
    right = par_el(f1z2, 1, (-1, 0)) * free_el(f1z2, [-1])
    assert mul(left, right).is_identity
    assert mul(par_el(f1z2, 1, (1, 2)), par_el(f1z2, 1, (3, -2))) == par_el(
        f1z2, 1, (4, 0)
    )


def test_mul_mismatched_specs(f1z2, z2z2):
    with pytest.raises(GroupError):
        mul(identity(f1z2), identity(z2z2))


def test_inv_examples(f1z2):
    assert inv(identity(f1z2)).is_identity
    assert inv(free_el(f1z2, [1, 1])) == free_el(f1z2, [-1, -1])
    assert inv(par_el(f1z2, 1, (2, -3))) == par_el(f1z2, 1, (-2, 3))


def test_len_rel_examples(f1z2):
    assert len_rel(identity(f1z2)) == 0
    assert len_rel(par_el(f1z2, 1, (3, 5))) == 1
    g = free_el(f1z2, [1, 1]) * par_el(f1z2, 1, (2, 2)) * free_el(f1z2, [-1])
    # oracle: breadth-first search in the relative Cayley graph
    assert bfs_distance(g, "rel", max_depth=5, truncation=4) == 4
    assert len_rel(g) == 4


def test_len_x_examples(f1z2):
    assert len_x(identity(f1z2)) == 0
    g = par_el(f1z2, 1, (3, -5))
    assert bfs_distance(g, "x", max_depth=9) == 8
    assert len_x(g) == 8
    h = free_el(f1z2, [1, 1]) * par_el(f1z2, 1, (1, 1))
    assert bfs_distance(h, "x", max_depth=5) == 4
    assert len_x(h) == 4


def test_geodesic_rep_examples(f1z2):
    assert geodesic_rep(identity(f1z2)) == []
    assert geodesic_rep(par_el(f1z2, 1, (3, 5))) == [(1, (3, 5))]
    g = free_el(f1z2, [1]) * par_el(f1z2, 1, (1, 0)) * free_el(f1z2, [1])
    assert geodesic_rep(g) == [1, (1, (1, 0)), 1]


@given(element_strategy(F1Z2))
def test_geodesic_rep_contract(g):
    word = geodesic_rep(g)
    assert len(word) == len_rel(g)
    assert normalize(g.spec, word) == g
    par_count = sum(1 for l in word if not isinstance(l, int))
    assert par_count == sum(1 for s in g.syllables if s[0] == "p")


def test_parabolic_type_examples(f1z2):
    assert parabolic_type(par_el(f1z2, 1, (2, 3))) == (1, identity(f1z2))
    x = free_el(f1z2, [1])
    g = x * par_el(f1z2, 1, (0, 1)) * inv(x)
    assert parabolic_type(g) == (1, x)
    h = x * par_el(f1z2, 1, (1, 0))
    # oracle: |h^n| grows linearly, so h is not conjugate into the factor
    for n in range(1, 5):
        assert bfs_distance(h**n, "rel", max_depth=2 * n + 1, truncation=1) == 2 * n
    assert parabolic_type(h) is None
    with pytest.raises(GroupError):
        parabolic_type(identity(f1z2))


def test_translation_length_examples(f1z2):
    assert translation_length(par_el(f1z2, 1, (7, 0))) == 0
    g = free_el(f1z2, [1]) * par_el(f1z2, 1, (1, 0))
    assert translation_length(g) == 2
    x = free_el(f1z2, [1])
    assert translation_length(inv(x) * g * x) == 2


def test_strip_peripheral_prefix_examples(f1z2):
    x = free_el(f1z2, [1])
    p, rest = strip_peripheral_prefix(par_el(f1z2, 1, (2, 0)) * x, 1)
    assert p == (2, 0) and rest == x
    p, rest = strip_peripheral_prefix(x, 1)
    assert p == (0, 0) and rest == x
    p, rest = strip_peripheral_prefix(par_el(f1z2, 1, (1, 1)), 1)
    assert p == (1, 1) and rest.is_identity


@given(element_strategy(F1Z2, max_len=8), st.integers(-3, 3), st.integers(-3, 3))
def test_strip_prefix_minimizes_x_length(g, a, b):
    p, rest = strip_peripheral_prefix(g, 1)
    assert par_el(g.spec, 1, p) * rest == g
    q = par_el(g.spec, 1, (a, b))
    assert len_x(rest) <= len_x(q * g)


def test_canonical_iota_examples(f1z2):
    x = free_el(f1z2, [1])
    # a generator spelled by an explicit word maps to itself
    assert canonical_iota(f1z2, [("y", (1, 1))], {}) == [1, 1]
    o = inv(x) * par_el(f1z2, 1, (2, 0)) * x
    table = {1: (1, x)}
    assert canonical_iota(f1z2, [("o", 1, o)], table) == [-1, (1, (2, 0)), 1]
    word = canonical_iota(f1z2, [("y", (1, 1)), ("o", 1, o)], table)
    assert normalize(f1z2, word) == free_el(f1z2, [1, 1]) * o


def test_canonical_iota_inconsistency(f1z2):
    x = free_el(f1z2, [1])
    with pytest.raises(GroupError):
        canonical_iota(f1z2, [("o", 1, x)], {1: (1, x)})


# -- algebraic laws -----------------------------------------------------------


@given(word_strategy(F1Z2), word_strategy(F1Z2))
def test_normalize_is_multiplicative(u, v):
    spec = F1Z2
    assert normalize(spec, u + v) == mul(normalize(spec, u), normalize(spec, v))


@given(word_strategy(Z2Z2), word_strategy(Z2Z2))
def test_normalize_is_multiplicative_two_factors(u, v):
    spec = Z2Z2
    assert normalize(spec, u + v) == mul(normalize(spec, u), normalize(spec, v))


@given(element_strategy(F1Z2), element_strategy(F1Z2), element_strategy(F1Z2))
def test_associativity_and_identity(g, h, k):
    assert (g * h) * k == g * (h * k)
    e = identity(F1Z2)
    assert g * e == g and e * g == g
    assert g * inv(g) == e


@given(element_strategy(F1Z2), element_strategy(F1Z2))
def test_triangle_inequalities(g, h):
    assert len_rel(g * h) <= len_rel(g) + len_rel(h)
    assert len_x(g * h) <= len_x(g) + len_x(h)


@given(element_strategy(F1Z2, max_len=6), st.integers(1, 5))
@settings(max_examples=60)
def test_translation_length_is_homogeneous(g, n):
    assert translation_length(g**n) == n * translation_length(g)


@given(element_strategy(F1Z2, max_len=8))
def test_translation_length_detects_parabolics(g):
    if g.is_identity:
        assert translation_length(g) == 0
        return
    if parabolic_type(g) is None:
        assert translation_length(g) > 0
    else:
        assert translation_length(g) == 0


@given(element_strategy(F1Z2, max_len=8))
def test_parabolic_conjugator_is_consistent(g):
    if g.is_identity:
        return
    result = parabolic_type(g)
    if result is None:
        return
    i, h = result
    core = inv(h) * g * h
    assert len(core.syllables) == 1
    assert core.syllables[0][0] == "p" and core.syllables[0][1] == i
    # h is shortest: it never ends in a syllable of the same factor
    if h.syllables:
        last = h.syllables[-1]
        assert not (last[0] == "p" and last[1] == i)
