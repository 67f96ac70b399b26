import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relfold.group_core import (
    GroupError,
    GroupSpec,
    free_el,
    identity,
    len_rel,
    normalize,
    par_el,
)
from relfold.relcayley import (
    BudgetError,
    bfs_ball,
    cayley_path,
    connected_pairs,
    p_components,
    phase_vertices,
    piecewise_path,
    remove_backtracking,
    verify_long_peripheral,
)

from conftest import F1Z2, Z2Z2, edge_word_strategy, word_strategy


def path(spec, letters, **kw):
    return cayley_path(identity(spec), letters, **kw)


def test_p_components_examples(f1z2):
    assert p_components(path(f1z2, [1, 1])) == []
    assert p_components(path(f1z2, [(1, (1, 0)), (1, (0, 1)), 1])) == [(1, 0, 2)]
    assert p_components(path(f1z2, [(1, (1, 0)), 1, (1, (0, 1))])) == [
        (1, 0, 1),
        (1, 2, 3),
    ]


def test_phase_vertices_examples(f1z2):
    assert phase_vertices(path(f1z2, [1, 1])) == [0, 1, 2]
    assert phase_vertices(path(f1z2, [(1, (1, 0)), (1, (0, 1))])) == [0, 2]
    assert phase_vertices(path(f1z2, [])) == [0]


def test_connected_pairs_examples(f1z2):
    assert connected_pairs(path(f1z2, [(1, (1, 0)), 1, (1, (0, 1))])) == []
    assert connected_pairs(path(f1z2, [(1, (1, 0)), 1, -1, (1, (0, 1))])) == [(0, 1)]
    assert connected_pairs(path(f1z2, [1, (1, (1, 0)), 1])) == []


def test_remove_backtracking_examples(f1z2):
    p = remove_backtracking(path(f1z2, [(1, (1, 0)), 1, -1, (1, (0, 1))]))
    assert list(p.letters) == [(1, (1, 1))]
    # endpoints agree and the length dropped from 4 to 1
    assert p.endpoint() == normalize(f1z2, [(1, (1, 0)), 1, -1, (1, (0, 1))])
    q = path(f1z2, [1, 1])
    assert remove_backtracking(q).letters == q.letters
    r = remove_backtracking(path(f1z2, [(1, (1, 0)), (1, (-1, 0))]))
    assert list(r.letters) == []
    assert r.endpoint().is_identity


@given(edge_word_strategy(F1Z2, max_len=10))
@settings(max_examples=80)
def test_remove_backtracking_laws(letters):
    p = path(F1Z2, letters)
    q = remove_backtracking(p)
    assert q.endpoint() == p.endpoint()
    assert len(q) <= len(p)
    assert connected_pairs(q) == []
    assert remove_backtracking(q).letters == q.letters
    # single-edge components only
    assert all(b - a == 1 for _, a, b in p_components(q))


@given(edge_word_strategy(Z2Z2, max_len=10))
@settings(max_examples=80)
def test_vertices_partition(letters):
    p = path(Z2Z2, letters)
    phases = set(phase_vertices(p))
    inner = {}
    for idx, (_, a, b) in enumerate(p_components(p)):
        for v in range(a + 1, b):
            assert v not in inner
            inner[v] = idx
    for v in range(len(letters) + 1):
        assert (v in phases) != (v in inner)


def test_verify_long_peripheral_trivial_case(z2z2):
    p = piecewise_path(identity(z2z2), [("geo", [(1, (1, 0)), (2, (0, 1))])])
    report = verify_long_peripheral(p, 1, 0, 4)
    assert report.hypotheses_hold
    assert report.conclusion_whole and report.conclusion_all_subpaths


def test_verify_long_peripheral_derived_case(z2z2):
    # s0 p1 s1 with a long factor-1 edge between geodesics in factor 2
    p = piecewise_path(
        identity(z2z2),
        [
            ("geo", [(2, (1, 0)), (1, (1, 1)), (2, (0, 1))]),
            ("p", (1, (9, 9))),
            ("geo", [(2, (2, 0))]),
        ],
    )
    report = verify_long_peripheral(p, 1, 0, 8)
    assert report.hypotheses_hold
    assert report.conclusion_whole and report.conclusion_all_subpaths


def test_verify_long_peripheral_violation(z2z2):
    # p s' p' with lab(s') in the same factor and a short gap
    p = piecewise_path(
        identity(z2z2),
        [
            ("p", (1, (9, 0))),
            ("geo", [(1, (0, 2))]),
            ("p", (1, (0, 9))),
        ],
    )
    report = verify_long_peripheral(p, 1, 0, 8)
    assert not report.hyp_no_close_returns


def test_verify_long_peripheral_malformed(z2z2):
    p = cayley_path(
        identity(z2z2),
        [(1, (9, 9)), (2, (1, 0))],
        cuts=[],
        marks=[1, None],
    )
    with pytest.raises(GroupError):
        verify_long_peripheral(p, 1, 0, 4)


def test_bfs_ball_examples():
    free1 = GroupSpec(1, ())
    assert bfs_ball(free1, "x", 0) == {identity(free1): 0}
    ball = bfs_ball(free1, "x", 2)
    assert len(ball) == 5
    assert ball[free_el(free1, [1, 1])] == 2
    f1z2 = F1Z2
    table = bfs_ball(f1z2, "rel", 1, truncation=2)
    # identity, x^{+-1}, and the 12 nonzero vectors of l1 norm <= 2
    assert len(table) == 15
    assert table[par_el(f1z2, 1, (1, -1))] == 1


def test_bfs_ball_filters_oversized_syllables():
    table = bfs_ball(F1Z2, "rel", 2, truncation=1)
    assert par_el(F1Z2, 1, (2, 0)) not in table
    assert all(
        all(s[0] == "f" or sum(abs(c) for c in s[2]) <= 1 for s in g.syllables)
        for g in table
    )


def test_bfs_ball_budget_error():
    with pytest.raises(BudgetError):
        bfs_ball(F1Z2, "rel", 4, truncation=4, cap=1000)


_BALL_CACHE = {}


def _cached_ball():
    if "ball" not in _BALL_CACHE:
        _BALL_CACHE["ball"] = bfs_ball(F1Z2, "rel", 4, truncation=4, cap=4_000_000)
    return _BALL_CACHE["ball"]


@given(word_strategy(F1Z2, max_len=4))
@settings(max_examples=30, deadline=None)
def test_len_rel_agrees_with_bfs_on_small_words(letters):
    g = normalize(F1Z2, letters)
    norms = [sum(abs(c) for c in s[2]) for s in g.syllables if s[0] == "p"]
    if len_rel(g) > 4 or any(n > 4 for n in norms):
        return
    assert _cached_ball()[g] == len_rel(g)
