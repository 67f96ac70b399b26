import pytest
from hypothesis import strategies as st

from relfold.group_core import GroupSpec, normalize

F1Z2 = GroupSpec(1, (2,))
Z2Z2 = GroupSpec(0, (2, 2))
FREE2 = GroupSpec(2, ())


def letter_strategy(spec: GroupSpec, max_norm: int = 3):
    choices = []
    if spec.free_rank:
        choices.append(
            st.integers(1, spec.free_rank).flatmap(
                lambda j: st.sampled_from([j, -j])
            )
        )
    for i, k in enumerate(spec.parabolic_ranks, start=1):
        choices.append(
            st.tuples(
                st.just(i),
                st.tuples(*[st.integers(-max_norm, max_norm) for _ in range(k)]),
            )
        )
    return st.one_of(*choices)


def word_strategy(spec: GroupSpec, max_len: int = 12):
    return st.lists(letter_strategy(spec), max_size=max_len)


def edge_letter_strategy(spec: GroupSpec, max_norm: int = 3):
    """Letters that are legal Cayley graph edges: no trivial peripherals."""
    return letter_strategy(spec, max_norm).filter(
        lambda l: isinstance(l, int) or any(l[1])
    )


def edge_word_strategy(spec: GroupSpec, max_len: int = 10):
    return st.lists(edge_letter_strategy(spec), max_size=max_len)


def element_strategy(spec: GroupSpec, max_len: int = 12):
    return word_strategy(spec, max_len).map(lambda w: normalize(spec, w))


@pytest.fixture
def f1z2():
    return F1Z2


@pytest.fixture
def z2z2():
    return Z2Z2


@pytest.fixture
def free2():
    return FREE2
