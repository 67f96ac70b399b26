"""Carrier graphs of groups over free products of a free group with free
abelian groups, and the folding machinery that normalizes them."""

from .group_core import (
    GroupElement,
    GroupError,
    GroupSpec,
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
    translation_length,
)
from .lattice import Lattice, canonical_basis, index_and_complement, intersect, saturation

__all__ = [
    "GroupElement",
    "GroupError",
    "GroupSpec",
    "Lattice",
    "canonical_basis",
    "free_el",
    "geodesic_rep",
    "identity",
    "index_and_complement",
    "intersect",
    "inv",
    "len_rel",
    "len_x",
    "mul",
    "normalize",
    "par_el",
    "parabolic_type",
    "saturation",
    "translation_length",
]
