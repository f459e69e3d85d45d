"""Hypothesis strategies for queries over a small pattern and atom vocabulary."""

from fractions import Fraction

from hypothesis import strategies as st

from patternsat.pattern import ANTI_WEDGE, DIAMOND, FOUR_CYCLE, TRIANGLE, WEDGE, Pattern
from patternsat.query import Count, PatternLeaf, ReconstructionPath, Union, is_well_formed

ATOMS = ("a", "b", "c")
LEAF_PATTERNS = (
    TRIANGLE,
    WEDGE,
    ANTI_WEDGE,
    DIAMOND,
    FOUR_CYCLE,
    Pattern.of(3, [(1, 2), (0, 2)]),  # a relabeled wedge
)

coefs = st.builds(Fraction, st.integers(-4, 4).filter(bool), st.sampled_from((1, 1, 2, 3)))
provs = st.frozensets(st.sampled_from(ATOMS), max_size=2)
paths = st.lists(st.tuples(provs, coefs), min_size=1, max_size=3).map(lambda es: ReconstructionPath(tuple(es)))
leaves = st.builds(PatternLeaf, st.sampled_from(LEAF_PATTERNS))


def _extend(children):
    return st.one_of(st.builds(Union, children, children), st.builds(Count, paths, children))


queries = st.recursive(leaves, _extend, max_leaves=5).filter(is_well_formed)
