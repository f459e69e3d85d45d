"""Equality-saturation optimizer for batched graph pattern-matching queries."""

from .errors import (
    CostTableError,
    ExtractionError,
    FilterError,
    PatternError,
    PatternsatError,
    PatternSizeError,
    QueryParseError,
    RuleError,
)
from .optimizer import CostTable, Limits, Report, cost_table_from_json, extract, optimize, query_cost
from .oracle import DataGraph, Filter, FilterRegistry, count_matches, evaluate_query, queries_equivalent
from .packs import load_manifest, sm_pack, sm_rule, validate_rule, wedge_rule
from .pattern import Pattern, automorphism_count, canonicalize_pattern, isomorphic
from .query import Count, PatternLeaf, ReconstructionPath, Union, parse_query, serialize_query
from .rewrite import RewriteRule, builtin_rules, respect_wrap

__version__ = "0.1.0"
