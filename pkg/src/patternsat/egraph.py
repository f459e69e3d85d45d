"""E-graph over query terms: union-find, e-class map and hash-cons.

E-nodes carry their non-term payload inline: a Count node holds its
reconstruction path and a Pattern node its (pattern, filter) pair, so only
query positions are e-class children.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from .query import Count, PatternLeaf, Query, ReconstructionPath, Union
from .rewrite import (
    MCount,
    MLeaf,
    MUnion,
    QVar,
    RewriteRule,
    Subst,
    match_path,
    match_value,
)
from .pattern import Pattern


@dataclass(frozen=True)
class ClassRef:
    """An e-class standing in for a subterm inside a rewrite result."""

    id: int


class ENode(NamedTuple):
    op: str  # "U" union, "C" count, "P" pattern leaf
    data: object
    children: tuple[int, ...]


@dataclass
class EClass:
    nodes: dict[ENode, None] = field(default_factory=dict)
    parents: list[tuple[ENode, int]] = field(default_factory=list)
    _by_op: dict[str, list[ENode]] | None = None

    def by_op(self, op: str) -> list[ENode]:
        if self._by_op is None:
            idx: dict[str, list[ENode]] = {}
            for n in self.nodes:
                idx.setdefault(n.op, []).append(n)
            self._by_op = idx
        return self._by_op.get(op, [])

    def by_op_keys(self):
        if self._by_op is None:
            self.by_op("U")
        return self._by_op.keys()


class EGraph:
    def __init__(self):
        self._uf: list[int] = []
        self.classes: dict[int, EClass] = {}
        self.hashcons: dict[ENode, int] = {}
        self._pending: list[int] = []
        self.node_count = 0
        self._op_index: dict[str, list[int]] | None = None

    # union-find -----------------------------------------------------------------

    def find(self, i: int) -> int:
        uf = self._uf
        while uf[i] != i:
            uf[i] = uf[uf[i]]
            i = uf[i]
        return i

    def canonicalize(self, node: ENode) -> ENode:
        if not node.children:
            return node
        return ENode(node.op, node.data, tuple(self.find(c) for c in node.children))

    # construction ---------------------------------------------------------------

    def add(self, node: ENode) -> int:
        node = self.canonicalize(node)
        hit = self.hashcons.get(node)
        if hit is not None:
            return self.find(hit)
        cid = len(self._uf)
        self._uf.append(cid)
        self.classes[cid] = EClass({node: None})
        for c in node.children:
            self.classes[self.find(c)].parents.append((node, cid))
        self.hashcons[node] = cid
        self.node_count += 1
        self._op_index = None
        return cid

    def add_term(self, t) -> int:
        if isinstance(t, ClassRef):
            return self.find(t.id)
        if isinstance(t, PatternLeaf):
            return self.add(ENode("P", (t.pattern, t.filter), ()))
        if isinstance(t, Count):
            return self.add(ENode("C", t.path, (self.add_term(t.inner),)))
        if isinstance(t, Union):
            return self.add(ENode("U", None, (self.add_term(t.left), self.add_term(t.right))))
        raise TypeError(f"cannot add {t!r} to an e-graph")

    def lookup_term(self, t) -> int | None:
        """Class representing ``t``, or None (hash-cons lookups only, nothing added)."""
        if isinstance(t, ClassRef):
            return self.find(t.id)
        if isinstance(t, PatternLeaf):
            node = ENode("P", (t.pattern, t.filter), ())
        elif isinstance(t, Count):
            inner = self.lookup_term(t.inner)
            if inner is None:
                return None
            node = ENode("C", t.path, (inner,))
        elif isinstance(t, Union):
            left, right = self.lookup_term(t.left), self.lookup_term(t.right)
            if left is None or right is None:
                return None
            node = ENode("U", None, (left, right))
        else:
            return None
        hit = self.hashcons.get(self.canonicalize(node))
        return None if hit is None else self.find(hit)

    def union(self, a: int, b: int) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        ca, cb = self.classes[a], self.classes[b]
        if len(ca.parents) < len(cb.parents):
            a, b, ca, cb = b, a, cb, ca
        self._uf[b] = a
        ca.nodes.update(cb.nodes)
        ca.parents.extend(cb.parents)
        ca._by_op = None
        del self.classes[b]
        self._op_index = None
        self._pending.append(a)
        return True

    def rebuild(self) -> None:
        """Restore congruence closure and hash-cons canonicity after unions."""
        while self._pending:
            todo = {self.find(c) for c in self._pending}
            self._pending = []
            for c in sorted(todo):
                self._repair(c)
        total = 0
        for cls in self.classes.values():
            fresh: dict[ENode, None] = {}
            for n in cls.nodes:
                fresh[self.canonicalize(n)] = None
            cls.nodes = fresh
            cls._by_op = None
            total += len(fresh)
        self.node_count = total
        self._op_index = None

    def _repair(self, cid: int) -> None:
        cls = self.classes[self.find(cid)]
        parents, cls.parents = cls.parents, []
        for pnode, pclass in parents:
            self.hashcons.pop(pnode, None)
            self.hashcons[self.canonicalize(pnode)] = self.find(pclass)
        seen: dict[ENode, int] = {}
        for pnode, pclass in parents:
            pnode = self.canonicalize(pnode)
            if pnode in seen:
                self.union(pclass, seen[pnode])
            seen[pnode] = self.find(pclass)
        # unions above may have merged other classes (and their parents) into this one
        self.classes[self.find(cid)].parents.extend(seen.items())

    # inspection -----------------------------------------------------------------

    def class_ids(self) -> list[int]:
        return sorted(self.classes)

    def nodes(self, cid: int) -> list[ENode]:
        return list(self.classes[self.find(cid)].nodes)

    def is_congruent(self) -> bool:
        """Every represented e-node hash-conses to its own class."""
        for cid, cls in self.classes.items():
            for n in cls.nodes:
                hit = self.hashcons.get(self.canonicalize(n))
                if hit is None or self.find(hit) != cid:
                    return False
        return True

    def represents(self, cid: int, t) -> bool:
        target = self.lookup_term(t)
        return target is not None and target == self.find(cid)

    # e-matching -----------------------------------------------------------------

    def ematch(self, m, cid: int, s: Subst | None = None) -> Iterator[Subst]:
        """Substitutions under which class ``cid`` represents ``m``."""
        return _compile(m)(self, self.find(cid), {} if s is None else s)

    def classes_with_op(self, op: str) -> list[int]:
        if self._op_index is None:
            idx: dict[str, list[int]] = {"U": [], "C": [], "P": []}
            for cid in sorted(self.classes):
                for o in self.classes[cid].by_op_keys():
                    idx[o].append(cid)
            self._op_index = idx
        return self._op_index[op]

    def candidate_classes(self, m) -> list[int]:
        """Classes whose root could match ``m``."""
        if isinstance(m, MLeaf) and isinstance(m.pattern, Pattern) and isinstance(m.filter, str):
            hit = self.hashcons.get(ENode("P", (m.pattern, m.filter), ()))
            return [] if hit is None else [self.find(hit)]
        op = {MUnion: "U", MCount: "C", MLeaf: "P"}.get(type(m))
        if op is None:
            return self.class_ids()
        return self.classes_with_op(op)

    def search(
        self, rule: RewriteRule, limit: int | None = None, deadline: float | None = None
    ) -> list[tuple[int, Subst]]:
        """Matches of ``rule`` anywhere in the graph (stops early past ``limit`` or ``deadline``)."""
        out = []
        fn = _compile(rule.lhs)
        for k, cid in enumerate(self.candidate_classes(rule.lhs)):
            for s in fn(self, cid, {}):
                if rule.applies(s):
                    out.append((cid, s))
                    if limit is not None and len(out) > limit:
                        return out
            if deadline is not None and time.monotonic() > deadline:
                break
        return out


# matchers compile to closures ``(egraph, class id, subst) -> iterator of substs``

_compiled: dict = {}


def _compile(m):
    fn = _compiled.get(m)
    if fn is None:
        fn = _compiled[m] = _build(m)
    return fn


def _build(m):
    if isinstance(m, QVar):
        name = m.name

        def var(eg, cid, s):
            bound = s.get(name)
            if bound is None:
                out = dict(s)
                out[name] = ClassRef(cid)
                yield out
            elif eg.find(bound.id) == cid:
                yield s

        return var
    if isinstance(m, MUnion):
        left, right = _compile(m.left), _compile(m.right)
        if isinstance(m.left, QVar) and isinstance(m.right, QVar) and m.left.name != m.right.name:
            ln, rn = m.left.name, m.right.name

            # the hot case (commutativity and the inner half of associativity), inlined
            def union_vars(eg, cid, s):
                find = eg.find
                lb, rb = s.get(ln), s.get(rn)
                for n in eg.classes[cid].by_op("U"):
                    a, b = find(n.children[0]), find(n.children[1])
                    if lb is not None and find(lb.id) != a or rb is not None and find(rb.id) != b:
                        continue
                    out = dict(s)
                    if lb is None:
                        out[ln] = ClassRef(a)
                    if rb is None:
                        out[rn] = ClassRef(b)
                    yield out

            return union_vars

        def union(eg, cid, s):
            find = eg.find
            for n in eg.classes[cid].by_op("U"):
                a, b = n.children
                for s1 in left(eg, find(a), s):
                    yield from right(eg, find(b), s1)

        return union
    if isinstance(m, MCount):
        pm, inner = m.path, _compile(m.inner)

        def count(eg, cid, s):
            for n in eg.classes[cid].by_op("C"):
                for s1 in match_path(pm, n.data, s):
                    yield from inner(eg, eg.find(n.children[0]), s1)

        return count
    if isinstance(m, MLeaf):
        pm, fm = m.pattern, m.filter

        def pattern(eg, cid, s):
            for n in eg.classes[cid].by_op("P"):
                pat, filt = n.data
                s1 = match_value(pm, pat, s)
                if s1 is not None:
                    s2 = match_value(fm, filt, s1)
                    if s2 is not None:
                        yield s2

        return pattern

    def concrete(eg, cid, s):
        # a concrete subterm inside a matcher
        target = eg.lookup_term(m)
        if target is not None and target == cid:
            yield s

    return concrete
