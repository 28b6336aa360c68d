"""Meaning-representation trees: rule inventory, type system, and text syntax.

A meaning representation (MR) is a tree whose internal nodes are
domain-general rules and whose leaves are terminal variables (entity types,
predicates, entities, numbers, or co-referential variables).  This module
owns:

  * the closed inventory of 18 domain-general rules plus the internal
    set-union/set-intersection nodes that co-reference inlining introduces,
  * the slot type system used for validation, generation and decoding,
  * the canonical textual syntax, e.g.
    ``Result_2=(filter (Result_1) (rel.cuisine) = (cuisine.thai))``.

The text syntax prefixes entity types with ``type.`` and predicates with
``rel.``; entity and categorical-value ids appear verbatim; numbers appear as
``(num 500)``.  ``serialize_mr`` emits one ``Result_k=`` line per rule
application, with indices assigned densely in bottom-up (post-order) order;
``parse_mr`` is its inverse.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple, Union

from .ontology import (
    CATEGORICAL, ENTITY_REF, NUMERIC, SET_OF_CATEGORICAL,
    BinaryPredicate, Ontology,
)


class GrammarError(Exception):
    pass


class TypeMismatch(GrammarError):
    """A child does not fit its slot; message names the slot and both types."""


class MrSyntaxError(GrammarError):
    def __init__(self, message: str, position: int = -1):
        super().__init__(message if position < 0 else f"{message} (at token {position})")
        self.position = position


class DanglingIndex(GrammarError):
    """A co-referential variable points at a result index that does not exist."""


class Rule(Enum):
    LOOKUP_KEY = "LookupKey"
    LOOKUP_VALUE = "LookupValue"
    FILTER_PROPERTY = "Filter(property)"
    FILTER_ASSERTION = "Filter(assertion)"
    COUNT = "Count"
    SUM = "Sum"
    COMPARATIVE_LT = "Comparative(<)"
    COMPARATIVE_LE = "Comparative(<=)"
    COMPARATIVE_GT = "Comparative(>)"
    COMPARATIVE_GE = "Comparative(>=)"
    COUNT_COMPARATIVE_LT = "CountComparative(<)"
    COUNT_COMPARATIVE_LE = "CountComparative(<=)"
    COUNT_COMPARATIVE_GT = "CountComparative(>)"
    COUNT_COMPARATIVE_GE = "CountComparative(>=)"
    SUPERLATIVE_MIN = "Superlative(min)"
    SUPERLATIVE_MAX = "Superlative(max)"
    COUNT_SUPERLATIVE_MIN = "CountSuperlative(min)"
    COUNT_SUPERLATIVE_MAX = "CountSuperlative(max)"
    # Internal set operators produced by inlining Union_coref/Intersection_coref.
    # They are not domain-general rules and never appear as NT actions.
    UNION = "Union"
    INTERSECTION = "Intersection"

    @property
    def internal(self) -> bool:
        return self in (Rule.UNION, Rule.INTERSECTION)


DOMAIN_GENERAL: Tuple[Rule, ...] = tuple(r for r in Rule if not r.internal)

COMPARATIVES = (Rule.COMPARATIVE_LT, Rule.COMPARATIVE_LE,
                Rule.COMPARATIVE_GT, Rule.COMPARATIVE_GE)
COUNT_COMPARATIVES = (Rule.COUNT_COMPARATIVE_LT, Rule.COUNT_COMPARATIVE_LE,
                      Rule.COUNT_COMPARATIVE_GT, Rule.COUNT_COMPARATIVE_GE)
SUPERLATIVES = (Rule.SUPERLATIVE_MIN, Rule.SUPERLATIVE_MAX)
COUNT_SUPERLATIVES = (Rule.COUNT_SUPERLATIVE_MIN, Rule.COUNT_SUPERLATIVE_MAX)

# Rules that map an entity set to a subset of it.
CONSTRAINT_RULES = ((Rule.FILTER_PROPERTY, Rule.FILTER_ASSERTION)
                    + COMPARATIVES + COUNT_COMPARATIVES
                    + SUPERLATIVES + COUNT_SUPERLATIVES)

OP_OF = {
    Rule.COMPARATIVE_LT: "<", Rule.COMPARATIVE_LE: "<=",
    Rule.COMPARATIVE_GT: ">", Rule.COMPARATIVE_GE: ">=",
    Rule.COUNT_COMPARATIVE_LT: "<", Rule.COUNT_COMPARATIVE_LE: "<=",
    Rule.COUNT_COMPARATIVE_GT: ">", Rule.COUNT_COMPARATIVE_GE: ">=",
}


class Cat(Enum):
    """Terminal variable categories.

    ``ENTITY_TYPE`` and ``ENTITY`` share the surface spelling ``Entity``;
    they are disambiguated by the slot they fill.
    """
    ENTITY_TYPE = "Entity_type"
    BINARY_PRED = "Binary_predicate"
    UNARY_PRED = "Unary_predicate"
    ENTITY = "Entity"
    NUMBER = "Number"
    COREF = "Coref"
    UNION_COREF = "Union_coref"
    INTERSECTION_COREF = "Intersection_coref"


COREF_CATS = (Cat.COREF, Cat.UNION_COREF, Cat.INTERSECTION_COREF)
VALUE_CATS = (Cat.ENTITY_TYPE, Cat.BINARY_PRED, Cat.UNARY_PRED,
              Cat.ENTITY, Cat.NUMBER)

CAT_SPELLING = {
    Cat.ENTITY_TYPE: "Entity",
    Cat.BINARY_PRED: "Binary_predicate",
    Cat.UNARY_PRED: "Unary_predicate",
    Cat.ENTITY: "Entity",
    Cat.NUMBER: "Number",
    Cat.COREF: "Coref",
    Cat.UNION_COREF: "Union_coref",
    Cat.INTERSECTION_COREF: "Intersection_coref",
}


@dataclass(frozen=True)
class Terminal:
    category: Cat
    # Bound value: an ontology id, a number, or a tuple of ids (value
    # disjunction).  None while the value is still to be predicted.
    value: Union[str, float, Tuple[str, ...], None] = None
    # Antecedent result indices for co-referential categories.
    refs: Tuple[int, ...] = ()


@dataclass(frozen=True)
class MrNode:
    rule: Rule
    children: Tuple[Union["MrNode", Terminal], ...]
    negated: bool = False   # Filter(property) "is not" mode

    def __post_init__(self):
        if len(self.children) != ARITY[self.rule]:
            raise GrammarError(
                f"{self.rule.value} takes {ARITY[self.rule]} children, "
                f"got {len(self.children)}")


Child = Union[MrNode, Terminal]


@dataclass(frozen=True)
class MrType:
    kind: str                        # "entity-set" | "number" | "value" | "boolean"
    elem: Optional[str] = None       # element entity type for entity sets
    value_kind: Optional[str] = None  # range kind for values
    plural: bool = False             # True when the value is a set of values

    def __str__(self):
        if self.kind == "entity-set":
            return f"entity-set({self.elem})"
        if self.kind == "value":
            return f"value({self.value_kind}{', set' if self.plural else ''})"
        return self.kind


def entity_set(elem: str) -> MrType:
    return MrType("entity-set", elem=elem)


# Slot kinds, in lambda binding order (s, then p, then v).
SLOTS: Dict[Rule, Tuple[str, ...]] = {
    Rule.LOOKUP_KEY: ("type",),
    Rule.LOOKUP_VALUE: ("src", "pred_any"),
    Rule.FILTER_PROPERTY: ("set", "pred_any", "val_match"),
    Rule.FILTER_ASSERTION: ("set", "upred"),
    Rule.COUNT: ("set",),
    Rule.SUM: ("numvalues",),
    Rule.UNION: ("set", "set"),
    Rule.INTERSECTION: ("set", "set"),
}
for _r in COMPARATIVES:
    SLOTS[_r] = ("set", "pred_numeric", "numval")
for _r in COUNT_COMPARATIVES:
    SLOTS[_r] = ("set", "pred_setcat", "countval")
for _r in SUPERLATIVES:
    SLOTS[_r] = ("set", "pred_numeric")
for _r in COUNT_SUPERLATIVES:
    SLOTS[_r] = ("set", "pred_setcat")

ARITY = {rule: len(slots) for rule, slots in SLOTS.items()}

RETURN_KIND: Dict[Rule, str] = {rule: "entity-set" for rule in Rule}
RETURN_KIND[Rule.COUNT] = "number"
RETURN_KIND[Rule.SUM] = "number"
RETURN_KIND[Rule.LOOKUP_VALUE] = "value"

SLOT_NAMES = ("s", "p", "v")


def _mismatch(rule: Rule, index: int, expected: str, actual) -> TypeMismatch:
    return TypeMismatch(
        f"{rule.value} slot {SLOT_NAMES[index]}: expected {expected}, got {actual}")


# ---------------------------------------------------------------------------
# ontology-derived inventories


def usable_binary_preds(onto: Ontology) -> List[BinaryPredicate]:
    """Binary predicates whose value slot can actually be filled."""
    out = []
    for pred in onto.binary_predicates:
        if pred.range == NUMERIC:
            out.append(pred)
        elif pred.range in (CATEGORICAL, SET_OF_CATEGORICAL):
            if pred.values:
                out.append(pred)
        elif pred.range == ENTITY_REF:
            if onto.entities_of(pred.target):
                out.append(pred)
    return out


def preds_for(onto: Ontology, elem: str, slot_kind: str) -> List[BinaryPredicate]:
    """Binary predicates legal in a predicate slot, given the subject's type."""
    pool = [p for p in usable_binary_preds(onto) if p.domain == elem]
    if slot_kind == "pred_numeric":
        return [p for p in pool if p.range == NUMERIC]
    if slot_kind == "pred_setcat":
        return [p for p in pool if p.range == SET_OF_CATEGORICAL]
    return pool


def admissible_elems(rule: Rule, onto: Ontology) -> frozenset:
    """Element types for which a set-returning rule can be completed."""
    all_types = frozenset(t.id for t in onto.entity_types)
    if rule in (Rule.LOOKUP_KEY, Rule.UNION, Rule.INTERSECTION):
        return all_types
    slots = SLOTS[rule]
    if "pred_numeric" in slots:
        return frozenset(t for t in all_types if preds_for(onto, t, "pred_numeric"))
    if "pred_setcat" in slots:
        return frozenset(t for t in all_types if preds_for(onto, t, "pred_setcat"))
    if rule == Rule.FILTER_PROPERTY:
        return frozenset(t for t in all_types if preds_for(onto, t, "pred_any"))
    if rule == Rule.FILTER_ASSERTION:
        return frozenset(t for t in all_types if onto.unary_preds_of(t))
    return all_types


def value_source_elems(onto: Ontology, kind: Optional[str]) -> frozenset:
    """Entity types that own a usable predicate of the given range kind."""
    out = set()
    for pred in usable_binary_preds(onto):
        if kind is None or pred.range == kind:
            out.add(pred.domain)
    return frozenset(out)


# ---------------------------------------------------------------------------
# type checking


def type_of(node: MrNode, onto: Ontology,
            antecedents: Optional[Mapping[int, MrType]] = None) -> MrType:
    """Type of a structurally complete MR tree.

    ``antecedents`` maps result indices to the types of earlier fragments;
    it is required when the tree contains co-referential terminals.
    """
    return _type_node(node, onto, antecedents or {})


def _coref_type(term: Terminal, onto: Ontology,
                antecedents: Mapping[int, MrType]) -> MrType:
    for ref in term.refs:
        if ref not in antecedents:
            raise DanglingIndex(f"co-reference to unknown Result_{ref}")
    if term.category == Cat.COREF:
        return antecedents[term.refs[0]]
    if len(term.refs) != 2:
        raise TypeMismatch(f"{term.category.value} needs 2 antecedents")
    a, b = (antecedents[r] for r in term.refs)
    if a.kind != "entity-set" or b.kind != "entity-set" or a.elem != b.elem:
        raise TypeMismatch(
            f"{term.category.value} antecedents must be entity sets of one "
            f"type, got {a} and {b}")
    return a


def _set_elem(child: Child, rule: Rule, index: int, onto: Ontology,
              antecedents: Mapping[int, MrType]) -> str:
    if isinstance(child, Terminal):
        if child.category not in COREF_CATS:
            raise _mismatch(rule, index, "an entity set", child.category.value)
        t = _coref_type(child, onto, antecedents)
        if t.kind != "entity-set":
            raise _mismatch(rule, index, "an entity set", t)
        return t.elem
    t = _type_node(child, onto, antecedents)
    if t.kind != "entity-set":
        raise _mismatch(rule, index, "an entity set", t)
    return t.elem


def _check_value_child(child: Child, pred: Optional[BinaryPredicate], kind: str,
                       rule: Rule, index: int, onto: Ontology,
                       antecedents: Mapping[int, MrType], plural_ok: bool = False):
    """Validate a v-position child against a required value kind."""
    expected = f"a {kind} value"
    if isinstance(child, Terminal):
        if child.category == Cat.NUMBER:
            if kind != NUMERIC:
                raise _mismatch(rule, index, expected, "a number")
            if not isinstance(child.value, (int, float)):
                raise _mismatch(rule, index, "a numeric literal", child.value)
            return
        if child.category == Cat.ENTITY:
            values = child.value if isinstance(child.value, tuple) else (child.value,)
            for v in values:
                if kind in (CATEGORICAL, SET_OF_CATEGORICAL):
                    if pred is None or v not in pred.values:
                        raise _mismatch(rule, index,
                                        f"a declared value of {pred.id if pred else '?'}", v)
                elif kind == ENTITY_REF:
                    const = onto.entity(v)
                    if pred is not None and const.type != pred.target:
                        raise _mismatch(rule, index,
                                        f"an entity of type {pred.target}", v)
                else:
                    raise _mismatch(rule, index, expected, f"entity {v}")
            return
        if child.category == Cat.COREF:
            t = _coref_type(child, onto, antecedents)
        else:
            raise _mismatch(rule, index, expected, child.category.value)
    else:
        t = _type_node(child, onto, antecedents)
    if t.kind != "value" or t.value_kind != kind:
        raise _mismatch(rule, index, expected, t)
    if t.plural and not plural_ok:
        raise _mismatch(rule, index, "a single value", t)


def _type_node(node: MrNode, onto: Ontology,
               antecedents: Mapping[int, MrType]) -> MrType:
    rule = node.rule
    slots = SLOTS[rule]

    if rule == Rule.LOOKUP_KEY:
        term = node.children[0]
        if not isinstance(term, Terminal) or term.category != Cat.ENTITY_TYPE:
            raise _mismatch(rule, 0, "an entity type", term)
        onto.entity_type(term.value)
        return entity_set(term.value)

    if rule == Rule.LOOKUP_VALUE:
        src, pterm = node.children
        plural = False
        if isinstance(src, Terminal) and src.category == Cat.ENTITY:
            elem = onto.entity(src.value).type
        else:
            elem = _set_elem(src, rule, 0, onto, antecedents)
            plural = True
        if not isinstance(pterm, Terminal) or pterm.category != Cat.BINARY_PRED:
            raise _mismatch(rule, 1, "a binary predicate", pterm)
        pred = onto.binary(pterm.value)
        if pred.domain != elem:
            raise _mismatch(rule, 1, f"a predicate of {elem}", pred.id)
        return MrType("value", value_kind=pred.range, plural=plural)

    if rule in (Rule.UNION, Rule.INTERSECTION):
        a = _set_elem(node.children[0], rule, 0, onto, antecedents)
        b = _set_elem(node.children[1], rule, 1, onto, antecedents)
        if a != b:
            raise TypeMismatch(
                f"{rule.value}: operand element types differ ({a} vs {b})")
        return entity_set(a)

    if rule == Rule.COUNT:
        _set_elem(node.children[0], rule, 0, onto, antecedents)
        return MrType("number")

    if rule == Rule.SUM:
        child = node.children[0]
        if isinstance(child, Terminal) and child.category == Cat.NUMBER:
            raise _mismatch(rule, 0, "a collection of numeric values",
                            "a number literal")
        _check_value_child(child, None, NUMERIC, rule, 0, onto,
                           antecedents, plural_ok=True)
        return MrType("number")

    # Remaining rules: constraint rules over a subject set.
    elem = _set_elem(node.children[0], rule, 0, onto, antecedents)

    if rule == Rule.FILTER_ASSERTION:
        term = node.children[1]
        if not isinstance(term, Terminal) or term.category != Cat.UNARY_PRED:
            raise _mismatch(rule, 1, "a unary predicate", term)
        pred = onto.unary(term.value)
        if pred.domain != elem:
            raise _mismatch(rule, 1, f"an assertion on {elem}", pred.id)
        return entity_set(elem)

    pterm = node.children[1]
    if not isinstance(pterm, Terminal) or pterm.category != Cat.BINARY_PRED:
        raise _mismatch(rule, 1, "a binary predicate", pterm)
    pred = onto.binary(pterm.value)
    if pred.domain != elem:
        raise _mismatch(rule, 1, f"a predicate of {elem}", pred.id)
    if slots[1] == "pred_numeric" and pred.range != NUMERIC:
        raise _mismatch(rule, 1, "a numeric predicate", pred.id)
    if slots[1] == "pred_setcat" and pred.range != SET_OF_CATEGORICAL:
        raise _mismatch(rule, 1, "a set-valued predicate", pred.id)

    if rule == Rule.FILTER_PROPERTY:
        _check_value_child(node.children[2], pred, pred.range, rule, 2, onto,
                           antecedents, plural_ok=(pred.range == SET_OF_CATEGORICAL))
    elif len(slots) == 3:  # comparatives and count-comparatives
        _check_value_child(node.children[2], None, NUMERIC, rule, 2, onto,
                           antecedents)
    return entity_set(elem)


# ---------------------------------------------------------------------------
# serialization


def format_number(x) -> str:
    f = float(x)
    return str(int(f)) if f == int(f) else str(f)


def _atom(term: Terminal, onto: Optional[Ontology] = None) -> str:
    if term.category == Cat.ENTITY_TYPE:
        return f"(type.{term.value})"
    if term.category in (Cat.BINARY_PRED, Cat.UNARY_PRED):
        return f"(rel.{term.value})"
    if term.category == Cat.ENTITY:
        if isinstance(term.value, tuple):
            return "(or " + " ".join(f"({v})" for v in term.value) + ")"
        return f"({term.value})"
    if term.category == Cat.NUMBER:
        return f"(num {format_number(term.value)})"
    if term.category == Cat.COREF:
        return f"(Result_{term.refs[0]})"
    if term.category == Cat.UNION_COREF:
        return f"(union (Result_{term.refs[0]}) (Result_{term.refs[1]}))"
    if term.category == Cat.INTERSECTION_COREF:
        return f"(intersection (Result_{term.refs[0]}) (Result_{term.refs[1]}))"
    raise GrammarError(f"unbound terminal {term}")


def _expr(node: MrNode, render_child) -> str:
    rule = node.rule
    ch = [render_child(c) if isinstance(c, MrNode) else _atom(c)
          for c in node.children]
    if rule == Rule.LOOKUP_KEY:
        return f"(lookupKey {ch[0]})"
    if rule == Rule.LOOKUP_VALUE:
        return f"(lookupValue {ch[0]} {ch[1]})"
    if rule == Rule.FILTER_PROPERTY:
        op = "!=" if node.negated else "="
        return f"(filter {ch[0]} {ch[1]} {op} {ch[2]})"
    if rule == Rule.FILTER_ASSERTION:
        return f"(filter {ch[0]} {ch[1]} = true)"
    if rule == Rule.COUNT:
        return f"(size {ch[0]})"
    if rule == Rule.SUM:
        return f"(sum {ch[0]})"
    if rule in COMPARATIVES:
        return f"(filter {ch[0]} {ch[1]} {OP_OF[rule]} {ch[2]})"
    if rule in COUNT_COMPARATIVES:
        return f"({ch[0]} (size {ch[1]}) {OP_OF[rule]} {ch[2]})"
    if rule == Rule.SUPERLATIVE_MIN:
        return f"({ch[0]} argmin {ch[1]})"
    if rule == Rule.SUPERLATIVE_MAX:
        return f"({ch[0]} argmax {ch[1]})"
    if rule == Rule.COUNT_SUPERLATIVE_MIN:
        return f"({ch[0]} argmin (size {ch[1]}))"
    if rule == Rule.COUNT_SUPERLATIVE_MAX:
        return f"({ch[0]} argmax (size {ch[1]}))"
    if rule == Rule.UNION:
        return f"(union {ch[0]} {ch[1]})"
    if rule == Rule.INTERSECTION:
        return f"(intersection {ch[0]} {ch[1]})"
    raise GrammarError(f"cannot serialize rule {rule}")


def serialize_mr(root: MrNode) -> str:
    """Decomposed textual form: one indexed ``Result`` line per rule node."""
    lines: List[str] = []

    def emit(node: MrNode) -> str:
        body = _expr(node, emit)
        lines.append(f"Result_{len(lines) + 1}={body}")
        return f"(Result_{len(lines)})"

    emit(root)
    return "\n".join(lines)


def serialize_turn(node: MrNode, index: int) -> str:
    """Single-line form used for session turns; nested rules stay inline."""
    return f"Result_{index}={_expr(node, lambda n: _expr(n, _inline_render))}"


def _inline_render(node: MrNode) -> str:
    return _expr(node, _inline_render)


def mr_expression(node: MrNode) -> str:
    """Bare nested expression with no ``Result_k=`` prefix."""
    return _inline_render(node)


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _tokens(text: str) -> List[str]:
    return _TOKEN.findall(text)


class _Parser:
    def __init__(self, tokens: List[str], onto: Ontology,
                 env: Dict[int, MrNode]):
        self.toks = tokens
        self.pos = 0
        self.onto = onto
        self.env = env

    def peek(self) -> Optional[str]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise MrSyntaxError("unexpected end of input", self.pos)
        self.pos += 1
        return tok

    def expect(self, tok: str):
        got = self.next()
        if got != tok:
            raise MrSyntaxError(f"expected {tok!r}, got {got!r}", self.pos - 1)

    def group(self) -> Child:
        self.expect("(")
        head = self.peek()
        if head == "(":
            child = self._combination()
        else:
            child = self._headed()
        self.expect(")")
        return child

    def _headed(self) -> Child:
        head = self.next()
        if head == "lookupKey":
            return MrNode(Rule.LOOKUP_KEY, (self.group(),))
        if head == "lookupValue":
            return MrNode(Rule.LOOKUP_VALUE, (self.group(), self.group()))
        if head == "filter":
            s = self.group()
            p = self.group()
            op = self.next()
            if self.peek() == "true":
                self.next()
                if op != "=":
                    raise MrSyntaxError(f"assertion filter must use '=', got {op!r}",
                                        self.pos - 1)
                return MrNode(Rule.FILTER_ASSERTION, (s, self._as_unary(p)))
            v = self.group()
            if op in ("=", "!="):
                return MrNode(Rule.FILTER_PROPERTY, (s, p, v), negated=op == "!=")
            try:
                rule = {"<": Rule.COMPARATIVE_LT, "<=": Rule.COMPARATIVE_LE,
                        ">": Rule.COMPARATIVE_GT, ">=": Rule.COMPARATIVE_GE}[op]
            except KeyError:
                raise MrSyntaxError(f"unknown comparison operator {op!r}", self.pos - 1)
            return MrNode(rule, (s, p, v))
        if head == "size":
            return MrNode(Rule.COUNT, (self.group(),))
        if head == "sum":
            return MrNode(Rule.SUM, (self.group(),))
        if head in ("union", "intersection"):
            a, b = self.group(), self.group()
            rule = Rule.UNION if head == "union" else Rule.INTERSECTION
            if (isinstance(a, Terminal) and a.category == Cat.COREF
                    and isinstance(b, Terminal) and b.category == Cat.COREF):
                cat = Cat.UNION_COREF if head == "union" else Cat.INTERSECTION_COREF
                return Terminal(cat, refs=(a.refs[0], b.refs[0]))
            return MrNode(rule, (a, b))
        if head == "num":
            return Terminal(Cat.NUMBER, float(self.next()))
        if head == "or":
            values = []
            while self.peek() == "(":
                part = self.group()
                if not (isinstance(part, Terminal) and part.category == Cat.ENTITY):
                    raise MrSyntaxError("disjunction over non-atomic value", self.pos)
                values.append(part.value)
            return Terminal(Cat.ENTITY, tuple(values))
        return self._atom_token(head)

    def _combination(self) -> MrNode:
        s = self.group()
        tok = self.next()
        if tok in ("argmin", "argmax"):
            self.expect("(")
            if self.peek() == "size":
                self.next()
                p = self.group()
                self.expect(")")
                rule = (Rule.COUNT_SUPERLATIVE_MIN if tok == "argmin"
                        else Rule.COUNT_SUPERLATIVE_MAX)
                return MrNode(rule, (s, p))
            inner = self._headed()
            self.expect(")")
            rule = Rule.SUPERLATIVE_MIN if tok == "argmin" else Rule.SUPERLATIVE_MAX
            return MrNode(rule, (s, inner))
        if tok == "(":
            self.expect("size")
            p = self.group()
            self.expect(")")
            op = self.next()
            v = self.group()
            try:
                rule = {"<": Rule.COUNT_COMPARATIVE_LT, "<=": Rule.COUNT_COMPARATIVE_LE,
                        ">": Rule.COUNT_COMPARATIVE_GT, ">=": Rule.COUNT_COMPARATIVE_GE}[op]
            except KeyError:
                raise MrSyntaxError(f"unknown comparison operator {op!r}", self.pos - 1)
            return MrNode(rule, (s, p, v))
        raise MrSyntaxError(f"unexpected token {tok!r} after subject group", self.pos - 1)

    def _atom_token(self, token: str) -> Child:
        m = re.fullmatch(r"Result_(\d+)", token)
        if m:
            index = int(m.group(1))
            if index in self.env:
                return self.env[index]
            return Terminal(Cat.COREF, refs=(index,))
        if token.startswith("type."):
            return Terminal(Cat.ENTITY_TYPE, token[len("type."):])
        if token.startswith("rel."):
            pred_id = token[len("rel."):]
            try:
                self.onto.binary(pred_id)
                return Terminal(Cat.BINARY_PRED, pred_id)
            except KeyError:
                self.onto.unary(pred_id)  # raises UnknownId if absent
                return Terminal(Cat.UNARY_PRED, pred_id)
        return Terminal(Cat.ENTITY, token)

    @staticmethod
    def _as_unary(child: Child) -> Terminal:
        if isinstance(child, Terminal) and child.category in (Cat.BINARY_PRED,
                                                              Cat.UNARY_PRED):
            return Terminal(Cat.UNARY_PRED, child.value)
        raise MrSyntaxError("assertion filter needs a unary predicate")


def parse_mr(text: str, onto: Ontology,
             antecedent_types: Optional[Mapping[int, MrType]] = None) -> MrNode:
    """Parse MR text back into a tree; inverse of :func:`serialize_mr`.

    ``Result_k`` references resolve against earlier lines of the same text;
    references to indices outside the text become co-referential terminals
    (legal only when ``antecedent_types`` covers them).
    """
    env: Dict[int, MrNode] = {}
    last: Optional[MrNode] = None
    for raw in text.strip().splitlines():
        line = raw.strip()
        if not line:
            continue
        m = re.match(r"Result_(\d+)\s*=\s*(.+)$", line)
        index = None
        body = line
        if m:
            index = int(m.group(1))
            body = m.group(2)
        parser = _Parser(_tokens(body), onto, env)
        node = parser.group()
        if parser.peek() is not None:
            raise MrSyntaxError(f"trailing tokens after expression", parser.pos)
        if not isinstance(node, MrNode):
            raise MrSyntaxError("expression is a bare terminal, not a rule application")
        if index is not None:
            env[index] = node
        last = node
    if last is None:
        raise MrSyntaxError("no expression found")
    type_of(last, onto, antecedent_types)
    return last


def parse_turn(line: str, onto: Ontology,
               antecedent_types: Optional[Mapping[int, MrType]] = None) -> MrNode:
    """Parse one session-turn line; external references stay co-referential."""
    return parse_mr(line, onto, antecedent_types)


# ---------------------------------------------------------------------------
# co-reference inlining


def inline_corefs(root: MrNode, antecedents: Mapping[int, MrNode]) -> MrNode:
    """Replace co-referential terminals with their antecedent trees.

    Union/intersection variables become explicit set-operation nodes over
    the two antecedent subtrees.  The result is a closed tree.
    """
    def resolve(index: int) -> MrNode:
        if index not in antecedents:
            raise DanglingIndex(f"no antecedent for Result_{index}")
        return inline_corefs(antecedents[index], antecedents)

    def walk(child: Child) -> Child:
        if isinstance(child, Terminal):
            if child.category == Cat.COREF:
                return resolve(child.refs[0])
            if child.category == Cat.UNION_COREF:
                return MrNode(Rule.UNION, (resolve(child.refs[0]),
                                           resolve(child.refs[1])))
            if child.category == Cat.INTERSECTION_COREF:
                return MrNode(Rule.INTERSECTION, (resolve(child.refs[0]),
                                                  resolve(child.refs[1])))
            return child
        return MrNode(child.rule, tuple(walk(c) for c in child.children),
                      negated=child.negated)

    return walk(root)


def has_corefs(node: Child) -> bool:
    if isinstance(node, Terminal):
        return node.category in COREF_CATS
    return any(has_corefs(c) for c in node.children)


def iter_terminals(node: Child):
    if isinstance(node, Terminal):
        yield node
        return
    for child in node.children:
        yield from iter_terminals(child)


def iter_nodes(node: Child):
    if isinstance(node, MrNode):
        yield node
        for child in node.children:
            yield from iter_nodes(child)


def tree_depth(node: Child) -> int:
    if isinstance(node, Terminal):
        return 0
    return 1 + max(tree_depth(c) for c in node.children)
