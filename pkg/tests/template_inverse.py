"""Test-only inverse of template rendering: text lines back to fragments."""
import re

from ontoparse.grammar import Cat, MrNode, Rule, Terminal
from ontoparse.ontology import NUMERIC

_OPS = {"<": Rule.COMPARATIVE_LT, "<=": Rule.COMPARATIVE_LE,
        ">": Rule.COMPARATIVE_GT, ">=": Rule.COMPARATIVE_GE}
_COUNT_OPS = {"<": Rule.COUNT_COMPARATIVE_LT, "<=": Rule.COUNT_COMPARATIVE_LE,
              ">": Rule.COUNT_COMPARATIVE_GT, ">=": Rule.COUNT_COMPARATIVE_GE}


def _reverse_lexicon(onto):
    table = {}
    for t in onto.entity_types:
        table[t.lexical] = ("type", t.id)
    for p in onto.binary_predicates:
        table[p.lexical] = ("binary", p.id)
    for p in onto.unary_predicates:
        table[p.lexical] = ("unary", p.id)
    for e in onto.entities:
        table[e.lexical] = ("entity", e.id)
    for p in onto.binary_predicates:
        for v in p.values:
            table[onto.lexicon[v]] = ("entity", v)
    return table


def _subject(display, table):
    m = re.fullmatch(r"Result_(\d+)", display)
    if m:
        return Terminal(Cat.COREF, refs=(int(m.group(1)),))
    m = re.fullmatch(r"Result_(\d+) (or|and) Result_(\d+)", display)
    if m:
        cat = Cat.UNION_COREF if m.group(2) == "or" else Cat.INTERSECTION_COREF
        return Terminal(cat, refs=(int(m.group(1)), int(m.group(3))))
    kind, ident = table[display]
    if kind == "type":
        return MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, ident),))
    return Terminal(Cat.ENTITY, ident)


def _value(display, pred, onto, table):
    m = re.fullmatch(r"Result_(\d+)", display)
    if m:
        return Terminal(Cat.COREF, refs=(int(m.group(1)),))
    if " or " in display and display not in table:
        parts = display.split(" or ")
        return Terminal(Cat.ENTITY, tuple(table[p][1] for p in parts))
    if pred is not None and pred.range == NUMERIC:
        text = display
        if pred.unit:
            suffix = pred.unit if len(pred.unit) == 1 else f" {pred.unit}"
            if text.endswith(suffix):
                text = text[: -len(suffix)]
        return Terminal(Cat.NUMBER, float(text))
    if display in table:
        return Terminal(Cat.ENTITY, table[display][1])
    return Terminal(Cat.NUMBER, float(display))


def _parse_clause(piece, prev_head):
    for head in ("which satisfies", "where", "with"):
        if piece.startswith(head + " "):
            return head, piece[len(head) + 1:]
    return prev_head, piece


def parse_template_seq(text, onto):
    table = _reverse_lexicon(onto)
    fragments = []
    for line in text.strip().splitlines():
        m = re.match(r"Result_(\d+) = (.*)$", line.strip())
        body = m.group(2)

        m2 = re.fullmatch(r"find all \[([^]]+)\]", body)
        if m2:
            kind, ident = table[m2.group(1)]
            fragments.append(MrNode(Rule.LOOKUP_KEY,
                                    (Terminal(Cat.ENTITY_TYPE, ident),)))
            continue
        m2 = re.fullmatch(r"count number of elements in \[([^]]+)\]", body)
        if m2:
            fragments.append(MrNode(Rule.COUNT, (_subject(m2.group(1), table),)))
            continue
        m2 = re.fullmatch(r"sum all elements in \[([^]]+)\]", body)
        if m2:
            fragments.append(MrNode(Rule.SUM, (_subject(m2.group(1), table),)))
            continue
        m2 = re.fullmatch(r"find \[([^]]+)\] of \[([^]]+)\]", body)
        if m2:
            fragments.append(MrNode(Rule.LOOKUP_VALUE, (
                _subject(m2.group(2), table),
                Terminal(Cat.BINARY_PRED, table[m2.group(1)][1]))))
            continue

        m2 = re.fullmatch(r"find \[([^]]+)\] (.*)", body)
        node = _subject(m2.group(1), table)
        prev_head = None
        for piece in m2.group(2).split(" and "):
            head, tail = _parse_clause(piece, prev_head)
            prev_head = head
            node = _apply_clause(node, head, tail, onto, table)
        fragments.append(node)
    return fragments


def _apply_clause(node, head, tail, onto, table):
    if head == "which satisfies":
        ident = table[re.fullmatch(r"\[([^]]+)\]", tail).group(1)][1]
        return MrNode(Rule.FILTER_ASSERTION, (node, Terminal(Cat.UNARY_PRED, ident)))
    if head == "where":
        m = re.fullmatch(r"\[([^]]+)\] (is not|is) \[([^]]+)\]", tail)
        pred = onto.binary(table[m.group(1)][1])
        value = _value(m.group(3), pred, onto, table)
        return MrNode(Rule.FILTER_PROPERTY,
                      (node, Terminal(Cat.BINARY_PRED, pred.id), value),
                      negated=m.group(2) == "is not")
    m = re.fullmatch(r"(smallest|largest) number of \[([^]]+)\]", tail)
    if m:
        rule = (Rule.COUNT_SUPERLATIVE_MIN if m.group(1) == "smallest"
                else Rule.COUNT_SUPERLATIVE_MAX)
        return MrNode(rule, (node, Terminal(Cat.BINARY_PRED, table[m.group(2)][1])))
    m = re.fullmatch(r"(smallest|largest) \[([^]]+)\]", tail)
    if m:
        rule = (Rule.SUPERLATIVE_MIN if m.group(1) == "smallest"
                else Rule.SUPERLATIVE_MAX)
        return MrNode(rule, (node, Terminal(Cat.BINARY_PRED, table[m.group(2)][1])))
    m = re.fullmatch(r"number of \[([^]]+)\] (<=|>=|<|>) \[([^]]+)\]", tail)
    if m:
        return MrNode(_COUNT_OPS[m.group(2)], (
            node, Terminal(Cat.BINARY_PRED, table[m.group(1)][1]),
            _value(m.group(3), None, onto, table)))
    m = re.fullmatch(r"\[([^]]+)\] (<=|>=|<|>) \[([^]]+)\]", tail)
    pred = onto.binary(table[m.group(1)][1])
    return MrNode(_OPS[m.group(2)], (
        node, Terminal(Cat.BINARY_PRED, pred.id), _value(m.group(3), pred, onto, table)))
