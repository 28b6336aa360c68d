"""Deterministic rendering of MR fragments into natural-language templates.

Each domain-general rule owns one fixed pattern; fills appear in brackets:

    Result_2 = find [Result_1] where [cuisine] is [Thai]

Fragments built from several rules collapse into a single template by
merging constraint clauses with "and"; a clause repeating the previous
clause's head word drops it, so two comparatives read
``with [distance] < [500m] and [price] > [50$]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .grammar import (
    COMPARATIVES, CONSTRAINT_RULES, COUNT_COMPARATIVES, Cat, GrammarError,
    MrNode, OP_OF, Rule, Terminal, format_number,
)
from .ontology import Ontology, lexicalize


class TemplateError(GrammarError):
    pass


# Fixed pattern per rule kind; $s, $p, $v mark the slots.
PATTERNS: Dict[Rule, str] = {
    Rule.LOOKUP_KEY: "find all $s",
    Rule.LOOKUP_VALUE: "find $p of $s",
    Rule.FILTER_PROPERTY: "find $s where $p is $v",
    Rule.FILTER_ASSERTION: "find $s which satisfies $p",
    Rule.COUNT: "count number of elements in $s",
    Rule.SUM: "sum all elements in $s",
    Rule.COMPARATIVE_LT: "find $s with $p < $v",
    Rule.COMPARATIVE_LE: "find $s with $p <= $v",
    Rule.COMPARATIVE_GT: "find $s with $p > $v",
    Rule.COMPARATIVE_GE: "find $s with $p >= $v",
    Rule.COUNT_COMPARATIVE_LT: "find $s with number of $p < $v",
    Rule.COUNT_COMPARATIVE_LE: "find $s with number of $p <= $v",
    Rule.COUNT_COMPARATIVE_GT: "find $s with number of $p > $v",
    Rule.COUNT_COMPARATIVE_GE: "find $s with number of $p >= $v",
    Rule.SUPERLATIVE_MIN: "find $s with smallest $p",
    Rule.SUPERLATIVE_MAX: "find $s with largest $p",
    Rule.COUNT_SUPERLATIVE_MIN: "find $s with smallest number of $p",
    Rule.COUNT_SUPERLATIVE_MAX: "find $s with largest number of $p",
}


@dataclass(frozen=True)
class Clause:
    head: str                 # "where" | "with" | "which satisfies"
    tail: str                 # bracketed fills joined with pattern words


@dataclass(frozen=True)
class Template:
    rule: Rule                # root rule of the fragment
    index: int                # result index this template defines
    kind: str                 # "find" | "value" | "count" | "sum"
    subject: str              # display text of $s (unbracketed)
    all_subject: bool = False  # bare LookupKey renders "find all [...]"
    clauses: Tuple[Clause, ...] = ()
    pred: str = ""            # $p display for value kinds

    def text(self) -> str:
        return f"Result_{self.index} = {self.body_text()}"

    def body_text(self) -> str:
        if self.kind == "value":
            return f"find [{self.pred}] of [{self.subject}]"
        if self.kind == "count":
            return f"count number of elements in [{self.subject}]"
        if self.kind == "sum":
            return f"sum all elements in [{self.subject}]"
        if not self.clauses:
            prefix = "all " if self.all_subject else ""
            return f"find {prefix}[{self.subject}]"
        parts = [f"find [{self.subject}]"]
        prev_head = None
        for clause in self.clauses:
            if prev_head is None:
                parts.append(f"{clause.head} {clause.tail}")
            elif clause.head == prev_head:
                parts.append(f"and {clause.tail}")
            else:
                parts.append(f"and {clause.head} {clause.tail}")
            prev_head = clause.head
        return " ".join(parts)

    def plain_text(self) -> str:
        """Template text without brackets or the ``Result_k =`` prefix."""
        return self.body_text().replace("[", "").replace("]", "")


@dataclass(frozen=True)
class TemplateSeq:
    templates: Tuple[Template, ...]
    provenance: Tuple[int, ...]   # template position -> fragment index

    def lines(self) -> List[str]:
        return [t.text() for t in self.templates]

    def text(self) -> str:
        return "\n".join(self.lines())


def _display_value(term: Terminal, pred, onto: Ontology) -> str:
    if term.category == Cat.NUMBER:
        number = format_number(term.value)
        unit = pred.unit if pred is not None else ""
        if not unit:
            return number
        return f"{number}{unit}" if len(unit) == 1 else f"{number} {unit}"
    if term.category == Cat.COREF:
        return f"Result_{term.refs[0]}"
    if isinstance(term.value, tuple):
        return " or ".join(lexicalize(onto, v) for v in term.value)
    return lexicalize(onto, term.value)


def _display_subject(child, onto: Ontology) -> str:
    if isinstance(child, Terminal):
        if child.category == Cat.COREF:
            return f"Result_{child.refs[0]}"
        if child.category == Cat.UNION_COREF:
            return f"Result_{child.refs[0]} or Result_{child.refs[1]}"
        if child.category == Cat.INTERSECTION_COREF:
            return f"Result_{child.refs[0]} and Result_{child.refs[1]}"
        if child.category == Cat.ENTITY:
            return lexicalize(onto, child.value)
        if child.category == Cat.ENTITY_TYPE:
            return lexicalize(onto, child.value)
    raise TemplateError(f"fragment nests a non-subject child: {child}")


def _clause_of(node: MrNode, onto: Ontology) -> Clause:
    rule = node.rule
    if rule == Rule.FILTER_PROPERTY:
        pred = onto.binary(node.children[1].value)
        verb = "is not" if node.negated else "is"
        value = _value_display(node.children[2], pred, onto)
        return Clause("where", f"[{lexicalize(onto, pred.id)}] {verb} [{value}]")
    if rule == Rule.FILTER_ASSERTION:
        return Clause("which satisfies",
                      f"[{lexicalize(onto, node.children[1].value)}]")
    pred = onto.binary(node.children[1].value)
    p = lexicalize(onto, pred.id)
    if rule in COMPARATIVES:
        value = _value_display(node.children[2], pred, onto)
        return Clause("with", f"[{p}] {OP_OF[rule]} [{value}]")
    if rule in COUNT_COMPARATIVES:
        value = _value_display(node.children[2], None, onto)
        return Clause("with", f"number of [{p}] {OP_OF[rule]} [{value}]")
    if rule == Rule.SUPERLATIVE_MIN:
        return Clause("with", f"smallest [{p}]")
    if rule == Rule.SUPERLATIVE_MAX:
        return Clause("with", f"largest [{p}]")
    if rule == Rule.COUNT_SUPERLATIVE_MIN:
        return Clause("with", f"smallest number of [{p}]")
    if rule == Rule.COUNT_SUPERLATIVE_MAX:
        return Clause("with", f"largest number of [{p}]")
    raise TemplateError(f"{rule.value} is not a constraint rule")


def _value_display(child, pred, onto: Ontology) -> str:
    if isinstance(child, Terminal):
        return _display_value(child, pred, onto)
    raise TemplateError("nested value arguments must be referenced, not inline")


def template_of(fragment: MrNode, index: int, onto: Ontology) -> Template:
    """The single canonical template of one fragment (1..3 rules)."""
    rule = fragment.rule
    if rule == Rule.COUNT:
        return Template(rule, index, "count",
                        _display_subject(fragment.children[0], onto))
    if rule == Rule.SUM:
        return Template(rule, index, "sum",
                        _display_subject(fragment.children[0], onto))
    if rule == Rule.LOOKUP_VALUE:
        src, pterm = fragment.children
        return Template(rule, index, "value", _display_subject(src, onto),
                        pred=lexicalize(onto, pterm.value))
    if rule == Rule.LOOKUP_KEY:
        return Template(rule, index, "find",
                        lexicalize(onto, fragment.children[0].value),
                        all_subject=True)
    if rule in CONSTRAINT_RULES:
        clauses: List[Clause] = []
        node = fragment
        while isinstance(node, MrNode) and node.rule in CONSTRAINT_RULES:
            clauses.append(_clause_of(node, onto))
            node = node.children[0]
        clauses.reverse()
        if isinstance(node, MrNode):
            if node.rule != Rule.LOOKUP_KEY:
                raise TemplateError(
                    f"{node.rule.value} cannot sit under a constraint chain "
                    f"inside one fragment")
            subject = lexicalize(onto, node.children[0].value)
        else:
            subject = _display_subject(node, onto)
        return Template(fragment.rule, index, "find", subject,
                        clauses=tuple(clauses))
    raise TemplateError(f"no template for rule {rule.value}")


def render(fragments: Sequence[MrNode], onto: Ontology) -> TemplateSeq:
    """One instantiated template per fragment, in result-index order."""
    templates = tuple(template_of(frag, i, onto)
                      for i, frag in enumerate(fragments, start=1))
    return TemplateSeq(templates, tuple(range(1, len(fragments) + 1)))


def render_tree(tree: MrNode, onto: Ontology) -> TemplateSeq:
    """Decompose a closed tree the way its serialization does (one fragment
    per rule application) and render the template sequence."""
    fragments: List[MrNode] = []

    def emit(node: MrNode) -> Terminal:
        children = []
        for child in node.children:
            if isinstance(child, MrNode):
                children.append(emit(child))
            else:
                children.append(child)
        fragments.append(MrNode(node.rule, tuple(children), negated=node.negated))
        return Terminal(Cat.COREF, refs=(len(fragments),))

    emit(tree)
    return render(fragments, onto)


def merge_templates(a: Template, b: Template) -> Template:
    """Fold template b into a: b constrains a's result.

    Requires b's subject to reference a's index and both to be
    constraint-style ``find`` templates; duplicate clauses collapse.
    """
    if b.kind != "find" or not b.clauses:
        raise TemplateError(f"{b.rule.value} template cannot be merged")
    if a.kind != "find":
        raise TemplateError(f"{a.rule.value} template cannot absorb constraints")
    if b.subject != f"Result_{a.index}":
        raise TemplateError(
            f"template {b.index} does not reference Result_{a.index}")
    merged: List[Clause] = list(a.clauses)
    for clause in b.clauses:
        if clause not in merged:
            merged.append(clause)
    return Template(b.rule, a.index, "find", a.subject,
                    all_subject=False, clauses=tuple(merged))
