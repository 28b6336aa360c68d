"""Denotation semantics for closed meaning representations.

Executes MR trees against the ontology's seed database with naive row scans
(tables are desk-scale).  The same functions back generation-time validity
checks and denotation-level evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, FrozenSet, Union

from .grammar import (
    COMPARATIVES, COUNT_COMPARATIVES, COUNT_SUPERLATIVES, SUPERLATIVES,
    Cat, MrNode, Rule, Terminal, format_number, has_corefs,
)
from .ontology import NUMERIC, SET_OF_CATEGORICAL, Ontology


class ExecutionError(Exception):
    pass


@dataclass(frozen=True)
class Denotation:
    """Kind-tagged execution result.

    kind "entities" carries a frozenset of row ids, "number" a float,
    "value" a scalar, "values" a frozenset of scalars.
    """
    kind: str
    payload: Union[FrozenSet, float, str, bool]

    def __str__(self):
        if self.kind in ("entities", "values"):
            inner = ", ".join(_scalar_text(v) for v in sorted(self.payload, key=str))
            return f"{self.kind}{{{inner}}}"
        if self.kind == "number":
            return f"number {format_number(self.payload)}"
        return f"value {_scalar_text(self.payload)}"


def _scalar_text(v) -> str:
    return format_number(v) if isinstance(v, (int, float)) else str(v)


def entities(ids) -> Denotation:
    return Denotation("entities", frozenset(ids))


def number(x) -> Denotation:
    return Denotation("number", float(x))


def denotation_equal(a: Denotation, b: Denotation) -> bool:
    if a.kind != b.kind:
        return False
    return a.payload == b.payload


_OPS = {
    "<": lambda x, y: x < y,
    "<=": lambda x, y: x <= y,
    ">": lambda x, y: x > y,
    ">=": lambda x, y: x >= y,
}


def _cell(onto: Ontology, elem: str, row_id: str, pred_id: str) -> Any:
    value = onto.rows(elem).get(row_id, {}).get(pred_id)
    if value is None:
        raise ExecutionError(f"missing cell: {row_id} has no {pred_id}")
    return value


def _numeric_cell(onto: Ontology, elem: str, row_id: str, pred_id: str) -> float:
    value = _cell(onto, elem, row_id, pred_id)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ExecutionError(f"comparator on non-numeric value: "
                             f"{row_id}.{pred_id} = {value!r}")
    return float(value)


def _unwrap_scalar(den: Denotation, context: str):
    """Scalar from a value denotation; singleton value sets unwrap."""
    if den.kind == "value":
        return den.payload
    if den.kind == "values":
        if len(den.payload) == 1:
            return next(iter(den.payload))
        raise ExecutionError(f"{context}: expected a single value, "
                             f"got {len(den.payload)}")
    if den.kind == "number":
        return den.payload
    raise ExecutionError(f"{context}: expected a value, got {den.kind}")


def _set_arg(node, onto: Ontology) -> Denotation:
    den = execute(node, onto)
    if den.kind != "entities":
        raise ExecutionError(f"expected an entity set, got {den.kind}")
    return den


def _elem_of_set(node: MrNode, onto: Ontology) -> str:
    # Walk to the lookupKey (or lookupValue source) that fixes the row table.
    cur = node
    while isinstance(cur, MrNode):
        if cur.rule == Rule.LOOKUP_KEY:
            return cur.children[0].value
        cur = cur.children[0]
    if isinstance(cur, Terminal) and cur.category == Cat.ENTITY:
        return onto.entity(cur.value).type
    raise ExecutionError("cannot locate the subject table of an open tree")


def _filter_match(pred, cell, rhs, rhs_plural: bool) -> bool:
    if pred.range == SET_OF_CATEGORICAL:
        cell_set = frozenset(cell)
        if rhs_plural:
            return cell_set == frozenset(rhs)
        if isinstance(rhs, tuple):
            return any(v in cell_set for v in rhs)
        return rhs in cell_set
    if rhs_plural:
        return cell in frozenset(rhs)
    if isinstance(rhs, tuple):
        return cell in rhs
    if pred.range == NUMERIC:
        return float(cell) == float(rhs)
    return cell == rhs


def execute(node: MrNode, onto: Ontology) -> Denotation:
    """Rule semantics over the seed database; the tree must be coref-free."""
    if has_corefs(node):
        raise ExecutionError("tree still contains co-referential variables; "
                             "inline them before execution")
    return _exec(node, onto)


def _exec(node: MrNode, onto: Ontology) -> Denotation:
    rule = node.rule

    if rule == Rule.LOOKUP_KEY:
        elem = node.children[0].value
        return entities(onto.rows(elem).keys())

    if rule == Rule.LOOKUP_VALUE:
        src, pterm = node.children
        pred = onto.binary(pterm.value)
        if isinstance(src, Terminal):
            row_id = src.value
            cell = _cell(onto, onto.entity(row_id).type, row_id, pred.id)
            if pred.range == SET_OF_CATEGORICAL:
                return Denotation("values", frozenset(cell))
            return Denotation("value", cell)
        subject = _set_arg(src, onto)
        elem = _elem_of_set(src, onto)
        out = set()
        for row_id in subject.payload:
            cell = _cell(onto, elem, row_id, pred.id)
            if pred.range == SET_OF_CATEGORICAL:
                out.update(cell)
            else:
                out.add(cell)
        return Denotation("values", frozenset(out))

    if rule == Rule.UNION or rule == Rule.INTERSECTION:
        a = _set_arg(node.children[0], onto)
        b = _set_arg(node.children[1], onto)
        merged = (a.payload | b.payload) if rule == Rule.UNION else (a.payload & b.payload)
        return Denotation("entities", merged)

    if rule == Rule.COUNT:
        return number(len(_set_arg(node.children[0], onto).payload))

    if rule == Rule.SUM:
        den = execute(node.children[0], onto)
        if den.kind == "value":
            vals = [den.payload]
        elif den.kind == "values":
            vals = list(den.payload)
        else:
            raise ExecutionError(f"sum over {den.kind}")
        total = 0.0
        for v in vals:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ExecutionError(f"sum over non-numeric value {v!r}")
            total += float(v)
        return number(total)

    subject = _set_arg(node.children[0], onto)
    elem = _elem_of_set(node.children[0], onto)

    if rule == Rule.FILTER_ASSERTION:
        pred = onto.unary(node.children[1].value)
        kept = {r for r in subject.payload
                if _cell(onto, elem, r, pred.id) is True}
        return Denotation("entities", frozenset(kept))

    if rule == Rule.FILTER_PROPERTY:
        pred = onto.binary(node.children[1].value)
        vchild = node.children[2]
        if isinstance(vchild, Terminal):
            rhs, rhs_plural = vchild.value, False
        else:
            den = execute(vchild, onto)
            if den.kind == "values":
                rhs, rhs_plural = den.payload, True
            else:
                rhs, rhs_plural = _unwrap_scalar(den, "filter value"), False
        kept = set()
        for r in subject.payload:
            match = _filter_match(pred, _cell(onto, elem, r, pred.id), rhs, rhs_plural)
            if match != node.negated:
                kept.add(r)
        return Denotation("entities", frozenset(kept))

    if rule in COMPARATIVES:
        pred = onto.binary(node.children[1].value)
        vchild = node.children[2]
        if isinstance(vchild, Terminal):
            bound = float(vchild.value)
        else:
            raw = _unwrap_scalar(execute(vchild, onto), "comparison value")
            if not isinstance(raw, (int, float)) or isinstance(raw, bool):
                raise ExecutionError(f"comparator on non-numeric value {raw!r}")
            bound = float(raw)
        op = _OPS[{"COMPARATIVE_LT": "<", "COMPARATIVE_LE": "<=",
                   "COMPARATIVE_GT": ">", "COMPARATIVE_GE": ">="}[rule.name]]
        kept = {r for r in subject.payload
                if op(_numeric_cell(onto, elem, r, pred.id), bound)}
        return Denotation("entities", frozenset(kept))

    if rule in COUNT_COMPARATIVES:
        pred = onto.binary(node.children[1].value)
        vchild = node.children[2]
        if isinstance(vchild, Terminal):
            bound = float(vchild.value)
        else:
            bound = float(_unwrap_scalar(execute(vchild, onto), "comparison value"))
        op = _OPS[{"COUNT_COMPARATIVE_LT": "<", "COUNT_COMPARATIVE_LE": "<=",
                   "COUNT_COMPARATIVE_GT": ">", "COUNT_COMPARATIVE_GE": ">="}[rule.name]]
        kept = {r for r in subject.payload
                if op(len(_cell(onto, elem, r, pred.id)), bound)}
        return Denotation("entities", frozenset(kept))

    if rule in SUPERLATIVES or rule in COUNT_SUPERLATIVES:
        pred = onto.binary(node.children[1].value)
        if not subject.payload:
            return Denotation("entities", frozenset())
        if rule in SUPERLATIVES:
            keyed = {r: _numeric_cell(onto, elem, r, pred.id)
                     for r in subject.payload}
        else:
            keyed = {r: float(len(_cell(onto, elem, r, pred.id)))
                     for r in subject.payload}
        minimum = rule in (Rule.SUPERLATIVE_MIN, Rule.COUNT_SUPERLATIVE_MIN)
        best = min(keyed.values()) if minimum else max(keyed.values())
        # Ties are kept: the denotation is the full set of optimizers.
        return Denotation("entities", frozenset(r for r, v in keyed.items()
                                                if v == best))

    raise ExecutionError(f"no semantics for rule {rule}")
