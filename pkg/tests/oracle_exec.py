"""Independent brute-force MR interpreter used as a test oracle.

Deliberately shares no code with ontoparse.executor: plain row scans,
explicit loops, and (tag, value) pairs instead of Denotation objects.
"""
from ontoparse.grammar import Cat, MrNode, Rule, Terminal


def brute(node, onto):
    """Returns (tag, value): ("entities"|"values", frozenset) or
    ("number"|"value", scalar)."""
    r = node.rule

    if r == Rule.LOOKUP_KEY:
        table = onto.database.get(node.children[0].value, {})
        return "entities", frozenset(table.keys())

    if r == Rule.LOOKUP_VALUE:
        src, p = node.children
        pred = onto.binary(p.value)
        if isinstance(src, Terminal):
            cell = _fetch(onto, onto.entity(src.value).type, src.value, pred.id)
            if isinstance(cell, list):
                return "values", frozenset(cell)
            return "value", cell
        _, rows = brute(src, onto)
        table_type = _table_of(src, onto)
        collected = set()
        for row in rows:
            cell = _fetch(onto, table_type, row, pred.id)
            if isinstance(cell, list):
                for item in cell:
                    collected.add(item)
            else:
                collected.add(cell)
        return "values", frozenset(collected)

    if r == Rule.UNION:
        _, a = brute(node.children[0], onto)
        _, b = brute(node.children[1], onto)
        return "entities", a | b

    if r == Rule.INTERSECTION:
        _, a = brute(node.children[0], onto)
        _, b = brute(node.children[1], onto)
        return "entities", a & b

    if r == Rule.COUNT:
        _, rows = brute(node.children[0], onto)
        n = 0
        for _ in rows:
            n += 1
        return "number", float(n)

    if r == Rule.SUM:
        tag, payload = brute(node.children[0], onto)
        items = [payload] if tag == "value" else list(payload)
        total = 0.0
        for item in items:
            total += float(item)
        return "number", total

    # everything else narrows a subject set
    _, rows = brute(node.children[0], onto)
    table_type = _table_of(node.children[0], onto)
    pred_id = node.children[1].value

    if r == Rule.FILTER_ASSERTION:
        kept = set()
        for row in rows:
            if _fetch(onto, table_type, row, pred_id) is True:
                kept.add(row)
        return "entities", frozenset(kept)

    if r == Rule.FILTER_PROPERTY:
        rhs_terminal = isinstance(node.children[2], Terminal)
        if rhs_terminal:
            rhs = node.children[2].value
            rhs_tag = "value"
        else:
            rhs_tag, rhs = brute(node.children[2], onto)
        kept = set()
        for row in rows:
            cell = _fetch(onto, table_type, row, pred_id)
            hit = _match(cell, rhs, rhs_tag)
            if node.negated:
                hit = not hit
            if hit:
                kept.add(row)
        return "entities", frozenset(kept)

    if r.name.startswith("COMPARATIVE") or r.name.startswith("COUNT_COMPARATIVE"):
        counting = r.name.startswith("COUNT_")
        if isinstance(node.children[2], Terminal):
            bound = float(node.children[2].value)
        else:
            tag, raw = brute(node.children[2], onto)
            if tag == "values":
                assert len(raw) == 1
                raw = list(raw)[0]
            bound = float(raw)
        kept = set()
        for row in rows:
            cell = _fetch(onto, table_type, row, pred_id)
            measure = float(len(cell)) if counting else float(cell)
            if _compare(r, measure, bound):
                kept.add(row)
        return "entities", frozenset(kept)

    if r.name.startswith("SUPERLATIVE") or r.name.startswith("COUNT_SUPERLATIVE"):
        counting = r.name.startswith("COUNT_")
        if not rows:
            return "entities", frozenset()
        scored = []
        for row in rows:
            cell = _fetch(onto, table_type, row, pred_id)
            scored.append((row, float(len(cell)) if counting else float(cell)))
        target = (min if r.name.endswith("MIN") else max)(s for _, s in scored)
        return "entities", frozenset(row for row, s in scored if s == target)

    raise AssertionError(f"oracle cannot interpret {r}")


def _fetch(onto, table_type, row, pred_id):
    cell = onto.database[table_type][row].get(pred_id)
    assert cell is not None, f"{row} lacks {pred_id}"
    return cell


def _table_of(node, onto):
    while isinstance(node, MrNode):
        if node.rule == Rule.LOOKUP_KEY:
            return node.children[0].value
        node = node.children[0]
    assert isinstance(node, Terminal) and node.category == Cat.ENTITY
    return onto.entity(node.value).type


def _match(cell, rhs, rhs_tag):
    if isinstance(cell, list):
        if rhs_tag == "values":
            return frozenset(cell) == rhs
        if isinstance(rhs, tuple):
            return any(v in cell for v in rhs)
        return rhs in cell
    if rhs_tag == "values":
        return cell in rhs
    if isinstance(rhs, tuple):
        return cell in rhs
    if isinstance(cell, (int, float)) and not isinstance(cell, bool):
        return float(cell) == float(rhs)
    return cell == rhs


def _compare(rule, lhs, rhs):
    name = rule.name
    if name.endswith("_LT"):
        return lhs < rhs
    if name.endswith("_LE"):
        return lhs <= rhs
    if name.endswith("_GT"):
        return lhs > rhs
    return lhs >= rhs


def as_pair(denotation):
    """Executor Denotation -> comparable (tag, value) pair."""
    return denotation.kind, denotation.payload
