"""Bottom-up sampling of valid meaning representations.

Single-turn mode chains rule applications fragment by fragment (one rule per
fragment) and closes them into a single tree.  Sequential mode builds a
session of turn MRs (one to three rules each) whose co-referential variables
follow one of four anaphoric-link structures:

  * exploitation: each consequent extends the immediately usable antecedent
    (chain links),
  * exploration: some antecedent acquires a second consequent (branch),
  * merging: a consequent takes the union/intersection of two antecedents,
  * unrelated: the session contains a second, link-free task (topic shift).

Every sampled fragment must pass ``validate``: well typed, executable,
non-empty when set-valued, and neither entailed by nor contradicting its
subject.  Sampling is deterministic given (ontology, config, structure).
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .executor import ExecutionError, execute
from .grammar import (
    COMPARATIVES, COUNT_COMPARATIVES, COUNT_SUPERLATIVES, CONSTRAINT_RULES,
    SUPERLATIVES, Cat, GrammarError, MrNode, MrType, Rule, Terminal,
    inline_corefs, preds_for, type_of, usable_binary_preds,
)
from .ontology import (
    CATEGORICAL, ENTITY_REF, NUMERIC, SET_OF_CATEGORICAL, BinaryPredicate,
    Ontology,
)

STRUCTURES = ("exploitation", "exploration", "merging", "unrelated")


class GenerationExhausted(Exception):
    """No valid expansion found within the retry budget."""


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_fragments: int = 4          # single-turn chain length
    min_rules_per_turn: int = 1     # sequential fragments use 1..3 rules
    max_rules_per_turn: int = 3
    min_turns: int = 3
    max_turns: int = 5
    max_coref_links: int = 5
    cache_size: int = 8             # antecedents kept available for linking
    structure_weights: Tuple[float, float, float, float] = (0.4, 0.2, 0.2, 0.2)
    retry_budget: int = 200

    def __post_init__(self):
        if min(self.max_fragments, self.min_rules_per_turn,
               self.max_rules_per_turn, self.min_turns, self.max_turns,
               self.max_coref_links) < 1:
            raise ValueError("all bounds must be >= 1")
        if self.cache_size < 2:
            raise ValueError("cache size must be >= 2")


@dataclass(frozen=True)
class Violation:
    kind: str      # "type" | "empty" | "contradict" | "entail"
    detail: str


@dataclass(frozen=True)
class SessionPlan:
    fragments: Tuple[MrNode, ...]
    links: Tuple[Tuple[int, Tuple[int, ...]], ...]  # consequent -> antecedents
    structure: str


def links_of(fragments: Sequence[MrNode]) -> Tuple[Tuple[int, Tuple[int, ...]], ...]:
    out = []
    for i, frag in enumerate(fragments, start=1):
        refs: List[int] = []
        for node in [frag] if isinstance(frag, Terminal) else [frag]:
            pass
        stack = [frag]
        while stack:
            item = stack.pop()
            if isinstance(item, Terminal):
                refs.extend(item.refs)
            else:
                stack.extend(reversed(item.children))
        if refs:
            out.append((i, tuple(sorted(set(refs)))))
    return tuple(out)


# ---------------------------------------------------------------------------
# validity


def _numeric_bounds(node: MrNode) -> Dict[str, List[Tuple[str, float]]]:
    """Numeric constraints (op, bound) per predicate along the subject chain."""
    out: Dict[str, List[Tuple[str, float]]] = {}
    cur: object = node
    while isinstance(cur, MrNode):
        if cur.rule in COMPARATIVES and isinstance(cur.children[2], Terminal) \
                and cur.children[2].category == Cat.NUMBER:
            op = {"COMPARATIVE_LT": "<", "COMPARATIVE_LE": "<=",
                  "COMPARATIVE_GT": ">", "COMPARATIVE_GE": ">="}[cur.rule.name]
            out.setdefault(cur.children[1].value, []).append(
                (op, float(cur.children[2].value)))
        cur = cur.children[0]
    return out


def _bounds_conflict(bounds: List[Tuple[str, float]]) -> bool:
    lo, hi = float("-inf"), float("inf")
    lo_open = hi_open = False
    for op, v in bounds:
        if op in (">", ">="):
            if v > lo or (v == lo and op == ">"):
                lo, lo_open = v, op == ">"
        else:
            if v < hi or (v == hi and op == "<"):
                hi, hi_open = v, op == "<"
    if lo > hi:
        return True
    return lo == hi and (lo_open or hi_open)


def validate(fragment: MrNode, context: Sequence[MrNode],
             onto: Ontology) -> Optional[Violation]:
    """Structured validity check for one fragment against its antecedents.

    ``context`` lists the prior fragments; ``Result_k`` in the fragment
    refers to ``context[k-1]``.  Returns None when the fragment is valid.
    """
    antecedents = {i: frag for i, frag in enumerate(context, start=1)}
    types: Dict[int, MrType] = {}
    for i, frag in antecedents.items():
        try:
            types[i] = type_of(frag, onto, types)
        except GrammarError as err:
            return Violation("type", f"antecedent {i}: {err}")
    try:
        type_of(fragment, onto, types)
    except GrammarError as err:
        return Violation("type", str(err))

    try:
        closed = inline_corefs(fragment, antecedents)
        den = execute(closed, onto)
    except (GrammarError, ExecutionError) as err:
        return Violation("type", str(err))

    if den.kind == "entities" and not den.payload:
        bounds = _numeric_bounds(closed)
        if any(_bounds_conflict(b) for b in bounds.values()):
            return Violation("contradict",
                             "numeric constraints have an empty intersection")
        return Violation("empty", "denotation is empty")

    if fragment.rule in CONSTRAINT_RULES:
        subject = closed.children[0]
        if isinstance(subject, MrNode):
            parent_den = execute(subject, onto)
            if parent_den.kind == "entities" and parent_den.payload == den.payload:
                return Violation("entail", "constraint removes no rows")
    return None


# ---------------------------------------------------------------------------
# shared sampling helpers


def _comparative_fill(rng: random.Random, onto: Ontology,
                      pred: BinaryPredicate) -> Tuple[Rule, Terminal]:
    rule = rng.choice(COMPARATIVES)
    pool = sorted({float(v) for v in onto.column_values(pred)})
    return rule, Terminal(Cat.NUMBER, rng.choice(pool))


def _count_comparative_fill(rng: random.Random, onto: Ontology,
                            pred: BinaryPredicate) -> Tuple[Rule, Terminal]:
    rule = rng.choice(COUNT_COMPARATIVES)
    sizes = sorted({float(len(c)) for c in onto.column_values(pred)}) or [1.0]
    return rule, Terminal(Cat.NUMBER, rng.choice(sizes))


def _sample_constraint(rng: random.Random, onto: Ontology, elem: str,
                       subject, allow_superlative: bool = True) -> Optional[MrNode]:
    """One random constraint application over an entity-set subject.

    Superlatives usually collapse a set to a near-singleton, so callers
    disable them for subjects that later constraints must keep filtering.
    """
    options = []
    if preds_for(onto, elem, "pred_any"):
        options.append("filter")
    if preds_for(onto, elem, "pred_numeric"):
        options.append("comparative")
        if allow_superlative:
            options.append("superlative")
    if preds_for(onto, elem, "pred_setcat"):
        options.append("count_comparative")
        if allow_superlative:
            options.append("count_superlative")
    if onto.unary_preds_of(elem):
        options.append("assertion")
    if not options:
        return None
    kind = rng.choice(options)

    if kind == "filter":
        pred = rng.choice(preds_for(onto, elem, "pred_any"))
        p = Terminal(Cat.BINARY_PRED, pred.id)
        if pred.range == NUMERIC:
            pool = sorted({float(v) for v in onto.column_values(pred)})
            v = Terminal(Cat.NUMBER, rng.choice(pool))
        elif pred.range == ENTITY_REF:
            v = Terminal(Cat.ENTITY, rng.choice(onto.entities_of(pred.target)).id)
        else:
            v = Terminal(Cat.ENTITY, rng.choice(pred.values))
        return MrNode(Rule.FILTER_PROPERTY, (subject, p, v))
    if kind == "comparative":
        pred = rng.choice(preds_for(onto, elem, "pred_numeric"))
        rule, v = _comparative_fill(rng, onto, pred)
        return MrNode(rule, (subject, Terminal(Cat.BINARY_PRED, pred.id), v))
    if kind == "superlative":
        pred = rng.choice(preds_for(onto, elem, "pred_numeric"))
        return MrNode(rng.choice(SUPERLATIVES),
                      (subject, Terminal(Cat.BINARY_PRED, pred.id)))
    if kind == "count_comparative":
        pred = rng.choice(preds_for(onto, elem, "pred_setcat"))
        rule, v = _count_comparative_fill(rng, onto, pred)
        return MrNode(rule, (subject, Terminal(Cat.BINARY_PRED, pred.id), v))
    if kind == "count_superlative":
        pred = rng.choice(preds_for(onto, elem, "pred_setcat"))
        return MrNode(rng.choice(COUNT_SUPERLATIVES),
                      (subject, Terminal(Cat.BINARY_PRED, pred.id)))
    pred = rng.choice(onto.unary_preds_of(elem))
    return MrNode(Rule.FILTER_ASSERTION,
                  (subject, Terminal(Cat.UNARY_PRED, pred.id)))


def _rich_types(onto: Ontology) -> List[str]:
    rich = sorted({p.domain for p in usable_binary_preds(onto)}
                  | {p.domain for p in onto.unary_predicates})
    return rich or sorted(t.id for t in onto.entity_types)


# ---------------------------------------------------------------------------
# single-turn generation


def gen_single_turn(onto: Ontology, cfg: GenConfig) -> MrNode:
    """A closed, validated tree of 1..max_fragments rule applications."""
    if not onto.entity_types:
        raise GenerationExhausted("ontology declares no entity types")
    rng = random.Random(cfg.seed)
    for _ in range(cfg.retry_budget):
        tree = _try_single_turn(rng, onto, cfg)
        if tree is not None:
            return tree
    raise GenerationExhausted(
        f"no valid single-turn MR within {cfg.retry_budget} attempts")


def _try_single_turn(rng: random.Random, onto: Ontology,
                     cfg: GenConfig) -> Optional[MrNode]:
    n = rng.randint(1, cfg.max_fragments)
    fragments: List[MrNode] = []
    types: Dict[int, MrType] = {}

    def push(fragment: Optional[MrNode]) -> bool:
        if fragment is None:
            return False
        for _ in range(8):
            if validate(fragment, fragments, onto) is None:
                fragments.append(fragment)
                types[len(fragments)] = type_of(fragment, onto, types)
                return True
            regenerated = _revalue(rng, onto, fragment)
            if regenerated is None:
                return False
            fragment = regenerated
        return False

    # Fragment 1: the subject chain root.
    elem = rng.choice(_rich_types(onto))
    if not push(MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, elem),))):
        return None
    chain = 1          # index of the unconsumed set fragment
    value_idx = None   # index of an unconsumed value fragment
    value_pred = None

    while len(fragments) < n:
        k = len(fragments) + 1
        is_last = k == n
        chain_elem = types[chain].elem
        moves = []
        if not is_last or value_idx is None:
            moves.append("constraint")
        if value_idx is not None:
            moves += ["consume_value"] * 3
        if (value_idx is None and n - k >= 1 and _value_producers(onto)):
            moves.append("produce_value")
        if is_last and value_idx is None:
            moves += ["count"]
            if preds_for(onto, chain_elem, "pred_any"):
                moves.append("lookup_value")
        if not moves:
            return None
        move = rng.choice(moves)

        if move == "produce_value":
            const, pred = rng.choice(_value_producers(onto))
            frag = MrNode(Rule.LOOKUP_VALUE, (
                Terminal(Cat.ENTITY, const.id), Terminal(Cat.BINARY_PRED, pred.id)))
            if not push(frag):
                return None
            value_idx, value_pred = k, pred
            continue

        if move == "consume_value":
            frag = _value_consumer(rng, onto, chain_elem, chain,
                                   value_idx, value_pred)
            if not push(frag):
                return None
            chain, value_idx, value_pred = k, None, None
            continue

        if move == "count":
            if not push(MrNode(Rule.COUNT, (Terminal(Cat.COREF, refs=(chain,)),))):
                return None
            chain = k
            continue

        if move == "lookup_value":
            pred = rng.choice(preds_for(onto, chain_elem, "pred_any"))
            frag = MrNode(Rule.LOOKUP_VALUE, (
                Terminal(Cat.COREF, refs=(chain,)),
                Terminal(Cat.BINARY_PRED, pred.id)))
            if not push(frag):
                return None
            chain = k
            continue

        frag = _sample_constraint(rng, onto, chain_elem,
                                  Terminal(Cat.COREF, refs=(chain,)),
                                  allow_superlative=is_last)
        if not push(frag):
            return None
        chain = k

    if value_idx is not None:
        return None
    antecedents = {i: f for i, f in enumerate(fragments, start=1)}
    tree = inline_corefs(fragments[-1], antecedents)
    try:
        type_of(tree, onto)
    except GrammarError:
        return None
    return tree


def _value_producers(onto: Ontology) -> List[Tuple]:
    out = []
    for e in onto.entities:
        for p in onto.binary_preds_of(e.type):
            out.append((e, p))
    return out


def _value_consumer(rng: random.Random, onto: Ontology, elem: str, chain: int,
                    value_idx: int, value_pred: BinaryPredicate
                    ) -> Optional[MrNode]:
    subject = Terminal(Cat.COREF, refs=(chain,))
    vref = Terminal(Cat.COREF, refs=(value_idx,))
    if value_pred.range == NUMERIC:
        pool = preds_for(onto, elem, "pred_numeric")
        if not pool:
            return None
        same = [p for p in pool if p.id == value_pred.id]
        pred = same[0] if same else rng.choice(pool)
        rule = rng.choice(COMPARATIVES)
        return MrNode(rule, (subject, Terminal(Cat.BINARY_PRED, pred.id), vref))
    pool = [p for p in preds_for(onto, elem, "pred_any")
            if p.range == value_pred.range]
    if value_pred.range == SET_OF_CATEGORICAL:
        pool = [p for p in pool if p.values == value_pred.values] or pool
    if not pool:
        return None
    same = [p for p in pool if p.id == value_pred.id]
    pred = same[0] if same else rng.choice(pool)
    return MrNode(Rule.FILTER_PROPERTY,
                  (subject, Terminal(Cat.BINARY_PRED, pred.id), vref))


# ---------------------------------------------------------------------------
# sequential generation


def gen_session(onto: Ontology, cfg: GenConfig,
                structure: Optional[str] = None) -> SessionPlan:
    """A validated session whose anaphoric links realize one structure.

    Exploitation links form the backbone of every session; the named
    structure adds its defining event (a branch, a two-antecedent merge, or
    a topic shift).  With ``structure=None`` one is drawn from the
    configured mix weights.
    """
    rng = random.Random(cfg.seed)
    if structure is None:
        structure = rng.choices(STRUCTURES, weights=cfg.structure_weights)[0]
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}")
    for _ in range(cfg.retry_budget):
        plan = _try_session(rng, onto, cfg, structure)
        if plan is not None:
            return plan
    raise GenerationExhausted(
        f"no valid {structure} session within {cfg.retry_budget} attempts")


def _try_session(rng: random.Random, onto: Ontology, cfg: GenConfig,
                 structure: str) -> Optional[SessionPlan]:
    low = max(cfg.min_turns, {"exploitation": 2, "exploration": 3,
                              "merging": 4, "unrelated": 3}[structure])
    high = max(low, cfg.max_turns)
    turns = rng.randint(low, high)

    # Plan the link skeleton: per turn, either None (root) or a link spec.
    skeleton: List[Optional[Tuple[str, Tuple[int, ...]]]] = [None]
    if structure == "exploitation":
        for t in range(2, turns + 1):
            skeleton.append(("coref", (t - 1,)))
    elif structure == "exploration":
        branch = rng.randint(3, turns)
        for t in range(2, turns + 1):
            if t == branch:
                # antecedent that already has a consequent
                skeleton.append(("coref", (rng.randint(1, t - 2),)))
            else:
                skeleton.append(("coref", (t - 1,)))
    elif structure == "merging":
        merge_at = 4
        skeleton.append(("coref", (1,)))
        skeleton.append(("coref", (1,)))
        kind = rng.choice(["union", "intersection"])
        skeleton.append((kind, (2, 3)))
        for t in range(merge_at + 1, turns + 1):
            skeleton.append(("coref", (t - 1,)))
    else:  # unrelated
        shift = rng.randint(3, turns)
        for t in range(2, turns + 1):
            if t == shift:
                skeleton.append(None)
            else:
                skeleton.append(("coref", (t - 1,)))

    links = sum(len(spec[1]) for spec in skeleton if spec is not None)
    if links > cfg.max_coref_links:
        return None

    fragments: List[MrNode] = []
    types: Dict[int, MrType] = {}
    # Merging requires both antecedents to share an element type.
    elem = rng.choice(_rich_types(onto))
    has_consequent = {a for spec in skeleton if spec is not None
                      for a in spec[1]}

    for t, spec in enumerate(skeleton, start=1):
        cache_floor = max(0, t - 1 - cfg.cache_size)
        if spec is not None and min(spec[1]) <= cache_floor:
            return None
        fragment = None
        for _ in range(16):
            budget = rng.randint(cfg.min_rules_per_turn, cfg.max_rules_per_turn)
            candidate = _build_turn(rng, onto, elem, spec, types, budget,
                                    allow_superlative=t not in has_consequent)
            if candidate is None:
                continue
            if validate(candidate, fragments, onto) is None:
                fragment = candidate
                break
            candidate = _revalue(rng, onto, candidate)
            if candidate is not None and validate(candidate, fragments, onto) is None:
                fragment = candidate
                break
        if fragment is None:
            return None
        fragments.append(fragment)
        types[t] = type_of(fragment, onto, types)

    plan = SessionPlan(tuple(fragments), links_of(fragments), structure)
    return plan if _structure_ok(plan) else None


def _build_turn(rng: random.Random, onto: Ontology, elem: str,
                spec: Optional[Tuple[str, Tuple[int, ...]]],
                types: Mapping[int, MrType], rules_budget: int,
                allow_superlative: bool = True) -> Optional[MrNode]:
    if spec is None:
        base = MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, elem),))
        wraps = max(0, rules_budget - 1)
    elif spec[0] == "coref":
        ante = types.get(spec[1][0])
        if ante is None or ante.kind != "entity-set":
            return None
        base = Terminal(Cat.COREF, refs=spec[1])
        elem = ante.elem
        wraps = max(1, rules_budget)
    else:
        a, b = (types.get(i) for i in spec[1])
        if not a or not b or a.kind != "entity-set" or b.kind != "entity-set" \
                or a.elem != b.elem:
            return None
        cat = Cat.UNION_COREF if spec[0] == "union" else Cat.INTERSECTION_COREF
        base = Terminal(cat, refs=spec[1])
        elem = a.elem
        wraps = max(1, rules_budget)

    node = base
    for i in range(wraps):
        node = _sample_constraint(rng, onto, elem, node,
                                  allow_superlative=allow_superlative
                                  and i == wraps - 1)
        if node is None:
            return None
    if isinstance(node, Terminal):
        return None
    return node


def _structure_ok(plan: SessionPlan) -> bool:
    """The link graph must show the label's defining shape."""
    n = len(plan.fragments)
    consequents: Dict[int, List[int]] = {}
    in_deg = {i: 0 for i in range(1, n + 1)}
    for consequent, antecedents in plan.links:
        for a in antecedents:
            if a >= consequent:
                return False
            consequents.setdefault(a, []).append(consequent)
        in_deg[consequent] = len(antecedents)
    out_deg = {a: len(c) for a, c in consequents.items()}

    # connected components over the undirected link graph
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for consequent, antecedents in plan.links:
        for a in antecedents:
            parent[find(a)] = find(consequent)
    components = len({find(i) for i in range(1, n + 1)})

    if plan.structure == "exploitation":
        return (components == 1 and all(d <= 1 for d in out_deg.values())
                and all(d <= 1 for d in in_deg.values()))
    if plan.structure == "exploration":
        return (components == 1 and max(out_deg.values(), default=0) >= 2
                and all(d <= 1 for d in in_deg.values()))
    if plan.structure == "merging":
        return components == 1 and max(in_deg.values(), default=0) == 2
    return components >= 2 and max(in_deg.values(), default=0) <= 1


def _revalue(rng: random.Random, onto: Ontology,
             fragment: MrNode) -> Optional[MrNode]:
    """Resample the literal in a failed comparative/filter, keeping shape."""
    if fragment.rule in COMPARATIVES and isinstance(fragment.children[2], Terminal) \
            and fragment.children[2].category == Cat.NUMBER:
        pred = onto.binary(fragment.children[1].value)
        pool = sorted({float(v) for v in onto.column_values(pred)})
        return MrNode(rng.choice(COMPARATIVES),
                      (fragment.children[0], fragment.children[1],
                       Terminal(Cat.NUMBER, rng.choice(pool))))
    if fragment.rule == Rule.FILTER_PROPERTY \
            and isinstance(fragment.children[2], Terminal) \
            and fragment.children[2].category == Cat.ENTITY:
        pred = onto.binary(fragment.children[1].value)
        if pred.range in (CATEGORICAL, SET_OF_CATEGORICAL):
            return MrNode(Rule.FILTER_PROPERTY,
                          (fragment.children[0], fragment.children[1],
                           Terminal(Cat.ENTITY, rng.choice(pred.values))))
    return None
