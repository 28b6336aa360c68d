"""Top-down transition system over derivation trees.

A configuration holds a stack of partially complete tree fragments.  Three
action classes drive generation:

  * ``NT(X)`` opens a subtree rooted by a domain-general rule X and moves the
    insertion pointer under it,
  * ``TER(x)`` attaches a terminal variable of category x under the pointer,
  * ``RED`` pops the children of the innermost open rule, closes it, and
    hands the composed fragment to the enclosing rule.

``legal_actions`` and ``step`` share one slot-context engine, so an action
steps successfully exactly when it is legal; legality additionally requires
that a well-typed completion stays reachable (element-type constraints are
propagated down open slots).

Published derivation listings write ``RED`` variadically and occasionally
reduce a rule before all of its arguments are attached, re-opening it for the
trailing argument.  ``replay`` is strict by default (every action must be
legal); ``strict=False`` accepts such early reductions by suspending the
incomplete rule until a later ``RED`` supplies the missing children.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from .grammar import (
    ARITY, CAT_SPELLING, COREF_CATS, DOMAIN_GENERAL, RETURN_KIND, SLOTS,
    Cat, Child, GrammarError, MrNode, MrType, Rule, Terminal, TypeMismatch,
    admissible_elems, iter_terminals, preds_for, type_of,
    value_source_elems,
)
from .ontology import (
    CATEGORICAL, ENTITY_REF, NUMERIC, SET_OF_CATEGORICAL, Ontology,
)


class IllegalAction(Exception):
    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


@dataclass(frozen=True)
class Action:
    op: str                      # "NT" | "TER" | "RED"
    rule: Optional[Rule] = None
    cat: Optional[Cat] = None
    value: Union[str, float, Tuple[str, ...], None] = None
    refs: Tuple[int, ...] = ()

    def spell(self) -> str:
        if self.op == "NT":
            return f"NT({self.rule.value})"
        if self.op == "TER":
            return f"TER({CAT_SPELLING[self.cat]})"
        return "RED"

    def stripped(self) -> "Action":
        """Category-level action with value annotations removed."""
        if self.op == "TER":
            return Action("TER", cat=self.cat)
        if self.op == "NT":
            return Action("NT", rule=self.rule)
        return RED


RED = Action("RED")


def NT(rule: Rule) -> Action:
    return Action("NT", rule=rule)


def TER(cat: Cat, value=None, refs: Tuple[int, ...] = ()) -> Action:
    return Action("TER", cat=cat, value=value, refs=refs)


# Fixed inventory defining the classifier's output space.  Entity types and
# entities share the surface spelling TER(Entity) and hence one action; the
# slot being filled disambiguates them.
def _dedupe_by_spelling(actions):
    seen = {}
    for action in actions:
        seen.setdefault(action.spell(), action)
    return tuple(seen.values())


ACTION_INVENTORY: Tuple[Action, ...] = _dedupe_by_spelling(
    tuple(NT(r) for r in DOMAIN_GENERAL)
    + tuple(Action("TER", cat=c) for c in Cat)
    + (RED,)
)


@dataclass(frozen=True)
class Frame:
    rule: Optional[Rule]              # None marks the virtual TOP frame
    children: Tuple[Child, ...] = ()


@dataclass(frozen=True)
class TransitionConfig:
    frames: Tuple[Frame, ...] = (Frame(None),)

    @property
    def complete(self) -> bool:
        return len(self.frames) == 1 and len(self.frames[0].children) == 1

    @property
    def depth(self) -> int:
        """Number of open rules (the TOP frame does not count)."""
        return len(self.frames) - 1

    def root(self) -> MrNode:
        if not self.complete:
            raise GrammarError("derivation is not complete")
        return self.frames[0].children[0]

    def describe(self) -> str:
        """Stack rendering in the (Σ, π, σ, N, P) style, for debugging."""
        sigma = []
        for frame in self.frames[1:]:
            sigma.append(f"{frame.rule.value}(")
            sigma.extend(_brief(c) for c in frame.children)
        for c in self.frames[0].children:
            sigma.insert(0, _brief(c))
        pending = [f.rule.value for f in self.frames[1:]]
        pointer = pending[-1] if pending else ("TOP" if not self.complete else "-")
        return (f"Σ=[{', '.join(sigma)}] N=[{', '.join(pending)}] P={pointer}")


def _brief(child: Child) -> str:
    if isinstance(child, Terminal):
        return CAT_SPELLING[child.category]
    return f"{child.rule.value}(...)"


INITIAL = TransitionConfig()


# ---------------------------------------------------------------------------
# slot contexts


@dataclass(frozen=True)
class SlotCtx:
    kind: str                         # slot kind, "root", "reduce" or "done"
    env: FrozenSet[str] = frozenset()  # admissible element types
    vkind: Optional[str] = None        # required value kind
    singular: bool = True              # False when a value set is acceptable
    elem: Optional[str] = None         # subject element type, once fixed
    pred_id: Optional[str] = None      # bound predicate for value slots


def _elem_of_child(child: Child, onto: Ontology,
                   coref_types: Mapping[int, MrType]) -> str:
    if isinstance(child, Terminal):
        if child.category == Cat.ENTITY:
            return onto.entity(child.value).type
        if child.category in COREF_CATS:
            t = coref_types.get(child.refs[0])
            if t is None or t.kind != "entity-set":
                raise TypeMismatch(f"antecedent Result_{child.refs[0]} is not "
                                   f"an entity set")
            return t.elem
        raise TypeMismatch(f"terminal {child.category.value} has no element type")
    return type_of(child, onto, coref_types).elem


def _frame_slot(frame: Frame, parent: SlotCtx, onto: Ontology,
                coref_types: Mapping[int, MrType]) -> SlotCtx:
    """Context of the frame's pending child slot."""
    rule = frame.rule
    if rule is None:
        if frame.children:
            return SlotCtx("done")
        return SlotCtx("root", env=frozenset(t.id for t in onto.entity_types))
    i = len(frame.children)
    if i >= ARITY[rule]:
        return SlotCtx("reduce")
    kind = SLOTS[rule][i]

    if kind == "type":
        return SlotCtx("type", env=_set_env(rule, parent, onto))
    if kind == "set":
        return SlotCtx("set", env=_set_env(rule, parent, onto))
    if kind == "src":
        vkind = _required_vkind(parent)
        return SlotCtx("src", env=value_source_elems(onto, vkind), vkind=vkind,
                       singular=parent.singular if parent.kind != "root" else False)
    if kind in ("numval", "countval"):
        return SlotCtx(kind, vkind=NUMERIC, singular=True)
    if kind == "numvalues":
        return SlotCtx("numvalues", vkind=NUMERIC, singular=False)
    elem = _elem_of_child(frame.children[0], onto, coref_types)
    if kind in ("pred_any", "pred_numeric", "pred_setcat"):
        vkind = _required_vkind(parent) if rule == Rule.LOOKUP_VALUE else None
        return SlotCtx(kind, elem=elem, vkind=vkind)
    if kind == "upred":
        return SlotCtx("upred", elem=elem)
    if kind == "val_match":
        pred = onto.binary(frame.children[1].value)
        return SlotCtx("val_match", elem=elem, vkind=pred.range,
                       singular=pred.range != SET_OF_CATEGORICAL,
                       pred_id=pred.id)
    raise GrammarError(f"unknown slot kind {kind}")


def _set_env(rule: Rule, parent: SlotCtx, onto: Ontology) -> FrozenSet[str]:
    if parent.kind in ("root", "set", "src"):
        env = parent.env
    else:
        raise TypeMismatch(f"{rule.value} cannot fill a {parent.kind} slot")
    return env & admissible_elems(rule, onto)


def _required_vkind(parent: SlotCtx) -> Optional[str]:
    if parent.kind in ("val_match", "numval", "countval", "numvalues"):
        return parent.vkind
    return None


def current_slot(config: TransitionConfig, onto: Ontology,
                 coref_types: Optional[Mapping[int, MrType]] = None) -> SlotCtx:
    coref_types = coref_types or {}
    ctx = SlotCtx("root", env=frozenset(t.id for t in onto.entity_types))
    for frame in config.frames:
        ctx = _frame_slot(frame, ctx, onto, coref_types)
    return ctx


# ---------------------------------------------------------------------------
# legality


def _nt_legal(ctx: SlotCtx, rule: Rule, onto: Ontology,
              coref_types: Mapping[int, MrType]) -> bool:
    if rule.internal:
        return False
    out = RETURN_KIND[rule]
    if ctx.kind == "root":
        if out == "entity-set":
            return bool(admissible_elems(rule, onto))
        if rule == Rule.COUNT:
            return bool(onto.entity_types)
        if rule == Rule.SUM:
            return _value_reachable(onto, NUMERIC, singular=False, coref_types=coref_types)
        if rule == Rule.LOOKUP_VALUE:
            return bool(value_source_elems(onto, None))
        return False
    if ctx.kind in ("set", "src"):
        if out != "entity-set":
            return False
        if ctx.kind == "src" and ctx.singular:
            return False  # a set-valued source would make the value plural
        return bool(ctx.env & admissible_elems(rule, onto))
    if ctx.kind in ("val_match", "numval", "countval", "numvalues"):
        if rule != Rule.LOOKUP_VALUE:
            return False
        return _lookup_value_reachable(onto, ctx.vkind, ctx.singular)
    return False


def _lookup_value_reachable(onto: Ontology, vkind: Optional[str],
                            singular: bool) -> bool:
    if singular:
        # the source must be a single declared entity with a matching predicate
        return any(preds_for(onto, e.type, "pred_any")
                   and (vkind is None
                        or any(p.range == vkind for p in preds_for(onto, e.type, "pred_any")))
                   for e in onto.entities)
    return bool(value_source_elems(onto, vkind))


def _value_reachable(onto: Ontology, vkind: str, singular: bool,
                     coref_types: Mapping[int, MrType]) -> bool:
    if _lookup_value_reachable(onto, vkind, singular):
        return True
    return any(t.kind == "value" and t.value_kind == vkind
               and (not t.plural or not singular)
               for t in coref_types.values())


def _coref_candidates(ctx: SlotCtx, onto: Ontology,
                      coref_types: Mapping[int, MrType]) -> List[int]:
    out = []
    for index in sorted(coref_types):
        t = coref_types[index]
        if ctx.kind in ("set", "src"):
            if t.kind == "entity-set" and t.elem in ctx.env:
                if ctx.kind == "src" and ctx.singular:
                    continue
                out.append(index)
        elif ctx.kind in ("val_match", "numval", "countval", "numvalues"):
            if (t.kind == "value" and t.value_kind == ctx.vkind
                    and (not t.plural or not ctx.singular)):
                out.append(index)
    return out


def _pair_candidates(ctx: SlotCtx, onto: Ontology,
                     coref_types: Mapping[int, MrType]) -> List[Tuple[int, int]]:
    if ctx.kind != "set":
        return []
    sets = [(i, t.elem) for i, t in sorted(coref_types.items())
            if t.kind == "entity-set" and t.elem in ctx.env]
    return [(i, j) for k, (i, a) in enumerate(sets)
            for j, b in sets[k + 1:] if a == b]


def slot_legal_values(config: TransitionConfig, cat: Cat, onto: Ontology,
                      coref_types: Optional[Mapping[int, MrType]] = None) -> List:
    """Terminal values that keep the derivation well typed at this point.

    Numbers are returned as the observed literal pool; co-referential
    categories return candidate antecedent indices (or index pairs).
    """
    coref_types = coref_types or {}
    ctx = current_slot(config, onto, coref_types)
    if cat in (Cat.ENTITY_TYPE, Cat.ENTITY) and ctx.kind == "type":
        return sorted(ctx.env)
    if cat == Cat.ENTITY:
        if ctx.kind == "src":
            out = []
            for e in onto.entities:
                pool = preds_for(onto, e.type, "pred_any")
                if ctx.vkind is not None:
                    pool = [p for p in pool if p.range == ctx.vkind]
                if pool:
                    out.append(e.id)
            return out
        if ctx.kind == "val_match":
            pred = onto.binary(ctx.pred_id)
            if pred.range in (CATEGORICAL, SET_OF_CATEGORICAL):
                return list(pred.values)
            if pred.range == ENTITY_REF:
                return [e.id for e in onto.entities_of(pred.target)]
        return []
    if cat == Cat.NUMBER:
        if ctx.kind == "countval":
            return onto.count_pool()
        if ctx.kind in ("numval", "val_match") and ctx.vkind == NUMERIC:
            return onto.number_pool()
        return []
    if cat == Cat.COREF:
        return _coref_candidates(ctx, onto, coref_types)
    if cat in (Cat.UNION_COREF, Cat.INTERSECTION_COREF):
        return _pair_candidates(ctx, onto, coref_types)
    if cat == Cat.BINARY_PRED and ctx.kind in ("pred_any", "pred_numeric",
                                               "pred_setcat"):
        pool = preds_for(onto, ctx.elem, ctx.kind)
        if ctx.vkind is not None:
            pool = [p for p in pool if p.range == ctx.vkind]
        return [p.id for p in pool]
    if cat == Cat.UNARY_PRED and ctx.kind == "upred":
        return [p.id for p in onto.unary_preds_of(ctx.elem)]
    return []


def _ter_legal(config: TransitionConfig, ctx: SlotCtx, cat: Cat, onto: Ontology,
               coref_types: Mapping[int, MrType]) -> bool:
    if ctx.kind == "root":
        return False  # a terminal cannot be the whole derivation
    if cat == Cat.NUMBER:
        return (ctx.kind == "countval"
                or (ctx.kind in ("numval", "val_match") and ctx.vkind == NUMERIC))
    return bool(slot_legal_values(config, cat, onto, coref_types))


def legal_actions(config: TransitionConfig, onto: Ontology,
                  coref_types: Optional[Mapping[int, MrType]] = None
                  ) -> FrozenSet[Action]:
    """Category-level actions for which ``step`` succeeds here."""
    coref_types = coref_types or {}
    ctx = current_slot(config, onto, coref_types)
    if ctx.kind == "done":
        return frozenset()
    if ctx.kind == "reduce":
        return frozenset((RED,))
    out = set()
    for rule in DOMAIN_GENERAL:
        if _nt_legal(ctx, rule, onto, coref_types):
            out.add(NT(rule))
    for cat in Cat:
        if _ter_legal(config, ctx, cat, onto, coref_types):
            out.add(Action("TER", cat=cat))
    return frozenset(out)


def _effective_cat(ctx: SlotCtx, cat: Cat) -> Cat:
    # The surface spelling "Entity" covers both entity types and entities;
    # a type slot narrows the parsed coarse category.
    if cat == Cat.ENTITY and ctx.kind == "type":
        return Cat.ENTITY_TYPE
    return cat


def effective_category(config: TransitionConfig, cat: Cat, onto: Ontology,
                       coref_types: Optional[Mapping[int, MrType]] = None
                       ) -> Cat:
    """Resolve the coarse ``Entity`` spelling against the pending slot."""
    ctx = current_slot(config, onto, coref_types or {})
    if cat == Cat.ENTITY_TYPE and ctx.kind != "type":
        return Cat.ENTITY
    return _effective_cat(ctx, cat)


def step(config: TransitionConfig, action: Action, onto: Ontology,
         coref_types: Optional[Mapping[int, MrType]] = None) -> TransitionConfig:
    """Apply one action; raises :class:`IllegalAction` with a coded reason."""
    coref_types = coref_types or {}
    ctx = current_slot(config, onto, coref_types)
    frames = config.frames

    if action.op == "RED":
        if len(frames) == 1:
            raise IllegalAction("red_empty", "RED with no open rule")
        if ctx.kind != "reduce":
            raise IllegalAction("red_incomplete",
                                f"RED before {frames[-1].rule.value} has all "
                                f"{ARITY[frames[-1].rule]} children")
        top = frames[-1]
        node = MrNode(top.rule, top.children)
        parent = frames[-2]
        return TransitionConfig(frames[:-2] + (
            Frame(parent.rule, parent.children + (node,)),))

    if ctx.kind == "done":
        raise IllegalAction("complete", "derivation already complete")
    if ctx.kind == "reduce":
        raise IllegalAction("arity_overflow",
                            f"{frames[-1].rule.value} already has all children")

    if action.op == "NT":
        if not _nt_legal(ctx, action.rule, onto, coref_types):
            raise IllegalAction("type_mismatch",
                                f"{action.rule.value} cannot fill a "
                                f"{ctx.kind} slot here")
        return TransitionConfig(frames + (Frame(action.rule),))

    if action.op == "TER":
        if ctx.kind == "root":
            raise IllegalAction("terminal_at_root",
                                "a terminal cannot be the whole derivation")
        cat = _effective_cat(ctx, action.cat)
        if not _ter_legal(config, ctx, cat, onto, coref_types):
            raise IllegalAction("type_mismatch",
                                f"TER({CAT_SPELLING[cat]}) cannot fill a "
                                f"{ctx.kind} slot here")
        terminal = Terminal(cat, action.value, action.refs)
        if action.value is not None or action.refs:
            _check_bound_value(config, ctx, terminal, onto, coref_types)
        top = frames[-1]
        return TransitionConfig(frames[:-1] + (
            Frame(top.rule, top.children + (terminal,)),))

    raise IllegalAction("type_mismatch", f"unknown action {action.op!r}")


def _check_bound_value(config: TransitionConfig, ctx: SlotCtx,
                       terminal: Terminal, onto: Ontology,
                       coref_types: Mapping[int, MrType]):
    legal = slot_legal_values(config, terminal.category, onto, coref_types)
    if terminal.category == Cat.NUMBER:
        if not isinstance(terminal.value, (int, float)):
            raise IllegalAction("type_mismatch", "number terminal without a number")
        return  # any literal type-checks; the pool only guides prediction
    if terminal.category == Cat.COREF:
        if terminal.refs[0] not in legal:
            raise IllegalAction("type_mismatch",
                                f"antecedent Result_{terminal.refs[0]} does not fit")
        return
    if terminal.category in (Cat.UNION_COREF, Cat.INTERSECTION_COREF):
        if tuple(sorted(terminal.refs)) not in [tuple(sorted(p)) for p in legal]:
            raise IllegalAction("type_mismatch",
                                f"antecedent pair {terminal.refs} does not fit")
        return
    values = terminal.value if isinstance(terminal.value, tuple) else (terminal.value,)
    for v in values:
        if v not in legal:
            raise IllegalAction("type_mismatch",
                                f"{v!r} is not a legal fill for this {ctx.kind} slot")


# ---------------------------------------------------------------------------
# oracle and replay


@dataclass(frozen=True)
class Derivation:
    """Canonical action sequence of a tree, with terminal values attached."""
    actions: Tuple[Action, ...]

    def spelling(self) -> str:
        return " ".join(a.spell() for a in self.actions)

    def stripped(self) -> Tuple[Action, ...]:
        return tuple(a.stripped() for a in self.actions)


def oracle(tree: MrNode) -> Derivation:
    """Pre-order action sequence: NT at each rule, TER at each leaf, RED at
    each close.  ``replay`` reconstructs the tree exactly."""
    actions: List[Action] = []

    def walk(node: MrNode):
        actions.append(NT(node.rule))
        for child in node.children:
            if isinstance(child, Terminal):
                actions.append(TER(child.category, child.value, child.refs))
            else:
                walk(child)
        actions.append(RED)

    walk(tree)
    return Derivation(tuple(actions))


def action_count(tree: MrNode) -> int:
    internal = sum(1 for _ in _iter_rule_nodes(tree))
    leaves = sum(1 for _ in iter_terminals(tree))
    return 2 * internal + leaves


def _iter_rule_nodes(node: Child):
    if isinstance(node, MrNode):
        yield node
        for c in node.children:
            yield from _iter_rule_nodes(c)


def replay(actions: Sequence[Action], onto: Ontology, *,
           values: Optional[Sequence[Terminal]] = None,
           coref_types: Optional[Mapping[int, MrType]] = None,
           strict: bool = True) -> MrNode:
    """Rebuild a tree from an action sequence.

    ``values`` optionally supplies fully-bound terminals for TER actions in
    leaf order (used when the sequence itself carries no annotations).  In
    strict mode every action must be legal; with ``strict=False`` a RED on an
    incomplete rule suspends that rule instead of failing.
    """
    supply = list(values) if values is not None else None

    def bind(action: Action) -> Action:
        if action.op != "TER" or supply is None:
            return action
        if not supply:
            raise GrammarError("more TER actions than supplied values")
        term = supply.pop(0)
        if CAT_SPELLING[term.category] != CAT_SPELLING[action.cat]:
            raise GrammarError(f"supplied {term.category.value} for "
                               f"TER({CAT_SPELLING[action.cat]})")
        return TER(term.category, term.value, term.refs)

    if strict:
        config = INITIAL
        for action in actions:
            config = step(config, bind(action), onto, coref_types)
        return config.root()

    # Lenient marker machine for published listings with early reductions.
    stack: List = []  # open Frame markers and closed children
    for action in actions:
        action = bind(action)
        if action.op == "NT":
            stack.append(Frame(action.rule))
        elif action.op == "TER":
            stack.append(Terminal(action.cat, action.value, action.refs))
        else:
            popped: List[Child] = []
            while stack and not isinstance(stack[-1], Frame):
                popped.append(stack.pop())
            if not stack:
                raise IllegalAction("red_empty", "RED with no open rule")
            marker = stack.pop()
            children = marker.children + tuple(reversed(popped))
            if len(children) > ARITY[marker.rule]:
                raise IllegalAction("arity_overflow",
                                    f"{marker.rule.value} got {len(children)} children")
            if len(children) == ARITY[marker.rule]:
                stack.append(MrNode(marker.rule, children))
            else:
                stack.append(Frame(marker.rule, children))
    if len(stack) != 1 or not isinstance(stack[0], MrNode):
        raise GrammarError("action sequence does not close a single tree")
    tree = stack[0]
    # Leaf categories were attached without slot context, so the coarse
    # "Entity" spelling may need re-typing; a final type check enforces it.
    tree = _fix_entity_types(tree)
    type_of(tree, onto, coref_types)
    return tree


def _fix_entity_types(node: MrNode) -> MrNode:
    fixed = []
    for i, child in enumerate(node.children):
        if isinstance(child, MrNode):
            fixed.append(_fix_entity_types(child))
        elif (node.rule == Rule.LOOKUP_KEY and isinstance(child, Terminal)
              and child.category == Cat.ENTITY):
            fixed.append(Terminal(Cat.ENTITY_TYPE, child.value))
        else:
            fixed.append(child)
    return MrNode(node.rule, tuple(fixed), negated=node.negated)


# ---------------------------------------------------------------------------
# textual action sequences


def serialize_actions(actions: Sequence[Action]) -> str:
    return " ".join(a.spell() for a in actions)


_NT_RE = re.compile(r"NT\((.+)\)$")
_TER_RE = re.compile(r"TER\((.+)\)$")

_RULE_BY_SPELLING = {r.value: r for r in DOMAIN_GENERAL}
_CAT_BY_SPELLING = {"Entity": Cat.ENTITY, "Binary_predicate": Cat.BINARY_PRED,
                    "Unary_predicate": Cat.UNARY_PRED, "Number": Cat.NUMBER,
                    "Coref": Cat.COREF, "Union_coref": Cat.UNION_COREF,
                    "Intersection_coref": Cat.INTERSECTION_COREF}


def parse_actions(text: str) -> List[Action]:
    """Parse a whitespace/comma separated action listing."""
    out = []
    for token in re.split(r"[,\s]+", text.strip()):
        if not token:
            continue
        if token == "RED":
            out.append(RED)
            continue
        m = _NT_RE.match(token)
        if m:
            rule = _RULE_BY_SPELLING.get(m.group(1))
            if rule is None:
                raise GrammarError(f"unknown rule spelling {m.group(1)!r}")
            out.append(NT(rule))
            continue
        m = _TER_RE.match(token)
        if m:
            cat = _CAT_BY_SPELLING.get(m.group(1))
            if cat is None:
                raise GrammarError(f"unknown terminal category {m.group(1)!r}")
            out.append(Action("TER", cat=cat))
            continue
        raise GrammarError(f"unparseable action token {token!r}")
    return out
