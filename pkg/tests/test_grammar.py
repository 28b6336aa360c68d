import pytest

from ontoparse.grammar import (
    DOMAIN_GENERAL, Cat, DanglingIndex, MrNode, MrSyntaxError, Rule,
    Terminal, TypeMismatch, entity_set, inline_corefs, mr_expression, parse_mr,
    parse_turn, serialize_mr, serialize_turn, type_of,
)
from fixtures import FIGURE1_TREE, TABLE6_MR_TEXT


def lk(type_id):
    return MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, type_id),))


def test_rule_inventory_is_closed():
    assert len(DOMAIN_GENERAL) == 18
    assert Rule.UNION not in DOMAIN_GENERAL
    assert Rule.INTERSECTION not in DOMAIN_GENERAL


def test_lookup_key_type(restaurant):
    t = type_of(lk("restaurant"), restaurant)
    assert t == entity_set("restaurant")


def test_count_returns_number(restaurant):
    node = MrNode(Rule.COUNT, (lk("restaurant"),))
    assert type_of(node, restaurant).kind == "number"


def test_lookup_key_over_number_rejected(restaurant):
    bad = MrNode(Rule.COUNT, (MrNode(Rule.COUNT, (lk("restaurant"),)),))
    with pytest.raises(TypeMismatch):
        type_of(bad, restaurant)


def test_figure1_tree_types(restaurant):
    assert type_of(FIGURE1_TREE, restaurant) == entity_set("restaurant")


def test_serialize_matches_published_result_lines(restaurant):
    assert serialize_mr(FIGURE1_TREE) == TABLE6_MR_TEXT


def test_serialize_single_node():
    assert serialize_mr(lk("restaurant")) == "Result_1=(lookupKey (type.restaurant))"


def test_parse_inverts_serialize(restaurant):
    assert parse_mr(TABLE6_MR_TEXT, restaurant) == FIGURE1_TREE


def test_parse_reports_syntax_error(restaurant):
    with pytest.raises(MrSyntaxError):
        parse_mr("Result_1=(lookupKey (type.restaurant)", restaurant)


def test_parse_type_checks(restaurant):
    with pytest.raises(TypeMismatch):
        parse_mr("Result_1=(lookupKey (type.restaurant))\n"
                 "Result_2=(lookupKey (Result_1))", restaurant)


def test_turn_serialization_keeps_nesting(restaurant):
    turn = MrNode(Rule.FILTER_PROPERTY, (
        lk("restaurant"),
        Terminal(Cat.BINARY_PRED, "cuisine"),
        Terminal(Cat.ENTITY, "cuisine.thai"),
    ))
    line = serialize_turn(turn, 1)
    assert line == ("Result_1=(filter (lookupKey (type.restaurant)) "
                    "(rel.cuisine) = (cuisine.thai))")
    assert parse_turn(line, restaurant) == turn


def test_turn_with_coref_round_trips(restaurant):
    ante = {1: entity_set("restaurant")}
    turn = MrNode(Rule.SUPERLATIVE_MIN, (
        Terminal(Cat.COREF, refs=(1,)),
        Terminal(Cat.BINARY_PRED, "price_rating"),
    ))
    line = serialize_turn(turn, 3)
    assert line == "Result_3=((Result_1) argmin (rel.price_rating))"
    assert parse_turn(line, restaurant, ante) == turn


def test_union_coref_round_trips(restaurant):
    ante = {1: entity_set("restaurant"), 2: entity_set("restaurant")}
    turn = MrNode(Rule.FILTER_ASSERTION, (
        Terminal(Cat.UNION_COREF, refs=(1, 2)),
        Terminal(Cat.UNARY_PRED, "waiter"),
    ))
    line = serialize_turn(turn, 3)
    assert "(union (Result_1) (Result_2))" in line
    assert parse_turn(line, restaurant, ante) == turn


def test_count_comparative_surface(restaurant):
    node = MrNode(Rule.COUNT_COMPARATIVE_GT, (
        lk("restaurant"),
        Terminal(Cat.BINARY_PRED, "cuisine"),
        Terminal(Cat.NUMBER, 1.0),
    ))
    line = serialize_turn(node, 2)
    assert line == ("Result_2=((lookupKey (type.restaurant)) "
                    "(size (rel.cuisine)) > (num 1))")
    assert parse_turn(line, restaurant) == node


def test_inline_corefs_rebuilds_figure1(restaurant):
    fragments = {
        1: lk("restaurant"),
        2: MrNode(Rule.FILTER_PROPERTY, (
            Terminal(Cat.COREF, refs=(1,)),
            Terminal(Cat.BINARY_PRED, "cuisine"),
            Terminal(Cat.ENTITY, "cuisine.thai"))),
        3: MrNode(Rule.LOOKUP_VALUE, (
            Terminal(Cat.ENTITY, "restaurant.kfc"),
            Terminal(Cat.BINARY_PRED, "distance"))),
    }
    final = MrNode(Rule.COMPARATIVE_LT, (
        Terminal(Cat.COREF, refs=(2,)),
        Terminal(Cat.BINARY_PRED, "distance"),
        Terminal(Cat.COREF, refs=(3,)),
    ))
    assert inline_corefs(final, fragments) == FIGURE1_TREE


def test_inline_corefs_identity_on_closed_trees(restaurant):
    assert inline_corefs(FIGURE1_TREE, {}) == FIGURE1_TREE


def test_inline_corefs_dangling_index(restaurant):
    bad = MrNode(Rule.COUNT, (Terminal(Cat.COREF, refs=(7,)),))
    with pytest.raises(DanglingIndex):
        inline_corefs(bad, {})


def test_union_coref_inlines_to_set_node(restaurant):
    node = MrNode(Rule.COUNT, (Terminal(Cat.UNION_COREF, refs=(1, 2)),))
    out = inline_corefs(node, {1: lk("restaurant"), 2: lk("restaurant")})
    inner = out.children[0]
    assert inner.rule == Rule.UNION
    assert inner.children == (lk("restaurant"), lk("restaurant"))


def test_comparative_value_node_allowed(restaurant):
    assert type_of(FIGURE1_TREE, restaurant).kind == "entity-set"
    bad = MrNode(Rule.COMPARATIVE_LT, (
        lk("restaurant"),
        Terminal(Cat.BINARY_PRED, "distance"),
        MrNode(Rule.LOOKUP_VALUE, (
            Terminal(Cat.ENTITY, "restaurant.kfc"),
            Terminal(Cat.BINARY_PRED, "cuisine"))),  # set-valued, not numeric
    ))
    with pytest.raises(TypeMismatch):
        type_of(bad, restaurant)


def test_wrong_domain_predicate_rejected(bistro):
    bad = MrNode(Rule.FILTER_ASSERTION, (
        lk("street"),
        Terminal(Cat.UNARY_PRED, "vegan"),
    ))
    with pytest.raises(TypeMismatch):
        type_of(bad, bistro)


def test_negated_filter_surface(restaurant):
    node = MrNode(Rule.FILTER_PROPERTY, (
        lk("restaurant"),
        Terminal(Cat.BINARY_PRED, "location"),
        Terminal(Cat.ENTITY, "location.oxford_street"),
    ), negated=True)
    line = serialize_turn(node, 1)
    assert " != " in line
    assert parse_turn(line, restaurant) == node


def test_value_disjunction_surface(library):
    node = MrNode(Rule.FILTER_PROPERTY, (
        lk("book"),
        Terminal(Cat.BINARY_PRED, "shelf"),
        Terminal(Cat.ENTITY, ("shelf.a", "shelf.b")),
    ))
    line = serialize_turn(node, 1)
    assert "(or (shelf.a) (shelf.b))" in line
    assert parse_turn(line, library) == node


def test_mr_expression_is_prefix_free(restaurant):
    text = mr_expression(FIGURE1_TREE)
    assert text.startswith("(filter (filter (lookupKey")
    assert "Result" not in text


def test_indices_dense_in_first_use_order():
    text = serialize_mr(FIGURE1_TREE)
    seen = []
    for line in text.splitlines():
        index = int(line.split("=", 1)[0].split("_")[1])
        seen.append(index)
    assert seen == [1, 2, 3, 4]


def test_parse_serialize_identity_exhaustive(library):
    """parse_mr inverts serialize_mr on every depth <= 3 well-typed tree."""
    from enumerate_trees import enumerate_trees
    for tree in enumerate_trees(library, 3):
        assert parse_mr(serialize_mr(tree), library) == tree


# Which terminal categories may instantiate each slot of each rule, per the
# rule inventory's lambda signatures.  "node" marks slots that take subtrees.
SLOT_LEGAL_CATS = {
    Rule.LOOKUP_KEY: [{Cat.ENTITY_TYPE}],
    Rule.LOOKUP_VALUE: [{Cat.ENTITY, "node"}, {Cat.BINARY_PRED}],
    Rule.FILTER_PROPERTY: [{"node"}, {Cat.BINARY_PRED},
                           {Cat.ENTITY, Cat.NUMBER, "node"}],
    Rule.FILTER_ASSERTION: [{"node"}, {Cat.UNARY_PRED}],
    Rule.COUNT: [{"node"}],
    Rule.SUM: [{"node"}],
}
for _rule in (Rule.COMPARATIVE_LT, Rule.COMPARATIVE_LE, Rule.COMPARATIVE_GT,
              Rule.COMPARATIVE_GE):
    SLOT_LEGAL_CATS[_rule] = [{"node"}, {Cat.BINARY_PRED},
                              {Cat.NUMBER, "node"}]
for _rule in (Rule.COUNT_COMPARATIVE_LT, Rule.COUNT_COMPARATIVE_LE,
              Rule.COUNT_COMPARATIVE_GT, Rule.COUNT_COMPARATIVE_GE):
    SLOT_LEGAL_CATS[_rule] = [{"node"}, {Cat.BINARY_PRED},
                              {Cat.NUMBER, "node"}]
for _rule in (Rule.SUPERLATIVE_MIN, Rule.SUPERLATIVE_MAX):
    SLOT_LEGAL_CATS[_rule] = [{"node"}, {Cat.BINARY_PRED}]
for _rule in (Rule.COUNT_SUPERLATIVE_MIN, Rule.COUNT_SUPERLATIVE_MAX):
    SLOT_LEGAL_CATS[_rule] = [{"node"}, {Cat.BINARY_PRED}]


def test_slot_signatures_admit_exactly_the_listed_categories(library):
    """Enumerating all (rule, terminal category) pairs per slot, type_of
    accepts a representative instantiation iff the pair is listed legal."""
    samples = {
        Cat.ENTITY_TYPE: Terminal(Cat.ENTITY_TYPE, "book"),
        Cat.BINARY_PRED: Terminal(Cat.BINARY_PRED, "pages"),
        Cat.UNARY_PRED: Terminal(Cat.UNARY_PRED, "available"),
        Cat.ENTITY: Terminal(Cat.ENTITY, "book.dune"),
        Cat.NUMBER: Terminal(Cat.NUMBER, 300.0),
    }
    good = {
        Rule.LOOKUP_KEY: [Terminal(Cat.ENTITY_TYPE, "book")],
        Rule.LOOKUP_VALUE: [Terminal(Cat.ENTITY, "book.dune"),
                            Terminal(Cat.BINARY_PRED, "pages")],
        Rule.FILTER_PROPERTY: [lk("book"), Terminal(Cat.BINARY_PRED, "pages"),
                               Terminal(Cat.NUMBER, 300.0)],
        Rule.FILTER_ASSERTION: [lk("book"), Terminal(Cat.UNARY_PRED, "available")],
        Rule.COUNT: [lk("book")],
        Rule.SUM: [MrNode(Rule.LOOKUP_VALUE, (Terminal(Cat.ENTITY, "book.dune"),
                                              Terminal(Cat.BINARY_PRED, "pages")))],
    }
    for rule, slots in SLOT_LEGAL_CATS.items():
        if rule not in good:
            pred = "genre" if rule.name.startswith("COUNT_") else "pages"
            good[rule] = [lk("book"), Terminal(Cat.BINARY_PRED, pred)]
            if len(slots) == 3:
                good[rule].append(Terminal(Cat.NUMBER, 1.0))
    for rule, slots in SLOT_LEGAL_CATS.items():
        # the fully legal instantiation passes
        type_of(MrNode(rule, tuple(good[rule])), library)
        # swapping any single slot to an unlisted terminal category fails
        for position, legal in enumerate(slots):
            for cat, terminal in samples.items():
                if cat in legal:
                    continue
                children = list(good[rule])
                children[position] = terminal
                with pytest.raises(TypeMismatch):
                    type_of(MrNode(rule, tuple(children)), library)
