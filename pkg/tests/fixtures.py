"""Shared tree fixtures: the running restaurant example."""
from ontoparse.grammar import Cat, MrNode, Rule, Terminal

# Derivation of "Which restaurant has Thai food and is closer to me than KFC?"
FIGURE1_TREE = MrNode(Rule.COMPARATIVE_LT, (
    MrNode(Rule.FILTER_PROPERTY, (
        MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, "restaurant"),)),
        Terminal(Cat.BINARY_PRED, "cuisine"),
        Terminal(Cat.ENTITY, "cuisine.thai"),
    )),
    Terminal(Cat.BINARY_PRED, "distance"),
    MrNode(Rule.LOOKUP_VALUE, (
        Terminal(Cat.ENTITY, "restaurant.kfc"),
        Terminal(Cat.BINARY_PRED, "distance"),
    )),
))

TABLE6_MR_TEXT = """\
Result_1=(lookupKey (type.restaurant))
Result_2=(filter (Result_1) (rel.cuisine) = (cuisine.thai))
Result_3=(lookupValue (restaurant.kfc) (rel.distance))
Result_4=(filter (Result_2) (rel.distance) < (Result_3))"""

# Published action listing for the tree above.  It spells both entity types
# and entities as TER(Entity) and contains an early RED after the second
# TER(Binary_predicate): the Comparative is reduced with two of its three
# children and re-opened for the trailing LookupValue argument.
PUBLISHED_ACTIONS = (
    "NT(Comparative(<)), NT(Filter(property)), NT(LookupKey), TER(Entity), "
    "RED, TER(Binary_predicate), TER(Entity), RED, TER(Binary_predicate), "
    "RED, NT(LookupValue), TER(Entity), TER(Binary_predicate), RED, RED"
)

# The same listing without the early RED: the canonical strict sequence.
CANONICAL_ACTIONS = (
    "NT(Comparative(<)), NT(Filter(property)), NT(LookupKey), TER(Entity), "
    "RED, TER(Binary_predicate), TER(Entity), RED, TER(Binary_predicate), "
    "NT(LookupValue), TER(Entity), TER(Binary_predicate), RED, RED"
)

# Terminal bindings in leaf order, shared by both listings.
FIGURE1_LEAVES = (
    Terminal(Cat.ENTITY_TYPE, "restaurant"),
    Terminal(Cat.BINARY_PRED, "cuisine"),
    Terminal(Cat.ENTITY, "cuisine.thai"),
    Terminal(Cat.BINARY_PRED, "distance"),
    Terminal(Cat.ENTITY, "restaurant.kfc"),
    Terminal(Cat.BINARY_PRED, "distance"),
)
