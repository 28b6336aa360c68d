"""Acceptance suite: one test per exit criterion, each printing a pass line.

The neural targets are measured on synthetic corpora built here with pinned
seeds; they are properties of this artifact's corpora, not published
figures.  Heavy criteria are grouped so the whole suite stays desk-scale.
"""
import time

import numpy as np
import pytest

from ontoparse.corpus import ParaphraseConfig, build_corpus, synth_paraphrase
from ontoparse.evaluation import (
    coref_accuracy, evaluate_single, exact_match, semantic_match,
    session_score,
)
from ontoparse.executor import denotation_equal, execute
from ontoparse.generator import (
    GenConfig, STRUCTURES, gen_session, gen_single_turn, links_of, validate,
)
from ontoparse.grammar import (
    Cat, MrNode, Rule, Terminal, inline_corefs, parse_mr, serialize_mr,
    tree_depth, type_of,
)
from ontoparse.model import (
    ModelConfig, ParserModel, SessionContext, TrainConfig, TrainItem,
    build_vocab, domain_inventories, evaluate_exact, items_from_records,
    train_model,
)
from ontoparse.nn import check_gradients, tensor as T
from ontoparse.templates import render, render_tree
from ontoparse.transitions import (
    ACTION_INVENTORY, INITIAL, IllegalAction, action_count, legal_actions,
    oracle, parse_actions, replay, step,
)
from enumerate_trees import enumerate_trees
from fixtures import (
    CANONICAL_ACTIONS, FIGURE1_LEAVES, FIGURE1_TREE, PUBLISHED_ACTIONS,
    TABLE6_MR_TEXT,
)
from oracle_exec import as_pair, brute


def report(name, detail=""):
    print(f"\nACCEPTANCE PASS  {name}  {detail}")


def test_oracle_round_trip(bistro, library):
    """replay(oracle(t)) = t for 1,000 generator MRs per mode across the two
    toy ontologies, in under 10 seconds."""
    start = time.time()
    checked = 0
    for onto in (bistro, library):
        for seed in range(250):
            tree = gen_single_turn(onto, GenConfig(seed=seed))
            assert replay(oracle(tree).actions, onto) == tree
            checked += 1
        for seed in range(125):
            plan = gen_session(onto, GenConfig(seed=seed))
            types = {}
            for i, fragment in enumerate(plan.fragments, start=1):
                derivation = oracle(fragment)
                assert replay(derivation.actions, onto, coref_types=types) \
                    == fragment
                types[i] = type_of(fragment, onto, types)
                checked += 1
    elapsed = time.time() - start
    assert checked >= 1000
    assert elapsed < 10, f"round trips took {elapsed:.1f}s"
    report("oracle-round-trip", f"{checked} trees in {elapsed:.1f}s")


def test_transition_legality_agreement(library):
    """step success and legal_actions agree exactly on every configuration
    reachable from depth <= 3 trees over the toy ontology."""
    configs = {INITIAL}
    for tree in enumerate_trees(library, 3):
        config = INITIAL
        for action in oracle(tree).actions:
            config = step(config, action, library)
            configs.add(config)
    disagreements = 0
    for config in configs:
        legal = legal_actions(config, library)
        for action in ACTION_INVENTORY:
            try:
                step(config, action, library)
                stepped = True
            except IllegalAction:
                stepped = False
            if stepped != (action in legal):
                disagreements += 1
    assert disagreements == 0
    report("transition-legality", f"{len(configs)} configurations, "
                                  f"0 disagreements")


def test_figure1_fixture(restaurant):
    """The published 15-action listing replays to the reference tree, whose
    serialization reproduces the four published Result lines byte-for-byte.

    The listing's 10th action reduces the comparative before its third
    argument; strict replay rejects that (the action-count identity fixes
    the canonical sequence at 14 actions), so the published sequence goes
    through the lenient replay documented in the README.
    """
    published = parse_actions(PUBLISHED_ACTIONS)
    assert len(published) == 15
    tree = replay(published, restaurant, values=list(FIGURE1_LEAVES),
                  strict=False)
    assert tree == FIGURE1_TREE
    assert serialize_mr(tree) == TABLE6_MR_TEXT

    derivation = oracle(FIGURE1_TREE)
    assert derivation.spelling() == " ".join(
        t.strip() for t in CANONICAL_ACTIONS.split(","))
    assert action_count(FIGURE1_TREE) == len(derivation.actions) == 14
    assert replay(derivation.actions, restaurant) == FIGURE1_TREE
    report("figure1-fixture", "15-action listing -> published Result lines")


def test_generator_validity(restaurant, bistro):
    """10,000 single-turn MRs and 2,000 sessions (500 per structure) are
    well-typed, executable, non-empty where set-valued, and match their
    structure label's link-graph shape."""
    for onto, n in ((restaurant, 6000), (bistro, 4000)):
        for seed in range(n):
            tree = gen_single_turn(onto, GenConfig(seed=seed))
            mr_type = type_of(tree, onto)
            denotation = execute(tree, onto)
            if mr_type.kind == "entity-set":
                assert denotation.payload, f"empty denotation at seed {seed}"

    shapes = {"exploitation": _is_path, "exploration": _has_branch,
              "merging": _has_merge, "unrelated": _has_components}
    for structure in STRUCTURES:
        for seed in range(500):
            plan = gen_session(restaurant, GenConfig(seed=seed), structure)
            types = {}
            for i, fragment in enumerate(plan.fragments, start=1):
                types[i] = type_of(fragment, restaurant, types)
                closed = inline_corefs(
                    fragment, {j: f for j, f in
                               enumerate(plan.fragments, start=1)})
                denotation = execute(closed, restaurant)
                if types[i].kind == "entity-set":
                    assert denotation.payload
            assert plan.links == links_of(plan.fragments)
            assert shapes[structure](plan), (structure, seed)
    report("generator-validity", "10,000 single + 2,000 sessions all valid")


def _degrees(plan):
    out = {}
    inn = {}
    for consequent, antecedents in plan.links:
        inn[consequent] = len(antecedents)
        for a in antecedents:
            out[a] = out.get(a, 0) + 1
    return out, inn


def _components(plan):
    n = len(plan.fragments)
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for consequent, antecedents in plan.links:
        for a in antecedents:
            parent[find(a)] = find(consequent)
    return len({find(i) for i in range(1, n + 1)})


def _is_path(plan):
    out, inn = _degrees(plan)
    return (_components(plan) == 1
            and all(d == 1 for d in out.values())
            and all(d == 1 for d in inn.values()))


def _has_branch(plan):
    out, _ = _degrees(plan)
    return _components(plan) == 1 and max(out.values(), default=0) >= 2


def _has_merge(plan):
    _, inn = _degrees(plan)
    return max(inn.values(), default=0) == 2


def _has_components(plan):
    return _components(plan) >= 2


def test_executor_oracle_equivalence(library):
    """execute agrees with the independent brute-force interpreter on every
    depth <= 4 closed tree over the toy ontology, in under 60 seconds."""
    start = time.time()
    trees = enumerate_trees(library, 4)
    for tree in trees:
        assert as_pair(execute(tree, library)) == brute(tree, library), tree
    elapsed = time.time() - start
    assert elapsed < 60, f"exhaustive agreement took {elapsed:.1f}s"
    report("executor-equivalence", f"{len(trees)} trees in {elapsed:.1f}s")


def test_gradient_checks(bistro):
    """Every differentiable primitive and the full 5-dim miniature parser
    pass central finite differences at relative error < 1e-4."""
    from ontoparse.nn import ParamStore, lstm_init, lstm_step, soft_attention

    params = ParamStore(seed=3)
    w = params.new("w", 20, 9)
    b = params.new("b", 20)
    wb = params.new("wb", 6, 10)
    ws = params.new("ws", 6, 5)
    v = params.new("v", 6)
    wo = params.new("wo", 4, 5)
    xs = [np.linspace(-1, 1, 4) * (i + 1) for i in range(3)]

    def primitive_loss():
        h, c = lstm_init(5)
        keys = []
        for x in xs:
            h, c = lstm_step(w, b, T.const(x), h, c)
            keys.append(T.concat([h, T.tanh(c)]))
        _, context = soft_attention(keys, h, wb, ws, v)
        logits = T.matvec(wo, T.narrow(context, 0, 5))
        logp = T.masked_log_softmax(logits, np.array([True, True, False, True]))
        return T.neg(T.pick(logp, 1))

    worst, _ = check_gradients(primitive_loss, params)
    assert worst < 1e-4

    config = ModelConfig(word_dim=4, rule_dim=4, hidden=5, attn_dim=5,
                         feat_dim=5, coref_dim=5, dropout=0.0)
    model = ParserModel(config, build_vocab(["find all cafes",
                                             "of those with soup"]),
                        {bistro.name: domain_inventories(bistro)}, seed=0)
    first = MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, "cafe"),))
    follow = MrNode(Rule.FILTER_PROPERTY, (
        Terminal(Cat.COREF, refs=(1,)),
        Terminal(Cat.BINARY_PRED, "dish"),
        Terminal(Cat.ENTITY, "dish.soup")))

    def parser_loss():
        session = SessionContext()
        loss0, vec = model.sequence_loss("find all cafes", oracle(first),
                                         bistro.name, bistro)
        session.add(vec, first, type_of(first, bistro))
        loss1, _ = model.sequence_loss("of those with soup", oracle(follow),
                                       bistro.name, bistro, session=session)
        return T.add(loss0, loss1)

    from ontoparse.nn import MomentumSGD
    opt = MomentumSGD(model.params, lr=0.05)
    for _ in range(3):
        model.params.zero_grad()
        T.backward(parser_loss())
        opt.step()
    worst, rep = check_gradients(parser_loss, model.params, max_entries=5)
    assert worst < 1e-4, rep
    report("gradient-checks", f"worst relative error {worst:.2e}")


def _overfit_fixture(diner):
    """20 distinct MRs; held-out split renders them with zero noise, the
    training split paraphrases them with the default-style noise."""
    mrs, seen = [], set()
    seed = 0
    while len(mrs) < 20:
        tree = gen_single_turn(diner, GenConfig(seed=seed, max_fragments=3))
        seed += 1
        key = serialize_mr(tree)
        if key not in seen:
            seen.add(key)
            mrs.append(tree)
    zero = ParaphraseConfig(seed=0, synonym_prob=0, drop_prob=0, op_word_prob=0)
    held = [TrainItem(synth_paraphrase(render_tree(t, diner), "single",
                                       zero, diner),
                      oracle(t), t, diner.name) for t in mrs]
    train, pairs, i = [], set(), 0
    while len(train) < 50:
        tree = mrs[len(train) % 20]
        noisy = ParaphraseConfig(seed=1000 + i, synonym_prob=0.3,
                                 drop_prob=0.2, op_word_prob=0.5)
        i += 1
        utterance = synth_paraphrase(render_tree(tree, diner), "single",
                                     noisy, diner)
        key = (utterance, serialize_mr(tree))
        if key in pairs:
            continue
        pairs.add(key)
        train.append(TrainItem(utterance, oracle(tree), tree, diner.name))
    return train, held


@pytest.fixture(scope="session")
def diner():
    from ontoparse.ontology import load_ontology
    from conftest import DATA
    return load_ontology(DATA / "toy_diner.json")


def test_overfit_smoke(diner):
    """100% training ExM within 100 epochs on a 50-example corpus, >= 95%
    ExM on the 20-example held-out zero-noise split, in under 10 minutes."""
    start = time.time()
    train, held = _overfit_fixture(diner)
    ontos = {diner.name: diner}
    model = ParserModel(ModelConfig(dropout=0.5),
                        build_vocab([t.utterance for t in train]),
                        {diner.name: domain_inventories(diner)}, seed=0)
    log = train_model(model, train, train, ontos,
                      TrainConfig(seed=0, epochs=100, lr=0.1, patience=100))
    train_exm = log[-1]["val_exm"]
    held_exm = evaluate_exact(model, held, ontos)
    elapsed = time.time() - start
    assert train_exm == 1.0, f"training ExM {train_exm} after {len(log)} epochs"
    assert len(log) <= 100
    assert held_exm >= 0.95, f"held-out ExM {held_exm}"
    assert elapsed < 600, f"overfit smoke took {elapsed:.0f}s"
    report("overfit-smoke", f"train 100% in {len(log)} epochs, "
                            f"held-out {held_exm:.2f}, {elapsed:.0f}s")


def test_metric_sanity(bistro):
    """Gold vs gold scores 1.0/1.0; swapped adjacent filters score ExM false
    but SeM true."""
    trees = [gen_single_turn(bistro, GenConfig(seed=s)) for s in range(50)]
    rep = evaluate_single([(t, t) for t in trees], bistro)
    assert rep.exm == 1.0 and rep.sem == 1.0

    inner = MrNode(Rule.FILTER_PROPERTY, (
        MrNode(Rule.FILTER_ASSERTION, (
            MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, "cafe"),)),
            Terminal(Cat.UNARY_PRED, "vegan"))),
        Terminal(Cat.BINARY_PRED, "dish"), Terminal(Cat.ENTITY, "dish.soup")))
    outer = MrNode(Rule.FILTER_ASSERTION, (
        MrNode(Rule.FILTER_PROPERTY, (
            MrNode(Rule.LOOKUP_KEY, (Terminal(Cat.ENTITY_TYPE, "cafe"),)),
            Terminal(Cat.BINARY_PRED, "dish"), Terminal(Cat.ENTITY, "dish.soup"))),
        Terminal(Cat.UNARY_PRED, "vegan")))
    assert not exact_match(inner, outer)
    assert semantic_match(inner, outer, bistro)
    report("metric-sanity", "gold-vs-gold 1.0; swapped filters ExM<SeM")


def test_desk_scale_learning_single_turn(tmp_path, bistro):
    """On a 2,000-example synthetic single-turn corpus with default
    paraphrase noise, test ExM >= 70% and SeM >= ExM on every pair.

    The target is a property of this corpus (pinned seeds), not a published
    figure."""
    start = time.time()
    records, _ = build_corpus(bistro, GenConfig(seed=11),
                              ParaphraseConfig(seed=12), 2000,
                              tmp_path / "single.jsonl")
    ontos = {bistro.name: bistro}
    train = [r for r in records if r["split"] == "train"]
    dev = [r for r in records if r["split"] == "dev"]
    test = [r for r in records if r["split"] == "test"]
    assert (len(train), len(dev), len(test)) == (1400, 200, 400)

    items = items_from_records(train, ontos)
    dev_items = items_from_records(dev, ontos)[:60]
    test_items = items_from_records(test, ontos)
    model = ParserModel(ModelConfig(dropout=0.5),
                        build_vocab([r["utterance"] for r in train]),
                        {bistro.name: domain_inventories(bistro)}, seed=0)
    train_model(model, items, dev_items, ontos,
                TrainConfig(seed=0, epochs=6, lr=0.03, patience=6))

    exm_hits = 0
    implication_violations = 0
    for item in test_items:
        try:
            pred = model.parse(item.utterance, bistro, bistro.name)
        except IllegalAction:
            pred = None
        exm = exact_match(pred, item.tree)
        sem = exm or semantic_match(pred, item.tree, bistro)
        exm_hits += exm
        if exm and not sem:
            implication_violations += 1
    test_exm = exm_hits / len(test_items)
    assert implication_violations == 0
    assert test_exm >= 0.70, f"test ExM {test_exm:.3f}"
    report("desk-scale-single", f"test ExM {test_exm:.3f} on "
                                f"{len(test_items)} examples, "
                                f"{time.time()-start:.0f}s")


def test_desk_scale_learning_sequential(tmp_path, bistro):
    """On a 1,000-session synthetic sequential corpus, co-reference
    resolution accuracy on exploitation-structure links >= 90%.

    Co-references are realized as definite descriptions (the content-based
    antecedent scorer has no positional features), and the target is a
    property of this corpus."""
    from ontoparse.generator import SessionPlan

    start = time.time()
    para = ParaphraseConfig(seed=22, coref_mode_weights=(0.0, 0.0, 1.0))
    records, _ = build_corpus(bistro, GenConfig(seed=21), para, 1000,
                              tmp_path / "seq.jsonl", mode="sequential")
    ontos = {bistro.name: bistro}
    train = [r for r in records if r["split"] == "train"]
    dev = [r for r in records if r["split"] == "dev"]
    test = [r for r in records if r["split"] == "test"]
    items = items_from_records(train, ontos)
    dev_items = items_from_records(dev, ontos)[:40]
    test_items = items_from_records(test, ontos)

    model = ParserModel(ModelConfig(dropout=0.5),
                        build_vocab([r["utterance"] for r in train]),
                        {bistro.name: domain_inventories(bistro)}, seed=0)
    train_model(model, items, dev_items, ontos,
                TrainConfig(seed=0, epochs=6, lr=0.03, patience=6))

    structures = {}
    for record in test:
        structures.setdefault(record["session_id"], record["structure"])
    plans, preds = [], []
    for sid, item in zip(sorted(structures, key=str), test_items):
        fragments = tuple(turn.tree for turn in item.turns)
        plans.append(SessionPlan(fragments, links_of(fragments),
                                 structures[sid]))
        session = SessionContext()
        out = []
        for turn, mr_type in zip(item.turns, item.types):
            try:
                out.append(model.parse(turn.utterance, bistro, bistro.name,
                                       session=session))
            except IllegalAction:
                out.append(None)
                session.add(model.encode(turn.utterance).utterance, None,
                            mr_type)
        preds.append(out)

    accuracy = coref_accuracy(preds, plans, "exploitation")
    rep = session_score(preds, plans, bistro)
    assert accuracy >= 0.90, f"exploitation coref accuracy {accuracy:.3f}"
    report("desk-scale-sequential",
           f"exploitation coref {accuracy:.3f}, session ExM {rep.exm:.3f}, "
           f"{time.time()-start:.0f}s")


def test_determinism_of_artifacts(tmp_path):
    """generate, build-corpus and train produce byte-identical artifacts
    across two runs with the same seeds."""
    from ontoparse.cli import main

    pairs = []
    for run_dir in ("one", "two"):
        base = tmp_path / run_dir
        base.mkdir()
        assert main(["generate", "--ontology", "toy_bistro", "--count", "25",
                     "--seed", "13", "--out", str(base / "gen.jsonl")]) == 0
        assert main(["build-corpus", "--ontology", "toy_bistro",
                     "--size", "40", "--seed", "13",
                     "--out", str(base / "corpus.jsonl")]) == 0
        assert main(["train", "--corpus", str(base / "corpus.jsonl"),
                     "--ontology", "toy_bistro",
                     "--out", str(base / "model.ckpt"),
                     "--epochs", "2", "--hidden", "12", "--word-dim", "6",
                     "--dropout", "0.5", "--seed", "13"]) == 0
        pairs.append(base)
    for name in ("gen.jsonl", "corpus.jsonl", "model.ckpt"):
        a = (pairs[0] / name).read_bytes()
        b = (pairs[1] / name).read_bytes()
        assert a == b, f"{name} differs between runs"
    report("determinism", "generate / build-corpus / train byte-identical")
