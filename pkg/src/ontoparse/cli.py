"""Command-line entry points for the full pipeline.

Subcommands: generate, build-corpus, train, parse, eval, serve.  Every
command takes --seed and produces identical artifacts across reruns.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import ParaphraseConfig, build_corpus, load_corpus
from .generator import GenConfig, STRUCTURES, gen_session, gen_single_turn
from .grammar import parse_mr, parse_turn, serialize_mr, serialize_turn, type_of
from .ontology import Ontology, OntologyError, load_ontology

DATA_DIR = Path(__file__).parent / "data"


def resolve_ontology(name_or_path: str) -> Ontology:
    path = Path(name_or_path)
    if not path.exists():
        path = DATA_DIR / f"{name_or_path}.json"
    if not path.exists():
        raise FileNotFoundError(f"no ontology file or packaged ontology named "
                                f"{name_or_path!r}")
    return load_ontology(path)


def cmd_generate(args) -> int:
    onto = resolve_ontology(args.ontology)
    out = []
    if args.mode == "single":
        for i in range(args.count):
            tree = gen_single_turn(onto, GenConfig(
                seed=args.seed * 1000003 + i, max_fragments=args.max_fragments))
            out.append({"mr_text": serialize_mr(tree)})
    else:
        for i in range(args.count):
            plan = gen_session(onto, GenConfig(seed=args.seed * 1000003 + i),
                               args.structure)
            out.append({
                "structure": plan.structure,
                "links": [[c, list(a)] for c, a in plan.links],
                "turns": [serialize_turn(f, t)
                          for t, f in enumerate(plan.fragments, start=1)],
            })
    text = "\n".join(json.dumps(record, sort_keys=True) for record in out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_build_corpus(args) -> int:
    onto = resolve_ontology(args.ontology)
    gen_cfg = GenConfig(seed=args.seed, max_fragments=args.max_fragments)
    para_cfg = ParaphraseConfig(seed=args.seed + 1,
                                synonym_prob=args.synonym_prob,
                                drop_prob=args.drop_prob,
                                op_word_prob=args.op_word_prob)
    _, stats = build_corpus(onto, gen_cfg, para_cfg, args.size, args.out,
                            mode=args.mode)
    sys.stdout.write(stats)
    return 0


def cmd_train(args) -> int:
    from .model import (ModelConfig, ParserModel, TrainConfig, build_vocab,
                        domain_inventories, items_from_records, train_model)
    records = load_corpus(args.corpus)
    onto = resolve_ontology(args.ontology)
    ontos = {onto.name: onto}
    train_records = [r for r in records if r.get("split") == "train"]
    dev_records = [r for r in records if r.get("split") == "dev"]
    if not train_records:
        train_records = records
    items = items_from_records(train_records, ontos)
    dev_items = items_from_records(dev_records, ontos)
    vocab = build_vocab([r["utterance"] for r in train_records])
    model = ParserModel(
        ModelConfig(hidden=args.hidden, word_dim=args.word_dim,
                    rule_dim=args.word_dim, attn_dim=args.hidden,
                    feat_dim=args.hidden, coref_dim=args.hidden,
                    dropout=args.dropout, context_mode=args.context),
        vocab, {onto.name: domain_inventories(onto)}, seed=args.seed)
    log = train_model(model, items, dev_items, ontos,
                      TrainConfig(seed=args.seed, lr=args.lr,
                                  epochs=args.epochs, log=True))
    model.save(args.out)
    log_path = Path(str(args.out) + ".log.jsonl")
    log_path.write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in log),
        encoding="utf-8")
    print(f"saved {args.out} after {len(log)} epochs "
          f"(val ExM {log[-1]['val_exm']:.3f})")
    return 0


def _read_inputs(path: str):
    """Utterance file -> list of items; JSON-lines datasets group sessions."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    if lines and lines[0].startswith("{"):
        records = [json.loads(ln) for ln in lines if ln]
        singles = [r for r in records if r.get("session_id") is None]
        sessions = {}
        for r in records:
            if r.get("session_id") is not None:
                sessions.setdefault(r["session_id"], []).append(r)
        out = [("single", r["utterance"]) for r in singles]
        for sid in sorted(sessions, key=str):
            turns = sorted(sessions[sid], key=lambda r: r["turn"])
            out.append(("session", [r["utterance"] for r in turns]))
        return out
    # plain text: one utterance per line; blank lines separate sessions
    if any(not ln for ln in lines[:-1]):
        blocks, block = [], []
        for ln in lines:
            if ln:
                block.append(ln)
            elif block:
                blocks.append(block)
                block = []
        if block:
            blocks.append(block)
        return [("session", block) for block in blocks]
    return [("single", ln) for ln in lines if ln]


def cmd_parse(args) -> int:
    from .executor import ExecutionError, execute
    from .grammar import GrammarError, inline_corefs
    from .model import ParserModel, SessionContext
    from .transitions import IllegalAction

    model = ParserModel.load(args.model)
    onto = resolve_ontology(args.ontology)
    domain = onto.name
    traces = [] if args.trace else None
    outputs = []
    for kind, payload in _read_inputs(args.input):
        if kind == "single":
            record = {"utterance": payload}
            trace = [] if args.trace else None
            try:
                tree = model.parse(payload, onto, domain, trace=trace)
                record["mr_text"] = serialize_mr(tree)
                record["denotation"] = str(execute(tree, onto))
            except (IllegalAction, GrammarError, ExecutionError) as err:
                record["mr_text"] = None
                record["error"] = str(err)
            if traces is not None:
                traces.append({"utterance": payload, "steps": trace})
            outputs.append(record)
        else:
            session = SessionContext()
            for turn, utterance in enumerate(payload, start=1):
                record = {"utterance": utterance,
                          "session_id": len(outputs), "turn": turn}
                try:
                    tree = model.parse(utterance, onto, domain, session=session)
                    record["mr_text"] = serialize_turn(tree, turn)
                    closed = inline_corefs(
                        tree, {i: f for i, f in
                               enumerate(session.fragments[:-1], start=1)})
                    record["denotation"] = str(execute(closed, onto))
                except (IllegalAction, GrammarError, ExecutionError) as err:
                    record["mr_text"] = None
                    record["error"] = str(err)
                outputs.append(record)
    text = "\n".join(json.dumps(r, sort_keys=True) for r in outputs) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if traces is not None:
        Path(args.trace).write_text(
            "".join(json.dumps(t, sort_keys=True) + "\n" for t in traces),
            encoding="utf-8")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_single, session_score, structure_prf
    from .generator import SessionPlan, links_of
    from .grammar import GrammarError

    onto = resolve_ontology(args.ontology)
    gold_records = load_corpus(args.gold)
    pred_records = load_corpus(args.pred)

    gold_singles = [r for r in gold_records if r.get("session_id") is None]
    pred_by_key = {}
    for r in pred_records:
        key = (r.get("session_id"), r.get("turn"), r["utterance"])
        pred_by_key[key] = r

    def tree_of(record, antecedent_types=None):
        if record is None or record.get("mr_text") in (None, ""):
            return None
        try:
            return parse_turn(record["mr_text"], onto, antecedent_types)
        except GrammarError:
            return None

    report = None
    if gold_singles:
        pairs = []
        depths = []
        for r in gold_singles:
            pred = pred_by_key.get((None, None, r["utterance"]))
            gold_tree = parse_mr(r["mr_text"], onto)
            pairs.append((tree_of(pred), gold_tree))
            depths.append(len(r["templates"]))
        report = evaluate_single(pairs, onto, depths)

    gold_sessions = {}
    for r in gold_records:
        if r.get("session_id") is not None:
            gold_sessions.setdefault(r["session_id"], []).append(r)
    if gold_sessions:
        plans = []
        preds = []
        for sid in sorted(gold_sessions, key=str):
            rows = sorted(gold_sessions[sid], key=lambda r: r["turn"])
            types = {}
            fragments = []
            pred_trees = []
            for i, row in enumerate(rows, start=1):
                tree = parse_turn(row["mr_text"], onto, types)
                types[i] = type_of(tree, onto, types)
                fragments.append(tree)
                pred_row = pred_by_key.get((sid, row["turn"], row["utterance"]))
                pred_trees.append(tree_of(pred_row, types))
            plans.append(SessionPlan(tuple(fragments),
                                     links_of(fragments),
                                     rows[0]["structure"]))
            preds.append(pred_trees)
        report = session_score(preds, plans, onto)
        for structure in ("exploration", "merging", "unrelated"):
            if any(p.structure == structure for p in plans):
                report.structure_prf[structure] = structure_prf(
                    preds, plans, structure)

    if report is None:
        print("no gold records found", file=sys.stderr)
        return 1
    sys.stdout.write(report.text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.record(), sort_keys=True)
                                  + "\n", encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server
    run_server(ontologies=[resolve_ontology(n) for n in args.ontology],
               port=args.port, log_path=args.commit_log)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ontoparse",
        description="Ontology-driven semantic parsing workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample meaning representations")
    p.add_argument("--ontology", required=True)
    p.add_argument("--mode", choices=["single", "sequential"], default="single")
    p.add_argument("--structure", choices=STRUCTURES, default=None)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--max-fragments", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build-corpus", help="synthesize a training corpus")
    p.add_argument("--ontology", required=True)
    p.add_argument("--mode", choices=["single", "sequential"], default="single")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--max-fragments", type=int, default=4)
    p.add_argument("--synonym-prob", type=float, default=0.3)
    p.add_argument("--drop-prob", type=float, default=0.2)
    p.add_argument("--op-word-prob", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("train", help="train the parser on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--hidden", type=int, default=150)
    p.add_argument("--word-dim", type=int, default=50)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--context", action="store_true",
                   help="context-dependent decoding for sessions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse utterances with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--trace", help="write per-step decode traces to this file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the template authoring service")
    p.add_argument("--ontology", nargs="+", required=True)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--commit-log", default="commits.jsonl")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OntologyError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
