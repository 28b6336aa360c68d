"""Training-corpus synthesis: paraphrased utterances, splits, persistence.

Crowdworkers are replaced by a deterministic synthetic paraphraser: template
sequences are flattened into utterances (result references become relative
phrases), comparison operators are worded, synonyms substituted and function
words dropped at configured probabilities.  Sequential sessions additionally
realize each co-reference with an explicit pronoun ("of those ..."), an
implicit drop, or a definite description that echoes the antecedent's most
recent constraint.

Dataset files are UTF-8 JSON lines with fields
{utterance, mr_text, templates, domain, session_id, turn, structure, split}.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .generator import GenConfig, STRUCTURES, gen_session, gen_single_turn
from .grammar import MrNode, serialize_mr, serialize_turn
from .ontology import Ontology
from .templates import Template, TemplateSeq, render, render_tree


class InsufficientUnique(Exception):
    """The generator cannot supply enough distinct examples."""


@dataclass(frozen=True)
class ParaphraseConfig:
    seed: int = 0
    synonym_prob: float = 0.3
    drop_prob: float = 0.2
    op_word_prob: float = 1.0   # chance of wording a comparison operator
    # explicit pronoun / implicit drop / definite description
    coref_mode_weights: Tuple[float, float, float] = (0.4, 0.2, 0.4)

    def __post_init__(self):
        for p in (self.synonym_prob, self.drop_prob, self.op_word_prob,
                  *self.coref_mode_weights):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")

    def derive(self, seed: int) -> "ParaphraseConfig":
        return ParaphraseConfig(seed, self.synonym_prob, self.drop_prob,
                                self.op_word_prob, self.coref_mode_weights)


@dataclass(frozen=True)
class Example:
    utterance: str
    mr: MrNode
    templates: TemplateSeq
    domain: str
    split: str = ""


@dataclass(frozen=True)
class SessionExample:
    utterances: Tuple[str, ...]
    fragments: Tuple[MrNode, ...]
    structure: str
    domain: str
    split: str = ""


DROPPABLE = ("find", "all", "of", "the", "in", "which", "is", "are")

_OP_WORDS = {
    "<": ("less than", "under", "below"),
    "<=": ("at most", "no more than"),
    ">": ("more than", "over", "above"),
    ">=": ("at least", "no less than"),
}


def tokenize(text: str) -> List[str]:
    return re.findall(r"[a-z0-9$<>=.']+", text.lower())


def _word_ops(text: str, rng: random.Random, prob: float) -> str:
    def wording(match):
        op = match.group(1)
        if rng.random() < prob:
            return f" {rng.choice(_OP_WORDS[op])} "
        return match.group(0)
    return re.sub(r" (<=|>=|<|>) ", wording, text)


def _apply_noise(text: str, cfg: ParaphraseConfig, rng: random.Random,
                 onto: Ontology) -> str:
    for phrase in sorted(onto.synonyms, key=len, reverse=True):
        if phrase.lower() in text and rng.random() < cfg.synonym_prob:
            text = text.replace(phrase.lower(),
                                rng.choice(onto.synonyms[phrase]).lower())
    kept = [tok for tok in text.split()
            if not (tok in DROPPABLE and rng.random() < cfg.drop_prob)]
    return " ".join(kept) if kept else text


def _ref_phrase(index: int, templates: Dict[int, Template]) -> str:
    t = templates[index]
    body = _resolve_refs(t.plain_text(), templates)
    if t.kind == "find":
        return body[len("find "):]
    if t.kind == "value":
        return body[len("find "):]
    if t.kind == "count":
        return "the " + body[len("count "):]
    return "the total of " + body[len("sum all elements in "):]


def _resolve_refs(text: str, templates: Dict[int, Template]) -> str:
    def sub(match):
        return _ref_phrase(int(match.group(1)), templates)
    out = text
    for _ in range(10):
        new = re.sub(r"Result_(\d+)", sub, out)
        if new == out:
            return new
        out = new
    return out


def synth_paraphrase(tseq: TemplateSeq, mode: str, cfg: ParaphraseConfig,
                     onto: Ontology):
    """Utterances for a rendered template sequence.

    ``single`` mode returns one utterance summarizing the whole sequence;
    ``sequential`` returns one utterance per template.  Deterministic given
    the config seed.
    """
    rng = random.Random(cfg.seed)
    by_index = {t.index: t for t in tseq.templates}
    if mode == "single":
        root = tseq.templates[-1]
        text = _resolve_refs(root.plain_text(), by_index)
        text = _word_ops(text.lower(), rng, cfg.op_word_prob)
        return _apply_noise(text, cfg, rng, onto)
    if mode != "sequential":
        raise ValueError(f"unknown paraphrase mode {mode!r}")

    utterances = []
    for t in tseq.templates:
        text = t.plain_text()
        refs = re.findall(r"Result_(\d+)", text)
        if refs:
            text = _coref_surface(t, by_index, cfg, rng)
        text = _word_ops(text.lower(), rng, cfg.op_word_prob)
        utterances.append(_apply_noise(text, cfg, rng, onto))
    return utterances


def _anchor_phrase(antecedent: Template) -> str:
    """A short description of what distinguishes the antecedent turn."""
    if antecedent.clauses:
        tail = antecedent.clauses[-1].tail.replace("[", "").replace("]", "")
        return tail
    return antecedent.subject


def _coref_surface(t: Template, templates: Dict[int, Template],
                   cfg: ParaphraseConfig, rng: random.Random) -> str:
    body = t.plain_text()
    mode = rng.choices(("explicit", "implicit", "definite"),
                       weights=cfg.coref_mode_weights)[0]
    subject = t.subject
    if " or " in subject or " and " in subject:
        glue = "either" if " or " in subject else "both"
        refs = re.findall(r"Result_(\d+)", subject)
        anchors = " and ".join(_anchor_phrase(templates[int(r)]) for r in refs)
        replacement = f"of {glue} the {anchors} ones"
    elif mode == "explicit":
        replacement = "of those"
    elif mode == "implicit":
        replacement = ""
    else:
        ref = int(re.findall(r"Result_(\d+)", subject)[0])
        replacement = f"of the {_anchor_phrase(templates[ref])} ones"

    if t.kind == "find":
        rest = body[len(f"find {subject}"):].strip()
        head = f"{replacement} find" if replacement else "find"
        return f"{head} {rest}".strip() if rest else head
    return body.replace(subject, replacement or "those")


# ---------------------------------------------------------------------------
# corpus building


def _derived_seed(seed: int, index: int) -> int:
    return (seed * 1000003 + index * 7919 + 12345) & 0x7FFFFFFF


def _assign_splits(n: int, splits: Tuple[float, float, float],
                   rng: random.Random) -> List[str]:
    n_train = round(splits[0] * n)
    n_dev = round(splits[1] * n)
    n_test = n - n_train - n_dev
    labels = ["train"] * n_train + ["dev"] * n_dev + ["test"] * n_test
    rng.shuffle(labels)
    return labels


def build_corpus(onto: Ontology, gen_cfg: GenConfig, para_cfg: ParaphraseConfig,
                 size: int, out_path, mode: str = "single",
                 splits: Tuple[float, float, float] = (0.7, 0.1, 0.2)
                 ) -> Tuple[List[dict], str]:
    """Generate, deduplicate, split and persist a corpus.

    Returns (records, stats report text); writes ``<out_path>`` as JSON
    lines and ``<out_path>.stats.txt``.
    """
    if size < 10:
        raise ValueError("corpus size must be at least 10")
    if mode == "single":
        records = _build_single(onto, gen_cfg, para_cfg, size, splits)
    elif mode == "sequential":
        records = _build_sequential(onto, gen_cfg, para_cfg, size, splits)
    else:
        raise ValueError(f"unknown corpus mode {mode!r}")

    stats = corpus_stats(records, mode)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    Path(str(out_path) + ".stats.txt").write_text(stats, encoding="utf-8")
    return records, stats


def _build_single(onto, gen_cfg, para_cfg, size, splits) -> List[dict]:
    seen = set()
    examples = []
    attempts = 0
    index = 0
    while len(examples) < size:
        if attempts > size * 50:
            raise InsufficientUnique(
                f"only {len(examples)} unique examples after {attempts} draws")
        attempts += 1
        seed = _derived_seed(gen_cfg.seed, index)
        index += 1
        tree = gen_single_turn(
            onto, GenConfig(seed=seed, max_fragments=gen_cfg.max_fragments,
                            retry_budget=gen_cfg.retry_budget))
        tseq = render_tree(tree, onto)
        utterance = synth_paraphrase(
            tseq, "single", para_cfg.derive(_derived_seed(para_cfg.seed, index)),
            onto)
        mr_text = serialize_mr(tree)
        key = (utterance, mr_text)
        if key in seen:
            continue
        seen.add(key)
        examples.append({
            "utterance": utterance,
            "mr_text": mr_text,
            "templates": tseq.lines(),
            "domain": onto.name,
            "session_id": None,
            "turn": None,
            "structure": None,
        })
    labels = _assign_splits(len(examples), splits,
                            random.Random(gen_cfg.seed ^ 0x5EED))
    for record, label in zip(examples, labels):
        record["split"] = label
    return examples


def _build_sequential(onto, gen_cfg, para_cfg, n_sessions, splits) -> List[dict]:
    seen = set()
    sessions = []
    attempts = 0
    index = 0
    structures = list(STRUCTURES)
    while len(sessions) < n_sessions:
        if attempts > n_sessions * 50:
            raise InsufficientUnique(
                f"only {len(sessions)} unique sessions after {attempts} draws")
        attempts += 1
        seed = _derived_seed(gen_cfg.seed, index)
        structure = random.Random(seed).choices(
            structures, weights=gen_cfg.structure_weights)[0]
        index += 1
        plan = gen_session(
            onto, GenConfig(seed=seed, min_turns=gen_cfg.min_turns,
                            max_turns=gen_cfg.max_turns,
                            min_rules_per_turn=gen_cfg.min_rules_per_turn,
                            max_rules_per_turn=gen_cfg.max_rules_per_turn,
                            max_coref_links=gen_cfg.max_coref_links,
                            cache_size=gen_cfg.cache_size,
                            retry_budget=gen_cfg.retry_budget),
            structure)
        tseq = render(plan.fragments, onto)
        utterances = synth_paraphrase(
            tseq, "sequential",
            para_cfg.derive(_derived_seed(para_cfg.seed, index)), onto)
        lines = [serialize_turn(f, i)
                 for i, f in enumerate(plan.fragments, start=1)]
        key = (tuple(utterances), tuple(lines))
        if key in seen:
            continue
        seen.add(key)
        sessions.append((plan, tseq, utterances, lines))

    labels = _assign_splits(len(sessions), splits,
                            random.Random(gen_cfg.seed ^ 0x5EED))
    records = []
    for sid, ((plan, tseq, utterances, lines), label) in enumerate(
            zip(sessions, labels)):
        for turn, (utterance, line, template) in enumerate(
                zip(utterances, lines, tseq.templates), start=1):
            records.append({
                "utterance": utterance,
                "mr_text": line,
                "templates": [template.text()],
                "domain": onto.name,
                "session_id": sid,
                "turn": turn,
                "structure": plan.structure,
                "split": label,
            })
    return records


def load_corpus(path) -> List[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def word_overlap(utterance: str, template_lines: Sequence[str]) -> int:
    template_tokens = set()
    for line in template_lines:
        template_tokens.update(tokenize(line.split("=", 1)[-1]))
    return len(set(tokenize(utterance)) & template_tokens)


def corpus_stats(records: Sequence[dict], mode: str) -> str:
    """Plain-text stats table: utterances, templates, tokens, overlap."""
    if mode == "single":
        buckets: Dict[int, List[dict]] = {}
        for record in records:
            buckets.setdefault(len(record["templates"]), []).append(record)
        lines = [f"{'depth':>5} {'Q':>6} {'Tp':>6} {'Tk':>7} {'WO':>6}"]
        for depth in sorted(buckets):
            rows = buckets[depth]
            q = len(rows)
            tp = sum(len(r["templates"]) for r in rows)
            tk = sum(len(tokenize(r["utterance"])) for r in rows) / q
            wo = sum(word_overlap(r["utterance"], r["templates"])
                     for r in rows) / q
            lines.append(f"{depth:>5} {q:>6} {tp:>6} {tk:>7.2f} {wo:>6.2f}")
        total = len(records)
        tp = sum(len(r["templates"]) for r in records)
        tk = sum(len(tokenize(r["utterance"])) for r in records) / max(total, 1)
        wo = sum(word_overlap(r["utterance"], r["templates"])
                 for r in records) / max(total, 1)
        lines.append(f"{'all':>5} {total:>6} {tp:>6} {tk:>7.2f} {wo:>6.2f}")
        return "\n".join(lines) + "\n"

    sessions: Dict[int, List[dict]] = {}
    for record in records:
        sessions.setdefault(record["session_id"], []).append(record)
    n = len(sessions)
    per = sum(len(v) for v in sessions.values()) / max(n, 1)
    tk = sum(len(tokenize(r["utterance"])) for r in records) / max(len(records), 1)
    wo = sum(word_overlap(r["utterance"], r["templates"])
             for r in records) / max(len(records), 1)
    by_structure: Dict[str, int] = {}
    for rows in sessions.values():
        by_structure[rows[0]["structure"]] = \
            by_structure.get(rows[0]["structure"], 0) + 1
    lines = [f"sessions {n}",
             f"avg utterances per session {per:.2f}",
             f"avg tokens per utterance {tk:.2f}",
             f"avg word overlap per utterance-template {wo:.2f}"]
    for structure in sorted(by_structure):
        lines.append(f"structure {structure} {by_structure[structure]}")
    return "\n".join(lines) + "\n"
