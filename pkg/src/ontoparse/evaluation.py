"""Scoring: exact match, denotation-level match, session averages, and
per-coreference-structure precision/recall/F1."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .executor import ExecutionError, denotation_equal, execute
from .generator import SessionPlan
from .grammar import (
    Cat, GrammarError, MrNode, inline_corefs, iter_terminals,
)
from .ontology import Ontology


def exact_match(pred: Optional[MrNode], gold: MrNode) -> bool:
    """Strict structural tree equality.

    Interchangeable rule applications (e.g. two stacked filters in either
    order) count as different trees here; the denotation-level metric is the
    one that credits them.
    """
    return pred == gold


def semantic_match(pred: Optional[MrNode], gold: MrNode, onto: Ontology,
                   pred_antecedents: Optional[Mapping[int, MrNode]] = None,
                   gold_antecedents: Optional[Mapping[int, MrNode]] = None,
                   log: Optional[List[str]] = None) -> bool:
    """Denotation equality after co-reference inlining.

    A prediction that fails to execute counts as a non-match (and is
    logged), so evaluation survives malformed output.
    """
    if pred is None:
        return False
    try:
        pred_closed = inline_corefs(pred, pred_antecedents or {})
        gold_closed = inline_corefs(gold, gold_antecedents or {})
        return denotation_equal(execute(pred_closed, onto),
                                execute(gold_closed, onto))
    except (GrammarError, ExecutionError) as err:
        if log is not None:
            log.append(str(err))
        return False


@dataclass
class EvalReport:
    exm: float
    sem: float
    count: int
    by_depth: Dict[int, Tuple[float, float, int]] = field(default_factory=dict)
    by_structure: Dict[str, Tuple[float, float, int]] = field(default_factory=dict)
    structure_prf: Dict[str, Tuple[float, float, float]] = field(default_factory=dict)
    session_count: int = 0

    def text(self) -> str:
        lines = [f"{'':12} {'ExM':>7} {'SeM':>7} {'N':>6}",
                 f"{'all':12} {self.exm:7.3f} {self.sem:7.3f} {self.count:6d}"]
        for depth in sorted(self.by_depth):
            exm, sem, n = self.by_depth[depth]
            lines.append(f"{f'depth {depth}':12} {exm:7.3f} {sem:7.3f} {n:6d}")
        for structure in sorted(self.by_structure):
            exm, sem, n = self.by_structure[structure]
            lines.append(f"{structure:12} {exm:7.3f} {sem:7.3f} {n:6d}")
        for structure in sorted(self.structure_prf):
            p, r, f1 = self.structure_prf[structure]
            lines.append(f"{structure:12} P {p:5.3f}  R {r:5.3f}  F1 {f1:5.3f}")
        if self.session_count:
            lines.append(f"{'sessions':12} {self.session_count:6d}")
        return "\n".join(lines) + "\n"

    def record(self) -> dict:
        return {
            "exm": self.exm, "sem": self.sem, "count": self.count,
            "by_depth": {str(k): list(v) for k, v in self.by_depth.items()},
            "by_structure": {k: list(v) for k, v in self.by_structure.items()},
            "structure_prf": {k: list(v) for k, v in self.structure_prf.items()},
            "session_count": self.session_count,
        }


def evaluate_single(pairs: Sequence[Tuple[Optional[MrNode], MrNode]],
                    onto: Ontology,
                    depths: Optional[Sequence[int]] = None) -> EvalReport:
    """Corpus-level ExM/SeM for aligned (prediction, gold) pairs."""
    per_depth: Dict[int, List[Tuple[bool, bool]]] = {}
    hits = []
    for i, (pred, gold) in enumerate(pairs):
        exm = exact_match(pred, gold)
        sem = exm or semantic_match(pred, gold, onto)
        hits.append((exm, sem))
        if depths is not None:
            per_depth.setdefault(depths[i], []).append((exm, sem))
    n = len(hits)
    report = EvalReport(
        exm=sum(e for e, _ in hits) / max(n, 1),
        sem=sum(s for _, s in hits) / max(n, 1),
        count=n)
    for depth, rows in sorted(per_depth.items()):
        report.by_depth[depth] = (
            sum(e for e, _ in rows) / len(rows),
            sum(s for _, s in rows) / len(rows), len(rows))
    return report


def session_score(pred_sessions: Sequence[Sequence[Optional[MrNode]]],
                  gold_sessions: Sequence[SessionPlan],
                  onto: Ontology) -> EvalReport:
    """Per-turn accuracies averaged within each session, then across
    sessions (macro average)."""
    session_exm = []
    session_sem = []
    by_structure: Dict[str, List[Tuple[float, float]]] = {}
    turns = 0
    for preds, plan in zip(pred_sessions, gold_sessions):
        if len(preds) != len(plan.fragments):
            raise ValueError("prediction/gold turn counts differ")
        gold_antes = {i: f for i, f in enumerate(plan.fragments, start=1)}
        exm_hits = []
        sem_hits = []
        for t, (pred, gold) in enumerate(zip(preds, plan.fragments), start=1):
            pred_antes = {i: p for i, p in enumerate(preds[:t - 1], start=1)
                          if p is not None}
            exm = exact_match(pred, gold)
            sem = exm or semantic_match(pred, gold, onto,
                                        pred_antecedents=pred_antes,
                                        gold_antecedents=gold_antes)
            exm_hits.append(exm)
            sem_hits.append(sem)
            turns += 1
        session_exm.append(sum(exm_hits) / len(exm_hits))
        session_sem.append(sum(sem_hits) / len(sem_hits))
        by_structure.setdefault(plan.structure, []).append(
            (session_exm[-1], session_sem[-1]))
    n = len(session_exm)
    report = EvalReport(
        exm=sum(session_exm) / max(n, 1),
        sem=sum(session_sem) / max(n, 1),
        count=turns, session_count=n)
    for structure, rows in sorted(by_structure.items()):
        report.by_structure[structure] = (
            sum(e for e, _ in rows) / len(rows),
            sum(s for _, s in rows) / len(rows), len(rows))
    return report


def _coref_links(fragments: Sequence[Optional[MrNode]]):
    single = set()
    merged = set()
    for i, frag in enumerate(fragments, start=1):
        if frag is None:
            continue
        for term in iter_terminals(frag):
            if term.category == Cat.COREF:
                single.add((i, term.refs[0]))
            elif term.category in (Cat.UNION_COREF, Cat.INTERSECTION_COREF):
                kind = "union" if term.category == Cat.UNION_COREF else "intersection"
                merged.add((i, kind, tuple(sorted(term.refs))))
    return single, merged


def _prf(predicted: set, gold: set) -> Tuple[float, float, float]:
    tp = len(predicted & gold)
    precision = tp / len(predicted) if predicted else (1.0 if not gold else 0.0)
    recall = tp / len(gold) if gold else 1.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return precision, recall, f1


def structure_prf(pred_sessions: Sequence[Sequence[Optional[MrNode]]],
                  gold_sessions: Sequence[SessionPlan],
                  structure: str) -> Tuple[float, float, float]:
    """Structure-specific link detection scores.

    merging: union/intersection links (turn, kind, antecedent pair);
    exploration: links whose antecedent has another consequent;
    unrelated: detection of link-free topic-shift turns.
    """
    pred_set = set()
    gold_set = set()
    for sid, (preds, plan) in enumerate(zip(pred_sessions, gold_sessions)):
        if plan.structure != structure:
            continue
        gold_single, gold_merged = _coref_links(plan.fragments)
        pred_single, pred_merged = _coref_links(preds)
        if structure == "merging":
            gold_set |= {(sid,) + link for link in gold_merged}
            pred_set |= {(sid,) + link for link in pred_merged}
        elif structure == "exploration":
            gold_set |= {(sid,) + link
                         for link in _branch_links(gold_single, gold_merged)}
            pred_set |= {(sid,) + link
                         for link in _branch_links(pred_single, pred_merged)}
        elif structure == "unrelated":
            linked_g = {i for i, frag in enumerate(plan.fragments, start=1)
                        if frag is not None and _has_link(frag)}
            linked_p = {i for i, frag in enumerate(preds, start=1)
                        if frag is not None and _has_link(frag)}
            n = len(plan.fragments)
            gold_set |= {(sid, t) for t in range(2, n + 1) if t not in linked_g}
            pred_set |= {(sid, t) for t in range(2, n + 1) if t not in linked_p}
        else:
            raise ValueError(f"no link scoring for structure {structure!r}")
    return _prf(pred_set, gold_set)


def _branch_links(single: set, merged: set) -> set:
    out_degree: Dict[int, int] = {}
    for _, antecedent in single:
        out_degree[antecedent] = out_degree.get(antecedent, 0) + 1
    for _, _, pair in merged:
        for antecedent in pair:
            out_degree[antecedent] = out_degree.get(antecedent, 0) + 1
    return {(c, a) for c, a in single if out_degree.get(a, 0) >= 2}


def _has_link(fragment: MrNode) -> bool:
    return any(t.category in (Cat.COREF, Cat.UNION_COREF, Cat.INTERSECTION_COREF)
               for t in iter_terminals(fragment))


def coref_accuracy(pred_sessions: Sequence[Sequence[Optional[MrNode]]],
                   gold_sessions: Sequence[SessionPlan],
                   structure: Optional[str] = None) -> float:
    """Fraction of gold single-antecedent links whose antecedent the
    prediction resolves identically."""
    total = 0
    correct = 0
    for preds, plan in zip(pred_sessions, gold_sessions):
        if structure is not None and plan.structure != structure:
            continue
        for t, (pred, gold) in enumerate(zip(preds, plan.fragments), start=1):
            gold_refs = [term for term in iter_terminals(gold)
                         if term.category == Cat.COREF]
            if not gold_refs:
                continue
            total += len(gold_refs)
            if pred is None:
                continue
            pred_refs = [term for term in iter_terminals(pred)
                         if term.category == Cat.COREF]
            for g, p in zip(gold_refs, pred_refs):
                if g.refs == p.refs:
                    correct += 1
    return correct / max(total, 1)
