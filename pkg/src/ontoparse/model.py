"""Transition-based neural semantic parser over derivation trees.

A bidirectional recurrent encoder reads the utterance; a stack-structured
recurrent decoder mirrors the transition stack and predicts one action per
step through an attention-fed softmax, with illegal actions masked out.
Terminal categories are refined by per-domain value classifiers, and
co-referential variables are resolved with a self-attention scorer over the
session's previous utterance vectors.  Training is teacher-forced on oracle
action sequences with summed cross-entropy over action, value, and
co-reference predictions, updated by momentum SGD one utterance at a time.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .nn import tensor as T
from .grammar import Cat, MrNode, MrType, Rule, format_number, type_of
from .ontology import Ontology
from .transitions import (
    ACTION_INVENTORY, INITIAL, Action, Derivation, IllegalAction, NT, RED,
    TER, TransitionConfig, effective_category, legal_actions, oracle,
    slot_legal_values, step,
)

UNK = "<unk>"

VALUE_CATS = (Cat.ENTITY_TYPE, Cat.BINARY_PRED, Cat.UNARY_PRED, Cat.ENTITY,
              Cat.NUMBER)
COREF_CATS = (Cat.COREF, Cat.UNION_COREF, Cat.INTERSECTION_COREF)


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 50
    rule_dim: int = 50
    hidden: int = 150
    attn_dim: int = 150
    feat_dim: int = 150
    coref_dim: int = 150
    dropout: float = 0.5
    context_mode: bool = False
    decode_budget: int = 120
    depth_cap: int = 8


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lr: float = 0.1
    momentum: float = 0.9
    clip_norm: float = 5.0
    epochs: int = 30
    halve_after: int = 3     # epochs of stalled validation before halving lr
    patience: int = 8        # epochs of stalled validation before stopping
    log: bool = False


def build_vocab(utterances: Sequence[str]) -> Dict[str, int]:
    vocab = {UNK: 0}
    for utterance in utterances:
        for token in utterance.split():
            vocab.setdefault(token, len(vocab))
    return vocab


def domain_inventories(onto: Ontology) -> Dict[str, List[str]]:
    """Closed value inventory per predictable terminal category."""
    return {
        Cat.ENTITY_TYPE.value: [t.id for t in onto.entity_types],
        Cat.BINARY_PRED.value: [p.id for p in onto.binary_predicates],
        Cat.UNARY_PRED.value: [p.id for p in onto.unary_predicates],
        Cat.ENTITY.value: ([e.id for e in onto.entities]
                           + [v for p in onto.binary_predicates for v in p.values]),
        Cat.NUMBER.value: [format_number(v) for v in
                           sorted(set(onto.number_pool()) | set(onto.count_pool()))],
    }


@dataclass
class SessionContext:
    """Per-session state: one utterance vector per completed turn."""
    vectors: List[T.Tensor] = field(default_factory=list)
    types: Dict[int, MrType] = field(default_factory=dict)
    fragments: List[MrNode] = field(default_factory=list)

    def add(self, vector: T.Tensor, mr: Optional[MrNode], mr_type: Optional[MrType]):
        self.vectors.append(vector)
        index = len(self.vectors)
        if mr_type is not None:
            self.types[index] = mr_type
        if mr is not None:
            self.fragments.append(mr)


@dataclass
class EncoderStates:
    keys: List[T.Tensor]          # one concatenated vector per token
    projected: List[T.Tensor]     # attention key projections, cached
    utterance: T.Tensor           # [forward final : backward first]


class _StackEntry:
    __slots__ = ("open", "h", "c", "emb", "rule")

    def __init__(self, open_, h, c, emb, rule=None):
        self.open = open_
        self.h = h
        self.c = c
        self.emb = emb
        self.rule = rule


class DecodeState:
    """Transition configuration zipped with the decoder's stack states."""

    def __init__(self, config: TransitionConfig, hidden: int):
        self.config = config
        self.stack: List[_StackEntry] = []
        self._h0, self._c0 = nn.lstm_init(hidden)

    def top_state(self) -> Tuple[T.Tensor, T.Tensor]:
        if self.stack:
            return self.stack[-1].h, self.stack[-1].c
        return self._h0, self._c0

    @property
    def query(self) -> T.Tensor:
        return self.top_state()[0]

    @property
    def depth(self) -> int:
        return sum(1 for e in self.stack if e.open)


class ParserModel:
    def __init__(self, config: ModelConfig, vocab: Dict[str, int],
                 domains: Dict[str, Dict[str, List[str]]], seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.domains = domains
        self.params = nn.ParamStore(seed=seed)
        self.action_index = {a.spell(): i for i, a in enumerate(ACTION_INVENTORY)}
        self._dropout_rng = np.random.default_rng(seed + 1)
        self.train_mode = False
        c = config
        p = self.params
        p.new("emb_word", len(vocab), c.word_dim)
        p.new("emb_action", len(ACTION_INVENTORY), c.rule_dim)
        p.new("enc_fwd_w", 4 * c.hidden, c.hidden + c.word_dim)
        p.new("enc_fwd_b", 4 * c.hidden)
        p.new("enc_bwd_w", 4 * c.hidden, c.hidden + c.word_dim)
        p.new("enc_bwd_b", 4 * c.hidden)
        p.new("dec_w", 4 * c.hidden, c.hidden + c.rule_dim)
        p.new("dec_b", 4 * c.hidden)
        p.new("att_wb", c.attn_dim, 2 * c.hidden)
        p.new("att_ws", c.attn_dim, c.hidden)
        p.new("att_v", c.attn_dim)
        p.new("act_wf", c.feat_dim, 2 * c.hidden + c.hidden + 2 * c.hidden)
        p.new("act_out", len(ACTION_INVENTORY), c.feat_dim)
        p.new("val_wf", c.feat_dim, 2 * c.hidden + c.hidden)
        p.new("comp_wu", c.rule_dim, 2 * c.rule_dim)
        # bridge from the utterance vector to the decoder's bottom state
        p.new("dec_init", c.hidden, 2 * c.hidden)
        p.new("coref_wi", c.coref_dim, 2 * c.hidden)
        p.new("coref_wx", c.coref_dim, 2 * c.hidden)
        p.new("coref_v", c.coref_dim)
        for domain, inventories in sorted(domains.items()):
            for cat_name, values in sorted(inventories.items()):
                if values:
                    p.new(f"val_out:{domain}:{cat_name}", len(values), c.feat_dim)

    # -- encoding ----------------------------------------------------------

    def token_ids(self, utterance: str) -> List[int]:
        return [self.vocab.get(tok, self.vocab[UNK])
                for tok in utterance.split()]

    def encode(self, utterance: str) -> EncoderStates:
        ids = self.token_ids(utterance)
        if not ids:
            raise ValueError("cannot encode an empty utterance")
        p = self.params
        embs = [T.row(p["emb_word"], i) for i in ids]
        h, c = nn.lstm_init(self.config.hidden)
        forward = []
        for x in embs:
            h, c = nn.lstm_step(p["enc_fwd_w"], p["enc_fwd_b"], x, h, c)
            forward.append(h)
        h, c = nn.lstm_init(self.config.hidden)
        backward = [None] * len(embs)
        for i in range(len(embs) - 1, -1, -1):
            h, c = nn.lstm_step(p["enc_bwd_w"], p["enc_bwd_b"], embs[i], h, c)
            backward[i] = h
        keys = [T.concat([f, b]) for f, b in zip(forward, backward)]
        utterance_vec = T.concat([forward[-1], backward[0]])
        projected = nn.project_keys(keys, p["att_wb"])
        return EncoderStates(keys, projected, utterance_vec)

    # -- decoder state updates ----------------------------------------------

    def initial_state(self, encoder: Optional[EncoderStates] = None
                      ) -> DecodeState:
        state = DecodeState(INITIAL, self.config.hidden)
        if encoder is not None:
            state._h0 = T.tanh(T.matvec(self.params["dec_init"],
                                        encoder.utterance))
        return state

    def _action_embedding(self, action: Action) -> T.Tensor:
        return T.row(self.params["emb_action"],
                     self.action_index[action.stripped().spell()])

    def apply_action(self, state: DecodeState, action: Action, onto: Ontology,
                     coref_types: Optional[Mapping[int, MrType]] = None
                     ) -> DecodeState:
        """Push/pop the decoder stack in lockstep with the transition."""
        new = DecodeState(step(state.config, action, onto, coref_types),
                          self.config.hidden)
        new.stack = list(state.stack)
        new._h0, new._c0 = state._h0, state._c0
        p = self.params
        if action.op in ("NT", "TER"):
            x = self._action_embedding(action)
            h, c = nn.lstm_step(p["dec_w"], p["dec_b"], x, *state.top_state())
            new.stack.append(_StackEntry(action.op == "NT", h, c, x,
                                         action.rule))
        else:  # RED
            children = []
            while new.stack and not new.stack[-1].open:
                children.append(new.stack.pop())
            marker = new.stack.pop()
            children.reverse()
            p_u = marker.emb
            c_u = T.average([e.emb for e in children]) if children else p_u
            u = T.matvec(p["comp_wu"], T.concat([p_u, c_u]))
            h, c = nn.lstm_step(p["dec_w"], p["dec_b"], u, *new.top_state())
            new.stack.append(_StackEntry(False, h, c, u))
        return new

    # -- classifiers ---------------------------------------------------------

    def _attend(self, encoder: EncoderStates, state: DecodeState) -> T.Tensor:
        _, context = nn.soft_attention(
            encoder.keys, state.query, self.params["att_wb"],
            self.params["att_ws"], self.params["att_v"],
            projected_keys=encoder.projected)
        return context

    def _dropout(self, x: T.Tensor) -> T.Tensor:
        return T.dropout(x, self.config.dropout, self._dropout_rng,
                         self.train_mode)

    def decode_step(self, state: DecodeState, encoder: EncoderStates,
                    onto: Ontology,
                    coref_types: Optional[Mapping[int, MrType]] = None,
                    context_vec: Optional[T.Tensor] = None,
                    extra_mask: Optional[Sequence[Action]] = None) -> T.Tensor:
        """Log-probabilities over the action inventory, illegal entries at
        -inf.  Raises when no action is legal (a transition-system bug)."""
        legal = legal_actions(state.config, onto, coref_types)
        if extra_mask is not None:
            legal = legal & frozenset(extra_mask)
        if not legal:
            raise IllegalAction("complete", "no legal action at this state")
        mask = np.zeros(len(ACTION_INVENTORY), dtype=bool)
        for action in legal:
            mask[self.action_index[action.spell()]] = True
        b_bar = self._attend(encoder, state)
        if context_vec is None:
            context_vec = T.const(np.zeros(2 * self.config.hidden))
        feats = T.concat([b_bar, state.query, context_vec])
        f = self._dropout(T.tanh(T.matvec(self.params["act_wf"], feats)))
        logits = T.matvec(self.params["act_out"], f)
        return T.masked_log_softmax(logits, mask)

    def predict_value(self, cat: Cat, state: DecodeState,
                      encoder: EncoderStates, domain: str,
                      legal_values: Optional[Sequence[str]] = None) -> T.Tensor:
        """Log-probabilities over the domain's inventory for a category."""
        if domain not in self.domains:
            raise KeyError(f"unknown domain {domain!r}")
        inventory = self.domains[domain][cat.value]
        name = f"val_out:{domain}:{cat.value}"
        b_bar = self._attend(encoder, state)
        feats = T.concat([b_bar, state.query])
        f = self._dropout(T.tanh(T.matvec(self.params["val_wf"], feats)))
        logits = T.matvec(self.params[name], f)
        mask = None
        if legal_values is not None:
            allowed = set(legal_values)
            mask = np.array([v in allowed for v in inventory], dtype=bool)
        return T.masked_log_softmax(logits, mask)

    def coref_scores(self, session: SessionContext,
                     current: T.Tensor) -> T.Tensor:
        """Log-probabilities over the session's previous utterances."""
        if not session.vectors:
            raise IllegalAction("type_mismatch",
                                "co-reference with no prior utterances")
        p = self.params
        qx = T.matvec(p["coref_wx"], current)
        scores = [T.dot(p["coref_v"], T.tanh(T.add(T.matvec(p["coref_wi"], xi), qx)))
                  for xi in session.vectors]
        return T.masked_log_softmax(T.stack_scalars(scores))

    def resolve_coref(self, cat: Cat, session: SessionContext,
                      current: T.Tensor,
                      legal: Sequence) -> Tuple[int, ...]:
        """Most probable legal antecedent index (or pair, for set merges)."""
        logp = self.coref_scores(session, current).data
        if cat == Cat.COREF:
            candidates = [i for i in legal]
            best = max(candidates, key=lambda i: logp[i - 1])
            return (best,)
        best_pair = max(legal, key=lambda pair: logp[pair[0] - 1] + logp[pair[1] - 1])
        return tuple(best_pair)

    def context_vector(self, session: SessionContext,
                       current: T.Tensor) -> Optional[T.Tensor]:
        if not self.config.context_mode or not session.vectors:
            return None
        logp = self.coref_scores(session, current)
        weights = T.Tensor(np.exp(logp.data), (logp,))

        def bw(g):
            logp.add_grad(g * weights.data)
        weights._backward = bw
        return T.weighted_sum(weights, session.vectors)

    # -- losses ---------------------------------------------------------------

    def sequence_loss(self, utterance: str, derivation: Derivation,
                      domain: str, onto: Ontology,
                      session: Optional[SessionContext] = None
                      ) -> Tuple[T.Tensor, T.Tensor]:
        """Teacher-forced total loss; returns (loss, utterance vector)."""
        encoder = self.encode(utterance)
        state = self.initial_state(encoder)
        coref_types = dict(session.types) if session else None
        context_vec = (self.context_vector(session, encoder.utterance)
                       if session else None)
        terms: List[T.Tensor] = []
        for action in derivation.actions:
            logp = self.decode_step(state, encoder, onto, coref_types,
                                    context_vec)
            idx = self.action_index[action.stripped().spell()]
            terms.append(T.neg(T.pick(logp, idx)))
            if action.op == "TER" and action.cat in VALUE_CATS:
                value_logp = self.predict_value(action.cat, state, encoder,
                                                domain)
                inventory = self.domains[domain][action.cat.value]
                key = (format_number(action.value)
                       if action.cat == Cat.NUMBER else action.value)
                terms.append(T.neg(T.pick(value_logp, inventory.index(key))))
            elif action.op == "TER" and action.cat in COREF_CATS:
                logp_ante = self.coref_scores(session, encoder.utterance)
                for ref in action.refs:
                    terms.append(T.neg(T.pick(logp_ante, ref - 1)))
            state = self.apply_action(state, action, onto, coref_types)
        return T.add_many(terms), encoder.utterance

    # -- decoding ---------------------------------------------------------------

    def _pressure_mask(self, state: DecodeState) -> Optional[List[Action]]:
        """Near the depth cap, keep only actions that close subtrees fast."""
        if state.config.depth < self.config.depth_cap:
            return None
        allowed = [RED, NT(Rule.LOOKUP_KEY), NT(Rule.LOOKUP_VALUE)]
        allowed += [Action("TER", cat=c) for c in Cat]
        return allowed

    def parse(self, utterance: str, onto: Ontology, domain: str,
              session: Optional[SessionContext] = None,
              trace: Optional[List[dict]] = None) -> MrNode:
        """Constrained greedy decoding to a complete, well-typed tree."""
        encoder = self.encode(utterance)
        state = self.initial_state(encoder)
        coref_types = dict(session.types) if session else None
        context_vec = (self.context_vector(session, encoder.utterance)
                       if session else None)
        for _ in range(self.config.decode_budget):
            if state.config.complete:
                break
            logp = self.decode_step(state, encoder, onto, coref_types,
                                    context_vec,
                                    extra_mask=self._pressure_mask(state))
            choice = ACTION_INVENTORY[int(np.argmax(logp.data))]
            action = choice
            if choice.op == "TER":
                action = self._bind_terminal(choice, state, encoder, onto,
                                             domain, session, coref_types)
            if trace is not None:
                alpha, _ = nn.soft_attention(
                    encoder.keys, state.query, self.params["att_wb"],
                    self.params["att_ws"], self.params["att_v"],
                    projected_keys=encoder.projected)
                trace.append({"action": action.spell(),
                              "value": action.value,
                              "refs": list(action.refs),
                              "attention": [round(float(a), 6)
                                            for a in alpha.data]})
            state = self.apply_action(state, action, onto, coref_types)
        if not state.config.complete:
            raise IllegalAction("budget",
                                f"no complete derivation within "
                                f"{self.config.decode_budget} actions")
        tree = state.config.root()
        if session is not None:
            mr_type = type_of(tree, onto, coref_types)
            session.add(encoder.utterance, tree, mr_type)
        return tree

    def _bind_terminal(self, choice: Action, state: DecodeState,
                       encoder: EncoderStates, onto: Ontology, domain: str,
                       session: Optional[SessionContext],
                       coref_types) -> Action:
        cat = effective_category(state.config, choice.cat, onto, coref_types)
        legal = slot_legal_values(state.config, cat, onto, coref_types)
        if cat in COREF_CATS:
            refs = self.resolve_coref(cat, session, encoder.utterance, legal)
            return TER(cat, refs=refs)
        logp = self.predict_value(cat, state, encoder, domain,
                                  legal_values=[
                                      format_number(v) if cat == Cat.NUMBER
                                      else v for v in legal])
        inventory = self.domains[domain][cat.value]
        key = inventory[int(np.argmax(logp.data))]
        value = float(key) if cat == Cat.NUMBER else key
        return TER(cat, value)

    def parse_session(self, utterances: Sequence[str], onto: Ontology,
                      domain: str) -> List[MrNode]:
        session = SessionContext()
        return [self.parse(u, onto, domain, session=session)
                for u in utterances]

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        meta = {
            "config": self.config.__dict__,
            "vocab": self.vocab,
            "domains": self.domains,
            "version": 1,
        }
        nn.save_checkpoint(path, self.params.arrays(), meta)

    @classmethod
    def load(cls, path) -> "ParserModel":
        meta, arrays = nn.load_checkpoint(path)
        config = ModelConfig(**meta["config"])
        model = cls(config, meta["vocab"], meta["domains"])
        model.params.load_arrays(arrays)
        return model


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainItem:
    utterance: str
    derivation: Derivation
    tree: MrNode
    domain: str


@dataclass
class SessionItem:
    turns: List[TrainItem]
    types: List[MrType]


class DivergenceError(RuntimeError):
    pass


def items_from_records(records: Sequence[dict],
                       ontos: Mapping[str, Ontology]) -> List:
    """Corpus records -> training items (sessions grouped and ordered)."""
    from .grammar import parse_mr, parse_turn

    singles: List[TrainItem] = []
    sessions: Dict[object, List[dict]] = {}
    for record in records:
        if record.get("session_id") is None:
            onto = ontos[record["domain"]]
            tree = parse_mr(record["mr_text"], onto)
            singles.append(TrainItem(record["utterance"], oracle(tree), tree,
                                     record["domain"]))
        else:
            sessions.setdefault(record["session_id"], []).append(record)

    out: List = list(singles)
    for sid in sorted(sessions, key=str):
        rows = sorted(sessions[sid], key=lambda r: r["turn"])
        onto = ontos[rows[0]["domain"]]
        types: Dict[int, MrType] = {}
        turns: List[TrainItem] = []
        type_list: List[MrType] = []
        for i, row in enumerate(rows, start=1):
            tree = parse_turn(row["mr_text"], onto, types)
            types[i] = type_of(tree, onto, types)
            type_list.append(types[i])
            turns.append(TrainItem(row["utterance"], oracle(tree), tree,
                                   row["domain"]))
        out.append(SessionItem(turns, type_list))
    return out


def train_model(model: ParserModel, items: Sequence, dev_items: Sequence,
                ontos: Mapping[str, Ontology], train_cfg: TrainConfig
                ) -> List[dict]:
    """Teacher-forced training with momentum SGD and stall-based lr halving.

    ``items`` mixes TrainItem (single-turn) and SessionItem entries.
    Returns the per-epoch metric log.
    """
    opt = nn.MomentumSGD(model.params, lr=train_cfg.lr,
                         momentum=train_cfg.momentum,
                         clip_norm=train_cfg.clip_norm)
    rng = random.Random(train_cfg.seed)
    log: List[dict] = []
    best = -1.0
    best_loss = float("inf")
    stall = 0
    since_halve = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = list(items)
        rng.shuffle(order)
        model.train_mode = True
        total = 0.0
        count = 0
        for item in order:
            model.params.zero_grad()
            if isinstance(item, SessionItem):
                losses = []
                session = SessionContext()
                for turn, mr_type in zip(item.turns, item.types):
                    loss, vector = model.sequence_loss(
                        turn.utterance, turn.derivation, turn.domain,
                        ontos[turn.domain], session=session)
                    losses.append(loss)
                    session.add(vector, turn.tree, mr_type)
                loss = T.add_many(losses)
            else:
                loss, _ = model.sequence_loss(item.utterance, item.derivation,
                                              item.domain, ontos[item.domain])
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss {value} at epoch {epoch}")
            total += value
            count += 1
            T.backward(loss)
            opt.step()
        model.train_mode = False
        val = evaluate_exact(model, dev_items, ontos) if dev_items else \
            evaluate_exact(model, items, ontos)
        entry = {"epoch": epoch, "train_loss": total / max(count, 1),
                 "val_exm": val, "lr": opt.lr}
        log.append(entry)
        if train_cfg.log:
            print(f"epoch {epoch:3d}  loss {entry['train_loss']:.4f}  "
                  f"val ExM {val:.3f}  lr {opt.lr:.4f}")
        # an epoch counts as progress if either metric moved
        improved = val > best + 1e-9
        loss_improved = entry["train_loss"] < best_loss - 1e-3
        best = max(best, val)
        best_loss = min(best_loss, entry["train_loss"])
        if improved:
            stall = 0
            since_halve = 0
        else:
            stall += 1
            if loss_improved:
                since_halve = 0
            else:
                since_halve += 1
                if since_halve >= train_cfg.halve_after:
                    opt.halve_lr()
                    since_halve = 0
            if stall >= train_cfg.patience:
                break
        if val >= 1.0:
            break
    return log


def evaluate_exact(model: ParserModel, items: Sequence,
                   ontos: Mapping[str, Ontology]) -> float:
    """Fraction of items whose greedy parse equals the gold tree."""
    correct = 0
    total = 0
    for item in items:
        if isinstance(item, SessionItem):
            session = SessionContext()
            for turn, mr_type in zip(item.turns, item.types):
                total += 1
                try:
                    prediction = model.parse(turn.utterance,
                                             ontos[turn.domain], turn.domain,
                                             session=session)
                except IllegalAction:
                    prediction = None
                    # keep turn indices aligned for the rest of the session
                    session.add(model.encode(turn.utterance).utterance,
                                None, mr_type)
                if prediction == turn.tree:
                    correct += 1
        else:
            total += 1
            try:
                if model.parse(item.utterance, ontos[item.domain],
                               item.domain) == item.tree:
                    correct += 1
            except IllegalAction:
                pass
    return correct / max(total, 1)
