"""Template-authoring HTTP service.

A human (or the browser front end) assembles a sequence of templates, fills
their slots from type-legal suggestions, previews the composed meaning
representation and its denotation, writes an utterance, and commits the
example.  Validation reuses the generator's validity checker, so the service
can never commit an MR the generator itself would reject.

Endpoints (JSON request/response bodies):

    GET  /ontologies                   inventory of loaded ontologies
    GET  /templates                    the fixed template patterns
    POST /sessions                     {"ontology": name} -> {"id": ...}
    POST /sessions/{id}/fill           manage template rows and slot fills;
                                       body without "value" lists the legal
                                       fills for a slot
    POST /sessions/{id}/validate       validate the current sequence
    GET  /sessions/{id}/preview        MR serialization plus denotation
    POST /sessions/{id}/commit         {"utterance": ...} -> stored example

Committed examples append to a JSON-lines log; replaying the log restores
them.  The port comes from --port or the ONTOPARSE_PORT environment variable.
"""
from __future__ import annotations

import json
import os
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional

from .executor import ExecutionError, execute
from .generator import validate
from .grammar import (
    DOMAIN_GENERAL, SLOTS, Cat, GrammarError, MrNode, MrType, Rule,
    Terminal, inline_corefs, serialize_mr, serialize_turn, type_of,
)
from .ontology import Ontology, UnknownId
from .templates import PATTERNS, render
from .transitions import INITIAL, NT, TER, slot_legal_values, step

SLOT_NAMES = {"type": "s", "src": "s", "set": "s",
              "pred_any": "p", "pred_numeric": "p", "pred_setcat": "p",
              "upred": "p", "val_match": "v", "numval": "v",
              "countval": "v", "numvalues": "s"}


class ServiceError(Exception):
    def __init__(self, failure_class: str, detail: str, status: int = 400):
        super().__init__(detail)
        self.failure_class = failure_class
        self.detail = detail
        self.status = status


class AuthoringSession:
    """One annotator's partial template sequence."""

    def __init__(self, session_id: str, onto: Ontology):
        self.id = session_id
        self.onto = onto
        # rows: [{"rule": spelling, "fills": {"s": token, ...}}]
        self.rows: List[dict] = []
        self.lock = threading.Lock()

    # -- template row management -------------------------------------------

    def add_row(self, rule_spelling: str) -> dict:
        rule = _rule_by_spelling(rule_spelling)
        self.rows.append({"rule": rule.value, "fills": {}})
        return self.view()

    def remove_row(self, index: int) -> dict:
        if not 1 <= index <= len(self.rows):
            raise ServiceError("unknown_id", f"no template row {index}")
        del self.rows[index - 1]
        return self.view()

    def set_fill(self, index: int, slot: str, value: str) -> dict:
        row = self._row(index)
        rule = _rule_by_spelling(row["rule"])
        if slot not in _slots_of(rule):
            raise ServiceError("wrong_type",
                               f"{rule.value} has no ${slot} slot")
        row["fills"][slot] = value
        return self.view()

    def _row(self, index: int) -> dict:
        if not 1 <= index <= len(self.rows):
            raise ServiceError("unknown_id", f"no template row {index}")
        return self.rows[index - 1]

    # -- building fragments ---------------------------------------------------

    def fragments(self) -> List[MrNode]:
        """Rows -> MR fragments; raises ServiceError on the first bad row."""
        out: List[MrNode] = []
        for position, row in enumerate(self.rows, start=1):
            out.append(_fragment_of(row, position, self.onto))
        return out

    def legal_fills(self, index: int, slot: str) -> List[dict]:
        """Type-legal options for one slot, given all earlier rows."""
        row = self._row(index)
        rule = _rule_by_spelling(row["rule"])
        if slot not in _slots_of(rule):
            raise ServiceError("wrong_type", f"{rule.value} has no ${slot} slot")
        prior = []
        for position, earlier in enumerate(self.rows[:index - 1], start=1):
            prior.append(_fragment_of(earlier, position, self.onto))
        types: Dict[int, MrType] = {}
        for i, fragment in enumerate(prior, start=1):
            types[i] = type_of(fragment, self.onto, types)

        config = step(INITIAL, NT(rule), self.onto, types)
        slot_kinds = SLOTS[rule]
        target = [k for k in slot_kinds if SLOT_NAMES[k] == slot][0]
        # walk earlier slots of this row using their current fills
        for kind in slot_kinds:
            if kind == target:
                break
            name = SLOT_NAMES[kind]
            token = row["fills"].get(name)
            if token is None:
                raise ServiceError("incomplete",
                                   f"fill ${name} before requesting ${slot}")
            terminal = _resolve_token(token, kind, self.onto, types)
            config = step(config, TER(terminal.category, terminal.value,
                                      terminal.refs), self.onto, types)
        options: List[dict] = []
        for cat in (Cat.ENTITY_TYPE, Cat.BINARY_PRED, Cat.UNARY_PRED,
                    Cat.ENTITY, Cat.NUMBER, Cat.COREF):
            for value in slot_legal_values(config, cat, self.onto, types):
                if cat == Cat.COREF:
                    options.append({"token": f"Result_{value}",
                                    "display": f"Result_{value}"})
                elif cat == Cat.NUMBER:
                    from .grammar import format_number
                    options.append({"token": format_number(value),
                                    "display": format_number(value)})
                else:
                    options.append({"token": value,
                                    "display": self.onto.lexicon.get(value, value)})
        return options

    # -- validation / preview ---------------------------------------------------

    def check(self) -> dict:
        if not self.rows:
            raise ServiceError("incomplete", "no templates in the session")
        fragments = self.fragments()
        for position, fragment in enumerate(fragments, start=1):
            violation = validate(fragment, fragments[:position - 1], self.onto)
            if violation is not None:
                failure = {"type": "wrong_type"}.get(violation.kind,
                                                     violation.kind)
                raise ServiceError(failure,
                                   f"template {position}: {violation.detail}")
        return {"ok": True, "templates": self.template_lines(fragments)}

    def template_lines(self, fragments) -> List[str]:
        return render(fragments, self.onto).lines()

    def preview(self) -> dict:
        result = self.check()
        fragments = self.fragments()
        antecedents = {i: f for i, f in enumerate(fragments, start=1)}
        tree = inline_corefs(fragments[-1], antecedents)
        denotation = execute(tree, self.onto)
        return {
            "ok": True,
            "templates": result["templates"],
            "mr_text": serialize_mr(tree),
            "turns": [serialize_turn(f, i)
                      for i, f in enumerate(fragments, start=1)],
            "denotation": str(denotation),
        }

    def view(self) -> dict:
        rows = []
        for position, row in enumerate(self.rows, start=1):
            rule = _rule_by_spelling(row["rule"])
            rows.append({
                "index": position,
                "rule": row["rule"],
                "pattern": PATTERNS[rule],
                "slots": _slots_of(rule),
                "fills": dict(row["fills"]),
            })
        return {"id": self.id, "ontology": self.onto.name, "templates": rows}


def _rule_by_spelling(spelling: str) -> Rule:
    for rule in DOMAIN_GENERAL:
        if rule.value == spelling:
            return rule
    raise ServiceError("unknown_id", f"unknown template {spelling!r}")


def _slots_of(rule: Rule) -> List[str]:
    return [SLOT_NAMES[kind] for kind in SLOTS[rule]]


_NUM_RE = re.compile(r"^\d+(\.\d+)?$")
_REF_RE = re.compile(r"^Result_(\d+)$")


def _resolve_token(token: str, slot_kind: str, onto: Ontology,
                   types: Dict[int, MrType]) -> Terminal:
    token = token.strip()
    m = _REF_RE.match(token)
    if m:
        return Terminal(Cat.COREF, refs=(int(m.group(1)),))
    if slot_kind == "type":
        return Terminal(Cat.ENTITY_TYPE, token)
    if slot_kind in ("pred_any", "pred_numeric", "pred_setcat"):
        return Terminal(Cat.BINARY_PRED, token)
    if slot_kind == "upred":
        return Terminal(Cat.UNARY_PRED, token)
    if _NUM_RE.match(token):
        return Terminal(Cat.NUMBER, float(token))
    return Terminal(Cat.ENTITY, token)


def _fragment_of(row: dict, position: int, onto: Ontology) -> MrNode:
    rule = _rule_by_spelling(row["rule"])
    children = []
    for kind in SLOTS[rule]:
        name = SLOT_NAMES[kind]
        token = row["fills"].get(name)
        if token is None:
            raise ServiceError("incomplete",
                               f"template {position}: ${name} is not filled")
        terminal = _resolve_token(token, kind, onto, {})
        if terminal.category in (Cat.ENTITY_TYPE, Cat.BINARY_PRED,
                                 Cat.UNARY_PRED, Cat.ENTITY):
            if not onto.declared(terminal.value):
                raise ServiceError(
                    "unknown_id",
                    f"template {position}: {terminal.value!r} is not part "
                    f"of the {onto.name} domain")
        children.append(terminal)
    try:
        return MrNode(rule, tuple(children))
    except GrammarError as err:
        raise ServiceError("wrong_type", str(err))


class AuthoringService:
    def __init__(self, ontologies: List[Ontology], log_path="commits.jsonl"):
        self.ontologies = {onto.name: onto for onto in ontologies}
        self.sessions: Dict[str, AuthoringSession] = {}
        self.log_path = Path(log_path)
        self.commits: List[dict] = []
        self.counter = 0
        self.lock = threading.Lock()
        if self.log_path.exists():
            for line in self.log_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.commits.append(json.loads(line))

    # -- handlers -------------------------------------------------------------

    def list_ontologies(self) -> dict:
        out = []
        for name, onto in sorted(self.ontologies.items()):
            out.append({
                "name": name,
                "entity_types": [t.id for t in onto.entity_types],
                "binary_predicates": [p.id for p in onto.binary_predicates],
                "unary_predicates": [p.id for p in onto.unary_predicates],
                "entities": [e.id for e in onto.entities],
            })
        return {"ontologies": out}

    def list_templates(self) -> dict:
        return {"templates": [
            {"rule": rule.value, "pattern": PATTERNS[rule],
             "slots": _slots_of(rule)}
            for rule in DOMAIN_GENERAL]}

    def create_session(self, body: dict) -> dict:
        name = body.get("ontology")
        onto = self.ontologies.get(name)
        if onto is None:
            raise ServiceError("unknown_id", f"no ontology named {name!r}", 404)
        with self.lock:
            self.counter += 1
            session_id = f"s{self.counter}"
            self.sessions[session_id] = AuthoringSession(session_id, onto)
        return self.sessions[session_id].view()

    def session(self, session_id: str) -> AuthoringSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError("unknown_id", f"no session {session_id!r}", 404)
        return session

    def fill(self, session_id: str, body: dict) -> dict:
        session = self.session(session_id)
        with session.lock:
            if "add_template" in body:
                return session.add_row(body["add_template"])
            if "remove_template" in body:
                return session.remove_row(int(body["remove_template"]))
            index = int(body["index"])
            slot = body["slot"]
            if "value" not in body:
                return {"options": session.legal_fills(index, slot)}
            return session.set_fill(index, slot, str(body["value"]))

    def validate_session(self, session_id: str) -> dict:
        session = self.session(session_id)
        with session.lock:
            return session.check()

    def preview(self, session_id: str) -> dict:
        session = self.session(session_id)
        with session.lock:
            return session.preview()

    def commit(self, session_id: str, body: dict) -> dict:
        session = self.session(session_id)
        utterance = (body.get("utterance") or "").strip()
        if not utterance:
            raise ServiceError("incomplete", "utterance must be non-empty")
        with session.lock:
            preview = session.preview()   # validates; never commits invalid MRs
        record = {
            "ontology": session.onto.name,
            "utterance": utterance,
            "mr_text": preview["mr_text"],
            "templates": preview["templates"],
        }
        with self.lock:
            self.commits.append(record)
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return {"ok": True, "example": record,
                "total_commits": len(self.commits)}


def make_handler(service: AuthoringService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, status: int, payload: dict):
            body = json.dumps(payload, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if not length:
                return {}
            return json.loads(self.rfile.read(length).decode("utf-8"))

        def _route(self, method: str):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if method == "GET" and parts == ["ontologies"]:
                    return self._send(200, service.list_ontologies())
                if method == "GET" and parts == ["templates"]:
                    return self._send(200, service.list_templates())
                if method == "POST" and parts == ["sessions"]:
                    return self._send(200, service.create_session(self._body()))
                if len(parts) == 3 and parts[0] == "sessions":
                    session_id, action = parts[1], parts[2]
                    if method == "POST" and action == "fill":
                        return self._send(200, service.fill(session_id,
                                                            self._body()))
                    if method == "POST" and action == "validate":
                        return self._send(200,
                                          service.validate_session(session_id))
                    if method == "GET" and action == "preview":
                        return self._send(200, service.preview(session_id))
                    if method == "POST" and action == "commit":
                        return self._send(200, service.commit(session_id,
                                                              self._body()))
                return self._send(404, {"ok": False,
                                        "failure_class": "unknown_id",
                                        "detail": f"no route {self.path}"})
            except ServiceError as err:
                return self._send(err.status, {
                    "ok": False, "failure_class": err.failure_class,
                    "detail": err.detail})
            except (GrammarError, ExecutionError, UnknownId) as err:
                return self._send(400, {"ok": False,
                                        "failure_class": "wrong_type",
                                        "detail": str(err)})

        def do_GET(self):
            self._route("GET")

        def do_POST(self):
            self._route("POST")

        def do_OPTIONS(self):
            self._send(200, {})

    return Handler


def run_server(ontologies: List[Ontology], port: Optional[int] = None,
               log_path="commits.jsonl") -> ThreadingHTTPServer:
    if port is None:
        port = int(os.environ.get("ONTOPARSE_PORT", "8765"))
    service = AuthoringService(ontologies, log_path)
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(service))
    server.service = service
    print(f"authoring service on http://127.0.0.1:{port}")
    server.serve_forever()
    return server


def start_background(ontologies: List[Ontology], port: int = 0,
                     log_path="commits.jsonl") -> ThreadingHTTPServer:
    """Start the service on a daemon thread (used by tests and the UI dev
    loop); returns the server object with ``.service`` attached.  Port 0
    picks a free ephemeral port (read it from ``server.server_address``)."""
    service = AuthoringService(ontologies, log_path)
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(service))
    server.service = service
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
