"""Domain ontology: schema, lexicon, and seed database.

An ontology file is a single JSON document with top-level sections
``entity_types``, ``binary_predicates``, ``unary_predicates``, ``entities``,
``lexicon``, ``synonyms`` and ``database``.  The loaded ontology is immutable
and parameterizes every other module: the grammar draws its terminal
inventories from it, the executor runs against its seed database, and the
lexicon supplies template fills.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple

NUMERIC = "numeric"
CATEGORICAL = "categorical"
ENTITY_REF = "entity-ref"
SET_OF_CATEGORICAL = "set-of-categorical"

VALUE_KINDS = (NUMERIC, CATEGORICAL, ENTITY_REF, SET_OF_CATEGORICAL)


class OntologyError(Exception):
    """Base class for ontology validation failures."""


class SchemaError(OntologyError):
    """Malformed document: missing or ill-typed field (named in message)."""


class DanglingReference(OntologyError):
    """An id refers to something not declared in the schema."""


class LexiconGap(OntologyError):
    """A declared id has no natural-language phrase."""


class DatabaseTypeMismatch(OntologyError):
    """A database cell's value does not match the predicate's declared range."""


class UnknownId(OntologyError, KeyError):
    """Lookup of an id that is not declared in the ontology."""


@dataclass(frozen=True)
class EntityType:
    id: str
    lexical: str


@dataclass(frozen=True)
class BinaryPredicate:
    id: str
    domain: str
    range: str
    lexical: str
    unit: str = ""
    values: Tuple[str, ...] = ()   # label inventory for categorical ranges
    target: str = ""               # entity type for entity-ref ranges


@dataclass(frozen=True)
class UnaryPredicate:
    id: str
    domain: str
    lexical: str


@dataclass(frozen=True)
class EntityConst:
    id: str
    type: str
    lexical: str


@dataclass(frozen=True)
class Ontology:
    name: str
    entity_types: Tuple[EntityType, ...]
    binary_predicates: Tuple[BinaryPredicate, ...]
    unary_predicates: Tuple[UnaryPredicate, ...]
    entities: Tuple[EntityConst, ...]
    lexicon: Mapping[str, str]
    synonyms: Mapping[str, Tuple[str, ...]]
    # database: entity type id -> row id -> predicate id -> value
    database: Mapping[str, Mapping[str, Mapping[str, Any]]]

    _by_id: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for item in (*self.entity_types, *self.binary_predicates,
                     *self.unary_predicates, *self.entities):
            self._by_id[item.id] = item

    # -- lookups ---------------------------------------------------------

    def entity_type(self, type_id: str) -> EntityType:
        item = self._by_id.get(type_id)
        if not isinstance(item, EntityType):
            raise UnknownId(f"unknown entity type: {type_id!r}")
        return item

    def binary(self, pred_id: str) -> BinaryPredicate:
        item = self._by_id.get(pred_id)
        if not isinstance(item, BinaryPredicate):
            raise UnknownId(f"unknown binary predicate: {pred_id!r}")
        return item

    def unary(self, pred_id: str) -> UnaryPredicate:
        item = self._by_id.get(pred_id)
        if not isinstance(item, UnaryPredicate):
            raise UnknownId(f"unknown unary predicate: {pred_id!r}")
        return item

    def entity(self, entity_id: str) -> EntityConst:
        item = self._by_id.get(entity_id)
        if not isinstance(item, EntityConst):
            raise UnknownId(f"unknown entity: {entity_id!r}")
        return item

    def declared(self, some_id: str) -> bool:
        return some_id in self._by_id or some_id in self._label_ids()

    def _label_ids(self) -> set:
        return {v for p in self.binary_predicates for v in p.values}

    def binary_preds_of(self, type_id: str) -> List[BinaryPredicate]:
        return [p for p in self.binary_predicates if p.domain == type_id]

    def unary_preds_of(self, type_id: str) -> List[UnaryPredicate]:
        return [p for p in self.unary_predicates if p.domain == type_id]

    def entities_of(self, type_id: str) -> List[EntityConst]:
        return [e for e in self.entities if e.type == type_id]

    def rows(self, type_id: str) -> Mapping[str, Mapping[str, Any]]:
        self.entity_type(type_id)
        return self.database.get(type_id, {})

    def cell(self, type_id: str, row_id: str, pred_id: str) -> Any:
        row = self.rows(type_id).get(row_id)
        if row is None:
            raise UnknownId(f"no database row for {row_id!r}")
        return row.get(pred_id)

    def column_values(self, pred: BinaryPredicate) -> List[Any]:
        """All values stored under a predicate, in deterministic order."""
        out = []
        for row_id in sorted(self.rows(pred.domain)):
            value = self.rows(pred.domain)[row_id].get(pred.id)
            if value is not None:
                out.append(value)
        return out

    def number_pool(self) -> List[float]:
        """Sorted distinct numeric literals observed in the database."""
        pool = set()
        for pred in self.binary_predicates:
            if pred.range == NUMERIC:
                pool.update(float(v) for v in self.column_values(pred))
        return sorted(pool)

    def count_pool(self) -> List[float]:
        """Sorted distinct cardinalities of set-valued cells."""
        pool = set()
        for pred in self.binary_predicates:
            if pred.range == SET_OF_CATEGORICAL:
                pool.update(float(len(v)) for v in self.column_values(pred))
        return sorted(pool) or [1.0]

    def to_document(self) -> dict:
        """Serializable dict in the ontology file format."""
        doc: Dict[str, Any] = {
            "name": self.name,
            "entity_types": [{"id": t.id, "lexical": t.lexical} for t in self.entity_types],
            "binary_predicates": [],
            "unary_predicates": [{"id": p.id, "domain": p.domain, "lexical": p.lexical}
                                 for p in self.unary_predicates],
            "entities": [{"id": e.id, "type": e.type, "lexical": e.lexical}
                         for e in self.entities],
            "lexicon": {k: self.lexicon[k] for k in sorted(self.lexicon)},
            "synonyms": {k: list(v) for k, v in sorted(self.synonyms.items())},
            "database": {t: {r: dict(cells) for r, cells in rows.items()}
                         for t, rows in self.database.items()},
        }
        for p in self.binary_predicates:
            entry: Dict[str, Any] = {"id": p.id, "domain": p.domain,
                                     "range": p.range, "lexical": p.lexical}
            if p.unit:
                entry["unit"] = p.unit
            if p.values:
                entry["values"] = list(p.values)
            if p.target:
                entry["target"] = p.target
            doc["binary_predicates"].append(entry)
        return doc


def lexicalize(onto: Ontology, some_id: str) -> str:
    """Natural-language phrase for a declared id."""
    phrase = onto.lexicon.get(some_id)
    if phrase is None:
        raise UnknownId(f"no lexicon entry for {some_id!r}")
    return phrase


def _require(mapping: Mapping, key: str, kind: type, where: str):
    if key not in mapping:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"{where}: field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _check_cell(pred: BinaryPredicate, value: Any, onto_entities: Mapping[str, str],
                where: str):
    if pred.range == NUMERIC:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise DatabaseTypeMismatch(
                f"{where}: numeric predicate {pred.id!r} holds {value!r}")
    elif pred.range == CATEGORICAL:
        if not isinstance(value, str) or value not in pred.values:
            raise DatabaseTypeMismatch(
                f"{where}: categorical predicate {pred.id!r} holds {value!r}, "
                f"expected one of {list(pred.values)}")
    elif pred.range == SET_OF_CATEGORICAL:
        if (not isinstance(value, list)
                or any(not isinstance(v, str) or v not in pred.values for v in value)):
            raise DatabaseTypeMismatch(
                f"{where}: set-valued predicate {pred.id!r} holds {value!r}, "
                f"expected a list over {list(pred.values)}")
    elif pred.range == ENTITY_REF:
        if not isinstance(value, str):
            raise DatabaseTypeMismatch(
                f"{where}: entity-ref predicate {pred.id!r} holds {value!r}")
        if onto_entities.get(value) != pred.target:
            raise DanglingReference(
                f"{where}: {value!r} is not a database row of type {pred.target!r}")


def load_ontology(source) -> Ontology:
    """Load and fully validate an ontology document.

    ``source`` may be a path, a JSON string, or an already-parsed dict.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8") if (
            isinstance(source, (str, Path)) and str(source).lstrip()[:1] != "{"
        ) else (source if isinstance(source, str) else source.read())
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")

    name = doc.get("name", "unnamed")
    for section in ("entity_types", "binary_predicates", "unary_predicates",
                    "entities", "lexicon", "synonyms", "database"):
        if section not in doc:
            raise SchemaError(f"missing section {section!r}")

    types = tuple(
        EntityType(_require(t, "id", str, "entity_types"),
                   _require(t, "lexical", str, "entity_types"))
        for t in doc["entity_types"])
    type_ids = {t.id for t in types}
    if len(type_ids) != len(types):
        raise SchemaError("entity_types: duplicate id")

    binaries = []
    for raw in doc["binary_predicates"]:
        pred = BinaryPredicate(
            id=_require(raw, "id", str, "binary_predicates"),
            domain=_require(raw, "domain", str, "binary_predicates"),
            range=_require(raw, "range", str, "binary_predicates"),
            lexical=_require(raw, "lexical", str, "binary_predicates"),
            unit=raw.get("unit", ""),
            values=tuple(raw.get("values", ())),
            target=raw.get("target", ""),
        )
        if pred.range not in VALUE_KINDS:
            raise SchemaError(
                f"binary_predicates: {pred.id!r} has unknown range {pred.range!r}")
        if pred.domain not in type_ids:
            raise DanglingReference(
                f"binary predicate {pred.id!r} has unknown domain {pred.domain!r}")
        if pred.range == ENTITY_REF and pred.target not in type_ids:
            raise DanglingReference(
                f"binary predicate {pred.id!r} has unknown target {pred.target!r}")
        if pred.range in (CATEGORICAL, SET_OF_CATEGORICAL) and not pred.values:
            raise SchemaError(
                f"binary_predicates: {pred.id!r} declares no value inventory")
        binaries.append(pred)

    unaries = []
    for raw in doc["unary_predicates"]:
        pred = UnaryPredicate(
            id=_require(raw, "id", str, "unary_predicates"),
            domain=_require(raw, "domain", str, "unary_predicates"),
            lexical=_require(raw, "lexical", str, "unary_predicates"),
        )
        if pred.domain not in type_ids:
            raise DanglingReference(
                f"unary predicate {pred.id!r} has unknown domain {pred.domain!r}")
        unaries.append(pred)

    entities = []
    for raw in doc["entities"]:
        const = EntityConst(
            id=_require(raw, "id", str, "entities"),
            type=_require(raw, "type", str, "entities"),
            lexical=_require(raw, "lexical", str, "entities"),
        )
        if const.type not in type_ids:
            raise DanglingReference(
                f"entity {const.id!r} has unknown type {const.type!r}")
        entities.append(const)

    all_ids = [t.id for t in types] + [p.id for p in binaries] + \
              [p.id for p in unaries] + [e.id for e in entities]
    if len(set(all_ids)) != len(all_ids):
        dupes = sorted({i for i in all_ids if all_ids.count(i) > 1})
        raise SchemaError(f"duplicate ids across sections: {dupes}")

    lexicon = dict(doc["lexicon"])
    for item in (*types, *binaries, *unaries, *entities):
        lexicon.setdefault(item.id, item.lexical)
    for item_id, phrase in lexicon.items():
        if not isinstance(phrase, str) or not phrase:
            raise LexiconGap(f"empty phrase for id {item_id!r}")
    for pred in binaries:
        for label in pred.values:
            if label not in lexicon:
                raise LexiconGap(f"categorical value {label!r} has no lexicon entry")

    synonyms = {k: tuple(v) for k, v in doc["synonyms"].items()}

    database = doc["database"]
    if not isinstance(database, dict):
        raise SchemaError("database: must be an object keyed by entity type")
    row_types: Dict[str, str] = {}
    for type_id, rows in database.items():
        if type_id not in type_ids:
            raise DanglingReference(f"database table {type_id!r} is not a declared type")
        for row_id in rows:
            row_types[row_id] = type_id
    preds_by_id = {p.id: p for p in binaries}
    unary_ids = {p.id for p in unaries}
    for type_id, rows in database.items():
        for row_id, cells in rows.items():
            if not isinstance(cells, dict):
                raise SchemaError(f"database row {row_id!r} must be an object")
            for pred_id, value in cells.items():
                if pred_id in unary_ids:
                    if not isinstance(value, bool):
                        raise DatabaseTypeMismatch(
                            f"row {row_id!r}: unary predicate {pred_id!r} "
                            f"holds {value!r}, expected a boolean")
                    continue
                pred = preds_by_id.get(pred_id)
                if pred is None:
                    raise DanglingReference(
                        f"row {row_id!r} stores undeclared predicate {pred_id!r}")
                if pred.domain != type_id:
                    raise DanglingReference(
                        f"row {row_id!r}: predicate {pred_id!r} has domain "
                        f"{pred.domain!r}, not {type_id!r}")
                _check_cell(pred, value, row_types, f"row {row_id!r}")

    for const in entities:
        if const.id not in database.get(const.type, {}):
            raise DanglingReference(
                f"entity {const.id!r} has no row in table {const.type!r}")

    return Ontology(
        name=name,
        entity_types=types,
        binary_predicates=tuple(binaries),
        unary_predicates=tuple(unaries),
        entities=tuple(entities),
        lexicon=lexicon,
        synonyms=synonyms,
        database=database,
    )
