"""Adaptation store: annotated atoms, similarity retrieval, training-set export.

Records are append-only XML files in the annotation namespace; an
in-memory index is rebuilt at startup. Retrieval backs the Assessor's
prompt augmentation; the Constructor consumes the corpus only through
the training-pair export.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Protocol

from .errors import InvalidAnnotation, SchemaViolation
from .xsam import (
    KnowledgeAnnotation,
    Provenance,
    _canonical,
    annotation_from_element,
    annotation_to_element,
)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> frozenset[str]:
    return frozenset(_TOKEN.findall(text.lower()))


@dataclass(frozen=True)
class KnowledgeRecord:
    record_id: str
    key_text: str
    source_doc: str  # node attribute document (component XML)
    annotation: KnowledgeAnnotation


class SimilarityScorer(Protocol):
    def score(self, query: str, key: str) -> float: ...


class LexicalScorer:
    """Jaccard overlap over lowercased alphanumeric tokens; score(x, x) = 1."""

    def score(self, query: str, key: str) -> float:
        q, k = tokenize(query), tokenize(key)
        if not q and not k:
            return 1.0
        if not q or not k:
            return 0.0
        return len(q & k) / len(q | k)


class EmbeddingScorer:
    """Cosine similarity via an external embedding HTTP endpoint."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def _embed(self, texts: list[str]) -> list[list[float]]:
        import requests

        response = requests.post(self.endpoint, json={"texts": texts}, timeout=self.timeout)
        response.raise_for_status()
        return response.json()["embeddings"]

    def score(self, query: str, key: str) -> float:
        a, b = self._embed([query, key])
        dot = sum(x * y for x, y in zip(a, b))
        norm = math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
        return dot / norm if norm else 0.0


def _record_id(key_text: str, annotation: KnowledgeAnnotation) -> str:
    canonical = json.dumps(
        {
            "key": key_text,
            "sub_tree": annotation.sub_tree,
            "steps": [[m, v.as_dict()] for m, v in annotation.step_feasibility],
            "impact": annotation.impact.as_dict() if annotation.impact else None,
            "provenance": annotation.provenance.value,
        },
        sort_keys=True,
    )
    return "kr-" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _check_annotation(annotation: KnowledgeAnnotation) -> None:
    method_ids: set[str] = set()
    if annotation.sub_tree:
        try:
            root = ET.fromstring(annotation.sub_tree)
        except ET.ParseError as exc:
            raise InvalidAnnotation(f"sub-tree is not well-formed XML: {exc}")
        for elem in root.iter("Method"):
            if elem.get("id"):
                method_ids.add(elem.get("id"))
    for method, _vector in annotation.step_feasibility:
        if method not in method_ids:
            raise InvalidAnnotation(f"step-feasibility names unknown method '{method}'")


def record_to_document(record: KnowledgeRecord) -> bytes:
    root = ET.Element("KnowledgeRecord", id=record.record_id)
    key = ET.SubElement(root, "Key")
    key.text = record.key_text
    if record.source_doc:
        source = ET.SubElement(root, "Source")
        source.append(ET.fromstring(record.source_doc))
    root.append(annotation_to_element(record.annotation))
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


def record_from_document(data: bytes) -> KnowledgeRecord:
    root = ET.fromstring(data)
    if root.tag != "KnowledgeRecord":
        raise SchemaViolation(f"unknown root element '{root.tag}'", "/")
    key = root.findtext("Key", default="")
    source_elem = root.find("Source")
    source_doc = ""
    if source_elem is not None and len(source_elem):
        source_doc = ET.tostring(_canonical(source_elem[0]), encoding="unicode")
    ann_elem = root.find("Annotation")
    if ann_elem is None:
        raise SchemaViolation("missing Annotation", "/KnowledgeRecord")
    annotation = annotation_from_element(ann_elem, "/KnowledgeRecord/Annotation")
    return KnowledgeRecord(
        record_id=root.get("id", ""),
        key_text=key,
        source_doc=source_doc,
        annotation=annotation,
    )


class KnowledgeStore:
    """Append-only on-disk corpus with serialized writes and snapshot reads."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[str, KnowledgeRecord] = {}
        for path in sorted(self.directory.glob("kr-*.xml")):
            record = record_from_document(path.read_bytes())
            self._records[record.record_id] = record

    def __len__(self) -> int:
        return len(self._records)

    def ingest(
        self,
        key_text: str,
        annotation: KnowledgeAnnotation,
        source_doc: str = "",
    ) -> str:
        """Idempotent: identical key text and annotation yield the same id."""
        if not key_text.strip():
            raise InvalidAnnotation("key text is empty")
        _check_annotation(annotation)
        record_id = _record_id(key_text, annotation)
        record = KnowledgeRecord(
            record_id=record_id,
            key_text=key_text,
            source_doc=source_doc,
            annotation=annotation,
        )
        with self._lock:
            if record_id not in self._records:
                (self.directory / f"{record_id}.xml").write_bytes(record_to_document(record))
                self._records[record_id] = record
        return record_id

    def get(self, record_id: str) -> KnowledgeRecord:
        return self._records[record_id]

    def retrieve(
        self,
        query: str,
        k: int = 3,
        scorer: SimilarityScorer | None = None,
    ) -> list[tuple[float, KnowledgeRecord]]:
        """Top-k records by score descending, then record id ascending."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scorer = scorer or LexicalScorer()
        with self._lock:
            snapshot = list(self._records.values())
        ranked = sorted(
            ((scorer.score(query, r.key_text), r) for r in snapshot),
            key=lambda pair: (-pair[0], pair[1].record_id),
        )
        return ranked[:k]

    def rag_examples(self, query: str, k: int = 3) -> list[dict]:
        """Scored reference examples in the shape the Assessor prompt expects."""
        examples: list[dict] = []
        for score, record in self.retrieve(query, k):
            if score <= 0.0:
                continue
            for method, vector in record.annotation.step_feasibility:
                examples.append(
                    {
                        "method": _method_text(record.annotation.sub_tree, method),
                        "scores": vector.as_dict(),
                        "similarity": round(score, 4),
                    }
                )
        return examples

    def export_training_pairs(self, provenances: Iterable[Provenance]) -> Iterator[str]:
        """Line-delimited JSON: {"input": node attribute doc, "output": sub-tree doc}."""
        wanted = set(provenances)
        with self._lock:
            snapshot = sorted(self._records.values(), key=lambda r: r.record_id)
        for record in snapshot:
            if record.annotation.provenance not in wanted:
                continue
            yield json.dumps(
                {
                    "input": record.source_doc or record.key_text,
                    "output": record.annotation.sub_tree,
                },
                sort_keys=True,
            )


def _method_text(sub_tree_doc: str, method_id: str) -> str:
    try:
        root = ET.fromstring(sub_tree_doc)
    except ET.ParseError:
        return method_id
    for elem in root.iter("Method"):
        if elem.get("id") == method_id:
            return elem.get("description", method_id)
    return method_id
