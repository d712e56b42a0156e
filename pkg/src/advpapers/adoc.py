"""Structured source documents.

An :class:`ADoc` models a submission as visible text organized into
sections, paragraphs, and spans. A span may carry an ``extracted``
override: the text a parser-based extractor sees instead of the visible
text (the override may be empty, which deletes the span from extraction).
A bibliography of :class:`BibEntry` records completes the document.

On disk an ADoc is UTF-8 JSON::

    {"id", "title",
     "sections": [{"heading", "paragraphs": [[{"visible", "extracted"?}]]}],
     "bibliography": [{"key", "authors", "title", "venue", "year", "note"?}]}

Spans additionally carry an ``origin`` key when they were produced by a
transformation.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

ORIGIN_ORIGINAL = "original"


@dataclass
class Span:
    visible: str
    extracted: str | None = None
    origin: str = ORIGIN_ORIGINAL

    def to_json(self) -> dict:
        d: dict = {"visible": self.visible}
        if self.extracted is not None:
            d["extracted"] = self.extracted
        if self.origin != ORIGIN_ORIGINAL:
            d["origin"] = self.origin
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Span":
        return cls(
            visible=d["visible"],
            extracted=d.get("extracted"),
            origin=d.get("origin", ORIGIN_ORIGINAL),
        )


@dataclass
class BibEntry:
    key: str
    authors: str
    title: str
    venue: str
    year: int
    note: str | None = None

    def text(self) -> str:
        parts = [self.authors, self.title, self.venue, str(self.year)]
        if self.note:
            parts.append(self.note)
        return " ".join(parts)

    def to_json(self) -> dict:
        d: dict = {
            "key": self.key,
            "authors": self.authors,
            "title": self.title,
            "venue": self.venue,
            "year": self.year,
        }
        if self.note is not None:
            d["note"] = self.note
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BibEntry":
        return cls(
            key=d["key"],
            authors=d["authors"],
            title=d["title"],
            venue=d["venue"],
            year=int(d["year"]),
            note=d.get("note"),
        )


@dataclass
class Section:
    heading: str
    paragraphs: list[list[Span]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "heading": self.heading,
            "paragraphs": [[s.to_json() for s in para] for para in self.paragraphs],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Section":
        return cls(
            heading=d["heading"],
            paragraphs=[
                [Span.from_json(s) for s in para] for para in d["paragraphs"]
            ],
        )


@dataclass
class ADoc:
    id: str
    title: str
    sections: list[Section] = field(default_factory=list)
    bibliography: list[BibEntry] = field(default_factory=list)

    def validate(self) -> None:
        for sec in self.sections:
            for para in sec.paragraphs:
                for span in para:
                    if not span.visible:
                        raise ValueError(
                            f"document {self.id!r}: span with empty visible text"
                        )
        keys = [e.key for e in self.bibliography]
        if len(keys) != len(set(keys)):
            raise ValueError(f"document {self.id!r}: duplicate bibliography keys")

    def spans(self):
        """Iterate (section_idx, para_idx, span_idx, span) over all spans."""
        for si, sec in enumerate(self.sections):
            for pi, para in enumerate(sec.paragraphs):
                for ki, span in enumerate(para):
                    yield si, pi, ki, span

    def clone(self) -> "ADoc":
        return copy.deepcopy(self)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "sections": [s.to_json() for s in self.sections],
            "bibliography": [e.to_json() for e in self.bibliography],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ADoc":
        doc = cls(
            id=d["id"],
            title=d["title"],
            sections=[Section.from_json(s) for s in d["sections"]],
            bibliography=[BibEntry.from_json(e) for e in d["bibliography"]],
        )
        doc.validate()
        return doc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), ensure_ascii=False, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ADoc":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def doc_from_text(doc_id: str, title: str, text: str, words_per_para: int = 60) -> ADoc:
    """Build a single-section ADoc from running text, one span per paragraph."""
    words = text.split()
    paras = [
        [Span(visible=" ".join(words[i : i + words_per_para]))]
        for i in range(0, len(words), words_per_para)
    ]
    if not paras:
        paras = [[Span(visible=title or doc_id)]]
    return ADoc(id=doc_id, title=title, sections=[Section(heading=title, paragraphs=paras)])


def load_bib_db(path: str | Path) -> list[BibEntry]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [BibEntry.from_json(e) for e in data]


def save_bib_db(entries: list[BibEntry], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([e.to_json() for e in entries], ensure_ascii=False, indent=1),
        encoding="utf-8",
    )
