"""Victim-side text extraction, normalization, and featurization.

The pipeline mirrors a parser-based assignment system: extract raw text
from a document, tokenize/lowercase/stem it, drop stop words, and count
stems over a fixed vocabulary.

Two extraction modes exist. ``standard`` trusts per-span ``extracted``
overrides (the parser path an attacker can abuse); ``strict`` reads only
the visible text and folds homoglyph confusables back to their canonical
Latin characters (an OCR-like defense).
"""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

from .adoc import ADoc
from .stemming import stem

STANDARD = "standard"
STRICT = "strict"

_TOKEN_RE = re.compile(r"[a-zA-Z]+")
_MIN_TOKEN_LEN = 2


# ---------------------------------------------------------------------------
# Resources

def _resource_text(filename: str) -> str:
    override = os.environ.get("ADVPAPERS_RESOURCE_DIR")
    if override:
        candidate = Path(override) / filename
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    ref = importlib_resources.files("advpapers.resources").joinpath(filename)
    return ref.read_text(encoding="utf-8")


def load_stopwords() -> frozenset[str]:
    words = set()
    for line in _resource_text("stopwords.txt").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def load_confusables() -> dict[str, str]:
    """Map confusable character -> canonical Latin character."""
    table = {}
    for line in _resource_text("confusables.txt").splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        src, dst = line.split("\t")
        table[src] = dst
    return table


def load_misspelling_rules() -> list[tuple[str, str]]:
    rules = []
    for line in _resource_text("misspellings.txt").splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        suffix, repl = line.split("\t")
        rules.append((suffix, repl))
    return rules


_STOPWORDS = None


def stopwords() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        _STOPWORDS = load_stopwords()
    return _STOPWORDS


def fold_confusables(text: str, table: dict[str, str] | None = None) -> str:
    if table is None:
        table = load_confusables()
    return text.translate(str.maketrans(table))


# ---------------------------------------------------------------------------
# Extraction

def extract_text(doc: ADoc, mode: str = STANDARD) -> str:
    """Flatten a document to raw text.

    Standard mode honors ``extracted`` overrides; strict mode reads
    visible text only and folds confusables. Bibliography entries are
    appended as text in both modes.
    """
    if mode not in (STANDARD, STRICT):
        raise ValueError(f"unknown extraction mode {mode!r}")
    pieces = [doc.title]
    for sec in doc.sections:
        if sec.heading:
            pieces.append(sec.heading)
        for para in sec.paragraphs:
            for span in para:
                if mode == STANDARD and span.extracted is not None:
                    pieces.append(span.extracted)
                else:
                    pieces.append(span.visible)
    for entry in doc.bibliography:
        pieces.append(entry.text())
    raw = " ".join(p for p in pieces if p)
    if mode == STRICT:
        raw = fold_confusables(raw)
    return raw


# ---------------------------------------------------------------------------
# Normalization

def normalize(raw: str) -> list[str]:
    """Tokenize on non-alphabetic boundaries, lowercase, stem, drop stop
    words and tokens shorter than two characters."""
    stops = stopwords()
    out = []
    for token in _TOKEN_RE.findall(raw):
        token = token.lower()
        if len(token) < _MIN_TOKEN_LEN or token in stops:
            continue
        stemmed = stem(token)
        if len(stemmed) < _MIN_TOKEN_LEN or stemmed in stops:
            continue
        out.append(stemmed)
    return out


def stem_counts(tokens: list[str]) -> dict[str, int]:
    return dict(Counter(tokens))


# ---------------------------------------------------------------------------
# Vocabulary and features

@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    index: dict[str, int] = field(compare=False, repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        words = [w for w in Path(path).read_text(encoding="utf-8").splitlines() if w]
        return cls(words=tuple(words))


@dataclass
class BagOfWords:
    counts: dict[int, int]
    vocab: Vocabulary
    oov_count: int = 0

    def total(self) -> int:
        return sum(self.counts.values())

    def as_stems(self) -> dict[str, int]:
        return {self.vocab.words[i]: c for i, c in self.counts.items()}


def build_vocabulary(token_sequences: list[list[str]]) -> Vocabulary:
    """Lexicographically sorted set of all stems across the corpus."""
    if not token_sequences or all(not seq for seq in token_sequences):
        raise ValueError("cannot build a vocabulary from an empty corpus")
    words = sorted({tok for seq in token_sequences for tok in seq})
    return Vocabulary(words=tuple(words))


def featurize(tokens: list[str], vocab: Vocabulary) -> BagOfWords:
    counts: Counter[int] = Counter()
    oov = 0
    for tok in tokens:
        dim = vocab.index.get(tok)
        if dim is None:
            oov += 1
        else:
            counts[dim] += 1
    return BagOfWords(counts=dict(counts), vocab=vocab, oov_count=oov)


def featurize_stems(stems: dict[str, int], vocab: Vocabulary) -> BagOfWords:
    """Featurize an already-counted stem map (counts may be any integers)."""
    counts = {}
    oov = 0
    for w, c in stems.items():
        dim = vocab.index.get(w)
        if dim is None:
            oov += abs(c)
        elif c != 0:
            counts[dim] = c
    return BagOfWords(counts=counts, vocab=vocab, oov_count=oov)


def doc_stems(doc: ADoc, mode: str = STANDARD) -> dict[str, int]:
    """Stem counts of a document under the given extraction mode."""
    return stem_counts(normalize(extract_text(doc, mode)))
