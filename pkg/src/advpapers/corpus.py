"""Corpora, reviewer archives, and synthetic conference generation.

A :class:`Corpus` holds documents (each an ADoc) plus per-reviewer
archives. Archives are sampled from the documents carrying a reviewer's
tag; the remaining tagged documents form a reserved pool used to build
surrogate corpora with a controlled overlap.

:func:`synth_conference` generates a conference with *planted* topics:
the vocabulary is partitioned across topics, each reviewer gets a fixed
topic mixture, and documents are drawn from the generative topic-model
process. Ground truth is kept on the corpus so tests can check recovery.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adoc import ADoc, BibEntry, doc_from_text
from .stemming import stem
from .textpipe import stopwords

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class CorpusError(ValueError):
    pass


@dataclass
class RawDocument:
    id: str
    payload: ADoc
    reviewer_tag: str | None = None


@dataclass
class ReviewerArchive:
    reviewer_id: str
    document_ids: tuple[str, ...]

    @property
    def archive_size(self) -> int:
        return len(self.document_ids)


@dataclass
class PlantedTruth:
    """Ground truth of a synthetic conference."""

    vocab: list[str]
    topic_words: list[list[str]]            # vocabulary slice per topic
    topic_dists: list[dict[str, float]]     # word distribution per topic
    reviewer_mixtures: dict[str, list[float]]

    def to_json(self) -> dict:
        return {
            "vocab": self.vocab,
            "topic_words": self.topic_words,
            "topic_dists": self.topic_dists,
            "reviewer_mixtures": self.reviewer_mixtures,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PlantedTruth":
        return cls(
            vocab=d["vocab"],
            topic_words=d["topic_words"],
            topic_dists=d["topic_dists"],
            reviewer_mixtures=d["reviewer_mixtures"],
        )


@dataclass
class SurrogateSplit:
    overlap: float
    seed: int
    victim_pool: dict[str, set[str]]
    surrogate_pool: dict[str, set[str]]

    def shared_per_reviewer(self) -> dict[str, int]:
        return {
            rid: len(self.victim_pool[rid] & self.surrogate_pool[rid])
            for rid in self.victim_pool
        }


@dataclass
class Corpus:
    documents: dict[str, RawDocument] = field(default_factory=dict)
    archives: dict[str, ReviewerArchive] = field(default_factory=dict)
    planted: PlantedTruth | None = None

    def validate(self) -> None:
        for rid, archive in self.archives.items():
            if not archive.document_ids:
                raise CorpusError(f"archive of reviewer {rid!r} is empty")
            if len(set(archive.document_ids)) != len(archive.document_ids):
                raise CorpusError(f"archive of reviewer {rid!r} repeats a document")
            for did in archive.document_ids:
                if did not in self.documents:
                    raise CorpusError(
                        f"archive of reviewer {rid!r} references unknown document {did!r}"
                    )

    def reviewer_ids(self) -> list[str]:
        return sorted(self.archives)

    def tagged(self, reviewer_tag: str) -> list[str]:
        return sorted(
            d.id for d in self.documents.values() if d.reviewer_tag == reviewer_tag
        )

    def untagged(self) -> list[str]:
        return sorted(d.id for d in self.documents.values() if d.reviewer_tag is None)

    def archive_docs(self, reviewer_id: str) -> list[ADoc]:
        return [
            self.documents[did].payload
            for did in self.archives[reviewer_id].document_ids
        ]

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        docs_dir = directory / "documents"
        docs_dir.mkdir(exist_ok=True)
        manifest: dict = {"documents": [], "archives": {}}
        for did in sorted(self.documents):
            rdoc = self.documents[did]
            filename = f"{did}.adoc.json"
            rdoc.payload.save(docs_dir / filename)
            manifest["documents"].append(
                {"id": did, "reviewer_tag": rdoc.reviewer_tag, "file": f"documents/{filename}"}
            )
        for rid in sorted(self.archives):
            manifest["archives"][rid] = list(self.archives[rid].document_ids)
        if self.planted is not None:
            manifest["planted"] = self.planted.to_json()
        (directory / "manifest.json").write_text(
            json.dumps(manifest, ensure_ascii=False, indent=1, sort_keys=True),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        corpus = cls()
        for entry in manifest["documents"]:
            payload = ADoc.load(directory / entry["file"])
            corpus.documents[entry["id"]] = RawDocument(
                id=entry["id"], payload=payload, reviewer_tag=entry["reviewer_tag"]
            )
        for rid, ids in manifest["archives"].items():
            corpus.archives[rid] = ReviewerArchive(reviewer_id=rid, document_ids=tuple(ids))
        if "planted" in manifest:
            corpus.planted = PlantedTruth.from_json(manifest["planted"])
        corpus.validate()
        return corpus


# ---------------------------------------------------------------------------
# Archive construction

def build_archives(corpus: Corpus, per_reviewer: int, seed: int) -> Corpus:
    """Sample ``per_reviewer`` documents per reviewer tag, without
    replacement, deterministically in ``seed``."""
    archives = {}
    tags = sorted(
        {d.reviewer_tag for d in corpus.documents.values() if d.reviewer_tag is not None}
    )
    for tag in tags:
        pool = corpus.tagged(tag)
        if len(pool) < per_reviewer:
            raise CorpusError(
                f"reviewer {tag!r} has only {len(pool)} documents, "
                f"needs {per_reviewer}"
            )
        rng = np.random.default_rng([seed, _stable_hash(tag)])
        chosen = sorted(rng.choice(pool, size=per_reviewer, replace=False).tolist())
        archives[tag] = ReviewerArchive(reviewer_id=tag, document_ids=tuple(chosen))
    out = Corpus(documents=dict(corpus.documents), archives=archives, planted=corpus.planted)
    out.validate()
    return out


def make_surrogate_corpus(corpus: Corpus, overlap: float, seed: int) -> Corpus:
    """Build surrogate archives sharing ``round(overlap * n)`` documents
    (half-up rounding) with the victim archives, remainder drawn from the
    reviewer's reserved pool."""
    if not 0.0 <= overlap <= 1.0:
        raise CorpusError(f"overlap must be in [0, 1], got {overlap}")
    archives = {}
    for rid in corpus.reviewer_ids():
        victim = list(corpus.archives[rid].document_ids)
        n = len(victim)
        n_shared = int(np.floor(overlap * n + 0.5))
        reserved = sorted(set(corpus.tagged(rid)) - set(victim))
        if len(reserved) < n - n_shared:
            raise CorpusError(
                f"reviewer {rid!r}: {len(reserved)} reserved documents, "
                f"needs {n - n_shared} for overlap {overlap}"
            )
        rng = np.random.default_rng([seed, _stable_hash(rid)])
        shared = sorted(rng.choice(sorted(victim), size=n_shared, replace=False).tolist())
        fresh = sorted(rng.choice(reserved, size=n - n_shared, replace=False).tolist())
        archives[rid] = ReviewerArchive(reviewer_id=rid, document_ids=tuple(shared + fresh))
    out = Corpus(documents=dict(corpus.documents), archives=archives, planted=corpus.planted)
    out.validate()
    return out


def surrogate_split(victim: Corpus, surrogate: Corpus, overlap: float, seed: int) -> SurrogateSplit:
    return SurrogateSplit(
        overlap=overlap,
        seed=seed,
        victim_pool={r: set(a.document_ids) for r, a in victim.archives.items()},
        surrogate_pool={r: set(a.document_ids) for r, a in surrogate.archives.items()},
    )


def _stable_hash(s: str) -> int:
    h = 0
    for ch in s:
        h = (h * 131 + ord(ch)) % (2**31 - 1)
    return h


# ---------------------------------------------------------------------------
# Synthetic conference generation

def _make_vocab(vocab_size: int, rng: np.random.Generator) -> list[str]:
    stops = stopwords()
    words: list[str] = []
    seen = set()
    while len(words) < vocab_size:
        n_syll = int(rng.integers(2, 4))
        w = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))]
            + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        )
        w += _CONSONANTS[rng.integers(len(_CONSONANTS))]
        if w in seen or w in stops or stem(w) != w:
            continue
        seen.add(w)
        words.append(w)
    return sorted(words)


def _reviewer_mixture(
    r: int, topics: int, mixing: float, rng: np.random.Generator
) -> np.ndarray:
    mix = np.zeros(topics)
    primary = r % topics
    if mixing <= 0.0 or topics < 2:
        mix[primary] = 1.0
        return mix
    secondary = (primary + 1 + (r // topics)) % topics
    if secondary == primary:
        secondary = (primary + 1) % topics
    w = mixing * (0.75 + 0.5 * rng.random())
    mix[primary] = 1.0 - w
    mix[secondary] = w
    return mix


def _sample_doc_words(
    mixture: np.ndarray,
    topic_probs: np.ndarray,
    vocab: list[str],
    doc_len: int,
    concentration: float,
    rng: np.random.Generator,
) -> list[str]:
    support = np.flatnonzero(mixture > 0)
    alpha = mixture[support] * concentration
    theta = np.zeros(len(mixture))
    theta[support] = rng.dirichlet(alpha)
    topic_for_word = rng.choice(len(mixture), size=doc_len, p=theta)
    words = []
    for t in topic_for_word:
        w = rng.choice(len(vocab), p=topic_probs[t])
        words.append(vocab[w])
    return words


_FILLERS = ["the", "of", "and", "in", "for", "with", "on"]


def _intersperse_fillers(words: list[str], rng: np.random.Generator) -> str:
    out = []
    for i, w in enumerate(words):
        out.append(w)
        if (i + 1) % 7 == 0:
            out.append(_FILLERS[int(rng.integers(len(_FILLERS)))])
    return " ".join(out)


def synth_conference(
    reviewers: int,
    topics: int,
    docs_per_reviewer: int,
    vocab_size: int,
    seed: int,
    *,
    mixing: float = 0.35,
    doc_len: int = 200,
    submissions: int = 0,
    concentration: float = 12.0,
) -> Corpus:
    """Generate a synthetic conference with planted topics.

    The vocabulary is partitioned into ``topics`` disjoint slices; each
    topic is a Dirichlet draw over its slice. Reviewer ``r`` is planted
    on topic ``r % topics`` with an optional secondary topic controlled
    by ``mixing`` (0 disables mixing, making planted supports disjoint
    whenever reviewers' topic sets are). Documents are drawn from the
    generative process; submissions (untagged documents) mix two random
    topics.
    """
    if reviewers < 1 or topics < 1 or docs_per_reviewer < 1:
        raise CorpusError("reviewers, topics, and docs_per_reviewer must be positive")
    if vocab_size < topics * 10:
        raise CorpusError("vocab_size must be at least 10 words per topic")

    rng = np.random.default_rng(seed)
    vocab = _make_vocab(vocab_size, rng)
    slice_bounds = np.linspace(0, vocab_size, topics + 1).astype(int)
    topic_words = [
        vocab[slice_bounds[t] : slice_bounds[t + 1]] for t in range(topics)
    ]
    topic_probs = np.zeros((topics, vocab_size))
    for t in range(topics):
        lo, hi = slice_bounds[t], slice_bounds[t + 1]
        topic_probs[t, lo:hi] = rng.dirichlet(np.full(hi - lo, 0.5))

    mixtures = {}
    corpus = Corpus()
    for r in range(reviewers):
        rid = f"r{r:03d}"
        mixture = _reviewer_mixture(r, topics, mixing, rng)
        mixtures[rid] = mixture.tolist()
        for d in range(docs_per_reviewer):
            did = f"{rid}_d{d:03d}"
            words = _sample_doc_words(
                mixture, topic_probs, vocab, doc_len, concentration, rng
            )
            text = _intersperse_fillers(words, rng)
            title = " ".join(words[:6])
            doc = doc_from_text(did, title, text)
            corpus.documents[did] = RawDocument(id=did, payload=doc, reviewer_tag=rid)

    for s in range(submissions):
        did = f"s{s:03d}"
        mixture = np.zeros(topics)
        if topics == 1:
            mixture[0] = 1.0
        else:
            pair = rng.choice(topics, size=2, replace=False)
            w = 0.45 + 0.3 * rng.random()
            mixture[pair[0]] = w
            mixture[pair[1]] = 1.0 - w
        words = _sample_doc_words(
            mixture, topic_probs, vocab, doc_len, concentration, rng
        )
        text = _intersperse_fillers(words, rng)
        doc = doc_from_text(did, " ".join(words[:6]), text)
        corpus.documents[did] = RawDocument(id=did, payload=doc, reviewer_tag=None)

    corpus.planted = PlantedTruth(
        vocab=vocab,
        topic_words=topic_words,
        topic_dists=[
            {vocab[i]: float(p) for i, p in enumerate(topic_probs[t]) if p > 0}
            for t in range(topics)
        ],
        reviewer_mixtures=mixtures,
    )
    return corpus


# ---------------------------------------------------------------------------
# Synthetic attack resources

_FIRST_NAMES = ["Avery", "Blake", "Carmen", "Devon", "Elliot", "Frankie", "Glenn", "Harper"]
_LAST_NAMES = ["Okafor", "Lindqvist", "Marchetti", "Novak", "Petrov", "Quint", "Sandoval", "Tanaka"]


def generate_bib_db(
    corpus: Corpus, seed: int, entries_per_topic: int = 20
) -> list[BibEntry]:
    """Bibliography database whose titles draw from the planted topics."""
    if corpus.planted is None:
        raise CorpusError("bibliography generation requires a planted corpus")
    rng = np.random.default_rng([seed, 7])
    entries = []
    for t, dist in enumerate(corpus.planted.topic_dists):
        words = list(dist)
        probs = np.array([dist[w] for w in words])
        probs = probs / probs.sum()
        for i in range(entries_per_topic):
            title_words = rng.choice(words, size=5, replace=False, p=probs)
            author = (
                f"{_FIRST_NAMES[int(rng.integers(len(_FIRST_NAMES)))]} "
                f"{_LAST_NAMES[int(rng.integers(len(_LAST_NAMES)))]}"
            )
            venue_word = words[int(rng.integers(len(words)))]
            entries.append(
                BibEntry(
                    key=f"t{t}e{i}",
                    authors=author,
                    title=" ".join(title_words.tolist()),
                    venue=f"Symposium on {venue_word}",
                    year=int(2015 + rng.integers(10)),
                )
            )
    return entries


def generate_synonym_table(corpus: Corpus, seed: int, fraction: float = 0.6) -> list[tuple[str, str, str, float]]:
    """Synonym rows (word, pos, synonym, score) pairing words across
    adjacent planted topics, both directions."""
    if corpus.planted is None:
        raise CorpusError("synonym generation requires a planted corpus")
    rng = np.random.default_rng([seed, 11])
    rows = []
    topic_words = corpus.planted.topic_words
    topics = len(topic_words)
    for t in range(topics):
        src = topic_words[t]
        dst = topic_words[(t + 1) % topics]
        n = int(min(len(src), len(dst)) * fraction)
        src_sel = rng.choice(src, size=n, replace=False)
        dst_sel = rng.choice(dst, size=n, replace=False)
        for a, b in zip(src_sel.tolist(), dst_sel.tolist()):
            if a == b:
                continue
            score = round(0.7 + 0.29 * float(rng.random()), 3)
            rows.append((a, "NN", b, score))
            rows.append((b, "NN", a, score))
    return rows


def save_synonym_table(rows: list[tuple[str, str, str, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for word, pos, syn, score in rows:
            f.write(f"{word}\t{pos}\t{syn}\t{score}\n")


def load_synonym_table(path: str | Path) -> list[tuple[str, str, str, float]]:
    """Synonym rows (word, pos, synonym, score), in file order."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        word, pos, syn, score = line.split("\t")
        rows.append((word, pos, syn, float(score)))
    return rows
