"""Problem-space document transformations.

Turns a requested stem-count modification into concrete edits of an
:class:`~advpapers.adoc.ADoc`. Six transformations are applied in fixed
order of deniability: bibliography references, synonym replacement,
deliberate misspellings, generated text (all text level), homoglyph
character substitution (encoding level), and hidden extraction overrides
(format level). Every edit is tagged with its origin and the final
report states exactly which stem movement was achieved, measured by
re-extracting and featurizing the document, never by trusting the
transformation bookkeeping.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import textpipe
from .adoc import ADoc, BibEntry, Section, Span
from .stemming import stem

LEVEL_TEXT = "text"
LEVEL_ENCODING = "encoding"
LEVEL_FORMAT = "format"
ALL_LEVELS = frozenset({LEVEL_TEXT, LEVEL_ENCODING, LEVEL_FORMAT})

_TOKEN_RE = re.compile(r"[a-zA-Z]+")
_ADAPTIVE_WORDS = 3     # wanted words injected per adaptive reference


class ForgeError(ValueError):
    pass


@dataclass(frozen=True)
class Budget:
    real_refs: int = 25
    adaptive_refs: int = 5
    synonyms: int = 25
    misspellings: int = 20
    textgen_words: int = 10
    scale: float = 1.0

    def __post_init__(self):
        if self.scale < 0:
            raise ForgeError("budget scale must be non-negative")

    def effective(self) -> "Budget":
        """Counts scaled by the budget factor, floored."""
        return Budget(
            real_refs=math.floor(self.scale * self.real_refs),
            adaptive_refs=math.floor(self.scale * self.adaptive_refs),
            synonyms=math.floor(self.scale * self.synonyms),
            misspellings=math.floor(self.scale * self.misspellings),
            textgen_words=math.floor(self.scale * self.textgen_words),
            scale=1.0,
        )

    def split(self, transitions: int) -> "Budget":
        """Equal per-transition slice of the effective budget."""
        eff = self.effective()
        return Budget(
            real_refs=eff.real_refs // transitions,
            adaptive_refs=eff.adaptive_refs // transitions,
            synonyms=eff.synonyms // transitions,
            misspellings=eff.misspellings // transitions,
            textgen_words=eff.textgen_words // transitions,
            scale=1.0,
        )


@dataclass
class RealizationReport:
    achieved: dict[str, int] = field(default_factory=dict)
    blocked: set[str] = field(default_factory=set)
    side_effects: dict[str, int] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)


def _split_delta(delta: dict[str, int]) -> tuple[dict[str, int], dict[str, int]]:
    adds = {w: c for w, c in delta.items() if c > 0}
    dels = {w: -c for w, c in delta.items() if c < 0}
    return adds, dels


def _surface_for(wanted_stem: str) -> str | None:
    """A printable token that stems back to the wanted stem, or None."""
    if stem(wanted_stem) == wanted_stem and len(wanted_stem) >= 2:
        return wanted_stem
    return None


def _doc_delta(before: dict[str, int], after: dict[str, int]) -> dict[str, int]:
    out = {}
    for w in set(before) | set(after):
        d = after.get(w, 0) - before.get(w, 0)
        if d:
            out[w] = d
    return out


def _iter_tokens(doc: ADoc):
    """Yield (span, match) for every visible token in an original span."""
    for _, _, _, span in doc.spans():
        if span.origin != "original":
            continue
        for m in _TOKEN_RE.finditer(span.visible):
            yield span, m


def _replace_token(doc: ADoc, span: Span, match: re.Match, new_text: str, origin: str) -> None:
    """Split ``span`` so the matched token becomes its own transformed span."""
    for sec in doc.sections:
        for para in sec.paragraphs:
            if span in para:
                idx = para.index(span)
                pieces = []
                prefix = span.visible[: match.start()].strip()
                suffix = span.visible[match.end() :].strip()
                if prefix:
                    pieces.append(Span(visible=prefix, extracted=span.extracted))
                pieces.append(Span(visible=new_text, origin=origin))
                if suffix:
                    pieces.append(Span(visible=suffix))
                para[idx : idx + 1] = pieces
                return
    raise ForgeError("span not found in document")


# ---------------------------------------------------------------------------
# 1. References

def transform_reference(
    doc: ADoc,
    wanted: dict[str, int],
    bib_db: list[BibEntry],
    budget: Budget,
    seed: int = 0,
) -> tuple[ADoc, RealizationReport]:
    """Add real bibliography entries by greedy set cover over wanted
    stems, then adaptive entries that inject a few wanted words into a
    cloned record's note field."""
    if not bib_db:
        raise ForgeError("bibliography database is empty")
    doc = doc.clone()
    report = RealizationReport()
    remaining = dict(wanted)
    present = {e.key for e in doc.bibliography}
    rng = np.random.default_rng([seed, 101])

    entry_stems = {
        e.key: textpipe.stem_counts(textpipe.normalize(e.text())) for e in bib_db
    }
    by_key = {e.key: e for e in bib_db}

    added = 0
    while added < budget.real_refs and any(c > 0 for c in remaining.values()):
        best_key, best_gain = None, 0
        for key in sorted(entry_stems):
            if key in present:
                continue
            gain = sum(
                min(entry_stems[key].get(w, 0), c) for w, c in remaining.items() if c > 0
            )
            if gain > best_gain:
                best_key, best_gain = key, gain
        if best_key is None:
            break
        entry = by_key[best_key]
        doc.bibliography.append(entry)
        present.add(best_key)
        added += 1
        covered = {}
        for w, c in list(remaining.items()):
            got = min(entry_stems[best_key].get(w, 0), c)
            if got:
                remaining[w] = c - got
                covered[w] = got
        for w, c in entry_stems[best_key].items():
            if w not in wanted:
                report.side_effects[w] = report.side_effects.get(w, 0) + c
        report.log.append({"kind": "reference", "key": best_key, "covered": covered})

    for i in range(budget.adaptive_refs):
        pending = sorted(
            (w for w, c in remaining.items() if c > 0 and _surface_for(w)),
            key=lambda w: (-remaining[w], w),
        )
        if not pending:
            break
        words = []
        for w in pending:
            take = min(remaining[w], _ADAPTIVE_WORDS - len(words))
            words.extend([w] * take)
            if len(words) == _ADAPTIVE_WORDS:
                break
        while len(words) < _ADAPTIVE_WORDS:
            words.append(words[-1])
        base = bib_db[int(rng.integers(len(bib_db)))]
        key = f"{base.key}-adaptive-{i}"
        suffix = 0
        while key in present:
            suffix += 1
            key = f"{base.key}-adaptive-{i}-{suffix}"
        entry = replace(base, key=key, note=" ".join(words))
        doc.bibliography.append(entry)
        present.add(key)
        for w in words:
            remaining[w] = remaining.get(w, 0) - 1
        for w, c in entry_stems[base.key].items():
            if w not in wanted:
                report.side_effects[w] = report.side_effects.get(w, 0) + c
        report.log.append({"kind": "adaptive_reference", "key": key, "words": words})

    report.blocked = {w for w, c in wanted.items() if remaining.get(w, 0) >= c and c > 0}
    report.achieved = {
        w: wanted[w] - max(remaining.get(w, 0), 0)
        for w in wanted
        if wanted[w] - max(remaining.get(w, 0), 0)
    }
    return doc, report


# ---------------------------------------------------------------------------
# 2. Synonyms

def transform_synonym(
    doc: ADoc,
    adds: dict[str, int],
    dels: dict[str, int],
    table: list[tuple[str, str, str, float]],
    budget: Budget,
) -> tuple[ADoc, RealizationReport]:
    """Replace visible tokens with synonyms: to add a stem, rewrite some
    token as a synonym stemming to it; to delete a stem, rewrite one of
    its tokens as a synonym with a different stem."""
    doc = doc.clone()
    report = RealizationReport()
    # stem of synonym -> surface synonyms per source word
    syn_of: dict[str, list[str]] = {}
    for word, _pos, synonym, _score in table:
        syn_of.setdefault(word.lower(), []).append(synonym)

    edits = 0
    remaining_adds = dict(adds)
    remaining_dels = dict(dels)

    def find_edit():
        # Deletions first: rewriting the token is the only way synonyms
        # can remove a stem.
        for span, m in _iter_tokens(doc):
            token = m.group(0)
            token_stem = stem(token.lower())
            if remaining_dels.get(token_stem, 0) > 0:
                candidates = [
                    s for s in syn_of.get(token.lower(), []) if stem(s.lower()) != token_stem
                ]
                if candidates:
                    return span, m, candidates[0], "del", token_stem
        for span, m in _iter_tokens(doc):
            token = m.group(0)
            token_stem = stem(token.lower())
            if token_stem in adds:
                continue
            candidates = [
                s
                for s in syn_of.get(token.lower(), [])
                if remaining_adds.get(stem(s.lower()), 0) > 0
                and stem(s.lower()) != token_stem
            ]
            if candidates:
                return span, m, candidates[0], "add", token_stem
        return None

    while edits < budget.synonyms:
        found = find_edit()
        if found is None:
            break
        span, m, new, direction, token_stem = found
        token = m.group(0)
        _replace_token(doc, span, m, new, "transformed:synonym")
        new_stem = stem(new.lower())
        if direction == "del":
            remaining_dels[token_stem] -= 1
            if new_stem not in adds:
                report.side_effects[new_stem] = report.side_effects.get(new_stem, 0) + 1
        else:
            remaining_adds[new_stem] -= 1
            if token_stem not in dels:
                report.side_effects[token_stem] = report.side_effects.get(token_stem, 0) - 1
        report.log.append({"kind": "synonym", "from": token, "to": new})
        edits += 1

    for w, c in adds.items():
        got = c - remaining_adds.get(w, 0)
        if got:
            report.achieved[w] = report.achieved.get(w, 0) + got
        if got == 0:
            report.blocked.add(w)
    for w, c in dels.items():
        got = c - remaining_dels.get(w, 0)
        if got:
            report.achieved[w] = report.achieved.get(w, 0) - got
        if got == 0:
            report.blocked.add(w)
    return doc, report


# ---------------------------------------------------------------------------
# 3. Misspellings

def _misspell(token: str, rules: list[tuple[str, str]], rng: np.random.Generator) -> str | None:
    """A misspelling of ``token`` whose stem differs, or None."""
    original = stem(token.lower())
    lower = token.lower()
    for suffix, repl in rules:
        if lower.endswith(suffix):
            cand = lower[: -len(suffix)] + repl
            if cand and stem(cand) != original:
                return cand
    if len(lower) >= 2:
        positions = list(range(len(lower) - 1))
        rng.shuffle(positions)
        for i in positions:
            cand = lower[:i] + lower[i + 1] + lower[i] + lower[i + 2 :]
            if cand != lower and stem(cand) != original:
                return cand
        positions = list(range(len(lower)))
        rng.shuffle(positions)
        for i in positions:
            cand = lower[:i] + lower[i + 1 :]
            if len(cand) >= 2 and stem(cand) != original:
                return cand
    return None


def transform_spelling(
    doc: ADoc,
    dels: dict[str, int],
    rules: list[tuple[str, str]],
    budget: Budget,
    seed: int = 0,
) -> tuple[ADoc, RealizationReport]:
    doc = doc.clone()
    report = RealizationReport()
    rng = np.random.default_rng([seed, 103])
    remaining = dict(dels)
    unrealizable: set[str] = set()
    edits = 0
    while edits < budget.misspellings:
        found = None
        for span, m in _iter_tokens(doc):
            token_stem = stem(m.group(0).lower())
            if remaining.get(token_stem, 0) > 0 and token_stem not in unrealizable:
                cand = _misspell(m.group(0), rules, rng)
                if cand is None:
                    unrealizable.add(token_stem)
                    continue
                found = (span, m, cand)
                break
        if found is None:
            break
        span, m, cand = found
        _replace_token(doc, span, m, cand, "transformed:spelling")
        remaining[stem(m.group(0).lower())] -= 1
        new_stem = stem(cand)
        report.side_effects[new_stem] = report.side_effects.get(new_stem, 0) + 1
        report.log.append({"kind": "spelling", "from": m.group(0), "to": cand})
        edits += 1
    for w, c in dels.items():
        got = c - remaining.get(w, 0)
        if got:
            report.achieved[w] = -got
        else:
            report.blocked.add(w)
    return doc, report


# ---------------------------------------------------------------------------
# 4. Generated text

def template_generator(context: str, wanted: list[str], cap: int) -> list[str]:
    """Deterministic fallback generator: one template sentence per word
    pair. Plausibility is not a goal."""
    words = wanted[:cap]
    sentences = []
    for i in range(0, len(words), 2):
        pair = words[i : i + 2]
        if len(pair) == 2:
            sentences.append(
                f"Related efforts have examined {pair[0]} in the context of {pair[1]}."
            )
        else:
            sentences.append(f"Related efforts have examined {pair[0]}.")
    return sentences


def transform_textgen(
    doc: ADoc,
    adds: dict[str, int],
    generator,
    budget: Budget,
) -> tuple[ADoc, RealizationReport]:
    doc = doc.clone()
    report = RealizationReport()
    wanted_words = []
    for w in sorted(adds, key=lambda w: (-adds[w], w)):
        surface = _surface_for(w)
        if surface is None:
            report.blocked.add(w)
            continue
        wanted_words.extend([surface] * adds[w])
    wanted_words = wanted_words[: budget.textgen_words]
    if not wanted_words or budget.textgen_words == 0:
        report.blocked |= set(adds) - {stem(w) for w in wanted_words}
        return doc, report
    if not doc.sections:
        doc.sections.append(Section(heading=""))
    sentences = generator(doc.title, wanted_words, budget.textgen_words)
    if sentences:
        para = [Span(visible=s, origin="transformed:textgen") for s in sentences]
        doc.sections[-1].paragraphs.append(para)
        emitted = textpipe.stem_counts(textpipe.normalize(" ".join(sentences)))
        for w, c in emitted.items():
            if w in adds:
                report.achieved[w] = c
            else:
                report.side_effects[w] = c
        report.log.append(
            {"kind": "textgen", "sentences": sentences,
             "words_used": len(wanted_words)}
        )
    report.blocked |= {w for w in adds if report.achieved.get(w, 0) == 0}
    return doc, report


# ---------------------------------------------------------------------------
# 5. Homoglyphs

def transform_homoglyph(
    doc: ADoc,
    dels: dict[str, int],
    confusables: dict[str, str],
) -> tuple[ADoc, RealizationReport]:
    """Swap one character of each targeted token for a visually similar
    non-Latin one; a standard extractor then tokenizes around it and the
    original stem disappears."""
    doc = doc.clone()
    report = RealizationReport()
    to_confusable: dict[str, str] = {}
    for conf, latin in sorted(confusables.items()):
        to_confusable.setdefault(latin, conf)

    remaining = dict(dels)
    unmappable: set[str] = set()
    while True:
        found = None
        for span, m in _iter_tokens(doc):
            token = m.group(0)
            token_stem = stem(token.lower())
            if remaining.get(token_stem, 0) <= 0 or token_stem in unmappable:
                continue
            pos = next((i for i, ch in enumerate(token) if ch in to_confusable), None)
            if pos is None:
                unmappable.add(token_stem)
                continue
            found = (span, m, pos)
            break
        if found is None:
            break
        span, m, pos = found
        token = m.group(0)
        token_stem = stem(token.lower())
        new = token[:pos] + to_confusable[token[pos]] + token[pos + 1 :]
        _replace_token(doc, span, m, new, "transformed:homoglyph")
        remaining[token_stem] -= 1
        for piece in _TOKEN_RE.findall(new):
            piece_stem = stem(piece.lower())
            if len(piece) >= 2 and piece_stem != token_stem:
                report.side_effects[piece_stem] = report.side_effects.get(piece_stem, 0) + 1
        report.log.append({"kind": "homoglyph", "from": token, "to": new})
    for w, c in dels.items():
        got = c - remaining.get(w, 0)
        if got:
            report.achieved[w] = -got
        else:
            report.blocked.add(w)
    return doc, report


# ---------------------------------------------------------------------------
# 6. Hidden boxes

def transform_hidden_box(
    doc: ADoc,
    adds: dict[str, int],
    dels: dict[str, int],
) -> tuple[ADoc, RealizationReport]:
    """Override what a parser extracts without changing the visible text.

    Deletions put an empty override on the target token; additions ride
    on a token already slated for deletion when possible, otherwise on a
    stop word (whose loss has no feature-space effect).
    """
    doc = doc.clone()
    report = RealizationReport()
    stops = textpipe.stopwords()

    add_words = []
    for w in sorted(adds, key=lambda w: (-adds[w], w)):
        surface = _surface_for(w)
        if surface is None:
            report.blocked.add(w)
            continue
        add_words.extend([surface] * adds[w])
    payload = " ".join(add_words)
    payload_used = False

    remaining = dict(dels)
    while True:
        found = None
        for span, m in _iter_tokens(doc):
            token_stem = stem(m.group(0).lower())
            if remaining.get(token_stem, 0) > 0:
                found = (span, m, token_stem)
                break
        if found is None:
            break
        span, m, token_stem = found
        override = ""
        if payload and not payload_used:
            override = payload
            payload_used = True
        token = m.group(0)
        _replace_token(doc, span, m, token, "transformed:hidden_box")
        # the freshly isolated span is the transformed one; set its override
        for _, _, _, s in doc.spans():
            if s.origin == "transformed:hidden_box" and s.extracted is None:
                s.extracted = override
        remaining[token_stem] -= 1
        report.achieved[token_stem] = report.achieved.get(token_stem, 0) - 1
        report.log.append({"kind": "hidden_box", "over": token, "extracted": override})

    if payload and not payload_used:
        anchor = None
        for span, m in _iter_tokens(doc):
            if m.group(0).lower() in stops:
                anchor = (span, m)
                break
        if anchor is None:
            for span, m in _iter_tokens(doc):
                anchor = (span, m)
                break
        if anchor is None:
            raise ForgeError("document has no anchor token for a hidden box")
        span, m = anchor
        _replace_token(doc, span, m, m.group(0), "transformed:hidden_box")
        for _, _, _, s in doc.spans():
            if s.origin == "transformed:hidden_box" and s.extracted is None:
                s.extracted = payload
        report.log.append({"kind": "hidden_box", "over": m.group(0), "extracted": payload})
        payload_used = True

    if payload_used:
        for w in adds:
            if w not in report.blocked:
                report.achieved[w] = adds[w]
    for w, c in dels.items():
        if report.achieved.get(w, 0) == 0:
            report.blocked.add(w)
    return doc, report


# ---------------------------------------------------------------------------
# Full realization

_ORDERED_KINDS = (
    ("reference", LEVEL_TEXT),
    ("synonym", LEVEL_TEXT),
    ("spelling", LEVEL_TEXT),
    ("textgen", LEVEL_TEXT),
    ("homoglyph", LEVEL_ENCODING),
    ("hidden_box", LEVEL_FORMAT),
)


def realize(
    doc: ADoc,
    delta: dict[str, int],
    levels: frozenset[str] | set[str],
    budget: Budget,
    bib_db: list[BibEntry],
    synonym_table: list[tuple[str, str, str, float]],
    rules: list[tuple[str, str]],
    generator=template_generator,
    seed: int = 0,
) -> tuple[ADoc, RealizationReport]:
    """Apply the transformations in deniability order, each consuming the
    still-unrealized part of the requested modification. The achieved
    modification is recomputed from the document text, exactly."""
    unknown = set(levels) - ALL_LEVELS
    if unknown:
        raise ForgeError(f"unknown levels: {sorted(unknown)}")
    budget = budget.effective()
    before = textpipe.doc_stems(doc, textpipe.STANDARD)
    current = doc.clone()
    log: list[dict] = []

    for kind, level in _ORDERED_KINDS:
        if level not in levels:
            continue
        achieved_so_far = _doc_delta(before, textpipe.doc_stems(current, textpipe.STANDARD))
        remaining = {
            w: delta[w] - achieved_so_far.get(w, 0)
            for w in delta
            if delta[w] - achieved_so_far.get(w, 0) != 0
            and np.sign(delta[w]) == np.sign(delta[w] - achieved_so_far.get(w, 0))
        }
        adds, dels = _split_delta(remaining)
        if not adds and not dels:
            continue
        if kind == "reference" and adds and bib_db:
            current, rep = transform_reference(current, adds, bib_db, budget, seed)
        elif kind == "synonym" and synonym_table:
            current, rep = transform_synonym(current, adds, dels, synonym_table, budget)
        elif kind == "spelling" and dels:
            current, rep = transform_spelling(current, dels, rules, budget, seed)
        elif kind == "textgen" and adds:
            current, rep = transform_textgen(current, adds, generator, budget)
        elif kind == "homoglyph" and dels:
            current, rep = transform_homoglyph(current, dels, textpipe.load_confusables())
        elif kind == "hidden_box":
            current, rep = transform_hidden_box(current, adds, dels)
        else:
            continue
        log.extend(rep.log)

    after = textpipe.doc_stems(current, textpipe.STANDARD)
    achieved = _doc_delta(before, after)
    blocked = {
        w
        for w, c in delta.items()
        if (achieved.get(w, 0) == 0 or np.sign(achieved.get(w, 0)) != np.sign(c))
        and not _only_budget_limited(w, c, levels, budget, log, bib_db, synonym_table)
    }
    side_effects = {w: c for w, c in achieved.items() if w not in delta}
    return current, RealizationReport(
        achieved=achieved, blocked=blocked, side_effects=side_effects, log=log
    )


def _only_budget_limited(
    word: str,
    count: int,
    levels,
    budget: Budget,
    log: list[dict],
    bib_db,
    synonym_table,
) -> bool:
    """Whether every transformation route for this word spent its whole
    budget. Such words are merely deferred — a later transition with a
    fresh budget slice may still realize them — and must not be reported
    as blocked (blocked words are permanently unrealizable)."""
    edits: dict[str, int] = {}
    textgen_words = 0
    for record in log:
        edits[record["kind"]] = edits.get(record["kind"], 0) + 1
        if record["kind"] == "textgen":
            textgen_words += record.get("words_used", 0)
    exhausted = {
        "reference": edits.get("reference", 0) >= budget.real_refs,
        "adaptive_reference": edits.get("adaptive_reference", 0) >= budget.adaptive_refs,
        "synonym": edits.get("synonym", 0) >= budget.synonyms,
        "spelling": edits.get("spelling", 0) >= budget.misspellings,
        "textgen": textgen_words >= budget.textgen_words,
        # homoglyphs and hidden boxes are not budgeted
        "homoglyph": False,
        "hidden_box": False,
    }
    routes: list[str] = []
    if count > 0:
        if LEVEL_TEXT in levels:
            if bib_db:
                routes += ["reference", "adaptive_reference"]
            if synonym_table:
                routes.append("synonym")
            routes.append("textgen")
        if LEVEL_FORMAT in levels:
            routes.append("hidden_box")
    else:
        if LEVEL_TEXT in levels:
            if synonym_table:
                routes.append("synonym")
            routes.append("spelling")
        if LEVEL_ENCODING in levels:
            routes.append("homoglyph")
        if LEVEL_FORMAT in levels:
            routes.append("hidden_box")
    return bool(routes) and all(exhausted[k] for k in routes)
