"""The victim: a trained topic model plus reviewer archive vectors.

An :class:`AssignmentSystem` bundles everything needed to rank reviewers
for a submission: the vocabulary, the LDA model, and the per-reviewer
archive topic mixtures. It is immutable after construction and safe to
share across concurrent attack runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lda, matcher, textpipe
from .corpus import Corpus
from .adoc import ADoc
from .lda import LdaConfig, LdaModel
from .textpipe import BagOfWords, Vocabulary


@dataclass
class AssignmentSystem:
    system_id: str
    model: LdaModel
    reviewer_ids: list[str]
    reviewer_thetas: np.ndarray         # |R| x T
    mode: str = textpipe.STANDARD
    train_doc_ids: list[str] = field(default_factory=list)
    train_thetas: np.ndarray | None = None

    @property
    def vocab(self) -> Vocabulary:
        return self.model.vocab

    def featurize_doc(self, doc: ADoc) -> BagOfWords:
        tokens = textpipe.normalize(textpipe.extract_text(doc, self.mode))
        return textpipe.featurize(tokens, self.vocab)

    def theta(self, bow: BagOfWords) -> np.ndarray:
        return lda.infer(self.model, bow).theta

    def theta_batch(self, counts: np.ndarray) -> np.ndarray:
        return lda.infer_matrix(self.model, counts)

    def scores(self, bow: BagOfWords) -> np.ndarray:
        return self.reviewer_thetas @ self.theta(bow)

    def scores_from_theta(self, theta: np.ndarray) -> np.ndarray:
        return self.reviewer_thetas @ theta

    def ranking(self, bow: BagOfWords) -> matcher.Ranking:
        return matcher.make_ranking(self.reviewer_ids, self.scores(bow))

    def ranking_for_doc(self, doc: ADoc) -> matcher.Ranking:
        return self.ranking(self.featurize_doc(doc))

    def with_mode(self, mode: str) -> "AssignmentSystem":
        return AssignmentSystem(
            system_id=self.system_id,
            model=self.model,
            reviewer_ids=self.reviewer_ids,
            reviewer_thetas=self.reviewer_thetas,
            mode=mode,
            train_doc_ids=self.train_doc_ids,
            train_thetas=self.train_thetas,
        )

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "system_id": self.system_id,
            "reviewer_ids": self.reviewer_ids,
            "mode": self.mode,
            "train_doc_ids": self.train_doc_ids,
        }
        arrays = {
            "phi": self.model.phi,
            "vocab": np.array(self.vocab.words),
            "config": np.array([json.dumps(_config_dict(self.model.config))]),
            "reviewer_thetas": self.reviewer_thetas,
            "meta": np.array([json.dumps(meta)]),
        }
        if self.train_thetas is not None:
            arrays["train_thetas"] = self.train_thetas
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "AssignmentSystem":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["meta"][0]))
        config = LdaConfig(**json.loads(str(data["config"][0])))
        vocab = Vocabulary(words=tuple(str(w) for w in data["vocab"]))
        model = LdaModel(phi=data["phi"], config=config, vocab=vocab)
        return cls(
            system_id=meta["system_id"],
            model=model,
            reviewer_ids=meta["reviewer_ids"],
            reviewer_thetas=data["reviewer_thetas"],
            mode=meta["mode"],
            train_doc_ids=meta["train_doc_ids"],
            train_thetas=data["train_thetas"] if "train_thetas" in data else None,
        )


def _config_dict(config: LdaConfig) -> dict:
    from dataclasses import asdict

    return asdict(config)


def train_system(
    corpus: Corpus,
    config: LdaConfig,
    mode: str = textpipe.STANDARD,
    system_id: str = "sys0",
) -> AssignmentSystem:
    """Train the full victim pipeline on a corpus: vocabulary over the
    archive documents, LDA on their bags, one topic vector per reviewer
    archive (union of its documents' bags)."""
    reviewer_ids = corpus.reviewer_ids()
    if not reviewer_ids:
        raise ValueError("corpus has no reviewer archives")
    archive_doc_ids = sorted(
        {did for rid in reviewer_ids for did in corpus.archives[rid].document_ids}
    )
    tokens = {
        did: textpipe.normalize(
            textpipe.extract_text(corpus.documents[did].payload, mode)
        )
        for did in archive_doc_ids
    }
    vocab = textpipe.build_vocabulary(list(tokens.values()))
    bows = {did: textpipe.featurize(tokens[did], vocab) for did in archive_doc_ids}
    model = lda.train([bows[did] for did in archive_doc_ids], config, vocab)

    thetas = np.stack(
        [
            lda.reviewer_vector(
                model, [bows[did] for did in corpus.archives[rid].document_ids]
            ).theta
            for rid in reviewer_ids
        ]
    )
    train_thetas = np.stack(
        [lda.infer(model, bows[did]).theta for did in archive_doc_ids]
    )
    return AssignmentSystem(
        system_id=system_id,
        model=model,
        reviewer_ids=reviewer_ids,
        reviewer_thetas=thetas,
        mode=mode,
        train_doc_ids=archive_doc_ids,
        train_thetas=train_thetas,
    )
