"""Scripted experiment protocols at desk scale.

Every suite samples attack targets from rank windows of the victim's
ranking, runs the hybrid attack per target, re-verifies each outcome
through :func:`orchestrator.evaluate`, and aggregates success rate and
modification norms. Reports are written as CSV plus JSON with a rendered
figure per sweep.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import attack, corpus as corpus_mod, orchestrator
from .attack import AttackTarget
from .corpus import Corpus
from .lda import LdaConfig
from .orchestrator import HybridConfig
from .system import AssignmentSystem, train_system
from .matcher import BiddingMatrix, LoadConstraints, assign

SELECTION = "selection"
REJECTION = "rejection"
SUBSTITUTION = "substitution"

_SELECT_WINDOW = (5, 9)
_REJECT_WINDOW = (0, 4)


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    select_window: tuple[int, int] = _SELECT_WINDOW
    reject_window: tuple[int, int] = _REJECT_WINDOW

    def __post_init__(self):
        if self.kind not in (SELECTION, REJECTION, SUBSTITUTION):
            raise ValueError(f"unknown objective kind {self.kind!r}")


@dataclass
class TargetRecord:
    doc_id: str
    select: tuple[str, ...]
    reject: tuple[str, ...]
    success: bool
    l1: int
    linf: int
    margin: float
    transitions_used: int
    runtime: float


@dataclass
class ExperimentReport:
    label: str
    records: list[TargetRecord] = field(default_factory=list)
    truncated: bool = False

    @property
    def success_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.success for r in self.records) / len(self.records)

    def _median(self, attr: str, successes_only: bool = True) -> float:
        pool = [r for r in self.records if r.success] if successes_only else self.records
        if not pool:
            return float("nan")
        return float(statistics.median(getattr(r, attr) for r in pool))

    @property
    def l1_median(self) -> float:
        return self._median("l1")

    @property
    def linf_median(self) -> float:
        return self._median("linf")

    def summary(self) -> dict:
        """Deterministic aggregate; wall-clock stats go to timing()."""
        return {
            "label": self.label,
            "attempts": len(self.records),
            "successes": sum(r.success for r in self.records),
            "success_rate": self.success_rate,
            "l1_median": self.l1_median,
            "linf_median": self.linf_median,
            "truncated": self.truncated,
        }

    def timing(self) -> dict:
        runtimes = [r.runtime for r in self.records]
        return {
            "runtime_total": sum(runtimes),
            "runtime_mean": (sum(runtimes) / len(runtimes)) if runtimes else 0.0,
            "runtime_max": max(runtimes, default=0.0),
        }

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "records.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["doc_id", "select", "reject", "success", "l1", "linf",
                 "margin", "transitions_used"]
            )
            for r in self.records:
                writer.writerow(
                    [r.doc_id, "+".join(r.select), "+".join(r.reject),
                     int(r.success), r.l1, r.linf, f"{r.margin:.6f}",
                     r.transitions_used]
                )
        (out / "summary.json").write_text(
            json.dumps(self.summary(), indent=1), encoding="utf-8"
        )
        (out / "timing.json").write_text(
            json.dumps(self.timing(), indent=1), encoding="utf-8"
        )


# ---------------------------------------------------------------------------
# Target sampling

def sample_targets(
    victim: AssignmentSystem,
    corpus: Corpus,
    objective: ObjectiveSpec,
    n_targets: int,
    seed: int,
) -> list[tuple[str, AttackTarget]]:
    """(submission id, target) pairs drawn from the objective's rank
    windows of the victim's ranking for that submission."""
    rng = np.random.default_rng([seed, 23])
    subs = corpus.untagged()
    if not subs:
        raise corpus_mod.CorpusError("corpus has no submissions to attack")
    out = []
    for i in range(n_targets):
        doc_id = subs[i % len(subs)]
        ranking = victim.ranking_for_doc(corpus.documents[doc_id].payload)
        sel_lo, sel_hi = objective.select_window
        rej_lo, rej_hi = objective.reject_window
        sel_hi = min(sel_hi, len(ranking.ordered) - 1)
        select: tuple[str, ...] = ()
        reject: tuple[str, ...] = ()
        if objective.kind in (SELECTION, SUBSTITUTION):
            rank = int(rng.integers(sel_lo, sel_hi + 1))
            select = (ranking.ordered[rank],)
        if objective.kind in (REJECTION, SUBSTITUTION):
            rank = int(rng.integers(rej_lo, rej_hi + 1))
            reject = (ranking.ordered[rank],)
        out.append((doc_id, AttackTarget(select=select, reject=reject)))
    return out


# ---------------------------------------------------------------------------
# Suites

def run_objective_suite(
    corpus: Corpus,
    victim: AssignmentSystem,
    ensemble: list[AssignmentSystem],
    objective: ObjectiveSpec,
    n_targets: int,
    config: HybridConfig,
    bib_db,
    synonym_table,
    seed: int = 0,
    jobs: int = 1,
    label: str | None = None,
) -> ExperimentReport:
    targets = sample_targets(victim, corpus, objective, n_targets, seed)
    report = ExperimentReport(label=label or objective.kind)

    def run_one(item):
        index, (doc_id, target) = item
        doc = corpus.documents[doc_id].payload
        cfg = replace(
            config, search=replace(config.search, seed=config.search.seed + index)
        )
        t0 = time.perf_counter()
        result = orchestrator.run_attack(
            doc, target, ensemble, victim, cfg, bib_db, synonym_table
        )
        elapsed = time.perf_counter() - t0
        return TargetRecord(
            doc_id=doc_id,
            select=target.select,
            reject=target.reject,
            success=result.success,
            l1=result.l1,
            linf=result.linf,
            margin=result.margin_on_victim,
            transitions_used=result.transitions_used,
            runtime=elapsed,
        )

    items = list(enumerate(targets))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            report.records = list(pool.map(run_one, items))
    else:
        report.records = [run_one(it) for it in items]
    return report


def run_budget_sweep(
    corpus: Corpus,
    victim: AssignmentSystem,
    ensemble: list[AssignmentSystem],
    scales: list[float],
    level_configs: dict[str, frozenset[str]],
    n_targets: int,
    config: HybridConfig,
    bib_db,
    synonym_table,
    seed: int = 0,
    jobs: int = 1,
) -> dict[tuple[str, float], ExperimentReport]:
    """Success as a function of the budget scale, per level set."""
    out = {}
    for level_name, levels in level_configs.items():
        for scale in scales:
            cfg = replace(
                config,
                levels=frozenset(levels),
                budget=replace(config.budget, scale=scale),
            )
            out[(level_name, scale)] = run_objective_suite(
                corpus, victim, ensemble, ObjectiveSpec(SELECTION), n_targets,
                cfg, bib_db, synonym_table, seed=seed, jobs=jobs,
                label=f"{level_name}-scale-{scale}",
            )
    return out


def run_transition_sweep(
    corpus: Corpus,
    victim: AssignmentSystem,
    ensemble: list[AssignmentSystem],
    transition_counts: list[int],
    n_targets: int,
    config: HybridConfig,
    bib_db,
    synonym_table,
    seed: int = 0,
    jobs: int = 1,
) -> dict[int, ExperimentReport]:
    out = {}
    for s in transition_counts:
        cfg = replace(config, transitions=s)
        out[s] = run_objective_suite(
            corpus, victim, ensemble, ObjectiveSpec(SELECTION), n_targets,
            cfg, bib_db, synonym_table, seed=seed, jobs=jobs,
            label=f"transitions-{s}",
        )
    return out


def train_surrogates(
    corpus: Corpus,
    overlap: float,
    n_surrogates: int,
    lda_config: LdaConfig,
    seed: int = 0,
) -> list[AssignmentSystem]:
    """Surrogate systems trained on partially overlapping corpora."""
    systems = []
    for i in range(n_surrogates):
        surrogate_corpus = corpus_mod.make_surrogate_corpus(
            corpus, overlap, seed=seed + 1000 * (i + 1)
        )
        cfg = replace(lda_config, seed=lda_config.seed + i + 1)
        systems.append(
            train_system(surrogate_corpus, cfg, system_id=f"surrogate{i}")
        )
    return systems


def run_ensemble_sweep(
    corpus: Corpus,
    victim: AssignmentSystem,
    surrogates: list[AssignmentSystem],
    sizes: list[int],
    n_targets: int,
    config: HybridConfig,
    bib_db,
    synonym_table,
    seed: int = 0,
    jobs: int = 1,
) -> dict[int, ExperimentReport]:
    """Attack with growing surrogate ensembles, judged on the victim."""
    out = {}
    for size in sizes:
        if size > len(surrogates):
            raise ValueError(f"only {len(surrogates)} surrogates available")
        out[size] = run_objective_suite(
            corpus, victim, surrogates[:size], ObjectiveSpec(SELECTION),
            n_targets, config, bib_db, synonym_table, seed=seed, jobs=jobs,
            label=f"ensemble-{size}",
        )
    return out


def run_committee_sweep(
    corpus: Corpus,
    committee_sizes: list[int],
    n_targets: int,
    config: HybridConfig,
    lda_config: LdaConfig,
    bib_db,
    synonym_table,
    seed: int = 0,
    jobs: int = 1,
) -> dict[int, ExperimentReport]:
    """Rerun the selection suite with committees subsampled from the
    reviewer pool; each committee gets its own retrained system."""
    pool = corpus.reviewer_ids()
    out = {}
    for size in committee_sizes:
        if size > len(pool):
            raise ValueError(f"committee size {size} exceeds pool of {len(pool)}")
        rng = np.random.default_rng([seed, size])
        if size == len(pool):
            members = list(pool)
        else:
            members = sorted(rng.choice(pool, size=size, replace=False).tolist())
        sub_corpus = Corpus(
            documents=dict(corpus.documents),
            archives={r: corpus.archives[r] for r in members},
            planted=corpus.planted,
        )
        victim = train_system(sub_corpus, lda_config, system_id=f"committee{size}")
        out[size] = run_objective_suite(
            sub_corpus, victim, [victim], ObjectiveSpec(SELECTION), n_targets,
            config, bib_db, synonym_table, seed=seed, jobs=jobs,
            label=f"committee-{size}",
        )
    return out


def run_load_sim(
    corpus: Corpus,
    victim: AssignmentSystem,
    attacked: list[tuple[str, AttackTarget, orchestrator.AttackResult]],
    concurring_counts: list[int],
    loads: LoadConstraints,
    seed: int = 0,
) -> list[dict]:
    """Whether attacked submissions survive the global load-constrained
    assignment against competing submissions."""
    rng = np.random.default_rng([seed, 31])
    subs = corpus.untagged()
    rows = []
    for n_extra in concurring_counts:
        extra_ids = [
            subs[int(i)] for i in rng.choice(len(subs), size=min(n_extra, len(subs)), replace=False)
        ] if n_extra else []
        for doc_id, target, result in attacked:
            sub_ids = [f"adv:{doc_id}"] + [e for e in extra_ids if e != doc_id]
            thetas = [victim.theta(victim.featurize_doc(result.adversarial_doc))]
            for e in sub_ids[1:]:
                thetas.append(victim.theta(victim.featurize_doc(corpus.documents[e].payload)))
            scores = victim.reviewer_thetas @ np.stack(thetas).T
            matrix = BiddingMatrix(
                scores=scores,
                reviewer_ids=victim.reviewer_ids,
                submission_ids=sub_ids,
            )
            assignment = assign(matrix, loads)
            assigned = assignment.reviewers_of(f"adv:{doc_id}")
            ok = all(r in assigned for r in target.select) and all(
                r not in assigned for r in target.reject
            )
            rows.append(
                {
                    "doc_id": doc_id,
                    "concurring": len(sub_ids) - 1,
                    "assigned": sorted(assigned),
                    "success": ok,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# Report rendering

def save_sweep(
    reports: dict,
    out_dir: str | Path,
    x_label: str,
    figure_name: str = "sweep.png",
) -> None:
    """Write per-configuration records, a combined summary, and a figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for key, report in reports.items():
        name = report.label
        report.save(out / name)
        summary[name] = report.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    labels = [r.label for r in reports.values()]
    rates = [r.success_rate for r in reports.values()]
    l1s = [r.l1_median for r in reports.values()]
    ax1.plot(range(len(labels)), rates, marker="o")
    ax1.set_xticks(range(len(labels)))
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax1.set_ylabel("success rate")
    ax1.set_xlabel(x_label)
    ax1.set_ylim(-0.05, 1.05)
    ax2.plot(range(len(labels)), l1s, marker="s", color="tab:orange")
    ax2.set_xticks(range(len(labels)))
    ax2.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax2.set_ylabel("median L1 of successes")
    ax2.set_xlabel(x_label)
    fig.tight_layout()
    fig.savefig(out / figure_name, dpi=120)
    plt.close(fig)
