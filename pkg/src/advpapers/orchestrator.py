"""The alternating feature-space / problem-space attack loop.

Each transition featurizes the current document, runs beam search
against the surrogate ensemble, realizes the requested modification
under this transition's budget slice, and re-featurizes. Words the
realization could not move are blocked for all later transitions. The
final verdict always comes from re-evaluating the realized document on
the victim system through the normal extraction path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import attack, forge, textpipe
from .adoc import ADoc
from .attack import AttackTarget, SearchConfig
from .forge import Budget
from .system import AssignmentSystem


@dataclass(frozen=True)
class HybridConfig:
    transitions: int = 8
    budget: Budget = field(default_factory=Budget)
    levels: frozenset[str] = forge.ALL_LEVELS
    search: SearchConfig = field(default_factory=SearchConfig)
    load: int = 5

    def __post_init__(self):
        if self.transitions < 1:
            raise ValueError("at least one transition is required")
        object.__setattr__(self, "levels", frozenset(self.levels))


@dataclass
class AttackResult:
    success: bool
    adversarial_doc: ADoc
    l1: int
    linf: int
    margin_on_victim: float
    transitions_used: int
    blocked_history: list[list[str]] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "l1": self.l1,
            "linf": self.linf,
            "margin_on_victim": self.margin_on_victim,
            "transitions_used": self.transitions_used,
            "blocked_history": self.blocked_history,
        }


def evaluate(
    doc: ADoc,
    original: ADoc,
    target: AttackTarget,
    victim: AssignmentSystem,
    load: int,
) -> tuple[bool, int, int, float]:
    """Success, norms, and margin from the full extraction path."""
    bow = victim.featurize_doc(doc)
    success = attack.objective_met(victim, bow, target, load)
    before = textpipe.doc_stems(original, victim.mode)
    after = textpipe.doc_stems(doc, victim.mode)
    diff = {
        w: after.get(w, 0) - before.get(w, 0)
        for w in set(before) | set(after)
        if after.get(w, 0) != before.get(w, 0)
    }
    l1, linf = attack.norms(diff)
    marg = attack.margin(victim, bow, target, load) if success else float("-inf")
    return success, l1, linf, marg


def _ensemble_satisfied(
    doc: ADoc,
    target: AttackTarget,
    systems: list[AssignmentSystem],
    load: int,
    required_margin: float,
) -> bool:
    for system in systems:
        bow = system.featurize_doc(doc)
        if not attack.objective_met(system, bow, target, load):
            return False
        if attack.margin(system, bow, target, load) < required_margin:
            return False
    return True


def _consume_budget(budget: Budget, log: list[dict]) -> Budget:
    """Subtract the transformations a realization actually performed."""
    edits: dict[str, int] = {}
    textgen_words = 0
    for record in log:
        edits[record["kind"]] = edits.get(record["kind"], 0) + 1
        if record["kind"] == "textgen":
            textgen_words += record.get("words_used", 0)
    return Budget(
        real_refs=max(budget.real_refs - edits.get("reference", 0), 0),
        adaptive_refs=max(budget.adaptive_refs - edits.get("adaptive_reference", 0), 0),
        synonyms=max(budget.synonyms - edits.get("synonym", 0), 0),
        misspellings=max(budget.misspellings - edits.get("spelling", 0), 0),
        textgen_words=max(budget.textgen_words - textgen_words, 0),
        scale=1.0,
    )


def run_attack(
    doc: ADoc,
    target: AttackTarget,
    ensemble: list[AssignmentSystem],
    victim: AssignmentSystem,
    config: HybridConfig,
    bib_db,
    synonym_table,
    rules=None,
) -> AttackResult:
    """Run the full hybrid attack and judge the result on the victim."""
    if rules is None:
        rules = textpipe.load_misspelling_rules()
    original = doc.clone()
    current = doc.clone()
    # the budget is global to the attack: transitions draw down whatever
    # the earlier ones have not spent
    remaining_budget = config.budget.effective()
    iters_per = max(1, config.search.max_iters // config.transitions)
    blocked: set[str] = set()
    blocked_history: list[list[str]] = []
    trace: list[dict] = []
    transitions_used = 0

    for transition in range(config.transitions):
        if _ensemble_satisfied(current, target, ensemble, config.load,
                               config.search.target_margin):
            break
        transitions_used = transition + 1
        base_stems = textpipe.doc_stems(current, textpipe.STANDARD)
        search_cfg = replace(
            config.search,
            max_iters=iters_per,
            seed=config.search.seed + transition,
        )
        search = attack.beam_search(
            base_stems, target, ensemble, search_cfg, config.load, blocked=blocked
        )
        current, report = forge.realize(
            current,
            search.delta,
            config.levels,
            remaining_budget,
            bib_db,
            synonym_table,
            rules,
            seed=config.search.seed + transition,
        )
        remaining_budget = _consume_budget(remaining_budget, report.log)
        blocked |= report.blocked
        blocked_history.append(sorted(report.blocked))
        log_counts: dict[str, int] = {}
        for record in report.log:
            log_counts[record["kind"]] = log_counts.get(record["kind"], 0) + 1
        trace.append(
            {
                "log_counts": log_counts,
                "transition": transition,
                "search_success": search.success,
                "search_loss": search.loss,
                "search_iterations": search.iterations,
                "requested_l1": attack.norms(search.delta)[0],
                "achieved_l1": attack.norms(report.achieved)[0],
                "blocked": sorted(report.blocked),
            }
        )

    success, l1, linf, marg = evaluate(current, original, target, victim, config.load)
    return AttackResult(
        success=success,
        adversarial_doc=current,
        l1=l1,
        linf=linf,
        margin_on_victim=marg,
        transitions_used=transitions_used,
        blocked_history=blocked_history,
        trace=trace,
    )


def save_result_bundle(
    result: AttackResult,
    original: ADoc,
    out_dir: str | Path,
    target: AttackTarget | None = None,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_json()
    if target is not None:
        payload["target"] = {"select": list(target.select), "reject": list(target.reject)}
    (out / "result.json").write_text(
        json.dumps(payload, indent=1), encoding="utf-8"
    )
    original.save(out / "before.adoc.json")
    result.adversarial_doc.save(out / "after.adoc.json")
    with open(out / "trace.jsonl", "w", encoding="utf-8") as f:
        for record in result.trace:
            f.write(json.dumps(record) + "\n")


def transfer_matrix(
    results: list[tuple[ADoc, ADoc, AttackTarget]],
    victims: list[AssignmentSystem],
    load: int,
) -> list[dict]:
    """Per (adversarial doc, victim): does the attack transfer, and did
    the unmodified document already satisfy the objective."""
    rows = []
    for doc, original, target in results:
        row = {"doc_id": doc.id, "victims": {}}
        for victim in victims:
            success, _, _, _ = evaluate(doc, original, target, victim, load)
            baseline, _, _, _ = evaluate(original, original, target, victim, load)
            row["victims"][victim.system_id] = {
                "success": success,
                "already_satisfied": baseline,
            }
        rows.append(row)
    return rows


def run_defense_eval(
    results: list[tuple[ADoc, ADoc, AttackTarget]],
    victim: AssignmentSystem,
    load: int,
) -> list[dict]:
    """Re-judge each adversarial document under strict extraction."""
    strict_victim = victim.with_mode(textpipe.STRICT)
    rows = []
    for doc, original, target in results:
        std, l1, linf, _ = evaluate(doc, original, target, victim, load)
        strict, _, _, _ = evaluate(doc, original, target, strict_victim, load)
        rows.append(
            {
                "doc_id": doc.id,
                "standard_success": std,
                "strict_success": strict,
                "l1": l1,
                "linf": linf,
            }
        )
    return rows
