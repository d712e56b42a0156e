"""Command-line entry point.

Commands: ``synth`` (build a synthetic conference), ``train`` (fit the
assignment system), ``assign`` (rank and globally assign reviewers),
``attack`` (run the hybrid attack on one submission), ``sweep`` (the
experiment protocols), ``defense`` (strict re-extraction evaluation),
and ``rerun`` (repeat any command from a saved manifest).

Every output directory receives a ``manifest.json`` recording the
resolved parameters; ``rerun`` replays it and reproduces the primary
outputs bit for bit. Exit codes: 0 success, 1 the attack command failed
to find an adversarial document, 2 usage error.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__, attack, corpus as corpus_mod, experiments, forge, orchestrator, textpipe
from .attack import AttackTarget, SearchConfig
from .corpus import Corpus
from .lda import LdaConfig
from .matcher import BiddingMatrix, LoadConstraints, assign as assign_op, assignment_to_csv
from .orchestrator import HybridConfig
from .system import AssignmentSystem, train_system


def _write_manifest(out_dir: Path, command: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "params": params,
        "version": __version__,
        "resource_dir": __import__("os").environ.get("ADVPAPERS_RESOURCE_DIR"),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1), encoding="utf-8"
    )


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise click.UsageError(f"cannot read config file {path}: {e}")
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {path} must hold a JSON object")
    return data


def _merge(params: dict, file_cfg: dict, defaults: dict) -> dict:
    """Precedence: explicit flags > config file > defaults."""
    merged = dict(defaults)
    for k, v in file_cfg.items():
        if k not in defaults:
            raise click.UsageError(f"unknown config key {k!r}")
        merged[k] = v
    for k, v in params.items():
        if v is not None:
            merged[k] = v
    return merged


def _load_corpus(path: str) -> Corpus:
    return Corpus.load(path)


def _load_resources(corpus_dir: Path):
    bib = load_bib_db(corpus_dir / "bib_db.json") if (
        corpus_dir / "bib_db.json"
    ).exists() else []
    syn = corpus_mod.load_synonym_table(corpus_dir / "synonyms.tsv") if (
        corpus_dir / "synonyms.tsv"
    ).exists() else []
    return bib, syn


from .adoc import load_bib_db, save_bib_db  # noqa: E402
from .corpus import save_synonym_table  # noqa: E402


@click.group()
@click.version_option(__version__)
def main():
    """Simulator and attack engine for topic-model reviewer assignment."""


# ---------------------------------------------------------------------------


def _do_synth(p: dict, out: Path) -> None:
    conference = corpus_mod.synth_conference(
        reviewers=p["reviewers"],
        topics=p["topics"],
        docs_per_reviewer=p["docs_per_reviewer"],
        vocab_size=p["vocab"],
        seed=p["seed"],
        submissions=p["submissions"],
    )
    conference = corpus_mod.build_archives(
        conference, per_reviewer=p["archive_size"], seed=p["seed"] + 1
    )
    conference.save(out / "corpus")
    save_bib_db(corpus_mod.generate_bib_db(conference, seed=p["seed"] + 2), out / "corpus" / "bib_db.json")
    save_synonym_table(
        corpus_mod.generate_synonym_table(conference, seed=p["seed"] + 3),
        out / "corpus" / "synonyms.tsv",
    )


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--reviewers", type=int)
@click.option("--topics", type=int)
@click.option("--docs-per-reviewer", type=int)
@click.option("--archive-size", type=int)
@click.option("--vocab", type=int)
@click.option("--submissions", type=int)
def synth(out, config_file, **flags):
    """Generate a synthetic conference corpus with planted topics."""
    defaults = {
        "seed": 0, "reviewers": 20, "topics": 10, "docs_per_reviewer": 8,
        "archive_size": 5, "vocab": 1500, "submissions": 10,
    }
    p = _merge(flags, _load_config_file(config_file), defaults)
    out = Path(out)
    _do_synth(p, out)
    _write_manifest(out, "synth", p)
    click.echo(f"corpus written to {out / 'corpus'}")


# ---------------------------------------------------------------------------


def _do_train(p: dict, out: Path) -> AssignmentSystem:
    conference = _load_corpus(p["corpus"])
    config = LdaConfig(
        num_topics=p["topics"], em_passes=p["em_passes"], seed=p["seed"]
    )
    mode = textpipe.STRICT if p["strict_extract"] else textpipe.STANDARD
    system = train_system(conference, config, mode=mode, system_id=p["system_id"])
    out.mkdir(parents=True, exist_ok=True)
    system.save(out / "system.npz")
    return system


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--topics", type=int)
@click.option("--seed", type=int)
@click.option("--em-passes", type=int)
@click.option("--system-id", type=str)
@click.option("--strict-extract", is_flag=True, default=None)
def train(corpus, out, config_file, **flags):
    """Train the topic model and reviewer vectors on a corpus."""
    defaults = {
        "topics": 10, "seed": 0, "em_passes": 40,
        "system_id": "sys0", "strict_extract": False,
    }
    p = _merge(flags, _load_config_file(config_file), defaults)
    p["corpus"] = corpus
    out = Path(out)
    _do_train(p, out)
    _write_manifest(out, "train", p)
    click.echo(f"system written to {out / 'system.npz'}")


# ---------------------------------------------------------------------------


def _do_assign(p: dict, out: Path) -> None:
    conference = _load_corpus(p["corpus"])
    system = AssignmentSystem.load(p["system"])
    sub_ids = conference.untagged()
    if not sub_ids:
        raise click.ClickException("corpus has no submissions")
    thetas = np.stack(
        [
            system.theta(system.featurize_doc(conference.documents[s].payload))
            for s in sub_ids
        ]
    )
    scores = system.reviewer_thetas @ thetas.T
    matrix = BiddingMatrix(
        scores=scores, reviewer_ids=system.reviewer_ids, submission_ids=sub_ids
    )
    loads = LoadConstraints(per_submission=p["ls"], per_reviewer=p["lr"])
    assignment = assign_op(matrix, loads)
    assignment_to_csv(assignment, matrix, out / "assignment.csv")
    with open(out / "rankings.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["reviewer_id", "submission_id", "score", "rank"])
        for j, sid in enumerate(sub_ids):
            from .matcher import make_ranking

            ranking = make_ranking(system.reviewer_ids, scores[:, j])
            for rank, rid in enumerate(ranking.ordered):
                writer.writerow([rid, sid, f"{ranking.scores[rid]:.9f}", rank])


@main.command(name="assign")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--system", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--Ls", "ls", type=int)
@click.option("--Lr", "lr", type=int)
def assign_cmd(corpus, system, out, config_file, **flags):
    """Rank reviewers and compute the global load-constrained assignment."""
    defaults = {"ls": 5, "lr": 10}
    p = _merge(flags, _load_config_file(config_file), defaults)
    p.update({"corpus": corpus, "system": system})
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _do_assign(p, out)
    _write_manifest(out, "assign", p)
    click.echo(f"assignment written to {out / 'assignment.csv'}")


# ---------------------------------------------------------------------------


def _parse_levels(value: str) -> frozenset[str]:
    levels = frozenset(x.strip() for x in value.split(",") if x.strip())
    unknown = levels - forge.ALL_LEVELS
    if unknown:
        raise click.UsageError(f"unknown levels: {sorted(unknown)}")
    if not levels:
        raise click.UsageError("at least one level is required")
    return levels


def _search_config(p: dict) -> SearchConfig:
    preset = (
        attack.black_box_config() if p["preset"] == "black-box" else attack.white_box_config()
    )
    return replace(
        preset,
        beam_width=p["beam"] if p["beam"] else preset.beam_width,
        step_size=p["step"] if p["step"] else preset.step_size,
        successors=p["successors"] if p["successors"] else preset.successors,
        max_iters=p["iters"] if p["iters"] else preset.max_iters,
        top_words=p["top_words"] if p["top_words"] else preset.top_words,
        seed=p["seed"],
    )


def _do_attack(p: dict, out: Path) -> orchestrator.AttackResult:
    conference = _load_corpus(p["corpus"])
    victim = AssignmentSystem.load(p["system"])
    ensemble = (
        [AssignmentSystem.load(e) for e in p["ensemble"]]
        if p["ensemble"]
        else [victim]
    )
    if p["doc"] not in conference.documents:
        raise click.UsageError(f"document {p['doc']!r} not in corpus")
    doc = conference.documents[p["doc"]].payload
    select = tuple(x for x in p["select"].split(",") if x) if p["select"] else ()
    reject = tuple(x for x in p["reject"].split(",") if x) if p["reject"] else ()
    try:
        target = AttackTarget(select=select, reject=reject)
    except attack.AttackError as e:
        raise click.UsageError(str(e))
    bib, syn = _load_resources(Path(p["corpus"]))
    config = HybridConfig(
        transitions=p["transitions"],
        budget=forge.Budget(scale=p["budget_scale"]),
        levels=_parse_levels(p["levels"]),
        search=_search_config(p),
        load=p["ls"],
    )
    result = orchestrator.run_attack(doc, target, ensemble, victim, config, bib, syn)
    orchestrator.save_result_bundle(result, doc, out, target=target)
    return result


@main.command(name="attack")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--system", required=True, type=click.Path(exists=True))
@click.option("--ensemble", multiple=True, type=click.Path(exists=True))
@click.option("--doc", required=True, type=str)
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--select", type=str)
@click.option("--reject", type=str)
@click.option("--levels", type=str)
@click.option("--budget-scale", type=float)
@click.option("--transitions", type=int)
@click.option("--Ls", "ls", type=int)
@click.option("--seed", type=int)
@click.option("--preset", type=click.Choice(["white-box", "black-box"]))
@click.option("--beam", type=int)
@click.option("--step", type=int)
@click.option("--successors", type=int)
@click.option("--iters", type=int)
@click.option("--top-words", type=int)
def attack_cmd(corpus, system, ensemble, doc, out, config_file, **flags):
    """Attack one submission; exit 1 if no adversarial document is found."""
    defaults = {
        "select": "", "reject": "", "levels": "text,encoding,format",
        "budget_scale": 1.0, "transitions": 8, "ls": 5, "seed": 0,
        "preset": "white-box", "beam": None, "step": None,
        "successors": None, "iters": None, "top_words": None,
    }
    p = _merge(flags, _load_config_file(config_file), defaults)
    p.update(
        {"corpus": corpus, "system": system, "ensemble": list(ensemble), "doc": doc}
    )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = _do_attack(p, out)
    _write_manifest(out, "attack", p)
    click.echo(
        f"success={result.success} l1={result.l1} linf={result.linf} "
        f"transitions={result.transitions_used}"
    )
    if not result.success:
        sys.exit(1)


# ---------------------------------------------------------------------------


def _do_sweep(p: dict, out: Path) -> None:
    conference = _load_corpus(p["corpus"])
    lda_config = LdaConfig(num_topics=p["topics"], em_passes=p["em_passes"], seed=p["seed"])
    victim = train_system(conference, lda_config)
    bib, syn = _load_resources(Path(p["corpus"]))
    config = HybridConfig(
        transitions=p["transitions"],
        budget=forge.Budget(scale=p["budget_scale"]),
        levels=_parse_levels(p["levels"]),
        search=_search_config(p),
        load=p["ls"],
    )
    kind = p["kind"]
    if kind == "objective":
        reports = {
            k: experiments.run_objective_suite(
                conference, victim, [victim], experiments.ObjectiveSpec(k),
                p["targets"], config, bib, syn, seed=p["seed"], jobs=p["jobs"],
            )
            for k in (experiments.SELECTION, experiments.REJECTION, experiments.SUBSTITUTION)
        }
        experiments.save_sweep(reports, out, x_label="objective")
    elif kind == "budget":
        reports = experiments.run_budget_sweep(
            conference, victim, [victim], [0.5, 1.0, 2.0],
            {"text": frozenset({"text"}), "format": forge.ALL_LEVELS},
            p["targets"], config, bib, syn, seed=p["seed"], jobs=p["jobs"],
        )
        experiments.save_sweep(reports, out, x_label="budget scale")
    elif kind == "transitions":
        reports = experiments.run_transition_sweep(
            conference, victim, [victim], [1, 2, 4, 8],
            p["targets"], config, bib, syn, seed=p["seed"], jobs=p["jobs"],
        )
        experiments.save_sweep(reports, out, x_label="transitions")
    elif kind == "ensemble":
        surrogates = experiments.train_surrogates(
            conference, p["overlap"], max(p["sizes"]), lda_config, seed=p["seed"]
        )
        reports = experiments.run_ensemble_sweep(
            conference, victim, surrogates, p["sizes"],
            p["targets"], config, bib, syn, seed=p["seed"], jobs=p["jobs"],
        )
        experiments.save_sweep(reports, out, x_label="ensemble size")
    elif kind == "committee":
        sizes = sorted({max(4, len(victim.reviewer_ids) // 2), len(victim.reviewer_ids)})
        reports = experiments.run_committee_sweep(
            conference, sizes, p["targets"], config, lda_config, bib, syn,
            seed=p["seed"], jobs=p["jobs"],
        )
        experiments.save_sweep(reports, out, x_label="committee size")
    else:
        raise click.UsageError(f"unknown sweep kind {kind!r}")


@main.command()
@click.option("--kind", required=True,
              type=click.Choice(["objective", "budget", "transitions", "ensemble", "committee"]))
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--targets", type=int)
@click.option("--topics", type=int)
@click.option("--em-passes", type=int)
@click.option("--levels", type=str)
@click.option("--budget-scale", type=float)
@click.option("--transitions", type=int)
@click.option("--ensemble", "sizes", type=str)
@click.option("--overlap", type=float)
@click.option("--Ls", "ls", type=int)
@click.option("--seed", type=int)
@click.option("--jobs", type=int)
@click.option("--preset", type=click.Choice(["white-box", "black-box"]))
@click.option("--beam", type=int)
@click.option("--step", type=int)
@click.option("--successors", type=int)
@click.option("--iters", type=int)
@click.option("--top-words", type=int)
def sweep(corpus, out, config_file, **flags):
    """Run one of the experiment protocols and render its report."""
    defaults = {
        "kind": None, "targets": 20, "topics": 10, "em_passes": 40,
        "levels": "text,encoding,format", "budget_scale": 1.0,
        "transitions": 8, "sizes": "1,2,4", "overlap": 0.7, "ls": 5,
        "seed": 0, "jobs": 1, "preset": "white-box", "beam": None,
        "step": 32, "successors": 128, "iters": 300, "top_words": 300,
    }
    p = _merge(flags, _load_config_file(config_file), defaults)
    p["corpus"] = corpus
    p["sizes"] = [int(x) for x in str(p["sizes"]).split(",") if x]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _do_sweep(p, out)
    _write_manifest(out, "sweep", p)
    click.echo(f"sweep report written to {out}")


# ---------------------------------------------------------------------------


def _do_defense(p: dict, out: Path) -> None:
    victim = AssignmentSystem.load(p["system"])
    results = []
    for bundle in p["bundles"]:
        bundle = Path(bundle)
        payload = json.loads((bundle / "result.json").read_text(encoding="utf-8"))
        target = AttackTarget(
            select=tuple(payload["target"]["select"]),
            reject=tuple(payload["target"]["reject"]),
        )
        from .adoc import ADoc

        before = ADoc.load(bundle / "before.adoc.json")
        after = ADoc.load(bundle / "after.adoc.json")
        results.append((after, before, target))
    rows = orchestrator.run_defense_eval(results, victim, p["ls"])
    with open(out / "defense.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["doc_id", "standard_success", "strict_success", "l1", "linf"])
        for r in rows:
            writer.writerow(
                [r["doc_id"], int(r["standard_success"]), int(r["strict_success"]),
                 r["l1"], r["linf"]]
            )
    (out / "defense.json").write_text(json.dumps(rows, indent=1), encoding="utf-8")


@main.command()
@click.option("--system", required=True, type=click.Path(exists=True))
@click.option("--bundle", "bundles", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--Ls", "ls", type=int, default=5)
def defense(system, bundles, out, ls):
    """Re-judge attack bundles under strict extraction."""
    p = {"system": system, "bundles": list(bundles), "ls": ls}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _do_defense(p, out)
    _write_manifest(out, "defense", p)
    click.echo(f"defense report written to {out / 'defense.csv'}")


# ---------------------------------------------------------------------------


_EXECUTORS = {
    "synth": _do_synth,
    "train": _do_train,
    "assign": _do_assign,
    "attack": _do_attack,
    "sweep": _do_sweep,
    "defense": _do_defense,
}


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def rerun(manifest, out):
    """Replay a saved manifest into a fresh output directory."""
    data = json.loads(Path(manifest).read_text(encoding="utf-8"))
    command = data.get("command")
    if command not in _EXECUTORS:
        raise click.UsageError(f"manifest has unknown command {command!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = _EXECUTORS[command](data["params"], out)
    _write_manifest(out, command, data["params"])
    click.echo(f"replayed {command} into {out}")
    if command == "attack" and result is not None and not result.success:
        sys.exit(1)
