"""Report emission from a run journal: a per-round table (counts + metrics),
the cumulative-acceptance series for plotting, and the final per-language
evaluation table for the best round."""

from __future__ import annotations

import csv
from pathlib import Path

from .journal import Journal, write_json


def _percent(x: float) -> str:
    return f"{100 * x:.2f}"


def _round_rows(journal: Journal) -> list[dict]:
    langs = sorted(journal.total_synthetic) or sorted(
        {l for st in journal.rounds for l in st.silver_counts})
    total_generated = journal.total_generated()
    rows = []
    for st in journal.rounds:
        cumulative = sum(st.silver_counts.values())
        row = {
            "round": st.round,
            "model": st.model,
            "new_batch": {l: st.new_batch.get(l, 0) for l in langs},
            "silver_counts": {l: st.silver_counts.get(l, 0) for l in langs},
            "new_total": st.new_total(),
            "cumulative_total": cumulative,
            "cumulative_share_of_generated": (
                round(cumulative / total_generated, 6) if total_generated else None),
            "validation_f1": st.validation.f1,
            "validation_em": st.validation.em,
            "steps_run": st.steps_run,
            "eval": {name: {"macro_f1": rep.macro.f1, "macro_em": rep.macro.em}
                     for name, rep in sorted(st.eval_reports.items())},
            "stop": st.stop,
            "stop_reason": st.stop_reason,
            "best": st.best,
        }
        rows.append(row)
    return rows


def _rounds_markdown(journal: Journal, rows: list[dict]) -> str:
    langs = sorted(journal.total_synthetic) or []
    header = ["Round"] + [f"{l} (+new / total)" for l in langs] + \
             ["Validation F1/EM", "Steps", "Flags"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for row, st in zip(rows, journal.rounds):
        flags = []
        if row["best"]:
            flags.append("best")
        if row["stop"]:
            flags.append(f"stop({row['stop_reason']})")
        cells = [str(row["round"])]
        cells += [f"+{row['new_batch'][l]} / {row['silver_counts'][l]}" for l in langs]
        cells.append(st.validation.as_percent())
        cells.append(str(row["steps_run"]))
        cells.append(", ".join(flags))
        lines.append("| " + " | ".join(cells) + " |")
    gen = ", ".join(f"{l}={n}" for l, n in sorted(journal.total_synthetic.items()))
    lines.append("")
    lines.append(f"Generated synthetic pool: {gen or 'n/a'}; "
                 f"duplicates removed: {journal.dedup_removed}.")
    return "\n".join(lines) + "\n"


def _acceptance_series(journal: Journal) -> list[tuple]:
    rows = [("round", "lang", "new", "cumulative")]
    running: dict[str, int] = {}
    for st in journal.rounds:
        if st.round < 1:
            continue
        for lang in sorted(set(st.silver_counts) | set(st.new_batch)):
            running[lang] = st.silver_counts.get(lang, running.get(lang, 0))
            rows.append((st.round, lang, st.new_batch.get(lang, 0), running[lang]))
    return rows


def _final_eval(journal: Journal) -> dict | None:
    best = next((st for st in journal.rounds if st.best), None)
    if best is None or not best.eval_reports:
        return None
    out = {"round": best.round, "model": best.model, "tables": {}}
    for name, rep in sorted(best.eval_reports.items()):
        table = {lang: rep.per_language[lang].as_percent()
                 for lang in sorted(rep.per_language)}
        table["average"] = rep.macro.as_percent()
        out["tables"][name] = table
    return out


def emit_report(run_dir: str | Path, out_dir: str | Path | None = None) -> Path:
    journal = Journal.load(run_dir)
    out = Path(out_dir) if out_dir is not None else journal.report_dir
    out.mkdir(parents=True, exist_ok=True)

    rows = _round_rows(journal)
    write_json(out / "rounds.json", {
        "rounds": rows,
        "total_synthetic": journal.total_synthetic,
        "dedup_removed": journal.dedup_removed,
        "finished": journal.finished,
        "best_round": journal.best_round,
        "stop_reason": next((r["stop_reason"] for r in reversed(rows) if r["stop"]), None),
    })
    (out / "rounds.md").write_text(_rounds_markdown(journal, rows), encoding="utf-8")

    with open(out / "acceptance_series.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(_acceptance_series(journal))

    final = _final_eval(journal)
    if final is not None:
        write_json(out / "final_eval.json", final)
        lines = [f"Best round: {final['round']} (model {final['model']})", ""]
        for name, table in final["tables"].items():
            lines.append(f"## {name}")
            lines.append("| language | F1 / EM |")
            lines.append("|---|---|")
            for lang, score in table.items():
                lines.append(f"| {lang} | {score} |")
            lines.append("")
        (out / "final_eval.md").write_text("\n".join(lines), encoding="utf-8")
    return out
