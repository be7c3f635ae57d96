"""The round loop: baseline training, filter/train rounds with the stopping
rule, resumable journaling, and the non-iterative comparison modes.

Round 0 always trains the configured base model and doubles as the initial
weak labeler. In gemquad mode every later round re-answers the remaining
candidates with the previous round's model, promotes the agreeing ones to
silver, retrains from the base with silver stages (configured language order)
followed by gold, and journals the result atomically. combined / sequential /
baseline run a single round-0 training with the corresponding plan.

Everything journaled is a pure function of (config, input files, backend
script), so a rerun or a crash-resume reproduces the journal byte for byte.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock, Timeout

from . import corpus
from .backend import Backend, TrainResult
from .config import RunConfig
from .curator import SilverStore, filter_round, validate_candidates, write_decisions
from .errors import ConfigError, JournalError
from .journal import Journal, write_json, write_jsonl_rows
from .planner import GOLD_STAGE, TrainPlan, default_step_budget, plan_training
from .qametrics import DEFAULT_PROFILE, MetricReport, MetricValue, evaluate
from .stopping import RoundState, select_best, should_stop

logger = logging.getLogger(__name__)

CRASH_ENV = "GEMQUAD_TEST_CRASH"


def _maybe_crash(phase: str, round_no: int) -> None:
    """Test hook: GEMQUAD_TEST_CRASH=<phase>:<round> hard-kills the process at
    the matching point, skipping all cleanup, to exercise crash recovery."""
    spec = os.environ.get(CRASH_ENV)
    if spec and spec == f"{phase}:{round_no}":
        logging.shutdown()
        os._exit(13)


def config_checksum(cfg: RunConfig) -> str:
    """Logical-config digest used to refuse resuming under a changed config.
    Deliberately excludes filesystem paths so journals stay byte-identical
    across run directories."""
    payload = repr((cfg.mode, cfg.languages, cfg.stage_order, sorted(cfg.synthetic),
                    sorted(cfg.eval_sets), cfg.criteria.to_json(), cfg.hyperparams.to_json(),
                    cfg.step_budget, cfg.master_seed, cfg.gold_subset_size,
                    cfg.match_f1_threshold))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class PipelineRun:
    cfg: RunConfig
    student: Backend
    resume: bool = False
    base_model: str = "student-base"
    profile: object = DEFAULT_PROFILE

    journal: Journal = field(init=False)
    store: SilverStore = field(init=False)
    _gold_size: int = 0
    _candidates: dict[str, list] = field(default_factory=dict)
    _silver_records: dict[str, list] = field(default_factory=dict)
    _eval_cache: dict[str, corpus.Dataset] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cfg.run_dir:
            raise ConfigError("run_dir is required (config key run_dir or --run-dir)")
        self.cfg.require_for_run()
        self.journal = Journal.open_or_create(self.cfg.run_dir, config_checksum(self.cfg),
                                              resume=self.resume)

    # -- input preparation ---------------------------------------------------

    def prepare_inputs(self) -> None:
        cfg = self.cfg
        gold = corpus.load_dataset(cfg.gold, lang="en", name="gold")
        if cfg.gold_subset_size < len(gold):
            subset = corpus.sample_subset(gold, cfg.gold_subset_size, cfg.master_seed)
        else:
            subset = gold
        if not self.journal.gold_subset_path.exists():
            corpus.write_jsonl(self.journal.gold_subset_path, subset.records)
            corpus.write_subset_manifest(self.journal.gold_manifest_path, subset,
                                         seed=cfg.master_seed, n=len(subset),
                                         source_checksum=gold.checksum)
        self._gold_size = len(subset)

        totals: dict[str, int] = {}
        dedup_removed = 0
        exclusions: list[dict] = []
        for lang in cfg.stage_order:
            path = cfg.synthetic.get(lang)
            if path is None:
                continue
            raw = corpus.read_jsonl(path)
            totals[lang] = len(raw)
            validated, rejected = validate_candidates(raw)
            exclusions.extend(rejected)
            ds, removed = corpus.dedup(corpus.Dataset(name=f"candidates-{lang}",
                                                      records=tuple(validated)))
            dedup_removed += removed
            self._candidates[lang] = list(ds.records)
            cand_path = self.journal.candidates_path(lang)
            if not cand_path.exists():
                cand_path.parent.mkdir(parents=True, exist_ok=True)
                corpus.write_jsonl(cand_path, ds.records)
        if not self.journal.exclusions_path.exists():
            write_jsonl_rows(self.journal.exclusions_path, exclusions)
        self.journal.set_inputs(totals, dedup_removed)

        self.store = SilverStore()
        self._silver_records = {lang: [] for lang in cfg.stage_order}
        for round_no, path in self.journal.accepted_files():
            for rec in corpus.read_jsonl(path):
                self.store.add_batch(rec.lang, [rec.id], round_no)
                self._silver_records.setdefault(rec.lang, []).append(rec)

    def step_budget(self) -> int:
        if self.cfg.step_budget is not None:
            return self.cfg.step_budget
        pool = self._gold_size + sum(len(v) for v in self._candidates.values())
        return default_step_budget(pool, self.cfg.hyperparams.batch_size)

    # -- plans -----------------------------------------------------------------

    def _write_stage(self, round_no: int, name: str, records) -> tuple[str, str, int]:
        path = self.journal.stage_path(round_no, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        corpus.write_jsonl(path, records)
        rel = str(path.relative_to(self.journal.run_dir))
        return name, rel, len(records)

    def _gold_records(self):
        return corpus.read_jsonl(self.journal.gold_subset_path)

    def _round0_stages(self, round_no: int = 0) -> list[tuple[str, str, int]]:
        cfg = self.cfg
        gold_records = self._gold_records()
        if cfg.mode == "combined":
            merged = []
            for lang in cfg.stage_order:
                merged.extend(self._candidates.get(lang, []))
            merged.extend(gold_records)
            rng = random.Random(f"{cfg.master_seed}:combined")
            rng.shuffle(merged)
            return [self._write_stage(round_no, "combined", merged)]
        stages = []
        if cfg.mode == "sequential":
            for lang in cfg.stage_order:
                records = self._candidates.get(lang, [])
                if records:
                    stages.append(self._write_stage(round_no, lang, records))
        stages.append(self._write_stage(round_no, GOLD_STAGE, gold_records))
        return stages

    def _silver_stages(self, round_no: int) -> list[tuple[str, str, int]]:
        stages = []
        for lang in self.cfg.stage_order:
            records = self._silver_records.get(lang, [])
            if records:
                stages.append(self._write_stage(round_no, lang, records))
        stages.append(self._write_stage(round_no, GOLD_STAGE, self._gold_records()))
        return stages

    # -- training / evaluation -------------------------------------------------

    def _train(self, plan: TrainPlan) -> TrainResult:
        wire_stages = []
        for stage in plan.stages:
            wire = stage.to_wire()
            wire["records_uri"] = str(self.journal.run_dir / stage.records_uri)
            wire_stages.append(wire)
        return self.student.train(self.base_model, wire_stages,
                                  plan.hyperparams.to_json(), self.cfg.validation)

    def _evaluate(self, model: str) -> dict[str, MetricReport]:
        reports = {}
        for name in sorted(self.cfg.eval_sets):
            if name not in self._eval_cache:
                self._eval_cache[name] = corpus.load_dataset(self.cfg.eval_sets[name], name=name)
            ds = self._eval_cache[name]
            items = [(r.id, r.context, r.question) for r in ds.records]
            predictions = {a.id: a.text for a in self.student.predict(model, items)}
            reports[name] = evaluate(predictions, ds, self.profile,
                                     languages=self.cfg.eval_languages or self.cfg.languages or None)
        return reports

    # -- rounds ------------------------------------------------------------------

    def _commit_round(self, round_no: int, plan: TrainPlan, result: TrainResult,
                      new_batch: dict[str, int], stop: bool, reason: str | None,
                      eval_reports: dict[str, MetricReport]) -> RoundState:
        validation = MetricValue(f1=result.f1, em=result.em)
        write_json(self.journal.plan_path(round_no), plan.to_json())
        write_json(self.journal.metrics_path(round_no), {
            "validation": validation.to_json(),
            "steps_run": result.steps,
            "eval": {k: v.to_json() for k, v in sorted(eval_reports.items())},
        })
        state = RoundState(
            round=round_no,
            model=result.model,
            validation=validation,
            silver_counts=self.store.counts() if round_no >= 1 else {},
            new_batch=new_batch,
            steps_run=result.steps,
            eval_reports=eval_reports,
            stop=stop,
            stop_reason=reason,
        )
        _maybe_crash("before_commit", round_no)
        self.journal.commit_round(state)
        return state

    def _run_round0(self) -> RoundState:
        self.journal.begin_round(0)
        plan = plan_training(self._round0_stages(), self.step_budget(), self.cfg.hyperparams)
        result = self._train(plan)
        reports = self._evaluate(result.model)
        logger.info("round 0 (%s) trained %s: val %s", self.cfg.mode, result.model,
                    f"{result.f1:.4f}/{result.em:.4f}")
        return self._commit_round(0, plan, result, {}, stop=False, reason=None,
                                  eval_reports=reports)

    def _run_filter_round(self, round_no: int) -> RoundState:
        self.journal.begin_round(round_no)
        labeler = self.journal.rounds[round_no - 1].model
        remaining = []
        for lang in self.cfg.stage_order:
            taken = self.store.ids(lang)
            remaining.extend(r for r in self._candidates.get(lang, []) if r.id not in taken)
        outcome = filter_round(remaining, labeler, self.student, self.store, round_no,
                               profile=self.profile, f1_threshold=self.cfg.match_f1_threshold)
        by_lang = outcome.accepted_by_lang()
        for lang, records in by_lang.items():
            self._silver_records.setdefault(lang, []).extend(records)
        new_batch = {lang: len(records) for lang, records in by_lang.items()}

        corpus.write_jsonl(self.journal.accepted_path(round_no), outcome.accepted)
        write_decisions(self.journal.decisions_path(round_no), outcome.decisions)

        plan = plan_training(self._silver_stages(round_no), self.step_budget(),
                             self.cfg.hyperparams)
        result = self._train(plan)
        reports = self._evaluate(result.model)

        tentative = RoundState(round=round_no, model=result.model,
                               validation=MetricValue(f1=result.f1, em=result.em),
                               silver_counts=self.store.counts(), new_batch=new_batch)
        decision = should_stop(self.journal.filter_rounds() + [tentative],
                               self.journal.total_generated(), self.cfg.criteria,
                               totals_by_lang=self.journal.total_synthetic)
        state = self._commit_round(round_no, plan, result, new_batch,
                                   stop=decision.stop, reason=decision.reason,
                                   eval_reports=reports)
        logger.info("round %d: +%d silver (total %d), val %.4f%s",
                    round_no, state.new_total(), self.store.total(), result.f1,
                    f", stop({decision.reason})" if decision.stop else "")
        return state

    def run(self) -> Journal:
        lock = FileLock(str(Path(self.cfg.run_dir) / ".lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout as exc:
            raise JournalError(f"another run holds {self.cfg.run_dir}") from exc
        try:
            self.prepare_inputs()
            if self.journal.finished:
                logger.info("run already finished; nothing to do")
                return self.journal
            if self.journal.next_round() == 0:
                self._run_round0()
            if self.cfg.mode != "gemquad":
                self.journal.finalize(best_round=0)
                return self.journal
            while True:
                last = self.journal.rounds[-1]
                if last.round >= 1 and last.stop:
                    break
                self._run_filter_round(self.journal.next_round())
            self.journal.finalize(best_round=select_best(self.journal.filter_rounds()))
            return self.journal
        finally:
            lock.release()
