"""Resumable run journal.

Layout under the run directory:

    state.json                    committed rounds + termination markers
    gold_subset.jsonl/.manifest   frozen gold stage
    candidates/<lang>.jsonl       validated synthetic pools
    exclusions.jsonl              validation rejections
    round_<n>/accepted.jsonl      silver batch of the round
    round_<n>/decisions.jsonl     per-candidate filter audit
    round_<n>/plan.json           train plan
    round_<n>/metrics.json        validation + eval metrics
    round_<n>/stage_<name>.jsonl  training data referenced by the plan
    report/                       emit_report output

A round exists once state.json lists it; state.json is replaced via write-to-
temp + atomic rename, so a crash between training and the commit leaves the
previous state intact and the rerun repeats the round. Journal files carry no
timestamps: identical inputs produce byte-identical journals.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import JournalError
from .stopping import RoundState

STATE_FILE = "state.json"
STATE_VERSION = 1


def _atomic_write(path: Path, payload: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)


@dataclass
class Journal:
    run_dir: Path
    rounds: list[RoundState] = field(default_factory=list)
    config_checksum: str = ""
    total_synthetic: dict[str, int] = field(default_factory=dict)
    dedup_removed: int = 0
    finished: bool = False
    best_round: int | None = None

    # -- paths -------------------------------------------------------------

    @property
    def state_path(self) -> Path:
        return self.run_dir / STATE_FILE

    def round_dir(self, round_no: int) -> Path:
        return self.run_dir / f"round_{round_no}"

    def accepted_path(self, round_no: int) -> Path:
        return self.round_dir(round_no) / "accepted.jsonl"

    def decisions_path(self, round_no: int) -> Path:
        return self.round_dir(round_no) / "decisions.jsonl"

    def plan_path(self, round_no: int) -> Path:
        return self.round_dir(round_no) / "plan.json"

    def metrics_path(self, round_no: int) -> Path:
        return self.round_dir(round_no) / "metrics.json"

    def stage_path(self, round_no: int, name: str) -> Path:
        return self.round_dir(round_no) / f"stage_{name}.jsonl"

    @property
    def gold_subset_path(self) -> Path:
        return self.run_dir / "gold_subset.jsonl"

    @property
    def gold_manifest_path(self) -> Path:
        return self.run_dir / "gold_subset.manifest"

    def candidates_path(self, lang: str) -> Path:
        return self.run_dir / "candidates" / f"{lang}.jsonl"

    @property
    def exclusions_path(self) -> Path:
        return self.run_dir / "exclusions.jsonl"

    @property
    def report_dir(self) -> Path:
        return self.run_dir / "report"

    # -- lifecycle -----------------------------------------------------------

    @classmethod
    def create(cls, run_dir: str | Path, config_checksum: str) -> "Journal":
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        journal = cls(run_dir=run_dir, config_checksum=config_checksum)
        journal._commit()
        return journal

    @classmethod
    def load(cls, run_dir: str | Path) -> "Journal":
        run_dir = Path(run_dir)
        state_path = run_dir / STATE_FILE
        if not state_path.exists():
            raise JournalError(f"no journal at {run_dir} (missing {STATE_FILE})")
        try:
            obj = json.loads(state_path.read_text(encoding="utf-8"))
            journal = cls(
                run_dir=run_dir,
                rounds=[RoundState.from_json(r) for r in obj["rounds"]],
                config_checksum=obj.get("config_checksum", ""),
                total_synthetic={k: int(v) for k, v in obj.get("total_synthetic", {}).items()},
                dedup_removed=int(obj.get("dedup_removed", 0)),
                finished=bool(obj.get("finished", False)),
                best_round=obj.get("best_round"),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise JournalError(f"corrupt journal at {state_path}: {exc}") from exc
        expected = list(range(len(journal.rounds)))
        if [r.round for r in journal.rounds] != expected:
            raise JournalError(f"journal rounds out of order at {state_path}")
        return journal

    @classmethod
    def open_or_create(cls, run_dir: str | Path, config_checksum: str,
                       resume: bool) -> "Journal":
        run_dir = Path(run_dir)
        if (run_dir / STATE_FILE).exists():
            journal = cls.load(run_dir)
            if not resume and journal.rounds:
                raise JournalError(
                    f"{run_dir} already holds a journal; pass --resume to continue it")
            if journal.config_checksum and journal.config_checksum != config_checksum:
                raise JournalError(f"{run_dir} was created with a different config")
            return journal
        return cls.create(run_dir, config_checksum)

    def _commit(self) -> None:
        payload = {
            "version": STATE_VERSION,
            "config_checksum": self.config_checksum,
            "total_synthetic": {k: self.total_synthetic[k] for k in sorted(self.total_synthetic)},
            "dedup_removed": self.dedup_removed,
            "rounds": [r.to_json() for r in self.rounds],
            "finished": self.finished,
            "best_round": self.best_round,
        }
        _atomic_write(self.state_path, json.dumps(payload, sort_keys=True, ensure_ascii=False,
                                                  indent=1) + "\n")

    def set_inputs(self, total_synthetic: dict[str, int], dedup_removed: int) -> None:
        self.total_synthetic = dict(total_synthetic)
        self.dedup_removed = dedup_removed
        self._commit()

    def next_round(self) -> int:
        return len(self.rounds)

    def begin_round(self, round_no: int) -> Path:
        """Clear any partial output from an aborted attempt and hand back a
        fresh round directory."""
        rdir = self.round_dir(round_no)
        if rdir.exists():
            shutil.rmtree(rdir)
        rdir.mkdir(parents=True)
        return rdir

    def commit_round(self, state: RoundState) -> None:
        if state.round != len(self.rounds):
            raise JournalError(f"cannot commit round {state.round}; expected {len(self.rounds)}")
        self.rounds.append(state)
        self._commit()

    def finalize(self, best_round: int | None) -> None:
        if best_round is not None:
            self.rounds = [
                RoundState.from_json({**r.to_json(), "best": r.round == best_round})
                for r in self.rounds
            ]
        self.best_round = best_round
        self.finished = True
        self._commit()

    def filter_rounds(self) -> list[RoundState]:
        return [r for r in self.rounds if r.round >= 1]

    def accepted_files(self) -> list[tuple[int, Path]]:
        out = []
        for st in self.filter_rounds():
            path = self.accepted_path(st.round)
            if path.exists():
                out.append((st.round, path))
        return out

    def total_generated(self) -> int:
        return sum(self.total_synthetic.values())


def write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
                    encoding="utf-8")


def write_jsonl_rows(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
