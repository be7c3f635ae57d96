"""Run configuration: a YAML/JSON mapping with the keys

    mode, languages, stage_order, run_dir,
    datasets.{gold, synthetic.<lang>, validation, eval.<name>, contexts.<lang>},
    exemplars.<lang>,
    backend.{generate, student}.base_url,
    criteria.{k, e, v, max_rounds},
    train.{learning_rate, batch_size, step_budget},
    seeds.{master}, gold_subset_size

plus optional knobs: template, concurrency, exemplar_cap, match_f1_threshold,
improvement_baseline, predict_batch_size, eval_languages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .planner import Hyperparams
from .stopping import StoppingCriteria

MODES = ("baseline", "combined", "sequential", "gemquad")


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = ""
    timeout: float = 120.0
    max_attempts: int = 3
    auth_token: str | None = None


@dataclass(frozen=True)
class RunConfig:
    mode: str
    languages: tuple[str, ...]
    stage_order: tuple[str, ...]
    run_dir: str
    gold: str
    synthetic: dict[str, str] = field(default_factory=dict)
    contexts: dict[str, str] = field(default_factory=dict)
    validation: str = ""
    eval_sets: dict[str, str] = field(default_factory=dict)
    exemplars: dict[str, str] = field(default_factory=dict)
    generate_backend: BackendConfig = field(default_factory=BackendConfig)
    student_backend: BackendConfig = field(default_factory=BackendConfig)
    criteria: StoppingCriteria = field(default_factory=StoppingCriteria)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    step_budget: int | None = None
    master_seed: int = 0
    gold_subset_size: int = 10000
    template: str | None = None
    concurrency: int = 1
    pairs_per_context: int = 1
    exemplar_cap: int = 10
    match_f1_threshold: float = 1.0
    predict_batch_size: int = 32
    eval_languages: tuple[str, ...] | None = None

    def require_for_run(self) -> None:
        if not self.gold:
            raise ConfigError("datasets.gold is required")
        if not self.validation:
            raise ConfigError("datasets.validation is required")
        if not self.student_backend.base_url:
            raise ConfigError("backend.student.base_url is required")
        if self.mode in ("gemquad", "sequential", "combined"):
            missing = [l for l in self.languages if l not in self.synthetic]
            if missing:
                raise ConfigError(f"datasets.synthetic missing for languages: {missing}")

    def require_for_generate(self) -> None:
        if not self.generate_backend.base_url:
            raise ConfigError("backend.generate.base_url is required")
        for lang in self.languages:
            if lang not in self.contexts:
                raise ConfigError(f"datasets.contexts.{lang} is required to generate")
            if lang not in self.exemplars:
                raise ConfigError(f"exemplars.{lang} is required to generate")
            if lang not in self.synthetic:
                raise ConfigError(f"datasets.synthetic.{lang} (output path) is required")


def _get(mapping: dict, dotted: str, default=None):
    node = mapping
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a mapping")

    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    languages = tuple(raw.get("languages", ()))
    if mode != "baseline" and not languages:
        raise ConfigError("languages must be non-empty")
    stage_order = tuple(raw.get("stage_order", languages))
    if set(stage_order) != set(languages):
        raise ConfigError(f"stage_order {stage_order} must permute languages {languages}")

    datasets = raw.get("datasets", {})
    criteria_raw = raw.get("criteria", {})
    train_raw = raw.get("train", {})
    base = Path(path).resolve().parent

    def resolve(p):
        if p is None:
            return None
        p = str(p)
        return p if Path(p).is_absolute() else str(base / p)

    def resolve_map(m):
        return {k: resolve(v) for k, v in (m or {}).items()}

    def backend_cfg(which: str) -> BackendConfig:
        node = _get(raw, f"backend.{which}", {}) or {}
        url = str(node.get("base_url", ""))
        if url.startswith("mock:"):
            url = "mock:" + resolve(url[len("mock:"):])
        return BackendConfig(
            base_url=url,
            timeout=float(node.get("timeout", 120.0)),
            max_attempts=int(node.get("max_attempts", 3)),
            auth_token=node.get("auth_token"),
        )

    try:
        criteria = StoppingCriteria(
            k=int(criteria_raw.get("k", 2)),
            e=float(criteria_raw.get("e", 0.005)),
            v=float(criteria_raw.get("v", 0.01)),
            max_rounds=int(criteria_raw.get("max_rounds", 10)),
            improvement_baseline=raw.get("improvement_baseline", "best"),
            volume_per_language=bool(criteria_raw.get("volume_per_language", False)),
        )
        hyperparams = Hyperparams(
            learning_rate=float(train_raw.get("learning_rate", 2e-5)),
            batch_size=int(train_raw.get("batch_size", 8)),
            optimizer=train_raw.get("optimizer", "adamw"),
            scheduler=train_raw.get("scheduler", "linear"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad criteria/train values: {exc}") from exc

    step_budget = train_raw.get("step_budget")
    run_dir = raw.get("run_dir")
    eval_langs = raw.get("eval_languages")
    return RunConfig(
        mode=mode,
        languages=languages,
        stage_order=stage_order,
        run_dir=resolve(run_dir) if run_dir else "",
        gold=resolve(datasets.get("gold")) or "",
        synthetic=resolve_map(datasets.get("synthetic")),
        contexts=resolve_map(datasets.get("contexts")),
        validation=resolve(datasets.get("validation")) or "",
        eval_sets=resolve_map(datasets.get("eval")),
        exemplars=resolve_map(raw.get("exemplars")),
        generate_backend=backend_cfg("generate"),
        student_backend=backend_cfg("student"),
        criteria=criteria,
        hyperparams=hyperparams,
        step_budget=int(step_budget) if step_budget is not None else None,
        master_seed=int(_get(raw, "seeds.master", 0)),
        gold_subset_size=int(raw.get("gold_subset_size", 10000)),
        template=resolve(raw.get("template")),
        concurrency=int(raw.get("concurrency", 1)),
        pairs_per_context=int(raw.get("pairs_per_context", 1)),
        exemplar_cap=int(raw.get("exemplar_cap", 10)),
        match_f1_threshold=float(raw.get("match_f1_threshold", 1.0)),
        predict_batch_size=int(raw.get("predict_batch_size", 32)),
        eval_languages=tuple(eval_langs) if eval_langs else None,
    )
