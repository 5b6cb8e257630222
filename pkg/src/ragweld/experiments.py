"""Experiment orchestration: multi-system runs, scaling curves, preference scores.

The runner fans (question × system) work across a bounded thread pool, then
runs the ensemble stage per question once all of that question's traces are
in. Results are keyed by ids rather than completion order, so reports are
byte-identical at any parallelism level as long as the backends themselves
are deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import (
    GENERATION,
    SELECTION,
    EnsembleOutput,
    ensemble_generate,
    ensemble_select,
)
from .errors import (
    CombinatorialLimitExceeded,
    IndexOutOfRange,
    IoError,
    RunIdExists,
    UnparsableSelection,
)
from .evaluation import MetricsReport, evaluate_run
from .pipelines import PIPELINES, PipelineConfig, Question, Runtime, SystemTrace
from .retrieval import cosine

GENERATION_REPORT = "ensemble_generation"
SELECTION_REPORT = "ensemble_selection"

MAX_SCALING_SYSTEMS = 8


@dataclass(frozen=True)
class SystemSpec:
    """One contributing system: a pipeline archetype plus its configuration."""

    system_id: str
    pipeline: str
    config: PipelineConfig

    def __post_init__(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if not self.system_id:
            raise ValueError("system_id must be non-empty")


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    timestamp: str
    config_digest: str
    dataset_path: str
    system_ids: tuple[str, ...]
    backend_ids: tuple[str, ...]
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "config_digest": self.config_digest,
            "dataset_path": self.dataset_path,
            "system_ids": list(self.system_ids),
            "backend_ids": list(self.backend_ids),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunManifest":
        return cls(
            run_id=obj["run_id"],
            timestamp=obj["timestamp"],
            config_digest=obj["config_digest"],
            dataset_path=obj["dataset_path"],
            system_ids=tuple(obj["system_ids"]),
            backend_ids=tuple(obj["backend_ids"]),
            seed=obj.get("seed", 0),
        )


@dataclass(frozen=True)
class ScalingPoint:
    m: int
    mean_f1: float
    n_combinations: int


@dataclass(frozen=True)
class ScalingCurve:
    points: tuple[ScalingPoint, ...]

    @property
    def total_combinations(self) -> int:
        return sum(p.n_combinations for p in self.points)

    def to_dict(self) -> dict:
        return {
            "points": [
                {"m": p.m, "mean_f1": p.mean_f1, "n_combinations": p.n_combinations}
                for p in self.points
            ]
        }


@dataclass(frozen=True)
class PreferenceReport:
    per_system: dict[str, float]
    n_questions: int

    def to_dict(self) -> dict:
        return {
            "per_system": dict(sorted(self.per_system.items())),
            "n_questions": self.n_questions,
        }


@dataclass
class MainRunResult:
    traces: dict[str, dict[str, SystemTrace]]  # system_id -> q_id -> trace
    generation_outputs: dict[str, EnsembleOutput]  # q_id -> output
    selection_outputs: dict[str, EnsembleOutput]
    reports: dict[str, MetricsReport] = field(default_factory=dict)


def _run_one(spec: SystemSpec, question: Question, runtime: Runtime) -> SystemTrace:
    runner = PIPELINES[spec.pipeline]
    return runner(question, spec.config, runtime, system_id=spec.system_id)


def compute_traces(
    systems: list[SystemSpec],
    dataset: list[Question],
    runtime: Runtime,
    parallelism: int = 1,
) -> dict[str, dict[str, SystemTrace]]:
    """Run every (system, question) pair; results keyed by ids, not schedule."""
    jobs = [(spec, question) for spec in systems for question in dataset]
    traces: dict[str, dict[str, SystemTrace]] = {spec.system_id: {} for spec in systems}
    if parallelism <= 1:
        for spec, question in jobs:
            traces[spec.system_id][question.q_id] = _run_one(spec, question, runtime)
        return traces
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {
            pool.submit(_run_one, spec, question, runtime): (spec.system_id, question.q_id)
            for spec, question in jobs
        }
        for future, (system_id, q_id) in futures.items():
            traces[system_id][q_id] = future.result()
    return traces


def _ensemble_one(question, ordered_traces, backend, mode):
    if mode == GENERATION:
        return ensemble_generate(question, ordered_traces, backend)
    try:
        return ensemble_select(question, ordered_traces, backend)
    except (UnparsableSelection, IndexOutOfRange) as exc:
        return EnsembleOutput(
            mode=SELECTION,
            reasoning="",
            final_answer="",
            raw_text="",
            failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


def ensemble_stage(
    dataset: list[Question],
    systems: list[SystemSpec],
    traces: dict[str, dict[str, SystemTrace]],
    backend,
    mode: str,
    parallelism: int = 1,
) -> dict[str, EnsembleOutput]:
    """Run one ensemble mode over every question, preserving system order."""
    per_question = {
        q: [traces[spec.system_id][q.q_id] for spec in systems] for q in dataset
    }
    outputs: dict[str, EnsembleOutput] = {}
    if parallelism <= 1:
        for question, ordered in per_question.items():
            outputs[question.q_id] = _ensemble_one(question, ordered, backend, mode)
        return outputs
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {
            pool.submit(_ensemble_one, question, ordered, backend, mode): question.q_id
            for question, ordered in per_question.items()
        }
        for future, q_id in futures.items():
            outputs[q_id] = future.result()
    return outputs


def _answers_from_traces(traces_for_system: dict[str, SystemTrace]) -> dict[str, str]:
    return {q_id: trace.answer for q_id, trace in traces_for_system.items()}


def _answers_from_outputs(outputs: dict[str, EnsembleOutput]) -> dict[str, str]:
    return {q_id: out.final_answer for q_id, out in outputs.items()}


def run_main(
    systems: list[SystemSpec],
    dataset: list[Question],
    runtime: Runtime,
    ensemble_backend,
    parallelism: int = 1,
    dataset_name: str = "",
) -> MainRunResult:
    """Full comparison: every system alone plus both ensemble modes over them."""
    if len(systems) < 2:
        raise ValueError("run_main needs at least 2 systems")
    ids = [spec.system_id for spec in systems]
    if len(set(ids)) != len(ids):
        raise ValueError("system ids must be unique")
    traces = compute_traces(systems, dataset, runtime, parallelism)
    generation = ensemble_stage(dataset, systems, traces, ensemble_backend, GENERATION, parallelism)
    selection = ensemble_stage(dataset, systems, traces, ensemble_backend, SELECTION, parallelism)
    result = MainRunResult(
        traces=traces, generation_outputs=generation, selection_outputs=selection
    )
    for spec in systems:
        result.reports[spec.system_id] = evaluate_run(
            _answers_from_traces(traces[spec.system_id]), dataset, dataset_name
        )
    result.reports[GENERATION_REPORT] = evaluate_run(
        _answers_from_outputs(generation), dataset, dataset_name
    )
    result.reports[SELECTION_REPORT] = evaluate_run(
        _answers_from_outputs(selection), dataset, dataset_name
    )
    return result


def run_scaling(
    systems: list[SystemSpec],
    dataset: list[Question],
    runtime: Runtime,
    ensemble_backend,
    sizes: list[int] | None = None,
    parallelism: int = 1,
    traces: dict[str, dict[str, SystemTrace]] | None = None,
) -> ScalingCurve:
    """Mean ensemble F1 for every subset size, enumerating all combinations.

    Each size-m subset is one ensemble evaluation of the whole dataset
    (including m=1: the single trace still goes through the ensemble model).
    Traces are computed once and shared across subsets.
    """
    n = len(systems)
    if n < 1:
        raise ValueError("run_scaling needs at least 1 system")
    if n > MAX_SCALING_SYSTEMS:
        raise CombinatorialLimitExceeded(
            f"{n} systems would enumerate 2^{n}-1 subsets; limit is {MAX_SCALING_SYSTEMS}"
        )
    sizes = sorted(sizes) if sizes is not None else list(range(1, n + 1))
    if any(m < 1 or m > n for m in sizes):
        raise ValueError(f"subset sizes must lie in 1..{n}")
    if traces is None:
        traces = compute_traces(systems, dataset, runtime, parallelism)
    points = []
    for m in sizes:
        combo_f1 = []
        for combo in itertools.combinations(systems, m):
            outputs = ensemble_stage(
                dataset, list(combo), traces, ensemble_backend, GENERATION, parallelism
            )
            report = evaluate_run(_answers_from_outputs(outputs), dataset)
            combo_f1.append(report.f1)
        points.append(
            ScalingPoint(
                m=m,
                mean_f1=sum(combo_f1) / len(combo_f1),
                n_combinations=math.comb(n, m),
            )
        )
    return ScalingCurve(points=tuple(points))


def preference_scores(
    ensemble_answers: dict[str, str],
    per_system_answers: dict[str, dict[str, str]],
    embedder,
) -> PreferenceReport:
    """Mean cosine between ensemble answers and each system's answers.

    Only questions present for the ensemble and every system are scored, so
    all systems are compared over the identical question set.
    """
    common = set(ensemble_answers)
    for answers in per_system_answers.values():
        common &= set(answers)
    q_ids = sorted(common)
    if not q_ids:
        raise ValueError("no common question ids across ensemble and systems")
    ensemble_vecs = embedder.embed([ensemble_answers[q] for q in q_ids])
    per_system: dict[str, float] = {}
    for system_id in sorted(per_system_answers):
        system_vecs = embedder.embed([per_system_answers[system_id][q] for q in q_ids])
        sims = [cosine(e, s) for e, s in zip(ensemble_vecs, system_vecs)]
        per_system[system_id] = sum(sims) / len(sims)
    return PreferenceReport(per_system=per_system, n_questions=len(q_ids))


# -- persistence ---------------------------------------------------------------


def _dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def reports_to_dict(reports: dict[str, MetricsReport]) -> dict:
    return {name: report.to_dict() for name, report in sorted(reports.items())}


def persist_run(
    manifest: RunManifest,
    traces: dict[str, dict[str, SystemTrace]],
    outputs: dict[str, dict[str, EnsembleOutput]],
    reports: dict[str, MetricsReport],
    output_dir: str | Path,
) -> Path:
    """Write manifest.json, traces.jsonl, ensemble.jsonl and report.json.

    Rows are sorted by ids so two runs over the same inputs produce
    byte-identical files regardless of execution order.
    """
    run_dir = Path(output_dir) / manifest.run_id
    if run_dir.exists():
        raise RunIdExists(manifest.run_id)
    try:
        run_dir.mkdir(parents=True)
        (run_dir / "manifest.json").write_text(
            _dump_json(manifest.to_dict()), encoding="utf-8"
        )
        trace_rows = [
            traces[system_id][q_id]
            for system_id in sorted(traces)
            for q_id in sorted(traces[system_id])
        ]
        with (run_dir / "traces.jsonl").open("w", encoding="utf-8") as fh:
            for trace in trace_rows:
                fh.write(json.dumps(trace.to_dict(), sort_keys=True, ensure_ascii=True))
                fh.write("\n")
        with (run_dir / "ensemble.jsonl").open("w", encoding="utf-8") as fh:
            for mode in sorted(outputs):
                for q_id in sorted(outputs[mode]):
                    row = {"q_id": q_id, **outputs[mode][q_id].to_dict()}
                    fh.write(json.dumps(row, sort_keys=True, ensure_ascii=True))
                    fh.write("\n")
        (run_dir / "report.json").write_text(
            _dump_json(reports_to_dict(reports)), encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write run directory {run_dir}: {exc}") from exc
    return run_dir


def load_traces(path: str | Path) -> dict[str, dict[str, SystemTrace]]:
    traces: dict[str, dict[str, SystemTrace]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            trace = SystemTrace.from_dict(json.loads(line))
            traces.setdefault(trace.system_id, {})[trace.q_id] = trace
    return traces


def load_ensemble_outputs(path: str | Path) -> dict[str, dict[str, EnsembleOutput]]:
    outputs: dict[str, dict[str, EnsembleOutput]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            q_id = obj.pop("q_id")
            output = EnsembleOutput.from_dict(obj)
            outputs.setdefault(output.mode, {})[q_id] = output
    return outputs


def load_run(run_dir: str | Path):
    """Read a persisted run back: (manifest, traces, outputs, report dict)."""
    run_dir = Path(run_dir)
    try:
        manifest = RunManifest.from_dict(
            json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        )
        traces = load_traces(run_dir / "traces.jsonl")
        outputs = load_ensemble_outputs(run_dir / "ensemble.jsonl")
        reports = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read run directory {run_dir}: {exc}") from exc
    return manifest, traces, outputs, reports


def make_manifest(
    run_id: str,
    config_digest: str,
    dataset_path: str,
    system_ids: list[str],
    backend_ids: list[str],
    seed: int = 0,
) -> RunManifest:
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return RunManifest(
        run_id=run_id,
        timestamp=timestamp,
        config_digest=config_digest,
        dataset_path=dataset_path,
        system_ids=tuple(system_ids),
        backend_ids=tuple(backend_ids),
        seed=seed,
    )


def config_digest(resolved_config: dict) -> str:
    canonical = json.dumps(resolved_config, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# -- CSV exports -----------------------------------------------------------------


def write_scaling_csv(curve: ScalingCurve, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "mean_f1", "n_combinations"])
        for point in curve.points:
            writer.writerow([point.m, point.mean_f1, point.n_combinations])


def write_preference_csv(report: PreferenceReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "mean_cosine"])
        for system_id, mean_cosine in sorted(report.per_system.items()):
            writer.writerow([system_id, mean_cosine])


def write_embeddings_csv(rows: list[tuple[str, str, list[float]]], path: str | Path) -> None:
    """Rows of (source, q_id, vector); vectors must share one dimension."""
    if not rows:
        raise ValueError("no embedding rows to write")
    dim = len(rows[0][2])
    if any(len(vec) != dim for _, _, vec in rows):
        raise ValueError("embedding vectors disagree on dimension")
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "q_id"] + [f"v{i}" for i in range(dim)])
        for source, q_id, vec in rows:
            writer.writerow([source, q_id] + list(vec))
