"""Command-line interface.

Subcommands: index | run | ensemble | eval | scaling | preference | theory.
Every command reads one JSON config file (--config) and writes its outputs
under ``output_dir/{run_id}``. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import experiments
from .corpus import ingest_corpus
from .ensemble import GENERATION, SELECTION
from .errors import (
    ConfigError,
    DuplicateId,
    MalformedLine,
    MissingFile,
    RagweldError,
    RunIdExists,
    WrongVariableSet,
)
from .evaluation import evaluate_run
from .experiments import (
    GENERATION_REPORT,
    SELECTION_REPORT,
    SystemSpec,
    config_digest,
    ensemble_stage,
    make_manifest,
    persist_run,
    preference_scores,
    run_scaling,
    write_embeddings_csv,
    write_preference_csv,
    write_scaling_csv,
)
from .gateway import HttpBackend, MockBackend, MockScript
from .info_theory import DiscreteJoint, verify_ensemble_bound
from .pipelines import PIPELINES, PipelineConfig, Runtime, load_questions
from .retrieval import Bm25Retriever, DenseRetriever, build_bm25_index, build_dense_index

_VALIDATION_ERRORS = (
    ConfigError,
    MissingFile,
    MalformedLine,
    DuplicateId,
    WrongVariableSet,
    RunIdExists,
    ValueError,
)

_RESERVED_SYSTEM_IDS = {GENERATION_REPORT, SELECTION_REPORT}

_PER_QUESTION_CALL_BOUND = {
    "standard": lambda cfg: 1,
    "branching": lambda cfg: cfg.k,
    "iterative": lambda cfg: cfg.iterations,
    "loop": lambda cfg: 4,
    "agentic": lambda cfg: cfg.max_turns + 1,
}


@dataclass
class BackendConfig:
    backend_id: str
    model_id: str
    base_url: str | None = None
    mock_script: str | None = None
    embed_dim: int = 64


@dataclass
class RetrieverConfig:
    retriever_id: str
    type: str = "bm25"
    k1: float = 1.5
    b: float = 0.75
    backend_id: str | None = None  # embedding backend for dense retrievers


@dataclass
class Config:
    corpus_path: Path
    dataset_path: Path
    backends: dict[str, BackendConfig]
    retrievers: dict[str, RetrieverConfig]
    systems: list[SystemSpec]
    ensemble_backend_id: str
    ensemble_mode: str
    preference_backend_id: str
    concurrency: int
    output_dir: Path
    seed: int
    resolved: dict = field(default_factory=dict)

    def digest(self) -> str:
        return config_digest(self.resolved)


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ConfigError(where + key, "missing required field")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(where + key, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("--config", "config must be a JSON object")
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else (base / candidate)

    corpus_path = resolve(_require(raw, "corpus_path", str, ""))
    dataset_path = resolve(_require(raw, "dataset_path", str, ""))

    backends: dict[str, BackendConfig] = {}
    for backend_id, entry in _require(raw, "backends", dict, "").items():
        if not isinstance(entry, dict):
            raise ConfigError(f"backends.{backend_id}", "expected an object")
        model_id = _require(entry, "model_id", str, f"backends.{backend_id}.")
        base_url = entry.get("base_url")
        mock_script = entry.get("mock_script")
        if (base_url is None) == (mock_script is None):
            raise ConfigError(
                f"backends.{backend_id}",
                "exactly one of 'base_url' or 'mock_script' is required",
            )
        backends[backend_id] = BackendConfig(
            backend_id=backend_id,
            model_id=model_id,
            base_url=base_url,
            mock_script=str(resolve(mock_script)) if mock_script else None,
            embed_dim=int(entry.get("embed_dim", 64)),
        )

    retrievers: dict[str, RetrieverConfig] = {}
    raw_retrievers = raw.get("retrievers", {"bm25": {"type": "bm25"}})
    if not isinstance(raw_retrievers, dict) or not raw_retrievers:
        raise ConfigError("retrievers", "expected a non-empty object")
    for retriever_id, entry in raw_retrievers.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"retrievers.{retriever_id}", "expected an object")
        rtype = entry.get("type", "bm25")
        if rtype not in ("bm25", "dense"):
            raise ConfigError(f"retrievers.{retriever_id}.type", f"unknown type {rtype!r}")
        backend_id = entry.get("backend_id")
        if rtype == "dense":
            if backend_id is None:
                raise ConfigError(
                    f"retrievers.{retriever_id}.backend_id",
                    "dense retrievers need an embedding backend",
                )
            if backend_id not in backends:
                raise ConfigError(
                    f"retrievers.{retriever_id}.backend_id",
                    f"unknown backend {backend_id!r}",
                )
        retrievers[retriever_id] = RetrieverConfig(
            retriever_id=retriever_id,
            type=rtype,
            k1=float(entry.get("k1", 1.5)),
            b=float(entry.get("b", 0.75)),
            backend_id=backend_id,
        )

    systems: list[SystemSpec] = []
    raw_systems = _require(raw, "systems", list, "")
    if not raw_systems:
        raise ConfigError("systems", "at least one system is required")
    for i, entry in enumerate(raw_systems):
        where = f"systems[{i}]."
        if not isinstance(entry, dict):
            raise ConfigError(f"systems[{i}]", "expected an object")
        system_id = _require(entry, "system_id", str, where)
        if system_id in _RESERVED_SYSTEM_IDS:
            raise ConfigError(where + "system_id", f"{system_id!r} is reserved")
        pipeline = _require(entry, "pipeline", str, where)
        if pipeline not in PIPELINES:
            raise ConfigError(
                where + "pipeline",
                f"unknown pipeline {pipeline!r}; expected one of {sorted(PIPELINES)}",
            )
        backend_id = _require(entry, "backend_id", str, where)
        if backend_id not in backends:
            raise ConfigError(where + "backend_id", f"unknown backend {backend_id!r}")
        retriever_id = _require(entry, "retriever_id", str, where)
        if retriever_id not in retrievers:
            raise ConfigError(where + "retriever_id", f"unknown retriever {retriever_id!r}")
        try:
            cfg = PipelineConfig(
                backend_id=backend_id,
                retriever_id=retriever_id,
                k=int(entry.get("k", 5)),
                iterations=int(entry.get("iterations", 2)),
                confidence_threshold=float(entry.get("confidence_threshold", 0.8)),
                max_turns=int(entry.get("max_turns", 4)),
                temperature=float(entry.get("temperature", 0.0)),
                max_tokens=int(entry.get("max_tokens", 512)),
            )
        except ValueError as exc:
            raise ConfigError(f"systems[{i}]", str(exc)) from None
        systems.append(SystemSpec(system_id=system_id, pipeline=pipeline, config=cfg))
    ids = [spec.system_id for spec in systems]
    if len(set(ids)) != len(ids):
        raise ConfigError("systems", "system ids must be unique")

    raw_ensemble = _require(raw, "ensemble", dict, "")
    ensemble_backend_id = _require(raw_ensemble, "backend_id", str, "ensemble.")
    if ensemble_backend_id not in backends:
        raise ConfigError("ensemble.backend_id", f"unknown backend {ensemble_backend_id!r}")
    ensemble_mode = raw_ensemble.get("mode", GENERATION)
    if ensemble_mode not in (GENERATION, SELECTION):
        raise ConfigError(
            "ensemble.mode", f"expected '{GENERATION}' or '{SELECTION}', got {ensemble_mode!r}"
        )

    preference_backend_id = raw.get("preference", {}).get("backend_id", ensemble_backend_id)
    if preference_backend_id not in backends:
        raise ConfigError("preference.backend_id", f"unknown backend {preference_backend_id!r}")

    concurrency = int(raw.get("concurrency", 8))
    if concurrency < 1:
        raise ConfigError("concurrency", "must be >= 1")

    resolved = dict(raw)
    resolved["corpus_path"] = str(corpus_path)
    resolved["dataset_path"] = str(dataset_path)
    return Config(
        corpus_path=corpus_path,
        dataset_path=dataset_path,
        backends=backends,
        retrievers=retrievers,
        systems=systems,
        ensemble_backend_id=ensemble_backend_id,
        ensemble_mode=ensemble_mode,
        preference_backend_id=preference_backend_id,
        concurrency=concurrency,
        output_dir=resolve(raw.get("output_dir", "runs")),
        seed=int(raw.get("seed", 0)),
        resolved=resolved,
    )


def build_backends(config: Config) -> dict[str, object]:
    backends: dict[str, object] = {}
    for backend_id, entry in config.backends.items():
        if entry.mock_script is not None:
            script_path = Path(entry.mock_script)
            if not script_path.is_file():
                raise ConfigError(
                    f"backends.{backend_id}.mock_script", f"no such file: {script_path}"
                )
            backends[backend_id] = MockBackend(
                MockScript.from_json(script_path),
                backend_id=backend_id,
                embed_dim=entry.embed_dim,
                max_in_flight=config.concurrency,
            )
        else:
            backends[backend_id] = HttpBackend(
                base_url=entry.base_url,
                model_id=entry.model_id,
                backend_id=backend_id,
                max_in_flight=config.concurrency,
            )
    return backends


def build_runtime(config: Config, backends: dict[str, object]) -> Runtime:
    corpus = ingest_corpus(config.corpus_path)
    retrievers: dict[str, object] = {}
    for retriever_id, entry in config.retrievers.items():
        if entry.type == "bm25":
            index = build_bm25_index(corpus, k1=entry.k1, b=entry.b)
            retrievers[retriever_id] = Bm25Retriever(index, retriever_id=retriever_id)
        else:
            embedder = backends[entry.backend_id]
            dense = build_dense_index(corpus, embedder)
            retrievers[retriever_id] = DenseRetriever(dense, embedder, retriever_id=retriever_id)
    return Runtime(corpus=corpus, retrievers=retrievers, backends=backends)


def _default_run_id() -> str:
    return time.strftime("run-%Y%m%d-%H%M%S", time.gmtime())


def _run_dir(config: Config, run_id: str, must_exist: bool) -> Path:
    run_dir = config.output_dir / run_id
    if must_exist and not run_dir.is_dir():
        raise ConfigError("--run-id", f"no run directory at {run_dir}")
    return run_dir


def _print_json(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _dry_run_plan(config: Config, run_id: str) -> dict:
    questions = load_questions(config.dataset_path)
    per_system = {}
    total = 0
    for spec in config.systems:
        bound = _PER_QUESTION_CALL_BOUND[spec.pipeline](spec.config)
        per_system[spec.system_id] = {
            "pipeline": spec.pipeline,
            "max_chat_calls_per_question": bound,
        }
        total += bound * len(questions)
    return {
        "run_id": run_id,
        "n_systems": len(config.systems),
        "n_questions": len(questions),
        "per_system": per_system,
        "max_system_chat_calls": total,
        "ensemble_chat_calls": len(questions),
        "config_digest": config.digest(),
    }


def cmd_index(config: Config, run_id: str) -> int:
    corpus = ingest_corpus(config.corpus_path)
    stats: dict = {
        "doc_count": corpus.doc_count,
        "avg_doc_len": corpus.avg_doc_len,
        "retrievers": {},
    }
    backends = build_backends(config)
    for retriever_id, entry in config.retrievers.items():
        if entry.type == "bm25":
            index = build_bm25_index(corpus, k1=entry.k1, b=entry.b)
            stats["retrievers"][retriever_id] = {
                "type": "bm25",
                "k1": index.k1,
                "b": index.b,
                "n_terms": len(index.doc_freq),
                "avgdl": index.avgdl,
            }
        else:
            dense = build_dense_index(corpus, backends[entry.backend_id])
            stats["retrievers"][retriever_id] = {
                "type": "dense",
                "dim": dense.dim,
                "backend_id": entry.backend_id,
            }
    run_dir = config.output_dir / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "index_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _print_json(stats)
    return 0


def cmd_run(config: Config, run_id: str, parallel: int, dry_run: bool = False) -> int:
    if dry_run:
        _print_json(_dry_run_plan(config, run_id))
        return 0
    backends = build_backends(config)
    runtime = build_runtime(config, backends)
    questions = load_questions(config.dataset_path)
    traces = experiments.compute_traces(config.systems, questions, runtime, parallel)
    reports = {
        spec.system_id: evaluate_run(
            {q_id: t.answer for q_id, t in traces[spec.system_id].items()},
            questions,
            str(config.dataset_path),
        )
        for spec in config.systems
    }
    manifest = make_manifest(
        run_id=run_id,
        config_digest=config.digest(),
        dataset_path=str(config.dataset_path),
        system_ids=[spec.system_id for spec in config.systems],
        backend_ids=sorted(config.backends),
        seed=config.seed,
    )
    run_dir = persist_run(manifest, traces, {}, reports, config.output_dir)
    _print_json({"run_dir": str(run_dir), "systems": sorted(traces)})
    return 0


def cmd_ensemble(config: Config, run_id: str, parallel: int, dry_run: bool = False) -> int:
    if dry_run:
        _print_json(_dry_run_plan(config, run_id))
        return 0
    run_dir = _run_dir(config, run_id, must_exist=True)
    traces = experiments.load_traces(run_dir / "traces.jsonl")
    questions = load_questions(config.dataset_path)
    backends = build_backends(config)
    backend = backends[config.ensemble_backend_id]
    outputs = ensemble_stage(
        questions, config.systems, traces, backend, config.ensemble_mode, parallel
    )
    report_key = GENERATION_REPORT if config.ensemble_mode == GENERATION else SELECTION_REPORT
    reports = {
        spec.system_id: evaluate_run(
            {q_id: t.answer for q_id, t in traces[spec.system_id].items()},
            questions,
            str(config.dataset_path),
        )
        for spec in config.systems
    }
    reports[report_key] = evaluate_run(
        {q_id: out.final_answer for q_id, out in outputs.items()},
        questions,
        str(config.dataset_path),
    )
    with (run_dir / "ensemble.jsonl").open("w", encoding="utf-8") as fh:
        for q_id in sorted(outputs):
            row = {"q_id": q_id, **outputs[q_id].to_dict()}
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=True) + "\n")
    report_dict = experiments.reports_to_dict(reports)
    (run_dir / "report.json").write_text(
        json.dumps(report_dict, indent=2, sort_keys=True, ensure_ascii=True) + "\n",
        encoding="utf-8",
    )
    _print_json(report_dict)
    return 0


def cmd_eval(config: Config, run_id: str) -> int:
    run_dir = _run_dir(config, run_id, must_exist=True)
    questions = load_questions(config.dataset_path)
    traces = experiments.load_traces(run_dir / "traces.jsonl")
    reports = {
        system_id: evaluate_run(
            {q_id: t.answer for q_id, t in per_q.items()}, questions, str(config.dataset_path)
        )
        for system_id, per_q in traces.items()
    }
    ensemble_path = run_dir / "ensemble.jsonl"
    if ensemble_path.is_file():
        outputs = experiments.load_ensemble_outputs(ensemble_path)
        for mode, per_q in outputs.items():
            key = GENERATION_REPORT if mode == GENERATION else SELECTION_REPORT
            reports[key] = evaluate_run(
                {q_id: out.final_answer for q_id, out in per_q.items()},
                questions,
                str(config.dataset_path),
            )
    report_dict = experiments.reports_to_dict(reports)
    (run_dir / "report.json").write_text(
        json.dumps(report_dict, indent=2, sort_keys=True, ensure_ascii=True) + "\n",
        encoding="utf-8",
    )
    _print_json(report_dict)
    return 0


def cmd_scaling(config: Config, run_id: str, parallel: int, dry_run: bool = False) -> int:
    if dry_run:
        plan = _dry_run_plan(config, run_id)
        n = len(config.systems)
        plan["ensemble_evaluations"] = 2**n - 1
        _print_json(plan)
        return 0
    backends = build_backends(config)
    runtime = build_runtime(config, backends)
    questions = load_questions(config.dataset_path)
    backend = backends[config.ensemble_backend_id]
    curve = run_scaling(config.systems, questions, runtime, backend, parallelism=parallel)
    run_dir = config.output_dir / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    write_scaling_csv(curve, run_dir / "scaling_curve.csv")
    (run_dir / "scaling.json").write_text(
        json.dumps(curve.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _print_json(curve.to_dict())
    return 0


def cmd_preference(config: Config, run_id: str) -> int:
    run_dir = _run_dir(config, run_id, must_exist=True)
    traces = experiments.load_traces(run_dir / "traces.jsonl")
    ensemble_path = run_dir / "ensemble.jsonl"
    outputs = (
        experiments.load_ensemble_outputs(ensemble_path) if ensemble_path.is_file() else {}
    )
    if not outputs:
        raise ConfigError("--run-id", f"{run_dir} has no ensemble outputs; run 'ensemble' first")
    mode = GENERATION if GENERATION in outputs else SELECTION
    ensemble_answers = {q_id: out.final_answer for q_id, out in outputs[mode].items()}
    per_system_answers = {
        system_id: {q_id: t.answer for q_id, t in per_q.items()}
        for system_id, per_q in traces.items()
    }
    backends = build_backends(config)
    embedder = backends[config.preference_backend_id]
    report = preference_scores(ensemble_answers, per_system_answers, embedder)
    write_preference_csv(report, run_dir / "preference.csv")
    q_ids = sorted(set(ensemble_answers))
    rows = [("ensemble", q_id, embedder.embed([ensemble_answers[q_id]])[0]) for q_id in q_ids]
    for system_id in sorted(per_system_answers):
        answers = per_system_answers[system_id]
        rows.extend(
            (system_id, q_id, embedder.embed([answers[q_id]])[0])
            for q_id in q_ids
            if q_id in answers
        )
    write_embeddings_csv(rows, run_dir / "embeddings.csv")
    (run_dir / "preference.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _print_json(report.to_dict())
    return 0


def cmd_theory(joint_path: str) -> int:
    if not Path(joint_path).is_file():
        raise ConfigError("--joint", f"no such file: {joint_path}")
    joint = DiscreteJoint.from_json(joint_path)
    report = verify_ensemble_bound(joint)
    _print_json(report.to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragweld", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool = True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--run-id", default=None, help="run directory name under output_dir")
        p.add_argument("--parallel", type=int, default=None, help="worker threads")
        p.add_argument("--dry-run", action="store_true", help="validate and print the plan only")

    for name in ("index", "run", "ensemble", "eval", "scaling", "preference"):
        add_common(sub.add_parser(name))
    theory = sub.add_parser("theory")
    theory.add_argument("--joint", required=True, help="path to a joint-distribution JSON file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "theory":
            return cmd_theory(args.joint)
        config = load_config(args.config)
        run_id = args.run_id or _default_run_id()
        parallel = args.parallel if args.parallel is not None else config.concurrency
        if parallel < 1:
            raise ConfigError("--parallel", "must be >= 1")
        if args.command == "index":
            return cmd_index(config, run_id)
        if args.command == "run":
            return cmd_run(config, run_id, parallel, args.dry_run)
        if args.command == "ensemble":
            return cmd_ensemble(config, run_id, parallel, args.dry_run)
        if args.command == "eval":
            return cmd_eval(config, run_id)
        if args.command == "scaling":
            return cmd_scaling(config, run_id, parallel, args.dry_run)
        if args.command == "preference":
            return cmd_preference(config, run_id)
        raise ConfigError("command", f"unknown command {args.command!r}")
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RagweldError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
